// Copyright 2026 The tlpred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "tlpred/synth_sim.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

namespace
{

using tlpred::LightState;
using tlpred::ScenarioConfig;

std::map<int, std::vector<tlpred::AgentRecord>> tracks_of(const tlpred::Scene & scene)
{
  std::map<int, std::vector<tlpred::AgentRecord>> out;
  for (const auto & f : scene.frames) {
    for (const auto & r : f.agents) {
      out[r.agent_id].push_back(r);
    }
  }
  return out;
}

std::string csv_of(const tlpred::Scene & scene)
{
  std::ostringstream out;
  tlpred::write_dataset(out, scene);
  return out.str();
}

std::vector<tlpred::TrajectoryWindow> dummy_windows(std::size_t n)
{
  std::vector<tlpred::TrajectoryWindow> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].start_frame = static_cast<int>(3 * i);
  }
  return out;
}

}  // namespace

TEST(SynthSim, LightStateAtExamples)
{
  const tlpred::SignalCycle cycle{{{LightState::kRed, 30}, {LightState::kGreen, 30}}, 0};
  auto r = tlpred::light_state_at(10, cycle);
  EXPECT_EQ(r.state, LightState::kRed);
  EXPECT_DOUBLE_EQ(r.remaining, 20);
  r = tlpred::light_state_at(35, cycle);
  EXPECT_EQ(r.state, LightState::kGreen);
  EXPECT_DOUBLE_EQ(r.remaining, 25);
  r = tlpred::light_state_at(70, cycle);
  EXPECT_EQ(r.state, LightState::kRed);
  EXPECT_DOUBLE_EQ(r.remaining, 20);
  const tlpred::SignalCycle shifted{{{LightState::kRed, 30}, {LightState::kGreen, 30}}, 5};
  EXPECT_EQ(tlpred::light_state_at(26, shifted).state, LightState::kGreen);
}

TEST(SynthSim, SignalCycleRejectsNonPositiveDuration)
{
  const tlpred::SignalCycle bad{{{LightState::kRed, 0}}, 0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(SynthSim, ZeroSpawnRateGivesEmptyScene)
{
  ScenarioConfig c;
  c.spawn_rate = 0.0;
  EXPECT_EQ(tlpred::generate_scene(c, 60).record_count(), 0u);
}

TEST(SynthSim, RejectsInfeasibleConfig)
{
  ScenarioConfig c;
  c.lanes_per_arm = 0;
  EXPECT_THROW(tlpred::generate_scene(c, 60), std::invalid_argument);
  EXPECT_THROW(tlpred::generate_scene(ScenarioConfig{}, 10), std::invalid_argument);
  c = {};
  c.spawn_rate = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SynthSim, FreeVehicleMovesAtConstantVelocity)
{
  ScenarioConfig c;
  c.spawn_rate = 0.0;
  c.green = 1000.0;
  c.scripted.push_back({0, 0, 0, tlpred::Maneuver::kStraight, 30.0});
  const auto tracks = tracks_of(tlpred::generate_scene(c, 40));
  ASSERT_EQ(tracks.size(), 1u);
  const auto & t = tracks.begin()->second;
  ASSERT_EQ(t.size(), 40u);
  for (std::size_t i = 1; i < t.size(); ++i) {
    EXPECT_NEAR(t[i].x - t[i - 1].x, 0.0, 1e-9);
    EXPECT_NEAR(t[i].y - t[i - 1].y, 10.0, 1e-9);
  }
}

TEST(SynthSim, VehicleStopsAtRedAndWaitsForGreen)
{
  // East arm starts red for 18 s, then green 18..33, yellow 33..36, red 36..54.
  ScenarioConfig c;
  c.spawn_rate = 0.0;
  c.scripted.push_back({88, 1, 0, tlpred::Maneuver::kStraight, 30.0});
  const auto scene = tlpred::generate_scene(c, 200);
  const auto tracks = tracks_of(scene);
  ASSERT_EQ(tracks.size(), 1u);
  const auto & t = tracks.begin()->second;
  const auto * area = scene.map->influence_area_for(t.front().light_id);
  ASSERT_NE(area, nullptr);
  const auto ahead = [&](const tlpred::AgentRecord & r) {
    return tlpred::dot(r.position() - area->stop_line[0], area->direction);
  };
  bool stopped_on_red = false;
  bool arrived_with_time_left = false;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double step = (t[i].position() - t[i - 1].position()).norm();
    if (t[i].light_state == LightState::kRed) {
      EXPECT_LE(ahead(t[i]), 0.0) << "frame " << t[i].frame_id;
      if (step == 0.0) {
        stopped_on_red = true;
        arrived_with_time_left = arrived_with_time_left || t[i - 1].light_remaining >= 5.0;
      }
    }
    if (stopped_on_red && step > 0.0) {
      EXPECT_NE(t[i - 1].light_state, LightState::kRed) << "moved while red at frame " << t[i].frame_id;
    }
  }
  EXPECT_TRUE(stopped_on_red);
  EXPECT_TRUE(arrived_with_time_left);
  EXPECT_GT(ahead(t.back()), 0.0);  // eventually crosses on green
}

TEST(SynthSim, RightTurnMayProceedOnRed)
{
  ScenarioConfig c;
  c.spawn_rate = 0.0;
  c.scripted.push_back({0, 1, 1, tlpred::Maneuver::kRight, 30.0});
  const auto scene = tlpred::generate_scene(c, 60);
  const auto t = tracks_of(scene).begin()->second;
  for (std::size_t i = 1; i < t.size(); ++i) {
    EXPECT_GT((t[i].position() - t[i - 1].position()).norm(), 0.0);
  }
}

TEST(SynthSim, RecordsRespectFieldSemantics)
{
  for (const auto layout : {tlpred::Layout::kCrossroad, tlpred::Layout::kTJunction, tlpred::Layout::kRoundabout}) {
    ScenarioConfig c;
    c.layout = layout;
    c.spawn_rate = 0.2;
    c.seed = 3;
    const auto scene = tlpred::generate_scene(c, 300);
    EXPECT_GT(scene.record_count(), 0u);
    for (const auto & f : scene.frames) {
      std::set<int> ids;
      for (const auto & r : f.agents) {
        EXPECT_NO_THROW(tlpred::validate_record(r));
        EXPECT_TRUE(ids.insert(r.agent_id).second);
        EXPECT_NE(r.lane_id, 0);
      }
    }
    EXPECT_EQ(oracle::stop_line_crossings_on_red(scene), 0u) << tlpred::to_string(layout);
    EXPECT_LE(oracle::heads_per_light(scene), 1u);
    EXPECT_TRUE(tlpred::red_light_violations(scene).empty());
    EXPECT_LE(tlpred::max_heads_per_light(scene), 1u);
  }
}

TEST(SynthSim, GenerationIsDeterministic)
{
  ScenarioConfig c;
  c.seed = 42;
  EXPECT_EQ(csv_of(tlpred::generate_scene(c, 200)), csv_of(tlpred::generate_scene(c, 200)));
  ScenarioConfig d = c;
  d.seed = 43;
  EXPECT_NE(csv_of(tlpred::generate_scene(c, 200)), csv_of(tlpred::generate_scene(d, 200)));
}

TEST(SynthSim, ConfigJsonRoundTrip)
{
  ScenarioConfig c;
  c.layout = tlpred::Layout::kTJunction;
  c.scripted.push_back({3, 1, 0, tlpred::Maneuver::kLeft, 20.0});
  EXPECT_EQ(ScenarioConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(tlpred::layout_from_string("hexagon"), std::invalid_argument);
}

TEST(SynthSim, SplitExamples)
{
  const auto s6 = tlpred::labeled_splits(dummy_windows(6), 1);
  EXPECT_EQ(s6.train.size(), 4u);
  EXPECT_EQ(s6.val.size(), 1u);
  EXPECT_EQ(s6.test.size(), 1u);
  const auto s12 = tlpred::labeled_splits(dummy_windows(12), 1);
  EXPECT_EQ(s12.train.size(), 8u);
  EXPECT_EQ(s12.val.size(), 2u);
  EXPECT_EQ(s12.test.size(), 2u);
  EXPECT_THROW(tlpred::labeled_splits(dummy_windows(5), 1), std::invalid_argument);
}

TEST(SynthSim, SplitsPartitionTheWindows)
{
  tlpred::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6 + rng.below(300);
    const auto s = tlpred::labeled_splits(dummy_windows(n), static_cast<std::uint64_t>(trial));
    std::multiset<int> seen;
    for (const auto * part : {&s.train, &s.val, &s.test}) {
      for (const auto & w : *part) {
        seen.insert(w.start_frame);
      }
    }
    ASSERT_EQ(seen.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(seen.count(static_cast<int>(3 * i)), 1u);
    }
    EXPECT_EQ(s.val.size(), n / 6);
    EXPECT_EQ(s.test.size(), n / 6);
  }
}

TEST(SynthSim, ConstrainedFractionCountsRedInfluenceRecords)
{
  ScenarioConfig c;
  c.spawn_rate = 0.0;
  c.scripted.push_back({88, 1, 0, tlpred::Maneuver::kStraight, 30.0});
  EXPECT_EQ(tlpred::constrained_fraction(tlpred::generate_scene(c, 200)), 1.0);
  c.scripted.push_back({0, 0, 0, tlpred::Maneuver::kStraight, 30.0});
  c.green = 1000.0;
  c.scripted.erase(c.scripted.begin());
  EXPECT_EQ(tlpred::constrained_fraction(tlpred::generate_scene(c, 100)), 0.0);
}
