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


#ifndef TLPRED__SYNTH_SIM_HPP_
#define TLPRED__SYNTH_SIM_HPP_

#include "tlpred/data_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tlpred
{

struct SignalCycle
{
  std::vector<SignalPhase> phases;
  double offset = 0.0;  // seconds added to t before the periodic lookup

  /// Throws std::invalid_argument unless every duration is positive.
  void validate() const;
  double period() const;
};

struct LightReading
{
  LightState state = LightState::kGreen;
  double remaining = 0.0;  // seconds to the next phase boundary
};

LightReading light_state_at(double t, const SignalCycle & cycle);

enum class Layout { kCrossroad, kTJunction, kRoundabout };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string & s);

/// Arms are numbered 0 = north, 1 = east, 2 = south, 3 = west (image coordinates, y down).
struct ScriptedSpawn
{
  int frame = 0;
  int arm = 0;
  int lane = 0;
  Maneuver maneuver = Maneuver::kStraight;
  double speed = 0.0;  // px/s, also the vehicle's target speed
};

struct ScenarioConfig
{
  Layout layout = Layout::kCrossroad;
  int lanes_per_arm = 2;
  double spawn_rate = 0.05;   // vehicles per second per inbound lane
  double speed_limit = 36.0;  // px/s
  double speed_spread = 0.15; // target speed drawn from [1 - spread, 1] * limit
  double accel = 20.0;        // px/s^2
  double comfort_decel = 30.0;
  double min_gap = 18.0;        // px between consecutive vehicles, centre to centre
  double influence_depth = 120.0;
  bool right_turn_on_red = true;
  double green = 15.0;  // seconds
  double yellow = 3.0;
  double cycle_offset = 0.0;
  double p_left = 0.25;
  double p_right = 0.25;
  double lane_width = 14.0;
  double frame_period = 1.0 / 3.0;
  std::uint64_t seed = 1;
  std::vector<ScriptedSpawn> scripted;

  /// Throws std::invalid_argument on an infeasible configuration.
  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json & j);
};

/// Lights, lanes, influence areas and intersection zone of a layout.
SceneMap build_map(const ScenarioConfig & config);

/// Simulates `frames` frames. The returned scene carries its map.
Scene generate_scene(const ScenarioConfig & config, int frames);

struct Splits
{
  std::vector<TrajectoryWindow> train;
  std::vector<TrajectoryWindow> val;
  std::vector<TrajectoryWindow> test;
};

/// 4:1:1 split in contiguous runs of start frames; the order of the six runs is seeded.
Splits labeled_splits(std::vector<TrajectoryWindow> windows, std::uint64_t seed);

struct Violation
{
  int agent_id = 0;
  int frame_id = 0;
};

/// Agents that cross their stop line between frames t and t+1 while the frame-t record says
/// pa = 1, ls = R and mb != R.
std::vector<Violation> red_light_violations(const Scene & scene);

/// Largest number of f = 1 records sharing a light id within one frame.
std::size_t max_heads_per_light(const Scene & scene);

/// Share of agents with at least one record inside an influence area under a red light.
double constrained_fraction(const Scene & scene);

}  // namespace tlpred

#endif  // TLPRED__SYNTH_SIM_HPP_
