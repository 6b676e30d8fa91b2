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

#include "tlpred/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace tlpred
{

// ---- signals ---------------------------------------------------------------------------------

void SignalCycle::validate() const
{
  if (phases.empty()) {
    throw std::invalid_argument("signal cycle has no phases");
  }
  for (const auto & p : phases) {
    if (!(p.duration > 0.0) || !std::isfinite(p.duration)) {
      throw std::invalid_argument("signal phase durations must be positive");
    }
  }
  if (!std::isfinite(offset)) {
    throw std::invalid_argument("signal offset must be finite");
  }
}

double SignalCycle::period() const
{
  double total = 0.0;
  for (const auto & p : phases) {
    total += p.duration;
  }
  return total;
}

LightReading light_state_at(double t, const SignalCycle & cycle)
{
  cycle.validate();
  if (!(t >= 0.0)) {
    throw std::invalid_argument("light_state_at: t must be >= 0");
  }
  const double period = cycle.period();
  double tau = std::fmod(t + cycle.offset, period);
  if (tau < 0.0) {
    tau += period;
  }
  double start = 0.0;
  for (const auto & p : cycle.phases) {
    const double end = start + p.duration;
    if (tau < end) {
      return {p.state, end - tau};
    }
    start = end;
  }
  // tau rounded up to the period itself: the cycle restarts.
  return {cycle.phases.front().state, cycle.phases.front().duration};
}

// ---- configuration ---------------------------------------------------------------------------

std::string to_string(Layout layout)
{
  switch (layout) {
    case Layout::kCrossroad:
      return "crossroad";
    case Layout::kTJunction:
      return "tjunction";
    case Layout::kRoundabout:
      return "roundabout";
  }
  return "?";
}

Layout layout_from_string(const std::string & s)
{
  if (s == "crossroad") {
    return Layout::kCrossroad;
  }
  if (s == "tjunction" || s == "t-junction" || s == "t_junction") {
    return Layout::kTJunction;
  }
  if (s == "roundabout") {
    return Layout::kRoundabout;
  }
  throw std::invalid_argument("unknown layout '" + s + "' (crossroad, tjunction, roundabout)");
}

namespace
{

constexpr double kArmLength = 480.0;
constexpr Vec2 kCentre{500.0, 500.0};
constexpr std::array<Vec2, 4> kOutward = {{{0.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}}};
constexpr double kStopMargin = 1.0;

std::vector<int> arms_of(Layout layout)
{
  if (layout == Layout::kTJunction) {
    return {1, 2, 3};
  }
  return {0, 1, 2, 3};
}

bool valid_arm(Layout layout, int arm)
{
  const auto arms = arms_of(layout);
  return std::find(arms.begin(), arms.end(), arm) != arms.end();
}

/// Arms whose light starts green.
bool in_first_group(Layout layout, int arm)
{
  return layout == Layout::kTJunction ? (arm == 1 || arm == 3) : (arm == 0 || arm == 2);
}

Vec2 right_of(Vec2 h) { return {-h.y, h.x}; }

int direction_sign(Vec2 h) { return (h.x > 0.5 || h.y > 0.5) ? 1 : -1; }

int inbound_lane_id(int arm, int lane)
{
  return direction_sign(-1.0 * kOutward[arm]) * (10 * (arm + 1) + lane + 1);
}

int outbound_lane_id(int arm, int lane)
{
  return direction_sign(kOutward[arm]) * (10 * (arm + 1) + 5 + lane + 1);
}

int light_id_of(int arm) { return arm + 1; }

struct Geometry
{
  double road = 0.0;  // width of one travel direction
  double box = 0.0;   // distance from the centre to each stop line
  double ring = 0.0;  // roundabout circulating radius, 0 otherwise

  explicit Geometry(const ScenarioConfig & c)
  {
    road = c.lanes_per_arm * c.lane_width;
    if (c.layout == Layout::kRoundabout) {
      ring = road + 30.0;
      box = ring + road + 8.0;
    } else {
      box = road + 8.0;
    }
  }

  double lane_offset(int lane, double width) const { return (lane + 0.5) * width; }

  Vec2 inbound_point(int arm, double lane_off, double dist) const
  {
    const Vec2 u = kOutward[arm];
    return kCentre + dist * u + lane_off * right_of(-1.0 * u);
  }

  Vec2 outbound_point(int arm, double lane_off, double dist) const
  {
    const Vec2 u = kOutward[arm];
    return kCentre + dist * u + lane_off * right_of(u);
  }
};

Maneuver classify(int from_arm, int to_arm)
{
  const Vec2 h = -1.0 * kOutward[from_arm];
  const Vec2 u = kOutward[to_arm];
  if (dot(h, u) > 0.5) {
    return Maneuver::kStraight;
  }
  return cross(h, u) > 0.0 ? Maneuver::kRight : Maneuver::kLeft;
}

std::optional<int> exit_arm(Layout layout, int from_arm, Maneuver m)
{
  for (int arm : arms_of(layout)) {
    if (arm != from_arm && classify(from_arm, arm) == m) {
      return arm;
    }
  }
  return std::nullopt;
}

SignalCycle cycle_for(const ScenarioConfig & c, int arm)
{
  SignalCycle cycle;
  cycle.offset = c.cycle_offset;
  const double red = c.green + c.yellow;
  if (in_first_group(c.layout, arm)) {
    cycle.phases = {{LightState::kGreen, c.green}, {LightState::kYellow, c.yellow}, {LightState::kRed, red}};
  } else {
    cycle.phases = {{LightState::kRed, red}, {LightState::kGreen, c.green}, {LightState::kYellow, c.yellow}};
  }
  return cycle;
}

/// Piecewise-linear path parameterized by arc length.
class Path
{
public:
  void add(Vec2 p)
  {
    if (!points_.empty()) {
      const double seg = (p - points_.back()).norm();
      if (seg <= 1e-9) {
        return;
      }
      cumulative_.push_back(cumulative_.back() + seg);
    } else {
      cumulative_.push_back(0.0);
    }
    points_.push_back(p);
  }

  double length() const { return cumulative_.back(); }
  std::size_t size() const { return points_.size(); }
  double length_at(std::size_t i) const { return cumulative_[i]; }

  Vec2 at(double s) const
  {
    if (s <= 0.0) {
      return points_.front();
    }
    if (s >= length()) {
      return points_.back();
    }
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    const double f = (s - cumulative_[i]) / (cumulative_[i + 1] - cumulative_[i]);
    return points_[i] + f * (points_[i + 1] - points_[i]);
  }

  Vec2 heading(double s) const
  {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), std::clamp(s, 0.0, length()));
    std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    i = std::clamp<std::size_t>(i, 1, points_.size() - 1);
    const Vec2 d = points_[i] - points_[i - 1];
    return (1.0 / d.norm()) * d;
  }

private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

struct Route
{
  Path path;
  double s_stop = 0.0;      // arc length of the stop line
  double s_box_exit = 0.0;  // arc length where the vehicle leaves the intersection
};

Route make_route(const ScenarioConfig & c, const Geometry & g, int from, int to, int lane)
{
  const double off = g.lane_offset(lane, c.lane_width);
  Route r;
  r.path.add(g.inbound_point(from, off, kArmLength));
  r.path.add(g.inbound_point(from, off, g.box));
  r.s_stop = r.path.length();
  const Vec2 exit_start = g.outbound_point(to, off, g.box);
  if (c.layout == Layout::kRoundabout) {
    const double d = std::sqrt(g.ring * g.ring - off * off);
    const Vec2 enter = g.inbound_point(from, off, d);
    const Vec2 leave = g.outbound_point(to, off, d);
    r.path.add(enter);
    const double phi_in = std::atan2(enter.y - kCentre.y, enter.x - kCentre.x);
    const double phi_out = std::atan2(leave.y - kCentre.y, leave.x - kCentre.x);
    // Circulate with the centre on the driver's left: decreasing angle in image coordinates.
    double sweep = std::fmod(phi_in - phi_out, 2.0 * std::numbers::pi);
    if (sweep <= 0.0) {
      sweep += 2.0 * std::numbers::pi;
    }
    const int steps = std::max(2, static_cast<int>(std::ceil(sweep / 0.1)));
    for (int i = 1; i <= steps; ++i) {
      const double phi = phi_in - sweep * i / steps;
      r.path.add(kCentre + g.ring * Vec2{std::cos(phi), std::sin(phi)});
    }
    r.path.add(leave);
  } else if (classify(from, to) != Maneuver::kStraight) {
    // Quadratic Bezier with its control point where the two lane centre lines meet.
    const Vec2 a = r.path.at(r.s_stop);
    const Vec2 h = -1.0 * kOutward[from];
    const Vec2 u = kOutward[to];
    // a + h * s = exit_start - u * t
    const Vec2 rhs = exit_start - a;
    const double det = cross(h, -1.0 * u);
    const double s = cross(rhs, -1.0 * u) / det;
    const Vec2 ctrl = a + s * h;
    constexpr int kSteps = 12;
    for (int i = 1; i < kSteps; ++i) {
      const double t = static_cast<double>(i) / kSteps;
      const double w0 = (1 - t) * (1 - t);
      const double w1 = 2 * (1 - t) * t;
      const double w2 = t * t;
      r.path.add(w0 * a + w1 * ctrl + w2 * exit_start);
    }
  }
  r.path.add(exit_start);
  r.s_box_exit = r.path.length();
  r.path.add(g.outbound_point(to, off, kArmLength));
  return r;
}

struct Vehicle
{
  int id = 0;
  int arm_in = 0;
  int lane = 0;
  Maneuver maneuver = Maneuver::kStraight;
  int in_lane_id = 0;
  int out_lane_id = 0;
  int light_id = 0;
  Route route;
  double s = 0.0;
  double v = 0.0;
  double v_target = 0.0;

  Vec2 position() const { return route.path.at(s); }
  int lane_id() const { return s <= route.s_box_exit ? in_lane_id : out_lane_id; }
};

}  // namespace

void ScenarioConfig::validate() const
{
  const auto positive = [](double v, const char * name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("scenario: ") + name + " must be positive");
    }
  };
  if (lanes_per_arm < 1) {
    throw std::invalid_argument("scenario: lanes_per_arm must be at least 1");
  }
  if (lanes_per_arm > 6) {
    throw std::invalid_argument("scenario: lanes_per_arm must be at most 6");
  }
  if (!(spawn_rate >= 0.0) || !std::isfinite(spawn_rate)) {
    throw std::invalid_argument("scenario: spawn_rate must be >= 0");
  }
  positive(speed_limit, "speed_limit");
  positive(accel, "accel");
  positive(comfort_decel, "comfort_decel");
  positive(min_gap, "min_gap");
  positive(influence_depth, "influence_depth");
  positive(green, "green");
  positive(yellow, "yellow");
  positive(lane_width, "lane_width");
  positive(frame_period, "frame_period");
  if (!(speed_spread >= 0.0 && speed_spread < 1.0)) {
    throw std::invalid_argument("scenario: speed_spread must lie in [0, 1)");
  }
  if (!(p_left >= 0.0 && p_right >= 0.0 && p_left + p_right <= 1.0)) {
    throw std::invalid_argument("scenario: turn probabilities must be >= 0 and sum to <= 1");
  }
  if (!std::isfinite(cycle_offset)) {
    throw std::invalid_argument("scenario: cycle_offset must be finite");
  }
  const Geometry g(*this);
  if (g.box + influence_depth >= kArmLength) {
    throw std::invalid_argument("scenario: influence area does not fit on the approach arm");
  }
  for (const auto & s : scripted) {
    if (!valid_arm(layout, s.arm) || s.lane < 0 || s.lane >= lanes_per_arm || !(s.speed > 0.0)) {
      throw std::invalid_argument("scenario: scripted spawn outside the layout");
    }
    if (!exit_arm(layout, s.arm, s.maneuver)) {
      throw std::invalid_argument("scenario: scripted maneuver unavailable on that arm");
    }
  }
}

nlohmann::json ScenarioConfig::to_json() const
{
  nlohmann::json spawns = nlohmann::json::array();
  for (const auto & s : scripted) {
    spawns.push_back(
      {{"frame", s.frame},
       {"arm", s.arm},
       {"lane", s.lane},
       {"maneuver", std::string(1, to_char(s.maneuver))},
       {"speed", s.speed}});
  }
  return {
    {"layout", to_string(layout)},
    {"lanes_per_arm", lanes_per_arm},
    {"spawn_rate", spawn_rate},
    {"speed_limit", speed_limit},
    {"speed_spread", speed_spread},
    {"accel", accel},
    {"comfort_decel", comfort_decel},
    {"min_gap", min_gap},
    {"influence_depth", influence_depth},
    {"right_turn_on_red", right_turn_on_red},
    {"green", green},
    {"yellow", yellow},
    {"cycle_offset", cycle_offset},
    {"p_left", p_left},
    {"p_right", p_right},
    {"lane_width", lane_width},
    {"frame_period", frame_period},
    {"seed", seed},
    {"scripted", spawns},
  };
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json & j)
{
  ScenarioConfig c;
  const auto get = [&](const char * key, auto & field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    }
  };
  if (j.contains("layout")) {
    c.layout = layout_from_string(j.at("layout").get<std::string>());
  }
  get("lanes_per_arm", c.lanes_per_arm);
  get("spawn_rate", c.spawn_rate);
  get("speed_limit", c.speed_limit);
  get("speed_spread", c.speed_spread);
  get("accel", c.accel);
  get("comfort_decel", c.comfort_decel);
  get("min_gap", c.min_gap);
  get("influence_depth", c.influence_depth);
  get("right_turn_on_red", c.right_turn_on_red);
  get("green", c.green);
  get("yellow", c.yellow);
  get("cycle_offset", c.cycle_offset);
  get("p_left", c.p_left);
  get("p_right", c.p_right);
  get("lane_width", c.lane_width);
  get("frame_period", c.frame_period);
  get("seed", c.seed);
  if (j.contains("scripted")) {
    for (const auto & s : j.at("scripted")) {
      ScriptedSpawn sp;
      sp.frame = s.at("frame").get<int>();
      sp.arm = s.at("arm").get<int>();
      sp.lane = s.value("lane", 0);
      sp.maneuver = maneuver_from_char(s.value("maneuver", std::string("S")).at(0));
      sp.speed = s.at("speed").get<double>();
      c.scripted.push_back(sp);
    }
  }
  c.validate();
  return c;
}

// ---- map -------------------------------------------------------------------------------------

SceneMap build_map(const ScenarioConfig & c)
{
  c.validate();
  const Geometry g(c);
  SceneMap m;
  m.frame_period = c.frame_period;
  for (int arm : arms_of(c.layout)) {
    const Vec2 u = kOutward[arm];
    const Vec2 h = -1.0 * u;
    const Vec2 r = right_of(h);
    const SignalCycle cycle = cycle_for(c, arm);
    MapLight light;
    light.id = light_id_of(arm);
    light.position = kCentre + g.box * u + (g.road + 4.0) * r;
    light.cycle = cycle.phases;
    light.offset = cycle.offset;
    m.lights.push_back(light);

    for (int lane = 0; lane < c.lanes_per_arm; ++lane) {
      const double off = g.lane_offset(lane, c.lane_width);
      m.lanes.push_back(
        {inbound_lane_id(arm, lane), direction_sign(h),
         {g.inbound_point(arm, off, kArmLength), g.inbound_point(arm, off, g.box)}});
      m.lanes.push_back(
        {outbound_lane_id(arm, lane), direction_sign(u),
         {g.outbound_point(arm, off, g.box), g.outbound_point(arm, off, kArmLength)}});
    }

    InfluenceArea area;
    area.light_id = light.id;
    const Vec2 a = kCentre + g.box * u;
    const Vec2 b = a + g.road * r;
    const Vec2 back = c.influence_depth * u;
    area.polygon = {a, b, b + back, a + back};
    area.stop_line = {a, b};
    area.direction = h;
    m.influence_areas.push_back(area);
  }
  const double e = g.box;
  m.intersection = {
    kCentre + Vec2{-e, -e}, kCentre + Vec2{e, -e}, kCentre + Vec2{e, e}, kCentre + Vec2{-e, e}};
  return m;
}

// ---- simulation ------------------------------------------------------------------------------

Scene generate_scene(const ScenarioConfig & c, int frames)
{
  c.validate();
  if (frames < 20) {
    throw std::invalid_argument("insufficient frames for one window");
  }
  const Geometry g(c);
  auto map = std::make_shared<SceneMap>(build_map(c));
  std::map<int, SignalCycle> cycles;
  std::map<int, const InfluenceArea *> areas;
  for (int arm : arms_of(c.layout)) {
    cycles[light_id_of(arm)] = cycle_for(c, arm);
  }
  for (const auto & a : map->influence_areas) {
    areas[a.light_id] = &a;
  }

  Rng rng(derive_seed({c.seed, 0x51u}));
  const double dt = c.frame_period;
  const double b = c.comfort_decel;
  std::vector<Vehicle> vehicles;
  int next_id = 1;

  const auto spawn = [&](int arm, int lane, Maneuver m, double speed) {
    for (const auto & v : vehicles) {
      if (v.arm_in == arm && v.lane == lane && v.s < 2.0 * c.min_gap) {
        return;  // entry blocked
      }
    }
    const int to = *exit_arm(c.layout, arm, m);
    Vehicle v;
    v.id = next_id++;
    v.arm_in = arm;
    v.lane = lane;
    v.maneuver = m;
    v.in_lane_id = inbound_lane_id(arm, lane);
    v.out_lane_id = outbound_lane_id(to, lane);
    v.light_id = light_id_of(arm);
    v.route = make_route(c, g, arm, to, lane);
    v.v = speed;
    v.v_target = speed;
    vehicles.push_back(std::move(v));
  };

  Scene scene;
  scene.frame_period = c.frame_period;
  scene.map = map;
  for (int f = 0; f < frames; ++f) {
    const double t = f * dt;
    std::map<int, LightReading> lights;
    for (const auto & [id, cycle] : cycles) {
      lights[id] = light_state_at(t, cycle);
    }

    for (const auto & s : c.scripted) {
      if (s.frame == f) {
        spawn(s.arm, s.lane, s.maneuver, s.speed);
      }
    }
    const double p_spawn = std::min(1.0, c.spawn_rate * dt);
    for (int arm : arms_of(c.layout)) {
      for (int lane = 0; lane < c.lanes_per_arm; ++lane) {
        const bool fire = rng.bernoulli(p_spawn);
        const double u = rng.uniform();
        const double speed = c.speed_limit * rng.uniform(1.0 - c.speed_spread, 1.0);
        if (!fire) {
          continue;
        }
        Maneuver m = u < c.p_left ? Maneuver::kLeft
                                  : (u < c.p_left + c.p_right ? Maneuver::kRight : Maneuver::kStraight);
        if (!exit_arm(c.layout, arm, m)) {
          m = exit_arm(c.layout, arm, Maneuver::kStraight) ? Maneuver::kStraight
                                                            : (m == Maneuver::kLeft ? Maneuver::kRight : Maneuver::kLeft);
        }
        const int use_lane = m == Maneuver::kLeft ? 0 : (m == Maneuver::kRight ? c.lanes_per_arm - 1 : lane);
        spawn(arm, use_lane, m, speed);
      }
    }

    // Records for frame f.
    std::vector<Vec2> pos;
    std::vector<bool> in_area;
    for (const auto & v : vehicles) {
      const Vec2 p = v.position();
      pos.push_back(p);
      in_area.push_back(v.s <= v.route.s_stop && point_in_polygon(p, areas.at(v.light_id)->polygon));
    }
    std::map<int, std::size_t> head;  // light id -> vehicle index closest to its stop line
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      if (!in_area[i]) {
        continue;
      }
      const auto it = head.find(vehicles[i].light_id);
      const double gap = vehicles[i].route.s_stop - vehicles[i].s;
      if (it == head.end() || gap < vehicles[it->second].route.s_stop - vehicles[it->second].s) {
        head[vehicles[i].light_id] = i;
      }
    }
    if (!vehicles.empty()) {
      Frame frame;
      frame.frame_id = f;
      std::vector<std::size_t> order(vehicles.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
      }
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return vehicles[x].id < vehicles[y].id;
      });
      for (std::size_t i : order) {
        const Vehicle & v = vehicles[i];
        AgentRecord r;
        r.frame_id = f;
        r.agent_id = v.id;
        r.x = pos[i].x;
        r.y = pos[i].y;
        r.lane_id = v.lane_id();
        r.in_influence_area = in_area[i];
        const auto h = head.find(v.light_id);
        r.head_of_queue = h != head.end() && h->second == i;
        r.maneuver = v.maneuver;
        r.light_id = v.light_id;
        r.light_state = lights.at(v.light_id).state;
        r.light_remaining = lights.at(v.light_id).remaining;
        frame.agents.push_back(r);
      }
      scene.frames.push_back(std::move(frame));
    }

    // Motion from f to f + 1, synchronous over all vehicles.
    std::vector<double> next_v(vehicles.size());
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      const Vehicle & v = vehicles[i];
      double cap = std::min(v.v + c.accel * dt, v.v_target);
      const auto limit = [&](double dist) {
        const double allowed = dist <= 0.5 ? 0.0 : std::min(std::sqrt(2.0 * b * dist), dist / dt);
        cap = std::min(cap, allowed);
      };
      if (v.s < v.route.s_stop) {
        const LightReading & l = lights.at(v.light_id);
        const bool exempt = c.right_turn_on_red && v.maneuver == Maneuver::kRight;
        const double dist = v.route.s_stop - kStopMargin - v.s;
        const bool can_stop = v.v * v.v / (2.0 * b) <= dist;
        if (!exempt && (l.state == LightState::kRed || (l.state == LightState::kYellow && can_stop))) {
          limit(dist);
        }
      }
      const Vec2 heading = v.route.path.heading(v.s);
      double leader_gap = -1.0;
      for (std::size_t j = 0; j < vehicles.size(); ++j) {
        if (j == i || vehicles[j].lane_id() != v.lane_id()) {
          continue;
        }
        const Vec2 rel = pos[j] - pos[i];
        const double lon = dot(rel, heading);
        if (lon > 0.0 && std::abs(cross(heading, rel)) < 0.5 * c.lane_width &&
            (leader_gap < 0.0 || lon < leader_gap))
        {
          leader_gap = lon;
        }
      }
      if (leader_gap >= 0.0) {
        limit(leader_gap - c.min_gap);
      }
      next_v[i] = std::max(0.0, cap);
    }
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      vehicles[i].v = next_v[i];
      vehicles[i].s += next_v[i] * dt;
    }
    std::erase_if(vehicles, [](const Vehicle & v) { return v.s >= v.route.path.length(); });
  }
  return scene;
}

// ---- splits and checks -----------------------------------------------------------------------

Splits labeled_splits(std::vector<TrajectoryWindow> windows, std::uint64_t seed)
{
  const std::size_t n = windows.size();
  if (n < 6) {
    throw std::invalid_argument(
      "labeled_splits: need at least 6 windows for a 4:1:1 split, got " + std::to_string(n));
  }
  std::stable_sort(windows.begin(), windows.end(), [](const auto & a, const auto & b) {
    return a.start_frame < b.start_frame;
  });
  const std::size_t held = n / 6;
  const std::size_t train_total = n - 2 * held;
  // Roles: 0 train, 1 val, 2 test; six runs, four of them train.
  std::array<int, 6> roles = {0, 0, 0, 0, 1, 2};
  Rng rng(derive_seed({seed, 0x5917u}));
  for (std::size_t i = roles.size(); i > 1; --i) {
    std::swap(roles[i - 1], roles[rng.below(i)]);
  }
  std::array<std::size_t, 6> sizes{};
  std::size_t train_seen = 0;
  for (std::size_t r = 0; r < 6; ++r) {
    if (roles[r] == 0) {
      sizes[r] = train_total / 4 + (train_seen < train_total % 4 ? 1 : 0);
      ++train_seen;
    } else {
      sizes[r] = held;
    }
  }
  Splits out;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < 6; ++r) {
    auto & dst = roles[r] == 0 ? out.train : (roles[r] == 1 ? out.val : out.test);
    for (std::size_t i = 0; i < sizes[r]; ++i) {
      dst.push_back(std::move(windows[pos++]));
    }
  }
  return out;
}

std::vector<Violation> red_light_violations(const Scene & scene)
{
  std::vector<Violation> out;
  if (!scene.map) {
    throw std::invalid_argument("red_light_violations: scene has no map");
  }
  std::map<int, const AgentRecord *> previous;
  int previous_frame = -2;
  for (const auto & frame : scene.frames) {
    std::map<int, const AgentRecord *> current;
    for (const auto & r : frame.agents) {
      current[r.agent_id] = &r;
      if (frame.frame_id != previous_frame + 1) {
        continue;
      }
      const auto it = previous.find(r.agent_id);
      if (it == previous.end()) {
        continue;
      }
      const AgentRecord & before = *it->second;
      if (!before.in_influence_area || before.light_state != LightState::kRed ||
          before.maneuver == Maneuver::kRight)
      {
        continue;
      }
      const InfluenceArea * area = scene.map->influence_area_for(before.light_id);
      if (area == nullptr) {
        continue;
      }
      const double d0 = dot(before.position() - area->stop_line[0], area->direction);
      const double d1 = dot(r.position() - area->stop_line[0], area->direction);
      if (d0 <= 0.0 && d1 > 0.0) {
        out.push_back({r.agent_id, before.frame_id});
      }
    }
    previous = std::move(current);
    previous_frame = frame.frame_id;
  }
  return out;
}

std::size_t max_heads_per_light(const Scene & scene)
{
  std::size_t worst = 0;
  for (const auto & frame : scene.frames) {
    std::map<int, std::size_t> count;
    for (const auto & r : frame.agents) {
      if (r.head_of_queue) {
        worst = std::max(worst, ++count[r.light_id]);
      }
    }
  }
  return worst;
}

double constrained_fraction(const Scene & scene)
{
  std::set<int> all;
  std::set<int> constrained;
  for (const auto & frame : scene.frames) {
    for (const auto & r : frame.agents) {
      all.insert(r.agent_id);
      if (r.in_influence_area && r.light_state == LightState::kRed) {
        constrained.insert(r.agent_id);
      }
    }
  }
  return all.empty() ? 0.0 : static_cast<double>(constrained.size()) / static_cast<double>(all.size());
}

}  // namespace tlpred
