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

#include "tlpred/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace tlpred
{

bool point_in_polygon(Vec2 p, const std::vector<Vec2> & polygon)
{
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) {
        inside = !inside;
      }
    }
  }
  return inside;
}

char to_char(Maneuver m)
{
  switch (m) {
    case Maneuver::kStraight:
      return 'S';
    case Maneuver::kLeft:
      return 'L';
    case Maneuver::kRight:
      return 'R';
  }
  return '?';
}

char to_char(LightState s)
{
  switch (s) {
    case LightState::kRed:
      return 'R';
    case LightState::kGreen:
      return 'G';
    case LightState::kYellow:
      return 'Y';
  }
  return '?';
}

Maneuver maneuver_from_char(char c)
{
  switch (c) {
    case 'S':
      return Maneuver::kStraight;
    case 'L':
      return Maneuver::kLeft;
    case 'R':
      return Maneuver::kRight;
    default:
      throw std::invalid_argument(std::string("unknown maneuver '") + c + "'");
  }
}

LightState light_state_from_char(char c)
{
  switch (c) {
    case 'R':
      return LightState::kRed;
    case 'G':
      return LightState::kGreen;
    case 'Y':
      return LightState::kYellow;
    default:
      throw std::invalid_argument(std::string("unknown light state '") + c + "'");
  }
}

void validate_record(const AgentRecord & r)
{
  if (r.frame_id < 0) {
    throw std::invalid_argument("frame_id must be >= 0");
  }
  if (!std::isfinite(r.x) || !std::isfinite(r.y)) {
    throw std::invalid_argument("position must be finite");
  }
  if (!std::isfinite(r.light_remaining) || r.light_remaining < 0.0) {
    throw std::invalid_argument("light_remaining must be finite and >= 0");
  }
  if (r.head_of_queue && !r.in_influence_area) {
    throw std::invalid_argument("head_of_queue requires in_influence_area");
  }
}

// ---- map sidecar ----------------------------------------------------------------------------

namespace
{

nlohmann::json points_to_json(const std::vector<Vec2> & pts)
{
  nlohmann::json arr = nlohmann::json::array();
  for (const auto & p : pts) {
    arr.push_back({p.x, p.y});
  }
  return arr;
}

Vec2 point_from_json(const nlohmann::json & j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::vector<Vec2> points_from_json(const nlohmann::json & j)
{
  std::vector<Vec2> pts;
  for (const auto & p : j) {
    pts.push_back(point_from_json(p));
  }
  return pts;
}

}  // namespace

bool SceneMap::in_intersection(Vec2 p) const
{
  return intersection.size() >= 3 && point_in_polygon(p, intersection);
}

const InfluenceArea * SceneMap::influence_area_for(int light_id) const
{
  for (const auto & a : influence_areas) {
    if (a.light_id == light_id) {
      return &a;
    }
  }
  return nullptr;
}

nlohmann::json SceneMap::to_json() const
{
  nlohmann::json j;
  j["frame_period"] = frame_period;
  j["lights"] = nlohmann::json::array();
  for (const auto & l : lights) {
    nlohmann::json cycle = nlohmann::json::array();
    for (const auto & ph : l.cycle) {
      cycle.push_back({{"state", std::string(1, to_char(ph.state))}, {"dur", ph.duration}});
    }
    j["lights"].push_back(
      {{"id", l.id}, {"x", l.position.x}, {"y", l.position.y}, {"offset", l.offset},
       {"cycle", cycle}});
  }
  j["lanes"] = nlohmann::json::array();
  for (const auto & lane : lanes) {
    j["lanes"].push_back(
      {{"id", lane.id}, {"dir", lane.dir}, {"polyline", points_to_json(lane.polyline)}});
  }
  j["influence_areas"] = nlohmann::json::array();
  for (const auto & a : influence_areas) {
    j["influence_areas"].push_back(
      {{"light_id", a.light_id},
       {"polygon", points_to_json(a.polygon)},
       {"stop_line", points_to_json({a.stop_line[0], a.stop_line[1]})},
       {"direction", {a.direction.x, a.direction.y}}});
  }
  j["intersection"] = points_to_json(intersection);
  return j;
}

SceneMap SceneMap::from_json(const nlohmann::json & j)
{
  SceneMap m;
  m.frame_period = j.value("frame_period", 1.0 / 3.0);
  for (const auto & l : j.value("lights", nlohmann::json::array())) {
    MapLight light;
    light.id = l.at("id").get<int>();
    light.position = {l.at("x").get<double>(), l.at("y").get<double>()};
    light.offset = l.value("offset", 0.0);
    for (const auto & ph : l.at("cycle")) {
      const auto s = ph.at("state").get<std::string>();
      if (s.size() != 1) {
        throw std::invalid_argument("map: light state must be one of R, G, Y");
      }
      light.cycle.push_back({light_state_from_char(s[0]), ph.at("dur").get<double>()});
    }
    m.lights.push_back(std::move(light));
  }
  for (const auto & l : j.value("lanes", nlohmann::json::array())) {
    m.lanes.push_back(
      {l.at("id").get<int>(), l.at("dir").get<int>(), points_from_json(l.at("polyline"))});
  }
  for (const auto & a : j.value("influence_areas", nlohmann::json::array())) {
    InfluenceArea area;
    area.light_id = a.at("light_id").get<int>();
    area.polygon = points_from_json(a.at("polygon"));
    if (a.contains("stop_line")) {
      const auto sl = points_from_json(a.at("stop_line"));
      if (sl.size() == 2) {
        area.stop_line = {sl[0], sl[1]};
      }
    }
    if (a.contains("direction")) {
      area.direction = point_from_json(a.at("direction"));
    }
    m.influence_areas.push_back(std::move(area));
  }
  if (j.contains("intersection")) {
    m.intersection = points_from_json(j.at("intersection"));
  }
  return m;
}

SceneMap SceneMap::load(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read map " + path.string());
  }
  return from_json(nlohmann::json::parse(in));
}

void SceneMap::save(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write map " + path.string());
  }
  out << to_json().dump(2) << '\n';
}

std::size_t Scene::record_count() const
{
  std::size_t n = 0;
  for (const auto & f : frames) {
    n += f.agents.size();
  }
  return n;
}

// ---- CSV ------------------------------------------------------------------------------------

DataError::DataError(const std::string & source, std::size_t line, const std::string & what)
: std::runtime_error(
    source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
  line_(line)
{
}

namespace
{

constexpr std::array<const char *, 11> kColumns = {"Fid", "Aid", "x",  "y",  "Lid", "pa",
                                                   "f",   "mb",  "lid", "ls", "lt"};

std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string & s, const char * column)
{
  T value{};
  const char * first = s.data();
  const char * last = s.data() + s.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || s.empty()) {
    throw std::invalid_argument(std::string("column ") + column + ": cannot parse '" + s + "'");
  }
  return value;
}

bool parse_flag(const std::string & s, const char * column)
{
  if (s == "0") {
    return false;
  }
  if (s == "1") {
    return true;
  }
  throw std::invalid_argument(std::string("column ") + column + ": expected 0 or 1, got '" + s + "'");
}

char parse_code(const std::string & s, const char * column)
{
  if (s.size() != 1) {
    throw std::invalid_argument(std::string("column ") + column + ": expected one letter, got '" + s + "'");
  }
  return s[0];
}

}  // namespace

Scene parse_dataset(std::istream & in, const std::string & source)
{
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw DataError(source, 0, "missing header");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = split_csv(line);
  std::array<std::size_t, kColumns.size()> index{};
  std::set<std::string> seen;
  for (const auto & h : header) {
    if (!seen.insert(h).second) {
      throw DataError(source, line_no, "duplicate column '" + h + "'");
    }
  }
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) {
      throw DataError(source, line_no, std::string("missing column '") + kColumns[c] + "'");
    }
    index[c] = static_cast<std::size_t>(it - header.begin());
  }
  if (header.size() != kColumns.size()) {
    throw DataError(source, line_no, "unexpected extra columns in header");
  }

  Scene scene;
  std::set<std::pair<int, int>> keys;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != kColumns.size()) {
      throw DataError(
        source, line_no,
        "expected " + std::to_string(kColumns.size()) + " fields, got " +
          std::to_string(fields.size()));
    }
    AgentRecord r;
    try {
      auto f = [&](std::size_t c) -> const std::string & { return fields[index[c]]; };
      r.frame_id = parse_number<int>(f(0), "Fid");
      r.agent_id = parse_number<int>(f(1), "Aid");
      r.x = parse_number<double>(f(2), "x");
      r.y = parse_number<double>(f(3), "y");
      r.lane_id = parse_number<int>(f(4), "Lid");
      r.in_influence_area = parse_flag(f(5), "pa");
      r.head_of_queue = parse_flag(f(6), "f");
      r.maneuver = maneuver_from_char(parse_code(f(7), "mb"));
      r.light_id = parse_number<int>(f(8), "lid");
      r.light_state = light_state_from_char(parse_code(f(9), "ls"));
      r.light_remaining = parse_number<double>(f(10), "lt");
      validate_record(r);
    } catch (const std::invalid_argument & e) {
      throw DataError(source, line_no, e.what());
    }
    if (!scene.frames.empty() && r.frame_id < scene.frames.back().frame_id) {
      throw DataError(source, line_no, "frames are not in ascending order");
    }
    if (!keys.insert({r.frame_id, r.agent_id}).second) {
      throw DataError(
        source, line_no,
        "duplicate record for (Fid " + std::to_string(r.frame_id) + ", Aid " +
          std::to_string(r.agent_id) + ")");
    }
    if (scene.frames.empty() || scene.frames.back().frame_id != r.frame_id) {
      scene.frames.push_back({r.frame_id, {}});
    }
    scene.frames.back().agents.push_back(r);
  }
  return scene;
}

Scene parse_dataset(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw DataError(path.string(), 0, "cannot open file");
  }
  Scene scene = parse_dataset(in, path.string());
  auto sidecar = path;
  sidecar.replace_extension(".map.json");
  if (std::filesystem::exists(sidecar)) {
    auto map = std::make_shared<SceneMap>(SceneMap::load(sidecar));
    scene.frame_period = map->frame_period;
    scene.map = std::move(map);
  }
  return scene;
}

std::string format_number(double v)
{
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_record(const AgentRecord & r)
{
  std::string s;
  s += std::to_string(r.frame_id) + ',' + std::to_string(r.agent_id) + ',';
  s += format_number(r.x) + ',' + format_number(r.y) + ',';
  s += std::to_string(r.lane_id) + ',';
  s += r.in_influence_area ? "1," : "0,";
  s += r.head_of_queue ? "1," : "0,";
  s += to_char(r.maneuver);
  s += ',' + std::to_string(r.light_id) + ',';
  s += to_char(r.light_state);
  s += ',' + format_number(r.light_remaining);
  return s;
}

void write_dataset(std::ostream & out, const Scene & scene)
{
  out << kCsvHeader << '\n';
  for (const auto & f : scene.frames) {
    for (const auto & r : f.agents) {
      out << format_record(r) << '\n';
    }
  }
}

void write_dataset(const std::filesystem::path & path, const Scene & scene)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  write_dataset(out, scene);
}

// ---- windowing ------------------------------------------------------------------------------

void validate_window(const TrajectoryWindow & w, std::size_t obs_len, std::size_t pred_len)
{
  if (w.obs.size() != w.agent_ids.size() || w.target.size() != w.agent_ids.size()) {
    throw std::invalid_argument("window: per-agent arrays disagree with agent count");
  }
  for (std::size_t a = 0; a < w.agent_ids.size(); ++a) {
    if (w.obs[a].size() != obs_len || w.target[a].size() != pred_len) {
      throw std::invalid_argument("window: agent " + std::to_string(w.agent_ids[a]) + " has wrong length");
    }
    for (std::size_t t = 0; t < obs_len; ++t) {
      if (
        w.obs[a][t].frame_id != w.start_frame + static_cast<int>(t) ||
        w.obs[a][t].agent_id != w.agent_ids[a])
      {
        throw std::invalid_argument("window: observed frames are not contiguous");
      }
    }
  }
}

std::vector<TrajectoryWindow> window_scene(
  const Scene & scene, std::size_t obs_len, std::size_t pred_len, std::size_t stride)
{
  if (stride == 0) {
    throw std::invalid_argument("window_scene: stride must be positive");
  }
  std::vector<TrajectoryWindow> out;
  const std::size_t span = obs_len + pred_len;
  if (scene.frames.empty() || span == 0) {
    return out;
  }
  // frame_id -> (agent_id -> record)
  std::map<int, std::map<int, const AgentRecord *>> by_frame;
  for (const auto & f : scene.frames) {
    auto & slot = by_frame[f.frame_id];
    for (const auto & r : f.agents) {
      slot[r.agent_id] = &r;
    }
  }
  const int first = scene.frames.front().frame_id;
  const int last = scene.frames.back().frame_id;
  for (long start = first; start + static_cast<long>(span) - 1 <= last;
       start += static_cast<long>(stride))
  {
    std::vector<int> present;
    bool complete = true;
    for (std::size_t t = 0; t < span && complete; ++t) {
      const auto it = by_frame.find(static_cast<int>(start + static_cast<long>(t)));
      if (it == by_frame.end()) {
        complete = false;
        break;
      }
      std::vector<int> ids;
      for (const auto & [id, rec] : it->second) {
        ids.push_back(id);
      }
      if (t == 0) {
        present = ids;
      } else {
        std::vector<int> keep;
        std::set_intersection(
          present.begin(), present.end(), ids.begin(), ids.end(), std::back_inserter(keep));
        present.swap(keep);
      }
      complete = !present.empty();
    }
    if (!complete) {
      continue;
    }
    TrajectoryWindow w;
    w.start_frame = static_cast<int>(start);
    w.agent_ids = present;
    w.map = scene.map;
    for (int id : present) {
      std::vector<AgentRecord> obs;
      std::vector<Vec2> target;
      for (std::size_t t = 0; t < span; ++t) {
        const AgentRecord * r = by_frame.at(static_cast<int>(start + static_cast<long>(t))).at(id);
        if (t < obs_len) {
          obs.push_back(*r);
        } else {
          target.push_back(r->position());
        }
      }
      w.obs.push_back(std::move(obs));
      w.target.push_back(std::move(target));
    }
    out.push_back(std::move(w));
  }
  return out;
}

double exact_step(double from, double to)
{
  double d = to - from;
  for (int i = 0; i < 64; ++i) {
    const double got = from + d;
    if (got == to) {
      return d;
    }
    d = std::nextafter(d, got < to ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity());
  }
  throw std::domain_error("exact_step: no displacement reproduces the target position");
}

RelativeWindow to_relative(const TrajectoryWindow & w)
{
  RelativeWindow r;
  r.start_frame = w.start_frame;
  r.agent_ids = w.agent_ids;
  r.map = w.map;
  for (std::size_t a = 0; a < w.num_agents(); ++a) {
    const auto & obs = w.obs[a];
    r.origin.push_back(obs.front().position());
    std::vector<AgentRecord> robs = obs;
    Vec2 prev = obs.front().position();
    robs[0].x = 0.0;
    robs[0].y = 0.0;
    for (std::size_t t = 1; t < obs.size(); ++t) {
      robs[t].x = exact_step(prev.x, obs[t].x);
      robs[t].y = exact_step(prev.y, obs[t].y);
      prev = obs[t].position();
    }
    std::vector<Vec2> rt;
    for (const auto & p : w.target[a]) {
      rt.push_back({exact_step(prev.x, p.x), exact_step(prev.y, p.y)});
      prev = p;
    }
    r.obs.push_back(std::move(robs));
    r.target.push_back(std::move(rt));
  }
  return r;
}

TrajectoryWindow from_relative(const RelativeWindow & r)
{
  TrajectoryWindow w;
  w.start_frame = r.start_frame;
  w.agent_ids = r.agent_ids;
  w.map = r.map;
  for (std::size_t a = 0; a < r.agent_ids.size(); ++a) {
    std::vector<AgentRecord> obs = r.obs[a];
    Vec2 prev = r.origin[a];
    obs[0].x = prev.x;
    obs[0].y = prev.y;
    for (std::size_t t = 1; t < obs.size(); ++t) {
      prev = {prev.x + r.obs[a][t].x, prev.y + r.obs[a][t].y};
      obs[t].x = prev.x;
      obs[t].y = prev.y;
    }
    std::vector<Vec2> target;
    for (const auto & d : r.target[a]) {
      prev = {prev.x + d.x, prev.y + d.y};
      target.push_back(prev);
    }
    w.obs.push_back(std::move(obs));
    w.target.push_back(std::move(target));
  }
  return w;
}

}  // namespace tlpred
