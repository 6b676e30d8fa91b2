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

#ifndef TLPRED__DATA_MODEL_HPP_
#define TLPRED__DATA_MODEL_HPP_

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlpred
{

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

bool point_in_polygon(Vec2 p, const std::vector<Vec2> & polygon);

enum class Maneuver { kStraight, kLeft, kRight };
enum class LightState { kRed, kGreen, kYellow };

char to_char(Maneuver m);
char to_char(LightState s);
Maneuver maneuver_from_char(char c);
LightState light_state_from_char(char c);

/// One agent observed in one frame (CSV columns Fid,Aid,x,y,Lid,pa,f,mb,lid,ls,lt).
struct AgentRecord
{
  int frame_id = 0;
  int agent_id = 0;
  double x = 0.0;  // pixels
  double y = 0.0;
  int lane_id = 0;  // sign encodes the travel-direction group
  bool in_influence_area = false;
  bool head_of_queue = false;
  Maneuver maneuver = Maneuver::kStraight;
  int light_id = 0;
  LightState light_state = LightState::kGreen;
  double light_remaining = 0.0;  // seconds

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const AgentRecord &, const AgentRecord &) = default;
};

/// Throws std::invalid_argument naming the violated record invariant.
void validate_record(const AgentRecord & r);

struct SignalPhase
{
  LightState state = LightState::kGreen;
  double duration = 0.0;  // seconds
  friend bool operator==(const SignalPhase &, const SignalPhase &) = default;
};

struct MapLight
{
  int id = 0;
  Vec2 position;
  std::vector<SignalPhase> cycle;
  double offset = 0.0;
};

struct MapLane
{
  int id = 0;
  int dir = 0;
  std::vector<Vec2> polyline;
};

struct InfluenceArea
{
  int light_id = 0;
  std::vector<Vec2> polygon;
  std::array<Vec2, 2> stop_line{};
  Vec2 direction;  // unit travel direction across the stop line
};

/// Optional JSON sidecar describing lights, lanes, influence areas and the intersection zone.
struct SceneMap
{
  double frame_period = 1.0 / 3.0;
  std::vector<MapLight> lights;
  std::vector<MapLane> lanes;
  std::vector<InfluenceArea> influence_areas;
  std::vector<Vec2> intersection;  // polygon; empty when unknown

  bool in_intersection(Vec2 p) const;
  const InfluenceArea * influence_area_for(int light_id) const;

  nlohmann::json to_json() const;
  static SceneMap from_json(const nlohmann::json & j);
  static SceneMap load(const std::filesystem::path & path);
  void save(const std::filesystem::path & path) const;
};

struct Frame
{
  int frame_id = 0;
  std::vector<AgentRecord> agents;
};

/// Records grouped by frame, frames ascending, agent ids unique within a frame.
struct Scene
{
  std::vector<Frame> frames;
  double frame_period = 1.0 / 3.0;
  std::shared_ptr<const SceneMap> map;

  std::size_t record_count() const;
};

/// Parse failure; `line()` is the 1-based line of the offending row (0 for file-level errors).
class DataError : public std::runtime_error
{
public:
  DataError(const std::string & source, std::size_t line, const std::string & what);
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

inline constexpr const char * kCsvHeader = "Fid,Aid,x,y,Lid,pa,f,mb,lid,ls,lt";

Scene parse_dataset(const std::filesystem::path & path);
Scene parse_dataset(std::istream & in, const std::string & source = "<stream>");
std::string format_record(const AgentRecord & r);
/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
void write_dataset(std::ostream & out, const Scene & scene);
void write_dataset(const std::filesystem::path & path, const Scene & scene);

/// Agents present in every frame of a contiguous obs_len + pred_len span.
struct TrajectoryWindow
{
  int start_frame = 0;
  std::vector<int> agent_ids;
  std::vector<std::vector<AgentRecord>> obs;  // [agent][t], t < obs_len
  std::vector<std::vector<Vec2>> target;      // [agent][t], t < pred_len
  std::shared_ptr<const SceneMap> map;

  std::size_t num_agents() const { return agent_ids.size(); }
  std::size_t obs_len() const { return obs.empty() ? 0 : obs.front().size(); }
  std::size_t pred_len() const { return target.empty() ? 0 : target.front().size(); }
};

/// Throws std::invalid_argument unless lengths and frame contiguity hold for every agent.
void validate_window(const TrajectoryWindow & w, std::size_t obs_len, std::size_t pred_len);

std::vector<TrajectoryWindow> window_scene(
  const Scene & scene, std::size_t obs_len = 8, std::size_t pred_len = 12, std::size_t stride = 1);

/// Displacement encoding: x/y of obs records and target points hold per-step displacements;
/// the first observed displacement is zero and `origin` holds the first observed position.
struct RelativeWindow
{
  int start_frame = 0;
  std::vector<int> agent_ids;
  std::vector<Vec2> origin;
  std::vector<std::vector<AgentRecord>> obs;
  std::vector<std::vector<Vec2>> target;
  std::shared_ptr<const SceneMap> map;
};

RelativeWindow to_relative(const TrajectoryWindow & w);
TrajectoryWindow from_relative(const RelativeWindow & r);

/// Displacement d with fl(from + d) == to, so integrating displacements reproduces positions
/// bit for bit.
double exact_step(double from, double to);

}  // namespace tlpred

#endif  // TLPRED__DATA_MODEL_HPP_
