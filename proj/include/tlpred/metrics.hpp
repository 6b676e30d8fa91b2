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


#ifndef TLPRED__METRICS_HPP_
#define TLPRED__METRICS_HPP_

#include "tlpred/data_model.hpp"
#include "tlpred/predictor.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tlpred
{

enum class DistanceMode { kEuclidean, kSquared };

/// Mean per-step distance. Throws std::invalid_argument on length mismatch or empty input.
double ade(std::span<const Vec2> pred, std::span<const Vec2> gt, DistanceMode mode = DistanceMode::kEuclidean);
/// Final-step distance.
double fde(std::span<const Vec2> pred, std::span<const Vec2> gt, DistanceMode mode = DistanceMode::kEuclidean);

struct AgentEval
{
  int agent_id = 0;
  std::size_t best_sample = 0;  // min-ADE sample
  double ade = 0.0;
  double fde = 0.0;      // of the min-ADE sample
  double min_fde = 0.0;  // minimized independently over samples
  std::vector<Vec2> best;
  std::vector<Vec2> gt;
};

struct WindowEval
{
  int start_frame = 0;
  std::vector<AgentEval> agents;
  double ade = 0.0;
  double fde = 0.0;
  double min_fde = 0.0;
};

struct EvalReport
{
  double ade = 0.0;
  double fde = 0.0;
  double min_fde = 0.0;
  std::size_t k = 0;
  std::size_t agents = 0;
  std::string fingerprint;
  std::vector<WindowEval> windows;

  nlohmann::json to_json() const;
  void write_json(const std::filesystem::path & path) const;
  /// One row per window plus a final `all` row.
  void write_csv(const std::filesystem::path & path) const;
  /// Per agent and step: ground truth next to the min-ADE sample, for plotting.
  void write_trace_csv(const std::filesystem::path & path) const;
};

/// Returns K trajectories for every agent of window `index`.
using Sampler = std::function<std::vector<Trajectories>(const TrajectoryWindow &, std::size_t index)>;

/// Best-of-K over every agent of every window; averages weight each agent equally.
EvalReport evaluate(
  const std::vector<TrajectoryWindow> & windows, const Sampler & sampler, std::size_t k,
  const std::string & fingerprint = "", DistanceMode mode = DistanceMode::kEuclidean);

/// Samples from `model` with K = hp.k_samples; window i draws noise from derive_seed({seed, i}).
EvalReport evaluate(
  const std::vector<TrajectoryWindow> & windows, const Model & model, std::uint64_t seed,
  std::size_t workers = 1, const std::string & fingerprint = "");

}  // namespace tlpred

#endif  // TLPRED__METRICS_HPP_
