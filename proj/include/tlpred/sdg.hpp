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


#ifndef TLPRED__SDG_HPP_
#define TLPRED__SDG_HPP_

#include "tlpred/data_model.hpp"
#include "tlpred/layers.hpp"

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <vector>

namespace tlpred
{

enum class LaneRule { kDirectionGroup, kLiteral };

struct SdgParams
{
  double theta_road = std::numbers::pi / 3.0;          // half-angle, radians
  double theta_intersection = 2.0 * std::numbers::pi / 3.0;
  double d_max = 150.0;                                // pixels
  LaneRule lane_rule = LaneRule::kDirectionGroup;

  /// Throws std::invalid_argument unless 0 < theta <= pi and d_max > 0.
  void validate() const;
};

/// Interaction masks of one frame, row-major N x N. Row i lists whom agent i attends to.
struct AdjacencyMask
{
  std::vector<int> agent_ids;
  std::vector<std::uint8_t> v;
  std::vector<std::uint8_t> d;
  std::vector<std::uint8_t> l;
  std::vector<std::uint8_t> r;

  std::size_t size() const { return agent_ids.size(); }
  bool edge(std::size_t i, std::size_t j) const { return r[i * size() + j] != 0; }
  /// Column indices j with R[i, j] = 1, ascending.
  std::vector<std::size_t> neighbors(std::size_t i) const;

  /// Every pair connected; used by the GAT-global ablation.
  static AdjacencyMask fully_connected(std::vector<int> agent_ids);
};

/// Headings are per-agent travel directions; a zero heading means "look everywhere".
/// `map` selects the intersection half-angle for agents inside its intersection polygon.
AdjacencyMask build_adjacency(
  std::span<const AgentRecord> agents, std::span<const Vec2> headings, const SdgParams & params,
  const SceneMap * map = nullptr);

/// Last nonzero displacement of a track, or zero when the track never moved.
Vec2 heading_from_track(std::span<const Vec2> positions);

/// Weakly connected components of R as agent-id lists. Members keep mask order; components are
/// ordered by their first member.
std::vector<std::vector<int>> partition_subgraphs(const AdjacencyMask & mask);

/// hidden: N x H. Each row i becomes the attention-weighted sum of rows j with R[i, j] = 1.
Tensor spatial_aggregate(const Tensor & hidden, const AdjacencyMask & mask, const AttentionHead & head);

/// One matrix per frame: a `frame,<fid>` line, an id header line, then N rows of R.
void write_mask_csv(std::ostream & out, int frame_id, const AdjacencyMask & mask);

}  // namespace tlpred

#endif  // TLPRED__SDG_HPP_
