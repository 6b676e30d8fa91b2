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


#include "tlpred/sdg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace tlpred
{

void SdgParams::validate() const
{
  const auto ok_angle = [](double a) { return a > 0.0 && a <= std::numbers::pi; };
  if (!ok_angle(theta_road) || !ok_angle(theta_intersection)) {
    throw std::invalid_argument("sdg: visual half-angles must lie in (0, pi]");
  }
  if (!(d_max > 0.0)) {
    throw std::invalid_argument("sdg: d_max must be positive");
  }
}

std::vector<std::size_t> AdjacencyMask::neighbors(std::size_t i) const
{
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < size(); ++j) {
    if (edge(i, j)) {
      out.push_back(j);
    }
  }
  return out;
}

AdjacencyMask AdjacencyMask::fully_connected(std::vector<int> agent_ids)
{
  AdjacencyMask m;
  const std::size_t n = agent_ids.size();
  m.agent_ids = std::move(agent_ids);
  m.v.assign(n * n, 1);
  m.d.assign(n * n, 1);
  m.l.assign(n * n, 1);
  m.r.assign(n * n, 1);
  return m;
}

namespace
{

int sign_of(int v) { return (v > 0) - (v < 0); }

}  // namespace

AdjacencyMask build_adjacency(
  std::span<const AgentRecord> agents, std::span<const Vec2> headings, const SdgParams & params,
  const SceneMap * map)
{
  params.validate();
  const std::size_t n = agents.size();
  if (n == 0) {
    throw std::invalid_argument("build_adjacency: frame has no agents");
  }
  if (headings.size() != n) {
    throw std::invalid_argument("build_adjacency: one heading per agent required");
  }
  for (const auto & h : headings) {
    if (!std::isfinite(h.x) || !std::isfinite(h.y)) {
      throw std::invalid_argument("build_adjacency: non-finite heading");
    }
  }
  AdjacencyMask m;
  m.agent_ids.reserve(n);
  for (const auto & a : agents) {
    m.agent_ids.push_back(a.agent_id);
  }
  m.v.assign(n * n, 0);
  m.d.assign(n * n, 0);
  m.l.assign(n * n, 0);
  m.r.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 pi = agents[i].position();
    const Vec2 hi = headings[i];
    const bool omni = hi.x == 0.0 && hi.y == 0.0;
    const double theta =
      map != nullptr && map->in_intersection(pi) ? params.theta_intersection : params.theta_road;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 rel = agents[j].position() - pi;
      const std::size_t k = i * n + j;
      // A zero offset has no bearing; dot() may yield -0 there, which atan2 maps to pi.
      const bool coincident = rel.x == 0.0 && rel.y == 0.0;
      m.v[k] = omni || coincident || std::atan2(std::abs(cross(hi, rel)), dot(hi, rel)) <= theta;
      m.d[k] = std::hypot(rel.x, rel.y) <= params.d_max;
      m.l[k] = params.lane_rule == LaneRule::kLiteral
                 ? agents[i].lane_id == agents[j].lane_id
                 : sign_of(agents[i].lane_id) == sign_of(agents[j].lane_id);
      m.r[k] = i == j || (m.v[k] && m.d[k] && m.l[k]);
    }
  }
  return m;
}

Vec2 heading_from_track(std::span<const Vec2> positions)
{
  for (std::size_t t = positions.size(); t-- > 1;) {
    const Vec2 d = positions[t] - positions[t - 1];
    if (d.x != 0.0 || d.y != 0.0) {
      return d;
    }
  }
  return {};
}

std::vector<std::vector<int>> partition_subgraphs(const AdjacencyMask & mask)
{
  const std::size_t n = mask.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.edge(i, j)) {
        const std::size_t a = find(i);
        const std::size_t b = find(j);
        if (a != b) {
          parent[std::max(a, b)] = std::min(a, b);
        }
      }
    }
  }
  std::vector<std::vector<int>> out;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    if (slot[root] == n) {
      slot[root] = out.size();
      out.emplace_back();
    }
    out[slot[root]].push_back(mask.agent_ids[i]);
  }
  return out;
}

Tensor spatial_aggregate(const Tensor & hidden, const AdjacencyMask & mask, const AttentionHead & head)
{
  if (hidden.rank() != 2 || hidden.rows() != mask.size()) {
    throw ShapeError(
      "spatial_aggregate: hidden " + to_string(hidden.shape()) + " for " +
      std::to_string(mask.size()) + " agents");
  }
  const Tensor projected = head.project(hidden);
  const Tensor query = head.query_part(projected);  // N x 1
  const Tensor keys = head.key_part(projected);     // N x 1
  std::vector<Tensor> rows;
  rows.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::vector<std::size_t> nbr = mask.neighbors(i);
    const std::size_t self[1] = {i};
    const Tensor s = leaky_relu(add(embed(keys, nbr), embed(query, self)), head.leaky_slope);
    const Tensor w = softmax(reshape(s, {1, nbr.size()}));
    rows.push_back(matmul(w, embed(hidden, nbr)));
  }
  return concat_rows(rows);
}

void write_mask_csv(std::ostream & out, int frame_id, const AdjacencyMask & mask)
{
  out << "frame," << frame_id << '\n' << "Aid";
  for (int id : mask.agent_ids) {
    out << ',' << id;
  }
  out << '\n';
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out << mask.agent_ids[i];
    for (std::size_t j = 0; j < mask.size(); ++j) {
      out << ',' << static_cast<int>(mask.r[i * mask.size() + j]);
    }
    out << '\n';
  }
}

}  // namespace tlpred
