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


// Scalar reference implementations used by the unit and acceptance tests. Written without the
// tensor library so they can serve as independent oracles.

#ifndef TLPRED__TESTS__ORACLES_HPP_
#define TLPRED__TESTS__ORACLES_HPP_

#include "tlpred/data_model.hpp"
#include "tlpred/sdg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <vector>

namespace oracle
{

inline std::vector<double> matmul(
  const std::vector<double> & a, const std::vector<double> & b, std::size_t n, std::size_t k,
  std::size_t m)
{
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += a[i * k + p] * b[p * m + j];
      }
      c[i * m + j] = s;
    }
  }
  return c;
}

inline int sign(int v) { return (v > 0) - (v < 0); }

struct Masks
{
  std::vector<std::uint8_t> v, d, l, r;
};

// Visibility by the cosine of the angle between heading and offset.
inline Masks adjacency(
  const std::vector<tlpred::AgentRecord> & agents, const std::vector<tlpred::Vec2> & headings,
  const tlpred::SdgParams & p, const tlpred::SceneMap * map)
{
  const std::size_t n = agents.size();
  Masks m;
  m.v.assign(n * n, 0);
  m.d.assign(n * n, 0);
  m.l.assign(n * n, 0);
  m.r.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double hx = headings[i].x;
    const double hy = headings[i].y;
    const bool inside = map != nullptr && tlpred::point_in_polygon(agents[i].position(), map->intersection);
    const double theta = inside ? p.theta_intersection : p.theta_road;
    for (std::size_t j = 0; j < n; ++j) {
      const double rx = agents[j].x - agents[i].x;
      const double ry = agents[j].y - agents[i].y;
      const double rn = std::sqrt(rx * rx + ry * ry);
      const double hn = std::sqrt(hx * hx + hy * hy);
      bool vis = true;
      if (hn > 0.0 && rn > 0.0) {
        const double c = std::clamp((hx * rx + hy * ry) / (hn * rn), -1.0, 1.0);
        vis = std::acos(c) <= theta;
      }
      const std::size_t k = i * n + j;
      m.v[k] = vis;
      m.d[k] = rn <= p.d_max;
      m.l[k] = p.lane_rule == tlpred::LaneRule::kLiteral
                 ? agents[i].lane_id == agents[j].lane_id
                 : sign(agents[i].lane_id) == sign(agents[j].lane_id);
      m.r[k] = i == j || (m.v[k] && m.d[k] && m.l[k]);
    }
  }
  return m;
}

// Components by breadth-first search over the symmetrized relation.
inline std::vector<std::vector<int>> components(
  const std::vector<std::uint8_t> & r, const std::vector<int> & ids)
{
  const std::size_t n = ids.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) {
      continue;
    }
    const int c = static_cast<int>(out.size());
    std::set<std::size_t> members;
    std::queue<std::size_t> q;
    q.push(s);
    comp[s] = c;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      members.insert(u);
      for (std::size_t w = 0; w < n; ++w) {
        if ((r[u * n + w] || r[w * n + u]) && comp[w] < 0) {
          comp[w] = c;
          q.push(w);
        }
      }
    }
    std::vector<int> group;
    for (std::size_t u : members) {
      group.push_back(ids[u]);
    }
    out.push_back(group);
  }
  return out;
}

// Random frame for adjacency checks: 2..10 agents in a 400 px square, a few stationary.
struct RandomFrame
{
  std::vector<tlpred::AgentRecord> agents;
  std::vector<tlpred::Vec2> headings;
};

template <class Rng>
RandomFrame random_frame(Rng & rng)
{
  RandomFrame f;
  const std::size_t n = 2 + rng.below(9);
  for (std::size_t i = 0; i < n; ++i) {
    tlpred::AgentRecord r;
    r.agent_id = static_cast<int>(i) + 1;
    r.x = rng.uniform(300.0, 700.0);
    r.y = rng.uniform(300.0, 700.0);
    const int lanes[] = {11, 12, -21, -22, 31, -41};
    r.lane_id = lanes[rng.below(6)];
    f.agents.push_back(r);
    if (rng.bernoulli(0.1)) {
      f.headings.push_back({0.0, 0.0});
    } else {
      const double a = rng.uniform(-3.14159, 3.14159);
      f.headings.push_back({std::cos(a), std::sin(a)});
    }
  }
  return f;
}

// Frames f where an agent with pa = 1, ls = R and mb != R at f is past its stop line at f + 1.
inline std::size_t stop_line_crossings_on_red(const tlpred::Scene & scene)
{
  std::map<int, std::map<int, tlpred::AgentRecord>> tracks;  // agent -> frame -> record
  for (const auto & f : scene.frames) {
    for (const auto & r : f.agents) {
      tracks[r.agent_id][f.frame_id] = r;
    }
  }
  std::size_t count = 0;
  for (const auto & [id, track] : tracks) {
    for (const auto & [frame, r] : track) {
      const auto next = track.find(frame + 1);
      if (next == track.end() || !r.in_influence_area || r.light_state != tlpred::LightState::kRed ||
          r.maneuver == tlpred::Maneuver::kRight)
      {
        continue;
      }
      for (const auto & area : scene.map->influence_areas) {
        if (area.light_id != r.light_id) {
          continue;
        }
        const double ahead = (next->second.x - area.stop_line[0].x) * area.direction.x +
                             (next->second.y - area.stop_line[0].y) * area.direction.y;
        if (ahead > 0.0) {
          ++count;
        }
      }
    }
  }
  return count;
}

// Largest count of f = 1 records for one light in one frame.
inline std::size_t heads_per_light(const tlpred::Scene & scene)
{
  std::size_t worst = 0;
  for (const auto & f : scene.frames) {
    std::map<int, std::size_t> heads;
    for (const auto & r : f.agents) {
      if (r.head_of_queue) {
        worst = std::max(worst, ++heads[r.light_id]);
      }
    }
  }
  return worst;
}

inline double dist(tlpred::Vec2 a, tlpred::Vec2 b)
{
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

inline double ade(const std::vector<tlpred::Vec2> & p, const std::vector<tlpred::Vec2> & g)
{
  double s = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    s += dist(p[t], g[t]);
  }
  return s / static_cast<double>(p.size());
}

inline double fde(const std::vector<tlpred::Vec2> & p, const std::vector<tlpred::Vec2> & g)
{
  return dist(p.back(), g.back());
}

struct EvalTotals
{
  double ade = 0.0;
  double fde = 0.0;
  double min_fde = 0.0;
};

// samples[w][k][a] is sample k of agent a in window w. Agent-weighted best-of-K means.
inline EvalTotals evaluate(
  const std::vector<std::vector<std::vector<tlpred::Vec2>>> & gt,
  const std::vector<std::vector<std::vector<std::vector<tlpred::Vec2>>>> & samples)
{
  EvalTotals out;
  double agents = 0.0;
  for (std::size_t w = 0; w < gt.size(); ++w) {
    for (std::size_t a = 0; a < gt[w].size(); ++a) {
      std::size_t best = 0;
      double min_fde = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < samples[w].size(); ++k) {
        if (ade(samples[w][k][a], gt[w][a]) < ade(samples[w][best][a], gt[w][a])) {
          best = k;
        }
        min_fde = std::min(min_fde, fde(samples[w][k][a], gt[w][a]));
      }
      out.ade += ade(samples[w][best][a], gt[w][a]);
      out.fde += fde(samples[w][best][a], gt[w][a]);
      out.min_fde += min_fde;
      agents += 1.0;
    }
  }
  out.ade /= agents;
  out.fde /= agents;
  out.min_fde /= agents;
  return out;
}

// gt and each prediction: agents rows of 2T values (x0, y0, x1, y1, ...).
inline double variety(
  const std::vector<std::vector<double>> & gt,
  const std::vector<std::vector<std::vector<double>>> & preds, bool step_sum)
{
  double total = 0.0;
  for (std::size_t a = 0; a < gt.size(); ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto & pred : preds) {
      double e = 0.0;
      if (step_sum) {
        for (std::size_t t = 0; 2 * t < gt[a].size(); ++t) {
          const double dx = pred[a][2 * t] - gt[a][2 * t];
          const double dy = pred[a][2 * t + 1] - gt[a][2 * t + 1];
          e += std::sqrt(dx * dx + dy * dy);
        }
      } else {
        for (std::size_t c = 0; c < gt[a].size(); ++c) {
          e += (pred[a][c] - gt[a][c]) * (pred[a][c] - gt[a][c]);
        }
        e = std::sqrt(e);
      }
      best = std::min(best, e);
    }
    total += best;
  }
  return total / static_cast<double>(gt.size());
}

inline bool close_rel(double a, double b, double tol)
{
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace oracle

#endif  // TLPRED__TESTS__ORACLES_HPP_
