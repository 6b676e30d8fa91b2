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


#include "tlpred/metrics.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

namespace tlpred
{

namespace
{

double distance(Vec2 a, Vec2 b, DistanceMode mode)
{
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return mode == DistanceMode::kSquared ? dx * dx + dy * dy : std::sqrt(dx * dx + dy * dy);
}

void check_lengths(std::span<const Vec2> pred, std::span<const Vec2> gt, const char * what)
{
  if (pred.size() != gt.size()) {
    throw std::invalid_argument(
      std::string(what) + ": length mismatch " + std::to_string(pred.size()) + " vs " +
      std::to_string(gt.size()));
  }
  if (gt.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty trajectory");
  }
}

}  // namespace

double ade(std::span<const Vec2> pred, std::span<const Vec2> gt, DistanceMode mode)
{
  check_lengths(pred, gt, "ade");
  double acc = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    acc += distance(pred[t], gt[t], mode);
  }
  return acc / static_cast<double>(gt.size());
}

double fde(std::span<const Vec2> pred, std::span<const Vec2> gt, DistanceMode mode)
{
  check_lengths(pred, gt, "fde");
  return distance(pred.back(), gt.back(), mode);
}

EvalReport evaluate(
  const std::vector<TrajectoryWindow> & windows, const Sampler & sampler, std::size_t k,
  const std::string & fingerprint, DistanceMode mode)
{
  if (windows.empty()) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  if (k == 0) {
    throw std::invalid_argument("evaluate: K must be positive");
  }
  EvalReport report;
  report.k = k;
  report.fingerprint = fingerprint;
  double ade_sum = 0.0;
  double fde_sum = 0.0;
  double min_fde_sum = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const TrajectoryWindow & w = windows[i];
    const auto samples = sampler(w, i);
    if (samples.size() != k) {
      throw std::runtime_error("evaluate: sampler returned the wrong number of samples");
    }
    WindowEval we;
    we.start_frame = w.start_frame;
    for (std::size_t a = 0; a < w.num_agents(); ++a) {
      AgentEval ae;
      ae.agent_id = w.agent_ids[a];
      ae.gt = w.target[a];
      for (std::size_t s = 0; s < k; ++s) {
        const double sa = ade(samples[s].at(a), w.target[a], mode);
        const double sf = fde(samples[s].at(a), w.target[a], mode);
        if (s == 0 || sa < ae.ade) {
          ae.ade = sa;
          ae.fde = sf;
          ae.best_sample = s;
        }
        if (s == 0 || sf < ae.min_fde) {
          ae.min_fde = sf;
        }
      }
      ae.best = samples[ae.best_sample][a];
      we.ade += ae.ade;
      we.fde += ae.fde;
      we.min_fde += ae.min_fde;
      we.agents.push_back(std::move(ae));
    }
    ade_sum += we.ade;
    fde_sum += we.fde;
    min_fde_sum += we.min_fde;
    report.agents += we.agents.size();
    const double n = static_cast<double>(we.agents.size());
    we.ade /= n;
    we.fde /= n;
    we.min_fde /= n;
    report.windows.push_back(std::move(we));
  }
  const double n = static_cast<double>(report.agents);
  report.ade = ade_sum / n;
  report.fde = fde_sum / n;
  report.min_fde = min_fde_sum / n;
  return report;
}

EvalReport evaluate(
  const std::vector<TrajectoryWindow> & windows, const Model & model, std::uint64_t seed,
  std::size_t workers, const std::string & fingerprint)
{
  const std::size_t k = model.hyper().k_samples;
  std::vector<std::vector<Trajectories>> samples(windows.size());
  workers = std::max<std::size_t>(1, std::min(workers, windows.size()));
  std::vector<std::exception_ptr> errors(workers);
  const auto body = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < windows.size(); i += workers) {
        samples[i] = predict_k(model, windows[i], k, derive_seed({seed, i}));
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back(body, w);
    }
    for (auto & t : threads) {
      t.join();
    }
  }
  for (auto & e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return evaluate(
    windows, [&](const TrajectoryWindow &, std::size_t i) { return samples[i]; }, k, fingerprint);
}

nlohmann::json EvalReport::to_json() const
{
  nlohmann::json per = nlohmann::json::array();
  for (const auto & w : windows) {
    per.push_back(
      {{"start_frame", w.start_frame},
       {"agents", w.agents.size()},
       {"ade", w.ade},
       {"fde", w.fde},
       {"min_fde", w.min_fde}});
  }
  return {{"ade", ade},         {"fde", fde},     {"min_fde", min_fde},
          {"k", k},             {"agents", agents}, {"windows", windows.size()},
          {"fingerprint", fingerprint}, {"per_window", per}};
}

void EvalReport::write_json(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << to_json().dump(2) << '\n';
}

void EvalReport::write_csv(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "window,start_frame,agents,ade,fde,min_fde\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto & w = windows[i];
    out << i << ',' << w.start_frame << ',' << w.agents.size() << ',' << format_number(w.ade) << ','
        << format_number(w.fde) << ',' << format_number(w.min_fde) << '\n';
  }
  out << "all,," << agents << ',' << format_number(ade) << ',' << format_number(fde) << ','
      << format_number(min_fde) << '\n';
}

void EvalReport::write_trace_csv(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "window,start_frame,agent_id,sample,t,gt_x,gt_y,pred_x,pred_y\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (const auto & a : windows[i].agents) {
      for (std::size_t t = 0; t < a.gt.size(); ++t) {
        out << i << ',' << windows[i].start_frame << ',' << a.agent_id << ',' << a.best_sample << ','
            << t << ',' << format_number(a.gt[t].x) << ',' << format_number(a.gt[t].y) << ','
            << format_number(a.best[t].x) << ',' << format_number(a.best[t].y) << '\n';
      }
    }
  }
}

}  // namespace tlpred
