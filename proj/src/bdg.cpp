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


#include "tlpred/bdg.hpp"

namespace tlpred
{

std::array<double, kLightFeaturesPerFrame> light_frame_features(const AgentRecord & r)
{
  std::array<double, kLightFeaturesPerFrame> f{};
  f[static_cast<std::size_t>(r.light_state)] = 1.0;
  f[3] = r.light_remaining / kLightRemainingScale;
  f[4] = r.in_influence_area ? 1.0 : 0.0;
  f[5] = r.head_of_queue ? 1.0 : 0.0;
  f[6 + static_cast<std::size_t>(r.maneuver)] = 1.0;
  return f;
}

std::vector<double> light_sequence_features(std::span<const AgentRecord> obs, std::size_t upto)
{
  std::vector<double> out(obs.size() * kLightFeaturesPerFrame, 0.0);
  for (std::size_t t = 0; t < obs.size() && t <= upto; ++t) {
    const auto f = light_frame_features(obs[t]);
    std::copy(f.begin(), f.end(), out.begin() + static_cast<std::ptrdiff_t>(t * f.size()));
  }
  return out;
}

Tensor encode_lights(const Tensor & features, const MlpEncoder & enc)
{
  if (features.cols() != enc.in_dim()) {
    throw ShapeError(
      "encode_lights: feature length " + std::to_string(features.cols()) +
      " does not match encoder input " + std::to_string(enc.in_dim()));
  }
  return mlp_forward(enc, features);
}

Tensor fuse(const Tensor & hs, const Tensor & lh, const LinearLayer & proj)
{
  return proj.forward(concat({hs, lh}));
}

TemporalAttention TemporalAttention::create(
  ParamStore & store, const std::string & name, std::size_t dim, std::size_t attn, Rng & rng)
{
  TemporalAttention t;
  t.head = AttentionHead::create(store, name + ".attn", dim, attn, rng);
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(dim));
  t.value_weight = store.create(name + ".value.weight", {dim, 2 * dim}, bound, rng);
  t.value_bias = store.create(name + ".value.bias", {dim}, bound, rng);
  return t;
}

BehaviorHistory::BehaviorHistory(std::size_t capacity) : capacity_(capacity) {}

void BehaviorHistory::push(BehaviorEntry entry)
{
  entry.t = t_++;
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) {
    entries_.pop_front();
  }
}

TemporalResult temporal_update(
  const Tensor & current, BehaviorHistory & history, const TemporalAttention & attn)
{
  const std::size_t d = attn.dim();
  if (current.rank() != 2 || current.cols() != d) {
    throw ShapeError(
      "temporal_update: state " + to_string(current.shape()) + " does not match width " +
      std::to_string(d));
  }
  const Tensor w_entry = slice(attn.value_weight, 0, d);
  const Tensor w_current = slice(attn.value_weight, d, 2 * d);
  const Tensor current_value = linear(current, w_current, attn.value_bias);

  const Tensor projected = attn.head.project(current);
  const Tensor query = attn.head.query_part(projected);
  const auto score = [&](const Tensor & key) {
    return leaky_relu(add(key, query), attn.head.leaky_slope);
  };

  std::vector<Tensor> scores;
  std::vector<Tensor> values;
  for (const auto & e : history.entries()) {
    scores.push_back(score(e.key_score));
    values.push_back(add(e.value_part, current_value));
  }
  scores.push_back(score(attn.head.key_part(projected)));
  values.push_back(add(linear(current, w_entry), current_value));

  const Tensor weights = softmax(concat(scores));
  Tensor output = scale_rows(values[0], slice(weights, 0, 1));
  for (std::size_t m = 1; m < values.size(); ++m) {
    output = add(output, scale_rows(values[m], slice(weights, m, m + 1)));
  }

  BehaviorEntry entry;
  entry.state = output;
  entry.key_score = attn.head.key_part(attn.head.project(output));
  entry.value_part = linear(output, w_entry);
  history.push(std::move(entry));
  return {output, weights};
}

}  // namespace tlpred
