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


#ifndef TLPRED__BDG_HPP_
#define TLPRED__BDG_HPP_

#include "tlpred/data_model.hpp"
#include "tlpred/layers.hpp"

#include <array>
#include <deque>
#include <span>
#include <vector>

namespace tlpred
{

/// Per-frame light context: one-hot(ls) | lt / 10 | pa | f | one-hot(mb).
inline constexpr std::size_t kLightFeaturesPerFrame = 9;
inline constexpr double kLightRemainingScale = 10.0;

std::array<double, kLightFeaturesPerFrame> light_frame_features(const AgentRecord & r);

/// Flattened sequence of `obs_len` frames for one agent. Frames after `upto` are zero, so the
/// encoding at step t depends only on frames 0..t.
std::vector<double> light_sequence_features(
  std::span<const AgentRecord> obs, std::size_t upto);

/// features: rows x (obs_len * 9) -> rows x out_dim.
Tensor encode_lights(const Tensor & features, const MlpEncoder & enc);

/// concat(hs, lh) followed by `proj`.
Tensor fuse(const Tensor & hs, const Tensor & lh, const LinearLayer & proj);

/// Attention of the current state over a window of past outputs. All tensors are rows x D,
/// one row per agent; rows never interact.
struct TemporalAttention
{
  AttentionHead head;
  Tensor value_weight;  // D x 2D, applied to [entry | current]
  Tensor value_bias;    // D

  static TemporalAttention create(
    ParamStore & store, const std::string & name, std::size_t dim, std::size_t attn, Rng & rng);

  std::size_t dim() const { return value_weight.shape()[0]; }
};

struct BehaviorEntry
{
  int t = 0;
  Tensor state;      // rows x D
  Tensor key_score;  // rows x 1, cached key half of the attention score
  Tensor value_part; // rows x D, cached entry half of the value projection
};

/// Ring buffer of post-update states, oldest first.
class BehaviorHistory
{
public:
  explicit BehaviorHistory(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  const std::deque<BehaviorEntry> & entries() const { return entries_; }
  int time() const { return t_; }

  void push(BehaviorEntry entry);

private:
  std::size_t capacity_;
  std::deque<BehaviorEntry> entries_;
  int t_ = 0;
};

struct TemporalResult
{
  Tensor output;   // rows x D
  Tensor weights;  // rows x (history + 1); the last column belongs to the current state
};

/// Scores the current state against every history entry and itself, mixes value([entry | current])
/// with the softmax weights, then appends the output to the history.
TemporalResult temporal_update(
  const Tensor & current, BehaviorHistory & history, const TemporalAttention & attn);

}  // namespace tlpred

#endif  // TLPRED__BDG_HPP_
