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

#ifndef TLPRED__LAYERS_HPP_
#define TLPRED__LAYERS_HPP_

#include "tlpred/rng.hpp"
#include "tlpred/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tlpred
{

struct NamedParam
{
  std::string name;
  Tensor tensor;
};

/// Registry of learnable tensors in registration order. Each name is registered once.
class ParamStore
{
public:
  /// Registers a tensor initialized uniformly in [-bound, bound].
  Tensor create(const std::string & name, Shape shape, double bound, Rng & rng);
  Tensor create_zeros(const std::string & name, Shape shape);
  /// Registers an existing tensor; storage is shared with the caller.
  void adopt(const std::string & name, const Tensor & tensor);

  const std::vector<NamedParam> & params() const { return params_; }
  bool contains(const std::string & name) const;
  const Tensor & at(const std::string & name) const;
  std::vector<std::string> names() const;
  std::size_t total_size() const;

  void zero_grad();
  std::vector<double> flat_values() const;
  /// Gradients in registration order; params without a grad contribute zeros.
  std::vector<double> flat_grads() const;
  void assign_flat(std::span<const double> values);
  void copy_values_from(const ParamStore & other);
  bool all_finite() const;

  /// `[{name, shape, offset}]`, offsets counted in float64 elements.
  nlohmann::json manifest() const;
  void save(const std::filesystem::path & blob, const std::filesystem::path & manifest) const;
  /// Fills this store's tensors from a blob; the manifest must match names and shapes exactly.
  void load(const std::filesystem::path & blob, const std::filesystem::path & manifest);

private:
  std::vector<NamedParam> params_;
};

/// y = x W^T + b
struct LinearLayer
{
  Tensor weight;  // out x in
  Tensor bias;    // out (may be undefined)

  static LinearLayer create(
    ParamStore & store, const std::string & name, std::size_t in, std::size_t out, Rng & rng,
    bool with_bias = true);

  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
  Tensor forward(const Tensor & x) const;
};

struct LstmState
{
  Tensor h;
  Tensor c;
};

/// Standard LSTM cell. The four gates share one weight matrix stacked as row blocks
/// [input; forget; candidate; output], each block hidden x (in + hidden).
struct LstmCell
{
  Tensor weight;  // 4H x (in + H)
  Tensor bias;    // 4H
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static LstmCell create(
    ParamStore & store, const std::string & name, std::size_t in, std::size_t hidden, Rng & rng);

  LstmState zero_state(std::size_t rows) const;
  /// x: rows x in. Returns the next (h, c), each rows x hidden.
  LstmState step(const Tensor & x, const LstmState & prev) const;
};

/// Single-layer feedforward scoring head: s(q, k) = LeakyReLU(beta . [W q || W k]).
struct AttentionHead
{
  Tensor weight;  // attn x in, shared projection
  Tensor beta;    // 1 x 2*attn
  double leaky_slope = 0.2;

  static AttentionHead create(
    ParamStore & store, const std::string & name, std::size_t in, std::size_t attn, Rng & rng);

  std::size_t attn_dim() const { return weight.shape()[0]; }
  /// rows x in -> rows x attn
  Tensor project(const Tensor & x) const;
  /// beta halves applied to projected rows -> rows x 1
  Tensor query_part(const Tensor & projected) const;
  Tensor key_part(const Tensor & projected) const;
};

/// Linear layers with LeakyReLU between them; the final layer has no activation.
struct MlpEncoder
{
  std::vector<LinearLayer> layers;
  double leaky_slope = 0.2;

  static MlpEncoder create(
    ParamStore & store, const std::string & name, const std::vector<std::size_t> & dims, Rng & rng);

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

/// Position embedding: rows x 2 -> rows x embed. Rejects non-finite positions.
Tensor embed_position(const Tensor & positions, const LinearLayer & phi);

LstmState lstm_step(const LstmCell & cell, const LstmState & prev, const Tensor & x);

/// Attention weights of one query (1 x D) over keys (M x D), softmax-normalized -> 1 x M.
Tensor gat_scores(const Tensor & query, const Tensor & keys, const AttentionHead & head);

Tensor mlp_forward(const MlpEncoder & mlp, const Tensor & x);

}  // namespace tlpred

#endif  // TLPRED__LAYERS_HPP_
