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

#include "tlpred/layers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tlpred
{

namespace
{

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::uint64_t to_little_endian(std::uint64_t v)
{
  if constexpr (std::endian::native == std::endian::big) {
    return __builtin_bswap64(v);
  }
  return v;
}

}  // namespace

// ---- ParamStore ------------------------------------------------------------------------------

Tensor ParamStore::create(const std::string & name, Shape shape, double bound, Rng & rng)
{
  if (contains(name)) {
    throw std::invalid_argument("ParamStore: parameter '" + name + "' registered twice");
  }
  std::vector<double> values(numel_of(shape));
  for (double & v : values) {
    v = rng.uniform(-bound, bound);
  }
  Tensor t(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

Tensor ParamStore::create_zeros(const std::string & name, Shape shape)
{
  if (contains(name)) {
    throw std::invalid_argument("ParamStore: parameter '" + name + "' registered twice");
  }
  Tensor t = Tensor::zeros(std::move(shape), true);
  params_.push_back({name, t});
  return t;
}

void ParamStore::adopt(const std::string & name, const Tensor & tensor)
{
  if (contains(name)) {
    throw std::invalid_argument("ParamStore: parameter '" + name + "' registered twice");
  }
  params_.push_back({name, tensor});
}

bool ParamStore::contains(const std::string & name) const
{
  return std::any_of(
    params_.begin(), params_.end(), [&](const NamedParam & p) { return p.name == name; });
}

const Tensor & ParamStore::at(const std::string & name) const
{
  for (const auto & p : params_) {
    if (p.name == name) {
      return p.tensor;
    }
  }
  throw std::out_of_range("ParamStore: no parameter '" + name + "'");
}

std::vector<std::string> ParamStore::names() const
{
  std::vector<std::string> out;
  for (const auto & p : params_) {
    out.push_back(p.name);
  }
  return out;
}

std::size_t ParamStore::total_size() const
{
  std::size_t n = 0;
  for (const auto & p : params_) {
    n += p.tensor.numel();
  }
  return n;
}

void ParamStore::zero_grad()
{
  for (auto & p : params_) {
    p.tensor.zero_grad();
  }
}

std::vector<double> ParamStore::flat_values() const
{
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto & p : params_) {
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  }
  return out;
}

std::vector<double> ParamStore::flat_grads() const
{
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto & p : params_) {
    if (p.tensor.has_grad()) {
      out.insert(out.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      out.insert(out.end(), p.tensor.numel(), 0.0);
    }
  }
  return out;
}

void ParamStore::assign_flat(std::span<const double> values)
{
  if (values.size() != total_size()) {
    throw std::invalid_argument("ParamStore::assign_flat: size mismatch");
  }
  std::size_t off = 0;
  for (auto & p : params_) {
    auto dst = p.tensor.mutable_data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    off += dst.size();
  }
}

void ParamStore::copy_values_from(const ParamStore & other)
{
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("ParamStore::copy_values_from: layouts differ");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name ||
        params_[i].tensor.shape() != other.params_[i].tensor.shape())
    {
      throw std::invalid_argument("ParamStore::copy_values_from: layouts differ");
    }
    auto src = other.params_[i].tensor.data();
    std::copy(src.begin(), src.end(), params_[i].tensor.mutable_data().begin());
  }
}

bool ParamStore::all_finite() const
{
  for (const auto & p : params_) {
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

nlohmann::json ParamStore::manifest() const
{
  nlohmann::json entries = nlohmann::json::array();
  std::size_t off = 0;
  for (const auto & p : params_) {
    entries.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", off}});
    off += p.tensor.numel();
  }
  return {
    {"dtype", "float64"}, {"byte_order", "little"}, {"total", off}, {"params", entries}};
}

void ParamStore::save(
  const std::filesystem::path & blob, const std::filesystem::path & manifest_path) const
{
  std::ofstream out(blob, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + blob.string());
  }
  for (const auto & p : params_) {
    for (double v : p.tensor.data()) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char *>(&bits), sizeof(bits));
    }
  }
  std::ofstream mf(manifest_path);
  if (!mf) {
    throw std::runtime_error("cannot write " + manifest_path.string());
  }
  mf << manifest().dump(2) << '\n';
}

void ParamStore::load(
  const std::filesystem::path & blob, const std::filesystem::path & manifest_path)
{
  std::ifstream mf(manifest_path);
  if (!mf) {
    throw std::runtime_error("cannot read " + manifest_path.string());
  }
  const nlohmann::json doc = nlohmann::json::parse(mf);
  const auto & entries = doc.at("params");
  if (entries.size() != params_.size()) {
    throw std::runtime_error("parameter manifest does not match the model layout");
  }
  std::ifstream in(blob, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + blob.string());
  }
  std::vector<std::uint64_t> raw(total_size());
  in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * 8) || in.peek() != EOF) {
    throw std::runtime_error("parameter blob size does not match the manifest");
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto & e = entries[i];
    auto & p = params_[i];
    if (
      e.at("name").get<std::string>() != p.name ||
      e.at("shape").get<Shape>() != p.tensor.shape() || e.at("offset").get<std::size_t>() != off)
    {
      throw std::runtime_error("parameter manifest entry '" + p.name + "' does not match");
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = std::bit_cast<double>(to_little_endian(raw[off + k]));
    }
    off += dst.size();
  }
}

// ---- layers ----------------------------------------------------------------------------------

LinearLayer LinearLayer::create(
  ParamStore & store, const std::string & name, std::size_t in, std::size_t out, Rng & rng,
  bool with_bias)
{
  LinearLayer layer;
  const double bound = fan_in_bound(in);
  layer.weight = store.create(name + ".weight", {out, in}, bound, rng);
  if (with_bias) {
    layer.bias = store.create(name + ".bias", {out}, bound, rng);
  }
  return layer;
}

Tensor LinearLayer::forward(const Tensor & x) const { return linear(x, weight, bias); }

LstmCell LstmCell::create(
  ParamStore & store, const std::string & name, std::size_t in, std::size_t hidden, Rng & rng)
{
  LstmCell cell;
  const double bound = fan_in_bound(hidden);
  cell.weight = store.create(name + ".weight", {4 * hidden, in + hidden}, bound, rng);
  cell.bias = store.create(name + ".bias", {4 * hidden}, bound, rng);
  cell.input_dim = in;
  cell.hidden_dim = hidden;
  return cell;
}

LstmState LstmCell::zero_state(std::size_t rows) const
{
  return {Tensor::zeros({rows, hidden_dim}), Tensor::zeros({rows, hidden_dim})};
}

LstmState LstmCell::step(const Tensor & x, const LstmState & prev) const
{
  if (x.rank() != 2 || x.cols() != input_dim) {
    throw ShapeError(
      "lstm_step: input " + to_string(x.shape()) + " does not match input_dim " +
      std::to_string(input_dim));
  }
  if (prev.h.shape() != Shape{x.rows(), hidden_dim} || prev.c.shape() != prev.h.shape()) {
    throw ShapeError(
      "lstm_step: state " + to_string(prev.h.shape()) + " does not match " +
      to_string(Shape{x.rows(), hidden_dim}));
  }
  const std::size_t h = hidden_dim;
  const Tensor z = linear(concat({x, prev.h}), weight, bias);
  const Tensor i = sigmoid(slice(z, 0, h));
  const Tensor f = sigmoid(slice(z, h, 2 * h));
  const Tensor g = tanh(slice(z, 2 * h, 3 * h));
  const Tensor o = sigmoid(slice(z, 3 * h, 4 * h));
  const Tensor c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

AttentionHead AttentionHead::create(
  ParamStore & store, const std::string & name, std::size_t in, std::size_t attn, Rng & rng)
{
  AttentionHead head;
  head.weight = store.create(name + ".weight", {attn, in}, fan_in_bound(in), rng);
  head.beta = store.create(name + ".beta", {1, 2 * attn}, fan_in_bound(2 * attn), rng);
  return head;
}

Tensor AttentionHead::project(const Tensor & x) const { return linear(x, weight); }

Tensor AttentionHead::query_part(const Tensor & projected) const
{
  return linear(projected, slice(beta, 0, attn_dim()));
}

Tensor AttentionHead::key_part(const Tensor & projected) const
{
  return linear(projected, slice(beta, attn_dim(), 2 * attn_dim()));
}

MlpEncoder MlpEncoder::create(
  ParamStore & store, const std::string & name, const std::vector<std::size_t> & dims, Rng & rng)
{
  if (dims.size() < 2) {
    throw std::invalid_argument("MlpEncoder: need at least input and output dims");
  }
  MlpEncoder mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    mlp.layers.push_back(
      LinearLayer::create(store, name + ".layer" + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return mlp;
}

Tensor embed_position(const Tensor & positions, const LinearLayer & phi)
{
  for (double v : positions.data()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("embed_position: non-finite position");
    }
  }
  if (positions.cols() != 2 || phi.in_dim() != 2) {
    throw ShapeError("embed_position: expected rows x 2, got " + to_string(positions.shape()));
  }
  const Tensor p = positions.rank() == 2 ? positions : reshape(positions, {1, 2});
  return phi.forward(p);
}

LstmState lstm_step(const LstmCell & cell, const LstmState & prev, const Tensor & x)
{
  return cell.step(x, prev);
}

Tensor gat_scores(const Tensor & query, const Tensor & keys, const AttentionHead & head)
{
  if (!keys.defined() || keys.numel() == 0) {
    throw std::invalid_argument("gat_scores: empty key set");
  }
  const Tensor q = query.rank() == 2 ? query : reshape(query, {1, query.numel()});
  const Tensor k = keys.rank() == 2 ? keys : reshape(keys, {1, keys.numel()});
  if (q.rows() != 1 || q.cols() != k.cols()) {
    throw ShapeError("gat_scores: query " + to_string(q.shape()) + " vs keys " + to_string(k.shape()));
  }
  const Tensor qs = head.query_part(head.project(q));
  const Tensor ks = head.key_part(head.project(k));
  const Tensor s = leaky_relu(add(ks, qs), head.leaky_slope);
  return softmax(reshape(s, {1, k.rows()}));
}

Tensor mlp_forward(const MlpEncoder & mlp, const Tensor & x)
{
  if (x.cols() != mlp.in_dim()) {
    throw ShapeError(
      "mlp_forward: input " + to_string(x.shape()) + " does not match in_dim " +
      std::to_string(mlp.in_dim()));
  }
  Tensor y = x.rank() == 2 ? x : reshape(x, {1, x.numel()});
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    y = mlp.layers[i].forward(y);
    if (i + 1 < mlp.layers.size()) {
      y = leaky_relu(y, mlp.leaky_slope);
    }
  }
  return y;
}

}  // namespace tlpred
