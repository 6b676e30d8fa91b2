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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

namespace
{

using tlpred::Tensor;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::filesystem::path temp_dir(const std::string & name)
{
  const auto dir = std::filesystem::temp_directory_path() / ("tlpred_layers_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Layers, LstmStepMatchesScalarCell)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(4);
  const auto cell = tlpred::LstmCell::create(store, "cell", 3, 5, rng);
  ASSERT_EQ(cell.weight.shape(), (tlpred::Shape{20, 8}));

  const Tensor x = Tensor::matrix(2, 3, {0.3, -0.2, 0.9, -1.0, 0.5, 0.1});
  tlpred::LstmState prev{
    Tensor::matrix(2, 5, {0.1, 0.2, -0.3, 0.4, 0.0, -0.5, 0.6, 0.2, -0.1, 0.3}),
    Tensor::matrix(2, 5, {1.0, -1.0, 0.5, 0.0, 0.2, 0.3, 0.1, -0.7, 0.8, -0.2})};
  const auto next = tlpred::lstm_step(cell, prev, x);

  const auto & w = cell.weight;
  const auto & b = cell.bias;
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> in{x.at(r, 0), x.at(r, 1), x.at(r, 2)};
    for (std::size_t k = 0; k < 5; ++k) {
      in.push_back(prev.h.at(r, k));
    }
    const auto gate = [&](std::size_t row) {
      double s = b.at(row);
      for (std::size_t c = 0; c < 8; ++c) {
        s += w.at(row, c) * in[c];
      }
      return s;
    };
    for (std::size_t k = 0; k < 5; ++k) {
      const double i = sig(gate(k));
      const double f = sig(gate(5 + k));
      const double g = std::tanh(gate(10 + k));
      const double o = sig(gate(15 + k));
      const double c = f * prev.c.at(r, k) + i * g;
      EXPECT_NEAR(next.c.at(r, k), c, 1e-14);
      EXPECT_NEAR(next.h.at(r, k), o * std::tanh(c), 1e-14);
    }
  }
}

TEST(Layers, LstmRejectsWrongInputWidth)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(4);
  const auto cell = tlpred::LstmCell::create(store, "cell", 3, 5, rng);
  EXPECT_THROW(tlpred::lstm_step(cell, cell.zero_state(1), Tensor::zeros({1, 4})), tlpred::ShapeError);
}

TEST(Layers, GatScoresMatchScalarFormula)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(8);
  const auto head = tlpred::AttentionHead::create(store, "att", 4, 3, rng);
  const Tensor q = Tensor::row({0.5, -0.1, 0.2, 0.9});
  const Tensor keys = Tensor::matrix(3, 4, {0.1, 0.2, 0.3, 0.4, -0.4, 0.0, 0.8, -0.2, 1.0, 1.0, -1.0, 0.5});
  const Tensor a = tlpred::gat_scores(q, keys, head);

  const auto proj = [&](const std::vector<double> & v, std::size_t r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      s += head.weight.at(r, c) * v[c];
    }
    return s;
  };
  const std::vector<double> qv{0.5, -0.1, 0.2, 0.9};
  double qs = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    qs += head.beta.at(0, r) * proj(qv, r);
  }
  std::vector<double> e(3);
  for (std::size_t m = 0; m < 3; ++m) {
    const std::vector<double> kv{keys.at(m, 0), keys.at(m, 1), keys.at(m, 2), keys.at(m, 3)};
    double ks = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      ks += head.beta.at(0, 3 + r) * proj(kv, r);
    }
    const double s = qs + ks;
    e[m] = std::exp(s > 0.0 ? s : 0.2 * s);
  }
  const double z = std::accumulate(e.begin(), e.end(), 0.0);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_NEAR(a.at(0, m), e[m] / z, 1e-14);
  }
}

TEST(Layers, GatScoresArePermutationEquivariant)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(12);
  const auto head = tlpred::AttentionHead::create(store, "att", 5, 4, rng);
  std::vector<double> kv(6 * 5);
  for (auto & v : kv) {
    v = rng.uniform(-1.0, 1.0);
  }
  const Tensor q = Tensor::row({0.2, 0.1, -0.3, 0.4, 0.0});
  const Tensor keys = Tensor::matrix(6, 5, kv);
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  const Tensor permuted = tlpred::embed(keys, perm);
  const Tensor a = tlpred::gat_scores(q, keys, head);
  const Tensor b = tlpred::gat_scores(q, permuted, head);
  for (std::size_t m = 0; m < 6; ++m) {
    EXPECT_NEAR(b.at(0, m), a.at(0, perm[m]), 1e-15);
  }
}

TEST(Layers, GatScoresRejectEmptyKeys)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(1);
  const auto head = tlpred::AttentionHead::create(store, "att", 2, 2, rng);
  EXPECT_THROW(tlpred::gat_scores(Tensor::row({1.0, 0.0}), Tensor(), head), std::invalid_argument);
}

TEST(Layers, EmbedPositionRejectsNonFinite)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(1);
  const auto phi = tlpred::LinearLayer::create(store, "phi", 2, 4, rng);
  EXPECT_THROW(tlpred::embed_position(Tensor::row({NAN, 0.0}), phi), std::invalid_argument);
  EXPECT_EQ(tlpred::embed_position(Tensor::row({1.0, 2.0}), phi).shape(), (tlpred::Shape{1, 4}));
}

TEST(Layers, MlpAppliesLeakyReluBetweenLayers)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(6);
  const auto mlp = tlpred::MlpEncoder::create(store, "mlp", {3, 4, 2}, rng);
  const Tensor x = Tensor::row({0.7, -1.2, 0.4});
  const Tensor y = tlpred::mlp_forward(mlp, x);
  std::vector<double> hid(4);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = mlp.layers[0].bias.at(r);
    for (std::size_t c = 0; c < 3; ++c) {
      s += mlp.layers[0].weight.at(r, c) * x.at(0, c);
    }
    hid[r] = s > 0.0 ? s : 0.2 * s;
  }
  for (std::size_t r = 0; r < 2; ++r) {
    double s = mlp.layers[1].bias.at(r);
    for (std::size_t c = 0; c < 4; ++c) {
      s += mlp.layers[1].weight.at(r, c) * hid[c];
    }
    EXPECT_NEAR(y.at(0, r), s, 1e-14);
  }
}

TEST(Layers, ParamStoreRejectsDuplicateNames)
{
  tlpred::ParamStore store;
  tlpred::Rng rng(1);
  store.create("a", {2}, 0.1, rng);
  EXPECT_THROW(store.create("a", {2}, 0.1, rng), std::invalid_argument);
}

TEST(Layers, CheckpointRoundTripIsExact)
{
  tlpred::Rng rng(21);
  tlpred::ParamStore a;
  tlpred::LinearLayer::create(a, "lin", 3, 4, rng);
  tlpred::LstmCell::create(a, "cell", 2, 3, rng);
  const auto dir = temp_dir("roundtrip");
  a.save(dir / "params.bin", dir / "manifest.json");

  tlpred::Rng other(99);
  tlpred::ParamStore b;
  tlpred::LinearLayer::create(b, "lin", 3, 4, other);
  tlpred::LstmCell::create(b, "cell", 2, 3, other);
  ASSERT_NE(a.flat_values(), b.flat_values());
  b.load(dir / "params.bin", dir / "manifest.json");
  EXPECT_EQ(a.flat_values(), b.flat_values());
  EXPECT_EQ(a.manifest(), b.manifest());
}

TEST(Layers, CheckpointLoadRejectsShapeMismatch)
{
  tlpred::Rng rng(21);
  tlpred::ParamStore a;
  tlpred::LinearLayer::create(a, "lin", 3, 4, rng);
  const auto dir = temp_dir("mismatch");
  a.save(dir / "params.bin", dir / "manifest.json");
  tlpred::ParamStore b;
  tlpred::LinearLayer::create(b, "lin", 3, 5, rng);
  EXPECT_THROW(b.load(dir / "params.bin", dir / "manifest.json"), std::runtime_error);
}
