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


#include "tlpred/gradcheck_suite.hpp"

#include "tlpred/bdg.hpp"
#include "tlpred/layers.hpp"
#include "tlpred/sdg.hpp"

namespace tlpred
{

namespace
{

Tensor random_tensor(Shape shape, Rng & rng, double scale = 1.0)
{
  std::vector<double> v(numel_of(shape));
  for (double & x : v) {
    x = rng.uniform(-scale, scale);
  }
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor constant_tensor(Shape shape, Rng & rng)
{
  Tensor t = random_tensor(std::move(shape), rng);
  t.set_requires_grad(false);
  return t;
}

std::vector<Tensor> params_of(const ParamStore & store)
{
  std::vector<Tensor> out;
  for (const auto & p : store.params()) {
    out.push_back(p.tensor);
  }
  return out;
}

}  // namespace

HyperParams miniature_hyperparams()
{
  HyperParams hp;
  hp.embed_dim = 4;
  hp.hidden_dim = 8;
  hp.input_dim = 8;
  hp.attn_dim = 6;
  hp.light_hidden = 6;
  hp.noise_dim = 3;
  hp.obs_len = 3;
  hp.pred_len = 2;
  hp.k_window = 2;
  hp.train_samples = 2;
  hp.k_samples = 2;
  hp.batch = 1;
  return hp;
}

TrajectoryWindow miniature_window(std::uint64_t seed)
{
  Rng rng(seed);
  TrajectoryWindow w;
  w.start_frame = 0;
  w.agent_ids = {1, 2};
  const Vec2 start[2] = {{100.0, 100.0}, {120.0, 102.0}};
  for (int a = 0; a < 2; ++a) {
    std::vector<AgentRecord> obs;
    Vec2 p = start[a];
    for (int t = 0; t < 3; ++t) {
      AgentRecord r;
      r.frame_id = t;
      r.agent_id = w.agent_ids[a];
      r.x = p.x;
      r.y = p.y;
      r.lane_id = 2;
      r.in_influence_area = rng.bernoulli(0.5);
      r.head_of_queue = r.in_influence_area && a == 1;
      r.maneuver = static_cast<Maneuver>(rng.below(3));
      r.light_id = 1;
      r.light_state = static_cast<LightState>(rng.below(3));
      r.light_remaining = rng.uniform(0.0, 20.0);
      obs.push_back(r);
      p = p + Vec2{rng.uniform(8.0, 12.0), rng.uniform(-1.0, 1.0)};
    }
    std::vector<Vec2> target;
    for (int t = 0; t < 2; ++t) {
      target.push_back(p);
      p = p + Vec2{rng.uniform(8.0, 12.0), rng.uniform(-1.0, 1.0)};
    }
    w.obs.push_back(std::move(obs));
    w.target.push_back(std::move(target));
  }
  return w;
}

std::vector<NamedGradReport> run_gradcheck_suite(std::uint64_t seed)
{
  PrecisionScope f64(Precision::kFloat64);
  std::vector<NamedGradReport> out;
  Rng rng(seed);

  {
    ParamStore store;
    const LinearLayer layer = LinearLayer::create(store, "lin", 5, 4, rng);
    std::vector<Tensor> in = params_of(store);
    in.push_back(random_tensor({3, 5}, rng));
    const Tensor x = in.back();
    out.push_back({"linear", grad_check([&] { return l2norm(sigmoid(layer.forward(x))); }, in)});
  }
  {
    ParamStore store;
    const LstmCell cell = LstmCell::create(store, "lstm", 4, 8, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor x0 = random_tensor({2, 4}, rng);
    const Tensor x1 = random_tensor({2, 4}, rng);
    in.push_back(x0);
    in.push_back(x1);
    out.push_back({"lstm_step", grad_check([&] {
                     LstmState s = lstm_step(cell, cell.zero_state(2), x0);
                     s = lstm_step(cell, s, x1);
                     return add(sum(mul(s.h, s.h)), sum(s.c));
                   }, in)});
  }
  {
    ParamStore store;
    const AttentionHead head = AttentionHead::create(store, "att", 5, 6, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor q = random_tensor({1, 5}, rng);
    const Tensor k = random_tensor({3, 5}, rng);
    const Tensor r = constant_tensor({1, 3}, rng);
    in.push_back(q);
    in.push_back(k);
    out.push_back({"gat_scores", grad_check([&] { return sum(mul(gat_scores(q, k, head), r)); }, in)});
  }
  {
    ParamStore store;
    const MlpEncoder mlp = MlpEncoder::create(store, "mlp", {27, 6, 8}, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor x = random_tensor({2, 27}, rng);
    in.push_back(x);
    out.push_back({"mlp_forward", grad_check([&] { return l2norm(mlp_forward(mlp, x)); }, in)});
  }
  {
    ParamStore store;
    const AttentionHead head = AttentionHead::create(store, "spatial", 5, 6, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor h = random_tensor({4, 5}, rng);
    in.push_back(h);
    AdjacencyMask mask = AdjacencyMask::fully_connected({1, 2, 3, 4});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        mask.r[i * 4 + j] = i == j || rng.bernoulli(0.5);
      }
    }
    const Tensor r = constant_tensor({4, 5}, rng);
    out.push_back({"spatial_aggregate", grad_check([&] {
                     return sum(mul(spatial_aggregate(h, mask, head), r));
                   }, in)});
  }
  {
    ParamStore store;
    const TemporalAttention attn = TemporalAttention::create(store, "behavior", 5, 6, rng);
    std::vector<Tensor> in = params_of(store);
    std::vector<Tensor> xs;
    for (int t = 0; t < 4; ++t) {
      xs.push_back(random_tensor({3, 5}, rng));
      in.push_back(xs.back());
    }
    const Tensor r = constant_tensor({3, 5}, rng);
    out.push_back({"temporal_update", grad_check([&] {
                     BehaviorHistory history(2);
                     Tensor y;
                     for (const auto & x : xs) {
                       y = temporal_update(x, history, attn).output;
                     }
                     return sum(mul(y, r));
                   }, in)});
  }
  {
    ParamStore store;
    const MlpEncoder mlp = MlpEncoder::create(store, "light_mlp", {27, 6, 8}, rng);
    const LinearLayer proj = LinearLayer::create(store, "fuse", 16, 8, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor hs = random_tensor({2, 8}, rng);
    const Tensor seq = constant_tensor({2, 27}, rng);
    in.push_back(hs);
    out.push_back({"encode_lights+fuse", grad_check([&] {
                     return l2norm(fuse(hs, encode_lights(seq, mlp), proj));
                   }, in)});
  }
  {
    ParamStore store;
    const AttentionHead spatial = AttentionHead::create(store, "spatial", 8, 6, rng);
    const TemporalAttention behavior = TemporalAttention::create(store, "behavior", 8, 6, rng);
    const LstmCell decoder = LstmCell::create(store, "decoder", 16, 8, rng);
    const LinearLayer head = LinearLayer::create(store, "output_head", 8, 2, rng);
    std::vector<Tensor> in = params_of(store);
    const Tensor h = random_tensor({3, 8}, rng);
    const Tensor past = random_tensor({3, 8}, rng);
    in.push_back(h);
    in.push_back(past);
    AdjacencyMask mask = AdjacencyMask::fully_connected({1, 2, 3});
    mask.r[0 * 3 + 2] = 0;
    mask.r[2 * 3 + 1] = 0;
    out.push_back({"sdg+bdg+decoder", grad_check([&] {
                     BehaviorHistory history(2);
                     temporal_update(past, history, behavior);
                     const Tensor hs = spatial_aggregate(h, mask, spatial);
                     const Tensor hb = temporal_update(hs, history, behavior).output;
                     const LstmState s = decoder.step(concat({hb, h}), {h, h});
                     return l2norm(head.forward(s.h));
                   }, in)});
  }

  const TrajectoryWindow window = miniature_window(seed);
  const HyperParams base = miniature_hyperparams();
  const std::vector<std::vector<double>> noise = {
    draw_noise(base.noise_dim, derive_seed({seed, 1})), draw_noise(base.noise_dim, derive_seed({seed, 2}))};
  const char * labels[] = {"Ss+Bb+TLm+D", "Sg+Bb+TLm+D", "Ss+Bl+TLm+D", "Ss+Bb+TLl+D", "Ss+Bb+TLm"};
  for (const char * label : labels) {
    for (const bool lights : {true, false}) {
      if (!lights && std::string(label) != "Ss+Bb+TLm+D") {
        continue;
      }
      HyperParams hp = base;
      hp.ablation = Ablation::parse(label, lights);
      const Model model(hp, derive_seed({seed, 3}));
      const PreparedWindow pw = prepare_window(window, hp);
      std::vector<Tensor> in = params_of(model.generator());
      const std::string name = std::string("generator ") + label + (lights ? "" : " lights-off");
      out.push_back({name, grad_check([&] { return generator_loss(model, pw, noise).loss; }, in)});
      if (hp.ablation.discriminator) {
        std::vector<Tensor> fake;
        {
          NoGradScope ng;
          for (const auto & s : generator_loss(model, pw, noise).steps) {
            std::vector<std::size_t> rows = {0, 1};
            fake.push_back(embed(s, rows).detach());
          }
        }
        std::vector<Tensor> din = params_of(model.discriminator());
        const std::string dname = std::string("discriminator ") + label + (lights ? "" : " lights-off");
        out.push_back({dname, grad_check([&] { return discriminator_loss(model, pw, fake); }, din)});
      }
    }
  }
  return out;
}

}  // namespace tlpred
