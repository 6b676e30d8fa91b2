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


#include "tlpred/predictor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace tlpred
{

// ---- configuration ---------------------------------------------------------------------------

std::string Ablation::label() const
{
  std::string s = spatial == SpatialMode::kSdg ? "Ss" : "Sg";
  s += behavior == BehaviorMode::kBdg ? "+Bb" : "+Bl";
  s += light_encoder == LightEncoderKind::kMlp ? "+TLm" : "+TLl";
  if (discriminator) {
    s += "+D";
  }
  return s;
}

Ablation Ablation::parse(const std::string & label, bool lights)
{
  Ablation a;
  a.lights = lights;
  a.discriminator = false;
  bool seen_s = false;
  bool seen_b = false;
  bool seen_tl = false;
  std::stringstream ss(label);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    std::string t;
    for (char c : tok) {
      t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if ((t == "ss" || t == "sg") && !seen_s) {
      a.spatial = t == "ss" ? SpatialMode::kSdg : SpatialMode::kGlobal;
      seen_s = true;
    } else if ((t == "bb" || t == "bl") && !seen_b) {
      a.behavior = t == "bb" ? BehaviorMode::kBdg : BehaviorMode::kLstmChain;
      seen_b = true;
    } else if ((t == "tlm" || t == "tll") && !seen_tl) {
      a.light_encoder = t == "tlm" ? LightEncoderKind::kMlp : LightEncoderKind::kLstm;
      seen_tl = true;
    } else if (t == "d" && !a.discriminator) {
      a.discriminator = true;
    } else {
      throw std::invalid_argument("ablation label '" + label + "': unexpected token '" + tok + "'");
    }
  }
  if (!seen_s || !seen_b || !seen_tl) {
    throw std::invalid_argument(
      "ablation label '" + label + "' must name S{g,s}, B{l,b} and TL{l,m}");
  }
  return a;
}

void HyperParams::validate() const
{
  const std::pair<const char *, std::size_t> sizes[] = {
    {"embed_dim", embed_dim},   {"hidden_dim", hidden_dim},       {"input_dim", input_dim},
    {"attn_dim", attn_dim},     {"light_hidden", light_hidden},   {"noise_dim", noise_dim},
    {"batch", batch},           {"k_samples", k_samples},         {"train_samples", train_samples},
    {"obs_len", obs_len},       {"pred_len", pred_len},           {"k_window", k_window}};
  for (const auto & [name, v] : sizes) {
    if (v == 0) {
      throw std::invalid_argument(std::string("hyperparameter ") + name + " must be positive");
    }
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("hyperparameter lr must be finite and >= 0");
  }
  if (!(adv_weight >= 0.0) || !std::isfinite(adv_weight)) {
    throw std::invalid_argument("hyperparameter adv_weight must be finite and >= 0");
  }
  if (!(position_scale > 0.0) || !std::isfinite(position_scale)) {
    throw std::invalid_argument("hyperparameter position_scale must be positive");
  }
  sdg.validate();
}

nlohmann::json HyperParams::to_json() const
{
  return {
    {"embed_dim", embed_dim},
    {"hidden_dim", hidden_dim},
    {"input_dim", input_dim},
    {"attn_dim", attn_dim},
    {"light_hidden", light_hidden},
    {"noise_dim", noise_dim},
    {"lr", lr},
    {"batch", batch},
    {"k_samples", k_samples},
    {"train_samples", train_samples},
    {"obs_len", obs_len},
    {"pred_len", pred_len},
    {"k_window", k_window},
    {"epochs", epochs},
    {"adv_weight", adv_weight},
    {"position_scale", position_scale},
    {"variety_mode", variety_mode == VarietyMode::kSequenceNorm ? "sequence_norm" : "step_sum"},
    {"float32", float32},
    {"seed", seed},
    {"sdg",
     {{"theta_road", sdg.theta_road},
      {"theta_intersection", sdg.theta_intersection},
      {"d_max", sdg.d_max},
      {"lane_rule", sdg.lane_rule == LaneRule::kDirectionGroup ? "direction_group" : "literal"}}},
    {"ablation", ablation.label()},
    {"lights", ablation.lights},
  };
}

HyperParams HyperParams::from_json(const nlohmann::json & j)
{
  HyperParams hp;
  const auto get = [&](const char * key, auto & field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    }
  };
  get("embed_dim", hp.embed_dim);
  get("hidden_dim", hp.hidden_dim);
  get("input_dim", hp.input_dim);
  get("attn_dim", hp.attn_dim);
  get("light_hidden", hp.light_hidden);
  get("noise_dim", hp.noise_dim);
  get("lr", hp.lr);
  get("batch", hp.batch);
  get("k_samples", hp.k_samples);
  get("train_samples", hp.train_samples);
  get("obs_len", hp.obs_len);
  get("pred_len", hp.pred_len);
  get("k_window", hp.k_window);
  get("epochs", hp.epochs);
  get("adv_weight", hp.adv_weight);
  get("position_scale", hp.position_scale);
  get("float32", hp.float32);
  get("seed", hp.seed);
  if (j.contains("variety_mode")) {
    const auto m = j.at("variety_mode").get<std::string>();
    if (m != "sequence_norm" && m != "step_sum") {
      throw std::invalid_argument("variety_mode must be sequence_norm or step_sum");
    }
    hp.variety_mode = m == "sequence_norm" ? VarietyMode::kSequenceNorm : VarietyMode::kStepSum;
  }
  if (j.contains("sdg")) {
    const auto & s = j.at("sdg");
    hp.sdg.theta_road = s.value("theta_road", hp.sdg.theta_road);
    hp.sdg.theta_intersection = s.value("theta_intersection", hp.sdg.theta_intersection);
    hp.sdg.d_max = s.value("d_max", hp.sdg.d_max);
    const auto rule = s.value("lane_rule", std::string("direction_group"));
    if (rule != "direction_group" && rule != "literal") {
      throw std::invalid_argument("lane_rule must be direction_group or literal");
    }
    hp.sdg.lane_rule = rule == "literal" ? LaneRule::kLiteral : LaneRule::kDirectionGroup;
  }
  const bool lights = j.value("lights", true);
  hp.ablation = Ablation::parse(j.value("ablation", hp.ablation.label()), lights);
  hp.validate();
  return hp;
}

// ---- window preparation ----------------------------------------------------------------------

PreparedWindow prepare_window(const TrajectoryWindow & w, const HyperParams & hp)
{
  validate_window(w, hp.obs_len, hp.pred_len);
  const std::size_t n = w.num_agents();
  if (n == 0) {
    throw std::invalid_argument("prepare_window: window has no agents");
  }
  const double inv = 1.0 / hp.position_scale;
  PreparedWindow pw;
  pw.agents = n;
  std::vector<std::vector<Vec2>> tracks(n);
  for (std::size_t t = 0; t < hp.obs_len; ++t) {
    std::vector<double> disp(2 * n, 0.0);
    std::vector<double> prefix;
    std::vector<double> frame;
    std::vector<AgentRecord> records;
    std::vector<Vec2> headings;
    for (std::size_t a = 0; a < n; ++a) {
      const AgentRecord & r = w.obs[a][t];
      if (t > 0) {
        disp[2 * a] = (r.x - w.obs[a][t - 1].x) * inv;
        disp[2 * a + 1] = (r.y - w.obs[a][t - 1].y) * inv;
      }
      tracks[a].push_back(r.position());
      records.push_back(r);
      headings.push_back(heading_from_track(tracks[a]));
      const auto seq = light_sequence_features(w.obs[a], t);
      prefix.insert(prefix.end(), seq.begin(), seq.end());
      const auto f = light_frame_features(r);
      frame.insert(frame.end(), f.begin(), f.end());
    }
    pw.obs_disp.push_back(Tensor::matrix(n, 2, std::move(disp)));
    pw.masks.push_back(
      hp.ablation.spatial == SpatialMode::kSdg
        ? build_adjacency(records, headings, hp.sdg, w.map.get())
        : AdjacencyMask::fully_connected(w.agent_ids));
    pw.light_prefix.push_back(Tensor::matrix(n, hp.light_features(), std::move(prefix)));
    pw.light_frame.push_back(Tensor::matrix(n, kLightFeaturesPerFrame, std::move(frame)));
  }
  pw.light_full = pw.light_prefix.back();
  std::vector<double> offset(2 * hp.pred_len * n);
  for (std::size_t a = 0; a < n; ++a) {
    pw.last_position.push_back(w.obs[a].back().position());
  }
  for (std::size_t s = 0; s < hp.pred_len; ++s) {
    std::vector<double> disp(2 * n);
    for (std::size_t a = 0; a < n; ++a) {
      const Vec2 prev = s == 0 ? pw.last_position[a] : w.target[a][s - 1];
      const Vec2 cur = w.target[a][s];
      disp[2 * a] = (cur.x - prev.x) * inv;
      disp[2 * a + 1] = (cur.y - prev.y) * inv;
      offset[a * 2 * hp.pred_len + 2 * s] = cur.x - pw.last_position[a].x;
      offset[a * 2 * hp.pred_len + 2 * s + 1] = cur.y - pw.last_position[a].y;
    }
    pw.target_disp.push_back(Tensor::matrix(n, 2, std::move(disp)));
  }
  pw.target_offset = Tensor::matrix(n, 2 * hp.pred_len, std::move(offset));
  return pw;
}

// ---- model -----------------------------------------------------------------------------------

Model::Model(const HyperParams & hp, std::uint64_t init_seed) : hp_(hp)
{
  hp_.validate();
  Rng rng(init_seed);
  const std::size_t e = hp_.embed_dim;
  const std::size_t h = hp_.hidden_dim;
  const std::size_t d = hp_.state_dim();
  const Ablation & ab = hp_.ablation;

  pos_embed_ = LinearLayer::create(gen_, "pos_embed", 2, e, rng);
  encoder_ = LstmCell::create(gen_, "encoder", e, h, rng);
  spatial_ = AttentionHead::create(gen_, "spatial", h, hp_.attn_dim, rng);
  if (ab.lights) {
    if (ab.light_encoder == LightEncoderKind::kMlp) {
      light_mlp_ = MlpEncoder::create(gen_, "light_mlp", {hp_.light_features(), hp_.light_hidden, h}, rng);
    } else {
      light_lstm_ = LstmCell::create(gen_, "light_lstm", kLightFeaturesPerFrame, h, rng);
    }
    fuse_ = LinearLayer::create(gen_, "fuse", 2 * h, hp_.input_dim, rng);
  }
  if (ab.behavior == BehaviorMode::kBdg) {
    behavior_ = TemporalAttention::create(gen_, "behavior", d, hp_.attn_dim, rng);
  } else {
    behavior_lstm_ = LstmCell::create(gen_, "behavior_lstm", d, d, rng);
  }
  decoder_ = LstmCell::create(gen_, "decoder", d + h + hp_.noise_dim + e, h, rng);
  output_head_ = LinearLayer::create(gen_, "output_head", h, 2, rng);

  if (ab.discriminator) {
    disc_embed_ = LinearLayer::create(disc_, "disc.embed", 2, e, rng);
    disc_lstm_ = LstmCell::create(disc_, "disc.lstm", e, h, rng);
    if (ab.lights) {
      disc_light_ =
        MlpEncoder::create(disc_, "disc.light_mlp", {hp_.light_features(), hp_.light_hidden, h}, rng);
    }
    disc_head_ = LinearLayer::create(disc_, "disc.head", ab.lights ? 2 * h : h, 1, rng);
  }
  for (const auto * store : {&gen_, &disc_}) {
    for (const auto & p : store->params()) {
      all_.adopt(p.name, p.tensor);
    }
  }
}

std::unique_ptr<Model> Model::clone() const
{
  auto m = std::make_unique<Model>(hp_, 0);
  m->all_.copy_values_from(all_);
  return m;
}

Model::Encoding Model::encode(const PreparedWindow & pw) const
{
  const std::size_t n = pw.agents;
  const Ablation & ab = hp_.ablation;
  LstmState enc = encoder_.zero_state(n);
  LstmState light;
  if (ab.lights && ab.light_encoder == LightEncoderKind::kLstm) {
    light = light_lstm_.zero_state(n);
  }
  BehaviorHistory history(hp_.k_window);
  LstmState chain;
  if (ab.behavior == BehaviorMode::kLstmChain) {
    chain = behavior_lstm_.zero_state(n);
  }
  Tensor behavior;
  for (std::size_t t = 0; t < pw.obs_disp.size(); ++t) {
    enc = encoder_.step(embed_position(pw.obs_disp[t], pos_embed_), enc);
    Tensor state = spatial_aggregate(enc.h, pw.masks[t], spatial_);
    if (ab.lights) {
      Tensor lh;
      if (ab.light_encoder == LightEncoderKind::kMlp) {
        lh = encode_lights(pw.light_prefix[t], light_mlp_);
      } else {
        light = light_lstm_.step(pw.light_frame[t], light);
        lh = light.h;
      }
      state = fuse(state, lh, fuse_);
    }
    if (ab.behavior == BehaviorMode::kBdg) {
      behavior = temporal_update(state, history, behavior_).output;
    } else {
      chain = behavior_lstm_.step(state, chain);
      behavior = chain.h;
    }
  }
  return {behavior, enc};
}

std::vector<Tensor> Model::decode(
  const PreparedWindow & pw, const Encoding & enc, const std::vector<std::vector<double>> & noise) const
{
  const std::size_t n = pw.agents;
  const std::size_t k = noise.size();
  if (k == 0) {
    throw std::invalid_argument("decode: at least one noise sample required");
  }
  std::vector<std::size_t> rows;
  std::vector<double> z;
  rows.reserve(n * k);
  for (std::size_t s = 0; s < k; ++s) {
    if (noise[s].size() != hp_.noise_dim) {
      throw std::invalid_argument("decode: noise length must equal noise_dim");
    }
    for (std::size_t a = 0; a < n; ++a) {
      rows.push_back(a);
      z.insert(z.end(), noise[s].begin(), noise[s].end());
    }
  }
  const Tensor context = concat(
    {embed(enc.behavior, rows), embed(enc.encoder.h, rows),
     Tensor::matrix(n * k, hp_.noise_dim, std::move(z))});
  LstmState state{embed(enc.encoder.h, rows), embed(enc.encoder.c, rows)};
  Tensor prev = embed(pw.obs_disp.back(), rows);
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < hp_.pred_len; ++s) {
    state = decoder_.step(concat({context, embed_position(prev, pos_embed_)}), state);
    prev = output_head_.forward(state.h);
    out.push_back(prev);
  }
  return out;
}

Tensor Model::discriminator_logits(const std::vector<Tensor> & steps, const Tensor & light_full) const
{
  if (!hp_.ablation.discriminator) {
    throw std::logic_error("discriminator is disabled in this configuration");
  }
  if (steps.size() != hp_.obs_len + hp_.pred_len) {
    throw std::invalid_argument(
      "discriminate: expected " + std::to_string(hp_.obs_len + hp_.pred_len) + " steps, got " +
      std::to_string(steps.size()));
  }
  LstmState state = disc_lstm_.zero_state(steps.front().rows());
  for (const auto & s : steps) {
    state = disc_lstm_.step(embed_position(s, disc_embed_), state);
  }
  Tensor features = state.h;
  if (hp_.ablation.lights) {
    features = concat({features, mlp_forward(disc_light_, light_full)});
  }
  return disc_head_.forward(features);
}

// ---- rollouts and losses ---------------------------------------------------------------------

std::vector<double> draw_noise(std::size_t dim, std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> z(dim);
  for (double & v : z) {
    v = rng.normal();
  }
  return z;
}

namespace
{

PrecisionScope precision_for(const HyperParams & hp)
{
  return PrecisionScope(hp.float32 ? Precision::kFloat32 : Precision::kFloat64);
}

/// Integrates decoded displacements into absolute positions, sample-major.
std::vector<Trajectories> integrate(
  const std::vector<Tensor> & disp, const PreparedWindow & pw, std::size_t samples, double scale)
{
  const std::size_t n = pw.agents;
  std::vector<Trajectories> out(samples, Trajectories(n));
  for (std::size_t k = 0; k < samples; ++k) {
    for (std::size_t a = 0; a < n; ++a) {
      Vec2 p = pw.last_position[a];
      const std::size_t row = k * n + a;
      for (const auto & d : disp) {
        p = {p.x + d.at(row, 0) * scale, p.y + d.at(row, 1) * scale};
        out[k][a].push_back(p);
      }
    }
  }
  return out;
}

/// Pixel offsets from the last observed position: rows = samples * agents, cols = 2 * pred_len.
Tensor offsets_from(const std::vector<Tensor> & disp, double scale)
{
  std::vector<Tensor> cols;
  Tensor cum;
  for (const auto & d : disp) {
    const Tensor step = scalar_mul(d, scale);
    cum = cum.defined() ? add(cum, step) : step;
    cols.push_back(cum);
  }
  return concat(cols);
}

double row_distance(
  std::span<const double> a, std::span<const double> b, std::size_t row, std::size_t cols,
  VarietyMode mode)
{
  double acc = 0.0;
  if (mode == VarietyMode::kSequenceNorm) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = a[row * cols + c] - b[row * cols + c];
      acc += e * e;
    }
    return std::sqrt(acc);
  }
  for (std::size_t c = 0; c + 1 < cols; c += 2) {
    const double ex = a[row * cols + c] - b[row * cols + c];
    const double ey = a[row * cols + c + 1] - b[row * cols + c + 1];
    acc += std::sqrt(ex * ex + ey * ey);
  }
  return acc;
}

}  // namespace

Trajectories forward_rollout(const Model & model, const TrajectoryWindow & w, const std::vector<double> & noise)
{
  const auto scope = precision_for(model.hyper());
  const PreparedWindow pw = prepare_window(w, model.hyper());
  const auto enc = model.encode(pw);
  const auto disp = model.decode(pw, enc, {noise});
  return integrate(disp, pw, 1, model.hyper().position_scale).front();
}

std::vector<Trajectories> predict_k(
  const Model & model, const TrajectoryWindow & w, std::size_t k, std::uint64_t seed)
{
  if (k == 0) {
    throw std::invalid_argument("predict_k: K must be positive");
  }
  const auto scope = precision_for(model.hyper());
  NoGradScope no_grad;
  const PreparedWindow pw = prepare_window(w, model.hyper());
  const auto enc = model.encode(pw);
  std::vector<std::vector<double>> noise;
  for (std::size_t s = 0; s < k; ++s) {
    noise.push_back(draw_noise(model.hyper().noise_dim, derive_seed({seed, s})));
  }
  const auto disp = model.decode(pw, enc, noise);
  return integrate(disp, pw, k, model.hyper().position_scale);
}

Tensor variety_loss(const Tensor & gt, const std::vector<Tensor> & preds, VarietyMode mode)
{
  if (preds.empty()) {
    throw std::invalid_argument("variety_loss: K must be at least 1");
  }
  if (gt.rank() != 2 || gt.rows() == 0) {
    throw ShapeError("variety_loss: ground truth must be agents x 2T, got " + to_string(gt.shape()));
  }
  for (const auto & p : preds) {
    if (p.shape() != gt.shape()) {
      throw ShapeError("variety_loss: prediction " + to_string(p.shape()) + " vs " + to_string(gt.shape()));
    }
  }
  const std::size_t n = gt.rows();
  const std::size_t cols = gt.cols();
  std::vector<Tensor> terms;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const double d = row_distance(preds[k].data(), gt.data(), a, cols, mode);
      if (k == 0 || d < best_d) {
        best = k;
        best_d = d;
      }
    }
    const std::size_t row[1] = {a};
    const Tensor err = sub(embed(preds[best], row), embed(gt, row));
    if (mode == VarietyMode::kSequenceNorm) {
      terms.push_back(l2norm(err));
    } else {
      for (std::size_t c = 0; c + 1 < cols; c += 2) {
        terms.push_back(l2norm(slice(err, c, c + 2)));
      }
    }
  }
  return scalar_mul(sum(concat(terms)), 1.0 / static_cast<double>(n));
}

std::vector<double> discriminate(const Model & model, const TrajectoryWindow & w, const Trajectories & future)
{
  const HyperParams & hp = model.hyper();
  if (future.size() != w.num_agents()) {
    throw std::invalid_argument("discriminate: one future track per agent required");
  }
  for (const auto & f : future) {
    if (f.size() != hp.pred_len) {
      throw std::invalid_argument(
        "discriminate: trajectory length must be " + std::to_string(hp.obs_len + hp.pred_len));
    }
  }
  const auto scope = precision_for(hp);
  NoGradScope no_grad;
  const PreparedWindow pw = prepare_window(w, hp);
  std::vector<Tensor> steps = pw.obs_disp;
  const double inv = 1.0 / hp.position_scale;
  for (std::size_t s = 0; s < hp.pred_len; ++s) {
    std::vector<double> d;
    for (std::size_t a = 0; a < pw.agents; ++a) {
      const Vec2 prev = s == 0 ? pw.last_position[a] : future[a][s - 1];
      d.push_back((future[a][s].x - prev.x) * inv);
      d.push_back((future[a][s].y - prev.y) * inv);
    }
    steps.push_back(Tensor::matrix(pw.agents, 2, std::move(d)));
  }
  const Tensor p = sigmoid(model.discriminator_logits(steps, pw.light_full));
  return {p.data().begin(), p.data().end()};
}

GeneratorLoss generator_loss(
  const Model & model, const PreparedWindow & pw, const std::vector<std::vector<double>> & noise)
{
  const HyperParams & hp = model.hyper();
  const auto enc = model.encode(pw);
  GeneratorLoss g;
  g.steps = model.decode(pw, enc, noise);
  g.offsets = offsets_from(g.steps, hp.position_scale);
  const std::size_t n = pw.agents;
  std::vector<Tensor> preds;
  for (std::size_t s = 0; s < noise.size(); ++s) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), s * n);
    preds.push_back(embed(g.offsets, rows));
  }
  g.loss = variety_loss(pw.target_offset, preds, hp.variety_mode);
  if (hp.ablation.discriminator && hp.adv_weight > 0.0) {
    std::vector<std::size_t> first(n);
    std::iota(first.begin(), first.end(), 0);
    std::vector<Tensor> steps = pw.obs_disp;
    for (const auto & d : g.steps) {
      steps.push_back(embed(d, first));
    }
    const Tensor adv = mean(bce_with_logits(model.discriminator_logits(steps, pw.light_full), 1.0));
    g.loss = add(g.loss, scalar_mul(adv, hp.adv_weight));
  }
  return g;
}

Tensor discriminator_loss(const Model & model, const PreparedWindow & pw, const std::vector<Tensor> & fake)
{
  std::vector<Tensor> real = pw.obs_disp;
  real.insert(real.end(), pw.target_disp.begin(), pw.target_disp.end());
  std::vector<Tensor> gen = pw.obs_disp;
  gen.insert(gen.end(), fake.begin(), fake.end());
  return add(
    mean(bce_with_logits(model.discriminator_logits(real, pw.light_full), 1.0)),
    mean(bce_with_logits(model.discriminator_logits(gen, pw.light_full), 0.0)));
}

// ---- optimizer -------------------------------------------------------------------------------

Adam::Adam(ParamStore & params, double lr, double beta1, double beta2, double eps)
: params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
  m_(params.total_size(), 0.0), v_(params.total_size(), 0.0)
{
}

void Adam::step(std::span<const double> grads)
{
  if (grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: gradient size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const bool f32 = precision() == Precision::kFloat32;
  std::size_t off = 0;
  for (const auto & p : params_.params()) {
    auto values = p.tensor.impl()->data.data();
    const std::size_t n = p.tensor.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = off + i;
      const double g = grads[k];
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g * g;
      const double update = lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
      double next = values[i] - update;
      if (f32) {
        next = static_cast<double>(static_cast<float>(next));
      }
      values[i] = next;
    }
    off += n;
  }
  if (!params_.all_finite()) {
    throw TrainingError("Adam::step produced a non-finite parameter");
  }
}

// ---- training --------------------------------------------------------------------------------

std::size_t workers_from_env()
{
  const char * env = std::getenv("TLPRED_WORKERS");
  if (env == nullptr || *env == '\0') {
    return 1;
  }
  char * end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    throw std::invalid_argument("TLPRED_WORKERS must be a positive integer");
  }
  return static_cast<std::size_t>(v);
}

namespace
{

struct GenResult
{
  std::vector<double> grads;
  double loss = 0.0;
  double ade_sum = 0.0;  // summed over agents
  std::vector<Tensor> fake;  // detached displacement steps of sample 0
};

struct DiscResult
{
  std::vector<double> grads;
  double loss = 0.0;
};

GenResult generator_pass(
  Model & m, const PreparedWindow & pw, std::size_t batch_size,
  const std::vector<std::vector<double>> & noise)
{
  const HyperParams & hp = m.hyper();
  m.all().zero_grad();
  Tape tape;
  TapeScope scope(tape);
  const GeneratorLoss g = generator_loss(m, pw, noise);
  const std::size_t n = pw.agents;
  const std::size_t k = noise.size();

  GenResult r;
  std::vector<std::size_t> first(n);
  std::iota(first.begin(), first.end(), 0);
  for (const auto & d : g.steps) {
    r.fake.push_back(embed(d, first).detach());
  }
  r.loss = g.loss.item();
  tape.backward(scalar_mul(g.loss, 1.0 / static_cast<double>(batch_size)));
  r.grads = m.generator().flat_grads();

  const std::size_t cols = 2 * hp.pred_len;
  const auto off = g.offsets.data();
  const auto gt = pw.target_offset.data();
  for (std::size_t a = 0; a < n; ++a) {
    double best = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      double ade = 0.0;
      for (std::size_t t = 0; t < hp.pred_len; ++t) {
        const std::size_t c = (s * n + a) * cols + 2 * t;
        ade += std::hypot(off[c] - gt[a * cols + 2 * t], off[c + 1] - gt[a * cols + 2 * t + 1]);
      }
      ade /= static_cast<double>(hp.pred_len);
      best = s == 0 ? ade : std::min(best, ade);
    }
    r.ade_sum += best;
  }
  return r;
}

DiscResult discriminator_pass(
  Model & m, const PreparedWindow & pw, std::size_t batch_size, const std::vector<Tensor> & fake)
{
  m.all().zero_grad();
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = discriminator_loss(m, pw, fake);
  DiscResult r;
  r.loss = loss.item();
  tape.backward(scalar_mul(loss, 1.0 / static_cast<double>(batch_size)));
  r.grads = m.discriminator().flat_grads();
  return r;
}

/// Runs `job(slot, model)` for every slot; slot i goes to worker i % workers.
template <typename Job>
void run_slots(std::vector<std::unique_ptr<Model>> & models, std::size_t slots, bool f32, Job job)
{
  const std::size_t workers = std::min(models.size(), std::max<std::size_t>(slots, 1));
  std::vector<std::exception_ptr> errors(workers);
  const auto body = [&](std::size_t w) {
    try {
      PrecisionScope ps(f32 ? Precision::kFloat32 : Precision::kFloat64);
      for (std::size_t i = w; i < slots; i += workers) {
        job(i, *models[w]);
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
}

std::string describe_window(const TrajectoryWindow & w)
{
  std::string s = "window start_frame=" + std::to_string(w.start_frame) + " agents=[";
  for (std::size_t a = 0; a < w.agent_ids.size(); ++a) {
    s += (a ? "," : "") + std::to_string(w.agent_ids[a]);
  }
  return s + "]";
}

}  // namespace

std::vector<EpochStats> train(
  Model & model, const std::vector<TrajectoryWindow> & windows, const TrainOptions & options)
{
  if (windows.empty()) {
    throw std::invalid_argument("train: dataset has no windows");
  }
  const HyperParams & hp = model.hyper();
  const bool f32 = hp.float32;
  const auto scope = precision_for(hp);

  std::vector<PreparedWindow> prepared;
  prepared.reserve(windows.size());
  for (const auto & w : windows) {
    prepared.push_back(prepare_window(w, hp));
  }
  std::size_t total_agents = 0;
  for (const auto & pw : prepared) {
    total_agents += pw.agents;
  }

  Adam gen_opt(model.generator(), hp.lr);
  Adam disc_opt(model.discriminator(), hp.lr);
  std::vector<std::unique_ptr<Model>> workers;
  for (std::size_t w = 0; w < std::max<std::size_t>(options.workers, 1); ++w) {
    workers.push_back(model.clone());
  }

  std::vector<std::size_t> order(windows.size());
  std::vector<EpochStats> curve;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed({hp.seed, 0x5348u, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    EpochStats stats;
    stats.epoch = epoch;
    double ade_sum = 0.0;
    for (std::size_t begin = 0, b = 0; begin < order.size(); begin += hp.batch, ++b) {
      const std::size_t end = std::min(order.size(), begin + hp.batch);
      const std::size_t count = end - begin;
      for (auto & w : workers) {
        w->all().copy_values_from(model.all());
      }
      std::vector<GenResult> gen(count);
      try {
        run_slots(workers, count, f32, [&](std::size_t i, Model & m) {
          const std::size_t id = order[begin + i];
          std::vector<std::vector<double>> noise;
          for (std::size_t s = 0; s < hp.train_samples; ++s) {
            noise.push_back(draw_noise(hp.noise_dim, derive_seed({hp.seed, epoch, b, id, s})));
          }
          gen[i] = generator_pass(m, prepared[id], count, noise);
        });
      } catch (const std::exception & e) {
        std::string where;
        for (std::size_t i = begin; i < end; ++i) {
          where += "\n  " + describe_window(windows[order[i]]);
        }
        throw TrainingError(
          "non-finite or invalid value in generator step (epoch " + std::to_string(epoch) +
          ", batch " + std::to_string(b) + "): " + e.what() + "\nbatch contents:" + where);
      }
      std::vector<double> grad(model.generator().total_size(), 0.0);
      for (const auto & r : gen) {
        if (!std::isfinite(r.loss)) {
          throw TrainingError("non-finite generator loss in epoch " + std::to_string(epoch));
        }
        for (std::size_t k = 0; k < grad.size(); ++k) {
          grad[k] += r.grads[k];
        }
        stats.gen_loss += r.loss;
        ade_sum += r.ade_sum;
      }
      gen_opt.step(grad);

      if (hp.ablation.discriminator) {
        std::vector<DiscResult> disc(count);
        run_slots(workers, count, f32, [&](std::size_t i, Model & m) {
          disc[i] = discriminator_pass(m, prepared[order[begin + i]], count, gen[i].fake);
        });
        std::vector<double> dgrad(model.discriminator().total_size(), 0.0);
        for (const auto & r : disc) {
          if (!std::isfinite(r.loss)) {
            throw TrainingError("non-finite discriminator loss in epoch " + std::to_string(epoch));
          }
          for (std::size_t k = 0; k < dgrad.size(); ++k) {
            dgrad[k] += r.grads[k];
          }
          stats.disc_loss += r.loss;
        }
        disc_opt.step(dgrad);
      }
    }
    stats.gen_loss /= static_cast<double>(windows.size());
    stats.disc_loss /= static_cast<double>(windows.size());
    stats.train_ade = ade_sum / static_cast<double>(total_agents);
    curve.push_back(stats);
    if (options.on_epoch) {
      options.on_epoch(stats);
    }
  }
  return curve;
}

void write_loss_csv(const std::filesystem::path & path, const std::vector<EpochStats> & curve)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "epoch,gen_loss,disc_loss,train_ade\n";
  for (const auto & s : curve) {
    out << s.epoch << ',' << format_number(s.gen_loss) << ',' << format_number(s.disc_loss) << ','
        << format_number(s.train_ade) << '\n';
  }
}

void save_checkpoint(const Model & model, const std::filesystem::path & dir)
{
  std::filesystem::create_directories(dir);
  model.all().save(dir / "params.bin", dir / "manifest.json");
  std::ofstream hp(dir / "hyperparams.json");
  if (!hp) {
    throw std::runtime_error("cannot write " + (dir / "hyperparams.json").string());
  }
  hp << model.hyper().to_json().dump(2) << '\n';
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path & dir)
{
  std::ifstream in(dir / "hyperparams.json");
  if (!in) {
    throw std::runtime_error("cannot read " + (dir / "hyperparams.json").string());
  }
  const HyperParams hp = HyperParams::from_json(nlohmann::json::parse(in));
  auto model = std::make_unique<Model>(hp, 0);
  model->all().load(dir / "params.bin", dir / "manifest.json");
  return model;
}

}  // namespace tlpred
