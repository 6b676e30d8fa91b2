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


#ifndef TLPRED__PREDICTOR_HPP_
#define TLPRED__PREDICTOR_HPP_

#include "tlpred/bdg.hpp"
#include "tlpred/data_model.hpp"
#include "tlpred/layers.hpp"
#include "tlpred/sdg.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tlpred
{

enum class SpatialMode { kGlobal, kSdg };
enum class BehaviorMode { kLstmChain, kBdg };
enum class LightEncoderKind { kLstm, kMlp };
enum class VarietyMode { kSequenceNorm, kStepSum };

/// Module switches. `label()` uses the compact form `Ss+Bb+TLm+D`.
struct Ablation
{
  SpatialMode spatial = SpatialMode::kSdg;
  BehaviorMode behavior = BehaviorMode::kBdg;
  LightEncoderKind light_encoder = LightEncoderKind::kMlp;
  bool discriminator = true;
  bool lights = true;

  std::string label() const;
  /// Parses `S{g,s}+B{l,b}+TL{l,m}[+D]`; `lights` is left untouched.
  static Ablation parse(const std::string & label, bool lights = true);
  friend bool operator==(const Ablation &, const Ablation &) = default;
};

struct HyperParams
{
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t input_dim = 64;  // width of the fused light-aware state
  std::size_t attn_dim = 64;
  std::size_t light_hidden = 64;
  std::size_t noise_dim = 8;
  double lr = 0.01;
  std::size_t batch = 64;
  std::size_t k_samples = 20;      // best-of-K at evaluation
  std::size_t train_samples = 20;  // K inside the variety loss
  std::size_t obs_len = 8;
  std::size_t pred_len = 12;
  std::size_t k_window = 6;
  std::size_t epochs = 10;
  double adv_weight = 1.0;
  double position_scale = 10.0;  // pixels per model unit
  VarietyMode variety_mode = VarietyMode::kSequenceNorm;
  bool float32 = false;
  std::uint64_t seed = 1;
  SdgParams sdg;
  Ablation ablation;

  std::size_t light_features() const { return obs_len * kLightFeaturesPerFrame; }
  std::size_t state_dim() const { return ablation.lights ? input_dim : hidden_dim; }

  /// Throws std::invalid_argument on the first non-positive or inconsistent field.
  void validate() const;
  nlohmann::json to_json() const;
  static HyperParams from_json(const nlohmann::json & j);
};

/// Everything about a window that does not depend on learnable weights.
struct PreparedWindow
{
  std::size_t agents = 0;
  std::vector<Tensor> obs_disp;            // obs_len tensors, agents x 2, model units
  std::vector<AdjacencyMask> masks;        // obs_len masks
  std::vector<Tensor> light_prefix;        // obs_len tensors, agents x (obs_len * 9)
  std::vector<Tensor> light_frame;         // obs_len tensors, agents x 9
  Tensor light_full;                       // agents x (obs_len * 9)
  std::vector<Tensor> target_disp;         // pred_len tensors, agents x 2, model units
  Tensor target_offset;                    // agents x (2 * pred_len), pixels from last observation
  std::vector<Vec2> last_position;
};

PreparedWindow prepare_window(const TrajectoryWindow & w, const HyperParams & hp);

class Model
{
public:
  Model(const HyperParams & hp, std::uint64_t init_seed);
  Model(const Model &) = delete;
  Model & operator=(const Model &) = delete;

  std::unique_ptr<Model> clone() const;

  const HyperParams & hyper() const { return hp_; }
  ParamStore & generator() { return gen_; }
  const ParamStore & generator() const { return gen_; }
  ParamStore & discriminator() { return disc_; }
  const ParamStore & discriminator() const { return disc_; }
  /// Generator followed by discriminator parameters; used for checkpoints.
  ParamStore & all() { return all_; }
  const ParamStore & all() const { return all_; }

  struct Encoding
  {
    Tensor behavior;  // agents x state_dim, last observed behavior state
    LstmState encoder;
  };
  Encoding encode(const PreparedWindow & pw) const;

  /// Decodes one rollout per noise row-block. `noise` holds one noise_dim vector per sample;
  /// rows of the returned displacements are ordered sample-major (sample * agents + agent).
  std::vector<Tensor> decode(
    const PreparedWindow & pw, const Encoding & enc, const std::vector<std::vector<double>> & noise) const;

  /// Logits for trajectories given as obs_len + pred_len displacement steps (rows x 2 each).
  Tensor discriminator_logits(const std::vector<Tensor> & steps, const Tensor & light_full) const;

private:
  HyperParams hp_;
  ParamStore gen_;
  ParamStore disc_;
  ParamStore all_;

  LinearLayer pos_embed_;
  LstmCell encoder_;
  AttentionHead spatial_;
  MlpEncoder light_mlp_;
  LstmCell light_lstm_;
  LinearLayer fuse_;
  TemporalAttention behavior_;
  LstmCell behavior_lstm_;
  LstmCell decoder_;
  LinearLayer output_head_;

  LinearLayer disc_embed_;
  LstmCell disc_lstm_;
  MlpEncoder disc_light_;
  LinearLayer disc_head_;
};

/// One rollout: pred_len absolute positions per agent.
using Trajectories = std::vector<std::vector<Vec2>>;  // [agent][t]

/// Single rollout with an explicit noise vector.
Trajectories forward_rollout(const Model & model, const TrajectoryWindow & w, const std::vector<double> & noise);

/// K rollouts with noise drawn from `seed`; sample k uses the same noise whatever K is.
std::vector<Trajectories> predict_k(
  const Model & model, const TrajectoryWindow & w, std::size_t k, std::uint64_t seed);

std::vector<double> draw_noise(std::size_t dim, std::uint64_t seed);

/// gt: agents x 2T; preds: K tensors shaped like gt. Mean over agents of the minimum over K of the
/// error norm (or of the summed per-step norms).
Tensor variety_loss(const Tensor & gt, const std::vector<Tensor> & preds, VarietyMode mode = VarietyMode::kSequenceNorm);

struct GeneratorLoss
{
  Tensor loss;                // variety + adv_weight * adversarial, pixels
  Tensor offsets;             // (samples * agents) x 2T pixel offsets from the last observation
  std::vector<Tensor> steps;  // decoded displacement steps, model units, sample-major rows
};

/// Builds the generator objective for one window on the active tape.
GeneratorLoss generator_loss(
  const Model & model, const PreparedWindow & pw, const std::vector<std::vector<double>> & noise);

/// BCE on the real continuation and on `fake` (pred_len steps, agents x 2, model units).
Tensor discriminator_loss(const Model & model, const PreparedWindow & pw, const std::vector<Tensor> & fake);

/// Real/fake probability for each agent of a window, given absolute positions of all
/// obs_len + pred_len frames.
std::vector<double> discriminate(const Model & model, const TrajectoryWindow & w, const Trajectories & future);

class Adam
{
public:
  Adam(ParamStore & params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<const double> grads);
  std::size_t steps() const { return t_; }

private:
  ParamStore & params_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct EpochStats
{
  std::size_t epoch = 0;
  double gen_loss = 0.0;
  double disc_loss = 0.0;
  double train_ade = 0.0;
};

class TrainingError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions
{
  std::size_t workers = 1;
  std::function<void(const EpochStats &)> on_epoch;
};

/// Worker count from TLPRED_WORKERS, defaulting to 1.
std::size_t workers_from_env();

std::vector<EpochStats> train(
  Model & model, const std::vector<TrajectoryWindow> & windows, const TrainOptions & options = {});

void write_loss_csv(const std::filesystem::path & path, const std::vector<EpochStats> & curve);

void save_checkpoint(const Model & model, const std::filesystem::path & dir);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path & dir);

}  // namespace tlpred

#endif  // TLPRED__PREDICTOR_HPP_
