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


#include "tlpred/data_model.hpp"
#include "tlpred/gradcheck_suite.hpp"
#include "tlpred/metrics.hpp"
#include "tlpred/predictor.hpp"
#include "tlpred/run_config.hpp"
#include "tlpred/sdg.hpp"
#include "tlpred/synth_sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>

namespace fs = std::filesystem;
using namespace tlpred;

namespace
{

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void write_json(const fs::path & path, const nlohmann::json & j)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

fs::path prepare_run_dir(const RunConfig & cfg, const fs::path & out_root)
{
  const fs::path dir = out_root / cfg.hash();
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg.canonical());
  return dir;
}

/// Every frame touched by a window, for writing per-split CSVs.
Scene frames_of(const Scene & scene, const std::vector<TrajectoryWindow> & windows, int span)
{
  std::set<int> keep;
  for (const auto & w : windows) {
    for (int t = 0; t < span; ++t) {
      keep.insert(w.start_frame + t);
    }
  }
  Scene out;
  out.frame_period = scene.frame_period;
  out.map = scene.map;
  for (const auto & f : scene.frames) {
    if (keep.count(f.frame_id)) {
      out.frames.push_back(f);
    }
  }
  return out;
}

std::vector<int> start_frames(const std::vector<TrajectoryWindow> & windows)
{
  std::vector<int> out;
  for (const auto & w : windows) {
    out.push_back(w.start_frame);
  }
  return out;
}

int cmd_generate(const RunConfig & cfg, const fs::path & out_root)
{
  ScenarioConfig sc = cfg.scenario;
  sc.seed = cfg.seed;
  try {
    sc.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(e.what());
  }
  const HyperParams hp;
  if (cfg.frames < static_cast<int>(hp.obs_len + hp.pred_len)) {
    throw ConfigError("insufficient frames for one window");
  }
  const Scene scene = generate_scene(sc, cfg.frames);
  auto windows = window_scene(scene, hp.obs_len, hp.pred_len, 1);
  const std::size_t total = windows.size();
  if (total < 6) {
    throw ConfigError(
      "insufficient windows for a 4:1:1 split (" + std::to_string(total) +
      "); raise --frames or --spawn-rate");
  }
  const Splits splits = labeled_splits(std::move(windows), derive_seed({cfg.seed, 0x5b11u}));

  const fs::path dir = prepare_run_dir(cfg, out_root);
  const int span = static_cast<int>(hp.obs_len + hp.pred_len);
  write_dataset(dir / "scene.csv", scene);
  scene.map->save(dir / "scene.map.json");
  const std::pair<const char *, const std::vector<TrajectoryWindow> *> parts[] = {
    {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  nlohmann::json index = {{"obs_len", hp.obs_len}, {"pred_len", hp.pred_len}};
  for (const auto & [name, part] : parts) {
    write_dataset(dir / (std::string(name) + ".csv"), frames_of(scene, *part, span));
    scene.map->save(dir / (std::string(name) + ".map.json"));
    index[name] = start_frames(*part);
  }
  write_json(dir / "splits.json", index);
  std::cerr << "windows: train " << splits.train.size() << ", val " << splits.val.size() << ", test "
            << splits.test.size() << "; light-constrained vehicles "
            << constrained_fraction(scene) * 100.0 << "%\n";
  std::cout << dir.string() << '\n';
  return 0;
}

std::vector<TrajectoryWindow> load_split(const fs::path & data_dir, const std::string & split, const HyperParams & hp)
{
  const fs::path csv = data_dir / (split + ".csv");
  if (!fs::exists(csv)) {
    throw ConfigError("dataset not found: " + csv.string());
  }
  Scene scene;
  try {
    scene = parse_dataset(csv);
  } catch (const DataError & e) {
    throw ConfigError(std::string("unreadable dataset: ") + e.what());
  }
  auto windows = window_scene(scene, hp.obs_len, hp.pred_len, 1);
  const fs::path index_path = data_dir / "splits.json";
  if (fs::exists(index_path)) {
    std::ifstream in(index_path);
    const auto index = nlohmann::json::parse(in);
    if (index.value("obs_len", hp.obs_len) != hp.obs_len || index.value("pred_len", hp.pred_len) != hp.pred_len) {
      throw ConfigError("splits.json was written for different observation/prediction lengths");
    }
    if (index.contains(split)) {
      const auto wanted = index.at(split).get<std::set<int>>();
      std::erase_if(windows, [&](const TrajectoryWindow & w) { return !wanted.count(w.start_frame); });
    }
  }
  if (windows.empty()) {
    throw ConfigError("dataset " + csv.string() + " yields no windows");
  }
  return windows;
}

int cmd_train(const RunConfig & cfg, const fs::path & out_root)
{
  HyperParams hp = cfg.hyper;
  hp.seed = cfg.seed;
  try {
    hp.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(e.what());
  }
  const auto windows = load_split(cfg.data_dir, "train", hp);
  const fs::path dir = prepare_run_dir(cfg, out_root);
  Model model(hp, derive_seed({hp.seed, 0x1417u}));
  TrainOptions opts;
  opts.workers = workers_from_env();
  opts.on_epoch = [&](const EpochStats & s) {
    std::cerr << "epoch " << s.epoch << "/" << hp.epochs << "  gen_loss " << s.gen_loss << "  disc_loss "
              << s.disc_loss << "  train_ade " << s.train_ade << '\n';
  };
  std::cerr << "training " << hp.ablation.label() << (hp.ablation.lights ? "" : " (lights off)") << " on "
            << windows.size() << " windows, " << model.generator().total_size() << " generator parameters\n";
  const auto curve = train(model, windows, opts);
  save_checkpoint(model, dir / "checkpoint");
  write_loss_csv(dir / "loss.csv", curve);
  std::cout << dir.string() << '\n';
  return 0;
}

void dump_masks(const fs::path & path, const fs::path & csv, const HyperParams & hp)
{
  const Scene scene = parse_dataset(csv);
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  std::map<int, std::vector<Vec2>> tracks;
  int previous = -2;
  for (const auto & f : scene.frames) {
    if (f.frame_id != previous + 1) {
      tracks.clear();
    }
    std::vector<Vec2> headings;
    std::map<int, std::vector<Vec2>> next;
    for (const auto & r : f.agents) {
      auto track = tracks.count(r.agent_id) ? tracks[r.agent_id] : std::vector<Vec2>{};
      track.push_back(r.position());
      headings.push_back(heading_from_track(track));
      next[r.agent_id] = std::move(track);
    }
    tracks = std::move(next);
    previous = f.frame_id;
    write_mask_csv(out, f.frame_id, build_adjacency(f.agents, headings, hp.sdg, scene.map.get()));
  }
}

int cmd_eval(const RunConfig & cfg, const fs::path & out_root)
{
  if (!fs::exists(fs::path(cfg.checkpoint_dir) / "hyperparams.json")) {
    throw ConfigError("checkpoint not found: " + cfg.checkpoint_dir);
  }
  std::unique_ptr<Model> model;
  try {
    model = load_checkpoint(cfg.checkpoint_dir);
  } catch (const std::exception & e) {
    throw ConfigError(std::string("unreadable checkpoint: ") + e.what());
  }
  HyperParams hp = model->hyper();
  if (cfg.hyper.k_samples != hp.k_samples) {
    // Re-create with the requested K; parameters are unaffected by K.
    hp.k_samples = cfg.hyper.k_samples;
    auto resized = std::make_unique<Model>(hp, 0);
    resized->all().copy_values_from(model->all());
    model = std::move(resized);
  }
  const auto windows = load_split(cfg.data_dir, cfg.split, hp);
  const fs::path dir = prepare_run_dir(cfg, out_root);
  const EvalReport report = evaluate(windows, *model, cfg.seed, workers_from_env(), cfg.hash());
  report.write_json(dir / "report.json");
  report.write_csv(dir / "report.csv");
  report.write_trace_csv(dir / "trace.csv");
  if (cfg.dump_masks) {
    dump_masks(dir / "masks.csv", fs::path(cfg.data_dir) / (cfg.split + ".csv"), hp);
  }
  std::cerr << "ADE " << report.ade << "  FDE " << report.fde << "  minFDE " << report.min_fde << "  (K="
            << report.k << ", " << report.agents << " agents in " << report.windows.size() << " windows)\n";
  std::cout << dir.string() << '\n';
  return 0;
}

int cmd_gradcheck(const RunConfig & cfg, const fs::path & out_root)
{
  const auto reports = run_gradcheck_suite(cfg.seed);
  bool ok = true;
  nlohmann::json j = nlohmann::json::array();
  for (const auto & r : reports) {
    const bool pass = r.report.passed(cfg.tolerance);
    ok = ok && pass;
    std::printf(
      "%-36s max_rel_err %.3e  probes %zu  %s\n", r.name.c_str(), r.report.max_rel_err, r.report.probes,
      pass ? "PASS" : "FAIL");
    if (!r.report.message.empty()) {
      std::printf("    %s\n", r.report.message.c_str());
    }
    j.push_back(
      {{"name", r.name},
       {"max_rel_err", r.report.max_rel_err},
       {"worst_input", r.report.worst_input},
       {"worst_index", r.report.worst_index},
       {"probes", r.report.probes},
       {"passed", pass}});
  }
  const fs::path dir = prepare_run_dir(cfg, out_root);
  write_json(dir / "gradcheck.json", j);
  return ok ? 0 : kExitRuntime;
}

int dispatch(const RunConfig & cfg, const fs::path & out_root)
{
  if (cfg.command == "generate") {
    return cmd_generate(cfg, out_root);
  }
  if (cfg.command == "train") {
    return cmd_train(cfg, out_root);
  }
  if (cfg.command == "eval") {
    return cmd_eval(cfg, out_root);
  }
  if (cfg.command == "gradcheck") {
    return cmd_gradcheck(cfg, out_root);
  }
  throw ConfigError("unknown command '" + cfg.command + "'");
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }
double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Traffic-light-aware multi-agent trajectory prediction"};
  app.require_subcommand(1);
  std::string out_root = "runs";
  app.add_option("--out-root", out_root, "Directory holding run directories")->capture_default_str();

  RunConfig cfg;
  const HyperParams defaults;

  auto * gen = app.add_subcommand("generate", "Simulate an intersection and write train/val/test CSVs");
  std::string layout = "crossroad";
  gen->add_option("--layout", layout, "crossroad | tjunction | roundabout")->capture_default_str();
  gen->add_option("--frames", cfg.frames, "Frames to simulate (3 per second)")->capture_default_str();
  gen->add_option("--seed", cfg.seed)->capture_default_str();
  gen->add_option("--lanes", cfg.scenario.lanes_per_arm, "Lanes per direction on each arm")->capture_default_str();
  gen->add_option("--spawn-rate", cfg.scenario.spawn_rate, "Vehicles per second per inbound lane")->capture_default_str();
  gen->add_option("--speed-limit", cfg.scenario.speed_limit, "px/s")->capture_default_str();
  gen->add_option("--influence-depth", cfg.scenario.influence_depth, "px")->capture_default_str();
  gen->add_option("--green", cfg.scenario.green, "Green phase, seconds")->capture_default_str();
  gen->add_option("--yellow", cfg.scenario.yellow, "Yellow phase, seconds")->capture_default_str();
  gen->add_option("--cycle-offset", cfg.scenario.cycle_offset, "Seconds")->capture_default_str();
  bool no_rtor = false;
  gen->add_flag("--no-right-turn-on-red", no_rtor, "Right turns wait at red lights");

  auto * tr = app.add_subcommand("train", "Train a model on <data>/train.csv");
  tr->add_option("--data", cfg.data_dir, "Directory written by generate")->required();
  std::string ablation = defaults.ablation.label();
  std::string lights = "on";
  tr->add_option("--ablation", ablation, "S{g,s}+B{l,b}+TL{l,m}[+D]")->capture_default_str();
  tr->add_option("--lights", lights, "on | off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  tr->add_option("--epochs", cfg.hyper.epochs)->capture_default_str();
  tr->add_option("--lr", cfg.hyper.lr)->capture_default_str();
  tr->add_option("--batch", cfg.hyper.batch)->capture_default_str();
  tr->add_option("--k", cfg.hyper.k_samples, "Best-of-K at evaluation")->capture_default_str();
  tr->add_option("--train-k", cfg.hyper.train_samples, "Samples inside the variety loss")->capture_default_str();
  tr->add_option("--embed-dim", cfg.hyper.embed_dim)->capture_default_str();
  tr->add_option("--hidden-dim", cfg.hyper.hidden_dim)->capture_default_str();
  tr->add_option("--input-dim", cfg.hyper.input_dim)->capture_default_str();
  tr->add_option("--attn-dim", cfg.hyper.attn_dim)->capture_default_str();
  tr->add_option("--noise-dim", cfg.hyper.noise_dim)->capture_default_str();
  tr->add_option("--k-window", cfg.hyper.k_window, "Behavior history length")->capture_default_str();
  tr->add_option("--adv-weight", cfg.hyper.adv_weight)->capture_default_str();
  tr->add_option("--position-scale", cfg.hyper.position_scale, "Pixels per model unit")->capture_default_str();
  std::string variety = "sequence_norm";
  tr->add_option("--variety", variety, "sequence_norm | step_sum")
    ->check(CLI::IsMember({"sequence_norm", "step_sum"}))
    ->capture_default_str();
  tr->add_flag("--float32", cfg.hyper.float32, "Round every value to single precision");
  tr->add_option("--seed", cfg.seed)->capture_default_str();
  double theta_road = degrees(defaults.sdg.theta_road);
  double theta_inter = degrees(defaults.sdg.theta_intersection);
  std::string lane_rule = "direction_group";
  tr->add_option("--theta-road", theta_road, "Visual half-angle on roads, degrees")->capture_default_str();
  tr->add_option("--theta-intersection", theta_inter, "Visual half-angle in the intersection, degrees")
    ->capture_default_str();
  tr->add_option("--d-max", cfg.hyper.sdg.d_max, "Interaction distance, px")->capture_default_str();
  tr->add_option("--lane-rule", lane_rule, "direction_group | literal")
    ->check(CLI::IsMember({"direction_group", "literal"}))
    ->capture_default_str();

  auto * ev = app.add_subcommand("eval", "Best-of-K ADE/FDE of a checkpoint");
  ev->add_option("--checkpoint", cfg.checkpoint_dir, "Checkpoint directory written by train")->required();
  ev->add_option("--data", cfg.data_dir, "Directory written by generate")->required();
  ev->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_option("--k", cfg.hyper.k_samples)->capture_default_str();
  ev->add_option("--seed", cfg.seed)->capture_default_str();
  ev->add_flag("--dump-masks", cfg.dump_masks, "Write the interaction mask of every frame");

  auto * gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the miniature model");
  cfg.seed = 7;
  gc->add_option("--tolerance", cfg.tolerance)->capture_default_str();
  gc->add_option("--seed", cfg.seed)->capture_default_str();

  auto * replay = app.add_subcommand("replay", "Re-run a command from a logged config.json");
  std::string replay_path;
  replay->add_option("--config", replay_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (replay->parsed()) {
      std::ifstream in(replay_path);
      return dispatch(RunConfig::from_json(nlohmann::json::parse(in)), out_root);
    }
    if (gen->parsed()) {
      cfg.command = "generate";
      if (!gen->count("--seed")) {
        cfg.seed = 1;
      }
      cfg.scenario.layout = layout_from_string(layout);
      cfg.scenario.right_turn_on_red = !no_rtor;
    } else if (tr->parsed()) {
      cfg.command = "train";
      if (!tr->count("--seed")) {
        cfg.seed = 1;
      }
      cfg.hyper.ablation = Ablation::parse(ablation, lights == "on");
      cfg.hyper.variety_mode = variety == "step_sum" ? VarietyMode::kStepSum : VarietyMode::kSequenceNorm;
      cfg.hyper.sdg.theta_road = radians(theta_road);
      cfg.hyper.sdg.theta_intersection = radians(theta_inter);
      cfg.hyper.sdg.lane_rule = lane_rule == "literal" ? LaneRule::kLiteral : LaneRule::kDirectionGroup;
    } else if (ev->parsed()) {
      cfg.command = "eval";
      if (!ev->count("--seed")) {
        cfg.seed = 1;
      }
    } else {
      cfg.command = "gradcheck";
    }
    return dispatch(cfg, out_root);
  } catch (const ConfigError & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
