// Copyright 2026 The deskdrive Authors
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

// deskdrive command-line front end.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deskdrive/core/error.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/sim/scene_io.hpp"
#include "deskdrive/sim/world.hpp"
#include "deskdrive/vocab/vocab.hpp"

namespace dh = deskdrive::harness;
namespace fs = std::filesystem;
using deskdrive::sim::Scene;

namespace {

struct Shared {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void add_shared(CLI::App* cmd, Shared& s, bool out_required = true) {
  cmd->add_option("--config", s.config, "experiment config (JSON)");
  cmd->add_option("--seed", s.seed, "seed override");
  auto* o = cmd->add_option("--out", s.out, "output path");
  if (out_required) o->required();
}

dh::ExperimentConfig load(const Shared& s) {
  return s.config.empty() ? dh::config_from_json(nlohmann::json::object()) : dh::load_config(s.config);
}

std::vector<Scene> read_scenes(const std::string& path, const dh::ExperimentConfig& cfg) {
  if (!fs::exists(path)) throw deskdrive::IOFailure("scene file not found: " + path);
  return deskdrive::sim::read_scenes_jsonl(path, cfg.sim);
}

deskdrive::vocab::TrajectoryVocabulary read_vocab(const std::string& path) {
  if (!fs::exists(path)) throw deskdrive::MissingPrerequisite("trajectory vocabulary not found: " + path);
  return deskdrive::vocab::load_vocab(path);
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deskdrive: desk-scale anchor planner with a future-aware rewarder"};
  app.require_subcommand(1);

  // gen-scenes
  Shared gs;
  std::size_t gen_n = 100;
  std::string difficulty = "mixed";
  auto* gen = app.add_subcommand("gen-scenes", "generate scenes as JSON lines");
  add_shared(gen, gs);
  gen->add_option("--n", gen_n, "number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--difficulty", difficulty, "empty | sparse | dense | mixed (seed % 3)")
      ->check(CLI::IsMember({"empty", "sparse", "dense", "mixed"}));

  // build-vocab
  Shared bv;
  std::string bv_scenes;
  std::optional<std::size_t> bv_n;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "cluster expert trajectories into anchors");
  add_shared(vocab_cmd, bv);
  vocab_cmd->add_option("--scenes", bv_scenes, "scene JSON lines")->required();
  vocab_cmd->add_option("--n", bv_n, "number of anchors");

  // train-wm
  Shared tw;
  std::string tw_scenes, tw_vocab, tw_val;
  std::optional<std::size_t> tw_iters;
  auto* wm_cmd = app.add_subcommand("train-wm", "train the latent world model");
  add_shared(wm_cmd, tw);
  wm_cmd->add_option("--scenes", tw_scenes, "training scenes")->required();
  wm_cmd->add_option("--vocab", tw_vocab, "vocabulary JSON")->required();
  wm_cmd->add_option("--val-scenes", tw_val, "validation scenes (default: config val split)");
  wm_cmd->add_option("--iters", tw_iters, "optimizer iterations");

  // train-planner
  Shared tp;
  std::string tp_scenes, tp_vocab, tp_wm, tp_val, tp_cache;
  std::optional<std::size_t> tp_epochs;
  auto* plan_cmd = app.add_subcommand("train-planner", "train the anchor planner on frozen encoders");
  add_shared(plan_cmd, tp);
  plan_cmd->add_option("--scenes", tp_scenes, "training scenes")->required();
  plan_cmd->add_option("--vocab", tp_vocab, "vocabulary JSON")->required();
  plan_cmd->add_option("--wm-ckpt", tp_wm, "world-model checkpoint prefix (needed when inheriting)");
  plan_cmd->add_option("--val-scenes", tp_val, "validation scenes (default: config val split)");
  plan_cmd->add_option("--cache", tp_cache, "target cache directory (default: next to --out)");
  plan_cmd->add_option("--epochs", tp_epochs, "epochs");

  // train-far
  Shared tf;
  std::string tf_scenes, tf_vocab, tf_planner, tf_wm, tf_val;
  std::optional<std::size_t> tf_epochs;
  auto* far_cmd = app.add_subcommand("train-far", "train the future-aware rewarder");
  add_shared(far_cmd, tf);
  far_cmd->add_option("--scenes", tf_scenes, "training scenes")->required();
  far_cmd->add_option("--vocab", tf_vocab, "vocabulary JSON")->required();
  far_cmd->add_option("--planner-ckpt", tf_planner, "planner checkpoint prefix")->required();
  far_cmd->add_option("--wm-ckpt", tf_wm, "world-model checkpoint prefix");
  far_cmd->add_option("--val-scenes", tf_val, "validation scenes (default: config val split)");
  far_cmd->add_option("--epochs", tf_epochs, "epochs");

  // eval
  Shared ev;
  std::string ev_work = "runs";
  auto* eval_cmd = app.add_subcommand("eval", "train what is missing, then evaluate the test split");
  add_shared(eval_cmd, ev);
  eval_cmd->add_option("--work", ev_work, "directory for phase outputs, reused across runs");

  // ablate
  Shared ab;
  std::string ab_axis, ab_work = "runs";
  auto* abl_cmd = app.add_subcommand("ablate", "sweep one design axis over the configured seeds");
  add_shared(abl_cmd, ab);
  abl_cmd->add_option("--axis", ab_axis, "inheritance | rewarder_features | topk")->required();
  abl_cmd->add_option("--work", ab_work, "directory for phase outputs, reused across runs");

  // sensitivity
  Shared se;
  std::string se_ckpt, se_scenes, se_vocab;
  auto* sens_cmd = app.add_subcommand("sensitivity", "latent similarity versus anchor distance");
  add_shared(sens_cmd, se);
  sens_cmd->add_option("--ckpt", se_ckpt, "world-model checkpoint prefix")->required();
  sens_cmd->add_option("--scenes", se_scenes, "scenes to probe")->required();
  sens_cmd->add_option("--vocab", se_vocab, "vocabulary JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "UsageError"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = load(gs);
      const uint64_t base = gs.seed.value_or(0);
      std::vector<Scene> scenes(gen_n);
#pragma omp parallel for schedule(dynamic)
      for (std::size_t i = 0; i < gen_n; ++i) {
        const uint64_t s = base + i;
        const auto d = difficulty == "mixed" ? static_cast<deskdrive::sim::Difficulty>(s % 3)
                                             : deskdrive::sim::difficulty_from_string(difficulty);
        scenes[i] = deskdrive::sim::generate_scene(s, d, cfg.sim);
      }
      deskdrive::sim::write_scenes_jsonl(gs.out, scenes);
      print_json({{"scenes", gen_n}, {"out", gs.out}});
    } else if (vocab_cmd->parsed()) {
      auto cfg = load(bv);
      if (bv.seed) cfg.vocab_seed = *bv.seed;
      if (bv_n) cfg.anchors = *bv_n;
      const auto v = dh::build_vocab(cfg, read_scenes(bv_scenes, cfg));
      deskdrive::vocab::save_vocab(v, bv.out);
      print_json({{"anchors", v.size()}, {"inertia", v.inertia}, {"out", bv.out}});
    } else if (wm_cmd->parsed()) {
      auto cfg = load(tw);
      if (tw.seed) cfg.wm_seed = *tw.seed;
      if (tw_iters) cfg.wm_iters = *tw_iters;
      const auto val = tw_val.empty() ? dh::make_split(cfg, dh::Split::kVal) : read_scenes(tw_val, cfg);
      dh::train_world_model(cfg, read_vocab(tw_vocab), read_scenes(tw_scenes, cfg), val, tw.out);
      print_json({{"checkpoint", tw.out}, {"curve", tw.out + "_curve.csv"}});
    } else if (plan_cmd->parsed()) {
      auto cfg = load(tp);
      if (tp.seed) cfg.seed = *tp.seed;
      if (tp_epochs) cfg.planner_epochs = *tp_epochs;
      if (tp_wm.empty()) cfg.inherit_vision = cfg.inherit_motion = false;
      const auto val = tp_val.empty() ? dh::make_split(cfg, dh::Split::kVal) : read_scenes(tp_val, cfg);
      const std::string cache =
          tp_cache.empty() ? (fs::path(tp.out).parent_path() / "cache").string() : tp_cache;
      dh::train_planner(cfg, read_vocab(tp_vocab), read_scenes(tp_scenes, cfg), val, tp_wm, tp.out, cache);
      print_json({{"checkpoint", tp.out}, {"encoders", tp.out + "_encoders"}, {"curve", tp.out + "_curve.csv"}});
    } else if (far_cmd->parsed()) {
      auto cfg = load(tf);
      if (tf.seed) cfg.seed = *tf.seed;
      if (tf_epochs) cfg.far_epochs = *tf_epochs;
      if (cfg.rewarder == dh::RewarderMode::kNone) cfg.rewarder = dh::RewarderMode::kFuture;
      const auto val = tf_val.empty() ? dh::make_split(cfg, dh::Split::kVal) : read_scenes(tf_val, cfg);
      dh::train_rewarder(cfg, read_vocab(tf_vocab), read_scenes(tf_scenes, cfg), val, tf_planner, tf_wm, tf.out);
      print_json({{"checkpoint", tf.out}, {"curve", tf.out + "_curve.csv"}});
    } else if (eval_cmd->parsed()) {
      auto cfg = load(ev);
      if (ev.seed) cfg.seed = *ev.seed;
      const dh::Layout layout{ev_work};
      dh::run_pipeline(cfg, layout);
      const auto report = dh::evaluate(cfg, layout, dh::make_split(cfg, dh::Split::kTest));
      dh::emit_report(report, ev.out);
      nlohmann::ordered_json j{{"summary_hash", dh::summary_hash(report)}};
      for (std::size_t p = 0; p < dh::kNumPolicies; ++p) j[dh::policy_name(p)] = report.mean[p].score;
      print_json(j);
    } else if (abl_cmd->parsed()) {
      auto cfg = load(ab);
      if (ab.seed) cfg.seeds = {*ab.seed};
      const auto axis = dh::axis_from_string(ab_axis);
      const std::string csv = (fs::path(ab.out) / ("ablation_" + dh::to_string(axis) + ".csv")).string();
      const auto rows = dh::ablation_sweep(cfg, axis, dh::Layout{ab_work}, csv);
      nlohmann::ordered_json j{{"csv", csv}};
      for (const auto& r : rows) j[r.variant] = r.score;
      print_json(j);
    } else if (sens_cmd->parsed()) {
      auto cfg = load(se);
      if (se.seed) cfg.wm_seed = *se.seed;
      const auto scenes = read_scenes(se_scenes, cfg);
      const dh::ExperimentConfig probe = [&] {
        auto c = cfg;
        c.sensitivity_scenes = scenes.size();
        return c;
      }();
      const deskdrive::wm::WorldModel model(probe.wm, probe.sim);
      deskdrive::nn::ParamStore store;
      if (!fs::exists(se_ckpt + ".bin")) throw deskdrive::MissingPrerequisite("checkpoint not found: " + se_ckpt);
      deskdrive::nn::load_checkpoint(store, se_ckpt);
      const auto r = deskdrive::wm::motion_sensitivity(model, store, scenes, read_vocab(se_vocab),
                                                       deskdrive::derive_seed(probe.wm_seed, 4),
                                                       probe.sensitivity_anchors);
      dh::write_sensitivity_csv(r, se.out);
      print_json({{"spearman", r.spearman}, {"sample_spearman", r.sample_spearman}, {"out", se.out}});
    }
  } catch (const deskdrive::Error& e) {
    std::cerr << nlohmann::json{{"error", e.code()}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "InternalError"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
