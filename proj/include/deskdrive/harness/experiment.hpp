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

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deskdrive/planner/planner.hpp"
#include "deskdrive/reward/reward.hpp"
#include "deskdrive/rewarder/rewarder.hpp"
#include "deskdrive/sim/types.hpp"
#include "deskdrive/vocab/vocab.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace deskdrive::harness {

enum class Phase { kWorldModel, kPlanner, kFar };
enum class RewarderMode { kNone, kTraj, kFuture };
enum class Split { kVocab, kTrain, kVal, kTest };
enum class Axis { kInheritance, kRewarderFeatures, kTopK };

std::string to_string(Phase p);
std::string to_string(RewarderMode m);
std::string to_string(Axis a);
RewarderMode rewarder_mode_from_string(const std::string& s);
Axis axis_from_string(const std::string& s);

struct SplitRange {
  uint64_t offset = 0;
  std::size_t count = 0;
};

struct ExperimentConfig {
  uint64_t seed = 1;                    // planner and rewarder training
  std::vector<uint64_t> seeds{1, 2, 3};  // sweeps
  uint64_t wm_seed = 7;

  SplitRange vocab_scenes{0, 2000};
  SplitRange train_scenes{100000, 1000};
  SplitRange val_scenes{200000, 200};
  SplitRange test_scenes{300000, 300};

  std::size_t anchors = 256;
  uint64_t vocab_seed = 11;
  std::size_t kmeans_iters = 100;

  wm::WorldModelConfig wm;
  std::size_t wm_iters = 2000;
  std::size_t wm_batch = 16;
  double wm_lr = 2e-3;
  double wm_expert_fraction = 0.5;  // rest conditioned on random anchors
  double wm_snapshot_fraction = 0.1;
  std::size_t wm_val_samples = 32;

  planner::PlannerConfig planner;
  std::size_t planner_epochs = 8;
  std::size_t planner_batch = 8;
  std::size_t planner_scenes = 1000;  // taken from the start of the train split
  double planner_lr = 1e-3;
  std::size_t planner_val_scenes = 50;

  rewarder::FarConfig far;
  std::size_t far_epochs = 10;
  std::size_t far_batch = 4;
  std::size_t far_scenes = 500;
  std::size_t far_candidates = 16;
  double far_lr = 1e-3;
  std::size_t far_val_scenes = 50;

  bool inherit_vision = true;
  bool inherit_motion = true;
  RewarderMode rewarder = RewarderMode::kFuture;
  std::size_t topk = 5;

  std::size_t sensitivity_scenes = 100;
  std::size_t sensitivity_anchors = 16;
  std::size_t latency_samples = 10;

  sim::SimConfig sim;  // not serialized; fixed per build
};

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);
std::string config_hash(const ExperimentConfig& cfg);

std::vector<uint64_t> split_seeds(const ExperimentConfig& cfg, Split split);
std::vector<sim::Scene> make_split(const ExperimentConfig& cfg, Split split);
/// Throws InvalidArgument when two splits share a scene seed.
void check_split_hygiene(const ExperimentConfig& cfg);

/// Output locations under a run root. Each phase directory is keyed by the
/// hash of everything that phase depends on, so variants share upstream work.
struct Layout {
  std::string root;
  std::string vocab_path(const ExperimentConfig& cfg) const;
  std::string wm_dir(const ExperimentConfig& cfg) const;
  std::string planner_dir(const ExperimentConfig& cfg) const;
  std::string far_dir(const ExperimentConfig& cfg) const;
  std::string cache_dir() const { return root + "/cache"; }
};

/// Checkpoint prefixes (`<prefix>.bin` + `<prefix>.json`). The planner's frozen
/// encoders live at `<planner>_encoders`. Empty means absent.
struct Checkpoints {
  std::string vocab;  // JSON path
  std::string world_model;
  std::string planner;
  std::string rewarder;
};
Checkpoints checkpoints(const ExperimentConfig& cfg, const Layout& layout);

vocab::TrajectoryVocabulary build_vocab(const ExperimentConfig& cfg, std::span<const sim::Scene> scenes);

// Phase trainers on explicit inputs. Each writes `<out>.{bin,json}` and `<out>_curve.csv`.
/// Also writes `<out>_snapshot` at cfg.wm_snapshot_fraction of the iterations.
void train_world_model(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                       std::span<const sim::Scene> train, std::span<const sim::Scene> val, const std::string& out);
/// `wm` may be empty when nothing is inherited.
void train_planner(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                   std::span<const sim::Scene> train, std::span<const sim::Scene> val, const std::string& wm,
                   const std::string& out, const std::string& cache_dir);
/// `wm` is required for the future-feature rewarder only.
void train_rewarder(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                    std::span<const sim::Scene> train, std::span<const sim::Scene> val, const std::string& planner,
                    const std::string& wm, const std::string& out);

/// Builds (or reuses) the trajectory vocabulary; returns its path.
std::string build_vocab(const ExperimentConfig& cfg, const Layout& layout);

/// Trains one phase with frozen prerequisites, writing `<dir>/<phase>.{bin,json}`
/// and `<dir>/curve.csv`. A finished phase directory is reused as is.
/// Returns the checkpoint prefix.
std::string run_phase(Phase phase, const ExperimentConfig& cfg, const Layout& layout);

/// Every phase in order.
void run_pipeline(const ExperimentConfig& cfg, const Layout& layout);

enum PolicyIndex : std::size_t { kTop1 = 0, kFarSelected = 1, kOracle = 2, kNumPolicies = 3 };
std::string policy_name(std::size_t p);

struct PolicyResult {
  reward::RewardBreakdown breakdown;
  double score = 0.0;
  std::size_t candidate = 0;  // position in the planner's top-K list
};

struct SceneEval {
  uint64_t seed = 0;
  std::array<PolicyResult, kNumPolicies> policies;
};

struct StageTimings {
  double encoders_ms = 0.0;  // mean per scene
  double planner_ms = 0.0;
  double far_ms = 0.0;
  double sampling_ms = 0.0;  // one latent sampling at the configured steps, for reference
};

struct EvalReport {
  std::string config_hash;
  std::map<std::string, std::string> checkpoint_hashes;  // name → git blob hash of the .bin
  std::size_t topk = 0;
  std::string rewarder;
  std::vector<SceneEval> scenes;
  std::array<PolicyResult, kNumPolicies> mean;  // arithmetic means; candidate unused
  StageTimings timings;
  uint64_t denoiser_calls = 0;  // during the top-1 / FAR path
  std::optional<wm::SensitivityResult> sensitivity;
};

/// Scenes run in parallel; per-scene results keep scene order.
EvalReport evaluate(const ExperimentConfig& cfg, const Checkpoints& ckpt, std::span<const sim::Scene> test_scenes);
EvalReport evaluate(const ExperimentConfig& cfg, const Layout& layout, std::span<const sim::Scene> test_scenes);

/// Hash over the deterministic part of the summary (everything but timings).
std::string summary_hash(const EvalReport& report);

/// metrics.csv, summary.json and (when present) sensitivity.csv.
void emit_report(const EvalReport& report, const std::string& out_dir);
void write_sensitivity_csv(const wm::SensitivityResult& s, const std::string& path);

struct AblationRow {
  std::string variant;
  std::size_t seeds = 0;
  reward::RewardBreakdown mean;
  double score = 0.0;
  double top1_score = 0.0;
  double oracle_score = 0.0;
};

/// Trains and evaluates every row of the axis over cfg.seeds and writes `csv_path`.
std::vector<AblationRow> ablation_sweep(const ExperimentConfig& cfg, Axis axis, const Layout& layout,
                                        const std::string& csv_path);

/// Sensitivity of a world-model checkpoint on the first cfg.sensitivity_scenes test scenes.
wm::SensitivityResult run_sensitivity(const ExperimentConfig& cfg, const std::string& wm_checkpoint,
                                      const vocab::TrajectoryVocabulary& vocab);

}  // namespace deskdrive::harness
