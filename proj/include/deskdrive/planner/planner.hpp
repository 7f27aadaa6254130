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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deskdrive/core/rng.hpp"
#include "deskdrive/nn/graph.hpp"
#include "deskdrive/nn/param_store.hpp"
#include "deskdrive/reward/reward.hpp"
#include "deskdrive/sim/types.hpp"
#include "deskdrive/vocab/vocab.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace deskdrive::planner {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

struct PlannerConfig {
  std::size_t width = 64;  // must match the motion encoder width
  std::size_t ffn_hidden = 128;
  std::size_t blocks = 2;
  std::size_t horizon = 8;
  double speed_scale = 1.0 / 15.0;
  double accel_scale = 0.25;
};

/// Command one-hot (left, straight, right), scaled speed, scaled accel: 1×5.
Tensor ego_features(const sim::EgoState& ego, const PlannerConfig& cfg = {});

/// Q_a = E_a(every anchor), N×C. Constant while the motion encoder is frozen.
Tensor anchor_queries(const wm::WorldModel& model, ParamStore& wm_store, const vocab::TrajectoryVocabulary& vocab);

struct Candidate {
  std::size_t index = 0;   // anchor index
  sim::Trajectory traj;    // refined, ego frame
  double combined_score = 0.0;
};

struct PlannerOutput {
  Tensor im_scores;   // N×1 logits
  Tensor sim_scores;  // N×5 in (0, 1)
  Tensor offsets;     // N×2F metres, (x, y) interleaved per waypoint
  std::vector<Candidate> top;
};

/// Graph-level head outputs. sim holds logits; sigmoid is applied by callers.
struct HeadVars {
  Var queries;
  Var im_logits;
  Var sim_logits;
  Var offsets;
};

class Planner {
 public:
  explicit Planner(PlannerConfig cfg = {}) : cfg_(cfg) {}

  const PlannerConfig& config() const { return cfg_; }

  /// Parameters live under "plan.".
  void init(ParamStore& store, Rng& rng) const;

  Var ego_embed(Graph& g, ParamStore& store, const Var& ego_feats) const;
  /// Anchor queries attend to [f tokens; e] through the stacked blocks.
  Var plan_queries(Graph& g, ParamStore& store, const Var& anchor_q, const Var& f, const Var& e) const;
  HeadVars score_heads(Graph& g, ParamStore& store, const Var& q_p) const;
  HeadVars forward(Graph& g, ParamStore& store, const Tensor& anchor_q, const Tensor& f, const Tensor& ego_feats) const;

  PlannerOutput infer(ParamStore& store, const Tensor& anchor_q, const Tensor& f, const Tensor& ego_feats,
                      const vocab::TrajectoryVocabulary& vocab, std::size_t k) const;

 private:
  PlannerConfig cfg_;
};

/// Anchor plus offset; headings follow the anchor.
sim::Trajectory refine(const sim::Trajectory& anchor, std::span<const double> offset_row);

/// Scores every anchor with combined_plan_score(softmax(im)_i, predicted
/// sub-scores) and returns the K best refined anchors, best first, ties by index.
std::vector<Candidate> topk_candidates(const Tensor& im_scores, const Tensor& sim_scores, const Tensor& offsets,
                                       const vocab::TrajectoryVocabulary& vocab, std::size_t k,
                                       const reward::PlanScoreWeights& w = {});

struct PlannerTargets {
  uint64_t scene_seed = 0;
  Tensor im_target;      // 1×N simplex
  Tensor sim_targets;    // N×5
  std::size_t positive = 0;
  Tensor expert_offset;  // 1×2F
};

/// Rolls out every anchor in the scene and scores it against the expert.
PlannerTargets make_targets(const sim::Scene& scene, const vocab::TrajectoryVocabulary& vocab,
                            const sim::SimConfig& sim = {});

/// Builds targets for all scenes (parallel across scenes), reusing
/// `<dir>/targets-<key>.{bin,json}` when the vocabulary hash and seeds match.
std::vector<PlannerTargets> cached_targets(const std::string& dir, std::span<const sim::Scene> scenes,
                                           const vocab::TrajectoryVocabulary& vocab, const sim::SimConfig& sim = {});

void save_targets(const std::vector<PlannerTargets>& targets, const std::string& vocab_hash,
                  const std::string& prefix);
/// Returns false when the files are missing or were built for another vocabulary.
bool load_targets(std::vector<PlannerTargets>& out, const std::string& vocab_hash, const std::string& prefix);

/// CE(softmax(im), im_target) + mean BCE(sim, sim_targets) + mean L1 of the
/// positive anchor's offset against the expert residual.
Var planner_loss(const HeadVars& heads, const PlannerTargets& t);

struct PlannerSample {
  Tensor f;
  Tensor ego;
  const PlannerTargets* targets = nullptr;
};

/// Averages the loss over the batch and applies one Adam step. Returns the batch loss.
double planner_train_step(const Planner& planner, ParamStore& store, const Tensor& anchor_q,
                          std::span<const PlannerSample> batch, double lr, double clip = 1.0);

}  // namespace deskdrive::planner
