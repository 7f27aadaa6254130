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
#include <vector>

#include "deskdrive/core/rng.hpp"
#include "deskdrive/nn/graph.hpp"
#include "deskdrive/nn/layers.hpp"
#include "deskdrive/nn/param_store.hpp"
#include "deskdrive/planner/planner.hpp"
#include "deskdrive/vocab/vocab.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace deskdrive::rewarder {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

struct FarConfig {
  std::size_t width = 64;
  std::size_t queries = 16;      // M
  std::size_t ffn_hidden = 64;
  std::size_t head_hidden = 64;
  std::size_t latent_tokens = 64;
  std::size_t latent_channels = 8;
  bool future_features = true;   // false: reward from planner query row and c^k only
};

struct PreferencePair {
  std::size_t pos_index = 0;
  std::size_t neg_index = 0;
  double pos_oracle = 0.0;
  double neg_oracle = 0.0;
};

struct PreferenceSet {
  std::vector<std::size_t> selected;  // candidate indices, top-1 first
  std::vector<PreferencePair> pairs;  // indices refer to the candidate list
};

/// c^k for one candidate: E_a(anchor) + E_o(refined − anchor), 1×C.
Tensor candidate_embedding(const wm::WorldModel& model, ParamStore& wm_store, const planner::Candidate& cand,
                           const vocab::TrajectoryVocabulary& vocab);

class FutureRewarder {
 public:
  explicit FutureRewarder(FarConfig cfg = {}) : cfg_(cfg) {}

  const FarConfig& config() const { return cfg_; }

  /// Parameters live under "far.".
  void init(ParamStore& store, Rng& rng) const;

  /// Projected f tokens, shared by every candidate of a scene.
  nn::AttentionBlock::KeyValues scene_context(Graph& g, ParamStore& store, const Var& f) const;
  /// Q_s attends to [f tokens; c^k]; result has the sampler's latent shape.
  Var distill_future(Graph& g, ParamStore& store, const nn::AttentionBlock::KeyValues& fkv, const Var& c_k) const;
  Var distill_future(Graph& g, ParamStore& store, const Var& f, const Var& c_k) const;
  /// c^k attends to the distilled latent; a 2-layer head gives a 1×1 reward.
  Var future_reward(Graph& g, ParamStore& store, const Var& c_k, const Var& z_hat) const;
  /// Reward without future features, from the planner query row and c^k.
  Var traj_reward(Graph& g, ParamStore& store, const Var& qp_row, const Var& c_k) const;

  /// Rewards for a scene's candidates. `qp_rows` is only read by the
  /// trajectory-only variant.
  std::vector<double> score(ParamStore& store, const Tensor& f, std::span<const Tensor> c,
                            std::span<const Tensor> qp_rows) const;

 private:
  FarConfig cfg_;
};

/// Mean squared error against a fixed target; the target carries no gradient.
Var align_loss(const Var& z_hat, const Tensor& z);

/// Mean over pairs of −log σ(r_pos − r_neg); `rewards` is n×1.
Var bt_loss(std::span<const PreferencePair> pairs, const Var& rewards);
double bt_loss(std::span<const PreferencePair> pairs, std::span<const double> rewards);

/// Keeps the top-1 candidate, the 3 with the lowest oracle score and 3 seeded
/// random picks from the rest, then pairs every two of them whose scores differ.
PreferenceSet build_preference_pairs(std::span<const double> oracle_scores, uint64_t seed);

/// Index of the highest reward; ties go to the earlier (better-ranked) candidate.
std::size_t select_trajectory(std::span<const double> rewards);

struct FarSample {
  Tensor f;
  std::vector<Tensor> c;        // 1×C per selected candidate
  std::vector<Tensor> z;        // sampler latent per selected candidate
  std::vector<Tensor> qp_rows;  // 1×C planner query rows
  std::vector<PreferencePair> pairs;  // indices into the vectors above
};

struct FarStepStats {
  double align = 0.0;
  double bt = 0.0;
};

Var far_loss(const FutureRewarder& far, Graph& g, ParamStore& store, const FarSample& s, FarStepStats* stats = nullptr);

FarStepStats far_train_step(const FutureRewarder& far, ParamStore& store, std::span<const FarSample> batch, double lr,
                            double clip = 1.0);

/// Mean alignment loss over every candidate in the batch.
double far_eval_align(const FutureRewarder& far, ParamStore& store, std::span<const FarSample> batch);

}  // namespace deskdrive::rewarder
