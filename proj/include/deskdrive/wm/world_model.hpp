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
#include "deskdrive/sim/types.hpp"
#include "deskdrive/vocab/vocab.hpp"

namespace deskdrive::wm {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

struct WorldModelConfig {
  std::size_t width = 64;        // C
  std::size_t ffn_hidden = 128;
  std::size_t k = 5;             // anchors per motion embedding
  std::size_t patch = 8;         // observation cells per patch side
  std::size_t latent_channels = 8;
  std::size_t denoiser_blocks = 2;
  std::size_t diffusion_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  std::size_t sample_steps = 10;
  double anchor_scale = 0.1;  // metres → encoder input
  double offset_scale = 1.0;
  double latent_scale = 0.25;  // z0 = latent_scale · codec output
};

enum class LatentTag { kHistory, kFuture };

/// 64 tokens × 8 channels, i.e. an 8×8 grid with 8 channels per cell.
struct LatentState {
  Tensor values;
  LatentTag tag = LatentTag::kHistory;
};

struct MotionEmbedding {
  Tensor rows;  // K × C
  std::vector<std::size_t> anchor_indices;
};

struct DiffusionSchedule {
  std::vector<double> betas;       // betas[t-1] for t = 1..T
  std::vector<double> alpha_bars;  // cumulative products, same indexing

  std::size_t steps() const { return betas.size(); }
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars[t - 1]; }
  static DiffusionSchedule linear(std::size_t steps, double beta_start, double beta_end);
};

/// Number of denoiser forward passes since process start.
uint64_t denoiser_invocations();

/// Stacked history frames cut into non-overlapping patches: one row per patch,
/// patch rows in raster order, values ordered (frame, channel, dy, dx).
Tensor observation_patches(const sim::Observation& obs, std::size_t patch);

/// Fixed (non-learned) future target: two ego-centric frames along `traj_world`
/// at the horizon midpoint and end, each average/max-pooled to an 8×8 grid of
/// {drivable mean, route mean, agent mean, agent max}, mapped to [−1, 1].
Tensor future_target(const sim::Scene& scene, const sim::Trajectory& traj_world, const sim::SimConfig& sim = {});

class WorldModel {
 public:
  explicit WorldModel(WorldModelConfig cfg = {}, sim::SimConfig sim = {});

  const WorldModelConfig& config() const { return cfg_; }
  const sim::SimConfig& sim_config() const { return sim_; }
  std::size_t latent_tokens() const { return grid_ * grid_; }
  std::size_t traj_dims() const { return 2 * sim_.horizon; }

  /// Parameters live under "enc.", "motion.", "den.".
  void init(ParamStore& store, Rng& rng) const;

  // --- graph builders -------------------------------------------------------
  Var encode_history(Graph& g, ParamStore& store, const Tensor& patches) const;
  /// E_a on flattened anchors (rows × 2F, metres).
  Var anchor_embed(Graph& g, ParamStore& store, const Var& anchors_xy) const;
  /// E_o on flattened residuals.
  Var offset_embed(Graph& g, ParamStore& store, const Var& residual_xy) const;
  /// c = E_a(anchors) + E_o(traj − anchors) for the given anchors.
  Var motion_rows(Graph& g, ParamStore& store, const Tensor& traj_xy_row, const Tensor& anchors_xy) const;
  Var denoise(Graph& g, ParamStore& store, const Var& z_t, const Var& f, std::size_t t, const Var& c) const;

  // --- value API --------------------------------------------------------------
  LatentState encode_history(ParamStore& store, const sim::Observation& obs) const;
  MotionEmbedding encode_motion(ParamStore& store, const sim::Trajectory& ego_traj,
                                const vocab::TrajectoryVocabulary& vocab, std::size_t k) const;
  /// Deterministic (η = 0) sampling over `steps` evenly spaced timesteps.
  LatentState sample_future_latent(ParamStore& store, const Tensor& f, const Tensor& c, std::size_t steps,
                                   uint64_t seed) const;

  const DiffusionSchedule& schedule() const { return schedule_; }

 private:
  WorldModelConfig cfg_;
  sim::SimConfig sim_;
  std::size_t grid_;
  DiffusionSchedule schedule_;
};

/// One training example: history patches, ego-frame conditioning trajectory and
/// the matching future target.
struct WmSample {
  Tensor patches;
  sim::Trajectory traj;  // ego frame
  Tensor z0;
};

/// Builds a sample from a scene and a world-frame trajectory starting at the ego.
WmSample make_sample(const WorldModel& model, const sim::Scene& scene, const sim::Trajectory& traj_world);

/// Noise-prediction loss on one example for a fixed timestep and noise draw.
Var diffusion_loss(const WorldModel& model, Graph& g, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                   const WmSample& sample, std::size_t t, const Tensor& noise);

/// Draws t ~ U{1..T} and ε ~ N(0, I) per example, averages the loss over the
/// batch, and applies one Adam step. Returns the batch loss.
double diffusion_train_step(const WorldModel& model, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                            std::span<const WmSample> batch, Rng& rng, double lr, double clip = 1.0);

/// Same loss without an update, for validation with a fixed seed.
double diffusion_eval_loss(const WorldModel& model, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                           std::span<const WmSample> batch, uint64_t seed);

struct SensitivityPoint {
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  double mean_distance = 0.0;
  double mean_similarity = 0.0;
  std::size_t count = 0;
};

struct SensitivityResult {
  std::vector<SensitivityPoint> curve;  // non-empty bins only
  double spearman = 0.0;                // bin distance vs bin similarity
  double sample_spearman = 0.0;         // over every (distance, similarity) pair
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);
/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// Default bin edges in metres.
std::vector<double> sensitivity_bins();

/// For each scene, samples a latent under expert conditioning and under
/// `anchors_per_scene` anchors spread evenly over the distance ranking, all
/// from the same noise seed, and bins cosine similarity by anchor distance.
SensitivityResult motion_sensitivity(const WorldModel& model, ParamStore& store, std::span<const sim::Scene> scenes,
                                     const vocab::TrajectoryVocabulary& vocab, uint64_t seed,
                                     std::size_t anchors_per_scene = 16);

}  // namespace deskdrive::wm
