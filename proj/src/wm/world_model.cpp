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

#include "deskdrive/wm/world_model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "deskdrive/core/error.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::wm {
namespace {

std::atomic<uint64_t> g_denoiser_calls{0};

nn::Linear patch_proj(const WorldModelConfig& c, std::size_t in) { return {"enc.patch", in, c.width}; }
nn::AttentionBlock enc_block(const WorldModelConfig& c) { return nn::AttentionBlock::make("enc.att", c.width, c.ffn_hidden); }
nn::Linear enc_out(const WorldModelConfig& c) { return {"enc.out", c.width, c.latent_channels}; }
nn::Mlp anchor_mlp(const WorldModelConfig& c, std::size_t d) { return nn::Mlp::make("motion.anchor", d, c.width, c.width); }
nn::Mlp offset_mlp(const WorldModelConfig& c, std::size_t d) { return nn::Mlp::make("motion.offset", d, c.width, c.width); }
nn::Linear den_zin(const WorldModelConfig& c) { return {"den.zin", c.latent_channels, c.width}; }
nn::Linear den_fin(const WorldModelConfig& c) { return {"den.fin", c.latent_channels, c.width}; }
nn::Mlp den_temb(const WorldModelConfig& c) { return nn::Mlp::make("den.temb", c.width, c.width, c.width); }
nn::Linear den_cond(const WorldModelConfig& c) { return {"den.cond", c.width, c.width}; }
nn::AttentionBlock den_block(const WorldModelConfig& c, std::size_t i) {
  return nn::AttentionBlock::make("den.b" + std::to_string(i), c.width, c.ffn_hidden);
}
nn::Linear den_head(const WorldModelConfig& c) { return {"den.head", c.width, c.latent_channels}; }

Tensor random_table(std::size_t rows, std::size_t cols, double a, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

Tensor flat_row(const sim::Trajectory& t) {
  const auto v = vocab::flatten_xy(t);
  return Tensor({1, v.size()}, v);
}

Tensor anchor_rows(const vocab::TrajectoryVocabulary& vocab, std::span<const std::size_t> idx) {
  Tensor out = Tensor::matrix(idx.size(), 2 * vocab.F);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto v = vocab::flatten_xy(vocab.anchors[idx[i]]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

uint64_t denoiser_invocations() { return g_denoiser_calls.load(); }

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  DiffusionSchedule s;
  double prod = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double u = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double b = beta_start + (beta_end - beta_start) * u;
    prod *= 1.0 - b;
    s.betas.push_back(b);
    s.alpha_bars.push_back(prod);
  }
  return s;
}

Tensor observation_patches(const sim::Observation& obs, std::size_t patch) {
  if (obs.height % patch != 0 || obs.width % patch != 0)
    throw ShapeMismatch("observation " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                        " is not divisible into patches of " + std::to_string(patch));
  const std::size_t gh = obs.height / patch, gw = obs.width / patch;
  const std::size_t per = obs.frames * sim::kNumChannels * patch * patch;
  Tensor out = Tensor::matrix(gh * gw, per);
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc) {
      double* dst = out.row(pr * gw + pc).data();
      for (std::size_t t = 0; t < obs.frames; ++t)
        for (std::size_t ch = 0; ch < sim::kNumChannels; ++ch)
          for (std::size_t dy = 0; dy < patch; ++dy)
            for (std::size_t dx = 0; dx < patch; ++dx)
              *dst++ = obs.at(t, ch, pr * patch + dy, pc * patch + dx);
    }
  return out;
}

Tensor future_target(const sim::Scene& scene, const sim::Trajectory& traj, const sim::SimConfig& cfg) {
  constexpr std::size_t kGrid = 8;
  const std::size_t n = cfg.obs_cells;
  const std::size_t block = n / kGrid;
  const std::size_t frames[] = {traj.size() / 2, traj.size() - 1};
  Tensor out = Tensor::matrix(kGrid * kGrid, 8);
  for (std::size_t fi = 0; fi < 2; ++fi) {
    const std::size_t w = frames[fi];
    const auto img = sim::render_frame(scene, traj.waypoints[w], static_cast<double>(w) * traj.dt, cfg);
    for (std::size_t br = 0; br < kGrid; ++br)
      for (std::size_t bc = 0; bc < kGrid; ++bc) {
        double drv = 0.0, rte = 0.0, agt = 0.0, amax = 0.0;
        for (std::size_t r = br * block; r < (br + 1) * block; ++r)
          for (std::size_t c = bc * block; c < (bc + 1) * block; ++c) {
            drv += img[sim::kDrivable * n * n + r * n + c];
            rte += img[sim::kRoute * n * n + r * n + c];
            const double a = img[sim::kAgent * n * n + r * n + c];
            agt += a;
            amax = std::max(amax, a);
          }
        const double area = static_cast<double>(block * block);
        double* dst = out.row(br * kGrid + bc).data() + 4 * fi;
        dst[0] = 2.0 * drv / area - 1.0;
        dst[1] = 2.0 * rte / area - 1.0;
        dst[2] = 2.0 * agt / area - 1.0;
        dst[3] = 2.0 * amax - 1.0;
      }
  }
  return out;
}

WorldModel::WorldModel(WorldModelConfig cfg, sim::SimConfig sim)
    : cfg_(cfg), sim_(sim), grid_(sim.obs_cells / cfg.patch),
      schedule_(DiffusionSchedule::linear(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)) {}

void WorldModel::init(ParamStore& store, Rng& rng) const {
  const std::size_t per_patch = sim_.history * sim::kNumChannels * cfg_.patch * cfg_.patch;
  const std::size_t L = latent_tokens();
  patch_proj(cfg_, per_patch).init(store, rng);
  store.add("enc.pos", random_table(L, cfg_.width, 0.1, rng));
  store.add("enc.grid", random_table(L, cfg_.width, 1.0, rng));
  enc_block(cfg_).init(store, rng);
  enc_out(cfg_).init(store, rng);

  anchor_mlp(cfg_, traj_dims()).init(store, rng);
  offset_mlp(cfg_, traj_dims()).init(store, rng, nn::Init::kZero);

  den_zin(cfg_).init(store, rng);
  den_fin(cfg_).init(store, rng);
  store.add("den.pos", random_table(L, cfg_.width, 0.1, rng));
  den_temb(cfg_).init(store, rng);
  den_cond(cfg_).init(store, rng);
  for (std::size_t i = 0; i < cfg_.denoiser_blocks; ++i) den_block(cfg_, i).init(store, rng);
  den_head(cfg_).init(store, rng, nn::Init::kZero);
}

Var WorldModel::encode_history(Graph& g, ParamStore& store, const Tensor& patches) const {
  const std::size_t per_patch = sim_.history * sim::kNumChannels * cfg_.patch * cfg_.patch;
  if (patches.rows() != latent_tokens() || patches.cols() != per_patch)
    throw ShapeMismatch("history patches " + patches.shape_string() + ", expected " +
                        std::to_string(latent_tokens()) + "x" + std::to_string(per_patch));
  const Var tokens = add(patch_proj(cfg_, per_patch)(g, store, g.constant(patches)), g.param(store, "enc.pos"));
  const Var pooled = enc_block(cfg_)(g, store, g.param(store, "enc.grid"), tokens);
  return enc_out(cfg_)(g, store, pooled);
}

Var WorldModel::anchor_embed(Graph& g, ParamStore& store, const Var& anchors_xy) const {
  return anchor_mlp(cfg_, traj_dims())(g, store, scale(anchors_xy, cfg_.anchor_scale));
}

Var WorldModel::offset_embed(Graph& g, ParamStore& store, const Var& residual_xy) const {
  return offset_mlp(cfg_, traj_dims())(g, store, scale(residual_xy, cfg_.offset_scale));
}

Var WorldModel::motion_rows(Graph& g, ParamStore& store, const Tensor& traj_xy_row, const Tensor& anchors_xy) const {
  if (traj_xy_row.cols() != traj_dims() || anchors_xy.cols() != traj_dims())
    throw ShapeMismatch("motion inputs must have " + std::to_string(traj_dims()) + " columns");
  Tensor residual = anchors_xy;
  for (std::size_t r = 0; r < residual.rows(); ++r)
    for (std::size_t c = 0; c < residual.cols(); ++c) residual(r, c) = traj_xy_row.data[c] - anchors_xy(r, c);
  return add(anchor_embed(g, store, g.constant(anchors_xy)), offset_embed(g, store, g.constant(std::move(residual))));
}

Var WorldModel::denoise(Graph& g, ParamStore& store, const Var& z_t, const Var& f, std::size_t t, const Var& c) const {
  ++g_denoiser_calls;
  const std::size_t L = latent_tokens();
  if (z_t->value.rows() != L || f->value.rows() != L)
    throw ShapeMismatch("denoiser expects " + std::to_string(L) + " latent tokens");
  Var h = add(add(den_zin(cfg_)(g, store, z_t), den_fin(cfg_)(g, store, f)), g.param(store, "den.pos"));
  const Var temb = den_temb(cfg_)(g, store, g.constant(nn::sinusoidal_embedding(static_cast<double>(t), cfg_.width)));
  const Var cond = mean_rows(den_cond(cfg_)(g, store, c));
  h = add(h, broadcast_rows(add(temb, cond), L));
  for (std::size_t i = 0; i < cfg_.denoiser_blocks; ++i) h = den_block(cfg_, i)(g, store, h, h);
  return den_head(cfg_)(g, store, h);
}

LatentState WorldModel::encode_history(ParamStore& store, const sim::Observation& obs) const {
  Graph g(false);
  return {encode_history(g, store, observation_patches(obs, cfg_.patch))->value, LatentTag::kHistory};
}

MotionEmbedding WorldModel::encode_motion(ParamStore& store, const sim::Trajectory& ego_traj,
                                          const vocab::TrajectoryVocabulary& vocab, std::size_t k) const {
  const auto nb = vocab::nearest_anchors(vocab, ego_traj, k);
  Graph g(false);
  return {motion_rows(g, store, flat_row(ego_traj), anchor_rows(vocab, nb.indices))->value, nb.indices};
}

LatentState WorldModel::sample_future_latent(ParamStore& store, const Tensor& f, const Tensor& c, std::size_t steps,
                                             uint64_t seed) const {
  const std::size_t T = schedule_.steps();
  if (steps < 1 || steps > T)
    throw InvalidSteps("sample_steps=" + std::to_string(steps) + " outside [1, " + std::to_string(T) + "]");
  Rng rng(seed);
  Tensor z = Tensor::matrix(latent_tokens(), cfg_.latent_channels);
  for (double& v : z.data) v = rng.normal();
  Graph g(false);
  const Var fv = g.constant(f);
  const Var cv = g.constant(c);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = T - (i * T) / steps;
    const std::size_t t_prev = i + 1 < steps ? T - ((i + 1) * T) / steps : 0;
    const Tensor eps = denoise(g, store, g.constant(z), fv, t, cv)->value;
    const double ab = schedule_.alpha_bar(t), ab_prev = schedule_.alpha_bar(t_prev);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    const double pa = std::sqrt(ab_prev), pn = std::sqrt(1.0 - ab_prev);
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double x0 = (z.data[j] - sn * eps.data[j]) / sa;
      z.data[j] = pa * x0 + pn * eps.data[j];
    }
  }
  return {std::move(z), LatentTag::kFuture};
}

WmSample make_sample(const WorldModel& model, const sim::Scene& scene, const sim::Trajectory& traj_world) {
  const auto& sim = model.sim_config();
  const auto hist = sim::history_states(scene, sim);
  Tensor z0 = future_target(scene, traj_world, sim);
  for (double& v : z0.data) v *= model.config().latent_scale;
  return {observation_patches(sim::render_observation(scene, hist, sim), model.config().patch),
          vocab::normalize_to_ego_frame(traj_world, scene.ego), std::move(z0)};
}

Var diffusion_loss(const WorldModel& model, Graph& g, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                   const WmSample& sample, std::size_t t, const Tensor& noise) {
  if (!nn::same_shape(sample.z0, noise)) throw ShapeMismatch("noise " + noise.shape_string() + " vs target " + sample.z0.shape_string());
  const Var f = model.encode_history(g, store, sample.patches);
  const auto nb = vocab::nearest_anchors(vocab, sample.traj, model.config().k);
  const Var c = model.motion_rows(g, store, flat_row(sample.traj), anchor_rows(vocab, nb.indices));
  const double ab = model.schedule().alpha_bar(t);
  Tensor zt = sample.z0;
  for (std::size_t j = 0; j < zt.size(); ++j) zt.data[j] = std::sqrt(ab) * zt.data[j] + std::sqrt(1.0 - ab) * noise.data[j];
  return mse_loss(model.denoise(g, store, g.constant(std::move(zt)), f, t, c), noise);
}

namespace {
std::pair<std::size_t, Tensor> draw(const WorldModel& model, const Tensor& like, Rng& rng) {
  const std::size_t t = 1 + rng.index(model.schedule().steps());
  Tensor noise(like.shape, 0.0);
  for (double& v : noise.data) v = rng.normal();
  return {t, std::move(noise)};
}
}  // namespace

double diffusion_train_step(const WorldModel& model, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                            std::span<const WmSample> batch, Rng& rng, double lr, double clip) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  store.zero_grad();
  double total = 0.0;
  for (const WmSample& s : batch) {
    auto [t, noise] = draw(model, s.z0, rng);
    Graph g;
    const Var loss = scale(diffusion_loss(model, g, store, vocab, s, t, noise), 1.0 / static_cast<double>(batch.size()));
    g.backward(loss);
    total += loss->value.data[0];
  }
  if (!std::isfinite(total)) throw NonFiniteValue("diffusion loss is not finite");
  if (clip > 0.0) nn::clip_grad_norm(store, clip);
  nn::adam_step(store, lr);
  return total;
}

double diffusion_eval_loss(const WorldModel& model, ParamStore& store, const vocab::TrajectoryVocabulary& vocab,
                           std::span<const WmSample> batch, uint64_t seed) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  Rng rng(seed);
  double total = 0.0;
  for (const WmSample& s : batch) {
    auto [t, noise] = draw(model, s.z0, rng);
    Graph g(false);
    total += diffusion_loss(model, g, store, vocab, s, t, noise)->value.data[0];
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace deskdrive::wm
