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

#include "deskdrive/rewarder/rewarder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deskdrive/core/error.hpp"
#include "deskdrive/nn/optim.hpp"

namespace deskdrive::rewarder {
namespace {

std::size_t group(const FarConfig& c) { return c.latent_tokens * c.latent_channels / c.queries; }

nn::Linear fproj(const FarConfig& c) { return {"far.fproj", c.latent_channels, c.width}; }
nn::AttentionBlock scene_block(const FarConfig& c) { return nn::AttentionBlock::make("far.scene", c.width, c.ffn_hidden); }
nn::Linear zout(const FarConfig& c) { return {"far.zout", c.width, group(c)}; }
nn::Linear zin(const FarConfig& c) { return {"far.zin", group(c), c.width}; }
nn::AttentionBlock future_block(const FarConfig& c) { return nn::AttentionBlock::make("far.future", c.width, c.ffn_hidden); }
nn::Mlp head(const FarConfig& c) { return nn::Mlp::make("far.head", c.width, c.head_hidden, 1); }
nn::Linear traj_q(const FarConfig& c) { return {"far.traj.q", c.width, c.width}; }
nn::Linear traj_c(const FarConfig& c) { return {"far.traj.c", c.width, c.width}; }
nn::Mlp traj_head(const FarConfig& c) { return nn::Mlp::make("far.traj.head", c.width, c.head_hidden, 1); }

Tensor table(std::size_t r, std::size_t c, double a, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

Tensor candidate_embedding(const wm::WorldModel& model, ParamStore& wm_store, const planner::Candidate& cand,
                           const vocab::TrajectoryVocabulary& vocab) {
  const auto a = vocab::flatten_xy(vocab.anchors.at(cand.index));
  const auto y = vocab::flatten_xy(cand.traj);
  Graph g(false);
  return model.motion_rows(g, wm_store, Tensor({1, y.size()}, y), Tensor({1, a.size()}, a))->value;
}

void FutureRewarder::init(ParamStore& store, Rng& rng) const {
  if ((cfg_.latent_tokens * cfg_.latent_channels) % cfg_.queries != 0)
    throw InvalidArgument("latent size must divide evenly among the scene queries");
  if (cfg_.future_features) {
    store.add("far.qs", table(cfg_.queries, cfg_.width, 1.0, rng));
    fproj(cfg_).init(store, rng);
    store.add("far.fpos", table(cfg_.latent_tokens, cfg_.width, 0.1, rng));
    scene_block(cfg_).init(store, rng);
    zout(cfg_).init(store, rng);
    zin(cfg_).init(store, rng);
    store.add("far.zpos", table(cfg_.queries, cfg_.width, 0.1, rng));
    future_block(cfg_).init(store, rng);
    head(cfg_).init(store, rng, nn::Init::kZero);
  } else {
    traj_q(cfg_).init(store, rng);
    traj_c(cfg_).init(store, rng);
    traj_head(cfg_).init(store, rng, nn::Init::kZero);
  }
}

nn::AttentionBlock::KeyValues FutureRewarder::scene_context(Graph& g, ParamStore& store, const Var& f) const {
  if (f->value.rows() != cfg_.latent_tokens || f->value.cols() != cfg_.latent_channels)
    throw ShapeMismatch("history latent " + f->value.shape_string());
  return scene_block(cfg_).project(g, store, add(fproj(cfg_)(g, store, f), g.param(store, "far.fpos")));
}

Var FutureRewarder::distill_future(Graph& g, ParamStore& store, const nn::AttentionBlock::KeyValues& fkv,
                                   const Var& c_k) const {
  if (c_k->value.cols() != cfg_.width) throw ShapeMismatch("candidate embedding " + c_k->value.shape_string());
  const auto blk = scene_block(cfg_);
  const auto kv = nn::AttentionBlock::KeyValues::concat(fkv, blk.project(g, store, c_k));
  const Var h = blk.attend(g, store, g.param(store, "far.qs"), kv);
  return reshape(zout(cfg_)(g, store, h), cfg_.latent_tokens, cfg_.latent_channels);
}

Var FutureRewarder::distill_future(Graph& g, ParamStore& store, const Var& f, const Var& c_k) const {
  return distill_future(g, store, scene_context(g, store, f), c_k);
}

Var FutureRewarder::future_reward(Graph& g, ParamStore& store, const Var& c_k, const Var& z_hat) const {
  const Var tokens = add(zin(cfg_)(g, store, reshape(z_hat, cfg_.queries, group(cfg_))), g.param(store, "far.zpos"));
  const Var h = future_block(cfg_)(g, store, c_k, tokens);
  return head(cfg_)(g, store, h);
}

Var FutureRewarder::traj_reward(Graph& g, ParamStore& store, const Var& qp_row, const Var& c_k) const {
  const Var h = gelu(add(traj_q(cfg_)(g, store, qp_row), traj_c(cfg_)(g, store, c_k)));
  return traj_head(cfg_)(g, store, h);
}

std::vector<double> FutureRewarder::score(ParamStore& store, const Tensor& f, std::span<const Tensor> c,
                                          std::span<const Tensor> qp_rows) const {
  Graph g(false);
  std::vector<double> out;
  out.reserve(c.size());
  if (cfg_.future_features) {
    const auto fkv = scene_context(g, store, g.constant(f));
    for (const Tensor& ck : c) {
      const Var cv = g.constant(ck);
      out.push_back(future_reward(g, store, cv, distill_future(g, store, fkv, cv))->value.data[0]);
    }
  } else {
    if (qp_rows.size() != c.size()) throw LengthMismatch("one planner query row is needed per candidate");
    for (std::size_t k = 0; k < c.size(); ++k)
      out.push_back(traj_reward(g, store, g.constant(qp_rows[k]), g.constant(c[k]))->value.data[0]);
  }
  return out;
}

Var align_loss(const Var& z_hat, const Tensor& z) {
  if (!nn::same_shape(z_hat->value, z)) throw ShapeMismatch("distilled " + z_hat->value.shape_string() + " vs " + z.shape_string());
  return mse_loss(z_hat, z);
}

Var bt_loss(std::span<const PreferencePair> pairs, const Var& rewards) {
  if (pairs.empty()) throw EmptyPairs("no preference pairs");
  std::vector<std::size_t> pos, neg;
  for (const auto& p : pairs) {
    pos.push_back(p.pos_index);
    neg.push_back(p.neg_index);
  }
  const Var diff = sub(gather_rows(rewards, pos), gather_rows(rewards, neg));
  return scale(mean_all(log_sigmoid(diff)), -1.0);
}

double bt_loss(std::span<const PreferencePair> pairs, std::span<const double> rewards) {
  Graph g(false);
  return bt_loss(pairs, g.constant(Tensor({rewards.size(), 1}, std::vector<double>(rewards.begin(), rewards.end()))))
      ->value.data[0];
}

PreferenceSet build_preference_pairs(std::span<const double> oracle, uint64_t seed) {
  const std::size_t n = oracle.size();
  if (n < 7) throw TooFewCandidates("need at least 7 candidates, got " + std::to_string(n));
  std::vector<std::size_t> rest(n - 1);
  std::iota(rest.begin(), rest.end(), 1);
  std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return oracle[a] < oracle[b]; });
  PreferenceSet out;
  out.selected = {0, rest[0], rest[1], rest[2]};
  std::vector<std::size_t> pool(rest.begin() + 3, rest.end());
  std::sort(pool.begin(), pool.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < 3; ++i) {
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    out.selected.push_back(pool[i]);
  }
  for (std::size_t a = 0; a < out.selected.size(); ++a)
    for (std::size_t b = a + 1; b < out.selected.size(); ++b) {
      std::size_t i = out.selected[a], j = out.selected[b];
      if (oracle[i] == oracle[j]) continue;
      if (oracle[i] < oracle[j]) std::swap(i, j);
      out.pairs.push_back({i, j, oracle[i], oracle[j]});
    }
  return out;
}

std::size_t select_trajectory(std::span<const double> rewards) {
  if (rewards.empty()) throw InvalidArgument("no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i)
    if (rewards[i] > rewards[best]) best = i;
  return best;
}

Var far_loss(const FutureRewarder& far, Graph& g, ParamStore& store, const FarSample& s, FarStepStats* stats) {
  std::vector<Var> rewards;
  Var total;
  if (far.config().future_features) {
    if (s.z.size() != s.c.size()) throw LengthMismatch("one latent target is needed per candidate");
    const auto fkv = far.scene_context(g, store, g.constant(s.f));
    std::vector<Var> aligns;
    for (std::size_t k = 0; k < s.c.size(); ++k) {
      const Var cv = g.constant(s.c[k]);
      const Var zh = far.distill_future(g, store, fkv, cv);
      aligns.push_back(align_loss(zh, s.z[k]));
      rewards.push_back(far.future_reward(g, store, cv, zh));
    }
    total = scale(sum_all(nn::concat_rows(aligns)), 1.0 / static_cast<double>(aligns.size()));
    if (stats) stats->align = total->value.data[0];
  } else {
    if (s.qp_rows.size() != s.c.size()) throw LengthMismatch("one planner query row is needed per candidate");
    for (std::size_t k = 0; k < s.c.size(); ++k)
      rewards.push_back(far.traj_reward(g, store, g.constant(s.qp_rows[k]), g.constant(s.c[k])));
  }
  if (!s.pairs.empty()) {
    const Var bt = bt_loss(s.pairs, nn::concat_rows(rewards));
    if (stats) stats->bt = bt->value.data[0];
    total = total ? add(total, bt) : bt;
  }
  return total ? total : g.constant(Tensor::scalar(0.0));
}

FarStepStats far_train_step(const FutureRewarder& far, ParamStore& store, std::span<const FarSample> batch, double lr,
                            double clip) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  store.zero_grad();
  FarStepStats sum;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const FarSample& s : batch) {
    Graph g;
    FarStepStats st;
    const Var loss = far_loss(far, g, store, s, &st);
    if (loss->requires_grad) g.backward(scale(loss, inv));
    sum.align += st.align * inv;
    sum.bt += st.bt * inv;
  }
  if (!std::isfinite(sum.align + sum.bt)) throw NonFiniteValue("rewarder loss is not finite");
  if (clip > 0.0) nn::clip_grad_norm(store, clip);
  nn::adam_step(store, lr);
  return sum;
}

double far_eval_align(const FutureRewarder& far, ParamStore& store, std::span<const FarSample> batch) {
  double total = 0.0;
  std::size_t count = 0;
  for (const FarSample& s : batch) {
    Graph g(false);
    const auto fkv = far.scene_context(g, store, g.constant(s.f));
    for (std::size_t k = 0; k < s.c.size(); ++k) {
      total += align_loss(far.distill_future(g, store, fkv, g.constant(s.c[k])), s.z[k])->value.data[0];
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace deskdrive::rewarder
