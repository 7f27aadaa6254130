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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/harness/internal.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::harness {

namespace fs = std::filesystem;

namespace detail {

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

double cosine_lr(double base, std::size_t step, std::size_t total) {
  const double u = total <= 1 ? 0.0 : static_cast<double>(step) / static_cast<double>(total - 1);
  return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * u)));
}

bool checkpoint_exists(const std::string& prefix) {
  return !prefix.empty() && fs::exists(prefix + ".bin") && fs::exists(prefix + ".json");
}

ParamStore load_store(const std::string& prefix) {
  ParamStore store;
  nn::load_checkpoint(store, prefix);
  store.set_frozen(true);
  return store;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

vocab::TrajectoryVocabulary require_vocab(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw MissingPrerequisite("trajectory vocabulary not built: " + path);
  return vocab::load_vocab(path);
}

rewarder::FarConfig far_config(const ExperimentConfig& cfg) {
  rewarder::FarConfig f = cfg.far;
  f.future_features = cfg.rewarder != RewarderMode::kTraj;
  return f;
}

Stack load_stack(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab, const Checkpoints& ck,
                 bool need_far) {
  Stack s(cfg, vocab);
  if (!checkpoint_exists(ck.planner) || !checkpoint_exists(ck.planner + "_encoders"))
    throw MissingPrerequisite("planner checkpoint missing: " + ck.planner);
  s.enc = load_store(ck.planner + "_encoders");
  s.plan = load_store(ck.planner);
  s.anchor_q = planner::anchor_queries(s.model, s.enc, s.vocab);
  if (checkpoint_exists(ck.world_model)) {
    s.wm = load_store(ck.world_model);
    s.has_wm = true;
  }
  if (need_far && cfg.rewarder != RewarderMode::kNone) {
    if (!checkpoint_exists(ck.rewarder)) throw MissingPrerequisite("rewarder checkpoint missing: " + ck.rewarder);
    s.far_store = load_store(ck.rewarder);
  }
  return s;
}

ScoredRollout score_trajectory(const sim::Scene& scene, const sim::Trajectory& ego_traj, double expert_progress,
                               const sim::SimConfig& sim) {
  const auto res = sim::rollout(scene, vocab::denormalize_from_ego_frame(ego_traj, scene.ego), sim);
  ScoredRollout out;
  out.breakdown = reward::subscores(res, scene, expert_progress, sim);
  out.score = reward::driving_score(out.breakdown);
  return out;
}

double expert_progress(const sim::Scene& scene, const sim::SimConfig& sim) {
  return sim::rollout(scene, sim::expert_policy(scene, sim), sim).progress;
}

sim::Observation observe(const sim::Scene& scene, const sim::SimConfig& sim) {
  return sim::render_observation(scene, sim::history_states(scene, sim), sim);
}

PlannedScene plan_scene(const ExperimentConfig& cfg, Stack& s, const sim::Scene& scene, std::size_t k) {
  PlannedScene out;
  const auto obs = observe(scene, cfg.sim);
  auto t0 = Clock::now();
  out.f = s.model.encode_history(s.enc, obs).values;
  out.encoders_ms = ms_since(t0);

  t0 = Clock::now();
  Graph g(false);
  const auto heads = s.planner.forward(g, s.plan, s.anchor_q, out.f, planner::ego_features(scene.ego, cfg.planner));
  Tensor sims = heads.sim_logits->value;
  for (double& v : sims.data) v = 1.0 / (1.0 + std::exp(-v));
  out.candidates = planner::topk_candidates(heads.im_logits->value, sims, heads.offsets->value, s.vocab, k);
  out.planner_ms = ms_since(t0);
  out.queries = heads.queries->value;
  return out;
}

Tensor query_row(const Tensor& queries, std::size_t index) {
  const auto row = queries.row(index);
  return Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end()));
}

}  // namespace detail

using namespace detail;

namespace {

std::vector<sim::Scene> head(std::span<const sim::Scene> scenes, std::size_t n) {
  return {scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(std::min(n, scenes.size()))};
}

void mark_done(const std::string& dir, const ExperimentConfig& cfg) {
  write_file(dir + "/config.json", config_to_json(cfg).dump(2) + "\n");
  write_file(dir + "/DONE", "ok\n");
}

bool is_done(const std::string& dir) { return fs::exists(dir + "/DONE"); }

// Frozen encoders handed to the planner: inherited from the world model or fresh.
ParamStore planner_encoders(const ExperimentConfig& cfg, const std::string& wm_prefix, const wm::WorldModel& model) {
  ParamStore fresh;
  Rng rng(derive_seed(cfg.seed, 101));
  model.init(fresh, rng);
  ParamStore inherited;
  if (cfg.inherit_vision || cfg.inherit_motion) {
    if (!checkpoint_exists(wm_prefix)) throw MissingPrerequisite("world-model checkpoint missing: " + wm_prefix);
    nn::load_checkpoint(inherited, wm_prefix);
  }
  ParamStore enc;
  enc.copy_from(cfg.inherit_vision ? inherited : fresh, "enc.");
  enc.copy_from(cfg.inherit_motion ? inherited : fresh, "motion.");
  enc.set_frozen(true);
  return enc;
}

struct PlannerData {
  std::vector<planner::PlannerTargets> targets;
  std::vector<planner::PlannerSample> samples;
};

PlannerData planner_data(const ExperimentConfig& cfg, std::span<const sim::Scene> scenes, const std::string& cache_dir,
                         const wm::WorldModel& model, ParamStore& enc, const vocab::TrajectoryVocabulary& vocab) {
  PlannerData d;
  d.targets = planner::cached_targets(cache_dir, scenes, vocab, cfg.sim);
  d.samples.resize(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenes.size(); ++i)
    d.samples[i] = {model.encode_history(enc, observe(scenes[i], cfg.sim)).values,
                    planner::ego_features(scenes[i].ego, cfg.planner), &d.targets[i]};
  return d;
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
}

std::vector<rewarder::FarSample> far_samples(const ExperimentConfig& cfg, Stack& s, std::span<const sim::Scene> scenes) {
  const bool future = cfg.rewarder == RewarderMode::kFuture;
  std::vector<rewarder::FarSample> out(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& sc = scenes[i];
    const auto planned = plan_scene(cfg, s, sc, cfg.far_candidates);
    const auto& cands = planned.candidates;
    const double ep = expert_progress(sc, cfg.sim);
    std::vector<double> oracle;
    for (const auto& c : cands) oracle.push_back(score_trajectory(sc, c.traj, ep, cfg.sim).score);
    const auto set = rewarder::build_preference_pairs(oracle, derive_seed(cfg.seed, sc.seed));

    rewarder::FarSample sample;
    sample.f = planned.f;
    std::vector<std::size_t> local(cands.size(), 0);
    const Tensor f_wm = future ? s.model.encode_history(s.wm, observe(sc, cfg.sim)).values : Tensor();
    for (std::size_t j = 0; j < set.selected.size(); ++j) {
      const std::size_t k = set.selected[j];
      local[k] = j;
      sample.c.push_back(rewarder::candidate_embedding(s.model, s.enc, cands[k], s.vocab));
      sample.qp_rows.push_back(query_row(planned.queries, cands[k].index));
      if (future) {
        // target from the full world model, not differentiated through
        const Tensor c = s.model.encode_motion(s.wm, cands[k].traj, s.vocab, cfg.wm.k).rows;
        sample.z.push_back(s.model.sample_future_latent(s.wm, f_wm, c, cfg.wm.sample_steps, derive_seed(sc.seed, k)).values);
      }
    }
    for (const auto& p : set.pairs)
      sample.pairs.push_back({local[p.pos_index], local[p.neg_index], p.pos_oracle, p.neg_oracle});
    out[i] = std::move(sample);
  }
  return out;
}

}  // namespace

vocab::TrajectoryVocabulary build_vocab(const ExperimentConfig& cfg, std::span<const sim::Scene> scenes) {
  std::vector<sim::Trajectory> trajs(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenes.size(); ++i)
    trajs[i] = vocab::normalize_to_ego_frame(sim::expert_policy(scenes[i], cfg.sim), scenes[i].ego);
  return vocab::kmeans_cluster(trajs, cfg.anchors, cfg.vocab_seed, cfg.kmeans_iters);
}

void train_world_model(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                       std::span<const sim::Scene> train, std::span<const sim::Scene> val_scenes,
                       const std::string& out) {
  if (train.empty()) throw InvalidArgument("world-model training needs scenes");
  ensure_parent(out);
  std::vector<sim::Trajectory> experts(train.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < train.size(); ++i) experts[i] = sim::expert_policy(train[i], cfg.sim);

  const wm::WorldModel model(cfg.wm, cfg.sim);
  ParamStore store;
  Rng init_rng(derive_seed(cfg.wm_seed, 0));
  model.init(store, init_rng);

  // fixed validation set, alternating expert and random-anchor conditioning
  std::vector<wm::WmSample> val;
  Rng vr(derive_seed(cfg.wm_seed, 2));
  for (const auto& sc : head(val_scenes, cfg.wm_val_samples)) {
    auto traj = sim::expert_policy(sc, cfg.sim);
    if (val.size() % 2 == 1) traj = vocab::denormalize_from_ego_frame(vocab.anchors[vr.index(vocab.size())], sc.ego);
    val.push_back(wm::make_sample(model, sc, traj));
  }
  const uint64_t val_seed = derive_seed(cfg.wm_seed, 3);

  Rng rng(derive_seed(cfg.wm_seed, 1));
  std::string curve = "iter,train_loss,val_loss\n";
  const std::size_t every = std::max<std::size_t>(1, cfg.wm_iters / 20);
  const std::size_t snapshot =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.wm_snapshot_fraction * cfg.wm_iters)));
  for (std::size_t it = 0; it < cfg.wm_iters; ++it) {
    std::vector<wm::WmSample> batch;
    for (std::size_t b = 0; b < cfg.wm_batch; ++b) {
      const std::size_t s = rng.index(train.size());
      sim::Trajectory traj = experts[s];
      if (rng.uniform() >= cfg.wm_expert_fraction)
        traj = vocab::denormalize_from_ego_frame(vocab.anchors[rng.index(vocab.size())], train[s].ego);
      batch.push_back(wm::make_sample(model, train[s], traj));
    }
    const double loss = wm::diffusion_train_step(model, store, vocab, batch, rng, cosine_lr(cfg.wm_lr, it, cfg.wm_iters));
    if (it % every == 0 || it + 1 == cfg.wm_iters) {
      const double v = val.empty() ? 0.0 : wm::diffusion_eval_loss(model, store, vocab, val, val_seed);
      curve += std::to_string(it) + "," + fmt(loss) + "," + fmt(v) + "\n";
    }
    if (it + 1 == snapshot) nn::save_checkpoint(store, out + "_snapshot");
  }
  nn::save_checkpoint(store, out);
  write_file(out + "_curve.csv", curve);
}

void train_planner(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                   std::span<const sim::Scene> train_scenes, std::span<const sim::Scene> val_scenes,
                   const std::string& wm_prefix, const std::string& out, const std::string& cache_dir) {
  const wm::WorldModel model(cfg.wm, cfg.sim);
  ParamStore enc = planner_encoders(cfg, wm_prefix, model);
  ensure_parent(out);

  const auto tr = head(train_scenes, cfg.planner_scenes);
  const auto vs = head(val_scenes, cfg.planner_val_scenes);
  if (tr.empty()) throw InvalidArgument("planner training needs scenes");
  const PlannerData train = planner_data(cfg, tr, cache_dir, model, enc, vocab);
  const PlannerData val = planner_data(cfg, vs, cache_dir, model, enc, vocab);
  const Tensor anchor_q = planner::anchor_queries(model, enc, vocab);

  const planner::Planner p(cfg.planner);
  ParamStore store;
  Rng init_rng(derive_seed(cfg.seed, 102));
  p.init(store, init_rng);
  Rng order_rng(derive_seed(cfg.seed, 103));

  auto val_loss = [&] {
    double total = 0.0;
    for (const auto& s : val.samples) {
      Graph g(false);
      total += planner::planner_loss(p.forward(g, store, anchor_q, s.f, s.ego), *s.targets)->value.data[0];
    }
    return val.samples.empty() ? 0.0 : total / static_cast<double>(val.samples.size());
  };

  std::string curve = "epoch,train_loss,val_loss\n0,," + fmt(val_loss()) + "\n";
  const std::size_t n = train.samples.size();
  const std::size_t total = ((n + cfg.planner_batch - 1) / cfg.planner_batch) * cfg.planner_epochs;
  std::size_t step = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < cfg.planner_epochs; ++e) {
    shuffle(order, order_rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < n; b += cfg.planner_batch) {
      std::vector<planner::PlannerSample> batch;
      for (std::size_t j = b; j < std::min(n, b + cfg.planner_batch); ++j) batch.push_back(train.samples[order[j]]);
      sum += planner::planner_train_step(p, store, anchor_q, batch, cosine_lr(cfg.planner_lr, step++, total)) *
             static_cast<double>(batch.size());
    }
    curve += std::to_string(e + 1) + "," + fmt(sum / static_cast<double>(n)) + "," + fmt(val_loss()) + "\n";
  }
  nn::save_checkpoint(store, out);
  nn::save_checkpoint(enc, out + "_encoders");
  write_file(out + "_curve.csv", curve);
}

void train_rewarder(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                    std::span<const sim::Scene> train_scenes, std::span<const sim::Scene> val_scenes,
                    const std::string& planner_prefix, const std::string& wm_prefix, const std::string& out) {
  if (cfg.rewarder == RewarderMode::kNone) throw InvalidArgument("rewarder mode is 'none'; nothing to train");
  Stack s = load_stack(cfg, vocab, {"", wm_prefix, planner_prefix, ""}, false);
  const bool future = cfg.rewarder == RewarderMode::kFuture;
  if (future && !s.has_wm) throw MissingPrerequisite("world-model checkpoint missing: " + wm_prefix);
  ensure_parent(out);

  const auto tr = head(train_scenes, cfg.far_scenes);
  if (tr.empty()) throw InvalidArgument("rewarder training needs scenes");
  const auto train = far_samples(cfg, s, tr);
  const auto val = far_samples(cfg, s, head(val_scenes, cfg.far_val_scenes));

  const rewarder::FutureRewarder far(far_config(cfg));
  ParamStore store;
  Rng init_rng(derive_seed(cfg.seed, 201));
  far.init(store, init_rng);
  Rng order_rng(derive_seed(cfg.seed, 202));

  auto val_bt = [&] {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& v : val) {
      if (v.pairs.empty()) continue;
      Graph g(false);
      rewarder::FarStepStats st;
      rewarder::far_loss(far, g, store, v, &st);
      total += st.bt;
      ++n;
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
  };
  auto val_align = [&] { return future ? rewarder::far_eval_align(far, store, val) : 0.0; };

  std::string curve = "epoch,train_align,train_bt,val_align,val_bt\n0,,," + fmt(val_align()) + "," + fmt(val_bt()) + "\n";
  const std::size_t n = train.size();
  const std::size_t total = ((n + cfg.far_batch - 1) / cfg.far_batch) * cfg.far_epochs;
  std::size_t step = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < cfg.far_epochs; ++e) {
    shuffle(order, order_rng);
    double align = 0.0, bt = 0.0;
    for (std::size_t b = 0; b < n; b += cfg.far_batch) {
      std::vector<rewarder::FarSample> batch;
      for (std::size_t j = b; j < std::min(n, b + cfg.far_batch); ++j) batch.push_back(train[order[j]]);
      const auto st = rewarder::far_train_step(far, store, batch, cosine_lr(cfg.far_lr, step++, total));
      align += st.align * static_cast<double>(batch.size());
      bt += st.bt * static_cast<double>(batch.size());
    }
    curve += std::to_string(e + 1) + "," + fmt(align / static_cast<double>(n)) + "," + fmt(bt / static_cast<double>(n)) +
             "," + fmt(val_align()) + "," + fmt(val_bt()) + "\n";
  }
  nn::save_checkpoint(store, out);
  write_file(out + "_curve.csv", curve);
}

// ---- layout-driven runs ------------------------------------------------------

Checkpoints checkpoints(const ExperimentConfig& cfg, const Layout& layout) {
  Checkpoints c;
  c.vocab = layout.vocab_path(cfg);
  c.world_model = layout.wm_dir(cfg) + "/wm";
  c.planner = layout.planner_dir(cfg) + "/planner";
  if (cfg.rewarder != RewarderMode::kNone) c.rewarder = layout.far_dir(cfg) + "/far";
  return c;
}

std::string build_vocab(const ExperimentConfig& cfg, const Layout& layout) {
  const std::string path = layout.vocab_path(cfg);
  if (fs::exists(path)) return path;
  const auto v = build_vocab(cfg, make_split(cfg, Split::kVocab));
  ensure_parent(path);
  vocab::save_vocab(v, path);
  return path;
}

std::string run_phase(Phase phase, const ExperimentConfig& cfg, const Layout& layout) {
  const Checkpoints ck = checkpoints(cfg, layout);
  std::string dir, prefix;
  switch (phase) {
    case Phase::kWorldModel: dir = layout.wm_dir(cfg), prefix = ck.world_model; break;
    case Phase::kPlanner: dir = layout.planner_dir(cfg), prefix = ck.planner; break;
    case Phase::kFar:
      if (cfg.rewarder == RewarderMode::kNone) return {};
      dir = layout.far_dir(cfg), prefix = ck.rewarder;
      break;
  }
  if (is_done(dir)) return prefix;
  const auto vocab = require_vocab(ck.vocab);
  const auto train = make_split(cfg, Split::kTrain);
  const auto val = make_split(cfg, Split::kVal);
  switch (phase) {
    case Phase::kWorldModel: train_world_model(cfg, vocab, train, val, prefix); break;
    case Phase::kPlanner: train_planner(cfg, vocab, train, val, ck.world_model, prefix, layout.cache_dir()); break;
    case Phase::kFar: train_rewarder(cfg, vocab, train, val, ck.planner, ck.world_model, prefix); break;
  }
  mark_done(dir, cfg);
  return prefix;
}

void run_pipeline(const ExperimentConfig& cfg, const Layout& layout) {
  build_vocab(cfg, layout);
  if (cfg.inherit_vision || cfg.inherit_motion || cfg.rewarder == RewarderMode::kFuture)
    run_phase(Phase::kWorldModel, cfg, layout);
  run_phase(Phase::kPlanner, cfg, layout);
  run_phase(Phase::kFar, cfg, layout);
}

}  // namespace deskdrive::harness
