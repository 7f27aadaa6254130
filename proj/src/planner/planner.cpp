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

#include "deskdrive/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/nn/layers.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::planner {
namespace {

nn::Linear fproj(const PlannerConfig& c) { return {"plan.fproj", 8, c.width}; }
nn::Mlp ego_mlp(const PlannerConfig& c) { return nn::Mlp::make("plan.ego", 5, c.width, c.width); }
nn::AttentionBlock block(const PlannerConfig& c, std::size_t i) {
  return nn::AttentionBlock::make("plan.b" + std::to_string(i), c.width, c.ffn_hidden);
}
nn::Linear im_head(const PlannerConfig& c) { return {"plan.im", c.width, 1}; }
nn::Linear sim_head(const PlannerConfig& c) { return {"plan.sim", c.width, 5}; }
nn::Linear off_head(const PlannerConfig& c) { return {"plan.off", c.width, 2 * c.horizon}; }

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void put(std::string& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

double get(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IOFailure("truncated target cache");
  double v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

std::string targets_key(std::span<const sim::Scene> scenes, const std::string& vhash) {
  std::string s = vhash;
  for (const auto& sc : scenes) s += ":" + std::to_string(sc.seed) + "/" + sim::to_string(sc.difficulty);
  return sha1_hex(s).substr(0, 16);
}

}  // namespace

Tensor ego_features(const sim::EgoState& ego, const PlannerConfig& cfg) {
  Tensor t = Tensor::matrix(1, 5);
  t.data[static_cast<std::size_t>(ego.command)] = 1.0;
  t.data[3] = ego.speed * cfg.speed_scale;
  t.data[4] = ego.accel * cfg.accel_scale;
  return t;
}

Tensor anchor_queries(const wm::WorldModel& model, ParamStore& wm_store, const vocab::TrajectoryVocabulary& vocab) {
  Tensor a = Tensor::matrix(vocab.size(), 2 * vocab.F);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto v = vocab::flatten_xy(vocab.anchors[i]);
    std::copy(v.begin(), v.end(), a.row(i).begin());
  }
  Graph g(false);
  return model.anchor_embed(g, wm_store, g.constant(std::move(a)))->value;
}

void Planner::init(ParamStore& store, Rng& rng) const {
  fproj(cfg_).init(store, rng);
  Tensor pos = Tensor::matrix(64, cfg_.width);
  for (double& v : pos.data) v = rng.uniform(-0.1, 0.1);
  store.add("plan.fpos", std::move(pos));
  ego_mlp(cfg_).init(store, rng);
  for (std::size_t i = 0; i < cfg_.blocks; ++i) block(cfg_, i).init(store, rng);
  im_head(cfg_).init(store, rng);
  sim_head(cfg_).init(store, rng);
  off_head(cfg_).init(store, rng, nn::Init::kZero);
}

Var Planner::ego_embed(Graph& g, ParamStore& store, const Var& ego_feats) const {
  return ego_mlp(cfg_)(g, store, ego_feats);
}

Var Planner::plan_queries(Graph& g, ParamStore& store, const Var& anchor_q, const Var& f, const Var& e) const {
  if (anchor_q->value.cols() != cfg_.width) throw ShapeMismatch("anchor queries " + anchor_q->value.shape_string());
  if (f->value.rows() != 64 || f->value.cols() != 8) throw ShapeMismatch("history latent " + f->value.shape_string());
  const Var tokens = add(fproj(cfg_)(g, store, f), g.param(store, "plan.fpos"));
  const Var parts[] = {tokens, e};
  const Var context = nn::concat_rows(parts);
  Var h = anchor_q;
  for (std::size_t i = 0; i < cfg_.blocks; ++i) h = block(cfg_, i)(g, store, h, context);
  return h;
}

HeadVars Planner::score_heads(Graph& g, ParamStore& store, const Var& q_p) const {
  return {q_p, im_head(cfg_)(g, store, q_p), sim_head(cfg_)(g, store, q_p), off_head(cfg_)(g, store, q_p)};
}

HeadVars Planner::forward(Graph& g, ParamStore& store, const Tensor& anchor_q, const Tensor& f,
                          const Tensor& ego_feats) const {
  const Var e = ego_embed(g, store, g.constant(ego_feats));
  return score_heads(g, store, plan_queries(g, store, g.constant(anchor_q), g.constant(f), e));
}

PlannerOutput Planner::infer(ParamStore& store, const Tensor& anchor_q, const Tensor& f, const Tensor& ego_feats,
                             const vocab::TrajectoryVocabulary& vocab, std::size_t k) const {
  Graph g(false);
  const HeadVars h = forward(g, store, anchor_q, f, ego_feats);
  PlannerOutput out{h.im_logits->value, h.sim_logits->value, h.offsets->value, {}};
  for (double& v : out.sim_scores.data) v = sigmoid(v);
  out.top = topk_candidates(out.im_scores, out.sim_scores, out.offsets, vocab, k);
  return out;
}

sim::Trajectory refine(const sim::Trajectory& anchor, std::span<const double> offset_row) {
  if (offset_row.size() != 2 * anchor.size()) throw LengthMismatch("offset row does not match the anchor length");
  sim::Trajectory t = anchor;
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.waypoints[i].x += offset_row[2 * i];
    t.waypoints[i].y += offset_row[2 * i + 1];
  }
  return t;
}

std::vector<Candidate> topk_candidates(const Tensor& im_scores, const Tensor& sim_scores, const Tensor& offsets,
                                       const vocab::TrajectoryVocabulary& vocab, std::size_t k,
                                       const reward::PlanScoreWeights& w) {
  const std::size_t n = vocab.size();
  if (k < 1 || k > n) throw KOutOfRange("K=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  if (im_scores.size() != n || sim_scores.rows() != n || sim_scores.cols() != 5 || offsets.rows() != n)
    throw ShapeMismatch("planner outputs do not cover the vocabulary");
  const double mx = *std::max_element(im_scores.data.begin(), im_scores.data.end());
  double z = 0.0;
  for (double v : im_scores.data) z += std::exp(v - mx);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(im_scores.data[i] - mx) / z;
    score[i] = reward::combined_plan_score(p, reward::RewardBreakdown::from_array(sim_scores.row(i)), w);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), [&](std::size_t a, std::size_t b) {
    return score[a] != score[b] ? score[a] > score[b] : a < b;
  });
  std::vector<Candidate> out;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = order[j];
    out.push_back({i, refine(vocab.anchors[i], offsets.row(i)), score[i]});
  }
  return out;
}

PlannerTargets make_targets(const sim::Scene& scene, const vocab::TrajectoryVocabulary& vocab,
                            const sim::SimConfig& sim) {
  const sim::Trajectory expert_world = sim::expert_policy(scene, sim);
  const sim::Trajectory expert = vocab::normalize_to_ego_frame(expert_world, scene.ego);
  const double expert_progress = sim::rollout(scene, expert_world, sim).progress;
  const std::size_t n = vocab.size();
  PlannerTargets t;
  t.scene_seed = scene.seed;
  t.sim_targets = Tensor::matrix(n, 5);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& anchor = vocab.anchors[i];
    dist[i] = vocab::traj_distance(expert, anchor);
    const auto res = sim::rollout(scene, vocab::denormalize_from_ego_frame(anchor, scene.ego), sim);
    const auto b = reward::subscores(res, scene, expert_progress, sim).as_array();
    std::copy(b.begin(), b.end(), t.sim_targets.row(i).begin());
  }
  const auto im = reward::imitation_target(dist);
  t.im_target = Tensor({1, n}, im);
  t.positive = static_cast<std::size_t>(std::distance(dist.begin(), std::min_element(dist.begin(), dist.end())));
  const auto ye = vocab::flatten_xy(expert);
  const auto ya = vocab::flatten_xy(vocab.anchors[t.positive]);
  t.expert_offset = Tensor::matrix(1, ye.size());
  for (std::size_t j = 0; j < ye.size(); ++j) t.expert_offset.data[j] = ye[j] - ya[j];
  return t;
}

void save_targets(const std::vector<PlannerTargets>& targets, const std::string& vocab_hash,
                  const std::string& prefix) {
  const auto parent = std::filesystem::path(prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::string bin;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  std::size_t n = 0, d = 0;
  for (const auto& t : targets) {
    seeds.push_back({{"seed", t.scene_seed}, {"positive", t.positive}});
    n = t.im_target.size();
    d = t.expert_offset.size();
    for (double v : t.im_target.data) put(bin, v);
    for (double v : t.sim_targets.data) put(bin, v);
    for (double v : t.expert_offset.data) put(bin, v);
  }
  nlohmann::ordered_json manifest;
  manifest["vocab_hash"] = vocab_hash;
  manifest["anchors"] = n;
  manifest["offset_dims"] = d;
  manifest["layout"] = "per scene: im_target[N], sim_targets[N*5], expert_offset[D], f64 little-endian";
  manifest["scenes"] = seeds;
  write_file(prefix + ".bin", bin);
  write_file(prefix + ".json", manifest.dump(2) + "\n");
}

bool load_targets(std::vector<PlannerTargets>& out, const std::string& vocab_hash, const std::string& prefix) {
  if (!std::filesystem::exists(prefix + ".json") || !std::filesystem::exists(prefix + ".bin")) return false;
  const auto manifest = nlohmann::ordered_json::parse(read_file(prefix + ".json"));
  if (manifest.at("vocab_hash").get<std::string>() != vocab_hash) return false;
  const std::size_t n = manifest.at("anchors").get<std::size_t>();
  const std::size_t d = manifest.at("offset_dims").get<std::size_t>();
  const std::string bin = read_file(prefix + ".bin");
  std::size_t pos = 0;
  out.clear();
  for (const auto& s : manifest.at("scenes")) {
    PlannerTargets t;
    t.scene_seed = s.at("seed").get<uint64_t>();
    t.positive = s.at("positive").get<std::size_t>();
    t.im_target = Tensor::matrix(1, n);
    t.sim_targets = Tensor::matrix(n, 5);
    t.expert_offset = Tensor::matrix(1, d);
    for (double& v : t.im_target.data) v = get(bin, pos);
    for (double& v : t.sim_targets.data) v = get(bin, pos);
    for (double& v : t.expert_offset.data) v = get(bin, pos);
    out.push_back(std::move(t));
  }
  if (pos != bin.size()) throw IOFailure("target cache size does not match its manifest: " + prefix);
  return true;
}

std::vector<PlannerTargets> cached_targets(const std::string& dir, std::span<const sim::Scene> scenes,
                                           const vocab::TrajectoryVocabulary& vocab, const sim::SimConfig& sim) {
  const std::string vhash = vocab::vocab_hash(vocab);
  const std::string prefix = dir.empty() ? std::string() : dir + "/targets-" + targets_key(scenes, vhash);
  std::vector<PlannerTargets> out;
  if (!prefix.empty() && load_targets(out, vhash, prefix) && out.size() == scenes.size()) {
    bool match = true;
    for (std::size_t i = 0; i < scenes.size(); ++i) match = match && out[i].scene_seed == scenes[i].seed;
    if (match) return out;
  }
  out.assign(scenes.size(), {});
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenes.size(); ++i) out[i] = make_targets(scenes[i], vocab, sim);
  if (!prefix.empty()) save_targets(out, vhash, prefix);
  return out;
}

Var planner_loss(const HeadVars& h, const PlannerTargets& t) {
  const std::size_t n = h.im_logits->value.rows();
  if (t.im_target.size() != n || t.sim_targets.rows() != n)
    throw ShapeMismatch("targets cover " + std::to_string(t.im_target.size()) + " anchors, outputs " + std::to_string(n));
  const Var ce = nn::soft_cross_entropy(nn::reshape(h.im_logits, 1, n), t.im_target);
  const Var bce = nn::bce_with_logits(h.sim_logits, t.sim_targets);
  const Var l1 = nn::l1_loss(nn::slice_rows(h.offsets, t.positive, 1), t.expert_offset);
  return add(add(ce, bce), l1);
}

double planner_train_step(const Planner& planner, ParamStore& store, const Tensor& anchor_q,
                          std::span<const PlannerSample> batch, double lr, double clip) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  store.zero_grad();
  double total = 0.0;
  for (const PlannerSample& s : batch) {
    Graph g;
    const Var loss = scale(planner_loss(planner.forward(g, store, anchor_q, s.f, s.ego), *s.targets),
                           1.0 / static_cast<double>(batch.size()));
    g.backward(loss);
    total += loss->value.data[0];
  }
  if (!std::isfinite(total)) throw NonFiniteValue("planner loss is not finite");
  if (clip > 0.0) nn::clip_grad_norm(store, clip);
  nn::adam_step(store, lr);
  return total;
}

}  // namespace deskdrive::planner
