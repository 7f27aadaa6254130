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
#include <filesystem>
#include <initializer_list>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::harness {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void allow(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config section '" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; }))
      throw InvalidArgument("unknown config key '" + where + (where.empty() ? "" : ".") + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ordered_json split_json(const SplitRange& s) { return {{"offset", s.offset}, {"count", s.count}}; }

void read_split(const json& j, const char* key, SplitRange& s) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  allow(v, {"offset", "count"}, std::string("splits.") + key);
  read(v, "offset", s.offset);
  read(v, "count", s.count);
}

std::string short_hash(const ordered_json& j) { return sha1_hex(j.dump()).substr(0, 12); }

ordered_json vocab_key(const ExperimentConfig& c) {
  const auto all = config_to_json(c);
  return {{"scenes", all["splits"]["vocab"]}, {"vocab", all["vocab"]}};
}

ordered_json wm_key(const ExperimentConfig& c) {
  const auto all = config_to_json(c);
  return {{"vocab", vocab_key(c)},
          {"train", all["splits"]["train"]},
          {"val", all["splits"]["val"]},
          {"world_model", all["world_model"]},
          {"wm_seed", c.wm_seed}};
}

ordered_json planner_key(const ExperimentConfig& c) {
  const auto all = config_to_json(c);
  ordered_json k{{"vocab", vocab_key(c)},
                 {"train", all["splits"]["train"]},
                 {"val", all["splits"]["val"]},
                 {"planner", all["planner"]},
                 {"inherit_vision", c.inherit_vision},
                 {"inherit_motion", c.inherit_motion},
                 {"seed", c.seed}};
  if (c.inherit_vision || c.inherit_motion) k["wm"] = wm_key(c);
  else {
    auto arch = all["world_model"];
    for (const char* key : {"iters", "batch", "lr", "expert_fraction", "snapshot_fraction", "val_samples"}) arch.erase(key);
    k["encoder_arch"] = arch;
  }
  return k;
}

ordered_json far_key(const ExperimentConfig& c) {
  const auto all = config_to_json(c);
  ordered_json k{{"planner", planner_key(c)}, {"far", all["far"]}, {"rewarder", to_string(c.rewarder)}, {"seed", c.seed}};
  if (c.rewarder == RewarderMode::kFuture) k["wm"] = wm_key(c);
  return k;
}

}  // namespace

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kWorldModel: return "world_model";
    case Phase::kPlanner: return "planner";
    case Phase::kFar: return "far";
  }
  return "?";
}

std::string to_string(RewarderMode m) {
  switch (m) {
    case RewarderMode::kNone: return "none";
    case RewarderMode::kTraj: return "traj";
    case RewarderMode::kFuture: return "future";
  }
  return "?";
}

std::string to_string(Axis a) {
  switch (a) {
    case Axis::kInheritance: return "inheritance";
    case Axis::kRewarderFeatures: return "rewarder_features";
    case Axis::kTopK: return "topk";
  }
  return "?";
}

RewarderMode rewarder_mode_from_string(const std::string& s) {
  if (s == "none") return RewarderMode::kNone;
  if (s == "traj") return RewarderMode::kTraj;
  if (s == "future") return RewarderMode::kFuture;
  throw InvalidArgument("unknown rewarder mode '" + s + "'");
}

Axis axis_from_string(const std::string& s) {
  if (s == "inheritance") return Axis::kInheritance;
  if (s == "rewarder_features") return Axis::kRewarderFeatures;
  if (s == "topk") return Axis::kTopK;
  throw InvalidArgument("unknown ablation axis '" + s + "'");
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["wm_seed"] = c.wm_seed;
  j["splits"] = {{"vocab", split_json(c.vocab_scenes)},
                 {"train", split_json(c.train_scenes)},
                 {"val", split_json(c.val_scenes)},
                 {"test", split_json(c.test_scenes)}};
  j["vocab"] = {{"anchors", c.anchors}, {"seed", c.vocab_seed}, {"kmeans_iters", c.kmeans_iters}};
  const auto& w = c.wm;
  j["world_model"] = {{"width", w.width},
                      {"ffn_hidden", w.ffn_hidden},
                      {"k", w.k},
                      {"patch", w.patch},
                      {"latent_channels", w.latent_channels},
                      {"denoiser_blocks", w.denoiser_blocks},
                      {"diffusion_steps", w.diffusion_steps},
                      {"beta_start", w.beta_start},
                      {"beta_end", w.beta_end},
                      {"sample_steps", w.sample_steps},
                      {"anchor_scale", w.anchor_scale},
                      {"offset_scale", w.offset_scale},
                      {"latent_scale", w.latent_scale},
                      {"iters", c.wm_iters},
                      {"batch", c.wm_batch},
                      {"lr", c.wm_lr},
                      {"expert_fraction", c.wm_expert_fraction},
                      {"snapshot_fraction", c.wm_snapshot_fraction},
                      {"val_samples", c.wm_val_samples}};
  j["planner"] = {{"ffn_hidden", c.planner.ffn_hidden},
                  {"blocks", c.planner.blocks},
                  {"epochs", c.planner_epochs},
                  {"batch", c.planner_batch},
                  {"scenes", c.planner_scenes},
                  {"lr", c.planner_lr},
                  {"val_scenes", c.planner_val_scenes}};
  j["far"] = {{"queries", c.far.queries},
              {"ffn_hidden", c.far.ffn_hidden},
              {"head_hidden", c.far.head_hidden},
              {"epochs", c.far_epochs},
              {"batch", c.far_batch},
              {"scenes", c.far_scenes},
              {"candidates", c.far_candidates},
              {"lr", c.far_lr},
              {"val_scenes", c.far_val_scenes}};
  j["inherit_vision"] = c.inherit_vision;
  j["inherit_motion"] = c.inherit_motion;
  j["rewarder"] = to_string(c.rewarder);
  j["topk"] = c.topk;
  j["sensitivity"] = {{"scenes", c.sensitivity_scenes}, {"anchors", c.sensitivity_anchors}};
  j["latency_samples"] = c.latency_samples;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  allow(j, {"seed", "seeds", "wm_seed", "splits", "vocab", "world_model", "planner", "far", "inherit_vision",
            "inherit_motion", "rewarder", "topk", "sensitivity", "latency_samples"},
        "");
  read(j, "seed", c.seed);
  read(j, "seeds", c.seeds);
  read(j, "wm_seed", c.wm_seed);
  if (j.contains("splits")) {
    const json& s = j.at("splits");
    allow(s, {"vocab", "train", "val", "test"}, "splits");
    read_split(s, "vocab", c.vocab_scenes);
    read_split(s, "train", c.train_scenes);
    read_split(s, "val", c.val_scenes);
    read_split(s, "test", c.test_scenes);
  }
  if (j.contains("vocab")) {
    const json& v = j.at("vocab");
    allow(v, {"anchors", "seed", "kmeans_iters"}, "vocab");
    read(v, "anchors", c.anchors);
    read(v, "seed", c.vocab_seed);
    read(v, "kmeans_iters", c.kmeans_iters);
  }
  if (j.contains("world_model")) {
    const json& v = j.at("world_model");
    allow(v, {"width", "ffn_hidden", "k", "patch", "latent_channels", "denoiser_blocks", "diffusion_steps",
              "beta_start", "beta_end", "sample_steps", "anchor_scale", "offset_scale", "latent_scale", "iters",
              "batch", "lr", "expert_fraction", "snapshot_fraction", "val_samples"},
          "world_model");
    auto& w = c.wm;
    read(v, "width", w.width);
    read(v, "ffn_hidden", w.ffn_hidden);
    read(v, "k", w.k);
    read(v, "patch", w.patch);
    read(v, "latent_channels", w.latent_channels);
    read(v, "denoiser_blocks", w.denoiser_blocks);
    read(v, "diffusion_steps", w.diffusion_steps);
    read(v, "beta_start", w.beta_start);
    read(v, "beta_end", w.beta_end);
    read(v, "sample_steps", w.sample_steps);
    read(v, "anchor_scale", w.anchor_scale);
    read(v, "offset_scale", w.offset_scale);
    read(v, "latent_scale", w.latent_scale);
    read(v, "iters", c.wm_iters);
    read(v, "batch", c.wm_batch);
    read(v, "lr", c.wm_lr);
    read(v, "expert_fraction", c.wm_expert_fraction);
    read(v, "snapshot_fraction", c.wm_snapshot_fraction);
    read(v, "val_samples", c.wm_val_samples);
  }
  if (j.contains("planner")) {
    const json& v = j.at("planner");
    allow(v, {"ffn_hidden", "blocks", "epochs", "batch", "scenes", "lr", "val_scenes"}, "planner");
    read(v, "ffn_hidden", c.planner.ffn_hidden);
    read(v, "blocks", c.planner.blocks);
    read(v, "epochs", c.planner_epochs);
    read(v, "batch", c.planner_batch);
    read(v, "scenes", c.planner_scenes);
    read(v, "lr", c.planner_lr);
    read(v, "val_scenes", c.planner_val_scenes);
  }
  if (j.contains("far")) {
    const json& v = j.at("far");
    allow(v, {"queries", "ffn_hidden", "head_hidden", "epochs", "batch", "scenes", "candidates", "lr", "val_scenes"},
          "far");
    read(v, "queries", c.far.queries);
    read(v, "ffn_hidden", c.far.ffn_hidden);
    read(v, "head_hidden", c.far.head_hidden);
    read(v, "epochs", c.far_epochs);
    read(v, "batch", c.far_batch);
    read(v, "scenes", c.far_scenes);
    read(v, "candidates", c.far_candidates);
    read(v, "lr", c.far_lr);
    read(v, "val_scenes", c.far_val_scenes);
  }
  read(j, "inherit_vision", c.inherit_vision);
  read(j, "inherit_motion", c.inherit_motion);
  if (j.contains("rewarder")) c.rewarder = rewarder_mode_from_string(j.at("rewarder").get<std::string>());
  read(j, "topk", c.topk);
  if (j.contains("sensitivity")) {
    const json& v = j.at("sensitivity");
    allow(v, {"scenes", "anchors"}, "sensitivity");
    read(v, "scenes", c.sensitivity_scenes);
    read(v, "anchors", c.sensitivity_anchors);
  }
  read(j, "latency_samples", c.latency_samples);

  // tied dimensions
  c.planner.width = c.wm.width;
  c.planner.horizon = c.sim.horizon;
  c.far.width = c.wm.width;
  c.far.latent_channels = c.wm.latent_channels;
  c.far.latent_tokens = (c.sim.obs_cells / c.wm.patch) * (c.sim.obs_cells / c.wm.patch);
  if (c.seeds.empty()) throw InvalidArgument("config needs at least one seed in 'seeds'");
  if (c.topk < 1 || c.topk > c.far_candidates) throw InvalidArgument("topk must lie in [1, far.candidates]");
  check_split_hygiene(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IOFailure("config not found: " + path);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IOFailure("cannot parse config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  write_file(path, config_to_json(cfg).dump(2) + "\n");
}

std::string config_hash(const ExperimentConfig& cfg) { return sha1_hex(config_to_json(cfg).dump()); }

std::vector<uint64_t> split_seeds(const ExperimentConfig& cfg, Split split) {
  const SplitRange r = split == Split::kVocab   ? cfg.vocab_scenes
                       : split == Split::kTrain ? cfg.train_scenes
                       : split == Split::kVal   ? cfg.val_scenes
                                                : cfg.test_scenes;
  std::vector<uint64_t> out(r.count);
  for (std::size_t i = 0; i < r.count; ++i) out[i] = r.offset + i;
  return out;
}

std::vector<sim::Scene> make_split(const ExperimentConfig& cfg, Split split) {
  const auto seeds = split_seeds(cfg, split);
  std::vector<sim::Scene> out(seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < seeds.size(); ++i)
    out[i] = sim::generate_scene(seeds[i], static_cast<sim::Difficulty>(seeds[i] % 3), cfg.sim);
  return out;
}

void check_split_hygiene(const ExperimentConfig& cfg) {
  const std::pair<const char*, SplitRange> r[] = {
      {"vocab", cfg.vocab_scenes}, {"train", cfg.train_scenes}, {"val", cfg.val_scenes}, {"test", cfg.test_scenes}};
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      const auto& x = r[a].second;
      const auto& y = r[b].second;
      if (x.count == 0 || y.count == 0) continue;
      if (x.offset < y.offset + y.count && y.offset < x.offset + x.count)
        throw InvalidArgument(std::string("scene seeds of splits '") + r[a].first + "' and '" + r[b].first + "' overlap");
    }
}

std::string Layout::vocab_path(const ExperimentConfig& cfg) const {
  return root + "/vocab-" + short_hash(vocab_key(cfg)) + ".json";
}
std::string Layout::wm_dir(const ExperimentConfig& cfg) const { return root + "/wm-" + short_hash(wm_key(cfg)); }
std::string Layout::planner_dir(const ExperimentConfig& cfg) const {
  return root + "/planner-" + short_hash(planner_key(cfg));
}
std::string Layout::far_dir(const ExperimentConfig& cfg) const { return root + "/far-" + short_hash(far_key(cfg)); }

}  // namespace deskdrive::harness
