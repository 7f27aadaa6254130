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
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/harness/internal.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::harness {

namespace fs = std::filesystem;
using namespace detail;
using nlohmann::ordered_json;

namespace {

ordered_json breakdown_json(const reward::RewardBreakdown& b, double score) {
  return {{"nc", b.nc}, {"dac", b.dac}, {"ttc", b.ttc}, {"comf", b.comf}, {"ep", b.ep}, {"score", score}};
}

ordered_json deterministic_summary(const EvalReport& r) {
  ordered_json j;
  j["config_hash"] = r.config_hash;
  j["checkpoints"] = ordered_json::object();
  for (const auto& [name, h] : r.checkpoint_hashes) j["checkpoints"][name] = h;
  j["topk"] = r.topk;
  j["rewarder"] = r.rewarder;
  j["scenes"] = r.scenes.size();
  j["policies"] = ordered_json::object();
  for (std::size_t p = 0; p < kNumPolicies; ++p) j["policies"][policy_name(p)] = breakdown_json(r.mean[p].breakdown, r.mean[p].score);
  j["denoiser_calls"] = r.denoiser_calls;
  if (r.sensitivity) {
    j["sensitivity"] = {{"spearman", r.sensitivity->spearman}, {"sample_spearman", r.sensitivity->sample_spearman}};
  }
  return j;
}

std::array<PolicyResult, kNumPolicies> policy_means(const std::vector<SceneEval>& scenes) {
  std::array<PolicyResult, kNumPolicies> mean{};
  for (std::size_t p = 0; p < kNumPolicies; ++p) {
    std::array<double, 5> acc{};
    double score = 0.0;
    for (const auto& s : scenes) {
      const auto a = s.policies[p].breakdown.as_array();
      for (std::size_t i = 0; i < 5; ++i) acc[i] += a[i];
      score += s.policies[p].score;
    }
    const double n = scenes.empty() ? 1.0 : static_cast<double>(scenes.size());
    for (double& v : acc) v /= n;
    mean[p].breakdown = reward::RewardBreakdown::from_array(acc);
    mean[p].score = score / n;
  }
  return mean;
}

}  // namespace

std::string policy_name(std::size_t p) {
  switch (p) {
    case kTop1: return "top1";
    case kFarSelected: return "far";
    case kOracle: return "oracle";
    default: throw InvalidArgument("policy index out of range");
  }
}

EvalReport evaluate(const ExperimentConfig& cfg, const Checkpoints& ck, std::span<const sim::Scene> test_scenes) {
  Stack s = load_stack(cfg, require_vocab(ck.vocab), ck, true);
  const bool use_far = cfg.rewarder != RewarderMode::kNone;

  EvalReport report;
  report.config_hash = config_hash(cfg);
  report.topk = cfg.topk;
  report.rewarder = to_string(cfg.rewarder);
  auto blob = [&](const std::string& name, const std::string& prefix) {
    if (checkpoint_exists(prefix)) report.checkpoint_hashes[name] = git_blob_hash(read_file(prefix + ".bin"));
  };
  blob("encoders", ck.planner + "_encoders");
  blob("planner", ck.planner);
  if (s.has_wm) blob("world_model", ck.world_model);
  if (use_far) blob("rewarder", ck.rewarder);

  report.scenes.resize(test_scenes.size());
  std::vector<std::array<double, 3>> times(test_scenes.size());
  const uint64_t calls_before = wm::denoiser_invocations();
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < test_scenes.size(); ++i) {
    const auto& sc = test_scenes[i];
    const auto planned = plan_scene(cfg, s, sc, cfg.topk);
    const auto& cands = planned.candidates;
    times[i][0] = planned.encoders_ms;
    times[i][1] = planned.planner_ms;

    std::size_t chosen = 0;
    if (use_far) {
      const auto t0 = Clock::now();
      std::vector<Tensor> c, qp;
      for (const auto& cand : cands) {
        c.push_back(rewarder::candidate_embedding(s.model, s.enc, cand, s.vocab));
        qp.push_back(query_row(planned.queries, cand.index));
      }
      chosen = rewarder::select_trajectory(s.far.score(s.far_store, planned.f, c, qp));
      times[i][2] = ms_since(t0);
    }

    const double ep = expert_progress(sc, cfg.sim);
    std::vector<ScoredRollout> scored;
    for (const auto& cand : cands) scored.push_back(score_trajectory(sc, cand.traj, ep, cfg.sim));
    std::size_t best = 0;
    for (std::size_t k = 1; k < scored.size(); ++k)
      if (scored[k].score > scored[best].score) best = k;

    SceneEval& e = report.scenes[i];
    e.seed = sc.seed;
    const std::array<std::size_t, kNumPolicies> pick{0, chosen, best};
    for (std::size_t p = 0; p < kNumPolicies; ++p) e.policies[p] = {scored[pick[p]].breakdown, scored[pick[p]].score, pick[p]};
  }
  report.denoiser_calls = wm::denoiser_invocations() - calls_before;
  report.mean = policy_means(report.scenes);

  const double n = test_scenes.empty() ? 1.0 : static_cast<double>(test_scenes.size());
  for (const auto& t : times) {
    report.timings.encoders_ms += t[0] / n;
    report.timings.planner_ms += t[1] / n;
    report.timings.far_ms += t[2] / n;
  }

  // reference cost of one latent sampling; an untrained model costs the same
  if (cfg.latency_samples > 0 && !test_scenes.empty()) {
    ParamStore wm_store = s.wm;
    if (!s.has_wm) {
      Rng rng(derive_seed(cfg.wm_seed, 0));
      s.model.init(wm_store, rng);
    }
    const auto& sc = test_scenes.front();
    const Tensor f = s.model.encode_history(wm_store, observe(sc, cfg.sim)).values;
    const Tensor c = s.model.encode_motion(wm_store, s.vocab.anchors[0], s.vocab, cfg.wm.k).rows;
    std::vector<double> runs;
    for (std::size_t r = 0; r < cfg.latency_samples; ++r) {
      const auto t0 = Clock::now();
      s.model.sample_future_latent(wm_store, f, c, cfg.wm.sample_steps, r);
      runs.push_back(ms_since(t0));
    }
    std::nth_element(runs.begin(), runs.begin() + static_cast<std::ptrdiff_t>(runs.size() / 2), runs.end());
    report.timings.sampling_ms = runs[runs.size() / 2];
  }

  if (s.has_wm && cfg.sensitivity_scenes > 0) {
    const auto sens = test_scenes.first(std::min(test_scenes.size(), cfg.sensitivity_scenes));
    report.sensitivity =
        wm::motion_sensitivity(s.model, s.wm, sens, s.vocab, derive_seed(cfg.wm_seed, 4), cfg.sensitivity_anchors);
  }
  return report;
}

EvalReport evaluate(const ExperimentConfig& cfg, const Layout& layout, std::span<const sim::Scene> test_scenes) {
  return evaluate(cfg, checkpoints(cfg, layout), test_scenes);
}

std::string summary_hash(const EvalReport& report) { return sha1_hex(deterministic_summary(report).dump()); }

void write_sensitivity_csv(const wm::SensitivityResult& s, const std::string& path) {
  std::string out = "bin_lo,bin_hi,mean_distance,mean_similarity,count\n";
  for (const auto& p : s.curve)
    out += fmt(p.bin_lo) + "," + fmt(p.bin_hi) + "," + fmt(p.mean_distance) + "," + fmt(p.mean_similarity) + "," +
           std::to_string(p.count) + "\n";
  write_file(path, out);
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = "scene_seed,policy,candidate,nc,dac,ttc,comf,ep,score\n";
  for (const auto& s : report.scenes) {
    for (std::size_t p = 0; p < kNumPolicies; ++p) {
      const auto& r = s.policies[p];
      csv += std::to_string(s.seed) + "," + policy_name(p) + "," + std::to_string(r.candidate);
      for (double v : r.breakdown.as_array()) csv += "," + fmt(v);
      csv += "," + fmt(r.score) + "\n";
    }
  }
  write_file(out_dir + "/metrics.csv", csv);

  ordered_json j = deterministic_summary(report);
  j["timings_ms"] = {{"encoders", report.timings.encoders_ms},
                     {"planner", report.timings.planner_ms},
                     {"far", report.timings.far_ms},
                     {"sampling", report.timings.sampling_ms}};
  j["summary_hash"] = summary_hash(report);
  write_file(out_dir + "/summary.json", j.dump(2) + "\n");
  if (report.sensitivity) write_sensitivity_csv(*report.sensitivity, out_dir + "/sensitivity.csv");
}

namespace {

struct Variant {
  std::string name;
  ExperimentConfig cfg;
  std::size_t policy;
};

std::vector<Variant> axis_variants(const ExperimentConfig& base, Axis axis) {
  std::vector<Variant> out;
  ExperimentConfig c = base;
  c.sensitivity_scenes = 0;
  switch (axis) {
    case Axis::kInheritance:
      c.rewarder = RewarderMode::kNone;
      c.topk = 1;
      c.inherit_vision = c.inherit_motion = false;
      out.push_back({"none", c, kTop1});
      c.inherit_vision = true;
      out.push_back({"vision", c, kTop1});
      c.inherit_motion = true;
      out.push_back({"vision+motion", c, kTop1});
      break;
    case Axis::kRewarderFeatures:
      for (auto m : {RewarderMode::kNone, RewarderMode::kTraj, RewarderMode::kFuture}) {
        c.rewarder = m;
        out.push_back({to_string(m), c, kFarSelected});
      }
      break;
    case Axis::kTopK:
      c.rewarder = RewarderMode::kFuture;
      for (std::size_t k : {1, 3, 5, 10}) {
        c.topk = k;
        out.push_back({"K=" + std::to_string(k), c, kFarSelected});
      }
      break;
  }
  return out;
}

}  // namespace

std::vector<AblationRow> ablation_sweep(const ExperimentConfig& cfg, Axis axis, const Layout& layout,
                                        const std::string& csv_path) {
  if (cfg.seeds.empty()) throw InvalidArgument("ablation needs at least one seed");
  const auto test = make_split(cfg, Split::kTest);
  std::vector<AblationRow> rows;
  for (auto& v : axis_variants(cfg, axis)) {
    AblationRow row;
    row.variant = v.name;
    row.seeds = cfg.seeds.size();
    std::array<double, 5> acc{};
    for (uint64_t seed : cfg.seeds) {
      ExperimentConfig c = v.cfg;
      c.seed = seed;
      run_pipeline(c, layout);
      const auto r = evaluate(c, layout, test);
      const auto a = r.mean[v.policy].breakdown.as_array();
      for (std::size_t i = 0; i < 5; ++i) acc[i] += a[i];
      row.score += r.mean[v.policy].score;
      row.top1_score += r.mean[kTop1].score;
      row.oracle_score += r.mean[kOracle].score;
    }
    const double n = static_cast<double>(cfg.seeds.size());
    for (double& x : acc) x /= n;
    row.mean = reward::RewardBreakdown::from_array(acc);
    row.score /= n;
    row.top1_score /= n;
    row.oracle_score /= n;
    rows.push_back(row);
  }
  std::string csv = "variant,seeds,nc,dac,ttc,comf,ep,score,top1_score,oracle_score\n";
  for (const auto& r : rows) {
    csv += r.variant + "," + std::to_string(r.seeds);
    for (double x : r.mean.as_array()) csv += "," + fmt(x);
    csv += "," + fmt(r.score) + "," + fmt(r.top1_score) + "," + fmt(r.oracle_score) + "\n";
  }
  if (!csv_path.empty()) {
    const auto parent = fs::path(csv_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_file(csv_path, csv);
  }
  return rows;
}

wm::SensitivityResult run_sensitivity(const ExperimentConfig& cfg, const std::string& wm_checkpoint,
                                      const vocab::TrajectoryVocabulary& vocab) {
  if (!checkpoint_exists(wm_checkpoint)) throw MissingPrerequisite("world-model checkpoint missing: " + wm_checkpoint);
  if (cfg.sensitivity_scenes == 0) throw InvalidArgument("sensitivity needs at least one scene");
  ParamStore store = load_store(wm_checkpoint);
  const wm::WorldModel model(cfg.wm, cfg.sim);
  auto scenes = make_split(cfg, Split::kTest);
  scenes.resize(std::min(scenes.size(), cfg.sensitivity_scenes));
  return wm::motion_sensitivity(model, store, scenes, vocab, derive_seed(cfg.wm_seed, 4), cfg.sensitivity_anchors);
}

}  // namespace deskdrive::harness
