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

// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deskdrive/core/hash.hpp"
#include "deskdrive/core/rng.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/nn/layers.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/planner/planner.hpp"
#include "deskdrive/reward/reward.hpp"
#include "deskdrive/rewarder/rewarder.hpp"
#include "deskdrive/sim/world.hpp"
#include "deskdrive/vocab/vocab.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace dh = deskdrive::harness;
namespace nn = deskdrive::nn;
namespace fs = std::filesystem;
using deskdrive::Rng;
using nlohmann::ordered_json;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

using Clock = std::chrono::steady_clock;
const Clock::time_point kStart = Clock::now();

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void log(const std::string& msg) {
  std::fprintf(stderr, "[%7.1fs] %s\n", seconds_since(kStart), msg.c_str());
  std::fflush(stderr);
}

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Result {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// Scalar probe of a block output: sum(out ⊙ P) with a fixed random P.
Var probe(Graph& g, const Var& out, uint64_t seed) {
  Rng rng(seed);
  return nn::sum_all(nn::mul(out, g.constant(random_matrix(out->value.rows(), out->value.cols(), rng))));
}

void jitter(ParamStore& store, const std::string& prefix, Rng& rng, double scale) {
  for (std::size_t i = 0; i < store.count(); ++i)
    if (store[i].name.rfind(prefix, 0) == 0)
      for (double& v : store[i].value.data) v = scale * rng.uniform(-1.0, 1.0);
}

// ---- criterion 1 -------------------------------------------------------------

Result gradient_suite() {
  const auto t0 = Clock::now();
  struct Check {
    std::string name;
    double err;
    std::string worst;
  };
  std::vector<Check> checks;
  auto run = [&](const std::string& name, ParamStore& store, const std::function<Var(Graph&)>& fn,
                 nn::GradCheckOptions opts = {}) {
    if (opts.max_coords == 1000) opts.max_coords = 600;
    const auto r = nn::grad_check(store, fn, opts);
    checks.push_back({name, r.max_relative_error, r.worst_param});
  };

  Rng rng(20);
  {
    ParamStore s;
    nn::Linear lin{"lin", 6, 5};
    lin.init(s, rng);
    s.add("x", random_matrix(4, 6, rng));
    run("linear", s, [&](Graph& g) { return probe(g, lin(g, s, g.param(s, "x")), 1); });
  }
  {
    ParamStore s;
    nn::LayerNorm ln{"ln", 7};
    ln.init(s);
    jitter(s, "ln.", rng, 1.0);
    for (double& v : s.at("ln.g").value.data) v += 1.5;
    s.add("x", random_matrix(3, 7, rng));
    run("layer_norm", s, [&](Graph& g) { return probe(g, ln(g, s, g.param(s, "x")), 2); });
  }
  {
    ParamStore s;
    auto mlp = nn::Mlp::make("mlp", 5, 9, 4);
    mlp.init(s, rng);
    s.add("x", random_matrix(3, 5, rng));
    run("mlp_gelu", s, [&](Graph& g) { return probe(g, mlp(g, s, g.param(s, "x")), 3); });
  }
  {
    ParamStore s;
    auto att = nn::AttentionBlock::make("att", 8, 12);
    att.init(s, rng);
    s.add("q", random_matrix(3, 8, rng));
    s.add("kv", random_matrix(6, 8, rng));
    run("cross_attention", s, [&](Graph& g) { return probe(g, att(g, s, g.param(s, "q"), g.param(s, "kv")), 4); });
  }
  {
    ParamStore s;
    s.add("x", random_matrix(4, 5, rng));
    Tensor target = Tensor::matrix(4, 5);
    for (double& v : target.data) v = rng.uniform();
    const Tensor simplex = Tensor::matrix(1, 20, 0.05);
    run("pointwise_and_losses", s, [&](Graph& g) {
      const Var x = g.param(s, "x");
      const Var parts[] = {nn::sum_all(nn::gelu(x)),
                           nn::mse_loss(nn::sigmoid(x), target),
                           nn::bce_with_logits(x, target),
                           nn::soft_cross_entropy(nn::reshape(x, 1, 20), simplex),
                           nn::sum_all(nn::log_sigmoid(x)),
                           probe(g, nn::softmax_rows(x), 5),
                           probe(g, nn::log_softmax_rows(x), 6),
                           probe(g, nn::add_row(nn::mean_rows(x), nn::slice_rows(x, 2, 1)), 7)};
      return nn::sum_all(nn::concat_rows(parts));
    });
  }

  // composite losses at reduced width
  deskdrive::sim::SimConfig sim;
  std::vector<deskdrive::sim::Scene> scenes;
  std::vector<deskdrive::sim::Trajectory> ego_trajs;
  for (uint64_t s = 0; s < 40; ++s) {
    scenes.push_back(deskdrive::sim::generate_scene(900000 + s, static_cast<deskdrive::sim::Difficulty>(s % 3), sim));
    ego_trajs.push_back(deskdrive::vocab::normalize_to_ego_frame(deskdrive::sim::expert_policy(scenes.back(), sim),
                                                                 scenes.back().ego));
  }
  const auto vocab = deskdrive::vocab::kmeans_cluster(ego_trajs, 16, 3, 20);

  deskdrive::wm::WorldModelConfig wc;
  wc.width = 16;
  wc.ffn_hidden = 16;
  const deskdrive::wm::WorldModel model(wc, sim);
  {
    ParamStore s;
    model.init(s, rng);
    jitter(s, "den.head", rng, 0.3);
    jitter(s, "motion.offset.l2", rng, 0.3);
    const auto sample = deskdrive::wm::make_sample(model, scenes[1], deskdrive::sim::expert_policy(scenes[1], sim));
    const Tensor noise = random_matrix(sample.z0.rows(), sample.z0.cols(), rng);
    run("L_world", s, [&](Graph& g) { return deskdrive::wm::diffusion_loss(model, g, s, vocab, sample, 23, noise); },
        {.h = 1e-5, .max_coords = 600, .seed = 1});
  }

  ParamStore wm_store;
  model.init(wm_store, rng);
  {
    deskdrive::planner::PlannerConfig pc;
    pc.width = 16;
    pc.ffn_hidden = 16;
    pc.blocks = 1;
    const deskdrive::planner::Planner p(pc);
    ParamStore s;
    p.init(s, rng);
    jitter(s, "plan.off.w", rng, 0.3);
    const Tensor aq = deskdrive::planner::anchor_queries(model, wm_store, vocab);
    const auto targets = deskdrive::planner::make_targets(scenes[4], vocab, sim);
    const Tensor f = random_matrix(64, 8, rng);
    const Tensor ego = deskdrive::planner::ego_features(scenes[4].ego, pc);
    run("planner_loss", s, [&](Graph& g) { return deskdrive::planner::planner_loss(p.forward(g, s, aq, f, ego), targets); },
        {.h = 1e-5, .max_coords = 600, .seed = 2});
  }

  deskdrive::rewarder::FarConfig fc;
  fc.width = 16;
  fc.queries = 4;
  fc.ffn_hidden = 16;
  fc.head_hidden = 16;
  deskdrive::rewarder::FarSample fs_sample;
  fs_sample.f = random_matrix(64, 8, rng);
  std::vector<double> oracle;
  for (std::size_t k = 0; k < 9; ++k) {
    fs_sample.c.push_back(random_matrix(1, 16, rng));
    fs_sample.z.push_back(random_matrix(64, 8, rng));
    fs_sample.qp_rows.push_back(random_matrix(1, 16, rng));
    oracle.push_back(rng.uniform());
  }
  for (std::size_t a = 0; a < 9; ++a)
    for (std::size_t b = 0; b < 9; ++b)
      if (oracle[a] > oracle[b] && (a + b) % 3 == 0) fs_sample.pairs.push_back({a, b, oracle[a], oracle[b]});
  {
    const deskdrive::rewarder::FutureRewarder far(fc);
    ParamStore s;
    far.init(s, rng);
    jitter(s, "far.head.l2", rng, 0.5);
    // query-projection gradients are ~1e-7 here; smaller steps are roundoff-bound
    run("L_align", s, [&](Graph& g) {
      const Var zh = far.distill_future(g, s, g.constant(fs_sample.f), g.constant(fs_sample.c[0]));
      return deskdrive::rewarder::align_loss(zh, fs_sample.z[0]);
    }, {.h = 1e-4, .max_coords = 600, .seed = 3});
    run("L_reward(future)", s, [&](Graph& g) {
      std::vector<Var> r;
      const auto kv = far.scene_context(g, s, g.constant(fs_sample.f));
      for (const auto& c : fs_sample.c) {
        const Var cv = g.constant(c);
        r.push_back(far.future_reward(g, s, cv, far.distill_future(g, s, kv, cv)));
      }
      return deskdrive::rewarder::bt_loss(fs_sample.pairs, nn::concat_rows(r));
    }, {.h = 1e-4, .max_coords = 600, .seed = 4});
    run("L_align+L_reward", s, [&](Graph& g) { return deskdrive::rewarder::far_loss(far, g, s, fs_sample); },
        {.h = 1e-4, .max_coords = 600, .seed = 5});
  }
  {
    fc.future_features = false;
    const deskdrive::rewarder::FutureRewarder far(fc);
    ParamStore s;
    far.init(s, rng);
    jitter(s, "far.traj.head.l2", rng, 0.5);
    run("L_reward(traj)", s, [&](Graph& g) { return deskdrive::rewarder::far_loss(far, g, s, fs_sample); },
        {.h = 1e-5, .max_coords = 600, .seed = 6});
  }

  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    log("  grad " + c.name + ": " + sci(c.err) + " (" + c.worst + ")");
    if (!(c.err <= worst)) worst = c.err, worst_name = c.name;
  }
  Result r{1, "gradient suite", worst < 1e-4 && secs < 120.0, ""};
  r.detail = std::to_string(checks.size()) + " checks, max rel err " + sci(worst) + " (" + worst_name + "), " +
             num(secs, 1) + " s";
  return r;
}

// ---- criteria 2, 3 -----------------------------------------------------------

// Signed reward written out independently: r_plan = -(w·log terms).
double reference_r_plan(double r_im, const deskdrive::reward::RewardBreakdown& b) {
  const double eps = 1e-6;
  auto lg = [&](double v) { return std::log(std::max(v, eps)); };
  return -(0.1 * lg(r_im) + 0.5 * lg(b.nc) + 0.5 * lg(b.dac) + 1.0 * lg(5.0 * b.ttc + 2.0 * b.comf + 5.0 * b.ep));
}

Result reward_fidelity() {
  using deskdrive::reward::combined_plan_score;
  using deskdrive::reward::driving_score;
  const deskdrive::reward::RewardBreakdown ones{};
  const double e1 = std::abs(combined_plan_score(1.0, ones) - std::log(12.0));
  const double e2 = std::abs(combined_plan_score(1.0, {0.0, 1, 1, 1, 1}) - (0.5 * std::log(1e-6) + std::log(12.0)));
  const double e3 = std::abs(driving_score({1, 1, 1, 1, 0}) - 7.0 / 12.0);

  Rng rng(31);
  std::size_t agree = 0, tested = 0, excluded = 0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 2 + rng.index(30);
    std::vector<double> s(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto pick = [&] {
        const double u = rng.uniform();
        return u < 0.15 ? 0.0 : u < 0.3 ? 1.0 : rng.uniform();
      };
      const deskdrive::reward::RewardBreakdown b{rng.uniform() < 0.2 ? 0.0 : 1.0, rng.uniform() < 0.2 ? 0.0 : 1.0,
                                                  pick(), rng.uniform() < 0.5 ? 0.0 : 1.0, pick()};
      const double r_im = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
      s[i] = combined_plan_score(r_im, b);
      r[i] = reference_r_plan(r_im, b);
    }
    const double rmin = *std::min_element(r.begin(), r.end());
    if (std::count(r.begin(), r.end(), rmin) > 1) {
      ++excluded;
      continue;
    }
    ++tested;
    const auto a = std::max_element(s.begin(), s.end()) - s.begin();
    const auto b = std::min_element(r.begin(), r.end()) - r.begin();
    agree += a == b;
  }
  Result res{2, "reward formula fidelity", e1 <= 1e-9 && e2 <= 1e-9 && e3 <= 1e-9 && agree == tested, ""};
  res.detail = "|S-log12|=" + sci(e1) + " eps-guard " + sci(e2) + " 7/12 " + sci(e3) + "; argmax agreement " +
               std::to_string(agree) + "/" + std::to_string(tested) + " (" + std::to_string(excluded) + " tie sets excluded)";
  return res;
}

Result imitation_identities() {
  using deskdrive::reward::imitation_target;
  double worst = 0.0;
  Rng rng(41);
  for (std::size_t n : {1, 2, 7, 256}) {
    const std::vector<double> d(n, rng.uniform(0.0, 30.0));
    for (double p : imitation_target(d)) worst = std::max(worst, std::abs(p - 1.0 / static_cast<double>(n)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(16);
    for (double& v : d) v = rng.uniform(0.0, 20.0);
    const double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> ds = d;
    for (double& v : ds) v += shift;
    const auto p = imitation_target(d), q = imitation_target(ds);
    // oracle: plain softmax(-d) in long double
    long double z = 0.0L;
    for (double v : d) z += std::exp(-static_cast<long double>(v));
    for (std::size_t i = 0; i < d.size(); ++i) {
      worst = std::max(worst, std::abs(p[i] - q[i]));
      worst = std::max(worst, std::abs(p[i] - static_cast<double>(std::exp(-static_cast<long double>(d[i])) / z)));
    }
  }
  const auto h = imitation_target(std::vector<double>{0.0, std::log(2.0)});
  worst = std::max({worst, std::abs(h[0] - 2.0 / 3.0), std::abs(h[1] - 1.0 / 3.0)});
  return {3, "imitation target identities", worst <= 1e-12, "max deviation " + sci(worst)};
}

// ---- trained criteria --------------------------------------------------------

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::vector<std::map<std::string, std::string>> rows;
  std::stringstream in(deskdrive::read_file(path));
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) header = split(line);
  while (std::getline(in, line)) {
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

const dh::AblationRow& row(const std::vector<dh::AblationRow>& rows, const std::string& name) {
  for (const auto& r : rows)
    if (r.variant == name) return r;
  throw std::runtime_error("missing ablation row " + name);
}

// World-model validation loss with conditioning permuted across the batch.
std::pair<double, double> conditioning_shuffle(const dh::ExperimentConfig& cfg, const dh::Layout& layout,
                                               std::size_t n_samples, std::size_t shuffles) {
  const auto ck = dh::checkpoints(cfg, layout);
  const auto vocab = deskdrive::vocab::load_vocab(ck.vocab);
  const deskdrive::wm::WorldModel model(cfg.wm, cfg.sim);
  ParamStore store;
  nn::load_checkpoint(store, ck.world_model);
  auto scenes = dh::make_split(cfg, dh::Split::kVal);
  scenes.resize(std::min(scenes.size(), n_samples));
  Rng rng(deskdrive::derive_seed(cfg.wm_seed, 77));
  std::vector<deskdrive::wm::WmSample> val;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto traj = deskdrive::sim::expert_policy(scenes[i], cfg.sim);
    if (i % 2 == 1) traj = deskdrive::vocab::denormalize_from_ego_frame(vocab.anchors[rng.index(vocab.size())], scenes[i].ego);
    val.push_back(deskdrive::wm::make_sample(model, scenes[i], traj));
  }
  const uint64_t noise_seed = deskdrive::derive_seed(cfg.wm_seed, 78);
  const double base = deskdrive::wm::diffusion_eval_loss(model, store, vocab, val, noise_seed);
  double shuffled = 0.0;
  for (std::size_t s = 0; s < shuffles; ++s) {
    std::vector<std::size_t> perm(val.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng pr(deskdrive::derive_seed(cfg.wm_seed, 100 + s));
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[pr.index(i)]);
    auto sh = val;
    for (std::size_t i = 0; i < val.size(); ++i) sh[i].traj = val[perm[i]].traj;
    shuffled += deskdrive::wm::diffusion_eval_loss(model, store, vocab, sh, noise_seed);
  }
  return {base, shuffled / static_cast<double>(shuffles)};
}

dh::ExperimentConfig reduced(dh::ExperimentConfig c) {
  c.vocab_scenes.count = std::min<std::size_t>(c.vocab_scenes.count, 300);
  c.train_scenes.count = std::min<std::size_t>(c.train_scenes.count, 60);
  c.val_scenes.count = std::min<std::size_t>(c.val_scenes.count, 16);
  c.test_scenes.count = std::min<std::size_t>(c.test_scenes.count, 40);
  c.anchors = std::min<std::size_t>(c.anchors, 64);
  c.wm_iters = std::min<std::size_t>(c.wm_iters, 60);
  c.wm_batch = std::min<std::size_t>(c.wm_batch, 4);
  c.wm_val_samples = std::min<std::size_t>(c.wm_val_samples, 8);
  c.planner_epochs = std::min<std::size_t>(c.planner_epochs, 2);
  c.planner_scenes = std::min<std::size_t>(c.planner_scenes, 60);
  c.planner_val_scenes = std::min<std::size_t>(c.planner_val_scenes, 8);
  c.far_epochs = std::min<std::size_t>(c.far_epochs, 2);
  c.far_scenes = std::min<std::size_t>(c.far_scenes, 30);
  c.far_val_scenes = std::min<std::size_t>(c.far_val_scenes, 8);
  c.sensitivity_scenes = std::min<std::size_t>(c.sensitivity_scenes, 8);
  c.latency_samples = 2;
  return c;
}

bool wanted(const std::set<int>& only, int id) { return only.empty() || only.count(id) > 0; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::string config_path = DESKDRIVE_ACCEPTANCE_CONFIG;
  std::string work = "acceptance";
  bool fresh = false;
  std::vector<int> only_list;
  app.add_option("--config", config_path, "experiment config");
  app.add_option("--work", work, "work directory");
  app.add_flag("--fresh", fresh, "discard earlier phase outputs first");
  app.add_option("--only", only_list, "criterion ids to run");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> only(only_list.begin(), only_list.end());

  if (fresh) fs::remove_all(work);
  fs::create_directories(work);
  std::vector<Result> results;
  auto record = [&](Result r) {
    std::printf("[%s] criterion %d: %s | %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
    results.push_back(std::move(r));
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Result()>& fn) {
    if (!wanted(only, id)) return;
    try {
      record(fn());
    } catch (const std::exception& e) {
      record({id, name, false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, "gradient suite", gradient_suite);
  guarded(2, "reward formula fidelity", reward_fidelity);
  guarded(3, "imitation target identities", imitation_identities);

  const dh::ExperimentConfig cfg = dh::load_config(config_path);
  const dh::Layout layout{(fs::path(work) / "runs").string()};
  const std::string report_dir = (fs::path(work) / "report").string();
  fs::create_directories(report_dir);
  log("config " + dh::config_hash(cfg).substr(0, 12) + ", seeds " + std::to_string(cfg.seeds.size()));

  const bool need_trained = std::any_of(only_list.begin(), only_list.end(), [](int i) { return i >= 4; }) || only.empty();
  std::vector<dh::EvalReport> main_reports;
  uint64_t denoiser_calls = 0;
  if (need_trained) {
    const auto test = dh::make_split(cfg, dh::Split::kTest);
    for (uint64_t seed : cfg.seeds) {
      auto c = cfg;
      c.seed = seed;
      log("pipeline seed " + std::to_string(seed));
      dh::run_pipeline(c, layout);
      if (seed != cfg.seeds.front()) c.sensitivity_scenes = 0;
      main_reports.push_back(dh::evaluate(c, layout, test));
      denoiser_calls += main_reports.back().denoiser_calls;
      dh::emit_report(main_reports.back(), report_dir + "/seed-" + std::to_string(seed));
      const auto& m = main_reports.back().mean;
      log("  top1 " + num(m[dh::kTop1].score) + " far " + num(m[dh::kFarSelected].score) + " oracle " +
          num(m[dh::kOracle].score));
    }
  }

  guarded(4, "motion sensitivity", [&] {
    const auto ck = dh::checkpoints(cfg, layout);
    const auto vocab = deskdrive::vocab::load_vocab(ck.vocab);
    const auto fin = dh::run_sensitivity(cfg, ck.world_model, vocab);
    const auto early = dh::run_sensitivity(cfg, ck.world_model + "_snapshot", vocab);
    dh::write_sensitivity_csv(fin, report_dir + "/sensitivity_final.csv");
    dh::write_sensitivity_csv(early, report_dir + "/sensitivity_10pct.csv");
    const bool pass = fin.spearman <= -0.5 && std::abs(fin.sample_spearman) >= std::abs(early.sample_spearman);
    return Result{4, "motion sensitivity", pass,
                  "binned spearman final " + num(fin.spearman, 3) + " (10%: " + num(early.spearman, 3) +
                      "); per-sample final " + num(fin.sample_spearman, 3) + " vs 10% " +
                      num(early.sample_spearman, 3) + " over " + std::to_string(cfg.sensitivity_scenes) + " scenes"};
  });

  guarded(5, "representation inheritance", [&] {
    const auto rows = dh::ablation_sweep(cfg, dh::Axis::kInheritance, layout, report_dir + "/ablation_inheritance.csv");
    const double none = row(rows, "none").score, vis = row(rows, "vision").score,
                 vm = row(rows, "vision+motion").score;
    const bool pass = vm - none >= 0.02 && none <= vis + 0.005 && vis <= vm + 0.005;
    return Result{5, "representation inheritance", pass,
                  "none " + num(none) + ", vision " + num(vis) + ", vision+motion " + num(vm) + " (delta " +
                      num(vm - none) + ", need >= 0.02)"};
  });

  guarded(6, "rewarder uplift", [&] {
    const auto rows =
        dh::ablation_sweep(cfg, dh::Axis::kRewarderFeatures, layout, report_dir + "/ablation_rewarder_features.csv");
    const double top1 = row(rows, "none").score, traj = row(rows, "traj").score, fut = row(rows, "future").score;
    const bool pass = fut - top1 >= 0.005 && traj >= top1 - 0.005 && traj <= fut + 0.005;
    return Result{6, "rewarder uplift", pass,
                  "top-1 " + num(top1) + ", traj-only " + num(traj) + ", future " + num(fut) + " (uplift " +
                      num(fut - top1) + ", need >= 0.005)"};
  });

  guarded(7, "oracle bound", [&] {
    std::size_t violations = 0, scenes = 0;
    double oracle = 0.0, top1 = 0.0;
    for (const auto& r : main_reports) {
      for (const auto& s : r.scenes) {
        ++scenes;
        if (s.policies[dh::kOracle].score < s.policies[dh::kFarSelected].score) ++violations;
      }
      oracle += r.mean[dh::kOracle].score / static_cast<double>(main_reports.size());
      top1 += r.mean[dh::kTop1].score / static_cast<double>(main_reports.size());
    }
    return Result{7, "oracle bound", !main_reports.empty() && violations == 0 && oracle - top1 >= 0.01,
                  std::to_string(violations) + "/" + std::to_string(scenes) + " per-scene violations; oracle " +
                      num(oracle) + " vs top-1 " + num(top1) + " (gap " + num(oracle - top1) + ", need >= 0.01)"};
  });

  guarded(8, "K ablation", [&] {
    const auto rows = dh::ablation_sweep(cfg, dh::Axis::kTopK, layout, report_dir + "/ablation_topk.csv");
    const auto csv = read_csv(report_dir + "/ablation_topk.csv");
    std::set<std::string> names;
    for (const auto& r : csv) names.insert(r.at("variant"));
    const bool all_rows = names == std::set<std::string>{"K=1", "K=3", "K=5", "K=10"};
    const double k1 = row(rows, "K=1").score, k5 = row(rows, "K=5").score;
    std::string detail;
    for (const auto& r : rows) detail += r.variant + " " + num(r.score) + ", ";
    return Result{8, "K ablation", all_rows && k5 >= k1, detail + std::to_string(csv.size()) + " rows emitted"};
  });

  guarded(9, "inference purity and latency", [&] {
    double far_ms = 0.0, sampling_ms = 0.0;
    for (const auto& r : main_reports) {
      far_ms += r.timings.far_ms / static_cast<double>(main_reports.size());
      sampling_ms += r.timings.sampling_ms / static_cast<double>(main_reports.size());
    }
    const bool pass = !main_reports.empty() && denoiser_calls == 0 && far_ms <= 0.1 * sampling_ms;
    return Result{9, "inference purity and latency", pass,
                  "denoiser calls on eval path " + std::to_string(denoiser_calls) + "; FAR " + num(far_ms, 3) +
                      " ms/scene vs 10-step sampling " + num(sampling_ms, 3) + " ms (ratio " +
                      num(far_ms / sampling_ms, 3) + ", need <= 0.1)"};
  });

  guarded(10, "determinism", [&] {
    const auto c = reduced(cfg);
    std::vector<std::string> hashes;
    for (const char* name : {"det-a", "det-b"}) {
      const dh::Layout l{(fs::path(work) / name).string()};
      fs::remove_all(l.root);
      log("determinism run " + std::string(name));
      dh::run_pipeline(c, l);
      const auto r = dh::evaluate(c, l, dh::make_split(c, dh::Split::kTest));
      dh::emit_report(r, l.root + "/report");
      hashes.push_back(dh::summary_hash(r));
    }
    return Result{10, "determinism", hashes[0] == hashes[1],
                  "summary hashes " + hashes[0].substr(0, 16) + " / " + hashes[1].substr(0, 16)};
  });

  guarded(11, "distillation", [&] {
    std::string detail;
    bool align_ok = true;
    for (uint64_t seed : cfg.seeds) {
      auto c = cfg;
      c.seed = seed;
      c.rewarder = dh::RewarderMode::kFuture;
      const auto curve = read_csv(dh::checkpoints(c, layout).rewarder + "_curve.csv");
      const double first = std::stod(curve.front().at("val_align")), last = std::stod(curve.back().at("val_align"));
      align_ok = align_ok && last < 0.5 * first;
      detail += "seed " + std::to_string(seed) + " align " + num(first) + " -> " + num(last) + "; ";
    }
    const auto [base, shuffled] = conditioning_shuffle(cfg, layout, 64, 5);
    detail += "wm val loss " + num(base, 5) + ", shuffled conditioning " + num(shuffled, 5);
    return Result{11, "distillation", align_ok && shuffled > base, detail};
  });

  ordered_json out = ordered_json::array();
  bool all = true;
  for (const auto& r : results) {
    out.push_back({{"criterion", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    all = all && r.pass;
  }
  deskdrive::write_file((fs::path(work) / "acceptance.json").string(), out.dump(2) + "\n");
  log(std::string(all ? "all criteria passed" : "some criteria failed"));
  return all ? 0 : 1;
}
