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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/harness/experiment.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace dh = deskdrive::harness;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_json() {
  return nlohmann::json::parse(R"({
    "seeds": [1],
    "splits": {"vocab": {"offset": 0, "count": 60}, "train": {"offset": 100000, "count": 12},
               "val": {"offset": 200000, "count": 4}, "test": {"offset": 300000, "count": 6}},
    "vocab": {"anchors": 16, "kmeans_iters": 10},
    "world_model": {"width": 16, "ffn_hidden": 16, "iters": 3, "batch": 2, "val_samples": 2},
    "planner": {"ffn_hidden": 16, "blocks": 1, "epochs": 1, "batch": 4, "val_scenes": 2},
    "far": {"queries": 4, "ffn_hidden": 16, "head_hidden": 16, "epochs": 1, "batch": 2, "scenes": 6,
            "candidates": 8, "val_scenes": 2},
    "topk": 5,
    "sensitivity": {"scenes": 2, "anchors": 4},
    "latency_samples": 1
  })");
}

dh::ExperimentConfig tiny() { return dh::config_from_json(tiny_json()); }

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("deskdrive_harness_" + name);
  fs::remove_all(p);
  return p;
}

// One trained tiny stack shared by the evaluation tests.
class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new dh::ExperimentConfig(tiny());
    layout_ = new dh::Layout{fresh_dir("pipeline").string()};
    dh::run_pipeline(*cfg_, *layout_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(layout_->root);
    delete cfg_;
    delete layout_;
  }
  static dh::ExperimentConfig* cfg_;
  static dh::Layout* layout_;
};
dh::ExperimentConfig* TinyPipeline::cfg_ = nullptr;
dh::Layout* TinyPipeline::layout_ = nullptr;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST(HarnessConfig, JsonRoundTripKeepsHash) {
  const auto c = tiny();
  const auto back = dh::config_from_json(dh::config_to_json(c));
  EXPECT_EQ(dh::config_to_json(back).dump(), dh::config_to_json(c).dump());
  EXPECT_EQ(dh::config_hash(back), dh::config_hash(c));
  EXPECT_EQ(back.planner.width, 16u);
  EXPECT_EQ(back.far.width, 16u);
}

TEST(HarnessConfig, UnknownKeysRejected) {
  auto j = tiny_json();
  j["planner"]["epochz"] = 3;
  EXPECT_THROW(dh::config_from_json(j), deskdrive::InvalidArgument);
  auto k = tiny_json();
  k["extra"] = true;
  EXPECT_THROW(dh::config_from_json(k), deskdrive::InvalidArgument);
}

TEST(HarnessConfig, TopkOutsideCandidatesRejected) {
  auto j = tiny_json();
  j["topk"] = 9;
  EXPECT_THROW(dh::config_from_json(j), deskdrive::InvalidArgument);
  j["topk"] = 0;
  EXPECT_THROW(dh::config_from_json(j), deskdrive::InvalidArgument);
}

TEST(HarnessConfig, OverlappingSplitsRejected) {
  auto j = tiny_json();
  j["splits"]["test"] = {{"offset", 100010}, {"count", 5}};
  EXPECT_THROW(dh::config_from_json(j), deskdrive::InvalidArgument);
}

TEST(HarnessConfig, SplitsAreDisjointAndDeterministic) {
  const auto c = tiny();
  std::set<uint64_t> seen;
  std::size_t total = 0;
  for (auto s : {dh::Split::kVocab, dh::Split::kTrain, dh::Split::kVal, dh::Split::kTest}) {
    const auto seeds = dh::split_seeds(c, s);
    total += seeds.size();
    seen.insert(seeds.begin(), seeds.end());
  }
  EXPECT_EQ(seen.size(), total);
  const auto a = dh::make_split(c, dh::Split::kTest);
  const auto b = dh::make_split(c, dh::Split::kTest);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].ego.pose().x, b[i].ego.pose().x);
  }
}

TEST(HarnessConfig, PhaseDirectoriesFollowDependencies) {
  const dh::Layout l{"/x"};
  auto a = tiny();
  auto b = a;
  b.far_lr = 0.5;
  EXPECT_EQ(l.wm_dir(a), l.wm_dir(b));
  EXPECT_EQ(l.planner_dir(a), l.planner_dir(b));
  EXPECT_NE(l.far_dir(a), l.far_dir(b));
  b = a;
  b.topk = 1;  // inference only
  EXPECT_EQ(l.far_dir(a), l.far_dir(b));
  b = a;
  b.wm_iters = 5;
  EXPECT_NE(l.planner_dir(a), l.planner_dir(b));
  b.inherit_vision = b.inherit_motion = false;
  a.inherit_vision = a.inherit_motion = false;
  EXPECT_EQ(l.planner_dir(a), l.planner_dir(b));  // no world model upstream
}

TEST(HarnessPhases, MissingPrerequisitesAreReported) {
  const auto c = tiny();
  const dh::Layout l{fresh_dir("missing").string()};
  EXPECT_THROW(dh::run_phase(dh::Phase::kWorldModel, c, l), deskdrive::MissingPrerequisite);
  EXPECT_THROW(dh::run_phase(dh::Phase::kPlanner, c, l), deskdrive::MissingPrerequisite);
  dh::build_vocab(c, l);
  // inherits encoders, but no world model yet
  EXPECT_THROW(dh::run_phase(dh::Phase::kPlanner, c, l), deskdrive::MissingPrerequisite);
  EXPECT_THROW(dh::run_phase(dh::Phase::kFar, c, l), deskdrive::MissingPrerequisite);
  EXPECT_THROW(dh::evaluate(c, l, dh::make_split(c, dh::Split::kTest)), deskdrive::MissingPrerequisite);
  fs::remove_all(l.root);
}

TEST_F(TinyPipeline, PhaseOutputsExist) {
  EXPECT_TRUE(fs::exists(layout_->vocab_path(*cfg_)));
  const auto ck = dh::checkpoints(*cfg_, *layout_);
  for (const auto& f : {ck.world_model + ".bin", ck.world_model + "_snapshot.bin", ck.world_model + "_curve.csv",
                        ck.planner + ".bin", ck.planner + "_encoders.bin", ck.rewarder + ".bin",
                        ck.rewarder + "_curve.csv"})
    EXPECT_TRUE(fs::exists(f)) << f;
}

TEST_F(TinyPipeline, RerunReusesFinishedPhases) {
  const auto bin = layout_->planner_dir(*cfg_) + "/planner.bin";
  const auto before = fs::last_write_time(bin);
  dh::run_pipeline(*cfg_, *layout_);
  EXPECT_EQ(fs::last_write_time(bin), before);
}

TEST_F(TinyPipeline, EvaluationIsPureAndBounded) {
  const auto test = dh::make_split(*cfg_, dh::Split::kTest);
  const auto r = dh::evaluate(*cfg_, *layout_, test);
  EXPECT_EQ(r.denoiser_calls, 0u);
  ASSERT_EQ(r.scenes.size(), test.size());
  for (const auto& s : r.scenes) {
    EXPECT_EQ(s.policies[dh::kTop1].candidate, 0u);
    EXPECT_GE(s.policies[dh::kOracle].score, s.policies[dh::kFarSelected].score);
    EXPECT_GE(s.policies[dh::kOracle].score, s.policies[dh::kTop1].score);
    EXPECT_LT(s.policies[dh::kFarSelected].candidate, cfg_->topk);
  }
  EXPECT_GT(r.timings.sampling_ms, 0.0);
  ASSERT_TRUE(r.sensitivity.has_value());
}

TEST_F(TinyPipeline, SingleCandidateMakesSelectionTrivial) {
  auto c = *cfg_;
  c.topk = 1;
  c.sensitivity_scenes = 0;
  const auto r = dh::evaluate(c, *layout_, dh::make_split(c, dh::Split::kTest));
  for (const auto& s : r.scenes)
    for (std::size_t p = 0; p < dh::kNumPolicies; ++p) {
      EXPECT_EQ(s.policies[p].candidate, 0u);
      EXPECT_EQ(s.policies[p].score, s.policies[dh::kTop1].score);
    }
}

TEST_F(TinyPipeline, ReportFilesAgree) {
  const auto test = dh::make_split(*cfg_, dh::Split::kTest);
  const auto r = dh::evaluate(*cfg_, *layout_, test);
  const auto out = fresh_dir("report");
  dh::emit_report(r, out.string());

  std::stringstream csv(deskdrive::read_file((out / "metrics.csv").string()));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "scene_seed,policy,candidate,nc,dac,ttc,comf,ep,score");
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto cells = split_csv(line);
    ASSERT_EQ(cells.size(), 9u);
    auto& s = sums[cells[1]];
    s.first += std::stod(cells[8]);
    ++s.second;
    ++rows;
  }
  EXPECT_EQ(rows, 3 * test.size());

  const auto summary = nlohmann::json::parse(deskdrive::read_file((out / "summary.json").string()));
  for (std::size_t p = 0; p < dh::kNumPolicies; ++p) {
    const auto name = dh::policy_name(p);
    ASSERT_EQ(sums[name].second, test.size());
    EXPECT_NEAR(summary["policies"][name]["score"].get<double>(), sums[name].first / test.size(), 1e-12);
  }
  EXPECT_EQ(summary["summary_hash"].get<std::string>(), dh::summary_hash(r));
  EXPECT_TRUE(fs::exists(out / "sensitivity.csv"));

  // timings vary between runs; the hash must not
  auto r2 = dh::evaluate(*cfg_, *layout_, test);
  r2.timings.far_ms += 1.0;
  EXPECT_EQ(dh::summary_hash(r2), dh::summary_hash(r));
  fs::remove_all(out);
}

TEST_F(TinyPipeline, TopkSweepEmitsFourRows) {
  const auto csv = fresh_dir("sweep") / "topk.csv";
  const auto rows = dh::ablation_sweep(*cfg_, dh::Axis::kTopK, *layout_, csv.string());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].variant, "K=1");
  EXPECT_EQ(rows[3].variant, "K=10");
  EXPECT_DOUBLE_EQ(rows[0].score, rows[0].top1_score);
  for (const auto& r : rows) EXPECT_GE(r.oracle_score, r.score);
  std::stringstream ss(deskdrive::read_file(csv.string()));
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) ++n;
  EXPECT_EQ(n, 5u);
  fs::remove_all(csv.parent_path());
}
