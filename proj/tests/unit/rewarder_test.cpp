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
#include <numeric>

#include <gtest/gtest.h>

#include "deskdrive/core/error.hpp"
#include "deskdrive/nn/optim.hpp"
#include "deskdrive/rewarder/rewarder.hpp"
#include "deskdrive/sim/world.hpp"

using namespace deskdrive;
using namespace deskdrive::rewarder;

namespace {

FarConfig small(bool future = true) {
  FarConfig c;
  c.width = 16;
  c.ffn_hidden = 16;
  c.head_hidden = 8;
  c.future_features = future;
  return c;
}

struct Fixture {
  std::vector<sim::Scene> scenes;
  vocab::TrajectoryVocabulary vocab;
  wm::WorldModel model{[] {
    wm::WorldModelConfig c;
    c.width = 16;
    c.ffn_hidden = 16;
    c.denoiser_blocks = 1;
    return c;
  }()};
  ParamStore wm_store;
};

Fixture& fixture() {
  static Fixture fx = [] {
    Fixture f;
    std::vector<sim::Trajectory> ego;
    for (uint64_t s = 0; s < 30; ++s) {
      f.scenes.push_back(sim::generate_scene(11000 + s, static_cast<sim::Difficulty>(s % 3)));
      ego.push_back(vocab::normalize_to_ego_frame(sim::expert_policy(f.scenes.back()), f.scenes.back().ego));
    }
    f.vocab = vocab::kmeans_cluster(ego, 10, 4);
    Rng rng(1);
    f.model.init(f.wm_store, rng);
    return f;
  }();
  return fx;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double a = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

void randomize(ParamStore& store, const std::string& prefix, Rng& rng) {
  for (std::size_t i = 0; i < store.count(); ++i)
    if (store[i].name.rfind(prefix, 0) == 0)
      for (double& v : store[i].value.data) v = rng.uniform(-0.4, 0.4);
}

FarSample toy_sample(Rng& rng, std::size_t n = 7) {
  FarSample s;
  s.f = random_matrix(64, 8, rng);
  for (std::size_t k = 0; k < n; ++k) {
    s.c.push_back(random_matrix(1, 16, rng));
    s.z.push_back(random_matrix(64, 8, rng));
    s.qp_rows.push_back(random_matrix(1, 16, rng));
  }
  std::vector<double> oracle(16);
  for (double& v : oracle) v = rng.uniform();
  const auto set = build_preference_pairs(oracle, 3);
  std::vector<std::size_t> local(16, 99);
  for (std::size_t i = 0; i < set.selected.size(); ++i) local[set.selected[i]] = i;
  for (auto p : set.pairs) s.pairs.push_back({local[p.pos_index], local[p.neg_index], p.pos_oracle, p.neg_oracle});
  return s;
}

}  // namespace

TEST(Rewarder, CandidateEmbeddingOfUnrefinedAnchor) {
  auto& fx = fixture();
  planner::Candidate cand{3, fx.vocab.anchors[3], 0.0};
  const Tensor c = candidate_embedding(fx.model, fx.wm_store, cand, fx.vocab);
  ASSERT_EQ(c.rows(), 1u);
  ASSERT_EQ(c.cols(), 16u);
  const auto a = vocab::flatten_xy(fx.vocab.anchors[3]);
  Graph g(false);
  const Tensor ea = fx.model.anchor_embed(g, fx.wm_store, g.constant(Tensor({1, a.size()}, a)))->value;
  EXPECT_EQ(c.data, ea.data);
}

TEST(Rewarder, DistillShapeAndNoDenoiserCalls) {
  FutureRewarder far(small());
  ParamStore store;
  Rng rng(2);
  far.init(store, rng);
  const uint64_t before = wm::denoiser_invocations();
  Graph g(false);
  const Var z = far.distill_future(g, store, g.constant(random_matrix(64, 8, rng)), g.constant(random_matrix(1, 16, rng)));
  EXPECT_EQ(z->value.rows(), 64u);
  EXPECT_EQ(z->value.cols(), 8u);
  const FarSample s = toy_sample(rng);
  const auto r = far.score(store, s.f, s.c, {});
  EXPECT_EQ(wm::denoiser_invocations(), before);
  for (double v : r) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(far.distill_future(g, store, g.constant(random_matrix(60, 8, rng)), g.constant(random_matrix(1, 16, rng))),
               ShapeMismatch);
}

TEST(Rewarder, AlignLossHandValues) {
  Rng rng(3);
  const Tensor z = random_matrix(64, 8, rng);
  Graph g;
  EXPECT_EQ(align_loss(g.constant(z), z)->value.data[0], 0.0);
  Tensor shifted = z;
  for (double& v : shifted.data) v += 0.3;
  EXPECT_NEAR(align_loss(g.constant(shifted), z)->value.data[0], 0.09, 1e-15);
  EXPECT_THROW(align_loss(g.constant(Tensor::matrix(8, 64)), z), ShapeMismatch);
}

TEST(Rewarder, DistillRewardPathMatchesFiniteDifferences) {
  FutureRewarder far(small());
  ParamStore store;
  Rng rng(4);
  far.init(store, rng);
  randomize(store, "far.head.l2", rng);
  const Tensor f = random_matrix(64, 8, rng), c = random_matrix(1, 16, rng);
  const auto res = nn::grad_check(store, [&](Graph& g) {
    const Var cv = g.constant(c);
    return far.future_reward(g, store, cv, far.distill_future(g, store, g.constant(f), cv));
  }, {.h = 1e-4, .max_coords = 800, .seed = 1});  // query-projection grads are ~1e-7; smaller h is roundoff-bound
  EXPECT_LT(res.max_relative_error, 1e-4) << res.worst_param;
}

TEST(Rewarder, FullLossMatchesFiniteDifferences) {
  Rng rng(5);
  const FarSample s = toy_sample(rng);
  ASSERT_FALSE(s.pairs.empty());
  for (bool future : {true, false}) {
    FutureRewarder far(small(future));
    ParamStore store;
    far.init(store, rng);
    randomize(store, future ? "far.head.l2" : "far.traj.head.l2", rng);
    const auto res = nn::grad_check(store, [&](Graph& g) { return far_loss(far, g, store, s); },
                                    {.h = 1e-5, .max_coords = 600, .seed = 2});
    EXPECT_LT(res.max_relative_error, 1e-4) << res.worst_param;
  }
}

TEST(Rewarder, TrajOnlyVariantStartsAtZero) {
  FutureRewarder far(small(false));
  ParamStore store;
  Rng rng(6);
  far.init(store, rng);
  EXPECT_FALSE(store.contains("far.qs"));
  const FarSample s = toy_sample(rng, 5);
  for (double v : far.score(store, s.f, s.c, s.qp_rows)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(far.score(store, s.f, s.c, {}), LengthMismatch);
}

TEST(Preference, EqualScoresGiveNoPairs) {
  const std::vector<double> oracle(16, 0.7);
  const auto set = build_preference_pairs(oracle, 1);
  EXPECT_EQ(set.selected.size(), 7u);
  EXPECT_TRUE(set.pairs.empty());
}

TEST(Preference, DecreasingScoresMakeTopOnePositive) {
  std::vector<double> oracle(16);
  for (std::size_t i = 0; i < 16; ++i) oracle[i] = 1.0 - 0.05 * static_cast<double>(i);
  const auto set = build_preference_pairs(oracle, 9);
  ASSERT_EQ(set.selected.size(), 7u);
  EXPECT_EQ(set.selected[0], 0u);
  // hard negatives are the three lowest scores
  EXPECT_EQ(set.selected[1], 15u);
  EXPECT_EQ(set.selected[2], 14u);
  EXPECT_EQ(set.selected[3], 13u);
  std::vector<std::size_t> sorted = set.selected;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_EQ(set.pairs.size(), 21u);
  for (const auto& p : set.pairs) {
    EXPECT_GT(p.pos_oracle, p.neg_oracle);
    EXPECT_EQ(p.pos_oracle, oracle[p.pos_index]);
    if (p.pos_index == 0 || p.neg_index == 0) {
      EXPECT_EQ(p.pos_index, 0u);
    }
  }
}

TEST(Preference, SeededAndValidated) {
  Rng rng(7);
  std::vector<double> oracle(16);
  for (double& v : oracle) v = rng.uniform();
  const auto a = build_preference_pairs(oracle, 4);
  const auto b = build_preference_pairs(oracle, 4);
  EXPECT_EQ(a.selected, b.selected);
  bool differs = false;
  for (uint64_t s = 5; s < 15; ++s) differs = differs || build_preference_pairs(oracle, s).selected != a.selected;
  EXPECT_TRUE(differs);
  EXPECT_THROW(build_preference_pairs(std::vector<double>(6, 0.5), 1), TooFewCandidates);
}

TEST(BradleyTerry, HandValues) {
  const std::vector<PreferencePair> one{{0, 1, 1.0, 0.0}};
  EXPECT_NEAR(bt_loss(one, std::vector<double>{0.4, 0.4}), std::log(2.0), 1e-15);
  EXPECT_NEAR(bt_loss(one, std::vector<double>{10.0, 0.0}), std::log1p(std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(bt_loss(one, std::vector<double>{10.0, 0.0}), 4.5398899e-5, 1e-12);
  EXPECT_THROW(bt_loss(std::vector<PreferencePair>{}, std::vector<double>{1.0}), EmptyPairs);
}

TEST(BradleyTerry, FiniteDifferenceSigns) {
  Rng rng(8);
  std::vector<double> r(7);
  for (double& v : r) v = rng.uniform(-2, 2);
  const std::vector<PreferencePair> pairs{{0, 3, 1, 0}, {2, 5, 1, 0}, {6, 1, 1, 0}, {4, 0, 1, 0}};
  const double h = 1e-6;
  for (const auto& p : pairs) {
    const std::vector<PreferencePair> single{p};
    for (std::size_t idx : {p.pos_index, p.neg_index}) {
      auto up = r, down = r;
      up[idx] += h;
      down[idx] -= h;
      const double d = (bt_loss(single, up) - bt_loss(single, down)) / (2 * h);
      if (idx == p.pos_index) EXPECT_LT(d, 0.0);
      else EXPECT_GT(d, 0.0);
    }
  }
}

TEST(BradleyTerry, OracleRewardsBeatEveryInvertingSwap) {
  Rng rng(9);
  std::vector<double> oracle(16);
  for (double& v : oracle) v = rng.uniform();
  const auto set = build_preference_pairs(oracle, 2);
  const double base = bt_loss(set.pairs, oracle);
  for (std::size_t a : set.selected)
    for (std::size_t b : set.selected) {
      if (oracle[a] <= oracle[b]) continue;
      auto swapped = oracle;
      std::swap(swapped[a], swapped[b]);
      EXPECT_GT(bt_loss(set.pairs, swapped), base) << a << "," << b;
    }
}

TEST(Selection, ArgmaxWithStableTies) {
  EXPECT_EQ(select_trajectory(std::vector<double>{-5.0}), 0u);
  EXPECT_EQ(select_trajectory(std::vector<double>{0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(select_trajectory(std::vector<double>{1.1, 1.9, 1.3}), 1u);
  EXPECT_EQ(select_trajectory(std::vector<double>{0.2, 0.7, 0.7}), 1u);
  EXPECT_THROW(select_trajectory(std::vector<double>{}), InvalidArgument);
}

TEST(Rewarder, TrainingReducesAlignmentAndKeepsOtherStores) {
  auto& fx = fixture();
  FutureRewarder far(small());
  ParamStore store;
  Rng rng(10);
  far.init(store, rng);
  fx.wm_store.set_frozen(true);
  const std::string wm_before = nn::serialize_values(fx.wm_store);
  std::vector<FarSample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(toy_sample(rng));
  const double before = far_eval_align(far, store, batch);
  for (int it = 0; it < 60; ++it) far_train_step(far, store, batch, 3e-3);
  EXPECT_LT(far_eval_align(far, store, batch), before);
  EXPECT_EQ(nn::serialize_values(fx.wm_store), wm_before);
  fx.wm_store.set_frozen(false);
}
