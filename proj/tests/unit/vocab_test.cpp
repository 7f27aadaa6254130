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
#include <filesystem>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/rng.hpp"
#include "deskdrive/sim/world.hpp"
#include "deskdrive/vocab/vocab.hpp"

using namespace deskdrive;
using namespace deskdrive::vocab;

namespace {

Trajectory random_traj(Rng& rng, std::size_t f = 8) {
  Trajectory t;
  double x = 0.0, y = 0.0, h = 0.0;
  const double v = rng.uniform(0.0, 12.0), w = rng.uniform(-0.3, 0.3);
  for (std::size_t i = 0; i < f; ++i) {
    t.waypoints.push_back({x, y, h});
    x += 0.5 * v * std::cos(h);
    y += 0.5 * v * std::sin(h);
    h = sim::wrap_angle(h + 0.5 * w);
  }
  return t;
}

std::vector<Trajectory> random_set(std::size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_traj(rng));
  return out;
}

}  // namespace

TEST(EgoFrame, IdentityAtOrigin) {
  Rng rng(1);
  const auto t = random_traj(rng);
  const auto n = normalize_to_ego_frame(t, {});
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(n.waypoints[i].x, t.waypoints[i].x);
    EXPECT_EQ(n.waypoints[i].y, t.waypoints[i].y);
    EXPECT_EQ(n.waypoints[i].heading, t.waypoints[i].heading);
  }
}

TEST(EgoFrame, HandRotation) {
  sim::EgoState ego;
  ego.heading = std::numbers::pi / 2;
  Trajectory t;
  t.waypoints = {{0.0, 0.0, std::numbers::pi / 2}, {0.0, 5.0, std::numbers::pi / 2}};
  const auto n = normalize_to_ego_frame(t, ego);
  EXPECT_NEAR(n.waypoints[1].x, 5.0, 1e-9);
  EXPECT_NEAR(n.waypoints[1].y, 0.0, 1e-9);
  EXPECT_NEAR(n.waypoints[1].heading, 0.0, 1e-9);
}

TEST(EgoFrame, RoundTrip) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    sim::EgoState ego;
    ego.position = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
    ego.heading = rng.uniform(-3.1, 3.1);
    Trajectory world = denormalize_from_ego_frame(random_traj(rng), ego);
    const auto back = denormalize_from_ego_frame(normalize_to_ego_frame(world, ego), ego);
    for (std::size_t i = 0; i < world.size(); ++i) {
      EXPECT_NEAR(back.waypoints[i].x, world.waypoints[i].x, 1e-9);
      EXPECT_NEAR(back.waypoints[i].y, world.waypoints[i].y, 1e-9);
      EXPECT_NEAR(sim::wrap_angle(back.waypoints[i].heading - world.waypoints[i].heading), 0.0, 1e-9);
    }
    const auto n = normalize_to_ego_frame(world, ego);
    EXPECT_NEAR(n.waypoints[0].x, 0.0, 1e-9);
    EXPECT_NEAR(n.waypoints[0].y, 0.0, 1e-9);
  }
}

TEST(TrajDistance, Identities) {
  Rng rng(3);
  const auto a = random_traj(rng);
  EXPECT_EQ(traj_distance(a, a), 0.0);
  auto b = a;
  for (auto& w : b.waypoints) w.x += 3.0, w.y += 4.0;
  EXPECT_NEAR(traj_distance(a, b), 5.0, 1e-12);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_traj(rng), q = random_traj(rng);
    EXPECT_EQ(traj_distance(p, q), traj_distance(q, p));
    EXPECT_GE(traj_distance(p, q), 0.0);
  }
}

TEST(TrajDistance, IgnoresHeading) {
  Rng rng(4);
  const auto a = random_traj(rng), b = random_traj(rng);
  auto c = b;
  for (auto& w : c.waypoints) w.heading = rng.uniform(-3.0, 3.0);
  EXPECT_EQ(traj_distance(a, b), traj_distance(a, c));
}

TEST(TrajDistance, LengthMismatch) {
  Rng rng(5);
  EXPECT_THROW(traj_distance(random_traj(rng, 8), random_traj(rng, 6)), LengthMismatch);
}

TEST(KMeans, SingleClusterIsMean) {
  const auto set = random_set(40, 6);
  const auto v = kmeans_cluster(set, 1, 0);
  ASSERT_EQ(v.size(), 1u);
  for (std::size_t f = 0; f < 8; ++f) {
    double mx = 0, my = 0;
    for (const auto& t : set) mx += t.waypoints[f].x, my += t.waypoints[f].y;
    EXPECT_NEAR(v.anchors[0].waypoints[f].x, mx / 40, 1e-9);
    EXPECT_NEAR(v.anchors[0].waypoints[f].y, my / 40, 1e-9);
  }
}

TEST(KMeans, AsManyClustersAsDistinctPoints) {
  auto set = random_set(12, 7);
  auto with_dups = set;
  with_dups.insert(with_dups.end(), set.begin(), set.begin() + 5);
  const auto v = kmeans_cluster(with_dups, 12, 3);
  EXPECT_EQ(v.inertia, 0.0);
}

TEST(KMeans, DeterministicAndMonotone) {
  const auto set = random_set(400, 8);
  const auto a = kmeans_cluster(set, 16, 9), b = kmeans_cluster(set, 16, 9);
  EXPECT_EQ(vocab_to_json(a), vocab_to_json(b));
  ASSERT_GE(a.inertia_log.size(), 2u);
  for (std::size_t i = 1; i < a.inertia_log.size(); ++i) EXPECT_LE(a.inertia_log[i], a.inertia_log[i - 1]);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) EXPECT_GT(traj_distance(a.anchors[i], a.anchors[j]), 0.0);
  for (const auto& anchor : a.anchors) {
    EXPECT_NEAR(anchor.waypoints[0].x, 0.0, 1e-12);
    EXPECT_NEAR(anchor.waypoints[0].y, 0.0, 1e-12);
    EXPECT_NEAR(anchor.waypoints[0].heading, 0.0, 1e-12);
  }
}

TEST(KMeans, TooFew) {
  EXPECT_THROW(kmeans_cluster(random_set(3, 1), 4, 0), TooFewTrajectories);
}

TEST(Nearest, ExactMatchAndFullSort) {
  const auto v = kmeans_cluster(random_set(300, 10), 32, 1);
  const auto hit = nearest_anchors(v, v.anchors[17], 1);
  EXPECT_EQ(hit.indices, std::vector<std::size_t>{17});
  EXPECT_EQ(hit.distances, std::vector<double>{0.0});
  Rng rng(11);
  const auto all = nearest_anchors(v, random_traj(rng), v.size());
  auto sorted = all.indices;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(v.size());
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  for (std::size_t i = 1; i < all.distances.size(); ++i) EXPECT_LE(all.distances[i - 1], all.distances[i]);
  EXPECT_THROW(nearest_anchors(v, v.anchors[0], 0), KOutOfRange);
  EXPECT_THROW(nearest_anchors(v, v.anchors[0], 33), KOutOfRange);
}

TEST(Nearest, MatchesBruteForce) {
  const auto v = kmeans_cluster(random_set(300, 12), 32, 2);
  Rng rng(13);
  for (int q = 0; q < 100; ++q) {
    const auto t = random_traj(rng);
    std::vector<std::pair<double, std::size_t>> brute;
    for (std::size_t i = 0; i < v.size(); ++i) brute.emplace_back(traj_distance(v.anchors[i], t), i);
    std::sort(brute.begin(), brute.end());
    const auto got = nearest_anchors(v, t, 5);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(got.indices[k], brute[k].second);
      EXPECT_EQ(got.distances[k], brute[k].first);
    }
  }
}

TEST(Nearest, TiesByIndex) {
  TrajectoryVocabulary v;
  v.F = 2;
  Trajectory a;
  a.waypoints = {{0, 0, 0}, {1, 0, 0}};
  Trajectory b = a;
  b.waypoints[1].y = 2.0;
  Trajectory c = a;
  c.waypoints[1].y = -2.0;
  v.anchors = {b, c, a};
  const auto got = nearest_anchors(v, a, 3);
  EXPECT_EQ(got.indices, (std::vector<std::size_t>{2, 0, 1}));
}

TEST(VocabIo, RoundTripAndHash) {
  const auto v = kmeans_cluster(random_set(100, 14), 8, 4);
  const auto path = (std::filesystem::temp_directory_path() / "deskdrive_vocab.json").string();
  save_vocab(v, path);
  const auto back = load_vocab(path);
  EXPECT_EQ(vocab_to_json(back), vocab_to_json(v));
  EXPECT_EQ(vocab_hash(back), vocab_hash(v));
  EXPECT_EQ(vocab_hash(v).size(), 40u);
}
