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

#include "deskdrive/vocab/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/core/rng.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive::vocab {
namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

Trajectory normalize_to_ego_frame(const Trajectory& traj, const sim::EgoState& ego) {
  Trajectory out;
  out.dt = traj.dt;
  for (const auto& w : traj.waypoints) out.waypoints.push_back(sim::to_frame(w, ego.pose()));
  return out;
}

Trajectory denormalize_from_ego_frame(const Trajectory& traj, const sim::EgoState& ego) {
  Trajectory out;
  out.dt = traj.dt;
  for (const auto& w : traj.waypoints) out.waypoints.push_back(sim::from_frame(w, ego.pose()));
  return out;
}

double traj_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size() || a.dt != b.dt)
    throw LengthMismatch("trajectories differ in length or step (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::hypot(a.waypoints[i].x - b.waypoints[i].x, a.waypoints[i].y - b.waypoints[i].y);
  return s / static_cast<double>(a.size());
}

std::vector<double> flatten_xy(const Trajectory& t) {
  std::vector<double> v;
  v.reserve(2 * t.size());
  for (const auto& w : t.waypoints) {
    v.push_back(w.x);
    v.push_back(w.y);
  }
  return v;
}

TrajectoryVocabulary kmeans_cluster(std::span<const Trajectory> trajs, std::size_t n, uint64_t seed,
                                    std::size_t max_iters) {
  if (n == 0) throw InvalidArgument("vocabulary size must be at least 1");
  if (trajs.size() < n)
    throw TooFewTrajectories(std::to_string(trajs.size()) + " trajectories for " + std::to_string(n) + " clusters");
  const std::size_t F = trajs.front().size();
  const double dt = trajs.front().dt;
  for (const auto& t : trajs)
    if (t.size() != F || t.dt != dt) throw LengthMismatch("all trajectories must share F and dt");

  const std::size_t m = trajs.size();
  const std::size_t d = 2 * F;
  std::vector<double> pts(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto f = flatten_xy(trajs[i]);
    std::copy(f.begin(), f.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto point = [&](std::size_t i) { return pts.data() + i * d; };

  // k-means++ seeding
  Rng rng(seed);
  std::vector<double> cent(n * d);
  std::vector<double> dmin(m, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(m, 0);
  std::size_t pick = rng.index(m);
  for (std::size_t c = 0; c < n; ++c) {
    chosen[pick] = 1;
    std::copy(point(pick), point(pick) + d, cent.begin() + static_cast<std::ptrdiff_t>(c * d));
    if (c + 1 == n) break;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dmin[i] = std::min(dmin[i], sq_dist(point(i), point(pick), d));
      total += dmin[i];
    }
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (dmin[i] <= 0.0) continue;
        pick = i;
        u -= dmin[i];
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
    }
  }

  TrajectoryVocabulary v;
  v.F = F;
  v.dt = dt;
  v.clustering_seed = seed;

  std::vector<std::size_t> assign(m, n);
  std::vector<double> cost(m, 0.0);
  auto assign_step = [&]() {
    bool changed = false;
#pragma omp parallel for schedule(static) reduction(|| : changed)
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c) {
        const double e = sq_dist(point(i), cent.data() + c * d, d);
        if (e < bd) bd = e, best = c;
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      cost[i] = bd;
    }
    return changed;
  };

  for (std::size_t it = 0; it < max_iters; ++it) {
    const bool changed = assign_step();
    v.inertia_log.push_back(std::accumulate(cost.begin(), cost.end(), 0.0));
    if (!changed) break;

    std::vector<std::size_t> count(n, 0);
    std::fill(cent.begin(), cent.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      ++count[assign[i]];
      for (std::size_t j = 0; j < d; ++j) cent[assign[i] * d + j] += point(i)[j];
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (count[c] == 0) {
        // take over the worst-served point from a cluster that can spare it
        std::size_t far = m;
        for (std::size_t i = 0; i < m; ++i)
          if (count[assign[i]] > 1 && (far == m || cost[i] > cost[far])) far = i;
        if (far == m) continue;
        const std::size_t old = assign[far];
        --count[old];
        for (std::size_t j = 0; j < d; ++j) cent[old * d + j] -= point(far)[j];
        assign[far] = c;
        cost[far] = 0.0;
        count[c] = 1;
        std::copy(point(far), point(far) + d, cent.begin() + static_cast<std::ptrdiff_t>(c * d));
        continue;
      }
    }
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) cent[c * d + j] /= static_cast<double>(count[c]);
  }
  assign_step();
  v.inertia = std::accumulate(cost.begin(), cost.end(), 0.0);
  if (v.inertia_log.empty() || v.inertia != v.inertia_log.back()) v.inertia_log.push_back(v.inertia);

  // headings: circular mean of members per waypoint
  std::vector<double> sin_sum(n * F, 0.0), cos_sum(n * F, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t f = 0; f < F; ++f) {
      sin_sum[assign[i] * F + f] += std::sin(trajs[i].waypoints[f].heading);
      cos_sum[assign[i] * F + f] += std::cos(trajs[i].waypoints[f].heading);
    }
  for (std::size_t c = 0; c < n; ++c) {
    Trajectory a;
    a.dt = dt;
    for (std::size_t f = 0; f < F; ++f)
      a.waypoints.push_back({cent[c * d + 2 * f], cent[c * d + 2 * f + 1],
                             sim::wrap_angle(std::atan2(sin_sum[c * F + f], cos_sum[c * F + f]))});
    v.anchors.push_back(std::move(a));
  }
  return v;
}

Neighbors nearest_anchors(const TrajectoryVocabulary& vocab, const Trajectory& traj, std::size_t k) {
  if (k < 1 || k > vocab.size())
    throw KOutOfRange("K=" + std::to_string(k) + " outside [1, " + std::to_string(vocab.size()) + "]");
  std::vector<double> dist(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) dist[i] = traj_distance(vocab.anchors[i], traj);
  std::vector<std::size_t> idx(vocab.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  Neighbors out;
  for (std::size_t i = 0; i < k; ++i) {
    out.indices.push_back(idx[i]);
    out.distances.push_back(dist[idx[i]]);
  }
  return out;
}

std::string vocab_to_json(const TrajectoryVocabulary& v) {
  nlohmann::ordered_json j;
  j["N"] = v.size();
  j["F"] = v.F;
  j["dt"] = v.dt;
  j["clustering_seed"] = v.clustering_seed;
  j["inertia"] = v.inertia;
  auto anchors = nlohmann::ordered_json::array();
  for (const auto& a : v.anchors) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& w : a.waypoints) rows.push_back({w.x, w.y, w.heading});
    anchors.push_back(rows);
  }
  j["anchors"] = anchors;
  return j.dump() + "\n";
}

TrajectoryVocabulary vocab_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrajectoryVocabulary v;
    v.F = j.at("F").get<std::size_t>();
    v.dt = j.at("dt").get<double>();
    v.clustering_seed = j.at("clustering_seed").get<uint64_t>();
    v.inertia = j.at("inertia").get<double>();
    for (const auto& rows : j.at("anchors")) {
      Trajectory a;
      a.dt = v.dt;
      for (const auto& w : rows) a.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
      if (a.size() != v.F) throw IOFailure("anchor length does not match F");
      v.anchors.push_back(std::move(a));
    }
    if (v.anchors.size() != j.at("N").get<std::size_t>()) throw IOFailure("anchor count does not match N");
    return v;
  } catch (const nlohmann::json::exception& ex) {
    throw IOFailure(std::string("malformed vocabulary: ") + ex.what());
  }
}

void save_vocab(const TrajectoryVocabulary& vocab, const std::string& path) { write_file(path, vocab_to_json(vocab)); }

TrajectoryVocabulary load_vocab(const std::string& path) { return vocab_from_json(read_file(path)); }

std::string vocab_hash(const TrajectoryVocabulary& vocab) { return git_blob_hash(vocab_to_json(vocab)); }

}  // namespace deskdrive::vocab
