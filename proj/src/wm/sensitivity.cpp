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

#include "deskdrive/core/error.hpp"
#include "deskdrive/sim/world.hpp"
#include "deskdrive/wm/world_model.hpp"

namespace deskdrive::wm {
namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct Sample {
  double distance;
  double similarity;
};

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("cosine over vectors of different length");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("spearman over sequences of different length");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<double> sensitivity_bins() { return {0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 50.0}; }

SensitivityResult motion_sensitivity(const WorldModel& model, ParamStore& store, std::span<const sim::Scene> scenes,
                                     const vocab::TrajectoryVocabulary& vocab, uint64_t seed,
                                     std::size_t anchors_per_scene) {
  if (anchors_per_scene < 2 || anchors_per_scene > vocab.anchors.size())
    throw InvalidArgument("anchors_per_scene must lie in [2, vocabulary size]");
  const auto& sim = model.sim_config();
  const std::size_t k = model.config().k;
  const std::size_t steps = model.config().sample_steps;
  std::vector<std::vector<Sample>> per_scene(scenes.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const sim::Scene& scene = scenes[s];
    const auto hist = sim::history_states(scene, sim);
    const Tensor f = model.encode_history(store, sim::render_observation(scene, hist, sim)).values;
    const auto expert = vocab::normalize_to_ego_frame(sim::expert_policy(scene, sim), scene.ego);
    const uint64_t noise_seed = derive_seed(seed, scene.seed);
    const Tensor z_ref = model.sample_future_latent(store, f, model.encode_motion(store, expert, vocab, k).rows, steps,
                                                    noise_seed).values;

    const auto ranked = vocab::nearest_anchors(vocab, expert, vocab.anchors.size());
    for (std::size_t j = 0; j < anchors_per_scene; ++j) {
      const std::size_t rank = static_cast<std::size_t>(
          std::lround(static_cast<double>(j) * static_cast<double>(ranked.indices.size() - 1) /
                      static_cast<double>(anchors_per_scene - 1)));
      const auto& anchor = vocab.anchors[ranked.indices[rank]];
      const Tensor z = model.sample_future_latent(store, f, model.encode_motion(store, anchor, vocab, k).rows, steps,
                                                  noise_seed).values;
      per_scene[s].push_back({ranked.distances[rank], cosine_similarity(z_ref.data, z.data)});
    }
  }

  const auto edges = sensitivity_bins();
  std::vector<SensitivityPoint> bins(edges.size() - 1);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    bins[b].bin_lo = edges[b];
    bins[b].bin_hi = edges[b + 1];
  }
  std::vector<double> all_d, all_s;
  for (const auto& samples : per_scene)
    for (const Sample& x : samples) {
      all_d.push_back(x.distance);
      all_s.push_back(x.similarity);
      const auto it = std::upper_bound(edges.begin(), edges.end(), x.distance);
      std::size_t b = static_cast<std::size_t>(std::distance(edges.begin(), it));
      b = std::clamp<std::size_t>(b, 1, bins.size()) - 1;
      bins[b].mean_distance += x.distance;
      bins[b].mean_similarity += x.similarity;
      ++bins[b].count;
    }

  SensitivityResult out;
  std::vector<double> xs, ys;
  for (auto& p : bins) {
    if (p.count == 0) continue;
    p.mean_distance /= static_cast<double>(p.count);
    p.mean_similarity /= static_cast<double>(p.count);
    out.curve.push_back(p);
    xs.push_back(p.mean_distance);
    ys.push_back(p.mean_similarity);
  }
  out.spearman = spearman(xs, ys);
  out.sample_spearman = spearman(all_d, all_s);
  return out;
}

}  // namespace deskdrive::wm
