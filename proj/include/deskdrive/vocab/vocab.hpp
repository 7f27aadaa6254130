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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deskdrive/sim/types.hpp"

namespace deskdrive::vocab {

using sim::Trajectory;

struct TrajectoryVocabulary {
  std::vector<Trajectory> anchors;  // ego frame
  std::size_t F = 0;
  double dt = 0.5;
  uint64_t clustering_seed = 0;
  double inertia = 0.0;
  std::vector<double> inertia_log;  // one entry per Lloyd assignment step; not serialized

  std::size_t size() const noexcept { return anchors.size(); }
};

Trajectory normalize_to_ego_frame(const Trajectory& traj, const sim::EgoState& ego);
Trajectory denormalize_from_ego_frame(const Trajectory& traj, const sim::EgoState& ego);

/// Mean over waypoints of the (x, y) Euclidean distance.
double traj_distance(const Trajectory& a, const Trajectory& b);

/// Flattened (x, y) coordinates, 2F values.
std::vector<double> flatten_xy(const Trajectory& t);

TrajectoryVocabulary kmeans_cluster(std::span<const Trajectory> trajs, std::size_t n, uint64_t seed,
                                    std::size_t max_iters = 100);

struct Neighbors {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

Neighbors nearest_anchors(const TrajectoryVocabulary& vocab, const Trajectory& traj, std::size_t k);

std::string vocab_to_json(const TrajectoryVocabulary& vocab);
TrajectoryVocabulary vocab_from_json(const std::string& text);
void save_vocab(const TrajectoryVocabulary& vocab, const std::string& path);
TrajectoryVocabulary load_vocab(const std::string& path);
/// Content hash of the serialized vocabulary.
std::string vocab_hash(const TrajectoryVocabulary& vocab);

}  // namespace deskdrive::vocab
