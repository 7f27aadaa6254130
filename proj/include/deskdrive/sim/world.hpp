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
#include <vector>

#include "deskdrive/sim/types.hpp"

namespace deskdrive::sim {

double wrap_angle(double a);

/// Expresses a world-frame pose relative to `frame` and back.
Pose to_frame(const Pose& p, const Pose& frame);
Pose from_frame(const Pose& p, const Pose& frame);

/// Builds grids, ego and command from a route and a list of agents. Used by
/// generate_scene; exposed so tests can place things by hand.
Scene assemble_scene(Route route, double ego_arclength, double speed, std::vector<AgentState> agents,
                     uint64_t seed, Difficulty difficulty, const SimConfig& cfg = {},
                     std::span<const Route> extra_roads = {});

Scene generate_scene(uint64_t seed, Difficulty difficulty, const SimConfig& cfg = {});

RolloutResult rollout(const Scene& scene, const Trajectory& traj, const SimConfig& cfg = {});

Trajectory expert_policy(const Scene& scene, const SimConfig& cfg = {});

/// Ego poses over the past cfg.history steps, oldest first, assuming the ego
/// held its current speed along the route.
std::vector<HistoryState> history_states(const Scene& scene, const SimConfig& cfg = {});

Observation render_observation(const Scene& scene, std::span<const HistoryState> history,
                               const SimConfig& cfg = {});

/// One ego-centric frame (3 × H × W) with agents advanced to `time`.
std::vector<uint8_t> render_frame(const Scene& scene, const Pose& ego, double time,
                                  const SimConfig& cfg = {});

/// Earliest t ≥ 0 at which two discs moving at constant velocity touch;
/// +inf if never. 0 when already overlapping.
double time_to_contact(Vec2 dp, Vec2 dv, double radius_sum);

}  // namespace deskdrive::sim
