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

#include <array>
#include <span>
#include <vector>

#include "deskdrive/sim/types.hpp"

namespace deskdrive::reward {

struct RewardBreakdown {
  double nc = 1.0;
  double dac = 1.0;
  double ttc = 1.0;
  double comf = 1.0;
  double ep = 1.0;

  std::array<double, 5> as_array() const { return {nc, dac, ttc, comf, ep}; }
  static RewardBreakdown from_array(std::span<const double> v) { return {v[0], v[1], v[2], v[3], v[4]}; }
};

struct PlanScoreWeights {
  double w1 = 0.1;
  double w2 = 0.5;
  double w3 = 0.5;
  double w4 = 1.0;
  std::array<double, 3> inner{5.0, 2.0, 5.0};  // ttc, comf, ep
  double eps = 1e-6;
};

struct ComfortLimits {
  double accel = 4.0;     // m/s²
  double jerk = 6.0;      // m/s³
  double yaw_rate = 1.0;  // rad/s
};

constexpr double kProgressFloor = 0.1;  // m

/// Smallest constant-velocity time-to-contact between the ego disc and any
/// agent over the rollout steps.
double min_time_to_contact(const sim::RolloutResult& result, const sim::Scene& scene,
                           const sim::SimConfig& cfg = {});
bool is_comfortable(const sim::RolloutResult& result, const ComfortLimits& limits = {});

RewardBreakdown subscores(const sim::RolloutResult& result, const sim::Scene& scene, double expert_progress,
                          const sim::SimConfig& cfg = {}, const ComfortLimits& limits = {});

/// softmax(−d), max-shifted.
std::vector<double> imitation_target(std::span<const double> distances);

/// S = w1·log(r_im) + w2·log(nc) + w3·log(dac) + w4·log(5·ttc + 2·comf + 5·ep),
/// every argument clamped below at eps. Larger is better.
double combined_plan_score(double r_im, const RewardBreakdown& b, const PlanScoreWeights& w = {});
/// The same expression with the leading minus sign; smaller is better.
double signed_plan_reward(double r_im, const RewardBreakdown& b, const PlanScoreWeights& w = {});

/// nc · dac · (5·ttc + 2·comf + 5·ep) / 12.
double driving_score(const RewardBreakdown& b);

}  // namespace deskdrive::reward
