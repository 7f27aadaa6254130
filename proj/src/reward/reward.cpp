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

#include "deskdrive/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deskdrive/sim/world.hpp"

namespace deskdrive::reward {

double min_time_to_contact(const sim::RolloutResult& r, const sim::Scene& scene, const sim::SimConfig& cfg) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = r.ego_poses.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i + 1 < n ? i : i - 1;
    const sim::Vec2 ve{(r.ego_poses[a + 1].x - r.ego_poses[a].x) / r.dt,
                       (r.ego_poses[a + 1].y - r.ego_poses[a].y) / r.dt};
    const sim::Vec2 pe{r.ego_poses[i].x, r.ego_poses[i].y};
    for (std::size_t j = 0; j < scene.agents.size(); ++j) {
      const auto& ag = scene.agents[j];
      best = std::min(best, sim::time_to_contact(r.agent_poses[i][j] - pe, ag.velocity - ve,
                                                 cfg.ego_radius + ag.radius));
    }
  }
  return best;
}

bool is_comfortable(const sim::RolloutResult& r, const ComfortLimits& lim) {
  double speed_prev = r.initial_speed;
  double accel_prev = r.initial_accel;
  for (std::size_t i = 1; i < r.ego_poses.size(); ++i) {
    const auto& p = r.ego_poses[i];
    const auto& q = r.ego_poses[i - 1];
    const double speed = std::hypot(p.x - q.x, p.y - q.y) / r.dt;
    const double accel = (speed - speed_prev) / r.dt;
    const double jerk = (accel - accel_prev) / r.dt;
    const double yaw = sim::wrap_angle(p.heading - q.heading) / r.dt;
    if (std::abs(accel) > lim.accel || std::abs(jerk) > lim.jerk || std::abs(yaw) > lim.yaw_rate) return false;
    speed_prev = speed;
    accel_prev = accel;
  }
  return true;
}

RewardBreakdown subscores(const sim::RolloutResult& r, const sim::Scene& scene, double expert_progress,
                          const sim::SimConfig& cfg, const ComfortLimits& limits) {
  RewardBreakdown b;
  b.nc = r.collided_step ? 0.0 : 1.0;
  b.dac = r.offroad_step ? 0.0 : 1.0;
  b.ttc = min_time_to_contact(r, scene, cfg) >= cfg.ttc_safe ? 1.0 : 0.0;
  b.comf = is_comfortable(r, limits) ? 1.0 : 0.0;
  b.ep = std::clamp(r.progress / std::max(expert_progress, kProgressFloor), 0.0, 1.0);
  return b;
}

std::vector<double> imitation_target(std::span<const double> d) {
  std::vector<double> out(d.size());
  if (d.empty()) return out;
  const double lo = *std::min_element(d.begin(), d.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) sum += out[i] = std::exp(lo - d[i]);
  for (double& v : out) v /= sum;
  return out;
}

double combined_plan_score(double r_im, const RewardBreakdown& b, const PlanScoreWeights& w) {
  auto lg = [&](double v) { return std::log(std::max(v, w.eps)); };
  const double inner = w.inner[0] * b.ttc + w.inner[1] * b.comf + w.inner[2] * b.ep;
  return w.w1 * lg(r_im) + w.w2 * lg(b.nc) + w.w3 * lg(b.dac) + w.w4 * lg(inner);
}

double signed_plan_reward(double r_im, const RewardBreakdown& b, const PlanScoreWeights& w) {
  auto lg = [&](double v) { return std::log(std::max(v, w.eps)); };
  const double inner = w.inner[0] * b.ttc + w.inner[1] * b.comf + w.inner[2] * b.ep;
  return -(w.w1 * lg(r_im) + w.w2 * lg(b.nc) + w.w3 * lg(b.dac) + w.w4 * lg(inner));
}

double driving_score(const RewardBreakdown& b) {
  return b.nc * b.dac * (5.0 * b.ttc + 2.0 * b.comf + 5.0 * b.ep) / 12.0;
}

}  // namespace deskdrive::reward
