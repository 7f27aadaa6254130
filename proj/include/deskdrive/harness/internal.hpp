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

#include <chrono>
#include <string>

#include "deskdrive/harness/experiment.hpp"

// Shared helpers for the harness translation units.
namespace deskdrive::harness::detail {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0);
double cosine_lr(double base, std::size_t step, std::size_t total);
bool checkpoint_exists(const std::string& prefix);
ParamStore load_store(const std::string& prefix);
std::string fmt(double v);  // %.17g
void ensure_parent(const std::string& path);

vocab::TrajectoryVocabulary require_vocab(const std::string& path);
rewarder::FarConfig far_config(const ExperimentConfig& cfg);

// Everything needed at inference.
struct Stack {
  Stack(const ExperimentConfig& cfg, vocab::TrajectoryVocabulary v)
      : model(cfg.wm, cfg.sim), planner(cfg.planner), far(far_config(cfg)), vocab(std::move(v)) {}

  wm::WorldModel model;
  planner::Planner planner;
  rewarder::FutureRewarder far;
  vocab::TrajectoryVocabulary vocab;
  ParamStore enc;  // frozen planner encoders
  ParamStore plan;
  ParamStore far_store;
  ParamStore wm;  // full world model, when present
  Tensor anchor_q;
  bool has_wm = false;
};

Stack load_stack(const ExperimentConfig& cfg, const vocab::TrajectoryVocabulary& vocab, const Checkpoints& ck,
                 bool need_far);

struct ScoredRollout {
  reward::RewardBreakdown breakdown;
  double score = 0.0;
};

ScoredRollout score_trajectory(const sim::Scene& scene, const sim::Trajectory& ego_traj, double expert_progress,
                               const sim::SimConfig& sim);
double expert_progress(const sim::Scene& scene, const sim::SimConfig& sim);
sim::Observation observe(const sim::Scene& scene, const sim::SimConfig& sim);

struct PlannedScene {
  Tensor f;
  Tensor queries;  // N×C planner queries
  std::vector<planner::Candidate> candidates;
  double encoders_ms = 0.0;
  double planner_ms = 0.0;
};

PlannedScene plan_scene(const ExperimentConfig& cfg, Stack& s, const sim::Scene& scene, std::size_t k);
Tensor query_row(const Tensor& queries, std::size_t index);

}  // namespace deskdrive::harness::detail
