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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace deskdrive::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

using Waypoint = Pose;

struct Trajectory {
  std::vector<Waypoint> waypoints;
  double dt = 0.5;

  std::size_t size() const noexcept { return waypoints.size(); }
};

enum class Command { kLeft, kStraight, kRight };
enum class Difficulty { kEmpty, kSparse, kDense };

std::string to_string(Command c);
std::string to_string(Difficulty d);
Command command_from_string(const std::string& s);
Difficulty difficulty_from_string(const std::string& s);

struct EgoState {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  Command command = Command::kStraight;

  Pose pose() const { return {position.x, position.y, heading}; }
};

struct AgentState {
  Vec2 position;
  Vec2 velocity;
  double radius = 1.0;

  Vec2 at(double t) const { return position + t * velocity; }
};

/// Row-major binary raster in the world frame. Cell (r, c) covers
/// x in [ox + c·cs, ox + (c+1)·cs), y in [oy + r·cs, oy + (r+1)·cs).
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double cell_size = 0.5;
  Vec2 origin;
  std::vector<uint8_t> cells;

  bool in_bounds(long r, long c) const {
    return r >= 0 && c >= 0 && static_cast<std::size_t>(r) < rows &&
           static_cast<std::size_t>(c) < cols;
  }
  /// Value at a world point; outside the grid reads 0.
  uint8_t sample(Vec2 p) const;
  void stamp_disc(Vec2 center, double radius);
};

/// Centerline polyline with cumulative arclength.
struct Route {
  std::vector<Vec2> points;
  std::vector<double> arclength;

  double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  /// Arclength of the closest point on the polyline.
  double project(Vec2 p) const;

  static Route from_points(std::vector<Vec2> pts);
};

struct Scene {
  uint64_t seed = 0;
  Difficulty difficulty = Difficulty::kEmpty;
  Grid drivable;
  Grid route_mask;
  Route route;
  EgoState ego;
  double target_speed = 8.0;
  std::vector<AgentState> agents;
};

struct RolloutResult {
  std::vector<Pose> ego_poses;
  std::vector<std::vector<Vec2>> agent_poses;  // [step][agent]
  std::optional<std::size_t> collided_step;
  std::optional<std::size_t> offroad_step;
  double progress = 0.0;
  double initial_speed = 0.0;
  double initial_accel = 0.0;
  double dt = 0.5;
};

/// A past ego pose and its time offset (seconds, ≤ 0) relative to the scene.
struct HistoryState {
  Pose ego;
  double time = 0.0;
};

enum Channel : std::size_t { kDrivable = 0, kAgent = 1, kRoute = 2, kNumChannels = 3 };

/// T frames × 3 channels × H × W binary values, row-major in that order.
struct Observation {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<uint8_t> values;

  uint8_t at(std::size_t t, std::size_t ch, std::size_t r, std::size_t c) const {
    return values[((t * kNumChannels + ch) * height + r) * width + c];
  }
  uint8_t& at(std::size_t t, std::size_t ch, std::size_t r, std::size_t c) {
    return values[((t * kNumChannels + ch) * height + r) * width + c];
  }
};

struct SimConfig {
  std::size_t world_cells = 256;
  double cell_size = 0.5;
  std::size_t obs_cells = 64;
  std::size_t anchor_row = 16;  // ego cell; rows grow forward
  std::size_t anchor_col = 32;  // cols grow to the left
  std::size_t history = 4;
  std::size_t horizon = 8;
  double dt = 0.5;
  double v_max = 15.0;
  double ego_radius = 1.5;
  double agent_radius = 1.0;
  double ttc_safe = 1.0;
  double road_half_width = 4.0;
  double route_mask_radius = 1.0;
  double route_length = 90.0;
  double route_spacing = 0.5;
};

}  // namespace deskdrive::sim
