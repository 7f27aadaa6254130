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

#include "deskdrive/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/rng.hpp"

namespace deskdrive::sim {
namespace {

constexpr double kPi = std::numbers::pi;

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

// Straight / arc / straight centerline of total length cfg.route_length.
Route make_route(Rng& rng, int turn, const SimConfig& cfg) {
  const double first_leg = rng.uniform(25.0, 40.0);
  const double radius = rng.uniform(14.0, 30.0);
  const double angle = rng.uniform(0.5, 1.5);
  double heading = rng.uniform(-kPi, kPi);
  const double arc_end = first_leg + (turn == 0 ? 0.0 : radius * angle);

  std::vector<Vec2> pts{{0.0, 0.0}};
  const double ds = cfg.route_spacing;
  const auto n = static_cast<std::size_t>(std::llround(cfg.route_length / ds));
  Vec2 p{0.0, 0.0};
  for (std::size_t i = 1; i <= n; ++i) {
    const double s_mid = (static_cast<double>(i) - 0.5) * ds;
    double h = heading;
    if (turn != 0 && s_mid > first_leg && s_mid < arc_end) {
      const double dh = turn * ds / radius;
      h = heading + 0.5 * dh;
      heading += dh;
    }
    p = p + ds * unit(h);
    pts.push_back(p);
  }
  return Route::from_points(std::move(pts));
}

Command command_for(const Route& route, double s) {
  const double dh = wrap_angle(route.heading_at(s + 30.0) - route.heading_at(s));
  if (dh > 0.25) return Command::kLeft;
  if (dh < -0.25) return Command::kRight;
  return Command::kStraight;
}

AgentState sample_agent(Rng& rng, const Route& route, double s0, double target_speed,
                        const SimConfig& cfg) {
  AgentState a;
  a.radius = cfg.agent_radius;
  const int kind = static_cast<int>(rng.index(4));
  auto place = [&](double s, double lateral) {
    const double h = route.heading_at(s);
    const Vec2 n{-std::sin(h), std::cos(h)};
    return route.point_at(s) + lateral * n;
  };
  switch (kind) {
    case 0: {  // lead vehicle, possibly stopped
      const double s = s0 + rng.uniform(10.0, 30.0);
      const double v = rng.uniform() < 0.3 ? 0.0 : rng.uniform(1.0, 0.8 * target_speed);
      a.position = place(s, 0.0);
      a.velocity = v * unit(route.heading_at(s));
      break;
    }
    case 1: {  // parked at the edge
      const double s = s0 + rng.uniform(8.0, 40.0);
      const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
      a.position = place(s, side * rng.uniform(3.2, 3.8));
      break;
    }
    case 2: {  // oncoming in the other lane
      const double s = s0 + rng.uniform(20.0, 50.0);
      a.position = place(s, rng.uniform(3.2, 3.8));
      a.velocity = -rng.uniform(3.0, 8.0) * unit(route.heading_at(s));
      break;
    }
    default: {  // crossing
      const double s = s0 + rng.uniform(12.0, 35.0);
      const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double d = rng.uniform(6.0, 14.0);
      const double h = route.heading_at(s);
      const Vec2 n{-std::sin(h), std::cos(h)};
      a.position = place(s, side * d);
      a.velocity = -side * rng.uniform(2.0, 5.0) * n;
      break;
    }
  }
  return a;
}

Grid empty_grid(Vec2 origin, const SimConfig& cfg) {
  Grid g;
  g.rows = g.cols = cfg.world_cells;
  g.cell_size = cfg.cell_size;
  g.origin = origin;
  g.cells.assign(g.rows * g.cols, 0);
  return g;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::kLeft: return "left";
    case Command::kRight: return "right";
    default: return "straight";
  }
}

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kSparse: return "sparse";
    case Difficulty::kDense: return "dense";
    default: return "empty";
  }
}

Command command_from_string(const std::string& s) {
  if (s == "left") return Command::kLeft;
  if (s == "right") return Command::kRight;
  if (s == "straight") return Command::kStraight;
  throw InvalidArgument("unknown command '" + s + "'");
}

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "empty") return Difficulty::kEmpty;
  if (s == "sparse") return Difficulty::kSparse;
  if (s == "dense") return Difficulty::kDense;
  throw InvalidArgument("unknown difficulty '" + s + "'");
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Pose to_frame(const Pose& p, const Pose& frame) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  const double dx = p.x - frame.x, dy = p.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(p.heading - frame.heading)};
}

Pose from_frame(const Pose& p, const Pose& frame) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  return {frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y,
          wrap_angle(p.heading + frame.heading)};
}

uint8_t Grid::sample(Vec2 p) const {
  const auto c = static_cast<long>(std::floor((p.x - origin.x) / cell_size));
  const auto r = static_cast<long>(std::floor((p.y - origin.y) / cell_size));
  if (!in_bounds(r, c)) return 0;
  return cells[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
}

void Grid::stamp_disc(Vec2 center, double radius) {
  const long c0 = static_cast<long>(std::floor((center.x - radius - origin.x) / cell_size));
  const long c1 = static_cast<long>(std::floor((center.x + radius - origin.x) / cell_size));
  const long r0 = static_cast<long>(std::floor((center.y - radius - origin.y) / cell_size));
  const long r1 = static_cast<long>(std::floor((center.y + radius - origin.y) / cell_size));
  for (long r = r0; r <= r1; ++r) {
    for (long c = c0; c <= c1; ++c) {
      if (!in_bounds(r, c)) continue;
      const Vec2 cell{origin.x + (static_cast<double>(c) + 0.5) * cell_size,
                      origin.y + (static_cast<double>(r) + 0.5) * cell_size};
      if (dist(cell, center) <= radius)
        cells[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] = 1;
    }
  }
}

Route Route::from_points(std::vector<Vec2> pts) {
  Route r;
  r.arclength.reserve(pts.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) s += dist(pts[i], pts[i - 1]);
    r.arclength.push_back(s);
  }
  r.points = std::move(pts);
  return r;
}

namespace {
std::size_t segment_for(const Route& r, double s) {
  const auto it = std::upper_bound(r.arclength.begin(), r.arclength.end(), s);
  std::size_t i = it == r.arclength.begin() ? 0 : static_cast<std::size_t>(it - r.arclength.begin()) - 1;
  return std::min(i, r.points.size() - 2);
}
}  // namespace

Vec2 Route::point_at(double s) const {
  if (points.size() < 2) return points.empty() ? Vec2{} : points.front();
  s = std::clamp(s, 0.0, length());
  const std::size_t i = segment_for(*this, s);
  const double seg = arclength[i + 1] - arclength[i];
  const double u = seg > 0.0 ? (s - arclength[i]) / seg : 0.0;
  return points[i] + u * (points[i + 1] - points[i]);
}

double Route::heading_at(double s) const {
  if (points.size() < 2) return 0.0;
  const std::size_t i = segment_for(*this, std::clamp(s, 0.0, length()));
  const Vec2 d = points[i + 1] - points[i];
  return std::atan2(d.y, d.x);
}

double Route::project(Vec2 p) const {
  if (points.size() < 2) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const Vec2 d = points[i + 1] - points[i];
    const double len2 = d.x * d.x + d.y * d.y;
    double u = len2 > 0.0 ? ((p.x - points[i].x) * d.x + (p.y - points[i].y) * d.y) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const Vec2 q = points[i] + u * d;
    const double e = dist(p, q);
    if (e < best) {
      best = e;
      best_s = arclength[i] + u * (arclength[i + 1] - arclength[i]);
    }
  }
  return best_s;
}

double time_to_contact(Vec2 dp, Vec2 dv, double radius_sum) {
  const double c = dp.x * dp.x + dp.y * dp.y - radius_sum * radius_sum;
  if (c <= 0.0) return 0.0;
  const double a = dv.x * dv.x + dv.y * dv.y;
  const double b = 2.0 * (dp.x * dv.x + dp.y * dv.y);
  if (a == 0.0 || b >= 0.0) return std::numeric_limits<double>::infinity();
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  return (-b - std::sqrt(disc)) / (2.0 * a);
}

Scene assemble_scene(Route route, double ego_arclength, double speed, std::vector<AgentState> agents,
                     uint64_t seed, Difficulty difficulty, const SimConfig& cfg,
                     std::span<const Route> extra_roads) {
  Scene sc;
  sc.seed = seed;
  sc.difficulty = difficulty;

  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](const Route& r) {
    for (Vec2 p : r.points) {
      lo_x = std::min(lo_x, p.x), hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y), hi_y = std::max(hi_y, p.y);
    }
  };
  extend(route);
  const double cs = cfg.cell_size;
  const double half = 0.5 * static_cast<double>(cfg.world_cells) * cs;
  const Vec2 origin{std::floor(0.5 * (lo_x + hi_x) / cs) * cs - half,
                    std::floor(0.5 * (lo_y + hi_y) / cs) * cs - half};

  sc.drivable = empty_grid(origin, cfg);
  sc.route_mask = empty_grid(origin, cfg);
  for (Vec2 p : route.points) {
    sc.drivable.stamp_disc(p, cfg.road_half_width);
    sc.route_mask.stamp_disc(p, cfg.route_mask_radius);
  }
  for (const Route& r : extra_roads)
    for (Vec2 p : r.points) sc.drivable.stamp_disc(p, cfg.road_half_width);

  sc.ego.position = route.point_at(ego_arclength);
  sc.ego.heading = route.heading_at(ego_arclength);
  sc.ego.speed = std::clamp(speed, 0.0, cfg.v_max);
  sc.ego.accel = 0.0;
  sc.ego.command = command_for(route, ego_arclength);
  sc.route = std::move(route);
  sc.agents = std::move(agents);
  return sc;
}

Scene generate_scene(uint64_t seed, Difficulty difficulty, const SimConfig& cfg) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(difficulty)));
  for (;;) {
    const int turn = static_cast<int>(rng.index(3)) - 1;
    Route route = make_route(rng, turn, cfg);
    const double s0 = rng.uniform(14.0, 18.0);
    const double target = rng.uniform(6.0, 11.0);
    const double speed = target - rng.uniform(0.0, 3.0);

    std::vector<Route> branches;
    if (rng.uniform() < 0.4) {
      const double sb = rng.uniform(s0 + 5.0, 70.0);
      const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double h = route.heading_at(sb) + side * rng.uniform(0.6, 1.2);
      std::vector<Vec2> pts;
      for (int i = 0; i <= 40; ++i) pts.push_back(route.point_at(sb) + (0.5 * i) * unit(h));
      branches.push_back(Route::from_points(std::move(pts)));
    }

    Scene sc = assemble_scene(std::move(route), s0, speed, {}, seed, difficulty, cfg, branches);
    sc.target_speed = target;

    std::size_t n_agents = 0;
    if (difficulty == Difficulty::kSparse) n_agents = static_cast<std::size_t>(rng.uniform_int(1, 3));
    if (difficulty == Difficulty::kDense) n_agents = static_cast<std::size_t>(rng.uniform_int(4, 8));

    for (int attempt = 0; attempt < 50; ++attempt) {
      sc.agents.clear();
      while (sc.agents.size() < n_agents) {
        AgentState a = sample_agent(rng, sc.route, s0, target, cfg);
        if (dist(a.position, sc.ego.position) > cfg.ego_radius + a.radius + 0.5) sc.agents.push_back(a);
      }
      const RolloutResult res = rollout(sc, expert_policy(sc, cfg), cfg);
      if (!res.collided_step && !res.offroad_step) return sc;
    }
  }
}

RolloutResult rollout(const Scene& scene, const Trajectory& traj, const SimConfig& cfg) {
  if (traj.size() < 2) throw TrajectoryTooShort("trajectory has " + std::to_string(traj.size()) + " waypoints");
  if (std::abs(traj.dt - cfg.dt) > 1e-12) throw InvalidArgument("trajectory dt does not match simulation step");
  RolloutResult res;
  res.dt = traj.dt;
  res.initial_speed = scene.ego.speed;
  res.initial_accel = scene.ego.accel;
  const double hit = cfg.ego_radius;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Pose& p = traj.waypoints[i];
    res.ego_poses.push_back(p);
    const double t = static_cast<double>(i) * traj.dt;
    std::vector<Vec2> agents;
    agents.reserve(scene.agents.size());
    for (const AgentState& a : scene.agents) {
      const Vec2 q = a.at(t);
      agents.push_back(q);
      if (!res.collided_step && dist({p.x, p.y}, q) < hit + a.radius) res.collided_step = i;
    }
    res.agent_poses.push_back(std::move(agents));
    if (!res.offroad_step && !scene.drivable.sample({p.x, p.y})) res.offroad_step = i;
  }
  const Pose& first = traj.waypoints.front();
  const Pose& last = traj.waypoints.back();
  res.progress = std::max(0.0, scene.route.project({last.x, last.y}) - scene.route.project({first.x, first.y}));
  return res;
}

namespace {

// Would holding `accel` for one step and then braking to a stop keep clear of
// every agent, with time-to-contact after the step above the safety margin?
bool accel_is_safe(const Scene& scene, double s_now, double v, double accel, double t_now,
                   double v_cap, const SimConfig& cfg) {
  constexpr double kBrake = 6.0;
  constexpr double kClearance = 0.3;
  constexpr double kTtcMargin = 0.5;
  constexpr double kLook = 4.0;
  constexpr double kStep = 0.1;
  const double dt = cfg.dt;
  const double v1 = std::clamp(v + accel * dt, 0.0, v_cap);
  const double t_acc = accel != 0.0 ? std::clamp((v1 - v) / accel, 0.0, dt) : dt;
  auto travelled = [&](double t) {
    if (t <= t_acc) return v * t + 0.5 * accel * t * t;
    const double d1 = v * t_acc + 0.5 * accel * t_acc * t_acc;
    if (t <= dt) return d1 + v1 * (t - t_acc);
    const double d2 = d1 + v1 * (dt - t_acc);
    const double tb = std::min(t - dt, v1 / kBrake);
    return d2 + v1 * tb - 0.5 * kBrake * tb * tb;
  };
  for (double t = kStep; t <= kLook + 1e-9; t += kStep) {
    const Vec2 e = scene.route.point_at(s_now + travelled(t));
    for (const AgentState& a : scene.agents)
      if (dist(e, a.at(t_now + t)) < cfg.ego_radius + a.radius + kClearance) return false;
  }
  const double s1 = s_now + travelled(dt);
  const Vec2 e1 = scene.route.point_at(s1);
  const Vec2 ve = v1 * unit(scene.route.heading_at(s1));
  for (const AgentState& a : scene.agents) {
    const double ttc = time_to_contact(a.at(t_now + dt) - e1, a.velocity - ve, cfg.ego_radius + a.radius);
    if (ttc < cfg.ttc_safe + kTtcMargin) return false;
  }
  return true;
}

}  // namespace

Trajectory expert_policy(const Scene& scene, const SimConfig& cfg) {
  constexpr int kSubsteps = 10;
  constexpr double kAccels[] = {2.0, 1.0, 0.0, -1.0, -2.0, -3.0, -4.0, -6.0};
  constexpr double kEmergency = -8.0;
  const double v_cap = std::min(scene.target_speed, cfg.v_max);

  Trajectory traj;
  traj.dt = cfg.dt;
  Vec2 pos = scene.ego.position;
  double heading = scene.ego.heading;
  double v = scene.ego.speed;
  traj.waypoints.push_back({pos.x, pos.y, wrap_angle(heading)});

  for (std::size_t step = 1; step < cfg.horizon; ++step) {
    const double t_now = static_cast<double>(step - 1) * cfg.dt;
    const double s_now = scene.route.project(pos);
    const double wanted = std::clamp((v_cap - v) / cfg.dt, -2.0, 2.0);
    double accel = kEmergency;
    for (double a : kAccels) {
      if (a > wanted + 1e-12) continue;
      if (accel_is_safe(scene, s_now, v, a, t_now, v_cap, cfg)) {
        accel = a;
        break;
      }
    }
    const double h = cfg.dt / kSubsteps;
    for (int k = 0; k < kSubsteps; ++k) {
      const double v_next = std::clamp(v + accel * h, 0.0, cfg.v_max);
      const double v_mid = 0.5 * (v + v_next);
      const double lookahead = std::max(3.0, 0.6 * v_mid);
      const Vec2 target = scene.route.point_at(scene.route.project(pos) + lookahead);
      const double alpha = wrap_angle(std::atan2(target.y - pos.y, target.x - pos.x) - heading);
      const double dh = v_mid * h * 2.0 * std::sin(alpha) / lookahead;
      pos = pos + (v_mid * h) * unit(heading + 0.5 * dh);
      heading += dh;
      v = v_next;
    }
    traj.waypoints.push_back({pos.x, pos.y, wrap_angle(heading)});
  }
  return traj;
}

std::vector<HistoryState> history_states(const Scene& scene, const SimConfig& cfg) {
  std::vector<HistoryState> out;
  const double s0 = scene.route.project(scene.ego.position);
  for (std::size_t k = cfg.history; k-- > 0;) {
    const double t = -static_cast<double>(k) * cfg.dt;
    if (k == 0) {
      out.push_back({scene.ego.pose(), 0.0});
      continue;
    }
    const double s = std::max(0.0, s0 + scene.ego.speed * t);
    const Vec2 p = scene.route.point_at(s);
    out.push_back({{p.x, p.y, scene.route.heading_at(s)}, t});
  }
  return out;
}

std::vector<uint8_t> render_frame(const Scene& scene, const Pose& ego, double time, const SimConfig& cfg) {
  const std::size_t n = cfg.obs_cells;
  std::vector<uint8_t> out(kNumChannels * n * n, 0);
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  const double cs = cfg.cell_size;

  std::vector<Vec2> agents_local;
  std::vector<double> radii;
  for (const AgentState& a : scene.agents) {
    const Vec2 q = a.at(time);
    const double dx = q.x - ego.x, dy = q.y - ego.y;
    agents_local.push_back({c * dx + s * dy, -s * dx + c * dy});
    radii.push_back(a.radius);
  }

  for (std::size_t r = 0; r < n; ++r) {
    const double lx = (static_cast<double>(r) - static_cast<double>(cfg.anchor_row) + 0.5) * cs;
    for (std::size_t col = 0; col < n; ++col) {
      const double ly = (static_cast<double>(col) - static_cast<double>(cfg.anchor_col) + 0.5) * cs;
      const Vec2 w{ego.x + c * lx - s * ly, ego.y + s * lx + c * ly};
      const std::size_t cell = r * n + col;
      out[kDrivable * n * n + cell] = scene.drivable.sample(w);
      out[kRoute * n * n + cell] = scene.route_mask.sample(w);
      for (std::size_t i = 0; i < agents_local.size(); ++i) {
        if (dist({lx, ly}, agents_local[i]) <= radii[i]) {
          out[kAgent * n * n + cell] = 1;
          break;
        }
      }
    }
  }
  return out;
}

Observation render_observation(const Scene& scene, std::span<const HistoryState> history,
                               const SimConfig& cfg) {
  if (history.size() != cfg.history)
    throw HistoryLengthMismatch("expected " + std::to_string(cfg.history) + " history states, got " +
                                std::to_string(history.size()));
  Observation obs;
  obs.frames = history.size();
  obs.height = obs.width = cfg.obs_cells;
  obs.values.reserve(obs.frames * kNumChannels * obs.height * obs.width);
  for (const HistoryState& h : history) {
    const auto frame = render_frame(scene, h.ego, h.time, cfg);
    obs.values.insert(obs.values.end(), frame.begin(), frame.end());
  }
  return obs;
}

}  // namespace deskdrive::sim
