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

#include "deskdrive/sim/scene_io.hpp"

#include <sstream>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"

namespace deskdrive::sim {

std::vector<uint32_t> rle_encode(const std::vector<uint8_t>& cells) {
  std::vector<uint32_t> runs;
  uint8_t current = 0;
  uint32_t n = 0;
  for (uint8_t v : cells) {
    const uint8_t b = v ? 1 : 0;
    if (b != current) {
      runs.push_back(n);
      current = b;
      n = 0;
    }
    ++n;
  }
  runs.push_back(n);
  return runs;
}

std::vector<uint8_t> rle_decode(const std::vector<uint32_t>& runs, std::size_t total) {
  std::vector<uint8_t> cells;
  cells.reserve(total);
  uint8_t v = 0;
  for (uint32_t n : runs) {
    cells.insert(cells.end(), n, v);
    v ^= 1;
  }
  if (cells.size() != total) throw IOFailure("grid run lengths cover " + std::to_string(cells.size()) + " cells, expected " + std::to_string(total));
  return cells;
}

nlohmann::ordered_json scene_to_json(const Scene& sc) {
  nlohmann::ordered_json j;
  j["seed"] = sc.seed;
  j["difficulty"] = to_string(sc.difficulty);
  j["grid"] = {{"rows", sc.drivable.rows},
               {"cols", sc.drivable.cols},
               {"cell_size", sc.drivable.cell_size},
               {"origin", {sc.drivable.origin.x, sc.drivable.origin.y}},
               {"rle", rle_encode(sc.drivable.cells)}};
  auto pts = nlohmann::ordered_json::array();
  for (Vec2 p : sc.route.points) pts.push_back({p.x, p.y});
  j["route"] = pts;
  j["ego"] = {{"position", {sc.ego.position.x, sc.ego.position.y}},
              {"heading", sc.ego.heading},
              {"speed", sc.ego.speed},
              {"accel", sc.ego.accel},
              {"command", to_string(sc.ego.command)},
              {"target_speed", sc.target_speed}};
  auto agents = nlohmann::ordered_json::array();
  for (const AgentState& a : sc.agents)
    agents.push_back({{"position", {a.position.x, a.position.y}},
                      {"velocity", {a.velocity.x, a.velocity.y}},
                      {"radius", a.radius}});
  j["agents"] = agents;
  return j;
}

Scene scene_from_json(const nlohmann::json& j, const SimConfig& cfg) {
  try {
    Scene sc;
    sc.seed = j.at("seed").get<uint64_t>();
    sc.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    const auto& g = j.at("grid");
    sc.drivable.rows = g.at("rows").get<std::size_t>();
    sc.drivable.cols = g.at("cols").get<std::size_t>();
    sc.drivable.cell_size = g.at("cell_size").get<double>();
    sc.drivable.origin = {g.at("origin")[0].get<double>(), g.at("origin")[1].get<double>()};
    sc.drivable.cells = rle_decode(g.at("rle").get<std::vector<uint32_t>>(), sc.drivable.rows * sc.drivable.cols);

    std::vector<Vec2> pts;
    for (const auto& p : j.at("route")) pts.push_back({p[0].get<double>(), p[1].get<double>()});
    sc.route = Route::from_points(std::move(pts));

    sc.route_mask = sc.drivable;
    std::fill(sc.route_mask.cells.begin(), sc.route_mask.cells.end(), 0);
    for (Vec2 p : sc.route.points) sc.route_mask.stamp_disc(p, cfg.route_mask_radius);

    const auto& e = j.at("ego");
    sc.ego.position = {e.at("position")[0].get<double>(), e.at("position")[1].get<double>()};
    sc.ego.heading = e.at("heading").get<double>();
    sc.ego.speed = e.at("speed").get<double>();
    sc.ego.accel = e.at("accel").get<double>();
    sc.ego.command = command_from_string(e.at("command").get<std::string>());
    sc.target_speed = e.at("target_speed").get<double>();
    for (const auto& a : j.at("agents")) {
      AgentState s;
      s.position = {a.at("position")[0].get<double>(), a.at("position")[1].get<double>()};
      s.velocity = {a.at("velocity")[0].get<double>(), a.at("velocity")[1].get<double>()};
      s.radius = a.at("radius").get<double>();
      sc.agents.push_back(s);
    }
    return sc;
  } catch (const nlohmann::json::exception& ex) {
    throw IOFailure(std::string("malformed scene record: ") + ex.what());
  }
}

void write_scenes_jsonl(const std::string& path, const std::vector<Scene>& scenes) {
  std::string out;
  for (const Scene& sc : scenes) out += scene_to_json(sc).dump() + "\n";
  write_file(path, out);
}

std::vector<Scene> read_scenes_jsonl(const std::string& path, const SimConfig& cfg) {
  std::istringstream in(read_file(path));
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line), cfg));
    } catch (const nlohmann::json::parse_error& ex) {
      throw IOFailure(path + ": " + ex.what());
    }
  }
  return scenes;
}

}  // namespace deskdrive::sim
