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

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deskdrive/sim/types.hpp"

namespace deskdrive::sim {

/// Run lengths of alternating 0/1 values, starting with a (possibly empty) run of 0s.
std::vector<uint32_t> rle_encode(const std::vector<uint8_t>& cells);
std::vector<uint8_t> rle_decode(const std::vector<uint32_t>& runs, std::size_t total);

nlohmann::ordered_json scene_to_json(const Scene& scene);
/// The route mask is not stored; it is rebuilt from the route.
Scene scene_from_json(const nlohmann::json& j, const SimConfig& cfg = {});

void write_scenes_jsonl(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes_jsonl(const std::string& path, const SimConfig& cfg = {});

}  // namespace deskdrive::sim
