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

#include <span>
#include <string>
#include <string_view>

namespace deskdrive {

/// Hex SHA-1 of raw bytes.
std::string sha1_hex(std::span<const unsigned char> bytes);
std::string sha1_hex(std::string_view text);

/// Git blob hash: sha1("blob <len>\0" + content).
std::string git_blob_hash(std::string_view content);

/// Reads a whole file; throws IOFailure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace deskdrive
