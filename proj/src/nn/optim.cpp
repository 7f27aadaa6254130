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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "deskdrive/core/error.hpp"
#include "deskdrive/core/hash.hpp"
#include "deskdrive/core/rng.hpp"
#include "deskdrive/nn/optim.hpp"

namespace deskdrive::nn {

void adam_step(ParamStore& store, double lr, const AdamOptions& opts) {
  if (store.frozen()) return;
  const int64_t t = store.step() + 1;
  store.set_step(t);
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < store.count(); ++i) {
    Parameter& p = store[i];
    if (p.grad.size() != p.value.size()) {
      throw ShapeMismatch("adam_step: gradient/parameter mismatch for " + p.name);
    }
    auto& m = p.first_moment.data;
    auto& v = p.second_moment.data;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * g;
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.count(); ++i)
    for (double g : store[i].grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < store.count(); ++i)
      for (double& g : store[i].grad.data) g *= s;
  }
  return norm;
}

GradCheckResult grad_check(ParamStore& store, const std::function<Var(Graph&)>& loss_fn,
                           const GradCheckOptions& opts) {
  store.zero_grad();
  {
    Graph g(true);
    Var loss = loss_fn(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph g(false);
    return loss_fn(g)->value.data[0];
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < store.count(); ++i)
    for (std::size_t j = 0; j < store[i].value.size(); ++j) coords.emplace_back(i, j);
  if (coords.size() > opts.max_coords) {
    Rng rng(opts.seed);
    for (std::size_t i = 0; i < opts.max_coords; ++i) {
      const std::size_t r = i + rng.index(coords.size() - i);
      std::swap(coords[i], coords[r]);
    }
    coords.resize(opts.max_coords);
  }

  GradCheckResult res;
  for (auto [pi, j] : coords) {
    Parameter& p = store[pi];
    const double orig = p.value.data[j];
    p.value.data[j] = orig + opts.h;
    const double up = eval();
    p.value.data[j] = orig - opts.h;
    const double down = eval();
    p.value.data[j] = orig;
    const double numeric = (up - down) / (2.0 * opts.h);
    const double analytic = p.grad.data[j];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic - numeric) / denom;
    if (err > res.max_relative_error) {
      res.max_relative_error = err;
      res.worst_param = p.name + "[" + std::to_string(j) + "]";
    }
    ++res.coords_checked;
  }
  return res;
}

std::string serialize_values(const ParamStore& store) {
  std::string bytes;
  bytes.reserve(store.num_values() * 8);
  for (std::size_t i = 0; i < store.count(); ++i) {
    for (double v : store[i].value.data) {
      uint64_t u = std::bit_cast<uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
    }
  }
  return bytes;
}

void save_checkpoint(const ParamStore& store, const std::string& prefix) {
  const auto parent = std::filesystem::path(prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  nlohmann::ordered_json manifest;
  manifest["step"] = store.step();
  manifest["dtype"] = "f64";
  nlohmann::ordered_json entries = nlohmann::ordered_json::object();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < store.count(); ++i) {
    const Parameter& p = store[i];
    entries[p.name] = {{"shape", p.value.shape}, {"dtype", "f64"}, {"offset", offset}};
    offset += p.value.size() * 8;
  }
  manifest["params"] = entries;
  write_file(prefix + ".bin", serialize_values(store));
  write_file(prefix + ".json", manifest.dump(2) + "\n");
}

void load_checkpoint(ParamStore& store, const std::string& prefix) {
  if (!std::filesystem::exists(prefix + ".json") || !std::filesystem::exists(prefix + ".bin")) {
    throw MissingPrerequisite("checkpoint not found: " + prefix);
  }
  const auto manifest = nlohmann::ordered_json::parse(read_file(prefix + ".json"));
  const std::string bytes = read_file(prefix + ".bin");
  for (const auto& [name, entry] : manifest.at("params").items()) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    Tensor t(shape, 0.0);
    if (offset + t.size() * 8 > bytes.size()) throw IOFailure("truncated checkpoint " + prefix);
    for (std::size_t j = 0; j < t.size(); ++j) {
      uint64_t u = 0;
      for (int b = 0; b < 8; ++b)
        u |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[offset + j * 8 + b])) << (8 * b);
      t.data[j] = std::bit_cast<double>(u);
    }
    if (store.contains(name)) {
      Parameter& p = store.at(name);
      if (p.value.shape != t.shape) {
        throw ShapeMismatch("checkpoint shape mismatch for " + name);
      }
      p.value = std::move(t);
    } else {
      store.add(name, std::move(t));
    }
  }
  store.set_step(manifest.at("step").get<int64_t>());
}

}  // namespace deskdrive::nn
