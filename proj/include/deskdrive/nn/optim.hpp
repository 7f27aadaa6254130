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
#include <functional>
#include <string>

#include "deskdrive/nn/graph.hpp"
#include "deskdrive/nn/param_store.hpp"

namespace deskdrive::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment update of every parameter from its
/// accumulated `grad`; increments the store step. Frozen stores are untouched.
void adam_step(ParamStore& store, double lr, const AdamOptions& opts = {});

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

struct GradCheckOptions {
  double h = 1e-5;
  std::size_t max_coords = 1000;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
};

/// Compares reverse-mode gradients of `loss_fn` (which builds a 1×1 loss on
/// the graph it is given) with central differences on at most `max_coords`
/// parameter coordinates. Relative error uses max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(ParamStore& store, const std::function<Var(Graph&)>& loss_fn,
                           const GradCheckOptions& opts = {});

/// Writes `<prefix>.bin` (little-endian f64 values, parameters in store order)
/// and `<prefix>.json` (name → shape, dtype, byte offset; plus step count).
void save_checkpoint(const ParamStore& store, const std::string& prefix);
/// Loads values into existing parameters (shapes must match), creating any
/// that are missing.
void load_checkpoint(ParamStore& store, const std::string& prefix);
/// Raw little-endian bytes as written to `<prefix>.bin`.
std::string serialize_values(const ParamStore& store);

}  // namespace deskdrive::nn
