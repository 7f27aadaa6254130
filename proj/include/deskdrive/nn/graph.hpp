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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "deskdrive/nn/param_store.hpp"
#include "deskdrive/nn/tensor.hpp"

namespace deskdrive::nn {

class Graph;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  Parameter* param = nullptr;
  Graph* graph = nullptr;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

/// Reverse-mode tape. Nodes are recorded in creation order, which is a valid
/// topological order, so backward() is a single reverse sweep.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf that receives a gradient (when grad is enabled).
  Var input(Tensor value);
  /// Leaf bound to a store parameter. Repeated calls share one leaf.
  Var param(ParamStore& store, const std::string& name);

  /// Creates an op node. `backward` is dropped when no parent needs a gradient.
  Var make(Tensor value, std::span<const Var> parents, std::function<void(Node&)> backward);

  /// Seeds d(loss)=1 for a 1×1 loss, sweeps the tape, and accumulates leaf
  /// gradients into their parameters.
  void backward(const Var& loss);

  std::size_t tape_size() const noexcept { return tape_.size(); }

 private:
  bool grad_enabled_;
  std::vector<Var> tape_;
  std::unordered_map<const Parameter*, Var> param_leaves_;
};

// ---- ops -------------------------------------------------------------------
// All ops take and return 2-D values (rows × cols). Shape errors throw
// ShapeMismatch; non-finite results throw NonFiniteValue.

Var matmul(const Var& a, const Var& b);     // (m×k)(k×n)
Var matmul_nt(const Var& a, const Var& b);  // (m×k)(n×k)ᵀ
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // (m×n) + (1×n) broadcast
Var scale(const Var& a, double s);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var log_sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var gather_rows(const Var& a, std::span<const std::size_t> indices);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);
Var mean_rows(const Var& a);                    // (m×n) → (1×n)
Var broadcast_rows(const Var& row, std::size_t m);  // (1×n) → (m×n)
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// Detaches: a constant copy with no gradient path.
Var stop_gradient(const Var& a);

// ---- losses (all return 1×1) ------------------------------------------------
Var mse_loss(const Var& pred, const Tensor& target);
Var l1_loss(const Var& pred, const Tensor& target);
/// −Σ target·log softmax(logits) over each row, summed over rows.
Var soft_cross_entropy(const Var& logits, const Tensor& target);
/// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Var bce_with_logits(const Var& logits, const Tensor& target);

}  // namespace deskdrive::nn
