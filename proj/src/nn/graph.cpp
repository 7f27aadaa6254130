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

#include "deskdrive/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deskdrive/core/error.hpp"
#include "deskdrive/kernels/kernels.hpp"

namespace deskdrive::nn {

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape, 0.0);
  return grad;
}

Var Graph::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->graph = this;
  return n;
}

Var Graph::input(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->graph = this;
  n->requires_grad = grad_enabled_;
  if (n->requires_grad) tape_.push_back(n);
  return n;
}

Var Graph::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return it->second;
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->graph = this;
  n->param = &p;
  n->requires_grad = grad_enabled_ && !store.frozen();
  if (n->requires_grad) tape_.push_back(n);
  param_leaves_.emplace(&p, n);
  return n;
}

Var Graph::make(Tensor value, std::span<const Var> parents,
                std::function<void(Node&)> backward) {
  if (!value.all_finite()) throw NonFiniteValue("op produced NaN/Inf, shape " + value.shape_string());
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->graph = this;
  bool needs = false;
  if (grad_enabled_) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  n->requires_grad = needs;
  if (needs) {
    n->backward = std::move(backward);
    tape_.push_back(n);
  }
  return n;
}

void Graph::backward(const Var& loss) {
  if (loss->value.size() != 1) throw ShapeMismatch("backward needs a 1x1 loss");
  if (!loss->requires_grad) return;
  loss->grad_buffer().data[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(n);
  }
  for (auto& n : tape_) {
    if (n->param && n->grad.size() == n->value.size()) {
      auto& dst = n->param->grad.data;
      const auto& src = n->grad.data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

namespace {

Graph* graph_of(const Var& a) { return a->graph; }

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ShapeMismatch(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

void add_into(Node& parent, const Tensor& g) {
  if (!parent.requires_grad) return;
  auto& dst = parent.grad_buffer().data;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  require(A.cols() == B.rows(), "matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  kernels::matmul(A.data.data(), B.data.data(), C.data.data(), m, k, n, false);
  Var parents[] = {a, b};
  return graph_of(a)->make(std::move(C), parents, [a, b, m, k, n](Node& self) {
    if (a->requires_grad) {
      kernels::matmul_nt(self.grad.data.data(), b->value.data.data(),
                         a->grad_buffer().data.data(), m, n, k, true);
    }
    if (b->requires_grad) {
      kernels::matmul_tn(a->value.data.data(), self.grad.data.data(),
                         b->grad_buffer().data.data(), k, m, n, true);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  require(A.cols() == B.cols(), "matmul_nt", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor C = Tensor::matrix(m, n);
  kernels::matmul_nt(A.data.data(), B.data.data(), C.data.data(), m, k, n, false);
  Var parents[] = {a, b};
  return graph_of(a)->make(std::move(C), parents, [a, b, m, k, n](Node& self) {
    if (a->requires_grad) {
      kernels::matmul(self.grad.data.data(), b->value.data.data(), a->grad_buffer().data.data(),
                      m, n, k, true);
    }
    if (b->requires_grad) {
      kernels::matmul_tn(self.grad.data.data(), a->value.data.data(),
                         b->grad_buffer().data.data(), n, m, k, true);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(same_shape(a->value, b->value), "add", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  Var parents[] = {a, b};
  return graph_of(a)->make(std::move(out), parents, [a, b](Node& self) {
    add_into(*a, self.grad);
    add_into(*b, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(same_shape(a->value, b->value), "sub", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  Var parents[] = {a, b};
  return graph_of(a)->make(std::move(out), parents, [a, b](Node& self) {
    add_into(*a, self.grad);
    if (b->requires_grad) {
      auto& g = b->grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(same_shape(a->value, b->value), "mul", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  Var parents[] = {a, b};
  return graph_of(a)->make(std::move(out), parents, [a, b](Node& self) {
    if (a->requires_grad) {
      auto& g = a->grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i] * a->value.data[i];
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  const std::size_t m = a->value.rows(), n = a->value.cols();
  require(row->value.rows() == 1 && row->value.cols() == n, "add_row", a->value, row->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += row->value.data[j];
  Var parents[] = {a, row};
  return graph_of(a)->make(std::move(out), parents, [a, row, m, n](Node& self) {
    add_into(*a, self.grad);
    if (row->requires_grad) {
      auto& g = row->grad_buffer().data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.data[i * n + j];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v *= s;
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, s](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad.data[i];
  });
}

Var gelu(const Var& a) {
  Tensor out = a->value;
  for (double& x : out.data) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    const auto& xs = a->value.data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = xs[i];
      const double th = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
      const double d = 0.5 * (1.0 + th) +
                       0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      g[i] += self.grad.data[i] * d;
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (double& x : out.data) x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value.data[i];
      g[i] += self.grad.data[i] * y * (1.0 - y);
    }
  });
}

Var log_sigmoid(const Var& a) {
  Tensor out = a->value;
  for (double& x : out.data) x = std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = a->value.data[i];
      // d/dx log σ(x) = σ(−x)
      const double s = x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
      g[i] += self.grad.data[i] * s;
    }
  });
}

Var softmax_rows(const Var& a) {
  const std::size_t m = a->value.rows(), n = a->value.cols();
  Tensor out = Tensor::matrix(m, n);
  kernels::softmax_rows(a->value.data.data(), out.data.data(), m, n);
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, m, n](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data.data() + i * n;
      const double* dy = self.grad.data.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const std::size_t m = a->value.rows(), n = a->value.cols();
  Tensor out = a->value;
  for (std::size_t i = 0; i < m; ++i) {
    double* x = out.data.data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) x[j] -= lse;
  }
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, m, n](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data.data() + i * n;
      const double* dy = self.grad.data.data() + i * n;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dy[j] - std::exp(y[j]) * sum;
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const std::size_t m = x->value.rows(), n = x->value.cols();
  require(gain->value.size() == n && bias->value.size() == n, "layer_norm", x->value, gain->value);
  Tensor xhat = Tensor::matrix(m, n);
  std::vector<double> inv_std(m);
  kernels::normalize_rows(x->value.data.data(), xhat.data.data(), inv_std.data(), m, n, eps);
  Tensor out = xhat;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.data[i * n + j] = xhat.data[i * n + j] * gain->value.data[j] + bias->value.data[j];
  Var parents[] = {x, gain, bias};
  return graph_of(x)->make(
      std::move(out), parents,
      [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& dy = self.grad.data;
        if (gain->requires_grad) {
          auto& g = gain->grad_buffer().data;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * xhat.data[i * n + j];
        }
        if (bias->requires_grad) {
          auto& g = bias->grad_buffer().data;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j];
        }
        if (x->requires_grad) {
          auto& g = x->grad_buffer().data;
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * gain->value.data[j];
              s1 += dxh;
              s2 += dxh * xhat.data[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = dy[i * n + j] * gain->value.data[j];
              g[i * n + j] +=
                  inv_std[i] * (dxh - inv_n * s1 - xhat.data[i * n + j] * inv_n * s2);
            }
          }
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  const std::size_t n = parts.front()->value.cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require(p->value.cols() == n, "concat_rows", parts.front()->value, p->value);
    m += p->value.rows();
  }
  Tensor out = Tensor::matrix(m, n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.size();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return graph_of(parts.front())->make(std::move(out), ps, [ps](Node& self) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer().data;
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad.data[off + i];
      }
      off += len;
    }
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  const std::size_t n = a->value.cols();
  if (start + count > a->value.rows()) throw ShapeMismatch("slice_rows out of range");
  Tensor out = Tensor::matrix(count, n);
  std::copy(a->value.data.begin() + start * n, a->value.data.begin() + (start + count) * n,
            out.data.begin());
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, start, count, n](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t i = 0; i < count * n; ++i) g[start * n + i] += self.grad.data[i];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
  const std::size_t n = a->value.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out = Tensor::matrix(idx.size(), n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a->value.rows()) throw ShapeMismatch("gather_rows index out of range");
    std::copy_n(a->value.data.begin() + idx[r] * n, n, out.data.begin() + r * n);
  }
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, idx, n](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad.data[r * n + j];
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a->value.size()) throw ShapeMismatch("reshape size mismatch");
  Tensor out({rows, cols}, a->value.data);
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a](Node& self) { add_into(*a, self.grad); });
}

Var mean_rows(const Var& a) {
  const std::size_t m = a->value.rows(), n = a->value.cols();
  Tensor out = Tensor::matrix(1, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j] += a->value.data[i * n + j];
  for (double& v : out.data) v /= static_cast<double>(m);
  Var parents[] = {a};
  return graph_of(a)->make(std::move(out), parents, [a, m, n](Node& self) {
    if (!a->requires_grad) return;
    auto& g = a->grad_buffer().data;
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad.data[j] * inv;
  });
}

Var broadcast_rows(const Var& row, std::size_t m) {
  const std::size_t n = row->value.cols();
  if (row->value.rows() != 1) throw ShapeMismatch("broadcast_rows needs a single row");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(row->value.data.begin(), n, out.data.begin() + i * n);
  Var parents[] = {row};
  return graph_of(row)->make(std::move(out), parents, [row, m, n](Node& self) {
    if (!row->requires_grad) return;
    auto& g = row->grad_buffer().data;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.data[i * n + j];
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  Var parents[] = {a};
  return graph_of(a)->make(Tensor::scalar(s), parents, [a](Node& self) {
    if (!a->requires_grad) return;
    const double d = self.grad.data[0];
    for (double& g : a->grad_buffer().data) g += d;
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

Var stop_gradient(const Var& a) { return graph_of(a)->constant(a->value); }

Var mse_loss(const Var& pred, const Tensor& target) {
  require(same_shape(pred->value, target), "mse_loss", pred->value, target);
  const std::size_t len = target.size();
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double d = pred->value.data[i] - target.data[i];
    s += d * d;
  }
  Var parents[] = {pred};
  return graph_of(pred)->make(Tensor::scalar(s / static_cast<double>(len)), parents,
                              [pred, target, len](Node& self) {
                                if (!pred->requires_grad) return;
                                auto& g = pred->grad_buffer().data;
                                const double c = 2.0 * self.grad.data[0] / static_cast<double>(len);
                                for (std::size_t i = 0; i < len; ++i)
                                  g[i] += c * (pred->value.data[i] - target.data[i]);
                              });
}

Var l1_loss(const Var& pred, const Tensor& target) {
  require(same_shape(pred->value, target), "l1_loss", pred->value, target);
  const std::size_t len = target.size();
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) s += std::abs(pred->value.data[i] - target.data[i]);
  Var parents[] = {pred};
  return graph_of(pred)->make(Tensor::scalar(s / static_cast<double>(len)), parents,
                              [pred, target, len](Node& self) {
                                if (!pred->requires_grad) return;
                                auto& g = pred->grad_buffer().data;
                                const double c = self.grad.data[0] / static_cast<double>(len);
                                for (std::size_t i = 0; i < len; ++i) {
                                  const double d = pred->value.data[i] - target.data[i];
                                  g[i] += c * static_cast<double>((d > 0) - (d < 0));
                                }
                              });
}

Var soft_cross_entropy(const Var& logits, const Tensor& target) {
  require(same_shape(logits->value, target), "soft_cross_entropy", logits->value, target);
  const std::size_t m = target.rows(), n = target.cols();
  Tensor probs = Tensor::matrix(m, n);
  kernels::softmax_rows(logits->value.data.data(), probs.data.data(), m, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = logits->value.data.data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) loss -= target.data[i * n + j] * (x[j] - lse);
  }
  Var parents[] = {logits};
  return graph_of(logits)->make(
      Tensor::scalar(loss), parents,
      [logits, target, probs = std::move(probs), m, n](Node& self) {
        if (!logits->requires_grad) return;
        auto& g = logits->grad_buffer().data;
        const double d = self.grad.data[0];
        for (std::size_t i = 0; i < m; ++i) {
          double tsum = 0.0;
          for (std::size_t j = 0; j < n; ++j) tsum += target.data[i * n + j];
          for (std::size_t j = 0; j < n; ++j)
            g[i * n + j] += d * (probs.data[i * n + j] * tsum - target.data[i * n + j]);
        }
      });
}

Var bce_with_logits(const Var& logits, const Tensor& target) {
  require(same_shape(logits->value, target), "bce_with_logits", logits->value, target);
  const std::size_t len = target.size();
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double x = logits->value.data[i];
    s += std::max(x, 0.0) - x * target.data[i] + std::log1p(std::exp(-std::abs(x)));
  }
  Var parents[] = {logits};
  return graph_of(logits)->make(
      Tensor::scalar(s / static_cast<double>(len)), parents, [logits, target, len](Node& self) {
        if (!logits->requires_grad) return;
        auto& g = logits->grad_buffer().data;
        const double c = self.grad.data[0] / static_cast<double>(len);
        for (std::size_t i = 0; i < len; ++i) {
          const double x = logits->value.data[i];
          const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
          g[i] += c * (sig - target.data[i]);
        }
      });
}

}  // namespace deskdrive::nn
