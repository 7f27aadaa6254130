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
#include <string>

#include "deskdrive/core/rng.hpp"
#include "deskdrive/nn/graph.hpp"
#include "deskdrive/nn/param_store.hpp"

// Building blocks. A layer is a small value type naming its parameters; the
// values themselves live in a ParamStore so that stores can be frozen,
// checkpointed and copied between models independently of the code.

namespace deskdrive::nn {

enum class Init {
  kScaledUniform,  // U(-a, a) with a = sqrt(3 / fan_in): unit-variance preserving
  kZero,
};

struct Linear {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;

  void init(ParamStore& store, Rng& rng, Init init = Init::kScaledUniform) const;
  Var operator()(Graph& g, ParamStore& store, const Var& x) const;
};

struct LayerNorm {
  std::string name;
  std::size_t width = 0;

  void init(ParamStore& store) const;
  Var operator()(Graph& g, ParamStore& store, const Var& x) const;
};

/// Two linear maps with GELU in between.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);
  void init(ParamStore& store, Rng& rng, Init output_init = Init::kScaledUniform) const;
  Var operator()(Graph& g, ParamStore& store, const Var& x) const;
};

/// Single-head scaled dot-product cross-attention with learned Q/K/V/O
/// projections, post-norm residual, and a 2-layer feed-forward block:
///   h   = LN1(q + O(softmax(QKᵀ/√C)·V))
///   out = LN2(h + FFN(h))
struct AttentionBlock {
  std::string name;
  std::size_t width = 0;
  std::size_t ffn_hidden = 0;

  static AttentionBlock make(const std::string& name, std::size_t width, std::size_t ffn_hidden);
  void init(ParamStore& store, Rng& rng) const;

  /// queries: M×C, context: L×C. When `weights` is non-null the M×L attention
  /// matrix is returned through it.
  Var operator()(Graph& g, ParamStore& store, const Var& queries, const Var& context,
                 Var* weights = nullptr) const;

  /// Projected context, so a shared prefix can be computed once and reused.
  struct KeyValues {
    Var keys;
    Var values;
    static KeyValues concat(const KeyValues& a, const KeyValues& b);
  };
  KeyValues project(Graph& g, ParamStore& store, const Var& context) const;
  Var attend(Graph& g, ParamStore& store, const Var& queries, const KeyValues& kv,
             Var* weights = nullptr) const;

 private:
  Linear q() const { return {name + ".q", width, width}; }
  // no key bias: it shifts every score in a row equally
  Linear k() const { return {name + ".k", width, width, false}; }
  Linear v() const { return {name + ".v", width, width}; }
  Linear o() const { return {name + ".o", width, width}; }
  LayerNorm ln1() const { return {name + ".ln1", width}; }
  LayerNorm ln2() const { return {name + ".ln2", width}; }
  Mlp ffn() const { return Mlp::make(name + ".ffn", width, ffn_hidden, width); }
};

/// Fixed sinusoidal embedding of a scalar position (e.g. a diffusion step).
Tensor sinusoidal_embedding(double position, std::size_t width);

}  // namespace deskdrive::nn
