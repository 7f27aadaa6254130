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

#include "deskdrive/nn/layers.hpp"

#include <cmath>

namespace deskdrive::nn {

void Linear::init(ParamStore& store, Rng& rng, Init init) const {
  Tensor w = Tensor::matrix(in, out);
  if (init == Init::kScaledUniform) {
    const double a = std::sqrt(3.0 / static_cast<double>(in));
    for (double& v : w.data) v = rng.uniform(-a, a);
  }
  store.add(name + ".w", std::move(w));
  if (bias) store.add(name + ".b", Tensor::matrix(1, out));
}

Var Linear::operator()(Graph& g, ParamStore& store, const Var& x) const {
  Var y = matmul(x, g.param(store, name + ".w"));
  return bias ? add_row(y, g.param(store, name + ".b")) : y;
}

void LayerNorm::init(ParamStore& store) const {
  store.add(name + ".g", Tensor::matrix(1, width, 1.0));
  store.add(name + ".b", Tensor::matrix(1, width));
}

Var LayerNorm::operator()(Graph& g, ParamStore& store, const Var& x) const {
  return layer_norm(x, g.param(store, name + ".g"), g.param(store, name + ".b"));
}

Mlp Mlp::make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
  return Mlp{Linear{name + ".l1", in, hidden}, Linear{name + ".l2", hidden, out}};
}

void Mlp::init(ParamStore& store, Rng& rng, Init output_init) const {
  first.init(store, rng);
  second.init(store, rng, output_init);
}

Var Mlp::operator()(Graph& g, ParamStore& store, const Var& x) const {
  return second(g, store, gelu(first(g, store, x)));
}

AttentionBlock AttentionBlock::make(const std::string& name, std::size_t width,
                                    std::size_t ffn_hidden) {
  return AttentionBlock{name, width, ffn_hidden};
}

void AttentionBlock::init(ParamStore& store, Rng& rng) const {
  q().init(store, rng);
  k().init(store, rng);
  v().init(store, rng);
  o().init(store, rng);
  ln1().init(store);
  ffn().init(store, rng);
  ln2().init(store);
}

AttentionBlock::KeyValues AttentionBlock::project(Graph& g, ParamStore& store, const Var& context) const {
  return {k()(g, store, context), v()(g, store, context)};
}

AttentionBlock::KeyValues AttentionBlock::KeyValues::concat(const KeyValues& a, const KeyValues& b) {
  const Var ks[] = {a.keys, b.keys};
  const Var vs[] = {a.values, b.values};
  return {concat_rows(ks), concat_rows(vs)};
}

Var AttentionBlock::operator()(Graph& g, ParamStore& store, const Var& queries,
                               const Var& context, Var* weights) const {
  return attend(g, store, queries, project(g, store, context), weights);
}

Var AttentionBlock::attend(Graph& g, ParamStore& store, const Var& queries, const KeyValues& kv,
                           Var* weights) const {
  const Var qp = q()(g, store, queries);
  const Var& kp = kv.keys;
  const Var& vp = kv.values;
  const Var scores = scale(matmul_nt(qp, kp), 1.0 / std::sqrt(static_cast<double>(width)));
  const Var attn = softmax_rows(scores);
  if (weights) *weights = attn;
  const Var pooled = o()(g, store, matmul(attn, vp));
  const Var h = ln1()(g, store, add(queries, pooled));
  return ln2()(g, store, add(h, ffn()(g, store, h)));
}

Tensor sinusoidal_embedding(double position, std::size_t width) {
  Tensor out = Tensor::matrix(1, width);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out.data[i] = std::sin(position * freq);
    out.data[half + i] = std::cos(position * freq);
  }
  return out;
}

}  // namespace deskdrive::nn
