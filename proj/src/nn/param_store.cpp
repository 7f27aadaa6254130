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

#include "deskdrive/nn/param_store.hpp"

#include "deskdrive/core/error.hpp"

namespace deskdrive::nn {

ParamStore::ParamStore(const ParamStore& other)
    : index_(other.index_), step_(other.step_), frozen_(other.frozen_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.shape, 0.0);
  p->first_moment = Tensor(init.shape, 0.0);
  p->second_moment = Tensor(init.shape, 0.0);
  p->value = std::move(init);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamStore::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter " + std::string(name));
  return *params_[it->second];
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter " + std::string(name));
  return *params_[it->second];
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParamStore::copy_from(const ParamStore& src, std::string_view prefix) {
  for (std::size_t i = 0; i < src.count(); ++i) {
    const Parameter& sp = src[i];
    if (sp.name.compare(0, prefix.size(), prefix) != 0) continue;
    if (contains(sp.name)) {
      Parameter& dp = at(sp.name);
      if (dp.value.shape != sp.value.shape) {
        throw ShapeMismatch("copy_from: " + sp.name + " " + dp.value.shape_string() + " vs " +
                            sp.value.shape_string());
      }
      dp.value = sp.value;
    } else {
      add(sp.name, sp.value);
    }
  }
}

}  // namespace deskdrive::nn
