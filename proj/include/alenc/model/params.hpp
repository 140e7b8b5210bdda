// Copyright 2026 The alenc Authors.
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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "alenc/core/random.hpp"
#include "alenc/core/tensor.hpp"

namespace alenc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered, named view over parameter tensors. Handles share storage with
// the owning modules, so optimizer updates through this view are visible
// to the model.
class ParameterSet {
 public:
  void add(std::string name, Tensor t) { items_.push_back({std::move(name), std::move(t)}); }
  void append(const ParameterSet& other) { items_.insert(items_.end(), other.items_.begin(), other.items_.end()); }

  const std::vector<NamedTensor>& items() const { return items_; }
  std::vector<NamedTensor>& items() { return items_; }
  std::size_t size() const { return items_.size(); }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& it : items_) out.push_back(it.tensor);
    return out;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& it : items_)
      if (it.name == name) return &it.tensor;
    return nullptr;
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& it : items_) n += it.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& it : items_) it.tensor.zero_grad();
  }

  void set_requires_grad(bool on) {
    for (auto& it : items_) it.tensor.set_requires_grad(on);
  }

  // Copies values from another set with identical names and shapes.
  void copy_values_from(const ParameterSet& other) {
    for (auto& it : items_) {
      const Tensor* src = other.find(it.name);
      if (!src) throw ConfigError("parameter " + it.name + " missing from source");
      if (src->shape() != it.tensor.shape()) throw DimensionError("parameter " + it.name + " shape differs");
      std::copy(src->values().begin(), src->values().end(), it.tensor.mutable_values().begin());
    }
  }

  // FNV-1a over names and raw value bytes; used to prove parameters were
  // left untouched.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
      auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
    };
    for (const auto& it : items_) {
      mix(it.name.data(), it.name.size());
      mix(it.tensor.values().data(), it.tensor.size() * sizeof(Real));
    }
    return h;
  }

 private:
  std::vector<NamedTensor> items_;
};

inline Tensor init_weight(std::size_t in, std::size_t out, Rng& rng) {
  return random_normal({in, out}, rng, 1.0 / std::sqrt(double(in)), true);
}

inline Tensor init_zeros(Shape s) { return Tensor::zeros(std::move(s), true); }

inline Tensor init_ones(Shape s) {
  Tensor t = Tensor::zeros(std::move(s), true);
  for (auto& v : t.mutable_values()) v = Real(1);
  return t;
}

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams make(std::size_t d) { return {init_ones({d}), init_zeros({d})}; }
  void collect(ParameterSet& ps, const std::string& p) const {
    ps.add(p + ".gain", gain);
    ps.add(p + ".bias", bias);
  }
};

struct LinearParams {
  Tensor weight, bias;

  static LinearParams make(std::size_t in, std::size_t out, Rng& rng) {
    return {init_weight(in, out, rng), init_zeros({out})};
  }
  void collect(ParameterSet& ps, const std::string& p) const {
    ps.add(p + ".weight", weight);
    ps.add(p + ".bias", bias);
  }
};

}  // namespace alenc
