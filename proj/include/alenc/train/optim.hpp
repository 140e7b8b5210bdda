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
#include <vector>

#include "alenc/model/params.hpp"

namespace alenc {

// Linear warmup, then inverse square-root decay; both branches meet at the
// peak when step == warmup.
inline double lr_schedule(long step, double peak, long warmup) {
  if (warmup < 1) throw ConfigError("warmup_steps must be >= 1");
  if (step <= 0) return 0.0;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

struct AdamMoments {
  std::vector<std::vector<Real>> m, v;
  long t = 0;

  void init(const ParameterSet& params) {
    m.clear();
    v.clear();
    for (const auto& p : params.items()) {
      m.emplace_back(p.tensor.size(), Real(0));
      v.emplace_back(p.tensor.size(), Real(0));
    }
    t = 0;
  }
};

// Bias-corrected Adam on the gradients currently held by `params`.
inline void adam_step(ParameterSet& params, AdamMoments& mom, double lr, double beta1, double beta2,
                      double eps = 1e-9) {
  if (mom.m.size() != params.size()) mom.init(params);
  ++mom.t;
  const double c1 = 1.0 - std::pow(beta1, double(mom.t));
  const double c2 = 1.0 - std::pow(beta2, double(mom.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params.items()[k].tensor;
    if (mom.m[k].size() != p.size()) throw DimensionError("adam moments do not match parameter " + params.items()[k].name);
    auto val = p.mutable_values();
    auto g = p.grad();
    auto& m = mom.m[k];
    auto& v = mom.v[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = static_cast<Real>(beta1 * m[i] + (1 - beta1) * g[i]);
      v[i] = static_cast<Real>(beta2 * v[i] + (1 - beta2) * double(g[i]) * g[i]);
      const double mh = m[i] / c1, vh = v[i] / c2;
      val[i] = static_cast<Real>(val[i] - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

inline double grad_norm(const ParameterSet& params) {
  double s = 0;
  for (const auto& p : params.items())
    for (Real g : p.tensor.grad()) s += double(g) * g;
  return std::sqrt(s);
}

// Rescales all gradients when their global L2 norm exceeds max_norm.
// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("max_norm must be > 0");
  const double n = grad_norm(params);
  if (n > max_norm) {
    const double s = max_norm / n;
    for (auto& p : params.items())
      for (auto& g : p.tensor.mutable_grad()) g = static_cast<Real>(g * s);
  }
  return n;
}

}  // namespace alenc
