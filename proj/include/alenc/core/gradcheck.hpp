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
#include <limits>
#include <vector>

#include "alenc/core/tensor.hpp"

namespace alenc {

// Largest |analytic - central| / (|analytic| + |central| + 1e-8) over the
// checked coordinates. Returns +inf if any evaluation is not finite.
inline double relative_grad_error(double analytic, double central) {
  return std::abs(analytic - central) / (std::abs(analytic) + std::abs(central) + 1e-8);
}

// Compares the tape gradient of a scalar function of `x` against central
// differences with step h. `f` maps a Tensor to a scalar Tensor using
// library ops; it is called once under a recording graph and 2*size(x) times
// without one.
template <typename F>
double finite_diff_check(F&& f, const Tensor& x, double h = 1e-5) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ContractError("finite_diff_check: h must lie in [1e-6, 1e-3]");
  Tensor leaf = x.clone(true);
  std::vector<Real> analytic;
  {
    Graph g;
    GradScope scope(g);
    Tensor loss = f(leaf);
    if (!std::isfinite(loss.item())) return std::numeric_limits<double>::infinity();
    g.backward(loss);
    analytic.assign(leaf.grad().begin(), leaf.grad().end());
  }
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor probe = x.clone(false);
    const Real orig = probe[i];
    probe.mutable_values()[i] = orig + Real(h);
    const double fp = f(probe).item();
    probe.mutable_values()[i] = orig - Real(h);
    const double fm = f(probe).item();
    if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, relative_grad_error(analytic[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

// Same check over a set of parameter tensors that `loss_fn()` closes over.
// Parameters are perturbed in place and restored. `stride` > 1 checks every
// stride-th coordinate of each tensor, which keeps full-model checks cheap.
template <typename F>
double finite_diff_check_params(F&& loss_fn, std::vector<Tensor> params, double h = 1e-5,
                                std::size_t stride = 1) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ContractError("finite_diff_check: h must lie in [1e-6, 1e-3]");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Graph g;
    GradScope scope(g);
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) return std::numeric_limits<double>::infinity();
    g.backward(loss);
  }
  double worst = 0;
  for (auto& p : params) {
    std::vector<Real> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.size(); i += stride) {
      const Real orig = p[i];
      p.mutable_values()[i] = orig + Real(h);
      const double fp = loss_fn().item();
      p.mutable_values()[i] = orig - Real(h);
      const double fm = loss_fn().item();
      p.mutable_values()[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, relative_grad_error(analytic[i], (fp - fm) / (2 * h)));
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace alenc
