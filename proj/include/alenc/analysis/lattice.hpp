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
#include <span>
#include <vector>

#include "alenc/analysis/alignment.hpp"
#include "alenc/model/model.hpp"

namespace alenc {

struct LatticePosterior {
  Tensor posterior;  // [(U+1) x T'] node occupancy
  Tensor emission;   // [U x T'] probability that token u is emitted at frame t (absent when U = 0)
  double temperature = 1.0;
  Lattice lattice;
};

// Forward-backward over a joint-logit table [(T'*(U+1)) x K] (row t*(U+1)+u)
// after dividing the logits by `temperature`.
inline LatticePosterior lattice_posterior_from_logits(std::span<const Real> logits, std::size_t T,
                                                      std::span<const int> y, std::size_t K, std::size_t blank,
                                                      double temperature = 1.0) {
  if (!(temperature > 0) || !std::isfinite(temperature))
    throw ContractError(detail::concat("lattice_posterior: temperature must be a positive number, got ", temperature));
  const std::size_t U = y.size();
  if (logits.size() != T * (U + 1) * K) throw DimensionError("lattice_posterior: logit table has wrong size");
  std::vector<Real> lp(logits.size());
  for (std::size_t r = 0; r < T * (U + 1); ++r) {
    Real m = logits[r * K];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, logits[r * K + k]);
    m /= static_cast<Real>(temperature);
    Real s = 0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(logits[r * K + k] / static_cast<Real>(temperature) - m);
    const Real lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) lp[r * K + k] = logits[r * K + k] / static_cast<Real>(temperature) - lse;
  }
  LatticePosterior out;
  out.temperature = temperature;
  out.lattice = rnnt_lattice(lp, T, y, K, blank);
  out.posterior = out.lattice.occupancy();
  if (U > 0) {
    std::vector<Real> em(U * T);
    const Real Z = out.lattice.log_likelihood;
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t t = 0; t < T; ++t)
        em[u * T + t] = std::exp(out.lattice.a(u, t) + lp[(t * (U + 1) + u) * K + static_cast<std::size_t>(y[u])] +
                                 out.lattice.b(u + 1, t) - Z);
    out.emission = Tensor::from({U, T}, std::move(em));
  }
  return out;
}

// Posterior of an RNN-T model on encoder output h for content labels y.
inline LatticePosterior lattice_posterior(const Tensor& h, std::span<const int> y, const Model& model,
                                          double temperature = 1.0) {
  if (model.config.kind != ModelKind::rnnt) throw ContractError("lattice_posterior needs an rnnt model");
  NoGradScope ng;
  Tensor g = prediction_sequence(model.prediction, y);
  Tensor logits = joint_all_pairs(h, g, model.joint);
  return lattice_posterior_from_logits(logits.values(), h.rows(), y, logits.cols(), model.config.blank(), temperature);
}

// Most likely emission frame per token.
inline std::vector<std::size_t> emission_peaks(const Tensor& emission) {
  std::vector<std::size_t> peaks;
  if (!emission.defined()) return peaks;
  const auto U = emission.rows(), T = emission.cols();
  for (std::size_t u = 0; u < U; ++u) peaks.push_back(argmax(emission.values().subspan(u * T, T)));
  return peaks;
}

struct FrontAlignment {
  double fraction = 0;      // tokens u emitted within tolerance of frame u
  std::size_t prefix = 0;   // longest run of such tokens from the start
  std::size_t tokens = 0;
};

// "Front" alignment: token u emitted at frame u, i.e. the encoder has
// already moved each label to its own leading frame.
inline FrontAlignment front_alignment(const Tensor& emission, std::size_t tolerance = 1) {
  FrontAlignment f;
  auto peaks = emission_peaks(emission);
  f.tokens = peaks.size();
  if (peaks.empty()) return f;
  std::size_t hits = 0;
  bool run = true;
  for (std::size_t u = 0; u < peaks.size(); ++u) {
    const bool ok = (peaks[u] > u ? peaks[u] - u : u - peaks[u]) <= tolerance;
    hits += ok;
    run = run && ok;
    if (run) f.prefix = u + 1;
  }
  f.fraction = double(hits) / double(peaks.size());
  return f;
}

// Fraction of tokens emitted within `tolerance` frames of their true center.
inline double diagonal_alignment(const Tensor& emission, const std::vector<Boundary>& truth,
                                 std::size_t subsample_factor, double tolerance = 2.0) {
  auto peaks = emission_peaks(emission);
  if (peaks.size() != truth.size()) throw ContractError("diagonal_alignment: emission rows and truth differ in length");
  if (peaks.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t u = 0; u < peaks.size(); ++u)
    hits += std::abs(double(peaks[u]) - double(token_center(truth[u], subsample_factor))) <= tolerance;
  return double(hits) / double(peaks.size());
}

}  // namespace alenc
