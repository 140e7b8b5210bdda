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
#include <span>
#include <vector>

#include "alenc/core/ops.hpp"
#include "alenc/data/utterance.hpp"
#include "alenc/model/transducer.hpp"

namespace alenc {

inline constexpr Real kLogZero = -std::numeric_limits<Real>::infinity();

inline Real log_add(Real a, Real b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  Real m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// ---------------------------------------------------------------------------
// Label smoothing

enum class PriorMode { uniform, batch_counts };

struct LabelSmoothingSpec {
  double epsilon = 0.1;
  PriorMode prior_mode = PriorMode::uniform;

  void check() const {
    if (!(epsilon >= 0 && epsilon < 1)) throw ConfigError("label smoothing epsilon must lie in [0, 1)");
  }
};

// Label distribution over all target tokens in the batch (including <EOS>),
// with `floor` pseudo-counts per entry so nothing has zero mass.
inline std::vector<Real> batch_prior_estimate(const Batch& batch, std::size_t vocab_size, double floor = 1.0) {
  if (batch.empty()) throw ContractError("batch_prior_estimate: empty batch");
  std::vector<double> counts(vocab_size, floor);
  for (const auto& u : batch.utterances)
    for (int t : u.tokens) counts.at(static_cast<std::size_t>(t)) += 1.0;
  double total = 0;
  for (double c : counts) total += c;
  std::vector<Real> prior(vocab_size);
  for (std::size_t v = 0; v < vocab_size; ++v) prior[v] = static_cast<Real>(counts[v] / total);
  return prior;
}

inline std::vector<Real> uniform_prior(std::size_t vocab_size) {
  return std::vector<Real>(vocab_size, Real(1) / Real(vocab_size));
}

// Target matrix q = (1 - eps) * onehot(y_i) + eps * prior, one row per token.
inline Tensor smoothed_targets(std::span<const int> y, std::size_t vocab_size, double epsilon,
                               std::span<const Real> prior) {
  if (prior.size() != vocab_size) throw DimensionError("smoothing prior has wrong length");
  Tensor q = Tensor::zeros({y.size(), vocab_size});
  auto v = q.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t k = 0; k < vocab_size; ++k) v[i * vocab_size + k] = Real(epsilon) * prior[k];
    v[i * vocab_size + static_cast<std::size_t>(y[i])] += Real(1 - epsilon);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Aligner frame-wise cross-entropy

// Logits for the diagonal pairs (h_i, g_i), i = 1..U only: [U x V].
inline Tensor aligner_logits(const Tensor& h, std::span<const int> y, const PredictionParams& pred,
                             const JointParams& jp) {
  const auto U = y.size();
  if (U == 0) throw ContractError("aligner_loss: empty label");
  if (U > h.rows())
    throw LengthError(detail::concat("label length U=", U, " exceeds encoder frames T'=", h.rows(),
                                     "; the encoder cannot emit fewer frames than tokens"));
  Tensor g = prediction_sequence(pred, y.first(U - 1));  // inputs <SOS>, y_1..y_{U-1}
  return joint(slice_rows(h, 0, U), g, jp);
}

// -sum_i sum_v q_v(y_i) log P(v | h_i, g_i). Frames beyond U never enter the
// graph, so their gradient is exactly zero.
inline Tensor aligner_loss(const Tensor& h, std::span<const int> y, const PredictionParams& pred,
                           const JointParams& jp, const LabelSmoothingSpec& smoothing,
                           std::span<const Real> prior = {}) {
  smoothing.check();
  if (y.empty() || y.back() != kEos) throw ContractError("aligner_loss: label must end with <EOS>");
  const auto V = jp.num_outputs();
  std::vector<Real> uni;
  if (prior.empty()) {
    uni = uniform_prior(V);
    prior = uni;
  }
  Tensor logp = log_softmax_rows(aligner_logits(h, y, pred, jp));
  return scale(dot(logp, smoothed_targets(y, V, smoothing.epsilon, prior)), Real(-1));
}

// Same frame-wise loss with per-frame independent predictions.
inline Tensor nonar_loss(const Tensor& h, std::span<const int> y, const FrameClassifierParams& head,
                         const LabelSmoothingSpec& smoothing, std::span<const Real> prior = {}) {
  smoothing.check();
  const auto U = y.size();
  if (U == 0 || y.back() != kEos) throw ContractError("nonar_loss: label must end with <EOS>");
  if (U > h.rows()) throw LengthError(detail::concat("label length U=", U, " exceeds encoder frames T'=", h.rows()));
  const auto V = head.output.weight.cols();
  std::vector<Real> uni;
  if (prior.empty()) {
    uni = uniform_prior(V);
    prior = uni;
  }
  Tensor logp = log_softmax_rows(frame_logits(slice_rows(h, 0, U), head));
  return scale(dot(logp, smoothed_targets(y, V, smoothing.epsilon, prior)), Real(-1));
}

// ---------------------------------------------------------------------------
// RNN-T lattice

// Forward/backward tables over the (U+1) x T' grid, in log space.
// alpha(u, t): paths from (0,0) reaching node (t,u) before its own emission.
// beta(u, t): paths from node (t,u) through the final blank at (T'-1, U).
struct Lattice {
  std::size_t T = 0, U = 0;
  std::vector<Real> alpha, beta;  // row-major [(U+1) x T]
  Real log_likelihood = 0;        // log P(y | x) from alpha
  Real log_likelihood_beta = 0;   // same quantity from beta(0,0)

  Real a(std::size_t u, std::size_t t) const { return alpha[u * T + t]; }
  Real b(std::size_t u, std::size_t t) const { return beta[u * T + t]; }

  Tensor alpha_tensor() const { return Tensor::from({U + 1, T}, alpha); }
  Tensor beta_tensor() const { return Tensor::from({U + 1, T}, beta); }

  // Node occupancy exp(alpha + beta - logZ), [(U+1) x T].
  Tensor occupancy() const {
    std::vector<Real> v(alpha.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(alpha[i] + beta[i] - log_likelihood);
    return Tensor::from({U + 1, T}, std::move(v));
  }
};

// log_probs is [(T*(U+1)) x (V+1)] with row t*(U+1)+u holding the output
// distribution at lattice node (t, u); `blank` indexes the blank column.
inline Lattice rnnt_lattice(std::span<const Real> log_probs, std::size_t T, std::span<const int> y,
                            std::size_t num_outputs, std::size_t blank) {
  const std::size_t U = y.size();
  if (T == 0) throw LengthError("rnnt: no encoder frames, no valid path");
  if (log_probs.size() != T * (U + 1) * num_outputs) throw DimensionError("rnnt: log-prob table has wrong size");
  auto lp = [&](std::size_t t, std::size_t u, std::size_t k) { return log_probs[(t * (U + 1) + u) * num_outputs + k]; };
  Lattice L;
  L.T = T;
  L.U = U;
  L.alpha.assign((U + 1) * T, kLogZero);
  L.beta.assign((U + 1) * T, kLogZero);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      Real v = (t == 0 && u == 0) ? Real(0) : kLogZero;
      if (t > 0) v = log_add(v, L.alpha[u * T + t - 1] + lp(t - 1, u, blank));
      if (u > 0) v = log_add(v, L.alpha[(u - 1) * T + t] + lp(t, u - 1, static_cast<std::size_t>(y[u - 1])));
      L.alpha[u * T + t] = v;
    }
  L.log_likelihood = L.alpha[U * T + T - 1] + lp(T - 1, U, blank);
  for (std::size_t tt = T; tt-- > 0;)
    for (std::size_t uu = U + 1; uu-- > 0;) {
      Real v = (tt == T - 1 && uu == U) ? lp(tt, uu, blank) : kLogZero;
      if (tt + 1 < T) v = log_add(v, lp(tt, uu, blank) + L.beta[uu * T + tt + 1]);
      if (uu < U) v = log_add(v, lp(tt, uu, static_cast<std::size_t>(y[uu])) + L.beta[(uu + 1) * T + tt]);
      L.beta[uu * T + tt] = v;
    }
  L.log_likelihood_beta = L.beta[0];
  if (!std::isfinite(L.log_likelihood)) throw LengthError("rnnt: lattice has no finite-probability path");
  return L;
}

// -log P(y|x) from a log-prob table, with gradient w.r.t. that table.
inline Tensor rnnt_nll(const Tensor& log_probs, std::size_t T, std::span<const int> y, std::size_t blank) {
  const auto K = log_probs.cols();
  Lattice L = rnnt_lattice(log_probs.values(), T, y, K, blank);
  std::vector<int> yv(y.begin(), y.end());
  return detail::make_result("rnnt_nll", {1}, {-L.log_likelihood}, {&log_probs}, [&] {
    return [pl = log_probs.node(), L = std::move(L), yv = std::move(yv), K, blank](detail::Node& o) {
      Real* g = detail::sink(pl);
      const auto T = L.T, U = L.U;
      const Real go = o.grad[0];
      const Real Z = L.log_likelihood;
      auto lp = [&](std::size_t t, std::size_t u, std::size_t k) { return pl->value[(t * (U + 1) + u) * K + k]; };
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t u = 0; u <= U; ++u) {
          const std::size_t row = (t * (U + 1) + u) * K;
          const Real a = L.alpha[u * T + t];
          Real next_blank = kLogZero;
          if (t + 1 < T) next_blank = L.beta[u * T + t + 1];
          else if (u == U) next_blank = 0;
          if (next_blank != kLogZero) g[row + blank] -= go * std::exp(a + lp(t, u, blank) + next_blank - Z);
          if (u < U) {
            const auto k = static_cast<std::size_t>(yv[u]);
            g[row + k] -= go * std::exp(a + lp(t, u, k) + L.beta[(u + 1) * T + t] - Z);
          }
        }
    };
  });
}

// Full RNN-T loss for encoder frames h and content labels y (no <EOS>, no
// blank). The joint has V+1 outputs with blank last.
inline Tensor rnnt_loss(const Tensor& h, std::span<const int> y, const PredictionParams& pred, const JointParams& jp) {
  const auto blank = jp.num_outputs() - 1;
  for (int t : y)
    if (t < 0 || static_cast<std::size_t>(t) >= blank) throw ContractError("rnnt_loss: label contains blank or OOV id");
  Tensor g = prediction_sequence(pred, y);  // [(U+1) x H]
  Tensor logp = log_softmax_rows(joint_all_pairs(h, g, jp));
  return rnnt_nll(logp, h.rows(), y, blank);
}

// ---------------------------------------------------------------------------
// CTC

// Smallest T that can emit y: one frame per token plus a separating blank
// between each pair of equal neighbours.
inline std::size_t ctc_min_frames(std::span<const int> y) {
  std::size_t n = y.size();
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] == y[i - 1]) ++n;
  return n;
}

// -log sum over frame labelings collapsing to y; log_probs is [T x K] with
// the blank at column `blank`.
inline Tensor ctc_nll(const Tensor& log_probs, std::span<const int> y, std::size_t blank) {
  const auto T = log_probs.rows(), K = log_probs.cols();
  if (ctc_min_frames(y) > T)
    throw LengthError(detail::concat("ctc: label of length ", y.size(), " needs at least ", ctc_min_frames(y),
                                     " frames, got ", T));
  const std::size_t S = 2 * y.size() + 1;
  std::vector<std::size_t> ext(S, blank);
  for (std::size_t i = 0; i < y.size(); ++i) ext[2 * i + 1] = static_cast<std::size_t>(y[i]);
  auto lp = [&](std::size_t t, std::size_t k) { return log_probs[t * K + k]; };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };
  std::vector<Real> alpha(T * S, kLogZero), beta(T * S, kLogZero);
  alpha[0] = lp(0, ext[0]);
  if (S > 1) alpha[1] = lp(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      Real v = alpha[(t - 1) * S + s];
      if (s >= 1) v = log_add(v, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) v = log_add(v, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = v == kLogZero ? kLogZero : v + lp(t, ext[s]);
    }
  beta[(T - 1) * S + S - 1] = lp(T - 1, ext[S - 1]);
  if (S > 1) beta[(T - 1) * S + S - 2] = lp(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      Real v = beta[(t + 1) * S + s];
      if (s + 1 < S) v = log_add(v, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) v = log_add(v, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = v == kLogZero ? kLogZero : v + lp(t, ext[s]);
    }
  Real Z = alpha[(T - 1) * S + S - 1];
  if (S > 1) Z = log_add(Z, alpha[(T - 1) * S + S - 2]);
  if (!std::isfinite(Z)) throw LengthError("ctc: no finite-probability path");
  return detail::make_result("ctc_nll", {1}, {-Z}, {&log_probs}, [&] {
    return [pl = log_probs.node(), alpha = std::move(alpha), beta = std::move(beta), ext = std::move(ext), T, S, K,
            Z](detail::Node& o) {
      Real* g = detail::sink(pl);
      const Real go = o.grad[0];
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < S; ++s) {
          const Real ab = alpha[t * S + s] + beta[t * S + s];
          if (ab == kLogZero || !std::isfinite(ab)) continue;
          g[t * K + ext[s]] -= go * std::exp(ab - pl->value[t * K + ext[s]] - Z);
        }
    };
  });
}

// CTC loss on raw frame logits [T' x (V+1)], blank last.
inline Tensor ctc_loss(const Tensor& frame_logits, std::span<const int> y) {
  const auto blank = frame_logits.cols() - 1;
  for (int t : y)
    if (t < 0 || static_cast<std::size_t>(t) >= blank) throw ContractError("ctc_loss: label contains blank or OOV id");
  return ctc_nll(log_softmax_rows(frame_logits), y, blank);
}

}  // namespace alenc
