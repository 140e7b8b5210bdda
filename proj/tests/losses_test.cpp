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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "alenc/core/gradcheck.hpp"
#include "alenc/model/losses.hpp"

namespace alenc {
namespace {

Tensor random_log_probs(std::size_t rows, std::size_t cols, Rng& rng, double scale = 2.0) {
  return log_softmax_rows(random_normal({rows, cols}, rng, scale));
}

// Sum over every ordering of U label emissions and T blanks whose last step is
// a blank, walking the (t, u) grid directly.
double rnnt_enumerate(const Tensor& lp, std::size_t T, const std::vector<int>& y, std::size_t blank) {
  const std::size_t U = y.size(), K = lp.cols();
  const std::size_t steps = T + U - 1;
  double total = 0;
  for (std::uint32_t mask = 0; mask < (1u << steps); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != U) continue;
    std::size_t t = 0, u = 0;
    double logp = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto row = (t * (U + 1) + u) * K;
      if (mask >> s & 1u) {
        logp += lp[row + static_cast<std::size_t>(y[u])];
        ++u;
      } else {
        logp += lp[row + blank];
        ++t;
      }
    }
    if (t != T - 1 || u != U) continue;
    logp += lp[(t * (U + 1) + u) * K + blank];
    total += std::exp(logp);
  }
  return -std::log(total);
}

std::vector<int> ctc_collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != blank && k != prev) out.push_back(k);
    prev = k;
  }
  return out;
}

// Exhaustive sum over all K^T frame labelings.
double ctc_enumerate(const Tensor& lp, const std::vector<int>& y, std::size_t blank) {
  const std::size_t T = lp.rows(), K = lp.cols();
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) n *= K;
  double total = 0;
  std::vector<int> path(T);
  for (std::size_t code = 0; code < n; ++code) {
    std::size_t c = code;
    double logp = 0;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(c % K);
      c /= K;
      logp += lp[t * K + static_cast<std::size_t>(path[t])];
    }
    if (ctc_collapse(path, static_cast<int>(blank)) == y) total += std::exp(logp);
  }
  return total > 0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

std::vector<int> random_label(std::size_t U, std::size_t V, Rng& rng) {
  std::vector<int> y(U);
  for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(V) - 1));
  return y;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

// ---------------------------------------------------------------------------
// RNN-T

TEST(Rnnt, SingleFrameNoLabels) {
  Tensor lp = Tensor::matrix({{std::log(0.2), std::log(0.8)}});
  EXPECT_NEAR(rnnt_nll(lp, 1, std::vector<int>{}, 1).item(), -std::log(0.8), 1e-12);
}

TEST(Rnnt, SingleFrameOneLabel) {
  // Rows: node (t=0, u=0) then (t=0, u=1); columns: token 0, blank.
  Tensor lp = Tensor::matrix({{std::log(0.3), std::log(0.7)}, {std::log(0.6), std::log(0.4)}});
  EXPECT_NEAR(rnnt_nll(lp, 1, std::vector<int>{0}, 1).item(), -std::log(0.3 * 0.4), 1e-12);
}

TEST(Rnnt, TwoFramesOneLabelMatchesBothPaths) {
  Rng rng(1);
  Tensor lp = random_log_probs(4, 3, rng);
  const std::vector<int> y{1};
  auto p = [&](std::size_t t, std::size_t u, std::size_t k) { return std::exp(lp[(t * 2 + u) * 3 + k]); };
  const double ref = -std::log(p(0, 0, 1) * p(0, 1, 2) * p(1, 1, 2) + p(0, 0, 2) * p(1, 0, 1) * p(1, 1, 2));
  EXPECT_LE(rel_err(rnnt_nll(lp, 2, y, 2).item(), ref), 1e-9);
}

TEST(Rnnt, MatchesPathEnumeration) {
  Rng rng(2);
  int cases = 0;
  for (std::size_t T = 1; T <= 4; ++T)
    for (std::size_t U = 0; U <= 3; ++U)
      for (std::size_t V = 1; V <= 3; ++V)
        for (int draw = 0; draw < 100; ++draw) {
          const auto y = random_label(U, V, rng);
          Tensor lp = random_log_probs(T * (U + 1), V + 1, rng);
          const double ref = rnnt_enumerate(lp, T, y, V);
          Lattice L = rnnt_lattice(lp.values(), T, y, V + 1, V);
          ASSERT_LE(rel_err(-L.log_likelihood, ref), 1e-6) << T << ' ' << U << ' ' << V;
          ASSERT_LE(std::abs(L.log_likelihood - L.log_likelihood_beta), 1e-6);
          ++cases;
        }
  EXPECT_EQ(cases, 4 * 4 * 3 * 100);
}

TEST(Rnnt, OccupancySumsToOneOnEveryAntiDiagonal) {
  // Every path crosses each anti-diagonal t + u = k exactly once.
  Rng rng(3);
  const std::size_t T = 5;
  const std::vector<int> y{0, 2, 1};
  Tensor lp = random_log_probs(T * 4, 4, rng);
  Tensor occ = rnnt_lattice(lp.values(), T, y, 4, 3).occupancy();
  for (std::size_t k = 0; k < T + y.size(); ++k) {
    double s = 0;
    for (std::size_t u = 0; u <= y.size(); ++u)
      if (k >= u && k - u < T) s += occ.at(u, k - u);
    EXPECT_NEAR(s, 1.0, 1e-9) << k;
  }
}

TEST(Rnnt, LogSpaceSurvivesLongLattices) {
  Rng rng(4);
  const std::size_t T = 400;
  const auto y = random_label(120, 5, rng);
  Tensor lp = random_log_probs(T * 121, 6, rng, 4.0);
  Lattice L = rnnt_lattice(lp.values(), T, y, 6, 5);
  EXPECT_TRUE(std::isfinite(L.log_likelihood));
  EXPECT_LE(std::abs(L.log_likelihood - L.log_likelihood_beta), 1e-6 * std::abs(L.log_likelihood));
}

TEST(Rnnt, TableGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const std::vector<int> y{0, 1};
  Tensor raw = random_normal({3 * 3, 3}, rng);
  auto f = [&](const Tensor& x) { return rnnt_nll(log_softmax_rows(x), 3, y, 2); };
  EXPECT_LE(finite_diff_check(f, raw), 1e-4);
}

struct Micro {
  std::size_t V, d = 5, E = 4, H = 6, J = 7;
  PredictionParams pred;
  JointParams joint;

  Micro(std::size_t vocab, std::size_t outputs, std::uint64_t seed) : V(vocab) {
    Rng rng(seed);
    pred = PredictionParams::make(V, E, H, rng);
    joint = JointParams::make(d, H, J, outputs, rng);
    // Nonzero output bias so the bias path is exercised.
    for (auto& b : joint.output.bias.mutable_values()) b = Real(rng.normal(0, 0.3));
  }

  std::vector<Tensor> params() const {
    return {pred.embedding, pred.input_weight, pred.hidden_weight, pred.bias,
            joint.enc_weight, joint.pred_weight, joint.output.weight, joint.output.bias};
  }
};

TEST(Rnnt, ModelGradientMatchesFiniteDifferences) {
  Micro m(4, 5, 6);
  Rng rng(7);
  Tensor h = random_normal({3, m.d}, rng);
  const std::vector<int> y{2, 3};
  EXPECT_LE(finite_diff_check_params([&] { return rnnt_loss(h, y, m.pred, m.joint); }, m.params()), 1e-4);
  EXPECT_LE(finite_diff_check([&](const Tensor& x) { return rnnt_loss(x, y, m.pred, m.joint); }, h), 1e-4);
}

TEST(Rnnt, RejectsBlankInLabelAndEmptyInput) {
  Micro m(4, 5, 8);
  Rng rng(9);
  Tensor h = random_normal({3, m.d}, rng);
  EXPECT_THROW(rnnt_loss(h, std::vector<int>{4}, m.pred, m.joint), ContractError);
  Tensor lp = random_log_probs(2, 3, rng);
  EXPECT_THROW(rnnt_nll(lp, 0, std::vector<int>{0}, 2), LengthError);
}

TEST(Rnnt, ImpossibleLatticeIsAnError) {
  // Blank has zero probability everywhere: no path can terminate.
  const Real z = -std::numeric_limits<Real>::infinity();
  Tensor lp = Tensor::matrix({{0, z}, {0, z}});
  EXPECT_THROW(rnnt_nll(lp, 1, std::vector<int>{0}, 1), LengthError);
}

// ---------------------------------------------------------------------------
// CTC

TEST(Ctc, SingleFrame) {
  Tensor lp = Tensor::matrix({{std::log(0.25), std::log(0.5), std::log(0.25)}});
  EXPECT_NEAR(ctc_nll(lp, std::vector<int>{1}, 2).item(), -std::log(0.5), 1e-12);
}

TEST(Ctc, TwoFramesOneLabel) {
  Rng rng(10);
  Tensor lp = random_log_probs(2, 3, rng);
  auto p = [&](std::size_t t, std::size_t k) { return std::exp(lp[t * 3 + k]); };
  const double ref = -std::log(p(0, 0) * p(1, 0) + p(0, 0) * p(1, 2) + p(0, 2) * p(1, 0));
  EXPECT_LE(rel_err(ctc_nll(lp, std::vector<int>{0}, 2).item(), ref), 1e-9);
}

TEST(Ctc, RepeatedTokenNeedsSeparatingBlank) {
  Rng rng(11);
  EXPECT_EQ(ctc_min_frames(std::vector<int>{0, 0}), 3u);
  EXPECT_EQ(ctc_min_frames(std::vector<int>{0, 1, 1, 1}), 6u);
  EXPECT_THROW(ctc_nll(random_log_probs(2, 3, rng), std::vector<int>{0, 0}, 2), LengthError);
  EXPECT_NO_THROW(ctc_nll(random_log_probs(3, 3, rng), std::vector<int>{0, 0}, 2));
}

TEST(Ctc, MatchesPathEnumeration) {
  Rng rng(12);
  for (std::size_t T = 1; T <= 4; ++T)
    for (std::size_t U = 0; U <= 3; ++U)
      for (std::size_t V = 1; V <= 3; ++V)
        for (int draw = 0; draw < 100; ++draw) {
          const auto y = random_label(U, V, rng);
          if (ctc_min_frames(y) > T) continue;
          Tensor lp = random_log_probs(T, V + 1, rng);
          ASSERT_LE(rel_err(ctc_nll(lp, y, V).item(), ctc_enumerate(lp, y, V)), 1e-6) << T << ' ' << U;
        }
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  Tensor x = random_normal({5, 4}, rng);
  for (const std::vector<int>& y : {std::vector<int>{0, 2}, std::vector<int>{1, 1}, std::vector<int>{}}) {
    EXPECT_LE(finite_diff_check([&](const Tensor& t) { return ctc_loss(t, y); }, x), 1e-4);
  }
}

TEST(Ctc, RejectsBlankInLabel) {
  Rng rng(14);
  EXPECT_THROW(ctc_loss(random_normal({3, 3}, rng), std::vector<int>{2}), ContractError);
}

// ---------------------------------------------------------------------------
// Aligner and non-AR heads

TEST(Aligner, UniformLogitsGiveLogV) {
  Rng rng(15);
  auto pred = PredictionParams::make(2, 3, 4, rng);
  auto jp = JointParams::make(5, 4, 6, 2, rng);
  std::fill(jp.output.weight.mutable_values().begin(), jp.output.weight.mutable_values().end(), Real(0));
  std::fill(jp.output.bias.mutable_values().begin(), jp.output.bias.mutable_values().end(), Real(0));
  Tensor h = random_normal({3, 5}, rng);
  LabelSmoothingSpec none{0.0};
  EXPECT_NEAR(aligner_loss(h, std::vector<int>{kEos}, pred, jp, none).item(), std::log(2.0), 1e-12);
}

TEST(Aligner, ConfidentCorrectPredictionApproachesZero) {
  Rng rng(16);
  auto pred = PredictionParams::make(3, 3, 4, rng);
  auto jp = JointParams::make(5, 4, 6, 3, rng);
  std::fill(jp.output.weight.mutable_values().begin(), jp.output.weight.mutable_values().end(), Real(0));
  auto b = jp.output.bias.mutable_values();
  b[0] = b[2] = Real(-40);
  b[kEos] = Real(40);
  Tensor h = random_normal({2, 5}, rng);
  EXPECT_LT(aligner_loss(h, std::vector<int>{kEos}, pred, jp, LabelSmoothingSpec{0.0}).item(), 1e-30);
}

// Per-frame smoothed cross-entropy computed by hand from the logits.
double smoothed_ce_oracle(const Tensor& logits, const std::vector<int>& y, double eps, const std::vector<Real>& prior) {
  double total = 0;
  const auto V = logits.cols();
  for (std::size_t i = 0; i < y.size(); ++i) {
    double m = -1e300;
    for (std::size_t k = 0; k < V; ++k) m = std::max(m, double(logits.at(i, k)));
    double z = 0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(logits.at(i, k) - m);
    for (std::size_t k = 0; k < V; ++k) {
      const double q = (1 - eps) * (int(k) == y[i]) + eps * prior[k];
      total -= q * (logits.at(i, k) - m - std::log(z));
    }
  }
  return total;
}

TEST(Aligner, MatchesSmoothedCrossEntropyOracle) {
  Micro m(3, 3, 17);
  Rng rng(18);
  Tensor h = random_normal({4, m.d}, rng);
  const std::vector<int> y{2, kEos};
  Tensor logits = aligner_logits(h, y, m.pred, m.joint);
  ASSERT_EQ(logits.rows(), 2u);
  const auto uni = uniform_prior(3);
  EXPECT_NEAR(aligner_loss(h, y, m.pred, m.joint, LabelSmoothingSpec{0.1}).item(),
              smoothed_ce_oracle(logits, y, 0.1, uni), 1e-9);
  EXPECT_NEAR(aligner_loss(h, y, m.pred, m.joint, LabelSmoothingSpec{0.0}).item(),
              smoothed_ce_oracle(logits, y, 0.0, uni), 1e-12);
  const std::vector<Real> skew{0.1, 0.2, 0.7};
  EXPECT_NEAR(aligner_loss(h, y, m.pred, m.joint, LabelSmoothingSpec{0.3, PriorMode::batch_counts}, skew).item(),
              smoothed_ce_oracle(logits, y, 0.3, skew), 1e-9);
}

TEST(Aligner, LogitsUseDiagonalPairsOnly) {
  Micro m(5, 5, 19);
  Rng rng(20);
  Tensor h = random_normal({6, m.d}, rng);
  const std::vector<int> y{3, 4, 2, kEos};
  Tensor logits = aligner_logits(h, y, m.pred, m.joint);
  EXPECT_EQ(logits.rows(), y.size());
  // Row i comes from frame i and the prediction state after y_1..y_{i-1}.
  PredictionState s = prediction_start(m.pred);
  for (std::size_t i = 0; i < y.size(); ++i) {
    Tensor one = joint(slice_rows(h, i, i + 1), s.hidden, m.joint);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(one[k], logits.at(i, k), 1e-12);
    s = prediction_step(m.pred, s, y[i]);
  }
}

TEST(Aligner, FramesBeyondLabelGetExactlyZeroGradient) {
  Micro m(5, 5, 21);
  Rng rng(22);
  const std::size_t T = 9;
  const std::vector<int> y{3, 2, kEos};
  Tensor h = random_normal({T, m.d}, rng, 1.0, true);
  Graph g;
  GradScope scope(g);
  g.backward(aligner_loss(h, y, m.pred, m.joint, LabelSmoothingSpec{0.1}));
  double beyond = 0, within = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < m.d; ++j) {
      double& worst = t < y.size() ? within : beyond;
      worst = std::max(worst, std::abs(double(h.grad()[t * m.d + j])));
    }
  EXPECT_LE(beyond, 1e-12);
  EXPECT_GT(within, 0);
}

TEST(Aligner, LossIgnoresContentOfTrailingFrames) {
  Micro m(5, 5, 23);
  Rng rng(24);
  Tensor h = random_normal({7, m.d}, rng);
  Tensor h2 = h.clone();
  for (std::size_t i = 3 * m.d; i < h2.size(); ++i) h2.mutable_values()[i] = Real(rng.normal(0, 5));
  const std::vector<int> y{4, 4, kEos};
  EXPECT_EQ(aligner_loss(h, y, m.pred, m.joint, {}).item(), aligner_loss(h2, y, m.pred, m.joint, {}).item());
}

TEST(Aligner, LabelLongerThanFramesNamesBothLengths) {
  Micro m(5, 5, 25);
  Rng rng(26);
  Tensor h = random_normal({2, m.d}, rng);
  try {
    aligner_loss(h, std::vector<int>{2, 3, kEos}, m.pred, m.joint, {});
    FAIL() << "expected LengthError";
  } catch (const LengthError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("U=3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("T'=2"), std::string::npos) << msg;
  }
}

TEST(Aligner, RequiresTrailingEosAndValidEpsilon) {
  Micro m(5, 5, 27);
  Rng rng(28);
  Tensor h = random_normal({4, m.d}, rng);
  EXPECT_THROW(aligner_loss(h, std::vector<int>{2, 3}, m.pred, m.joint, {}), ContractError);
  EXPECT_THROW(aligner_loss(h, std::vector<int>{kEos}, m.pred, m.joint, LabelSmoothingSpec{1.0}), ConfigError);
}

TEST(Aligner, GradientMatchesFiniteDifferences) {
  Micro m(4, 4, 29);
  Rng rng(30);
  Tensor h = random_normal({4, m.d}, rng);
  const std::vector<int> y{2, 3, kEos};
  LabelSmoothingSpec ls{0.1};
  EXPECT_LE(finite_diff_check_params([&] { return aligner_loss(h, y, m.pred, m.joint, ls); }, m.params()), 1e-3);
}

TEST(NonAr, IdenticalFramesGiveIdenticalLogits) {
  Rng rng(31);
  auto head = FrameClassifierParams::make(5, 6, 4, rng);
  Tensor row = random_normal({1, 5}, rng);
  Tensor logits = frame_logits(concat_rows({row, row, row}), head);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(logits.at(0, k), logits.at(1, k));
    EXPECT_EQ(logits.at(0, k), logits.at(2, k));
  }
}

TEST(NonAr, EqualsAlignerWithPredictionPathRemoved) {
  Micro m(4, 4, 32);
  std::fill(m.joint.pred_weight.mutable_values().begin(), m.joint.pred_weight.mutable_values().end(), Real(0));
  FrameClassifierParams head{m.joint.enc_weight, m.joint.output};
  Rng rng(33);
  Tensor h = random_normal({5, m.d}, rng);
  const std::vector<int> y{3, 2, 2, kEos};
  LabelSmoothingSpec ls{0.1};
  EXPECT_NEAR(nonar_loss(h, y, head, ls).item(), aligner_loss(h, y, m.pred, m.joint, ls).item(), 1e-12);
}

TEST(NonAr, GradientMatchesFiniteDifferences) {
  Rng rng(34);
  auto head = FrameClassifierParams::make(5, 6, 4, rng);
  Tensor h = random_normal({4, 5}, rng);
  const std::vector<int> y{3, 2, kEos};
  EXPECT_LE(finite_diff_check([&](const Tensor& x) { return nonar_loss(x, y, head, LabelSmoothingSpec{0.1}); }, h),
            1e-3);
  EXPECT_LE(finite_diff_check_params([&] { return nonar_loss(h, y, head, LabelSmoothingSpec{0.1}); },
                                     {head.enc_weight, head.output.weight, head.output.bias}),
            1e-3);
}

// ---------------------------------------------------------------------------
// Vocabulary relabeling

TEST(Losses, TableLossesArePermutationCovariant) {
  Rng rng(35);
  std::vector<std::size_t> perm{2, 0, 3, 1};  // blank (3) moves to column 2
  for (int draw = 0; draw < 20; ++draw) {
    const std::vector<int> y{0, 1, 1};
    Tensor lp = random_log_probs(4 * 4, 4, rng);
    Tensor permuted = Tensor::zeros({16, 4});
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t k = 0; k < 4; ++k) permuted.mutable_values()[r * 4 + perm[k]] = lp[r * 4 + k];
    std::vector<int> py;
    for (int t : y) py.push_back(static_cast<int>(perm[static_cast<std::size_t>(t)]));
    EXPECT_NEAR(rnnt_nll(lp, 4, y, 3).item(), rnnt_nll(permuted, 4, py, perm[3]).item(), 1e-12);

    Tensor clp = random_log_probs(6, 4, rng);
    Tensor cperm = Tensor::zeros({6, 4});
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t k = 0; k < 4; ++k) cperm.mutable_values()[r * 4 + perm[k]] = clp[r * 4 + k];
    EXPECT_NEAR(ctc_nll(clp, y, 3).item(), ctc_nll(cperm, py, perm[3]).item(), 1e-12);
  }
}

TEST(Losses, AlignerIsPermutationCovariant) {
  // Relabel content tokens (SOS and EOS fixed) by permuting embedding rows,
  // output columns and the target sequence together.
  Micro m(5, 5, 36);
  const std::vector<int> perm{0, 1, 4, 2, 3};
  Micro p = m;
  p.pred.embedding = Tensor::zeros({5, m.E});
  p.joint.output.weight = Tensor::zeros({m.J, 5});
  p.joint.output.bias = Tensor::zeros({5});
  for (std::size_t v = 0; v < 5; ++v) {
    const auto w = static_cast<std::size_t>(perm[v]);
    for (std::size_t e = 0; e < m.E; ++e) p.pred.embedding.mutable_values()[w * m.E + e] = m.pred.embedding.at(v, e);
    for (std::size_t j = 0; j < m.J; ++j)
      p.joint.output.weight.mutable_values()[j * 5 + w] = m.joint.output.weight.at(j, v);
    p.joint.output.bias.mutable_values()[w] = m.joint.output.bias[v];
  }
  Rng rng(37);
  Tensor h = random_normal({5, m.d}, rng);
  const std::vector<int> y{2, 3, 4, 2, kEos};
  std::vector<int> py;
  for (int t : y) py.push_back(perm[static_cast<std::size_t>(t)]);
  LabelSmoothingSpec ls{0.1};
  EXPECT_NEAR(aligner_loss(h, y, m.pred, m.joint, ls).item(), aligner_loss(h, py, p.pred, p.joint, ls).item(), 1e-12);
}

// ---------------------------------------------------------------------------
// Prediction network and joint

TEST(Prediction, DeterministicAndDataIndependentStart) {
  Micro m(6, 5, 38);
  PredictionState a = prediction_start(m.pred), b = prediction_start(m.pred);
  for (std::size_t i = 0; i < a.hidden.size(); ++i) EXPECT_EQ(a.hidden[i], b.hidden[i]);
  EXPECT_EQ(a.last_token, kSos);
  PredictionState a2 = prediction_step(m.pred, a, 3), b2 = prediction_step(m.pred, b, 3);
  for (std::size_t i = 0; i < a2.cell.size(); ++i) EXPECT_EQ(a2.cell[i], b2.cell[i]);
}

TEST(Prediction, SequenceEqualsChainedSteps) {
  Micro m(6, 5, 39);
  const std::vector<int> inputs{4, 2, 5, 5};
  Tensor seq = prediction_sequence(m.pred, inputs);
  ASSERT_EQ(seq.rows(), inputs.size() + 1);
  PredictionState s = prediction_start(m.pred);
  for (std::size_t i = 0; i <= inputs.size(); ++i) {
    for (std::size_t j = 0; j < m.H; ++j) EXPECT_NEAR(seq.at(i, j), s.hidden[j], 1e-14);
    if (i < inputs.size()) s = prediction_step(m.pred, s, inputs[i]);
  }
}

TEST(Prediction, OutOfVocabularyIsContractError) {
  Micro m(6, 5, 40);
  auto s = prediction_start(m.pred);
  EXPECT_THROW(prediction_step(m.pred, s, 6), ContractError);
  EXPECT_THROW(prediction_step(m.pred, s, -1), ContractError);
}

TEST(Prediction, RecurrenceCarriesHistory) {
  // g_3 depends on the embedding of y_1 through the LSTM state.
  Micro m(6, 5, 41);
  Rng rng(42);
  Tensor w = random_normal({1, m.H}, rng);
  auto g3 = [&] {
    auto s = prediction_start(m.pred);
    s = prediction_step(m.pred, s, 3);
    s = prediction_step(m.pred, s, 4);
    return dot(s.hidden, w);
  };
  Tensor emb = m.pred.embedding;
  emb.set_requires_grad(true);
  Graph g;
  GradScope scope(g);
  g.backward(g3());
  double row3 = 0;
  for (std::size_t e = 0; e < m.E; ++e) row3 += std::abs(emb.grad()[3 * m.E + e]);
  EXPECT_GT(row3, 1e-8);
  EXPECT_LE(finite_diff_check_params(g3, {m.pred.embedding}), 1e-4);
}

TEST(Joint, ZeroInputsGiveOutputBias) {
  Micro m(4, 5, 43);
  Tensor out = joint(Tensor::zeros({1, m.d}), Tensor::zeros({1, m.H}), m.joint);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(out[k], m.joint.output.bias[k]);
}

TEST(Joint, AllPairsLayoutAndGradient) {
  Micro m(4, 5, 44);
  Rng rng(45);
  Tensor h = random_normal({3, m.d}, rng), g = random_normal({2, m.H}, rng);
  Tensor all = joint_all_pairs(h, g, m.joint);
  ASSERT_EQ(all.rows(), 6u);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t u = 0; u < 2; ++u) {
      Tensor one = joint(slice_rows(h, t, t + 1), slice_rows(g, u, u + 1), m.joint);
      for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(all.at(t * 2 + u, k), one[k], 1e-13);
    }
  Tensor w = random_normal({3, 5}, rng);
  Tensor g3 = random_normal({3, m.H}, rng);
  EXPECT_LE(finite_diff_check([&](const Tensor& x) { return dot(joint(x, g3, m.joint), w); }, h), 1e-3);
  EXPECT_LE(finite_diff_check([&](const Tensor& x) { return dot(joint(h, x, m.joint), w); }, g3), 1e-3);
}

// ---------------------------------------------------------------------------
// Smoothing prior

Batch batch_of(std::vector<std::vector<int>> labels) {
  Batch b;
  for (auto& y : labels) {
    Utterance u;
    u.features = Tensor::zeros({y.size(), 1});
    u.tokens = std::move(y);
    b.utterances.push_back(std::move(u));
  }
  return b;
}

TEST(Prior, DegenerateBatchPeaksButStaysPositive) {
  auto prior = batch_prior_estimate(batch_of({{3, 3, 3}, {3, 3}}), 5);
  EXPECT_EQ(argmax(prior), 3u);
  for (Real p : prior) EXPECT_GT(p, 0);
  EXPECT_NEAR(std::accumulate(prior.begin(), prior.end(), 0.0), 1.0, 1e-12);
}

TEST(Prior, RatioApproachesCountsAsFloorVanishes) {
  auto b = batch_of({{2, 2, 3}, {2}});
  for (double floor : {1.0, 1e-3, 1e-9}) {
    auto prior = batch_prior_estimate(b, 4, floor);
    const double ratio = prior[2] / prior[3];
    EXPECT_NEAR(ratio, (3 + floor) / (1 + floor), 1e-9);
    if (floor < 1e-6) {
      EXPECT_NEAR(ratio, 3.0, 1e-6);
    }
    EXPECT_NEAR(std::accumulate(prior.begin(), prior.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Prior, EmptyBatchIsContractError) { EXPECT_THROW(batch_prior_estimate(Batch{}, 4), ContractError); }

TEST(Prior, SmoothedTargetsSumToOne) {
  const std::vector<Real> prior{0.1, 0.6, 0.3};
  Tensor q = smoothed_targets(std::vector<int>{0, 2, 1}, 3, 0.25, prior);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(q.at(i, 0) + q.at(i, 1) + q.at(i, 2), 1.0, 1e-12);
  EXPECT_NEAR(q.at(0, 0), 0.75 + 0.025, 1e-12);
  EXPECT_THROW(smoothed_targets(std::vector<int>{0}, 4, 0.1, prior), DimensionError);
}

}  // namespace
}  // namespace alenc
