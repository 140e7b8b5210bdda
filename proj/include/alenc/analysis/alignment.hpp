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
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "alenc/data/utterance.hpp"
#include "alenc/model/encoder.hpp"

namespace alenc {

// Source frame (post-subsampling) and confidence per output token.
struct AlignmentPath {
  std::vector<std::size_t> frames;
  std::vector<double> confidence;

  std::size_t size() const { return frames.size(); }

  // Fraction of consecutive pairs with a_{i+1} >= a_i; 1 for paths shorter
  // than two.
  double monotonicity() const {
    if (frames.size() < 2) return 1.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) ok += frames[i + 1] >= frames[i];
    return double(ok) / double(frames.size() - 1);
  }

  double mean_confidence() const {
    if (confidence.empty()) return 0.0;
    double s = 0;
    for (double c : confidence) s += c;
    return s / double(confidence.size());
  }

  // Index reversal a_i -> T'-1-a_i, undoing time reversal of the input.
  AlignmentPath reversed(std::size_t num_frames) const {
    AlignmentPath p = *this;
    for (auto& f : p.frames) f = num_frames - 1 - f;
    return p;
  }
};

// Rows 0..U-1 of the head-averaged attention at `layer`: argmax column and
// its value. Rows are re-checked to sum to one.
inline AlignmentPath extract_attention_alignment(const AttentionRecord& rec, std::size_t layer, std::size_t U) {
  Tensor avg = rec.head_average(layer);  // throws std::out_of_range
  const auto T = avg.cols();
  if (U > avg.rows()) throw ContractError(detail::concat("alignment: U=", U, " exceeds T'=", avg.rows()));
  AlignmentPath p;
  for (std::size_t i = 0; i < U; ++i) {
    auto row = avg.values().subspan(i * T, T);
    double s = 0;
    std::size_t best = 0;
    for (std::size_t j = 0; j < T; ++j) {
      s += row[j];
      if (row[j] > row[best]) best = j;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ValidationError(detail::concat("attention row ", i, " sums to ", s));
    p.frames.push_back(best);
    p.confidence.push_back(row[best]);
  }
  return p;
}

struct LayerSelection {
  std::size_t layer = 0;
  double score = 0;
  std::vector<double> scores;  // per layer
};

// Score = monotonicity x mean confidence over the first U rows; the lowest
// layer wins ties. With time_reversed the path is scored after index
// reversal, for models trained on reversed audio.
inline LayerSelection select_alignment_layer(const AttentionRecord& rec, std::size_t U, bool time_reversed = false) {
  if (rec.probs.empty()) throw ContractError("select_alignment_layer: empty record");
  LayerSelection sel;
  for (std::size_t l = 0; l < rec.probs.size(); ++l) {
    auto p = extract_attention_alignment(rec, l, U);
    if (time_reversed) p = p.reversed(rec.probs[l].front().cols());
    const double s = p.monotonicity() * p.mean_confidence();
    sel.scores.push_back(s);
    if (l == 0 || s > sel.score) {
      sel.score = s;
      sel.layer = l;
    }
  }
  return sel;
}

struct AlignmentReport {
  double monotonicity = 0;
  double mean_abs_frame_error = 0;
  double within_tolerance = 0;  // fraction of tokens with |error| <= tolerance
  double coverage = 0;          // fraction with confidence >= floor
  std::size_t tokens = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "tokens: " << tokens << "\nmonotonicity: " << monotonicity << "\nmean_abs_frame_error: "
       << mean_abs_frame_error << "\nwithin_tolerance: " << within_tolerance << "\ncoverage: " << coverage << "\n";
    return os.str();
  }
};

// Token center in post-subsample frames: boundary midpoint / factor, rounded.
inline long token_center(const Boundary& b, std::size_t subsample_factor) {
  return std::lround((double(b.start) + double(b.end)) / 2.0 / double(subsample_factor));
}

// Compares a path against ground-truth content-token boundaries. A path may
// carry one extra trailing entry (the <EOS> row); it is ignored.
inline AlignmentReport alignment_metrics(const AlignmentPath& path, const std::vector<Boundary>& truth,
                                         std::size_t subsample_factor, double tolerance = 2.0,
                                         double confidence_floor = 0.1) {
  if (subsample_factor < 1) throw ContractError("alignment_metrics: subsample_factor must be >= 1");
  if (path.size() != truth.size() && path.size() != truth.size() + 1)
    throw ContractError(detail::concat("alignment_metrics: path has ", path.size(), " entries for ", truth.size(),
                                       " reference tokens"));
  AlignmentReport r;
  const auto n = truth.size();
  r.tokens = n;
  AlignmentPath head;
  head.frames.assign(path.frames.begin(), path.frames.begin() + static_cast<long>(n));
  head.confidence.assign(path.confidence.begin(), path.confidence.begin() + static_cast<long>(n));
  r.monotonicity = head.monotonicity();
  if (n == 0) return r;
  double err = 0;
  std::size_t within = 0, covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::abs(double(head.frames[i]) - double(token_center(truth[i], subsample_factor)));
    err += e;
    within += e <= tolerance;
    covered += head.confidence[i] >= confidence_floor;
  }
  r.mean_abs_frame_error = err / double(n);
  r.within_tolerance = double(within) / double(n);
  r.coverage = double(covered) / double(n);
  return r;
}

}  // namespace alenc
