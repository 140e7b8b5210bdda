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

#include <functional>
#include <span>
#include <vector>

#include "alenc/decode/chunked.hpp"

namespace alenc {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }

  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    reference_length += o.reference_length;
    return *this;
  }
};

// Levenshtein alignment of hyp against ref. Among minimum-cost alignments
// the backtrace prefers match/substitution, then deletion, then insertion.
inline EditCounts edit_distance(std::span<const int> hyp, std::span<const int> ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), at(i - 1, j) + 1, at(i, j - 1) + 1});
  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      c.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

struct ErrorReport {
  std::size_t utterances = 0;
  std::size_t unterminated = 0;
  std::size_t joint_evaluations = 0;
  EditCounts counts;

  double ter() const {
    return counts.reference_length ? double(counts.errors()) / double(counts.reference_length) : 0.0;
  }
  double deletion_rate() const {
    return counts.reference_length ? double(counts.deletions) / double(counts.reference_length) : 0.0;
  }
  double substitution_rate() const {
    return counts.reference_length ? double(counts.substitutions) / double(counts.reference_length) : 0.0;
  }
  double insertion_rate() const {
    return counts.reference_length ? double(counts.insertions) / double(counts.reference_length) : 0.0;
  }
};

using Transcriber = std::function<DecodeResult(const Utterance&)>;

// Corpus-level token error rate; references are the content tokens.
inline ErrorReport evaluate(const std::vector<Utterance>& data, const Transcriber& transcribe) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  ErrorReport r;
  for (const auto& u : data) {
    DecodeResult d = transcribe(u);
    auto ref = u.content_tokens();
    r.counts += edit_distance(d.tokens, ref);
    r.unterminated += d.unterminated;
    r.joint_evaluations += d.joint_evaluations;
    ++r.utterances;
  }
  return r;
}

inline ErrorReport evaluate(const Model& model, const std::vector<Utterance>& data, const BeamConfig& cfg) {
  return evaluate(data, [&](const Utterance& u) { return decode_features(u.features, model, cfg); });
}

}  // namespace alenc
