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

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "alenc/decode/network.hpp"

namespace alenc {

struct BeamConfig {
  int beam_size = 1;
  double debias_gamma = 0.0;
  int max_tokens = 0;  // 0: bounded by the frame count only
  bool path_merging = false;
  int max_symbols_per_frame = 8;
  bool length_normalize = false;

  void check() const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (debias_gamma < 0) throw ConfigError("debias_gamma must be >= 0");
    if (max_tokens < 0) throw ConfigError("max_tokens must be >= 0");
    if (max_symbols_per_frame < 1) throw ConfigError("max_symbols_per_frame must be >= 1");
  }
};

// Partial decode. For the Aligner frame_cursor == tokens.size() relative to
// the scan start; for RNN-T it is the current frame.
template <typename State>
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  State pred_state{};
  std::size_t frame_cursor = 0;
  bool finished = false;
  int symbols_at_frame = 0;
};

struct ScoredTokens {
  std::vector<int> tokens;
  double log_prob = 0.0;
};

struct DecodeResult {
  std::vector<int> tokens;  // transcript without <EOS>
  double log_prob = 0.0;
  bool unterminated = false;
  std::size_t joint_evaluations = 0;
  std::vector<ScoredTokens> nbest;
};

// Drops entries below gamma/V (survival is p >= gamma/V) and renormalizes.
// If nothing survives, the argmax alone keeps probability 1.
inline std::vector<Real> debias_posterior(std::span<const Real> p, double gamma) {
  if (p.empty()) throw DimensionError("debias_posterior: empty distribution");
  double total = 0;
  for (Real v : p) {
    if (!(v >= 0)) throw ContractError("debias_posterior: negative or NaN probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ContractError(detail::concat("debias_posterior: input sums to ", total));
  std::vector<Real> out(p.begin(), p.end());
  if (gamma == 0) return out;
  const double threshold = gamma / static_cast<double>(p.size());
  double kept = 0;
  for (auto& v : out) {
    if (v < threshold) v = 0;
    kept += v;
  }
  if (kept == 0) {
    std::fill(out.begin(), out.end(), Real(0));
    out[argmax(p)] = Real(1);
    return out;
  }
  for (auto& v : out) v = static_cast<Real>(v / kept);
  return out;
}

inline Tensor debias_posterior(const Tensor& p, double gamma) {
  auto v = debias_posterior(p.values(), gamma);
  return Tensor::from(p.shape(), std::move(v));
}

// ---------------------------------------------------------------------------
// Aligner

template <typename State>
struct AlignerScan {
  std::vector<int> tokens;  // content tokens emitted in this scan
  double log_prob = 0.0;
  bool saw_eos = false;
  State state{};  // after consuming every emitted content token
  std::vector<ScoredTokens> nbest;
};

// Greedy scan over frames [begin, end): frame i predicts one token from
// (h_i, g). Stops at the first <EOS>; later frames are never evaluated.
template <TransducerNetwork N>
AlignerScan<typename N::State> aligner_greedy_scan(N& net, std::size_t begin, std::size_t end,
                                                   typename N::State state) {
  AlignerScan<typename N::State> r;
  for (std::size_t t = begin; t < end; ++t) {
    auto lp = net.log_probs(t, state);
    const auto v = static_cast<int>(argmax(lp));
    r.log_prob += lp[static_cast<std::size_t>(v)];
    if (v == kEos) {
      r.saw_eos = true;
      break;
    }
    r.tokens.push_back(v);
    state = net.advance(state, v);
  }
  r.state = std::move(state);
  return r;
}

namespace detail {

inline double rank_score(const ScoredTokens& h, bool normalize, std::size_t extra) {
  return normalize ? h.log_prob / static_cast<double>(h.tokens.size() + extra) : h.log_prob;
}

}  // namespace detail

// Beam scan over frames [begin, end). Every hypothesis sits on the same
// frame, so no two distinct hypotheses share a token sequence and there is
// nothing to merge.
template <TransducerNetwork N>
AlignerScan<typename N::State> aligner_beam_scan(N& net, std::size_t begin, std::size_t end,
                                                 typename N::State state, const BeamConfig& cfg) {
  cfg.check();
  using State = typename N::State;
  using Hyp = Hypothesis<State>;
  struct Cand {
    double score;
    std::size_t parent;
    int token;
  };
  const auto B = static_cast<std::size_t>(cfg.beam_size);
  std::vector<Hyp> active(1);
  active[0].pred_state = std::move(state);
  active[0].frame_cursor = begin;
  std::vector<Hyp> finished;
  for (std::size_t t = begin; t < end && !active.empty(); ++t) {
    std::vector<Cand> cands;
    for (std::size_t k = 0; k < active.size(); ++k) {
      auto lp = net.log_probs(t, active[k].pred_state);
      if (cfg.debias_gamma > 0) {
        std::vector<Real> p(lp.size());
        for (std::size_t v = 0; v < lp.size(); ++v) p[v] = std::exp(lp[v]);
        Real s = 0;
        for (Real x : p) s += x;
        for (auto& x : p) x /= s;
        p = debias_posterior(p, cfg.debias_gamma);
        for (std::size_t v = 0; v < p.size(); ++v)
          if (p[v] > 0) cands.push_back({active[k].log_prob + std::log(double(p[v])), k, static_cast<int>(v)});
      } else {
        for (std::size_t v = 0; v < lp.size(); ++v)
          cands.push_back({active[k].log_prob + lp[v], k, static_cast<int>(v)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Hyp> next;
    for (std::size_t r = 0; r < cands.size(); ++r) {
      const auto& c = cands[r];
      const Hyp& parent = active[c.parent];
      if (c.token == kEos) {
        if (r < B) {
          Hyp h;
          h.tokens = parent.tokens;
          h.log_prob = c.score;
          h.pred_state = parent.pred_state;
          h.frame_cursor = t + 1;
          h.finished = true;
          finished.push_back(std::move(h));
        }
      } else if (next.size() < B) {
        Hyp h;
        h.tokens = parent.tokens;
        h.tokens.push_back(c.token);
        h.log_prob = c.score;
        h.pred_state = net.advance(parent.pred_state, c.token);
        h.frame_cursor = t + 1;
        next.push_back(std::move(h));
      }
      if (next.size() >= B && r + 1 >= B) break;
    }
    active = std::move(next);
    // Scores only fall as hypotheses grow; once the best finished one beats
    // every live one, nothing can overtake it.
    if (!finished.empty() && !cfg.length_normalize) {
      double best_done = finished[0].log_prob;
      for (const auto& f : finished) best_done = std::max(best_done, f.log_prob);
      if (active.empty() || best_done >= active[0].log_prob) break;
    }
  }
  AlignerScan<State> r;
  const bool norm = cfg.length_normalize;
  auto by_rank = [&](const Hyp& a, const Hyp& b) {
    return detail::rank_score({a.tokens, a.log_prob}, norm, 1) > detail::rank_score({b.tokens, b.log_prob}, norm, 1);
  };
  std::stable_sort(finished.begin(), finished.end(), by_rank);
  if (!finished.empty()) {
    r.tokens = finished[0].tokens;
    r.log_prob = finished[0].log_prob;
    r.saw_eos = true;
    r.state = finished[0].pred_state;
    for (const auto& f : finished) r.nbest.push_back({f.tokens, f.log_prob});
  } else if (!active.empty()) {
    std::stable_sort(active.begin(), active.end(), by_rank);
    r.tokens = active[0].tokens;
    r.log_prob = active[0].log_prob;
    r.state = active[0].pred_state;
    for (const auto& a : active) r.nbest.push_back({a.tokens, a.log_prob});
  }
  return r;
}

inline std::size_t aligner_step_limit(std::size_t frames, int max_tokens) {
  return max_tokens > 0 ? std::min(frames, static_cast<std::size_t>(max_tokens)) : frames;
}

// One joint evaluation per emitted token, <EOS> included. Running out of
// frames (or max_tokens) before <EOS> flags the transcript unterminated.
template <TransducerNetwork N>
DecodeResult aligner_greedy_decode(N& net, int max_tokens = 0) {
  const auto before = net.evaluations();
  auto s = aligner_greedy_scan(net, 0, aligner_step_limit(net.num_frames(), max_tokens), net.initial());
  DecodeResult r;
  r.tokens = std::move(s.tokens);
  r.log_prob = s.log_prob;
  r.unterminated = !s.saw_eos;
  r.joint_evaluations = net.evaluations() - before;
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

template <TransducerNetwork N>
DecodeResult aligner_beam_decode(N& net, const BeamConfig& cfg) {
  const auto before = net.evaluations();
  auto s = aligner_beam_scan(net, 0, aligner_step_limit(net.num_frames(), cfg.max_tokens), net.initial(), cfg);
  DecodeResult r;
  r.tokens = std::move(s.tokens);
  r.log_prob = s.log_prob;
  r.unterminated = !s.saw_eos;
  r.joint_evaluations = net.evaluations() - before;
  r.nbest = std::move(s.nbest);
  return r;
}

// ---------------------------------------------------------------------------
// RNN-T (blank is the last output)

// At each frame, emit argmax tokens until blank wins or the per-frame cap is
// reached, then advance. Uncapped cost is T' + (#emitted) evaluations.
template <TransducerNetwork N>
DecodeResult rnnt_greedy_decode(N& net, int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) throw ConfigError("max_symbols_per_frame must be >= 1");
  const auto before = net.evaluations();
  const auto blank = net.num_outputs() - 1;
  DecodeResult r;
  auto state = net.initial();
  for (std::size_t t = 0; t < net.num_frames(); ++t) {
    for (int sym = 0; sym < max_symbols_per_frame;) {
      auto lp = net.log_probs(t, state);
      const auto v = argmax(lp);
      r.log_prob += lp[v];
      if (v == blank) break;
      r.tokens.push_back(static_cast<int>(v));
      state = net.advance(state, static_cast<int>(v));
      ++sym;
    }
  }
  r.joint_evaluations = net.evaluations() - before;
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

// Step-synchronous beam over {blank, token} expansions: every hypothesis
// takes one joint evaluation per step and blank-advances compete with token
// extensions for the same beam slots, so beam 1 reproduces greedy. With path
// merging, candidates reaching the same (token sequence, frame) are combined
// by log-sum-exp.
template <TransducerNetwork N>
DecodeResult rnnt_beam_decode(N& net, const BeamConfig& cfg) {
  cfg.check();
  using State = typename N::State;
  using Hyp = Hypothesis<State>;
  struct Cand {
    double score;
    std::size_t parent;
    int output;  // -1 carry, blank index, or token id
    std::size_t frame;
    int symbols;
  };
  const auto before = net.evaluations();
  const auto T = net.num_frames();
  const auto blank = static_cast<int>(net.num_outputs() - 1);
  const auto B = static_cast<std::size_t>(cfg.beam_size);
  std::vector<Hyp> beam(1);
  beam[0].pred_state = net.initial();
  auto live = [&] {
    for (const auto& h : beam)
      if (h.frame_cursor < T) return true;
    return false;
  };
  while (live()) {
    std::vector<Cand> cands;
    for (std::size_t k = 0; k < beam.size(); ++k) {
      const Hyp& h = beam[k];
      if (h.frame_cursor >= T) {
        cands.push_back({h.log_prob, k, -1, h.frame_cursor, h.symbols_at_frame});
        continue;
      }
      if (h.symbols_at_frame >= cfg.max_symbols_per_frame) {
        cands.push_back({h.log_prob, k, -1, h.frame_cursor + 1, 0});
        continue;
      }
      auto lp = net.log_probs(h.frame_cursor, h.pred_state);
      for (int v = 0; v < blank; ++v)
        cands.push_back({h.log_prob + lp[static_cast<std::size_t>(v)], k, v, h.frame_cursor, h.symbols_at_frame + 1});
      cands.push_back({h.log_prob + lp[static_cast<std::size_t>(blank)], k, blank, h.frame_cursor + 1, 0});
    }
    auto tokens_of = [&](const Cand& c) {
      std::vector<int> t = beam[c.parent].tokens;
      if (c.output >= 0 && c.output != blank) t.push_back(c.output);
      return t;
    };
    if (cfg.path_merging) {
      std::map<std::pair<std::vector<int>, std::size_t>, std::size_t> index;
      std::vector<Cand> merged;
      for (const auto& c : cands) {
        auto key = std::make_pair(tokens_of(c), c.frame);
        auto it = index.find(key);
        if (it == index.end()) {
          index.emplace(std::move(key), merged.size());
          merged.push_back(c);
        } else {
          Cand& m = merged[it->second];
          const double combined = log_add(static_cast<Real>(m.score), static_cast<Real>(c.score));
          if (c.score > m.score) m = c;
          m.score = combined;
        }
      }
      cands = std::move(merged);
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.output < b.output;
    });
    if (cands.size() > B) cands.resize(B);
    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (const auto& c : cands) {
      const Hyp& p = beam[c.parent];
      Hyp h;
      h.tokens = tokens_of(c);
      h.log_prob = c.score;
      h.frame_cursor = c.frame;
      h.symbols_at_frame = c.symbols;
      h.pred_state = (c.output >= 0 && c.output != blank) ? net.advance(p.pred_state, c.output) : p.pred_state;
      h.finished = h.frame_cursor >= T;
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }
  const bool norm = cfg.length_normalize;
  std::stable_sort(beam.begin(), beam.end(), [&](const Hyp& a, const Hyp& b) {
    return detail::rank_score({a.tokens, a.log_prob}, norm, 1) > detail::rank_score({b.tokens, b.log_prob}, norm, 1);
  });
  DecodeResult r;
  r.tokens = beam[0].tokens;
  r.log_prob = beam[0].log_prob;
  r.joint_evaluations = net.evaluations() - before;
  for (const auto& h : beam) r.nbest.push_back({h.tokens, h.log_prob});
  return r;
}

// ---------------------------------------------------------------------------
// Frame classifiers

// Per-frame argmax truncated at the first <EOS>; no dedup, no blanks.
inline DecodeResult nonar_decode(const Tensor& frame_logits) {
  const auto T = frame_logits.rows(), V = frame_logits.cols();
  Tensor lp = log_softmax_rows(frame_logits);
  DecodeResult r;
  r.unterminated = true;
  for (std::size_t t = 0; t < T; ++t) {
    auto row = lp.values().subspan(t * V, V);
    const auto v = argmax(row);
    r.log_prob += row[v];
    ++r.joint_evaluations;
    if (static_cast<int>(v) == kEos) {
      r.unterminated = false;
      break;
    }
    r.tokens.push_back(static_cast<int>(v));
  }
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

// Best-path CTC: argmax per frame, collapse repeats, drop blanks.
inline DecodeResult ctc_greedy_decode(const Tensor& frame_logits) {
  const auto T = frame_logits.rows(), K = frame_logits.cols();
  const auto blank = K - 1;
  Tensor lp = log_softmax_rows(frame_logits);
  DecodeResult r;
  std::size_t prev = blank;
  for (std::size_t t = 0; t < T; ++t) {
    auto row = lp.values().subspan(t * K, K);
    const auto v = argmax(row);
    r.log_prob += row[v];
    if (v != blank && v != prev) r.tokens.push_back(static_cast<int>(v));
    prev = v;
  }
  r.joint_evaluations = T;
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

}  // namespace alenc
