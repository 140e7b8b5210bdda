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

#include <charconv>
#include <string>
#include <string_view>

#include "alenc/decode/decoders.hpp"

namespace alenc {

enum class BoundaryPolicy { carry, reset, reset_prime };

struct ChunkPlan {
  std::size_t chunk_frames = 1;  // post-subsampling frames per chunk
  BoundaryPolicy policy = BoundaryPolicy::carry;
  int prime_tokens = 0;  // k for reset_prime

  void check() const {
    if (chunk_frames < 1) throw ConfigError("chunk_frames must be >= 1");
    if (prime_tokens < 0) throw ConfigError("prime token count must be >= 0");
  }

  std::string policy_name() const {
    switch (policy) {
      case BoundaryPolicy::carry: return "carry";
      case BoundaryPolicy::reset: return "reset";
      case BoundaryPolicy::reset_prime: return "reset_prime(" + std::to_string(prime_tokens) + ")";
    }
    return "?";
  }
};

// Accepts "carry", "reset", "reset_prime(k)" and "reset_prime:k".
inline ChunkPlan parse_chunk_policy(std::string_view s, std::size_t chunk_frames) {
  ChunkPlan plan;
  plan.chunk_frames = chunk_frames;
  if (s == "carry") {
    plan.policy = BoundaryPolicy::carry;
  } else if (s == "reset") {
    plan.policy = BoundaryPolicy::reset;
  } else if (s.starts_with("reset_prime")) {
    auto rest = s.substr(std::string_view("reset_prime").size());
    if (rest.size() < 2 || !(rest.front() == '(' || rest.front() == ':'))
      throw ConfigError("reset_prime needs a token count, e.g. reset_prime(10)");
    rest.remove_prefix(1);
    if (!rest.empty() && rest.back() == ')') rest.remove_suffix(1);
    int k = 0;
    auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (ec != std::errc() || p != rest.data() + rest.size()) throw ConfigError("bad reset_prime count '" + std::string(rest) + "'");
    plan.policy = BoundaryPolicy::reset_prime;
    plan.prime_tokens = k;
  } else {
    throw ConfigError("unknown boundary policy '" + std::string(s) + "' (carry, reset, reset_prime(k))");
  }
  plan.check();
  return plan;
}

// Scans chunk after chunk over an already-encoded frame sequence. Within a
// chunk, frames after the first <EOS> are skipped; a chunk without <EOS>
// contributes every frame's token. The prediction state at each boundary
// follows the plan's policy.
template <TransducerNetwork N>
DecodeResult chunked_scan(N& net, const ChunkPlan& plan, const BeamConfig& cfg) {
  plan.check();
  cfg.check();
  const auto before = net.evaluations();
  const auto T = net.num_frames();
  DecodeResult r;
  auto state = net.initial();
  for (std::size_t start = 0; start < T; start += plan.chunk_frames) {
    const auto end = start + aligner_step_limit(std::min(plan.chunk_frames, T - start), cfg.max_tokens);
    if (start > 0) {
      switch (plan.policy) {
        case BoundaryPolicy::carry: break;
        case BoundaryPolicy::reset: state = net.initial(); break;
        case BoundaryPolicy::reset_prime: {
          state = net.initial();
          const auto k = std::min(r.tokens.size(), static_cast<std::size_t>(plan.prime_tokens));
          for (std::size_t i = r.tokens.size() - k; i < r.tokens.size(); ++i) state = net.advance(state, r.tokens[i]);
          break;
        }
      }
    }
    auto scan = cfg.beam_size == 1 ? aligner_greedy_scan(net, start, end, state)
                                   : aligner_beam_scan(net, start, end, state, cfg);
    r.tokens.insert(r.tokens.end(), scan.tokens.begin(), scan.tokens.end());
    r.log_prob += scan.log_prob;
    r.unterminated = !scan.saw_eos;
    state = std::move(scan.state);
  }
  r.joint_evaluations = net.evaluations() - before;
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

// Long-form Aligner decoding: subsample once, encode chunks independently,
// re-concatenate, then scan.
inline DecodeResult chunked_decode(const Tensor& features, const Model& model, const ChunkPlan& plan,
                                   const BeamConfig& cfg) {
  if (model.config.kind != ModelKind::aligner) throw ContractError("chunked_decode needs an aligner model");
  Tensor h;
  {
    NoGradScope ng;
    h = encode_chunked(features, model.config.encoder, model.encoder, plan.chunk_frames);
  }
  ModelNetwork net(model, std::move(h));
  return chunked_scan(net, plan, cfg);
}

// Decodes one utterance with the head that matches the model kind.
inline DecodeResult decode_features(const Tensor& features, const Model& model, const BeamConfig& cfg) {
  Tensor h;
  {
    NoGradScope ng;
    h = model.encode(features).h;
  }
  switch (model.config.kind) {
    case ModelKind::aligner: {
      ModelNetwork net(model, h);
      return cfg.beam_size == 1 ? aligner_greedy_decode(net, cfg.max_tokens) : aligner_beam_decode(net, cfg);
    }
    case ModelKind::rnnt: {
      ModelNetwork net(model, h);
      return cfg.beam_size == 1 ? rnnt_greedy_decode(net, cfg.max_symbols_per_frame) : rnnt_beam_decode(net, cfg);
    }
    case ModelKind::nonar_aligner: {
      NoGradScope ng;
      return nonar_decode(frame_logits(h, model.classifier));
    }
    case ModelKind::ctc: {
      NoGradScope ng;
      return ctc_greedy_decode(frame_logits(h, model.classifier));
    }
  }
  throw ContractError("unhandled model kind");
}

// Baseline: cut the raw features into fixed segments, transcribe each on its
// own, and join the token sequences end to end.
inline DecodeResult blind_segment_decode(const Tensor& features, const Model& model, std::size_t segment_frames,
                                         const BeamConfig& cfg) {
  if (segment_frames < 1) throw ConfigError("segment_frames must be >= 1");
  const auto T = features.rows();
  DecodeResult r;
  for (std::size_t s = 0; s < T; s += segment_frames) {
    Tensor seg;
    {
      NoGradScope ng;
      seg = slice_rows(features, s, std::min(T, s + segment_frames));
    }
    auto part = decode_features(seg, model, cfg);
    r.tokens.insert(r.tokens.end(), part.tokens.begin(), part.tokens.end());
    r.log_prob += part.log_prob;
    r.joint_evaluations += part.joint_evaluations;
    r.unterminated = r.unterminated || part.unterminated;
  }
  r.nbest.push_back({r.tokens, r.log_prob});
  return r;
}

}  // namespace alenc
