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
#include "alenc/data/utterance.hpp"

namespace alenc {

// Synthetic aligned speech: every content token is a fixed random unit
// vector ("template") held for a sampled number of frames, with silence at
// both ends and Gaussian noise everywhere.
struct SynthConfig {
  int vocab_size = 32;  // includes <SOS> and <EOS>
  int feature_dim = 16;
  int duration_min = 3;
  int duration_max = 8;
  double noise_std = 0.3;
  int silence_pad_min = 1;
  int silence_pad_max = 6;
  double inter_token_silence_prob = 0.0;
  int inter_token_silence_max = 2;
  int max_frames = 200;
  int min_tokens = 1;   // content tokens per utterance, sampled uniformly
  int max_tokens = 12;
  // Utterances are padded with trailing silence until ceil(T / factor) >= U,
  // so an encoder subsampling by this factor always has a frame per token.
  int subsample_factor = 2;
  std::uint64_t seed = 0;  // fixes the token templates

  void check() const {
    if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (duration_min < 1 || duration_min > duration_max)
      throw ConfigError("need 1 <= duration_min <= duration_max");
    if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
    if (silence_pad_min < 0 || silence_pad_min > silence_pad_max) throw ConfigError("bad silence pad range");
    if (min_tokens < 1 || min_tokens > max_tokens) throw ConfigError("bad token count range");
    if (subsample_factor < 1) throw ConfigError("subsample_factor must be >= 1");
  }

  int num_content_tokens() const { return vocab_size - kFirstContentToken; }

  // Worst-case frame count for an utterance of n content tokens.
  int capacity_frames(int n) const {
    int gaps = inter_token_silence_prob > 0 ? inter_token_silence_max * (n - 1) : 0;
    return n * duration_max + 2 * silence_pad_max + gaps;
  }
};

// Template for token `id`: a unit vector drawn from a generator keyed on
// (seed, id). Reserved ids have all-zero templates.
inline std::vector<Real> token_template(const SynthConfig& cfg, int id) {
  std::vector<Real> v(cfg.feature_dim, Real(0));
  if (id < kFirstContentToken) return v;
  Rng rng(cfg.seed * 0x100000001B3ULL + static_cast<std::uint64_t>(id) * 0x9E3779B97F4A7C15ULL + 17);
  double norm = 0;
  for (auto& x : v) {
    x = static_cast<Real>(rng.normal());
    norm += double(x) * double(x);
  }
  for (auto& x : v) x = static_cast<Real>(x / std::sqrt(norm));
  return v;
}

// One utterance with `num_tokens` content tokens (U = num_tokens + 1 with
// <EOS>). Consecutive content tokens always differ, so every token boundary
// is visible in the features. Feature values are rounded to float so the
// container round-trips exactly.
inline Utterance generate_utterance(const SynthConfig& cfg, int num_tokens, Rng& rng) {
  cfg.check();
  if (num_tokens < 1) throw ConfigError("num_tokens must be >= 1");
  if (cfg.capacity_frames(num_tokens) > cfg.max_frames)
    throw ConfigError(detail::concat(num_tokens, " tokens may need ", cfg.capacity_frames(num_tokens),
                                     " frames, more than max_frames=", cfg.max_frames));
  const int F = cfg.feature_dim;
  Utterance u;
  std::vector<std::vector<Real>> frames;
  auto silence = [&](int n) {
    for (int i = 0; i < n; ++i) frames.emplace_back(F, Real(0));
  };
  silence(static_cast<int>(rng.uniform_int(cfg.silence_pad_min, cfg.silence_pad_max)));
  int prev = -1;
  for (int i = 0; i < num_tokens; ++i) {
    int tok;
    do tok = static_cast<int>(rng.uniform_int(kFirstContentToken, cfg.vocab_size - 1));
    while (tok == prev && cfg.num_content_tokens() > 1);
    prev = tok;
    if (i > 0 && cfg.inter_token_silence_prob > 0 && rng.bernoulli(cfg.inter_token_silence_prob))
      silence(static_cast<int>(rng.uniform_int(1, cfg.inter_token_silence_max)));
    const int d = static_cast<int>(rng.uniform_int(cfg.duration_min, cfg.duration_max));
    const auto tmpl = token_template(cfg, tok);
    Boundary b{static_cast<std::uint32_t>(frames.size()), static_cast<std::uint32_t>(frames.size() + d - 1)};
    for (int k = 0; k < d; ++k) frames.push_back(tmpl);
    u.tokens.push_back(tok);
    u.boundaries.push_back(b);
  }
  u.tokens.push_back(kEos);
  silence(static_cast<int>(rng.uniform_int(cfg.silence_pad_min, cfg.silence_pad_max)));
  const std::size_t U = u.tokens.size();
  while ((frames.size() + cfg.subsample_factor - 1) / cfg.subsample_factor < U) silence(1);

  const std::size_t T = frames.size();
  std::vector<Real> values(T * F);
  for (std::size_t t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      double v = frames[t][f];
      if (cfg.noise_std > 0) v += rng.normal(0.0, cfg.noise_std);
      values[t * F + f] = static_cast<Real>(static_cast<float>(v));
    }
  u.features = Tensor::from({T, static_cast<std::size_t>(F)}, std::move(values));
  return u;
}

inline Utterance generate_utterance(const SynthConfig& cfg, int num_tokens, std::uint64_t seed) {
  Rng rng(seed);
  return generate_utterance(cfg, num_tokens, rng);
}

// Token count drawn from [cfg.min_tokens, cfg.max_tokens].
inline Utterance sample_utterance(const SynthConfig& cfg, Rng& rng) {
  int n = static_cast<int>(rng.uniform_int(cfg.min_tokens, cfg.max_tokens));
  return generate_utterance(cfg, n, rng);
}

inline std::vector<Utterance> generate_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t seed,
                                               const std::string& prefix = "utt") {
  Rng rng(seed);
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_utterance(cfg, rng));
    out.back().id = prefix + std::to_string(i);
  }
  return out;
}

// Appends utterances along time. Intermediate <EOS> tokens are dropped and
// boundaries are shifted by the running frame offset.
inline Utterance concatenate(const std::vector<const Utterance*>& parts) {
  if (parts.empty()) throw ContractError("concatenate: no utterances");
  Utterance out;
  std::vector<Real> values;
  std::size_t offset = 0;
  const auto F = parts[0]->feature_dim();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Utterance& p = *parts[i];
    if (p.feature_dim() != F) throw DimensionError("concatenate: feature dims differ");
    values.insert(values.end(), p.features.values().begin(), p.features.values().end());
    auto content = p.content_tokens();
    out.tokens.insert(out.tokens.end(), content.begin(), content.end());
    for (const auto& b : p.boundaries)
      out.boundaries.push_back({static_cast<std::uint32_t>(b.start + offset),
                                static_cast<std::uint32_t>(b.end + offset)});
    out.id += (i ? "+" : "") + p.id;
    offset += p.num_frames();
  }
  out.tokens.push_back(kEos);
  out.features = Tensor::from({offset, F}, std::move(values));
  return out;
}

// Replaces roughly `fraction` of the batch with concatenations of 2-3 batch
// members. The extra members are drawn at random; members that would push
// the result past max_frames are skipped, and an example that cannot be
// extended at all stays as it is.
inline Batch concat_augment(const Batch& batch, double fraction, std::size_t max_frames, Rng& rng) {
  if (fraction < 0 || fraction > 1) throw ContractError("concat_augment: fraction must lie in [0, 1]");
  for (const auto& u : batch.utterances)
    if (u.num_frames() > max_frames)
      throw ConfigError(detail::concat("concat_augment: max_frames=", max_frames, " is smaller than utterance ",
                                       u.id, " (", u.num_frames(), " frames)"));
  Batch out = batch;
  if (fraction == 0 || batch.size() < 2) return out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!rng.bernoulli(fraction)) continue;
    const int extra = static_cast<int>(rng.uniform_int(1, 2));
    std::vector<const Utterance*> parts{&batch.utterances[i]};
    std::size_t frames = batch.utterances[i].num_frames();
    for (int k = 0; k < extra; ++k) {
      std::size_t j;
      do j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(batch.size()) - 1));
      while (j == i);
      if (frames + batch.utterances[j].num_frames() > max_frames) continue;
      frames += batch.utterances[j].num_frames();
      parts.push_back(&batch.utterances[j]);
    }
    if (parts.size() > 1) out.utterances[i] = concatenate(parts);
  }
  return out;
}

// Time reversal. Tokens keep their order; each boundary is mirrored, so the
// sequence of boundaries becomes decreasing.
inline Utterance reverse_audio(const Utterance& u) {
  const auto T = u.num_frames(), F = u.feature_dim();
  std::vector<Real> values(T * F);
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(u.features.values().data() + (T - 1 - t) * F, F, values.data() + t * F);
  Utterance out = u;
  out.features = Tensor::from({T, F}, std::move(values));
  for (auto& b : out.boundaries) {
    const auto s = static_cast<std::uint32_t>(T - 1 - b.end);
    const auto e = static_cast<std::uint32_t>(T - 1 - b.start);
    b = {s, e};
  }
  return out;
}

// Zeroes `time_masks` spans of exactly `time_width` frames and `freq_masks`
// spans of exactly `freq_width` channels at random offsets.
inline Tensor spec_augment(const Tensor& features, int time_masks, int time_width, int freq_masks, int freq_width,
                           Rng& rng) {
  const auto T = features.rows(), F = features.cols();
  if (time_width < 0 || freq_width < 0 || static_cast<std::size_t>(time_width) > T ||
      static_cast<std::size_t>(freq_width) > F)
    throw ContractError("spec_augment: mask width exceeds axis length");
  Tensor out = features.clone();
  auto v = out.mutable_values();
  for (int m = 0; m < time_masks && time_width > 0; ++m) {
    auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T - time_width)));
    for (std::size_t t = start; t < start + time_width; ++t)
      std::fill_n(v.begin() + t * F, F, Real(0));
  }
  for (int m = 0; m < freq_masks && freq_width > 0; ++m) {
    auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(F - freq_width)));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = start; f < start + freq_width; ++f) v[t * F + f] = Real(0);
  }
  return out;
}

}  // namespace alenc
