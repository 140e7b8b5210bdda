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

#include <cstdint>
#include <set>
#include <string>

#include "json.hpp"

#include "alenc/data/synth.hpp"
#include "alenc/decode/chunked.hpp"
#include "alenc/model/model.hpp"

namespace alenc {

using json = nlohmann::json;

struct AugmentConfig {
  double concat_fraction = 0.0;
  int concat_max_frames = 0;  // 0: the data config's max_frames
  int time_masks = 0;
  int time_width = 0;
  int freq_masks = 0;
  int freq_width = 0;
  bool reverse = false;  // train on time-reversed features
};

struct TrainConfig {
  double learning_rate_peak = 3e-3;
  int warmup_steps = 333;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip_norm = 5.0;
  double l2_weight = 1e-6;
  int batch_size = 32;
  int total_steps = 5000;
  LabelSmoothingSpec label_smoothing{};
  double variational_noise_std = 0.075;
  int variational_noise_start = 0;
  double ema_decay = 0.999;
  std::uint64_t seed = 7;
  AugmentConfig augment;
  int log_every = 50;
  int checkpoint_every = 0;  // 0: final checkpoint only

  void check() const {
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in (0, 1)");
    if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be > 0");
    if (batch_size < 1 || total_steps < 0) throw ConfigError("batch_size must be >= 1 and total_steps >= 0");
    if (l2_weight < 0 || variational_noise_std < 0) throw ConfigError("regularizer weights must be >= 0");
    if (!(ema_decay >= 0 && ema_decay < 1)) throw ConfigError("ema_decay must lie in [0, 1)");
    label_smoothing.check();
    if (augment.concat_fraction < 0 || augment.concat_fraction > 1) throw ConfigError("concat_fraction must lie in [0, 1]");
  }
};

// Everything a run needs; serialized as the run directory's config.json.
struct RunConfig {
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;
  BeamConfig decode;
  int eval_utterances = 300;
  std::uint64_t eval_seed = 99;

  void check() const {
    data.check();
    model.check();
    train.check();
    decode.check();
    if (data.vocab_size != model.vocab_size) throw ConfigError("data.vocab_size and model.vocab_size differ");
    if (data.feature_dim != model.encoder.feature_dim) throw ConfigError("data.feature_dim and encoder.feature_dim differ");
  }
};

namespace detail {

// Reads known keys and rejects anything else, so typos fail loudly.
class FieldReader {
 public:
  FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  template <typename T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void to_json(json& j, const SynthConfig& c) {
  j = {{"vocab_size", c.vocab_size},       {"feature_dim", c.feature_dim},
       {"duration_min", c.duration_min},   {"duration_max", c.duration_max},
       {"noise_std", c.noise_std},         {"silence_pad_min", c.silence_pad_min},
       {"silence_pad_max", c.silence_pad_max},
       {"inter_token_silence_prob", c.inter_token_silence_prob},
       {"inter_token_silence_max", c.inter_token_silence_max},
       {"max_frames", c.max_frames},       {"min_tokens", c.min_tokens},
       {"max_tokens", c.max_tokens},       {"subsample_factor", c.subsample_factor},
       {"seed", c.seed}};
}
inline void from_json(const json& j, SynthConfig& c) {
  detail::FieldReader r(j, "data");
  r("vocab_size", c.vocab_size);
  r("feature_dim", c.feature_dim);
  r("duration_min", c.duration_min);
  r("duration_max", c.duration_max);
  r("noise_std", c.noise_std);
  r("silence_pad_min", c.silence_pad_min);
  r("silence_pad_max", c.silence_pad_max);
  r("inter_token_silence_prob", c.inter_token_silence_prob);
  r("inter_token_silence_max", c.inter_token_silence_max);
  r("max_frames", c.max_frames);
  r("min_tokens", c.min_tokens);
  r("max_tokens", c.max_tokens);
  r("subsample_factor", c.subsample_factor);
  r("seed", c.seed);
  r.finish();
}

inline void to_json(json& j, const EncoderConfig& c) {
  j = {{"feature_dim", c.feature_dim},
       {"num_layers", c.num_layers},
       {"model_dim", c.model_dim},
       {"num_heads", c.num_heads},
       {"ffn_dim", c.ffn_dim},
       {"conv1d_kernel", c.conv1d_kernel},
       {"subsample_layers", c.subsample_layers},
       {"subsample_kernel", c.subsample_kernel},
       {"subsample_stride", c.subsample_stride},
       {"subsample_channels", c.subsample_channels},
       {"position_mode", c.position_mode == PositionMode::rotary ? "rotary" : "none"},
       {"rope_base", c.rope_base}};
}
inline void from_json(const json& j, EncoderConfig& c) {
  detail::FieldReader r(j, "model.encoder");
  r("feature_dim", c.feature_dim);
  r("num_layers", c.num_layers);
  r("model_dim", c.model_dim);
  r("num_heads", c.num_heads);
  r("ffn_dim", c.ffn_dim);
  r("conv1d_kernel", c.conv1d_kernel);
  r("subsample_layers", c.subsample_layers);
  r("subsample_kernel", c.subsample_kernel);
  r("subsample_stride", c.subsample_stride);
  r("subsample_channels", c.subsample_channels);
  std::string pm = c.position_mode == PositionMode::rotary ? "rotary" : "none";
  r("position_mode", pm);
  if (pm == "rotary") c.position_mode = PositionMode::rotary;
  else if (pm == "none") c.position_mode = PositionMode::none;
  else throw ConfigError("model.encoder.position_mode must be 'rotary' or 'none'");
  r("rope_base", c.rope_base);
  r.finish();
}

inline void to_json(json& j, const ModelConfig& c) {
  j = {{"kind", std::string(to_string(c.kind))},
       {"encoder", c.encoder},
       {"vocab_size", c.vocab_size},
       {"embed_dim", c.embed_dim},
       {"pred_dim", c.pred_dim},
       {"joint_dim", c.joint_dim},
       {"seed", c.seed}};
}
inline void from_json(const json& j, ModelConfig& c) {
  detail::FieldReader r(j, "model");
  std::string kind(to_string(c.kind));
  r("kind", kind);
  c.kind = parse_model_kind(kind);
  r("encoder", c.encoder);
  r("vocab_size", c.vocab_size);
  r("embed_dim", c.embed_dim);
  r("pred_dim", c.pred_dim);
  r("joint_dim", c.joint_dim);
  r("seed", c.seed);
  r.finish();
}

inline void to_json(json& j, const LabelSmoothingSpec& s) {
  j = {{"epsilon", s.epsilon}, {"prior", s.prior_mode == PriorMode::uniform ? "uniform" : "batch_counts"}};
}
inline void from_json(const json& j, LabelSmoothingSpec& s) {
  detail::FieldReader r(j, "train.label_smoothing");
  r("epsilon", s.epsilon);
  std::string prior = s.prior_mode == PriorMode::uniform ? "uniform" : "batch_counts";
  r("prior", prior);
  if (prior == "uniform") s.prior_mode = PriorMode::uniform;
  else if (prior == "batch_counts") s.prior_mode = PriorMode::batch_counts;
  else throw ConfigError("train.label_smoothing.prior must be 'uniform' or 'batch_counts'");
  r.finish();
}

inline void to_json(json& j, const AugmentConfig& a) {
  j = {{"concat_fraction", a.concat_fraction}, {"concat_max_frames", a.concat_max_frames},
       {"time_masks", a.time_masks},           {"time_width", a.time_width},
       {"freq_masks", a.freq_masks},           {"freq_width", a.freq_width},
       {"reverse", a.reverse}};
}
inline void from_json(const json& j, AugmentConfig& a) {
  detail::FieldReader r(j, "train.augment");
  r("concat_fraction", a.concat_fraction);
  r("concat_max_frames", a.concat_max_frames);
  r("time_masks", a.time_masks);
  r("time_width", a.time_width);
  r("freq_masks", a.freq_masks);
  r("freq_width", a.freq_width);
  r("reverse", a.reverse);
  r.finish();
}

inline void to_json(json& j, const TrainConfig& c) {
  j = {{"learning_rate_peak", c.learning_rate_peak},
       {"warmup_steps", c.warmup_steps},
       {"betas", {c.beta1, c.beta2}},
       {"adam_eps", c.adam_eps},
       {"grad_clip_norm", c.grad_clip_norm},
       {"l2_weight", c.l2_weight},
       {"batch_size", c.batch_size},
       {"total_steps", c.total_steps},
       {"label_smoothing", c.label_smoothing},
       {"variational_noise_std", c.variational_noise_std},
       {"variational_noise_start", c.variational_noise_start},
       {"ema_decay", c.ema_decay},
       {"seed", c.seed},
       {"augment", c.augment},
       {"log_every", c.log_every},
       {"checkpoint_every", c.checkpoint_every}};
}
inline void from_json(const json& j, TrainConfig& c) {
  detail::FieldReader r(j, "train");
  r("learning_rate_peak", c.learning_rate_peak);
  r("warmup_steps", c.warmup_steps);
  std::vector<double> betas{c.beta1, c.beta2};
  r("betas", betas);
  if (betas.size() != 2) throw ConfigError("train.betas must have two entries");
  c.beta1 = betas[0];
  c.beta2 = betas[1];
  r("adam_eps", c.adam_eps);
  r("grad_clip_norm", c.grad_clip_norm);
  r("l2_weight", c.l2_weight);
  r("batch_size", c.batch_size);
  r("total_steps", c.total_steps);
  r("label_smoothing", c.label_smoothing);
  r("variational_noise_std", c.variational_noise_std);
  r("variational_noise_start", c.variational_noise_start);
  r("ema_decay", c.ema_decay);
  r("seed", c.seed);
  r("augment", c.augment);
  r("log_every", c.log_every);
  r("checkpoint_every", c.checkpoint_every);
  r.finish();
}

inline void to_json(json& j, const BeamConfig& c) {
  j = {{"beam_size", c.beam_size},
       {"debias_gamma", c.debias_gamma},
       {"max_tokens", c.max_tokens},
       {"path_merging", c.path_merging},
       {"max_symbols_per_frame", c.max_symbols_per_frame},
       {"length_normalize", c.length_normalize}};
}
inline void from_json(const json& j, BeamConfig& c) {
  detail::FieldReader r(j, "decode");
  r("beam_size", c.beam_size);
  r("debias_gamma", c.debias_gamma);
  r("max_tokens", c.max_tokens);
  r("path_merging", c.path_merging);
  r("max_symbols_per_frame", c.max_symbols_per_frame);
  r("length_normalize", c.length_normalize);
  r.finish();
}

inline void to_json(json& j, const RunConfig& c) {
  j = {{"data", c.data},   {"model", c.model},
       {"train", c.train}, {"decode", c.decode},
       {"eval_utterances", c.eval_utterances}, {"eval_seed", c.eval_seed}};
}
inline void from_json(const json& j, RunConfig& c) {
  detail::FieldReader r(j, "config");
  r("data", c.data);
  r("model", c.model);
  r("train", c.train);
  r("decode", c.decode);
  r("eval_utterances", c.eval_utterances);
  r("eval_seed", c.eval_seed);
  r.finish();
}

// FNV-1a over the canonical JSON dump.
inline std::uint64_t config_fingerprint(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// The toy task every acceptance run starts from.
inline RunConfig default_run_config() {
  RunConfig c;
  c.data.subsample_factor = static_cast<int>(c.model.encoder.subsample_factor());
  return c;
}

}  // namespace alenc
