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
#include <string>
#include <string_view>

#include "alenc/model/encoder.hpp"
#include "alenc/model/losses.hpp"
#include "alenc/model/transducer.hpp"

namespace alenc {

enum class ModelKind { aligner, nonar_aligner, rnnt, ctc };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::aligner: return "aligner";
    case ModelKind::nonar_aligner: return "nonar_aligner";
    case ModelKind::rnnt: return "rnnt";
    case ModelKind::ctc: return "ctc";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "aligner") return ModelKind::aligner;
  if (s == "nonar_aligner" || s == "nonar") return ModelKind::nonar_aligner;
  if (s == "rnnt") return ModelKind::rnnt;
  if (s == "ctc") return ModelKind::ctc;
  throw ConfigError("unknown model kind '" + std::string(s) + "' (aligner, nonar_aligner, rnnt, ctc)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::aligner;
  EncoderConfig encoder;
  int vocab_size = 32;  // V, including <SOS> and <EOS>
  int embed_dim = 32;
  int pred_dim = 64;
  int joint_dim = 64;
  std::uint64_t seed = 1;

  bool has_prediction() const { return kind == ModelKind::aligner || kind == ModelKind::rnnt; }
  bool has_blank() const { return kind == ModelKind::rnnt || kind == ModelKind::ctc; }
  // Output width of the head: V, or V+1 with the blank appended last.
  std::size_t num_outputs() const { return static_cast<std::size_t>(vocab_size) + (has_blank() ? 1 : 0); }
  std::size_t blank() const {
    if (!has_blank()) throw ContractError(std::string(to_string(kind)) + " has no blank output");
    return static_cast<std::size_t>(vocab_size);
  }

  void check() const {
    encoder.check();
    if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3");
    if (embed_dim < 1 || pred_dim < 1 || joint_dim < 1) throw ConfigError("decoder widths must be positive");
  }
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  PredictionParams prediction;     // aligner, rnnt
  JointParams joint;               // aligner, rnnt
  FrameClassifierParams classifier;  // nonar_aligner, ctc

  static Model init(const ModelConfig& cfg) {
    cfg.check();
    Model m;
    m.config = cfg;
    Rng rng(cfg.seed);
    m.encoder = EncoderParams::make(cfg.encoder, rng);
    const auto d = static_cast<std::size_t>(cfg.encoder.model_dim);
    const auto J = static_cast<std::size_t>(cfg.joint_dim);
    if (cfg.has_prediction()) {
      const auto H = static_cast<std::size_t>(cfg.pred_dim);
      m.prediction = PredictionParams::make(static_cast<std::size_t>(cfg.vocab_size),
                                            static_cast<std::size_t>(cfg.embed_dim), H, rng);
      m.joint = JointParams::make(d, H, J, cfg.num_outputs(), rng);
    } else {
      m.classifier = FrameClassifierParams::make(d, J, cfg.num_outputs(), rng);
    }
    return m;
  }

  // Deep copy: fresh storage, same values.
  Model clone() const {
    Model m = init(config);
    auto dst = m.parameters();
    dst.copy_values_from(parameters());
    return m;
  }

  ParameterSet parameters() const {
    ParameterSet ps;
    encoder.collect(ps, "encoder");
    if (config.has_prediction()) {
      prediction.collect(ps, "prediction");
      joint.collect(ps, "joint");
    } else {
      classifier.collect(ps, "classifier");
    }
    return ps;
  }

  EncoderOutput encode(const Tensor& features, bool record_attention = false) const {
    return alenc::encode(features, config.encoder, encoder, record_attention);
  }

  // Per-utterance training loss given encoder output. `tokens` is the full
  // label ending in <EOS>; blank-based heads drop the <EOS>.
  Tensor loss(const Tensor& h, std::span<const int> tokens, const LabelSmoothingSpec& smoothing,
              std::span<const Real> prior = {}) const {
    switch (config.kind) {
      case ModelKind::aligner: return aligner_loss(h, tokens, prediction, joint, smoothing, prior);
      case ModelKind::nonar_aligner: return nonar_loss(h, tokens, classifier, smoothing, prior);
      case ModelKind::rnnt: return rnnt_loss(h, strip_eos(tokens), prediction, joint);
      case ModelKind::ctc: return ctc_loss(frame_logits(h, classifier), strip_eos(tokens));
    }
    throw ContractError("unhandled model kind");
  }

  static std::span<const int> strip_eos(std::span<const int> tokens) {
    if (!tokens.empty() && tokens.back() == kEos) return tokens.first(tokens.size() - 1);
    return tokens;
  }
};

}  // namespace alenc
