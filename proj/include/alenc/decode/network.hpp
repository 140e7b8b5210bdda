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

#include <concepts>
#include <cstddef>
#include <functional>
#include <vector>

#include "alenc/model/model.hpp"

namespace alenc {

// What a step decoder needs from a model: frame count, a prediction state
// that advances on emitted tokens, and one joint evaluation per call to
// log_probs. Decoders are templates over this so scripted networks can stand
// in for trained ones and the evaluation counter can be asserted exactly.
template <typename N>
concept TransducerNetwork = requires(N& n, const N& cn, const typename N::State& s, std::size_t t, int tok) {
  typename N::State;
  { cn.num_frames() } -> std::convertible_to<std::size_t>;
  { cn.num_outputs() } -> std::convertible_to<std::size_t>;
  { n.initial() } -> std::same_as<typename N::State>;
  { n.advance(s, tok) } -> std::same_as<typename N::State>;
  { n.log_probs(t, s) } -> std::same_as<std::vector<Real>>;
  { cn.evaluations() } -> std::convertible_to<std::size_t>;
};

// Decoding view over a model's encoder output. Runs without recording.
class ModelNetwork {
 public:
  using State = PredictionState;

  ModelNetwork(const Model& model, Tensor h) : model_(&model), h_(std::move(h)) {
    if (!model.config.has_prediction())
      throw ContractError(std::string(to_string(model.config.kind)) + " has no prediction network to step");
  }

  std::size_t num_frames() const { return h_.rows(); }
  std::size_t num_outputs() const { return model_->config.num_outputs(); }
  const Tensor& frames() const { return h_; }

  State initial() {
    NoGradScope ng;
    return prediction_start(model_->prediction);
  }

  State advance(const State& s, int token) {
    NoGradScope ng;
    return prediction_step(model_->prediction, s, token);
  }

  std::vector<Real> log_probs(std::size_t t, const State& s) {
    NoGradScope ng;
    ++evaluations_;
    Tensor lp = log_softmax_rows(joint(slice_rows(h_, t, t + 1), s.hidden, model_->joint));
    return {lp.values().begin(), lp.values().end()};
  }

  std::size_t evaluations() const { return evaluations_; }

 private:
  const Model* model_;
  Tensor h_;
  std::size_t evaluations_ = 0;
};

// Network whose output at (frame, state) comes from a caller-supplied
// function. The state is the emitted token history.
class ScriptedNetwork {
 public:
  using State = std::vector<int>;
  using Script = std::function<std::vector<Real>(std::size_t frame, const State& history)>;

  ScriptedNetwork(std::size_t frames, std::size_t outputs, Script script)
      : frames_(frames), outputs_(outputs), script_(std::move(script)) {}

  std::size_t num_frames() const { return frames_; }
  std::size_t num_outputs() const { return outputs_; }
  State initial() { return {}; }
  State advance(const State& s, int token) {
    State n = s;
    n.push_back(token);
    return n;
  }
  std::vector<Real> log_probs(std::size_t t, const State& s) {
    ++evaluations_;
    evaluated_frames_.push_back(t);
    auto v = script_(t, s);
    if (v.size() != outputs_) throw DimensionError("scripted network returned wrong width");
    return v;
  }
  std::size_t evaluations() const { return evaluations_; }
  const std::vector<std::size_t>& evaluated_frames() const { return evaluated_frames_; }

 private:
  std::size_t frames_, outputs_;
  Script script_;
  std::size_t evaluations_ = 0;
  std::vector<std::size_t> evaluated_frames_;
};

// Log-distribution putting almost all mass on `winner`.
inline std::vector<Real> peaked_log_probs(std::size_t outputs, std::size_t winner, Real margin = Real(20)) {
  std::vector<Real> logits(outputs, Real(0));
  logits[winner] = margin;
  Real m = margin, s = 0;
  for (Real l : logits) s += std::exp(l - m);
  for (auto& l : logits) l = l - m - std::log(s);
  return logits;
}

}  // namespace alenc
