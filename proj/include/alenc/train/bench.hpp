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
#include <chrono>
#include <sstream>
#include <tuple>
#include <utility>
#include <vector>

#include "alenc/decode/decoders.hpp"
#include "alenc/decode/network.hpp"

namespace alenc {

struct BenchInvalid : ValidationError {
  using ValidationError::ValidationError;
};

// A real prediction + joint network run at every step, with its output
// replaced by a scripted distribution. Each joint evaluation is charged one
// full decode step (LSTM + joint), as in batched beam decoding where the
// prediction network runs on every step; advancing on a token also steps the
// LSTM. Both decoders pay the same per-step cost, so wall-clock follows the
// counts.
class BenchNetwork {
 public:
  struct State {
    PredictionState pred;
    int last = kSos;
    std::size_t emitted = 0;
  };
  using Script = std::function<std::size_t(std::size_t frame, std::size_t emitted)>;

  BenchNetwork(const Model& model, Tensor h, Script script)
      : model_(&model), h_(std::move(h)), script_(std::move(script)) {}

  std::size_t num_frames() const { return h_.rows(); }
  std::size_t num_outputs() const { return model_->config.num_outputs(); }

  State initial() {
    NoGradScope ng;
    return {prediction_start(model_->prediction), kSos, 0};
  }
  State advance(const State& s, int token) {
    NoGradScope ng;
    return {prediction_step(model_->prediction, s.pred, token), token, s.emitted + 1};
  }
  std::vector<Real> log_probs(std::size_t t, const State& s) {
    NoGradScope ng;
    ++evaluations_;
    const PredictionState step = prediction_step(model_->prediction, s.pred, s.last);
    Tensor lp = log_softmax_rows(joint(slice_rows(h_, t, t + 1), step.hidden, model_->joint));
    checksum_ += lp.values()[0] + step.hidden.values()[0];
    return peaked_log_probs(num_outputs(), script_(t, s.emitted));
  }
  std::size_t evaluations() const { return evaluations_; }
  double checksum() const { return checksum_; }

 private:
  const Model* model_;
  Tensor h_;
  Script script_;
  std::size_t evaluations_ = 0;
  double checksum_ = 0;
};

struct BenchSpec {
  std::size_t frames = 300;  // T' (post-subsample)
  std::size_t tokens = 100;  // U_target; the Aligner's count includes <EOS>
  int repeats = 11;
  int warmup = 2;
  BeamConfig beam;
  ModelConfig model;  // sizes of the networks stepped per evaluation; kind is ignored
};

struct BenchReport {
  std::size_t frames = 0, tokens = 0;
  std::size_t aligner_evaluations = 0, rnnt_evaluations = 0;
  double aligner_seconds = 0, rnnt_seconds = 0;  // medians over timed repeats
  double encode_seconds = 0;

  double count_ratio() const { return aligner_evaluations ? double(rnnt_evaluations) / double(aligner_evaluations) : 0; }
  double time_ratio() const { return aligner_seconds > 0 ? rnnt_seconds / aligner_seconds : 0; }

  std::string to_text() const {
    std::ostringstream os;
    os << "frames: " << frames << "\ntokens: " << tokens << "\naligner_evaluations: " << aligner_evaluations
       << "\nrnnt_evaluations: " << rnnt_evaluations << "\ncount_ratio: " << count_ratio()
       << "\naligner_ms: " << aligner_seconds * 1e3 << "\nrnnt_ms: " << rnnt_seconds * 1e3
       << "\ntime_ratio: " << time_ratio() << "\nencode_ms: " << encode_seconds * 1e3 << "\n";
    return os.str();
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double seconds_of(F&& run) {
  const auto t0 = std::chrono::steady_clock::now();
  run();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
double timed_median(int warmup, int repeats, F&& run) {
  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> times;
  for (int i = 0; i < repeats; ++i) times.push_back(seconds_of(run));
  return median(std::move(times));
}

// Alternates the two loops within each repeat so load spikes hit both.
template <typename F, typename G>
std::pair<double, double> timed_medians(int warmup, int repeats, F&& a, G&& b) {
  for (int i = 0; i < warmup; ++i) a(), b();
  std::vector<double> ta, tb;
  for (int i = 0; i < repeats; ++i) {
    ta.push_back(seconds_of(a));
    tb.push_back(seconds_of(b));
  }
  return {median(std::move(ta)), median(std::move(tb))};
}

}  // namespace detail

// Scripted decode of T' frames into U_target tokens. The Aligner emits
// U_target-1 content tokens then <EOS> (one evaluation each; U_target = 0
// means immediate <EOS>); RNN-T emits U_target content tokens spread evenly
// over the frames plus one blank per frame. With beam 1 the counts must be
// exactly max(U_target, 1) and T' + U_target, otherwise BenchInvalid.
inline BenchReport bench_decoders(const BenchSpec& spec) {
  if (spec.frames == 0) throw ConfigError("bench: frames must be positive");
  if (spec.repeats < 1 || spec.warmup < 0) throw ConfigError("bench: repeats must be >= 1 and warmup >= 0");
  spec.beam.check();
  const std::size_t T = spec.frames, U = spec.tokens;
  if (U > T) throw ConfigError(detail::concat("bench: U_target=", U, " exceeds T'=", T));
  const auto per_frame = static_cast<std::size_t>(spec.beam.max_symbols_per_frame);
  if (U > T * per_frame) throw ConfigError("bench: U_target does not fit under max_symbols_per_frame");

  ModelConfig ac = spec.model, rc = spec.model;
  ac.kind = ModelKind::aligner;
  rc.kind = ModelKind::rnnt;
  const Model aligner = Model::init(ac), rnnt = Model::init(rc);
  Rng rng(spec.model.seed);
  const Tensor h = random_normal({T, static_cast<std::size_t>(spec.model.encoder.model_dim)}, rng, 1.0);
  const int content = kFirstContentToken;
  const auto blank = rc.blank();

  auto aligner_script = [&](std::size_t, std::size_t emitted) -> std::size_t {
    return emitted + 1 < std::max<std::size_t>(U, 1) ? static_cast<std::size_t>(content) : static_cast<std::size_t>(kEos);
  };
  // Token i is due at frame floor(i*T/U).
  auto rnnt_script = [&](std::size_t t, std::size_t emitted) -> std::size_t {
    return emitted < U && emitted * T / U <= t ? static_cast<std::size_t>(content) : blank;
  };

  BenchReport r;
  r.frames = T;
  r.tokens = U;
  auto run_aligner = [&] {
    BenchNetwork net(aligner, h, aligner_script);
    auto d = spec.beam.beam_size == 1 ? aligner_greedy_decode(net, spec.beam.max_tokens) : aligner_beam_decode(net, spec.beam);
    r.aligner_evaluations = d.joint_evaluations;
    if (spec.beam.beam_size == 1 && (d.tokens.size() + 1 != std::max<std::size_t>(U, 1) || d.unterminated))
      throw BenchInvalid(detail::concat("bench invalid: aligner emitted ", d.tokens.size(), " tokens"));
  };
  auto run_rnnt = [&] {
    BenchNetwork net(rnnt, h, rnnt_script);
    auto d = spec.beam.beam_size == 1 ? rnnt_greedy_decode(net, spec.beam.max_symbols_per_frame)
                                      : rnnt_beam_decode(net, spec.beam);
    r.rnnt_evaluations = d.joint_evaluations;
    if (spec.beam.beam_size == 1 && d.tokens.size() != U)
      throw BenchInvalid(detail::concat("bench invalid: rnnt emitted ", d.tokens.size(), " tokens, expected ", U));
  };
  std::tie(r.aligner_seconds, r.rnnt_seconds) = detail::timed_medians(spec.warmup, spec.repeats, run_aligner, run_rnnt);
  if (spec.beam.beam_size == 1) {
    if (r.aligner_evaluations != std::max<std::size_t>(U, 1))
      throw BenchInvalid(detail::concat("bench invalid: aligner made ", r.aligner_evaluations, " joint evaluations"));
    if (r.rnnt_evaluations != T + U)
      throw BenchInvalid(detail::concat("bench invalid: rnnt made ", r.rnnt_evaluations, " joint evaluations"));
  }

  const auto factor = static_cast<std::size_t>(spec.model.encoder.subsample_stride);
  std::size_t in_frames = T;
  for (int i = 0; i < spec.model.encoder.subsample_layers; ++i) in_frames *= factor;
  const Tensor feats = random_normal({in_frames, static_cast<std::size_t>(spec.model.encoder.feature_dim)}, rng, 1.0);
  r.encode_seconds = detail::timed_median(spec.warmup, spec.repeats, [&] {
    NoGradScope ng;
    (void)aligner.encode(feats);
  });
  return r;
}

}  // namespace alenc
