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

#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "alenc/train/checkpoint.hpp"
#include "alenc/train/config.hpp"
#include "alenc/train/optim.hpp"

namespace alenc {

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& what, std::string batch) : std::runtime_error(what), batch_id(std::move(batch)) {}
  std::string batch_id;
};

struct StepMetrics {
  long step = 0;
  double loss = 0;  // data loss per label token
  double lr = 0;
  double grad_norm = 0;  // before clipping
  std::size_t tokens = 0;
  double seconds = 0;
};

inline json metrics_record(const StepMetrics& m) {
  return {{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"grad_norm", m.grad_norm}};
}

// Parameters whose names start with one of `prefixes`.
inline std::set<std::string> names_with_prefix(const ParameterSet& ps, const std::vector<std::string>& prefixes) {
  std::set<std::string> out;
  for (const auto& it : ps.items())
    for (const auto& p : prefixes)
      if (it.name.rfind(p, 0) == 0) out.insert(it.name);
  return out;
}

// One deterministic training stream. Step s: draw a batch, concatenate and
// mask it, add variational noise, accumulate per-utterance gradients, add
// the L2 term, clip, take an Adam step at lr(s), update the EMA shadow.
class Trainer {
 public:
  Trainer(RunConfig cfg, Model model, std::set<std::string> frozen = {})
      : cfg_(std::move(cfg)), model_(std::move(model)), frozen_(std::move(frozen)) {
    cfg_.check();
    if (model_.config.kind != cfg_.model.kind) throw ConfigError("model kind differs from run config");
    auto all = model_.parameters();
    for (auto& it : all.items()) {
      const bool frozen_param = frozen_.count(it.name) > 0;
      it.tensor.set_requires_grad(!frozen_param);
      if (!frozen_param) trainable_.add(it.name, it.tensor);
    }
    for (const auto& name : frozen_)
      if (!all.find(name)) throw ConfigError("frozen parameter " + name + " does not exist");
    ema_ = model_.clone();
    adam_.init(trainable_);
    data_rng_ = Rng(cfg_.train.seed);
    aug_rng_ = Rng(cfg_.train.seed ^ 0xA5A5A5A5ULL);
    noise_rng_ = Rng(cfg_.train.seed ^ 0x5EED5EEDULL);
    if (model_.config.has_prediction() && cfg_.train.variational_noise_std > 0)
      for (const auto& it : trainable_.items())
        if (it.name.rfind("prediction.", 0) == 0) noisy_.add(it.name, it.tensor);
    fingerprint_ = config_fingerprint(json(cfg_));
  }

  explicit Trainer(RunConfig cfg) : Trainer(cfg, Model::init(cfg.model)) {}

  const RunConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const Model& ema_model() const { return ema_; }
  // Parameters used for evaluation: the EMA shadow when enabled.
  const Model& eval_model() const { return cfg_.train.ema_decay > 0 ? ema_ : model_; }
  const ParameterSet& trainable() const { return trainable_; }
  long step_count() const { return step_; }

  Batch sample_batch(long step) {
    Batch b;
    for (int i = 0; i < cfg_.train.batch_size; ++i) {
      Utterance u = sample_utterance(cfg_.data, data_rng_);
      if (cfg_.train.augment.reverse) u = reverse_audio(u);
      u.id = "train-" + std::to_string(step) + "-" + std::to_string(i);
      b.utterances.push_back(std::move(u));
    }
    return b;
  }

  StepMetrics step() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& tc = cfg_.train;
    const long s = step_ + 1;
    Batch batch = sample_batch(s);
    const auto& aug = tc.augment;
    if (aug.concat_fraction > 0) {
      const auto cap = static_cast<std::size_t>(aug.concat_max_frames > 0 ? aug.concat_max_frames : cfg_.data.max_frames);
      batch = concat_augment(batch, aug.concat_fraction, cap, aug_rng_);
    }
    if (aug.time_masks > 0 || aug.freq_masks > 0)
      for (auto& u : batch.utterances) {
        const int tw = std::min<int>(aug.time_width, static_cast<int>(u.num_frames()));
        u.features = spec_augment(u.features, aug.time_masks, tw, aug.freq_masks, aug.freq_width, aug_rng_);
      }
    const auto V = static_cast<std::size_t>(cfg_.model.vocab_size);
    const std::vector<Real> prior = tc.label_smoothing.prior_mode == PriorMode::batch_counts
                                        ? batch_prior_estimate(batch, V)
                                        : uniform_prior(V);
    trainable_.zero_grad();
    const auto noise = add_variational_noise(s);
    double total = 0;
    std::size_t tokens = 0;
    const Real inv_b = Real(1) / static_cast<Real>(batch.size());
    for (const auto& u : batch.utterances) {
      Graph g;
      GradScope scope(g);
      Tensor h = model_.encode(u.features).h;
      Tensor loss = model_.loss(h, u.tokens, tc.label_smoothing, prior);
      if (!std::isfinite(loss.item())) {
        remove_variational_noise(noise);
        std::string ids;
        for (const auto& b : batch.utterances) ids += (ids.empty() ? "" : ",") + b.id;
        throw TrainingDiverged(detail::concat("non-finite loss at step ", s, " on utterance ", u.id, " (T=",
                                              u.num_frames(), ", U=", u.num_tokens(), "); batch: ", ids),
                               "step-" + std::to_string(s));
      }
      g.backward(scale(loss, inv_b));
      total += loss.item();
      tokens += u.num_tokens();
    }
    remove_variational_noise(noise);
    if (tc.l2_weight > 0)
      for (auto& it : trainable_.items()) {
        auto g = it.tensor.mutable_grad();
        auto v = it.tensor.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<Real>(2 * tc.l2_weight * v[i]);
      }
    StepMetrics m;
    m.step = s;
    m.loss = total / static_cast<double>(tokens);
    m.tokens = tokens;
    m.grad_norm = clip_grad_norm(trainable_, tc.grad_clip_norm);
    m.lr = lr_schedule(s, tc.learning_rate_peak, tc.warmup_steps);
    adam_step(trainable_, adam_, m.lr, tc.beta1, tc.beta2, tc.adam_eps);
    update_ema();
    step_ = s;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.step = static_cast<std::uint64_t>(step_);
    c.config_json = json(cfg_).dump();
    c.config_fingerprint = fingerprint_;
    c.adam_t = static_cast<std::uint64_t>(adam_.t);
    c.rng_states = {{"data", data_rng_.state()}, {"augment", aug_rng_.state()}, {"noise", noise_rng_.state()}};
    c.add("param/", model_.parameters());
    c.add("ema/", ema_.parameters());
    for (std::size_t k = 0; k < trainable_.size(); ++k) {
      const auto& it = trainable_.items()[k];
      c.add("adam.m/" + it.name, it.tensor.shape(), adam_.m[k]);
      c.add("adam.v/" + it.name, it.tensor.shape(), adam_.v[k]);
    }
    return c;
  }

  void restore(const Checkpoint& c) {
    if (c.config_fingerprint != fingerprint_)
      throw ValidationError("checkpoint was written under a different configuration");
    auto params = model_.parameters();
    c.restore("param/", params);
    auto shadow = ema_.parameters();
    c.restore("ema/", shadow);
    for (std::size_t k = 0; k < trainable_.size(); ++k) {
      const auto& name = trainable_.items()[k].name;
      for (auto [prefix, dst] : {std::pair{"adam.m/", &adam_.m[k]}, std::pair{"adam.v/", &adam_.v[k]}}) {
        const TensorBlob* b = c.find(prefix + name);
        if (!b || b->values.size() != dst->size()) throw ValidationError("checkpoint lacks optimizer state for " + name);
        for (std::size_t i = 0; i < dst->size(); ++i) (*dst)[i] = static_cast<Real>(b->values[i]);
      }
    }
    adam_.t = static_cast<long>(c.adam_t);
    step_ = static_cast<long>(c.step);
    data_rng_.set_state(c.rng_states.at("data"));
    aug_rng_.set_state(c.rng_states.at("augment"));
    noise_rng_.set_state(c.rng_states.at("noise"));
  }

 private:
  std::vector<std::vector<Real>> add_variational_noise(long s) {
    std::vector<std::vector<Real>> added;
    const auto& tc = cfg_.train;
    if (noisy_.size() == 0 || s <= tc.variational_noise_start) return added;
    for (auto& it : noisy_.items()) {
      auto v = it.tensor.mutable_values();
      added.emplace_back(v.begin(), v.end());
      for (auto& x : v) x += static_cast<Real>(noise_rng_.normal(0.0, tc.variational_noise_std));
    }
    return added;
  }

  // Restores the saved clean values, so noise leaves no rounding residue.
  void remove_variational_noise(const std::vector<std::vector<Real>>& clean) {
    for (std::size_t k = 0; k < clean.size(); ++k)
      std::copy(clean[k].begin(), clean[k].end(), noisy_.items()[k].tensor.mutable_values().begin());
  }

  void update_ema() {
    const double d = cfg_.train.ema_decay;
    auto src = model_.parameters();
    auto dst = ema_.parameters();
    for (std::size_t k = 0; k < src.size(); ++k) {
      if (frozen_.count(src.items()[k].name)) continue;
      auto s = src.items()[k].tensor.values();
      auto e = dst.items()[k].tensor.mutable_values();
      for (std::size_t i = 0; i < s.size(); ++i) e[i] = static_cast<Real>(d * e[i] + (1 - d) * s[i]);
    }
  }

  RunConfig cfg_;
  Model model_;
  Model ema_;
  std::set<std::string> frozen_;
  ParameterSet trainable_;
  ParameterSet noisy_;
  AdamMoments adam_;
  Rng data_rng_, aug_rng_, noise_rng_;
  std::uint64_t fingerprint_ = 0;
  long step_ = 0;
};

// Rebuilds a model from a checkpoint's config and parameter blobs.
inline Model load_model(const Checkpoint& c, bool use_ema = true) {
  RunConfig cfg = json::parse(c.config_json).get<RunConfig>();
  Model m = Model::init(cfg.model);
  auto ps = m.parameters();
  c.restore(use_ema && cfg.train.ema_decay > 0 ? "ema/" : "param/", ps);
  return m;
}

inline RunConfig checkpoint_config(const Checkpoint& c) { return json::parse(c.config_json).get<RunConfig>(); }

}  // namespace alenc
