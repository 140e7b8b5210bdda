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
#include <set>
#include <string>
#include <vector>

#include "alenc/analysis/lattice.hpp"
#include "alenc/train/trainer.hpp"

namespace alenc {

struct ProbeItem {
  std::string id;
  LatticePosterior posterior;
  FrontAlignment front;
  double diagonal = 0;  // fraction of tokens emitted near their true center
};

struct ProbeResult {
  Model model;
  std::size_t frozen_layers = 0;
  std::set<std::string> frozen;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
  std::vector<ProbeItem> items;

  bool frozen_intact() const { return frozen_before == frozen_after; }

  double mean_front_fraction() const {
    if (items.empty()) return 0;
    double s = 0;
    for (const auto& i : items) s += i.front.fraction;
    return s / double(items.size());
  }
  double mean_diagonal() const {
    if (items.empty()) return 0;
    double s = 0;
    for (const auto& i : items) s += i.diagonal;
    return s / double(items.size());
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "frozen_layers: " << frozen_layers << "\nfrozen_intact: " << (frozen_intact() ? "true" : "false")
       << "\nutterances: " << items.size() << "\nfront_fraction: " << mean_front_fraction()
       << "\ndiagonal_fraction: " << mean_diagonal() << "\n";
    return os.str();
  }
};

// Posteriors of an RNN-T model on labelled utterances.
inline std::vector<ProbeItem> probe_posteriors(const Model& rnnt, const std::vector<Utterance>& data,
                                               std::size_t subsample_factor, double temperature = 1.0) {
  std::vector<ProbeItem> out;
  NoGradScope ng;
  for (const auto& u : data) {
    ProbeItem item;
    item.id = u.id;
    Tensor h = rnnt.encode(u.features).h;
    auto y = u.content_tokens();
    item.posterior = lattice_posterior(h, y, rnnt, temperature);
    item.front = front_alignment(item.posterior.emission);
    item.diagonal = u.boundaries.size() == y.size()
                        ? diagonal_alignment(item.posterior.emission, u.boundaries, subsample_factor)
                        : 0.0;
    out.push_back(std::move(item));
  }
  return out;
}

// Trains an RNN-T whose front end and first n_layers encoder layers are
// copied from `aligner` and frozen, then reports its lattice posteriors on
// `data`. The run config supplies data, optimizer and step count; its model
// section is replaced by the aligner's encoder with an RNN-T head.
// `on_step` sees each step's metrics.
inline ProbeResult probe_frozen_aligner(const Model& aligner, std::size_t n_layers, RunConfig cfg,
                                        const std::vector<Utterance>& data,
                                        const std::function<void(const StepMetrics&)>& on_step = {}) {
  const auto depth = aligner.encoder.layers.size();
  if (n_layers > depth)
    throw ConfigError(detail::concat("probe: n_layers=", n_layers, " exceeds encoder depth ", depth));
  cfg.model.kind = ModelKind::rnnt;
  cfg.model.encoder = aligner.config.encoder;
  cfg.model.vocab_size = aligner.config.vocab_size;
  cfg.check();

  Model probe = Model::init(cfg.model);
  ProbeResult r;
  r.frozen_layers = n_layers;
  if (n_layers > 0) {
    auto dst = probe.encoder.prefix_parameters(n_layers);
    dst.copy_values_from(aligner.encoder.prefix_parameters(n_layers));
    for (const auto& it : dst.items()) r.frozen.insert(it.name);
  }
  auto frozen_view = [&](const Model& m) { return n_layers > 0 ? m.encoder.prefix_parameters(n_layers) : ParameterSet{}; };
  r.frozen_before = frozen_view(probe).fingerprint();

  Trainer trainer(cfg, std::move(probe), r.frozen);
  for (long s = 0; s < cfg.train.total_steps; ++s) {
    auto m = trainer.step();
    if (on_step) on_step(m);
  }
  r.model = trainer.eval_model().clone();
  r.frozen_after = frozen_view(trainer.model()).fingerprint();
  r.items = probe_posteriors(r.model, data, static_cast<std::size_t>(cfg.data.subsample_factor));
  return r;
}

}  // namespace alenc
