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

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "alenc/train/evaluate.hpp"
#include "alenc/train/trainer.hpp"

namespace alenc {

// Run directory:
//   config.json        snapshot of the effective configuration
//   checkpoints/       step-N.alnc every checkpoint_every steps, final.alnc
//   metrics.ndjson     one {step, loss, lr, grad_norm} record per log_every
//   exports/           matrices and reports written by analysis commands
struct RunDir {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path final_checkpoint() const { return checkpoints() / "final.alnc"; }
  std::filesystem::path step_checkpoint(long step) const {
    return checkpoints() / ("step-" + std::to_string(step) + ".alnc");
  }
  std::filesystem::path metrics() const { return root / "metrics.ndjson"; }
  std::filesystem::path exports() const { return root / "exports"; }

  void create() const {
    std::error_code ec;
    for (const auto& d : {root, checkpoints(), exports()}) {
      std::filesystem::create_directories(d, ec);
      if (ec) throw IoError("cannot create directory " + d.string() + ": " + ec.message());
    }
  }
};

// Appends one JSON document per line; flushes after each record so a
// crashed run keeps everything logged so far.
class NdjsonWriter {
 public:
  NdjsonWriter(const std::filesystem::path& path, bool append = false)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed");
  }

 private:
  std::ofstream out_;
};

inline json decode_record(const std::string& id, const DecodeResult& d) {
  return {{"id", id},
          {"tokens", d.tokens},
          {"log_prob", d.log_prob},
          {"unterminated", d.unterminated},
          {"joint_evaluations", d.joint_evaluations}};
}

inline json error_report_record(const ErrorReport& r) {
  return {{"utterances", r.utterances},       {"ter", r.ter()},
          {"substitutions", r.counts.substitutions}, {"insertions", r.counts.insertions},
          {"deletions", r.counts.deletions},   {"reference_tokens", r.counts.reference_length},
          {"unterminated", r.unterminated},    {"joint_evaluations", r.joint_evaluations}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.check();
  return c;
}

inline void save_run_config(const std::filesystem::path& path, const RunConfig& c) {
  detail::write_file(path, json(c).dump(2) + "\n");
}

// Trains from scratch (or from `resume`, a checkpoint written under the
// same config) into `dir`. Returns the final checkpoint.
inline Checkpoint train_run(const RunConfig& cfg, const RunDir& dir, const std::filesystem::path& resume = {},
                            const std::function<void(const StepMetrics&)>& on_step = {}) {
  cfg.check();
  dir.create();
  save_run_config(dir.config(), cfg);
  Trainer trainer(cfg);
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  NdjsonWriter metrics(dir.metrics(), !resume.empty());
  const auto& tc = cfg.train;
  while (trainer.step_count() < tc.total_steps) {
    StepMetrics m = trainer.step();
    if (tc.log_every > 0 && (m.step % tc.log_every == 0 || m.step == tc.total_steps)) metrics.write(metrics_record(m));
    if (on_step) on_step(m);
    if (tc.checkpoint_every > 0 && m.step % tc.checkpoint_every == 0 && m.step < tc.total_steps)
      save_checkpoint(dir.step_checkpoint(m.step), trainer.checkpoint());
  }
  Checkpoint last = trainer.checkpoint();
  save_checkpoint(dir.final_checkpoint(), last);
  return last;
}

// Held-out set for a run: fresh utterances from the run's data config,
// time-reversed when the run trains on reversed audio.
inline std::vector<Utterance> held_out_set(const RunConfig& cfg) {
  auto data = generate_dataset(cfg.data, static_cast<std::size_t>(cfg.eval_utterances), cfg.eval_seed, "test");
  if (cfg.train.augment.reverse)
    for (auto& u : data) u = reverse_audio(u);
  return data;
}

}  // namespace alenc
