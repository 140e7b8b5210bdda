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

// alenc command-line front end.
//
// Exit codes: 0 success, 1 usage error (bad flags, unreadable or invalid
// config), 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "alenc/analysis/export.hpp"
#include "alenc/analysis/probe.hpp"
#include "alenc/train/bench.hpp"
#include "alenc/train/run.hpp"

namespace {

using namespace alenc;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config file (or the built-in toy config) plus flag overrides.
struct ConfigFlags {
  std::string path;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<std::string> kind;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "JSON run config (defaults to the built-in toy task)");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--steps", steps, "total training steps");
    app->add_option("--batch-size", batch, "utterances per step");
    app->add_option("--lr", lr, "peak learning rate");
    app->add_option("--model-kind", kind, "aligner, nonar_aligner, rnnt or ctc");
  }

  RunConfig resolve() const {
    RunConfig c;
    try {
      c = path.empty() ? default_run_config() : load_run_config(path);
    } catch (const IoError& e) {
      throw UsageError(e.what());
    } catch (const ConfigError& e) {
      throw UsageError(std::string("invalid config ") + path + ": " + e.what());
    }
    if (seed) c.train.seed = *seed;
    if (steps) c.train.total_steps = *steps;
    if (batch) c.train.batch_size = *batch;
    if (lr) c.train.learning_rate_peak = *lr;
    try {
      if (kind) c.model.kind = parse_model_kind(*kind);
      c.check();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct DecodeFlags {
  int beam = 0;
  double gamma = -1;
  int max_tokens = -1;

  void attach(CLI::App* app) {
    app->add_option("--beam", beam, "beam size (default: from the run config)");
    app->add_option("--debias-gamma", gamma, "posterior debiasing gamma; 0 disables");
    app->add_option("--max-tokens", max_tokens, "cap on emitted tokens; 0 for none");
  }
  BeamConfig apply(BeamConfig c) const {
    if (beam > 0) c.beam_size = beam;
    if (gamma >= 0) c.debias_gamma = gamma;
    if (max_tokens >= 0) c.max_tokens = max_tokens;
    c.check();
    return c;
  }
};

struct ModelFlags {
  std::string checkpoint;
  bool raw = false;

  void attach(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    app->add_flag("--raw", raw, "use raw parameters instead of the EMA shadow");
  }
  std::pair<Model, RunConfig> load() const {
    if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
    auto ck = load_checkpoint(checkpoint);
    return {load_model(ck, !raw), checkpoint_config(ck)};
  }
};

std::vector<Utterance> dataset_or_held_out(const std::string& manifest, const RunConfig& cfg) {
  if (manifest.empty()) return held_out_set(cfg);
  if (!fs::exists(manifest)) throw UsageError("manifest not found: " + manifest);
  return load_manifest(manifest);
}

const Utterance& find_utterance(const std::vector<Utterance>& data, const std::string& id) {
  if (id.empty()) return data.front();
  for (const auto& u : data)
    if (u.id == id) return u;
  throw UsageError("no utterance with id '" + id + "'");
}

std::string format_suffix(MatrixFormat f) { return f == MatrixFormat::csv ? ".csv" : ".alnm"; }

int run(int argc, char** argv) {
  CLI::App app{"Aligner-Encoder toolkit: synthetic data, training, decoding and alignment analysis"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as utterance files plus a manifest");
  ConfigFlags gen_cfg;
  gen_cfg.attach(gen);
  std::string gen_out;
  std::size_t gen_count = 100;
  std::uint64_t gen_data_seed = 0;
  bool gen_reverse = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of utterances");
  gen->add_option("--data-seed", gen_data_seed, "generation seed (default: the config's eval_seed)");
  gen->add_flag("--reverse", gen_reverse, "time-reverse the features");

  // train
  auto* train = app.add_subcommand("train", "train a model into a run directory");
  ConfigFlags train_cfg;
  train_cfg.attach(train);
  std::string train_dir, train_resume;
  bool quiet = false;
  train->add_option("--run-dir", train_dir, "run directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_flag("--quiet", quiet, "no per-step progress on stderr");

  // eval
  auto* eval = app.add_subcommand("eval", "token error rate on a manifest or the run's held-out set");
  ModelFlags eval_model;
  eval_model.attach(eval);
  DecodeFlags eval_dec;
  eval_dec.attach(eval);
  std::string eval_manifest, eval_policy = "carry";
  std::size_t eval_chunk = 0, eval_segment = 0;
  eval->add_option("--manifest", eval_manifest, "utterance manifest");
  eval->add_option("--chunk-frames", eval_chunk, "chunked long-form decoding with this many encoder frames per chunk");
  eval->add_option("--policy", eval_policy, "chunk boundary policy: carry, reset, reset_prime(k)");
  eval->add_option("--blind-segment", eval_segment, "baseline: cut input features every N frames");

  // decode
  auto* decode = app.add_subcommand("decode", "transcribe utterances; one JSON record per line");
  ModelFlags dec_model;
  dec_model.attach(decode);
  DecodeFlags dec_flags;
  dec_flags.attach(decode);
  std::string dec_manifest, dec_out;
  decode->add_option("--manifest", dec_manifest, "utterance manifest (default: held-out set)");
  decode->add_option("--out", dec_out, "output file (default: stdout)");

  // align
  auto* align = app.add_subcommand("align", "export attention matrices and the extracted alignment path");
  ModelFlags al_model;
  al_model.attach(align);
  std::string al_manifest, al_utt, al_layer = "auto", al_format = "csv", al_dir;
  align->add_option("--manifest", al_manifest, "utterance manifest (default: held-out set)");
  align->add_option("--utt", al_utt, "utterance id (default: first)");
  align->add_option("--layer", al_layer, "layer index or 'auto'");
  align->add_option("--format", al_format, "csv or alnm");
  align->add_option("--out-dir", al_dir, "export directory (default: <checkpoint dir>/../exports)");

  // probe
  auto* probe = app.add_subcommand("probe", "train an RNN-T on frozen aligner layers and export its posteriors");
  ModelFlags pr_model;
  pr_model.attach(probe);
  ConfigFlags pr_cfg;
  pr_cfg.attach(probe);
  std::size_t pr_layers = 0, pr_count = 20;
  double pr_temp = 1.0;
  std::string pr_format = "csv", pr_dir, pr_manifest;
  probe->add_option("--layers", pr_layers, "number of frozen aligner layers")->required();
  probe->add_option("--utterances", pr_count, "held-out utterances to report on");
  probe->add_option("--manifest", pr_manifest, "report on these utterances instead of the held-out set");
  probe->add_option("--temperature", pr_temp, "posterior temperature for exported matrices");
  probe->add_option("--format", pr_format, "csv or alnm");
  probe->add_option("--run-dir", pr_dir, "run directory for the probe")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "count joint evaluations and time the decode loops");
  BenchSpec spec;
  bench->add_option("--frames", spec.frames, "encoder frames T'");
  bench->add_option("--tokens", spec.tokens, "target length U (aligner count includes <EOS>)");
  bench->add_option("--repeats", spec.repeats, "timed repeats");
  bench->add_option("--warmup", spec.warmup, "discarded warmup runs");
  bench->add_option("--beam", spec.beam.beam_size, "beam size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    RunConfig c = gen_cfg.resolve();
    fs::create_directories(gen_out);
    auto data = generate_dataset(c.data, gen_count, gen->count("--data-seed") ? gen_data_seed : c.eval_seed, "utt");
    std::ofstream manifest(fs::path(gen_out) / "manifest.txt");
    for (auto& u : data) {
      if (gen_reverse) u = reverse_audio(u);
      const auto name = u.id + ".alnu";
      save_features_file(fs::path(gen_out) / name, u);
      manifest << name << "\n";
    }
    if (!manifest) throw IoError("cannot write manifest");
    std::cout << "wrote " << data.size() << " utterances to " << gen_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    RunConfig c = train_cfg.resolve();
    if (!train_resume.empty() && !fs::exists(train_resume)) throw UsageError("checkpoint not found: " + train_resume);
    train_run(c, RunDir{train_dir}, train_resume, [&](const StepMetrics& m) {
      if (!quiet && c.train.log_every > 0 && m.step % c.train.log_every == 0)
        std::fprintf(stderr, "step %ld loss %.4f lr %.2e grad_norm %.3f\n", m.step, m.loss, m.lr, m.grad_norm);
    });
    std::cout << RunDir{train_dir}.final_checkpoint().string() << "\n";
    return 0;
  }

  if (eval->parsed()) {
    auto [model, cfg] = eval_model.load();
    const BeamConfig bc = eval_dec.apply(cfg.decode);
    auto data = dataset_or_held_out(eval_manifest, cfg);
    Transcriber tr;
    if (eval_chunk > 0) {
      const ChunkPlan plan = parse_chunk_policy(eval_policy, eval_chunk);
      tr = [&](const Utterance& u) { return chunked_decode(u.features, model, plan, bc); };
    } else if (eval_segment > 0) {
      tr = [&](const Utterance& u) { return blind_segment_decode(u.features, model, eval_segment, bc); };
    } else {
      tr = [&](const Utterance& u) { return decode_features(u.features, model, bc); };
    }
    std::cout << error_report_record(evaluate(data, tr)).dump() << "\n";
    return 0;
  }

  if (decode->parsed()) {
    auto [model, cfg] = dec_model.load();
    const BeamConfig bc = dec_flags.apply(cfg.decode);
    auto data = dataset_or_held_out(dec_manifest, cfg);
    std::optional<NdjsonWriter> file;
    if (!dec_out.empty()) file.emplace(dec_out);
    for (const auto& u : data) {
      auto rec = decode_record(u.id, decode_features(u.features, model, bc));
      if (file) file->write(rec);
      else std::cout << rec.dump() << "\n";
    }
    return 0;
  }

  if (align->parsed()) {
    auto [model, cfg] = al_model.load();
    if (model.config.kind != ModelKind::aligner && model.config.kind != ModelKind::nonar_aligner)
      throw UsageError("align needs an aligner checkpoint");
    const MatrixFormat fmt = parse_matrix_format(al_format);
    auto data = dataset_or_held_out(al_manifest, cfg);
    const Utterance& u = find_utterance(data, al_utt);
    const fs::path out = al_dir.empty() ? fs::path(al_model.checkpoint).parent_path().parent_path() / "exports" : fs::path(al_dir);
    fs::create_directories(out);
    EncoderOutput enc;
    {
      NoGradScope ng;
      enc = model.encode(u.features, true);
    }
    const auto& rec = *enc.attention;
    const std::size_t U = std::min(u.tokens.size(), enc.h.rows());
    std::size_t layer = 0;
    if (al_layer == "auto") {
      layer = select_alignment_layer(rec, U, cfg.train.augment.reverse).layer;
    } else {
      try {
        layer = std::stoul(al_layer);
      } catch (const std::exception&) {
        throw UsageError("--layer must be an index or 'auto'");
      }
      if (layer >= rec.num_layers()) throw UsageError(detail::concat("--layer ", layer, " outside 0..", rec.num_layers() - 1));
    }
    for (std::size_t l = 0; l < rec.num_layers(); ++l)
      export_matrix(rec.head_average(l), out / (u.id + ".layer" + std::to_string(l) + format_suffix(fmt)), fmt);
    AlignmentPath path = extract_attention_alignment(rec, layer, U);
    if (cfg.train.augment.reverse) path = path.reversed(enc.h.rows());
    std::string report = "utterance: " + u.id + "\nlayer: " + std::to_string(layer) + "\n";
    report += "path:";
    for (auto f : path.frames) report += " " + std::to_string(f);
    report += "\n";
    if (u.boundaries.size() + 1 >= path.size() && path.size() >= u.boundaries.size()) {
      auto truth = u.boundaries;
      if (cfg.train.augment.reverse) {
        // Compare in forward time: undo the boundary mirroring.
        for (auto& b : truth) b = {static_cast<std::uint32_t>(u.num_frames() - 1 - b.end),
                                   static_cast<std::uint32_t>(u.num_frames() - 1 - b.start)};
      }
      report += alignment_metrics(path, truth, static_cast<std::size_t>(cfg.data.subsample_factor)).to_text();
    }
    detail::write_file(out / (u.id + ".alignment.txt"), report);
    std::cout << report;
    return 0;
  }

  if (probe->parsed()) {
    auto [aligner, acfg] = pr_model.load();
    if (aligner.config.kind != ModelKind::aligner) throw UsageError("probe needs an aligner checkpoint");
    RunConfig c = pr_cfg.path.empty() ? acfg : pr_cfg.resolve();
    if (pr_cfg.path.empty()) {
      if (pr_cfg.seed) c.train.seed = *pr_cfg.seed;
      if (pr_cfg.steps) c.train.total_steps = *pr_cfg.steps;
    }
    c.eval_utterances = static_cast<int>(pr_count);
    const MatrixFormat fmt = parse_matrix_format(pr_format);
    if (pr_layers > aligner.encoder.layers.size())
      throw UsageError(detail::concat("--layers ", pr_layers, " exceeds encoder depth ", aligner.encoder.layers.size()));
    RunDir dir{pr_dir};
    dir.create();
    auto data = dataset_or_held_out(pr_manifest, c);
    ProbeResult r = probe_frozen_aligner(aligner, pr_layers, c, data, [&](const StepMetrics& m) {
      if (c.train.log_every > 0 && m.step % c.train.log_every == 0)
        std::fprintf(stderr, "probe step %ld loss %.4f\n", m.step, m.loss);
    });
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      const auto& it = r.items[i];
      LatticePosterior shown = it.posterior;
      if (pr_temp != 1.0) {
        NoGradScope ng;
        shown = lattice_posterior(r.model.encode(data[i].features).h, data[i].content_tokens(), r.model, pr_temp);
      }
      if (shown.emission.defined()) export_matrix(shown.emission, dir.exports() / (it.id + ".emission" + format_suffix(fmt)), fmt);
    }
    detail::write_file(dir.exports() / "probe.txt", r.to_text());
    std::cout << r.to_text();
    return r.frozen_intact() ? 0 : 2;
  }

  if (bench->parsed()) {
    std::cout << bench_decoders(spec).to_text();
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
