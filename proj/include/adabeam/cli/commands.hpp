// Copyright 2026 The adabeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Subcommands of the adabeam tool. Each takes parsed options, writes its
// artifacts, prints a report to out and throws UsageError (exit 1) or
// RuntimeFailure (exit 2) on failure.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adabeam/cli/run_config.hpp"
#include "adabeam/io/dataset_io.hpp"
#include "adabeam/io/export.hpp"
#include "adabeam/parallel.hpp"
#include "adabeam/pipeline/data.hpp"
#include "adabeam/pipeline/evaluate.hpp"
#include "adabeam/pipeline/gradcheck_suite.hpp"
#include "adabeam/pipeline/training.hpp"
#include "adabeam/scenesim.hpp"

namespace adabeam::cli {

namespace fs = std::filesystem;
using nn::Tensor;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int stage = 0;
  std::string init;
  std::string split = "test";
  std::string what;
  int scene = 0;
  bool tiny = false;
  int probes = 0;  // 0: default total, otherwise per tensor
  bool deterministic = false;
  bool per_condition = false;
  std::vector<std::string> overrides;  // key=value
  // test hooks
  bool inject_fault = false;
  bool oracle_filters = false;
};

inline RunConfig resolve_config(const Options& opt) {
  RunConfig cfg = opt.config.empty() ? RunConfig() : RunConfig::load(opt.config);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("override must be key=value, got '" + kv + "'");
    cfg.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (opt.seed) cfg.set("seed", std::to_string(*opt.seed));
  cfg.check();
  return cfg;
}

inline int threads_for(const Options& opt) { return opt.deterministic ? 1 : worker_count(); }

inline fs::path require_out(const Options& opt) {
  if (opt.out.empty()) throw UsageError("--out DIR is required");
  std::error_code ec;
  fs::create_directories(opt.out, ec);
  if (ec || !fs::is_directory(opt.out)) throw UsageError("cannot create output directory " + opt.out);
  return opt.out;
}

// ---------------------------------------------------------------------------
// Data

inline std::vector<pipeline::PreparedScene> load_split(const RunConfig& cfg, const std::string& split,
                                                       int threads) {
  const fs::path root = cfg.raw("data_dir");
  const io::Manifest man = io::read_manifest(root);
  const auto tpl = cfg.dataset_template();
  if (man.n_mics != tpl.n_mics || man.sample_rate != tpl.sample_rate || man.frames != tpl.frames)
    throw UsageError("dataset " + root.string() + " does not match the configuration "
                     "(n_mics, sample_rate or duration differ)");
  std::vector<io::SceneEntry> entries;
  for (const auto& e : man.scenes)
    if (e.split == split) entries.push_back(e);
  if (entries.empty()) throw UsageError("split '" + split + "' not found in dataset " + root.string());
  const auto fcfg = cfg.frontend();
  const pipeline::Frontend fe = pipeline::make_frontend(fcfg);
  std::vector<pipeline::PreparedScene> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    out[i] = pipeline::prepare_scene(io::read_scene(root, entries[i], man), fcfg, fe);
  });
  return out;
}

inline int cmd_gen_data(const Options& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  const fs::path root = opt.out.empty() ? fs::path(cfg.raw("data_dir")) : require_out(opt);
  fs::create_directories(root);
  const auto tpl = cfg.dataset_template();
  const auto plans = sim::plan_dataset(cfg.count("n_scenes"), tpl, cfg.split_ratios(), cfg.seed());
  const sim::ClassBank bank = sim::dataset_class_bank(tpl, cfg.seed());

  struct Job {
    const sim::ScenePlan* plan;
    io::SceneEntry entry;
  };
  std::vector<Job> jobs;
  for (const auto& split : plans)
    for (std::size_t i = 0; i < split.scenes.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu", i);
      jobs.push_back({&split.scenes[i], {split.name, split.name + "/" + name, split.scenes[i].moving,
                                         split.scenes[i].snr_db}});
    }
  // stale scenes from a previous, larger run would otherwise linger
  for (const auto& name : io::kSplitNames)
    if (fs::exists(root / io::kManifestName)) fs::remove_all(root / name);

  parallel_for(jobs.size(), threads_for(opt), [&](std::size_t i) {
    io::write_scene(root / jobs[i].entry.dir, sim::render_scene(*jobs[i].plan, tpl, bank));
  });
  io::Manifest man;
  man.sample_rate = tpl.sample_rate;
  man.n_mics = tpl.n_mics;
  man.frames = tpl.frames;
  man.seed = cfg.seed();
  for (const auto& j : jobs) man.scenes.push_back(j.entry);
  io::write_manifest(root, man);
  cfg.write_lock((root / "config.lock").string());
  out << "wrote " << jobs.size() << " scenes to " << root.string() << " (splits:";
  for (const auto& s : man.splits()) out << " " << s;
  out << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Training

inline fs::path checkpoint_path(const fs::path& dir, int stage) {
  return dir / ("stage" + std::to_string(stage) + ".ckpt");
}

inline int cmd_train(const Options& opt, std::ostream& out) {
  if (opt.stage < 1 || opt.stage > 5) throw UsageError("--stage must be 1..5");
  const RunConfig cfg = resolve_config(opt);
  const fs::path dir = require_out(opt);
  const auto dims = cfg.dims();

  std::optional<pipeline::StageArtifact> prev;
  if (opt.stage > 1) {
    const fs::path init = opt.init.empty() ? checkpoint_path(dir, opt.stage - 1) : fs::path(opt.init);
    if (!fs::exists(init))
      throw UsageError("missing prerequisite " + init.string() + ": stage " +
                       std::to_string(opt.stage) + " needs the stage " +
                       std::to_string(opt.stage - 1) + " checkpoint");
    prev = pipeline::load_artifact(init.string(), dims);
  }

  pipeline::Corpus corpus;
  corpus.train = load_split(cfg, "train", threads_for(opt));
  corpus.dev = load_split(cfg, "dev", threads_for(opt));

  std::ofstream log_file(dir / "metrics.log", std::ios::app | std::ios::binary);
  if (!log_file) throw RuntimeFailure("cannot open " + (dir / "metrics.log").string());
  pipeline::MetricsLog log;
  log.set_sink([&](const std::string& line) {
    log_file << line << "\n";
    log_file.flush();
    out << line << "\n";
  });
  const pipeline::FrontendConfig fcfg = cfg.frontend();
  const pipeline::StageContext ctx{corpus, dims, pipeline::make_frontend(fcfg), cfg.training(), log};
  const pipeline::StageArtifact a = pipeline::run_stage(opt.stage, prev, ctx);
  pipeline::save_artifact(checkpoint_path(dir, opt.stage).string(), a);
  cfg.write_lock((dir / "config.lock").string());
  out << "wrote " << checkpoint_path(dir, opt.stage).string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ReportRow {
  std::string system, condition, snr;
  pipeline::EvalResult result;
};

/// Scores one system on a set of scenes, overall and optionally per
/// (condition, SNR) cell.
template <class Score>
void score_system(const std::string& system, const std::vector<pipeline::PreparedScene>& scenes,
                  bool per_condition, Score&& score, std::vector<ReportRow>& rows) {
  std::vector<const pipeline::PreparedScene*> all;
  for (const auto& s : scenes) all.push_back(&s);
  rows.push_back({system, "all", "all", score(all)});
  if (!per_condition) return;
  std::vector<double> snrs;
  for (const auto& s : scenes)
    if (std::find(snrs.begin(), snrs.end(), s.snr_db) == snrs.end()) snrs.push_back(s.snr_db);
  std::sort(snrs.begin(), snrs.end());
  for (const bool moving : {false, true}) {
    std::vector<const pipeline::PreparedScene*> any;
    for (const auto& s : scenes)
      if (s.moving == moving) any.push_back(&s);
    if (!any.empty()) rows.push_back({system, moving ? "moving" : "static", "all", score(any)});
    for (const double snr : snrs) {
      std::vector<const pipeline::PreparedScene*> cell;
      for (const auto& s : scenes)
        if (s.moving == moving && s.snr_db == snr) cell.push_back(&s);
      if (cell.empty()) continue;
      rows.push_back({system, moving ? "moving" : "static", io::fmt17(snr), score(cell)});
    }
  }
}

inline int cmd_eval(const Options& opt, std::ostream& out) {
  if (opt.init.empty()) throw UsageError("--init CHECKPOINT is required");
  const RunConfig cfg = resolve_config(opt);
  const auto dims = cfg.dims();
  const pipeline::StageArtifact a = pipeline::load_artifact(opt.init, dims);
  const auto scenes = load_split(cfg, opt.split, threads_for(opt));
  const int ref = cfg.count("reference_channel") - 1;

  std::vector<ReportRow> rows;
  if (!a.bf) {
    score_system("baseline", scenes, opt.per_condition, [&](const auto& cell) {
      std::vector<pipeline::FeatureSequence> seqs;
      for (const auto* s : cell)
        seqs.push_back({signal::normalize(s->channel_logmel[ref], a.channel_stats), s->utt.labels});
      return pipeline::evaluate_am(a.am, seqs);
    }, rows);
  } else {
    if (!a.integrated_stats) throw UsageError("checkpoint lacks integrated normalization stats");
    const pipeline::IntegratedParams p = a.integrated();
    pipeline::Frontend fe = pipeline::make_frontend(cfg.frontend());
    fe.stats = *a.integrated_stats;
    auto system = [&](pipeline::FilterMode mode) {
      return [&, mode](const auto& cell) {
        std::vector<pipeline::Utterance> utts;
        for (const auto* s : cell) {
          utts.push_back(s->utt);
          utts.back().forced_filters = &s->das;
        }
        pipeline::IntegratedOptions o;
        o.filters = mode;
        return pipeline::evaluate_integrated(p, fe, o, utts);
      };
    };
    score_system("bf", scenes, opt.per_condition, system(pipeline::FilterMode::network), rows);
    score_system("fixed", scenes, opt.per_condition, system(pipeline::FilterMode::freeze_first), rows);
    score_system("das", scenes, opt.per_condition, system(pipeline::FilterMode::forced), rows);
  }

  std::string text = "checkpoint=" + opt.init + " stage=" + std::to_string(a.stage) + " split=" + opt.split + "\n";
  std::string csv_text = "system,condition,snr_db,frames,ce,acc\n";
  for (const auto& r : rows) {
    const std::string line = "system=" + r.system + " condition=" + r.condition + " snr=" + r.snr +
                             " frames=" + std::to_string(r.result.frames) +
                             " ce=" + io::fmt17(r.result.ce()) + " acc=" + io::fmt17(r.result.accuracy());
    text += line + "\n";
    csv_text += r.system + "," + r.condition + "," + r.snr + "," + std::to_string(r.result.frames) + "," +
                io::fmt17(r.result.ce()) + "," + io::fmt17(r.result.accuracy()) + "\n";
  }
  out << text;
  if (!opt.out.empty()) {
    const fs::path dir = require_out(opt);
    std::ofstream(dir / ("eval_" + opt.split + ".txt"), std::ios::binary) << text;
    std::ofstream(dir / ("eval_" + opt.split + ".csv"), std::ios::binary) << csv_text;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Gradient check

inline int cmd_gradcheck(const Options& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  pipeline::SuiteOptions so;
  so.inject_fault = opt.inject_fault;
  so.probe.seed = cfg.seed();
  if (opt.probes < 0) throw UsageError("--probes must be positive");
  if (opt.probes > 0) {
    so.probe.probes = opt.probes;
    so.probe.per_tensor = true;
  }
  if (!opt.tiny) {
    const auto d = cfg.dims();
    so.dims = {d.F, d.M, d.bf_hidden, d.n_classes, 12, d.n_mels, 2};
  }
  const auto results = pipeline::run_gradcheck_suite(so);
  bool ok = true;
  double worst = 0.0;
  for (const auto& r : results) {
    ok = ok && r.passed;
    worst = std::max(worst, r.report.max_rel_error);
    out << "check=" << r.name << " probes=" << r.report.probes.size()
        << " max_rel_error=" << io::fmt17(r.report.max_rel_error) << (r.passed ? " PASS" : " FAIL") << "\n";
    if (so.probe.per_tensor) {
      std::vector<std::string> seen;
      for (const auto& p : r.report.probes)
        if (std::find(seen.begin(), seen.end(), p.tensor) == seen.end()) {
          seen.push_back(p.tensor);
          out << "  tensor=" << p.tensor << " probes=" << r.report.count_for(p.tensor) << "\n";
        }
    }
  }
  out << (ok ? "PASS" : "FAIL") << " max_rel_error=" << io::fmt17(worst) << " tolerance="
      << io::fmt17(so.tolerance) << "\n";
  if (!ok) throw RuntimeFailure("gradient check failed");
  return 0;
}

// ---------------------------------------------------------------------------
// Feature dumps

/// Raw log-Mel of the delay-and-sum beam, computed frame by frame.
inline Tensor das_logmel(const pipeline::PreparedScene& s, const pipeline::Frontend& fe) {
  const int F = s.spec.F, M = s.spec.M, T = s.spec.T;
  Tensor z(fe.mel.num_bands(), T);
  std::vector<Tensor> heads(static_cast<std::size_t>(M));
  for (int t = 0; t < T; ++t) {
    for (int m = 0; m < M; ++m) heads[m] = bf::pack_filter(s.das, t, m);
    const Tensor x = s.utt.x.col(t);
    const bf::PackedBeam b = bf::filter_and_sum_packed(x, heads, F);
    z.col(t) = signal::log_mel(pipeline::beam_power(b.re, b.im), fe.mel, fe.log_floor);
  }
  return z;
}

inline int cmd_dump_features(const Options& opt, std::ostream& out) {
  if (opt.what != "logmel" && opt.what != "filters" && opt.what != "posteriors")
    throw UsageError("--what must be logmel|filters|posteriors, got '" + opt.what + "'");
  if (opt.init.empty()) throw UsageError("--init CHECKPOINT is required");
  const RunConfig cfg = resolve_config(opt);
  const fs::path dir = require_out(opt);
  const pipeline::StageArtifact a = pipeline::load_artifact(opt.init, cfg.dims());
  if (!a.bf || !a.integrated_stats) throw UsageError("checkpoint has no beamformer (stage >= 2 needed)");
  const auto scenes = load_split(cfg, opt.split, threads_for(opt));
  if (opt.scene < 0 || opt.scene >= static_cast<int>(scenes.size()))
    throw UsageError("--scene out of range (split has " + std::to_string(scenes.size()) + " scenes)");
  const pipeline::PreparedScene& s = scenes[static_cast<std::size_t>(opt.scene)];

  const pipeline::IntegratedParams p = a.integrated();
  pipeline::Frontend fe = pipeline::make_frontend(cfg.frontend());
  fe.stats = *a.integrated_stats;
  pipeline::IntegratedOptions o;
  o.objective = opt.what == "posteriors" ? pipeline::Objective::cross_entropy : pipeline::Objective::features;
  o.filters = opt.oracle_filters ? pipeline::FilterMode::forced : pipeline::FilterMode::network;
  pipeline::Utterance u = s.utt;
  u.forced_filters = &s.das;
  const pipeline::Utterance* batch[] = {&u};
  const pipeline::IntegratedModel model(p, fe, o);
  auto st = model.initial_state(batch);
  pipeline::Recording rec;
  rec.keep_filters = true;
  model.forward(batch, 0, model.length(u), st, &rec);
  const int T = model.length(u), F = s.spec.F, M = s.spec.M;

  if (opt.what == "logmel") {
    Tensor net(fe.mel.num_bands(), T);
    for (int t = 0; t < T; ++t) net.col(t) = rec.raw_logmel[t];
    const Tensor das = das_logmel(s, fe);
    std::vector<std::string> header;
    for (int b = 0; b < net.rows(); ++b) header.push_back("mel" + std::to_string(b + 1));
    io::write_csv((dir / "logmel_das.csv").string(), header, das.transpose());
    io::write_csv((dir / "logmel_network.csv").string(), header, net.transpose());
    io::write_logmel_pgm((dir / "logmel_das.pgm").string(), das);
    io::write_logmel_pgm((dir / "logmel_network.pgm").string(), net);
    out << "wrote logmel_das.{csv,pgm} and logmel_network.{csv,pgm} (" << net.rows() << " bands x " << T
        << " frames)\n";
  } else if (opt.what == "filters") {
    Tensor table(T, 1 + 2 * F * M);
    std::vector<std::string> header = {"frame"};
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) {
        header.push_back("mag_m" + std::to_string(m + 1) + "_f" + std::to_string(f));
        header.push_back("phase_m" + std::to_string(m + 1) + "_f" + std::to_string(f));
      }
    for (int t = 0; t < T; ++t) {
      table(t, 0) = t;
      for (int m = 0; m < M; ++m)
        for (int f = 0; f < F; ++f) {
          const signal::cplx g(rec.filters[t][m](f, 0), rec.filters[t][m](F + f, 0));
          table(t, 1 + 2 * (m * F + f)) = std::abs(g);
          table(t, 2 + 2 * (m * F + f)) = std::arg(g);
        }
    }
    io::write_csv((dir / "filters.csv").string(), header, table);
    out << "wrote filters.csv (" << T << " frames x " << table.cols() << " columns)\n";
  } else {
    Tensor post(T, p.am.output.rows());
    for (int t = 0; t < T; ++t) post.row(t) = rec.posteriors[t].col(0).transpose();
    std::vector<std::string> header;
    for (int k = 0; k < post.cols(); ++k) header.push_back("class" + std::to_string(k));
    io::write_csv((dir / "posteriors.csv").string(), header, post);
    out << "wrote posteriors.csv (" << T << " frames x " << post.cols() << " classes)\n";
  }
  return 0;
}

}  // namespace adabeam::cli
