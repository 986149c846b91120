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


// Acceptance run: one PASS/FAIL line per criterion. The desk-scale
// pipeline (gen-data, five training stages, feature dumps) runs twice
// from configs/desk.cfg; criteria 4 to 9 read the artifacts of those runs.
//
//   acceptance [--config PATH] [--work DIR] [--reference PATH]

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "adabeam/cli/commands.hpp"
#include "scene_checks.hpp"

namespace fs = std::filesystem;
using namespace adabeam;
using namespace adabeam::cli;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kAdaptivityPairs = 200;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) { return io::fmt17(v); }

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

bool same_tensors(const pipeline::AcousticModelParams& a, const pipeline::AcousticModelParams& b) {
  std::vector<const nn::Tensor*> ta, tb;
  nn::for_each_tensor(a, [&](const std::string&, const nn::Tensor& t) { ta.push_back(&t); });
  nn::for_each_tensor(b, [&](const std::string&, const nn::Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i]->size() != tb[i]->size() ||
        std::memcmp(ta[i]->data(), tb[i]->data(), sizeof(double) * ta[i]->size()) != 0)
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// 1-3: operator-level criteria

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 1 + rng.below(20), F = 1 + rng.below(33), M = 1 + rng.below(6);
    signal::MultichannelSpectrogram x(T, F, M, 2 * (F - 1) > 0 ? 2 * (F - 1) : 2, 0.01);
    bf::FilterSequence g(T, F, M);
    for (auto& v : x.data) v = {rng.normal(), rng.normal()};
    for (auto& v : g.g) v = {rng.normal(), rng.normal()};
    const Eigen::MatrixXd packed = bf::pack_all(x);
    std::vector<Eigen::MatrixXd> heads(static_cast<std::size_t>(M));
    for (int t = 0; t < T; ++t) {
      for (int m = 0; m < M; ++m) heads[m] = bf::pack_filter(g, t, m);
      const bf::PackedBeam beam = bf::filter_and_sum_packed(packed.col(t), heads, F);
      for (int f = 0; f < F; ++f) {
        std::complex<double> acc = 0.0;
        for (int m = 0; m < M; ++m) acc += g(t, f, m) * x(t, f, m);
        worst = std::max({worst, std::abs(beam.re(f, 0) - acc.real()), std::abs(beam.im(f, 0) - acc.imag())});
      }
    }
  }
  const double secs = seconds_since(t0);
  return {1, "oracle equivalence", worst <= 1e-12 && secs < 5.0,
          "max_abs_error=" + num(worst) + " (<= 1e-12) runtime_s=" + num(secs) + " (< 5)"};
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = pipeline::run_gradcheck_suite(pipeline::SuiteOptions{});
  bool ok = true;
  double worst = 0.0;
  std::size_t fewest = SIZE_MAX;
  for (const auto& r : results) {
    ok = ok && r.report.max_rel_error < 1e-4;
    worst = std::max(worst, r.report.max_rel_error);
    fewest = std::min(fewest, r.report.probes.size());
  }
  const double secs = seconds_since(t0);
  return {2, "gradient suite", ok && fewest >= 200 && secs < 120.0,
          "checks=" + std::to_string(results.size()) + " max_rel_error=" + num(worst) + " (< 1e-4) min_probes=" +
              std::to_string(fewest) + " (>= 200) runtime_s=" + num(secs) + " (< 120)"};
}

Verdict das_loop_closure(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const auto tpl = cfg.dataset_template();
  const auto bank = sim::dataset_class_bank(tpl, cfg.seed());
  Rng rng(derive_seed(cfg.seed(), 0xC105E));
  const auto labels = sim::make_label_sequence(tpl.frames, tpl.n_classes, rng);
  const auto src = sim::synth_source(labels, bank, tpl.sample_rate, tpl.grid, rng);
  sim::SceneConfig sc;
  sc.n_mics = tpl.n_mics;
  sc.mic_spacing = tpl.mic_spacing;
  sc.sample_rate = tpl.sample_rate;
  sc.grid = tpl.grid;
  sc.source = {-30.0, -30.0, tpl.source_distance};
  const auto scene = sim::propagate(src, labels, sc);
  const double err = testutil::das_closure_error(scene, src, cfg.frontend().stft);
  const double secs = seconds_since(t0);
  return {3, "DAS loop closure", err < 0.05 && secs < 10.0,
          "rel_magnitude_error=" + num(err) + " (< 0.05) runtime_s=" + num(secs) + " (< 10)"};
}

// ---------------------------------------------------------------------------
// Desk pipeline

struct RunPaths {
  fs::path root, data, run, dump;
};

Options base_options(const std::string& config, const RunPaths& p) {
  Options o;
  o.config = config;
  o.deterministic = true;
  o.overrides = {"data_dir=" + p.data.string()};
  return o;
}

/// gen-data, stages 1-5 and the feature dumps for test scene 0. Returns the
/// wall time of data generation plus training.
double run_pipeline(const std::string& config, const RunPaths& p, std::ostream& trace) {
  fs::remove_all(p.root);
  fs::create_directories(p.root);
  const auto t0 = Clock::now();
  Options o = base_options(config, p);
  cmd_gen_data(o, trace);
  for (int s = 1; s <= 5; ++s) {
    Options t = base_options(config, p);
    t.stage = s;
    t.out = p.run.string();
    cmd_train(t, trace);
  }
  const double secs = seconds_since(t0);
  for (const char* what : {"logmel", "filters", "posteriors"}) {
    Options d = base_options(config, p);
    d.init = (p.run / "stage5.ckpt").string();
    d.what = what;
    d.out = (p.dump / what).string();
    cmd_dump_features(d, trace);
  }
  return secs;
}

struct LogRecord {
  int stage, epoch;
  std::map<std::string, double> fields;
};

std::vector<LogRecord> dev_records(const fs::path& log) {
  std::vector<LogRecord> out;
  std::istringstream in(slurp(log));
  std::string line;
  const std::regex head(R"(stage=(\d) epoch=(\d+) split=dev(.*))");
  const std::regex field(R"( (\w+)=(\S+))");
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, head)) continue;
    LogRecord r{std::stoi(m[1]), std::stoi(m[2]), {}};
    const std::string rest = m[3];
    for (std::sregex_iterator it(rest.begin(), rest.end(), field), end; it != end; ++it)
      r.fields[(*it)[1]] = std::stod((*it)[2]);
    out.push_back(r);
  }
  return out;
}

/// Epoch-0 and accepted (best) dev objective of one stage.
std::pair<double, double> stage_span(const std::vector<LogRecord>& recs, int stage) {
  const std::string key = stage == 2 ? "mse" : "ce";
  double start = NAN, best = INFINITY;
  for (const auto& r : recs) {
    if (r.stage != stage) continue;
    if (r.epoch == 0) start = r.fields.at(key);
    best = std::min(best, r.fields.at(key));
  }
  return {start, best};
}

Verdict staged_contracts(const RunPaths& p, const pipeline::ModelDims& dims, double train_secs,
                         std::vector<std::string>& metrics) {
  const auto a2 = pipeline::load_artifact((p.run / "stage2.ckpt").string(), dims);
  const auto a3 = pipeline::load_artifact((p.run / "stage3.ckpt").string(), dims);
  const bool frozen = same_tensors(a2.am, a3.am);
  const auto recs = dev_records(p.run / "metrics.log");
  const double end4 = stage_span(recs, 4).second, start5 = stage_span(recs, 5).first;
  const bool continuity = std::abs(start5 - end4) <= 1e-9;
  bool monotone = true;
  std::string spans;
  for (int s = 1; s <= 5; ++s) {
    const auto [start, end] = stage_span(recs, s);
    monotone = monotone && end <= start + 1e-3;
    spans += " stage" + std::to_string(s) + "=" + num(start) + "->" + num(end);
    metrics.push_back("acceptance stage=" + std::to_string(s) + " dev_start=" + num(start) + " dev_end=" + num(end));
  }
  return {4, "staged training contracts", frozen && continuity && monotone && train_secs < 1200.0,
          std::string("am_frozen=") + (frozen ? "yes" : "no") + " stage5_start-stage4_end=" +
              num(start5 - end4) + " (<= 1e-9) dev_monotone=" + (monotone ? "yes" : "no") + spans +
              " runtime_s=" + num(train_secs) + " (< 1200)"};
}

Verdict multichannel_benefit(const RunConfig& cfg, const RunPaths& p, std::vector<std::string>& metrics) {
  const auto dims = cfg.dims();
  const auto a1 = pipeline::load_artifact((p.run / "stage1.ckpt").string(), dims);
  const auto a4 = pipeline::load_artifact((p.run / "stage4.ckpt").string(), dims);
  std::vector<pipeline::PreparedScene> moving;
  for (auto& s : load_split(cfg, "test", 1))
    if (s.moving) moving.push_back(std::move(s));
  const int ref = cfg.count("reference_channel") - 1;
  const double base = pipeline::evaluate_am(a1.am, pipeline::channel_sequences(moving, a1.channel_stats, ref)).accuracy();
  pipeline::Frontend fe = pipeline::make_frontend(cfg.frontend());
  fe.stats = *a4.integrated_stats;
  const auto utts = pipeline::utterances(moving);
  pipeline::IntegratedOptions o;
  const double bf = pipeline::evaluate_integrated(a4.integrated(), fe, o, utts).accuracy();
  o.filters = pipeline::FilterMode::freeze_first;
  const double fixed = pipeline::evaluate_integrated(a4.integrated(), fe, o, utts).accuracy();
  metrics.push_back("acceptance moving_test_scenes=" + std::to_string(moving.size()) + " baseline_acc=" + num(base) +
                    " bf_acc=" + num(bf) + " fixed_acc=" + num(fixed));
  return {5, "multichannel benefit", bf > base && bf > fixed,
          "moving_scenes=" + std::to_string(moving.size()) + " bf=" + num(bf) + " baseline=" + num(base) +
              " fixed=" + num(fixed) + " margins=" + num(bf - base) + "," + num(bf - fixed) + " (> 0)"};
}

Verdict adaptivity(const RunConfig& cfg, const RunPaths& p, std::vector<std::string>& metrics) {
  const auto a4 = pipeline::load_artifact((p.run / "stage4.ckpt").string(), cfg.dims());
  const auto tpl = cfg.dataset_template();
  const auto bank = sim::dataset_class_bank(tpl, cfg.seed());
  const auto fcfg = cfg.frontend();
  pipeline::Frontend fe = pipeline::make_frontend(fcfg);
  // fresh content; each moving scene has a static twin at its start point
  std::vector<sim::LabeledScene> moving, still;
  for (int i = 0; i < kAdaptivityPairs; ++i) {
    sim::ScenePlan plan;
    plan.label_seed = derive_seed(cfg.seed(), 0xADA0000 + i);
    plan.scene_seed = derive_seed(cfg.seed(), 0xADB0000 + i);
    plan.snr_db = tpl.snr_db[static_cast<std::size_t>(i) % tpl.snr_db.size()];
    plan.moving = true;
    moving.push_back(sim::render_scene(plan, tpl, bank));
    plan.moving = false;
    still.push_back(sim::render_scene(plan, tpl, bank));
  }
  const auto um = pipeline::utterances(pipeline::prepare_all(moving, fcfg, fe));
  const auto us = pipeline::utterances(pipeline::prepare_all(still, fcfg, fe));
  fe.stats = *a4.integrated_stats;
  const auto cm = pipeline::filter_change(a4.integrated(), fe, um);
  const auto cs = pipeline::filter_change(a4.integrated(), fe, us);
  double mm = 0.0, ms = 0.0;
  int wins = 0;
  for (int i = 0; i < kAdaptivityPairs; ++i) {
    mm += cm[i] / kAdaptivityPairs;
    ms += cs[i] / kAdaptivityPairs;
    wins += cm[i] > cs[i];
  }
  metrics.push_back("acceptance adaptivity_pairs=" + std::to_string(kAdaptivityPairs) + " moving_change=" + num(mm) +
                    " static_change=" + num(ms) + " wins=" + std::to_string(wins));
  return {6, "adaptivity", mm > ms,
          "pairs=" + std::to_string(kAdaptivityPairs) + " moving=" + num(mm) + " static=" + num(ms) +
              " diff=" + num(mm - ms) + " (> 0) pair_wins=" + std::to_string(wins)};
}

Verdict feedback_non_degradation(const RunConfig& cfg, const RunPaths& p, std::vector<std::string>& metrics) {
  const auto dims = cfg.dims();
  const auto dev = pipeline::utterances(load_split(cfg, "dev", 1));
  auto dev_ce = [&](int stage) {
    const auto a = pipeline::load_artifact((p.run / ("stage" + std::to_string(stage) + ".ckpt")).string(), dims);
    pipeline::Frontend fe = pipeline::make_frontend(cfg.frontend());
    fe.stats = *a.integrated_stats;
    return pipeline::evaluate_integrated(a.integrated(), fe, {}, dev).ce();
  };
  const double ce4 = dev_ce(4), ce5 = dev_ce(5);
  metrics.push_back("acceptance dev_ce_stage4=" + num(ce4) + " dev_ce_stage5=" + num(ce5));
  return {7, "feedback non-degradation", ce5 <= ce4 + 1e-3,
          "dev_ce stage5=" + num(ce5) + " stage4=" + num(ce4) + " (stage5 <= stage4 + 1e-3)"};
}

/// Same line structure; numbers agree within tol, everything else exactly.
bool logs_agree(const std::string& a, const std::string& b, double tol, std::string& why) {
  std::istringstream ia(a), ib(b);
  std::string la, lb;
  int lineno = 0;
  const std::regex token(R"((\w+)=(\S+))");
  while (true) {
    const bool ga = static_cast<bool>(std::getline(ia, la)), gb = static_cast<bool>(std::getline(ib, lb));
    ++lineno;
    if (!ga || !gb) {
      if (ga != gb) why = "line count differs at line " + std::to_string(lineno);
      return ga == gb;
    }
    const std::string sa = std::regex_replace(la, token, "$1="), sb = std::regex_replace(lb, token, "$1=");
    if (sa != sb) {
      why = "line " + std::to_string(lineno) + " differs in structure";
      return false;
    }
    std::sregex_iterator ta(la.begin(), la.end(), token), tb(lb.begin(), lb.end(), token), end;
    for (; ta != end && tb != end; ++ta, ++tb) {
      const std::string va = (*ta)[2], vb = (*tb)[2];
      double da, db;
      if (detail::parse_real(va, da) && detail::parse_real(vb, db)) {
        if (std::abs(da - db) > tol) {
          why = "line " + std::to_string(lineno) + " " + std::string((*ta)[1]) + ": " + va + " vs " + vb;
          return false;
        }
      } else if (va != vb) {
        why = "line " + std::to_string(lineno) + " " + std::string((*ta)[1]) + ": " + va + " vs " + vb;
        return false;
      }
    }
  }
}

Verdict determinism(const RunPaths& a, const RunPaths& b, const fs::path& metrics_file, const fs::path& reference) {
  std::string mismatch;
  for (const auto* sub : {"data", "run", "dump"}) {
    const auto ta = tree(a.root / sub), tb = tree(b.root / sub);
    if (ta.size() != tb.size()) {
      mismatch = std::string(sub) + ": file count differs";
      break;
    }
    for (std::size_t i = 0; i < ta.size() && mismatch.empty(); ++i)
      if (ta[i] != tb[i]) mismatch = std::string(sub) + "/" + ta[i].first + " differs";
    if (!mismatch.empty()) break;
  }
  const bool identical = mismatch.empty();
  std::string ref_note;
  bool ref_ok = false;
  if (!fs::exists(reference)) {
    ref_note = "committed log " + reference.string() + " not found";
  } else {
    ref_ok = logs_agree(slurp(metrics_file), slurp(reference), 1e-6, ref_note);
    if (ref_ok) ref_note = "matches " + reference.filename().string() + " within 1e-6";
  }
  return {8, "determinism", identical && ref_ok,
          std::string("two runs byte-identical=") + (identical ? "yes" : "no (" + mismatch + ")") +
              "; metrics " + ref_note};
}

std::pair<int, int> pgm_dims(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = -1, h = -1;
  in >> magic >> w >> h;
  return magic == "P5" ? std::pair{w, h} : std::pair{-1, -1};
}

Verdict fig2_analogue(const std::string& config, const RunPaths& p) {
  const RunConfig cfg = resolve_config(base_options(config, p));
  const int n_test = static_cast<int>(load_split(cfg, "test", 1).size());
  int dims_ok = 0, oracle_ok = 0;
  std::ostringstream sink;
  const fs::path out = p.root / "fig2";
  for (int i = 0; i < n_test; ++i) {
    Options d = base_options(config, p);
    d.init = (p.run / "stage4.ckpt").string();
    d.what = "logmel";
    d.scene = i;
    d.out = out.string();
    cmd_dump_features(d, sink);
    const auto das = slurp(out / "logmel_das.pgm"), net = slurp(out / "logmel_network.pgm");
    dims_ok += pgm_dims(das) == pgm_dims(net) && pgm_dims(das).first > 0;
    d.oracle_filters = true;
    cmd_dump_features(d, sink);
    oracle_ok += slurp(out / "logmel_das.pgm") == slurp(out / "logmel_network.pgm");
  }
  fs::remove_all(out);
  return {9, "log-Mel comparison dumps", n_test > 0 && dims_ok == n_test && oracle_ok == n_test,
          "test_scenes=" + std::to_string(n_test) + " equal_dims=" + std::to_string(dims_ok) +
              " oracle_byte_identical=" + std::to_string(oracle_ok)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string config = ADABEAM_SOURCE_DIR "/configs/desk.cfg";
  fs::path work = fs::temp_directory_path() / "adabeam_acceptance";
  fs::path reference = ADABEAM_SOURCE_DIR "/results/desk_metrics.log";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--config") config = argv[i + 1];
    else if (flag == "--work") work = argv[i + 1];
    else if (flag == "--reference") reference = argv[i + 1];
    else {
      std::cerr << "usage: acceptance [--config PATH] [--work DIR] [--reference PATH]\n";
      return 1;
    }
  }

  std::vector<Verdict> verdicts;
  auto report = [&](Verdict v) {
    std::cout << "criterion " << v.id << " (" << v.name << "): " << (v.pass ? "PASS" : "FAIL") << "  "
              << v.detail << std::endl;
    verdicts.push_back(std::move(v));
  };
  try {
    // Both runs use the same paths, since data_dir is recorded in the lockfiles.
    const auto at = [&](const char* name) {
      return RunPaths{work / name, work / name / "data", work / name / "run", work / name / "dump"};
    };
    const RunPaths a = at("run"), kept = at("first");
    const RunConfig cfg = resolve_config(base_options(config, a));

    report(oracle_equivalence());
    report(gradient_suite());
    report(das_loop_closure(cfg));

    std::ofstream trace(work.string() + "_trace.log");
    fs::create_directories(work);
    const double train_secs = run_pipeline(config, a, trace);
    std::vector<std::string> metrics;
    report(staged_contracts(a, cfg.dims(), train_secs, metrics));
    report(multichannel_benefit(cfg, a, metrics));
    report(adaptivity(cfg, a, metrics));
    report(feedback_non_degradation(cfg, a, metrics));

    const fs::path metrics_file = work / "desk_metrics.log";
    {
      std::ofstream f(metrics_file, std::ios::binary);
      f << slurp(a.run / "metrics.log");
      for (const auto& line : metrics) f << line << "\n";
    }
    fs::remove_all(kept.root);
    fs::rename(a.root, kept.root);
    run_pipeline(config, a, trace);
    report(determinism(kept, a, metrics_file, reference));
    report(fig2_analogue(config, a));
    std::cout << "metrics written to " << metrics_file.string() << "\n";
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << "\n";
    return 2;
  }
  int passed = 0;
  for (const auto& v : verdicts) passed += v.pass;
  std::cout << passed << "/" << verdicts.size() << " criteria passed\n";
  return passed == static_cast<int>(verdicts.size()) && verdicts.size() == 9 ? 0 : 1;
}
