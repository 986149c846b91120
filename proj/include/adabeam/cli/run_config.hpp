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

// Run configuration: a flat "key = value" file validated against a fixed
// schema. Unknown keys, malformed values and duplicates are rejected. The
// resolved configuration is written back as a lockfile that parses to the
// same values.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/pipeline/data.hpp"
#include "adabeam/pipeline/params.hpp"
#include "adabeam/pipeline/training.hpp"
#include "adabeam/scenesim.hpp"

namespace adabeam::cli {

enum class KeyType { integer, real, boolean, text, real_list };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* default_value;
  const char* doc;
};

// clang-format off
inline const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
    {"seed",             KeyType::integer,   "1",      "master seed"},
    {"data_dir",         KeyType::text,      "data",   "dataset directory (written by gen-data, read by train/eval)"},
    // scenes
    {"n_scenes",         KeyType::integer,   "200",    "number of scenes over all splits"},
    {"split_train",      KeyType::real,      "0.8",    "fraction of scenes in train"},
    {"split_dev",        KeyType::real,      "0.1",    "fraction of scenes in dev"},
    {"split_test",       KeyType::real,      "0.1",    "fraction of scenes in test"},
    {"duration",         KeyType::real,      "2.0",    "scene length in seconds"},
    {"n_mics",           KeyType::integer,   "3",      "microphones in the linear array"},
    {"mic_spacing",      KeyType::real,      "0.15",   "microphone spacing in meters"},
    {"source_distance",  KeyType::real,      "2.0",    "source distance from the array center, meters"},
    {"noise_distance",   KeyType::real,      "2.0",    "interferer distance from the array center, meters"},
    {"source_sector",    KeyType::real,      "45",     "source stays within +- this angle of broadside, degrees"},
    {"move_span",        KeyType::real,      "60",     "arc swept by a moving source, degrees"},
    {"move_sweeps",      KeyType::integer,   "2",      "passes over the arc per utterance (out, back, ...)"},
    {"noise_angle_min",  KeyType::real,      "60",     "interferer angle range (either side), degrees"},
    {"noise_angle_max",  KeyType::real,      "85",     ""},
    {"moving_fraction",  KeyType::real,      "0.5",    "fraction of moving-source scenes per split"},
    {"snr_db",           KeyType::real_list, "0,5",    "SNRs cycled over scenes, comma separated"},
    {"n_classes",        KeyType::integer,   "10",     "frame classes including silence (class 0)"},
    // frontend
    {"sample_rate",      KeyType::real,      "8000",   "Hz"},
    {"win_len",          KeyType::integer,   "200",    "analysis window, samples"},
    {"hop",              KeyType::integer,   "80",     "frame shift, samples"},
    {"fft_size",         KeyType::integer,   "256",    "power of two >= win_len"},
    {"window",           KeyType::text,      "hann",   "hann|rect"},
    {"n_mels",           KeyType::integer,   "20",     "Mel bands"},
    {"fmin",             KeyType::real,      "64",     "lowest Mel edge, Hz"},
    {"fmax",             KeyType::real,      "4000",   "highest Mel edge, Hz"},
    {"log_floor",        KeyType::real,      "1e-10",  "floor inside the log"},
    // model
    {"bf_proj",          KeyType::integer,   "64",     "beamformer input projection"},
    {"bf_hidden",        KeyType::integer,   "64",     "beamformer LSTM cells"},
    {"am_proj",          KeyType::integer,   "64",     "acoustic model input projection"},
    {"am_hidden",        KeyType::integer,   "64",     "acoustic model LSTM cells per layer"},
    {"am_layers",        KeyType::integer,   "2",      "acoustic model LSTM layers"},
    // training
    {"batch",            KeyType::integer,   "8",      "utterances per minibatch"},
    {"truncation",       KeyType::integer,   "50",     "BPTT truncation, frames"},
    {"lr",               KeyType::real,      "0.01",   "learning rate, stages 1, 3, 4, 5"},
    {"pretrain_lr",      KeyType::real,      "1.0",    "learning rate, stage 2"},
    {"clip",             KeyType::real,      "5.0",    "global gradient norm clip (0 disables)"},
    {"epochs_stage1",    KeyType::integer,   "10",     "epochs per stage"},
    {"epochs_stage2",    KeyType::integer,   "10",     ""},
    {"epochs_stage3",    KeyType::integer,   "10",     ""},
    {"epochs_stage4",    KeyType::integer,   "10",     ""},
    {"epochs_stage5",    KeyType::integer,   "5",      ""},
    {"detach_feedback",  KeyType::boolean,   "false",  "cut the feedback gradient path"},
    {"reference_channel",KeyType::integer,   "1",      "1-based channel used by the single-channel baseline"},
  };
  return keys;
}
// clang-format on

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : schema())
    if (name == k.name) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool parse_int(const std::string& v, long long& out) {
  std::size_t pos = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (...) {
    return false;
  }
  return pos == v.size();
}

inline bool parse_real(const std::string& v, double& out) {
  std::size_t pos = 0;
  try {
    out = std::stod(v, &pos);
  } catch (...) {
    return false;
  }
  return pos == v.size() && std::isfinite(out);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline void validate_value(const KeySpec& k, const std::string& v) {
  const std::string what = std::string("config key '") + k.name + "': ";
  long long i;
  double d;
  switch (k.type) {
    case KeyType::integer:
      if (!parse_int(v, i)) throw UsageError(what + "expected an integer, got '" + v + "'");
      break;
    case KeyType::real:
      if (!parse_real(v, d)) throw UsageError(what + "expected a number, got '" + v + "'");
      break;
    case KeyType::boolean:
      if (v != "true" && v != "false") throw UsageError(what + "expected true|false, got '" + v + "'");
      break;
    case KeyType::text:
      if (v.empty()) throw UsageError(what + "empty value");
      break;
    case KeyType::real_list:
      if (v.empty()) throw UsageError(what + "empty list");
      for (const auto& item : split_list(v))
        if (!parse_real(item, d)) throw UsageError(what + "bad list element '" + item + "'");
      break;
  }
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : schema()) values_[k.name] = k.default_value;
  }

  /// Parses "key = value" lines; '#' starts a comment.
  static RunConfig parse(std::istream& in, const std::string& origin = "config") {
    RunConfig cfg;
    std::map<std::string, int> seen;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      if (!find_key(key)) throw UsageError(where + ": unknown config key '" + key + "'");
      if (seen.count(key))
        throw UsageError(where + ": duplicate key '" + key + "' (first on line " +
                         std::to_string(seen[key]) + ")");
      seen[key] = lineno;
      cfg.set(key, detail::trim(line.substr(eq + 1)));
    }
    cfg.check();
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open config " + path);
    return parse(f, path);
  }

  void set(const std::string& key, const std::string& value) {
    const KeySpec* k = find_key(key);
    if (!k) throw UsageError("unknown config key '" + key + "'");
    detail::validate_value(*k, value);
    values_[key] = value;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }
  long long integer(const std::string& key) const {
    long long v = 0;
    detail::parse_int(raw(key), v);
    return v;
  }
  int count(const std::string& key) const { return static_cast<int>(integer(key)); }
  double real(const std::string& key) const {
    double v = 0.0;
    detail::parse_real(raw(key), v);
    return v;
  }
  bool flag(const std::string& key) const { return raw(key) == "true"; }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : detail::split_list(raw(key))) {
      double v = 0.0;
      detail::parse_real(item, v);
      out.push_back(v);
    }
    return out;
  }

  /// Range checks that involve single keys.
  void check() const {
    auto positive = [&](const char* key) {
      if (integer(key) < 1) throw UsageError(std::string("config key '") + key + "' must be >= 1");
    };
    for (const char* key : {"n_scenes", "n_mics", "win_len", "hop", "fft_size", "n_mels", "move_sweeps", "bf_proj",
                            "bf_hidden", "am_proj", "am_hidden", "am_layers", "batch", "truncation"})
      positive(key);
    for (int s = 1; s <= 5; ++s)
      if (integer("epochs_stage" + std::to_string(s)) < 0)
        throw UsageError("epochs must be >= 0");
    if (integer("n_classes") < 2) throw UsageError("config key 'n_classes' must be >= 2");
    if (integer("seed") < 0) throw UsageError("config key 'seed' must be >= 0");
    if (real("sample_rate") <= 0.0 || real("duration") <= 0.0)
      throw UsageError("sample_rate and duration must be positive");
    if (real("lr") <= 0.0 || real("pretrain_lr") <= 0.0) throw UsageError("learning rates must be positive");
    const int ref = count("reference_channel");
    if (ref < 1 || ref > count("n_mics")) throw UsageError("reference_channel must be in 1..n_mics");
    signal::parse_window(raw("window"));
  }

  /// Lockfile text: every key in schema order.
  std::string lock_text() const {
    std::string out = "# resolved adabeam configuration\n";
    for (const auto& k : schema()) out += std::string(k.name) + " = " + raw(k.name) + "\n";
    return out;
  }

  void write_lock(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path);
    f << lock_text();
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  // typed views

  sim::DatasetTemplate dataset_template() const {
    sim::DatasetTemplate t;
    t.sample_rate = real("sample_rate");
    t.grid = {count("win_len"), count("hop")};
    const auto samples = static_cast<std::size_t>(std::llround(real("duration") * t.sample_rate));
    t.frames = signal::num_frames(samples, t.grid.win_len, t.grid.hop);
    if (t.frames < 2) throw UsageError("duration too short for the analysis window");
    t.n_mics = count("n_mics");
    t.mic_spacing = real("mic_spacing");
    t.source_distance = real("source_distance");
    t.noise_distance = real("noise_distance");
    t.source_sector_deg = real("source_sector");
    t.move_span_deg = real("move_span");
    t.move_sweeps = count("move_sweeps");
    t.noise_angle_min_deg = real("noise_angle_min");
    t.noise_angle_max_deg = real("noise_angle_max");
    t.moving_fraction = real("moving_fraction");
    t.snr_db = reals("snr_db");
    t.n_classes = count("n_classes");
    return t;
  }

  std::vector<double> split_ratios() const {
    return {real("split_train"), real("split_dev"), real("split_test")};
  }

  pipeline::FrontendConfig frontend() const {
    pipeline::FrontendConfig f;
    f.stft = {real("sample_rate"), count("win_len"), count("hop"), count("fft_size"),
              signal::parse_window(raw("window"))};
    f.n_mels = count("n_mels");
    f.fmin = real("fmin");
    f.fmax = real("fmax");
    f.log_floor = real("log_floor");
    return f;
  }

  pipeline::ModelDims dims() const {
    pipeline::ModelDims d;
    d.F = count("fft_size") / 2 + 1;
    d.M = count("n_mics");
    d.n_mels = count("n_mels");
    d.bf_proj = count("bf_proj");
    d.bf_hidden = count("bf_hidden");
    d.am_proj = count("am_proj");
    d.am_hidden = count("am_hidden");
    d.am_layers = count("am_layers");
    d.n_classes = count("n_classes");
    return d;
  }

  pipeline::TrainConfig training() const {
    pipeline::TrainConfig t;
    t.batch = count("batch");
    t.truncation = count("truncation");
    t.lr = real("lr");
    t.pretrain_lr = real("pretrain_lr");
    t.clip = real("clip");
    t.epochs = {0};
    for (int s = 1; s <= 5; ++s) t.epochs.push_back(count("epochs_stage" + std::to_string(s)));
    t.detach_feedback = flag("detach_feedback");
    t.seed = seed();
    return t;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace adabeam::cli
