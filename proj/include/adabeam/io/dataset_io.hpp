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

// On-disk datasets. Layout:
//
//   <root>/manifest.txt
//   <root>/<split>/<index>/ch<m>.wav     m = 1..M, mono PCM16
//   <root>/<split>/<index>/labels.csv    frame,class
//   <root>/<split>/<index>/delays.csv    frame,mic,seconds
//
// manifest.txt holds "key value" header lines followed by one line per
// scene: "scene <split> <relative dir> <static|moving> <snr_db>".

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adabeam/error.hpp"
#include "adabeam/io/wav.hpp"
#include "adabeam/scenesim.hpp"

namespace adabeam::io {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.txt";
inline const std::vector<std::string> kSplitNames = {"train", "dev", "test"};

struct SceneEntry {
  std::string split;
  std::string dir;  // relative to the dataset root
  bool moving = false;
  double snr_db = 0.0;
};

struct Manifest {
  double sample_rate = 0.0;
  int n_mics = 0;
  int frames = 0;
  std::uint64_t seed = 0;
  std::vector<SceneEntry> scenes;

  std::vector<std::string> splits() const {
    std::vector<std::string> out;
    for (const auto& name : kSplitNames)
      for (const auto& s : scenes)
        if (s.split == name) {
          out.push_back(name);
          break;
        }
    return out;
  }
};

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_scene(const fs::path& dir, const sim::LabeledScene& s) {
  fs::create_directories(dir);
  for (std::size_t m = 0; m < s.waveforms.size(); ++m)
    write_wav((dir / ("ch" + std::to_string(m + 1) + ".wav")).string(), s.waveforms[m]);
  std::ofstream lab(dir / "labels.csv", std::ios::binary);
  lab << "frame,class\n";
  for (std::size_t t = 0; t < s.frame_labels.size(); ++t) lab << t << "," << s.frame_labels[t] << "\n";
  std::ofstream del(dir / "delays.csv", std::ios::binary);
  del << "frame,mic,seconds\n";
  for (Eigen::Index t = 0; t < s.true_delays.rows(); ++t)
    for (Eigen::Index m = 0; m < s.true_delays.cols(); ++m)
      del << t << "," << (m + 1) << "," << fmt17(s.true_delays(t, m)) << "\n";
  if (!lab || !del) throw RuntimeFailure("cannot write scene files in " + dir.string());
}

inline void write_manifest(const fs::path& root, const Manifest& man) {
  std::ofstream f(root / kManifestName, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + (root / kManifestName).string());
  f << "adabeam-dataset 1\n";
  f << "sample_rate " << fmt17(man.sample_rate) << "\n";
  f << "n_mics " << man.n_mics << "\n";
  f << "frames " << man.frames << "\n";
  f << "seed " << man.seed << "\n";
  f << "splits";
  for (const auto& s : man.splits()) f << " " << s;
  f << "\n";
  for (const auto& s : man.scenes)
    f << "scene " << s.split << " " << s.dir << " " << (s.moving ? "moving" : "static") << " "
      << fmt17(s.snr_db) << "\n";
}

inline Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / kManifestName;
  std::ifstream f(path);
  if (!f) throw UsageError("dataset manifest not found: " + path.string());
  Manifest man;
  std::string line;
  std::getline(f, line);
  if (line != "adabeam-dataset 1") throw UsageError(path.string() + ": not a dataset manifest");
  while (std::getline(f, line)) {
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "sample_rate") in >> man.sample_rate;
    else if (key == "n_mics") in >> man.n_mics;
    else if (key == "frames") in >> man.frames;
    else if (key == "seed") in >> man.seed;
    else if (key == "splits" || key.empty()) continue;
    else if (key == "scene") {
      SceneEntry e;
      std::string cond;
      in >> e.split >> e.dir >> cond >> e.snr_db;
      if (cond != "static" && cond != "moving") throw UsageError(path.string() + ": bad condition " + cond);
      e.moving = cond == "moving";
      man.scenes.push_back(e);
    } else {
      throw UsageError(path.string() + ": unknown manifest key " + key);
    }
    if (in.fail()) throw UsageError(path.string() + ": malformed line: " + line);
  }
  return man;
}

inline sim::LabeledScene read_scene(const fs::path& root, const SceneEntry& e, const Manifest& man) {
  const fs::path dir = root / e.dir;
  sim::LabeledScene s;
  s.moving = e.moving;
  s.snr_db = e.snr_db;
  for (int m = 1; m <= man.n_mics; ++m) {
    s.waveforms.push_back(read_wav((dir / ("ch" + std::to_string(m) + ".wav")).string()));
    if (s.waveforms.back().sample_rate != man.sample_rate)
      throw UsageError(dir.string() + ": sample rate differs from manifest");
  }
  std::ifstream lab(dir / "labels.csv");
  if (!lab) throw UsageError("missing " + (dir / "labels.csv").string());
  std::string line;
  std::getline(lab, line);
  int t, k;
  char comma;
  while (lab >> t >> comma >> k) {
    if (t != static_cast<int>(s.frame_labels.size())) throw UsageError(dir.string() + ": labels out of order");
    s.frame_labels.push_back(k);
  }
  s.true_delays = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.frame_labels.size()), man.n_mics);
  std::ifstream del(dir / "delays.csv");
  if (!del) throw UsageError("missing " + (dir / "delays.csv").string());
  std::getline(del, line);
  while (std::getline(del, line)) {
    int frame, mic;
    double sec;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &frame, &mic, &sec) != 3 || frame < 0 ||
        frame >= s.true_delays.rows() || mic < 1 || mic > man.n_mics)
      throw UsageError(dir.string() + ": malformed delays.csv line: " + line);
    s.true_delays(frame, mic - 1) = sec;
  }
  return s;
}

/// Every scene of one split, in manifest order.
inline std::vector<sim::LabeledScene> read_split(const fs::path& root, const Manifest& man,
                                                 const std::string& split) {
  std::vector<sim::LabeledScene> out;
  for (const auto& e : man.scenes)
    if (e.split == split) out.push_back(read_scene(root, e, man));
  if (out.empty()) throw UsageError("split '" + split + "' not found in dataset " + root.string());
  return out;
}

}  // namespace adabeam::io
