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


// adabeam: scene generation, staged training, evaluation and diagnostics
// for the adaptive LSTM beamformer.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
// numeric failure.

#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "adabeam/cli/commands.hpp"

namespace {

void add_common(CLI::App* cmd, adabeam::cli::Options& o) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--set", o.overrides, "override a config key, KEY=VALUE")->take_all();
  cmd->add_flag("--deterministic", o.deterministic, "single worker, no timing output");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace adabeam;
  cli::Options o;
  CLI::App app{"adabeam: adaptive LSTM beamforming with a jointly trained acoustic model"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multichannel dataset");
  add_common(gen, o);
  gen->add_option("--out", o.out, "dataset directory (default: data_dir from the config)");

  auto* train = app.add_subcommand("train", "run one training stage");
  add_common(train, o);
  train->add_option("--stage", o.stage, "stage 1..5")->required();
  train->add_option("--init", o.init, "previous stage checkpoint (default: OUT/stage<N-1>.ckpt)");
  train->add_option("--out", o.out, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint on one split");
  add_common(eval, o);
  eval->add_option("--init", o.init, "checkpoint")->required();
  eval->add_option("--split", o.split, "train|dev|test");
  eval->add_option("--out", o.out, "write eval_<split>.{txt,csv} here");
  eval->add_flag("--per-condition", o.per_condition, "break down by static/moving and SNR");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  add_common(grad, o);
  grad->add_flag("--tiny", o.tiny, "tiny dimensions instead of the configured model");
  grad->add_option("--probes", o.probes, "probes per tensor (default: 200 per check)");
  grad->add_flag("--inject-fault", o.inject_fault, "corrupt one gradient (self-test)")->group("");

  auto* dump = app.add_subcommand("dump-features", "export log-Mel, filters or posteriors for one scene");
  add_common(dump, o);
  dump->add_option("--init", o.init, "checkpoint (stage >= 2)")->required();
  dump->add_option("--what", o.what, "logmel|filters|posteriors")->required();
  dump->add_option("--split", o.split, "train|dev|test");
  dump->add_option("--scene", o.scene, "scene index within the split");
  dump->add_option("--out", o.out, "output directory")->required();
  dump->add_flag("--oracle-filters", o.oracle_filters, "feed delay-and-sum filters to the network")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cli::cmd_gen_data(o, std::cout);
    if (*train) return cli::cmd_train(o, std::cout);
    if (*eval) return cli::cmd_eval(o, std::cout);
    if (*grad) return cli::cmd_gradcheck(o, std::cout);
    if (*dump) return cli::cmd_dump_features(o, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
