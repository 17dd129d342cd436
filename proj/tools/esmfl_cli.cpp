// Copyright 2026 The ESMFL Simulator Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// esmfl run      --config exp.cfg --out results/ [overrides]
// esmfl validate --config exp.cfg [overrides]
// esmfl compare  --dense DIR --sparse DIR

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "esmfl/config.hpp"
#include "esmfl/errors.hpp"
#include "esmfl/federation.hpp"
#include "esmfl/report.hpp"
#include "esmfl/secure_channel.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> clients_per_round;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--mode", o.mode, "Pruning mode")
      ->check(CLI::IsMember({"admm", "masked", "dense"}));
  cmd->add_option("--seed", o.seed, "Experiment seed");
  cmd->add_option("--rounds", o.rounds, "Total rounds (warm-up/pruning ratio kept)");
  cmd->add_option("--clients", o.clients, "Number of clients");
  cmd->add_option("--clients-per-round", o.clients_per_round, "Clients sampled per round");
}

esmfl::fl::ExperimentConfig build_config(const Overrides& o) {
  using namespace esmfl::fl;
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.mode) cfg.mode = parse_mode(*o.mode);
  if (o.seed) cfg.seed = *o.seed;
  if (o.rounds) set_total_rounds(cfg, *o.rounds);
  if (o.clients) cfg.num_clients = *o.clients;
  if (o.clients_per_round) cfg.clients_per_round = *o.clients_per_round;
  validate(cfg);
  return cfg;
}

int cmd_validate(const Overrides& o) {
  const auto cfg = build_config(o);
  std::cout << esmfl::fl::to_text(cfg);
  std::cout << "# total rounds: " << cfg.total_rounds() << "\n# config OK\n";
  return 0;
}

int cmd_run(const Overrides& o, const std::string& out_dir) {
  using namespace esmfl;
  const auto started = std::chrono::steady_clock::now();
  const auto cfg = build_config(o);
  const std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);

  spdlog::info("loading {} data from {}", cfg.dataset, fl::resolve_data_dir(cfg).string());
  const auto data = fl::load_datasets(cfg);
  spdlog::info("train {} / test {} examples, mode {}, {} rounds", data.train.size(),
               data.test.size(), fl::mode_name(cfg.mode), cfg.total_rounds());

  std::optional<secure::TranscriptLog> transcript;
  if (cfg.transcript) {
    std::filesystem::remove(out / "transcript.jsonl");
    transcript.emplace(out / "transcript.jsonl");
  }

  std::vector<fl::RoundMetrics> rows;
  report::CsvWriter live(out / "rounds.csv");
  fl::RunOptions opts;
  opts.transcript = transcript ? &*transcript : nullptr;
  opts.on_round = [&](const fl::RoundMetrics& m) {
    rows.push_back(m);
    live.write(m);
    spdlog::info("round {:3d} {:15s} acc {} keep {:.4f} nz {:.4f} up {} B total {:.2f}s",
                 m.round, fl::phase_name(m.phase),
                 m.accuracy ? fmt::format("{:.4f}", *m.accuracy) : std::string("  -   "),
                 m.scheduled_keep, m.global_nonzero, m.bytes_uploaded, m.time.total());
  };

  try {
    fl::run_experiment(cfg, data, opts);
  } catch (const std::exception& e) {
    spdlog::error("run aborted: {}", e.what());
    if (!rows.empty()) report::write_report(rows, cfg, out);
    return 2;
  }
  const auto summary = report::write_report(rows, cfg, out);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ofstream(out / "run_info.txt") << "elapsed_seconds: " << elapsed << "\n"
                                      << "train_examples: " << data.train.size() << "\n"
                                      << "test_examples: " << data.test.size() << "\n";
  std::cout << report::summary_text(summary, fl::mode_name(cfg.mode));
  return 0;
}

int cmd_compare(const std::string& dense_dir, const std::string& sparse_dir) {
  using namespace esmfl::report;
  const auto dense = summarize(read_rounds_csv(std::filesystem::path(dense_dir) / "rounds.csv"));
  const auto sparse = summarize(read_rounds_csv(std::filesystem::path(sparse_dir) / "rounds.csv"));
  std::cout << summary_text(sparse, "compared", dense);
  std::cout << "dense_mean_pruning_round_time_s: " << dense.mean_pruning_round_time << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with emulated enclave aggregation and ADMM pruning"};
  app.require_subcommand(1);

  Overrides run_o, val_o;
  std::string out_dir = "results";
  auto* run = app.add_subcommand("run", "Run an experiment and write its report");
  add_overrides(run, run_o);
  run->add_option("--out", out_dir, "Output directory");

  auto* val = app.add_subcommand("validate", "Check a config without running it");
  add_overrides(val, val_o);

  std::string dense_dir, sparse_dir;
  auto* cmp = app.add_subcommand("compare", "Compare a sparse run against a dense baseline");
  cmp->add_option("--dense", dense_dir, "Dense-mode report directory")->required();
  cmp->add_option("--sparse", sparse_dir, "Sparse-mode report directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_o, out_dir);
    if (*val) return cmd_validate(val_o);
    if (*cmp) return cmd_compare(dense_dir, sparse_dir);
  } catch (const esmfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
