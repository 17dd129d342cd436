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

// Experiment reports: rounds.csv (one row per round, columns in kColumns
// order), summary.txt (key: value lines recomputed from the rows) and
// config.cfg (the effective configuration).

#ifndef ESMFL_REPORT_HPP_
#define ESMFL_REPORT_HPP_

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "esmfl/config.hpp"
#include "esmfl/federation.hpp"

namespace esmfl::report {

extern const std::vector<std::string> kColumns;

// Columns holding measured times; they differ between identical runs.
bool is_timing_column(const std::string& name);

std::string csv_header();
std::string csv_row(const fl::RoundMetrics& m);
// Inverse of csv_row. Throws Error on a malformed line.
fl::RoundMetrics parse_csv_row(const std::string& line);
std::vector<fl::RoundMetrics> read_rounds_csv(const std::filesystem::path& path);

struct Summary {
  std::size_t rounds = 0;
  std::optional<double> final_accuracy;
  double final_compression_rate = 1.0;
  double final_nonzero = 1.0;
  std::uint64_t bytes_total = 0;
  std::uint64_t dense_bytes_total = 0;
  std::uint64_t pruning_bytes = 0;
  std::uint64_t pruning_dense_bytes = 0;
  double saving = 0.0;  // 1 - pruning_bytes / pruning_dense_bytes
  double total_time = 0.0;
  double wall_time = 0.0;
  double mean_pruning_round_time = 0.0;  // 0 without pruning-phase rounds
  double max_timing_gap = 0.0;  // max over rounds of |total - wall| / wall
  std::size_t rejected = 0;
};

// Throws Error on empty input.
Summary summarize(const std::vector<fl::RoundMetrics>& rows);

std::string summary_text(const Summary& s, const std::string& mode,
                         const std::optional<Summary>& dense_baseline = std::nullopt);

// Appends rows as they arrive so an aborted run still leaves its metrics.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  void write(const fl::RoundMetrics& m);

 private:
  std::ofstream out_;
};

// Writes rounds.csv, summary.txt and config.cfg into `dir` (created if
// needed). Throws Error if `rows` is empty.
Summary write_report(const std::vector<fl::RoundMetrics>& rows, const fl::ExperimentConfig& cfg,
                     const std::filesystem::path& dir);

}  // namespace esmfl::report

#endif  // ESMFL_REPORT_HPP_
