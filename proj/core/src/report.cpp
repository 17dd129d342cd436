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

#include "esmfl/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "esmfl/errors.hpp"

namespace esmfl::report {

const std::vector<std::string> kColumns = {
    "round",
    "phase",
    "pruning_phase",
    "accuracy",
    "train_loss",
    "scheduled_keep",
    "global_nonzero",
    "compression_rate",
    "participants",
    "rejected",
    "bytes_uploaded",
    "bytes_downloaded",
    "bytes_total",
    "dense_bytes_uploaded",
    "dense_bytes_downloaded",
    "dense_bytes_total",
    "Client-Server Attestation Time (s)",
    "Data Provisioning / Round (s)",
    "Network Transmission Time / Round (s)",
    "Ecall Time / Round (s)",
    "Ocall Time / Round (s)",
    "Local Training Time / Round (s)",
    "Global Model Aggregation Time / Round (s)",
    "Total Time / Round (s)",
    "Wall Clock / Round (s)",
};

bool is_timing_column(const std::string& name) {
  return name.find("(s)") != std::string::npos;
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("rounds.csv: bad number '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("rounds.csv: bad integer '" + s + "'");
  }
  return v;
}

fl::Phase phase_from(const std::string& s) {
  for (auto p : {fl::Phase::kWarmup, fl::Phase::kAdmmPrune, fl::Phase::kMaskedFinetune,
                 fl::Phase::kMaskedPrune, fl::Phase::kDense}) {
    if (s == fl::phase_name(p)) return p;
  }
  throw Error("rounds.csv: unknown phase '" + s + "'");
}

}  // namespace

std::string csv_header() {
  std::string s;
  for (std::size_t i = 0; i < kColumns.size(); ++i) s += (i ? "," : "") + kColumns[i];
  return s;
}

std::string csv_row(const fl::RoundMetrics& m) {
  const auto& t = m.time;
  const std::vector<std::string> cells = {
      std::to_string(m.round),
      fl::phase_name(m.phase),
      m.pruning_phase ? "1" : "0",
      m.accuracy ? num(*m.accuracy) : "",
      num(m.train_loss),
      num(m.scheduled_keep),
      num(m.global_nonzero),
      num(m.compression_rate),
      std::to_string(m.participants),
      std::to_string(m.rejected),
      std::to_string(m.bytes_uploaded),
      std::to_string(m.bytes_downloaded),
      std::to_string(m.bytes_uploaded + m.bytes_downloaded),
      std::to_string(m.dense_bytes_uploaded),
      std::to_string(m.dense_bytes_downloaded),
      std::to_string(m.dense_bytes_uploaded + m.dense_bytes_downloaded),
      num(t.attestation),
      num(t.provisioning),
      num(t.transmission),
      num(t.ecall),
      num(t.ocall),
      num(t.local_training),
      num(t.aggregation),
      num(t.total()),
      num(m.wall_seconds),
  };
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s;
}

fl::RoundMetrics parse_csv_row(const std::string& line) {
  std::vector<std::string> c;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) c.push_back(cell);
  if (!line.empty() && line.back() == ',') c.emplace_back();
  if (c.size() != kColumns.size()) {
    throw Error("rounds.csv: expected " + std::to_string(kColumns.size()) + " cells, got " +
                std::to_string(c.size()));
  }
  fl::RoundMetrics m;
  m.round = to_u64(c[0]);
  m.phase = phase_from(c[1]);
  m.pruning_phase = c[2] == "1";
  if (!c[3].empty()) m.accuracy = to_double(c[3]);
  m.train_loss = to_double(c[4]);
  m.scheduled_keep = to_double(c[5]);
  m.global_nonzero = to_double(c[6]);
  m.compression_rate = to_double(c[7]);
  m.participants = to_u64(c[8]);
  m.rejected = to_u64(c[9]);
  m.bytes_uploaded = to_u64(c[10]);
  m.bytes_downloaded = to_u64(c[11]);
  m.dense_bytes_uploaded = to_u64(c[13]);
  m.dense_bytes_downloaded = to_u64(c[14]);
  m.time.attestation = to_double(c[16]);
  m.time.provisioning = to_double(c[17]);
  m.time.transmission = to_double(c[18]);
  m.time.ecall = to_double(c[19]);
  m.time.ocall = to_double(c[20]);
  m.time.local_training = to_double(c[21]);
  m.time.aggregation = to_double(c[22]);
  m.wall_seconds = to_double(c[24]);
  return m;
}

std::vector<fl::RoundMetrics> read_rounds_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw Error(path.string() + ": unexpected header");
  }
  std::vector<fl::RoundMetrics> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_csv_row(line));
  }
  return rows;
}

Summary summarize(const std::vector<fl::RoundMetrics>& rows) {
  if (rows.empty()) throw Error("no rounds to summarize");
  Summary s;
  s.rounds = rows.size();
  std::size_t pruning_rounds = 0;
  double pruning_time = 0.0;
  for (const auto& m : rows) {
    const std::uint64_t actual = m.bytes_uploaded + m.bytes_downloaded;
    const std::uint64_t dense = m.dense_bytes_uploaded + m.dense_bytes_downloaded;
    s.bytes_total += actual;
    s.dense_bytes_total += dense;
    const double total = m.time.total();
    if (m.pruning_phase) {
      s.pruning_bytes += actual;
      s.pruning_dense_bytes += dense;
      pruning_time += total;
      ++pruning_rounds;
    }
    s.total_time += total;
    s.wall_time += m.wall_seconds;
    if (m.wall_seconds > 0) {
      s.max_timing_gap = std::max(s.max_timing_gap, std::abs(total - m.wall_seconds) / m.wall_seconds);
    }
    s.rejected += m.rejected;
    if (m.accuracy) s.final_accuracy = m.accuracy;
  }
  s.final_compression_rate = rows.back().compression_rate;
  s.final_nonzero = rows.back().global_nonzero;
  if (s.pruning_dense_bytes > 0) {
    s.saving = 1.0 - static_cast<double>(s.pruning_bytes) / static_cast<double>(s.pruning_dense_bytes);
  }
  if (pruning_rounds > 0) s.mean_pruning_round_time = pruning_time / pruning_rounds;
  return s;
}

std::string summary_text(const Summary& s, const std::string& mode,
                         const std::optional<Summary>& dense_baseline) {
  std::ostringstream o;
  o << "mode: " << mode << "\n";
  o << "rounds: " << s.rounds << "\n";
  o << "final_accuracy: " << (s.final_accuracy ? num(*s.final_accuracy) : "n/a") << "\n";
  o << "final_compression_rate: " << num(s.final_compression_rate) << "\n";
  o << "final_nonzero_fraction: " << num(s.final_nonzero) << "\n";
  o << "bytes_total: " << s.bytes_total << "\n";
  o << "dense_bytes_total: " << s.dense_bytes_total << "\n";
  o << "pruning_phase_bytes: " << s.pruning_bytes << "\n";
  o << "pruning_phase_dense_bytes: " << s.pruning_dense_bytes << "\n";
  o << "saving_percent: " << num(100.0 * s.saving) << "\n";
  o << "rejected_updates: " << s.rejected << "\n";
  o << "total_time_s: " << num(s.total_time) << "\n";
  o << "wall_time_s: " << num(s.wall_time) << "\n";
  o << "mean_pruning_round_time_s: " << num(s.mean_pruning_round_time) << "\n";
  o << "max_timing_gap: " << num(s.max_timing_gap) << "\n";
  if (dense_baseline && s.total_time > 0) {
    o << "speedup_vs_dense: " << num(dense_baseline->total_time / s.total_time) << "\n";
  } else {
    o << "speedup_vs_dense: n/a\n";
  }
  return o.str();
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw Error("cannot write " + path.string());
  out_ << csv_header() << '\n';
  out_.flush();
}

void CsvWriter::write(const fl::RoundMetrics& m) {
  out_ << csv_row(m) << '\n';
  out_.flush();
}

Summary write_report(const std::vector<fl::RoundMetrics>& rows, const fl::ExperimentConfig& cfg,
                     const std::filesystem::path& dir) {
  if (rows.empty()) throw Error("no rounds to report");
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir / "rounds.csv");
    for (const auto& m : rows) w.write(m);
  }
  // Recompute from what was written so the summary is derivable from the CSV.
  const Summary s = summarize(read_rounds_csv(dir / "rounds.csv"));
  std::ofstream(dir / "summary.txt") << summary_text(s, fl::mode_name(cfg.mode));
  std::ofstream(dir / "config.cfg") << fl::to_text(cfg);
  return s;
}

}  // namespace esmfl::report
