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

#include "esmfl/comm_ledger.hpp"

#include <numeric>

namespace esmfl::codec {

RoundVolume account_round(std::span<const std::uint64_t> uploads, std::uint64_t download_size,
                          std::size_t num_clients) {
  RoundVolume v;
  v.uploaded = std::accumulate(uploads.begin(), uploads.end(), std::uint64_t{0});
  v.downloaded = download_size * num_clients;
  v.total = v.uploaded + v.downloaded;
  return v;
}

void CommLedger::record(int round, bool pruning_phase, const RoundVolume& actual,
                        const RoundVolume& dense) {
  entries_.push_back({round, pruning_phase, actual, dense});
}

std::uint64_t CommLedger::total_bytes() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.actual.total;
  return n;
}

std::uint64_t CommLedger::pruning_actual_bytes() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) {
    if (e.pruning_phase) n += e.actual.total;
  }
  return n;
}

std::uint64_t CommLedger::pruning_dense_bytes() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) {
    if (e.pruning_phase) n += e.dense.total;
  }
  return n;
}

double CommLedger::saving() const {
  const auto dense = pruning_dense_bytes();
  if (dense == 0) return 0.0;
  return 1.0 - static_cast<double>(pruning_actual_bytes()) / static_cast<double>(dense);
}

}  // namespace esmfl::codec
