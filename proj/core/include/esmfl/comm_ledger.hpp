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

#ifndef ESMFL_COMM_LEDGER_HPP_
#define ESMFL_COMM_LEDGER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace esmfl::codec {

struct RoundVolume {
  std::uint64_t uploaded = 0;
  std::uint64_t downloaded = 0;
  std::uint64_t total = 0;

  friend bool operator==(const RoundVolume&, const RoundVolume&) = default;
};

// total = sum(uploads) + num_clients * download_size
RoundVolume account_round(std::span<const std::uint64_t> uploads, std::uint64_t download_size,
                          std::size_t num_clients);

// Per-experiment communication totals. Each round is recorded twice: the
// bytes actually sent and the bytes an all-dense exchange of the same models
// would have needed. Saving is measured over pruning-phase rounds only.
class CommLedger {
 public:
  struct Entry {
    int round = 0;
    bool pruning_phase = false;
    RoundVolume actual;
    RoundVolume dense;
  };

  void record(int round, bool pruning_phase, const RoundVolume& actual, const RoundVolume& dense);

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::uint64_t total_bytes() const;
  std::uint64_t pruning_actual_bytes() const;
  std::uint64_t pruning_dense_bytes() const;

  // 1 - actual/dense over the pruning phase, 0 when there was none.
  double saving() const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace esmfl::codec

#endif  // ESMFL_COMM_LEDGER_HPP_
