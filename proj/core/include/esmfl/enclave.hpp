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

// Emulated SGX enclave on the aggregation server. Every boundary crossing
// copies its payload through a bounded trusted buffer and is timed: loading
// an encrypted update is an ecall, publishing the global model an ocall.
// Decrypted updates never leave the object; callers only see the aggregate.

#ifndef ESMFL_ENCLAVE_HPP_
#define ESMFL_ENCLAVE_HPP_

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esmfl/model.hpp"
#include "esmfl/secure_channel.hpp"
#include "esmfl/sparse_codec.hpp"

namespace esmfl::enclave {

struct AggregationInput {
  struct Entry {
    std::uint32_t client_id = 0;
    model::ParameterSet params;
    std::uint64_t example_count = 0;
  };
  std::vector<Entry> entries;
};

// Weighted mean by example_count, accumulated in ascending client_id order
// as p_first + sum_k (w_k / W) (p_k - p_first). Identical inputs therefore
// average to themselves exactly. Throws Error on empty input or zero weight,
// ShapeError on incongruent parameter sets.
model::ParameterSet fedavg(const AggregationInput& input);

// An encrypted update plus the example count used as its FedAvg weight.
struct Submission {
  secure::EncryptedUpdate update;
  std::uint64_t example_count = 0;
};

struct Rejection {
  std::uint32_t client_id = 0;
  std::string reason;
};

struct LoadReport {
  std::size_t accepted = 0;
  std::vector<Rejection> rejected;
};

struct BoundaryStats {
  std::uint64_t ecalls = 0;
  std::uint64_t ocalls = 0;
  double ecall_seconds = 0.0;
  double ocall_seconds = 0.0;
  double aggregation_seconds = 0.0;
};

class Enclave {
 public:
  static constexpr std::size_t kDefaultTrustedBytes = std::size_t{128} << 20;

  explicit Enclave(const secure::Seed& identity_seed,
                   std::size_t trusted_bytes = kDefaultTrustedBytes,
                   secure::TranscriptLog* log = nullptr);

  const secure::EnclaveIdentity& identity() const noexcept { return identity_; }
  const secure::KeyManager& key_manager() const noexcept { return keys_; }
  std::size_t trusted_bytes() const noexcept { return trusted_bytes_; }

  // Runs the attestation handshake for `client_id` and registers its key.
  secure::AttestationResult attest(std::uint32_t client_id, secure::DeterministicRng& rng,
                                   std::uint32_t round = 0);

  // One ecall per submission: copy in, decrypt, decode, stage for the next
  // aggregate(). Failing submissions are dropped and reported; so is any
  // update whose layout differs from the last published model.
  LoadReport load(std::span<const Submission> submissions);

  std::size_t staged() const;

  // FedAvg over the staged updates; clears the stage. Throws Error when
  // nothing is staged.
  model::ParameterSet aggregate();

  // One ocall: serializes `params` as a dense blob and copies it out.
  codec::Bytes publish(const model::ParameterSet& params);

  BoundaryStats stats() const;

 private:
  void log_event(std::uint32_t client_id, std::uint32_t round, const char* status,
                 const std::string& reason);

  secure::EnclaveIdentity identity_;
  secure::KeyManager keys_;
  std::size_t trusted_bytes_;
  secure::TranscriptLog* log_;

  mutable std::mutex mu_;
  std::vector<std::uint8_t> trusted_buffer_;
  AggregationInput staged_;
  std::optional<model::ParameterSet> reference_;
  BoundaryStats stats_;
};

}  // namespace esmfl::enclave

#endif  // ESMFL_ENCLAVE_HPP_
