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

#include "esmfl/enclave.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "esmfl/errors.hpp"

namespace esmfl::enclave {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

model::ParameterSet fedavg(const AggregationInput& input) {
  if (input.entries.empty()) throw Error("fedavg: no updates to aggregate");
  std::vector<std::size_t> order(input.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return input.entries[a].client_id < input.entries[b].client_id;
  });

  double total = 0.0;
  for (const auto& e : input.entries) {
    if (e.example_count == 0) {
      throw Error("fedavg: client " + std::to_string(e.client_id) + " has zero examples");
    }
    total += static_cast<double>(e.example_count);
  }

  const auto& first = input.entries[order[0]].params;
  for (std::size_t k = 1; k < order.size(); ++k) {
    model::check_congruent(first.layers, input.entries[order[k]].params.layers);
  }

  model::ParameterSet out = first;
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& e = input.entries[order[k]];
    const double w = static_cast<double>(e.example_count) / total;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      auto ow = out.layers[l].weight.values();
      const auto fw = first.layers[l].weight.values();
      const auto ew = e.params.layers[l].weight.values();
      for (std::size_t i = 0; i < ow.size(); ++i) ow[i] += w * (ew[i] - fw[i]);
      auto ob = out.layers[l].bias.values();
      const auto fb = first.layers[l].bias.values();
      const auto eb = e.params.layers[l].bias.values();
      for (std::size_t i = 0; i < ob.size(); ++i) ob[i] += w * (eb[i] - fb[i]);
    }
  }
  return out;
}

Enclave::Enclave(const secure::Seed& identity_seed, std::size_t trusted_bytes,
                 secure::TranscriptLog* log)
    : identity_(identity_seed), trusted_bytes_(trusted_bytes), log_(log) {
  if (trusted_bytes_ == 0) throw ConfigError("enclave trusted memory must be positive");
}

secure::AttestationResult Enclave::attest(std::uint32_t client_id, secure::DeterministicRng& rng,
                                          std::uint32_t round) {
  return secure::attest_and_exchange(client_id, identity_, keys_, rng, round, log_);
}

void Enclave::log_event(std::uint32_t client_id, std::uint32_t round, const char* status,
                        const std::string& reason) {
  if (!log_) return;
  std::string line = "{\"event\":\"update\",\"client_id\":" + std::to_string(client_id) +
                     ",\"round\":" + std::to_string(round) + ",\"status\":\"" + status + "\"";
  if (!reason.empty()) {
    std::string esc;
    for (char c : reason) {
      if (c == '"' || c == '\\') esc.push_back('\\');
      esc.push_back(c);
    }
    line += ",\"reason\":\"" + esc + "\"";
  }
  log_->append(line + "}");
}

LoadReport Enclave::load(std::span<const Submission> submissions) {
  LoadReport report;
  for (const auto& sub : submissions) {
    const auto& enc = sub.update;
    const auto t0 = Clock::now();
    std::string reason;
    try {
      if (sub.example_count == 0) throw EnclaveError("submission carries zero examples");
      if (enc.ciphertext.size() > trusted_bytes_) {
        throw EnclaveError("update of " + std::to_string(enc.ciphertext.size()) +
                           " bytes exceeds trusted memory");
      }
      std::lock_guard lock(mu_);
      trusted_buffer_.assign(enc.ciphertext.begin(), enc.ciphertext.end());
      secure::EncryptedUpdate inside{enc.version, enc.client_id, enc.round, enc.payload_format,
                                     enc.nonce, trusted_buffer_};
      const secure::PlaintextUpdate plain =
          keys_.decrypt_update(inside, secure::TrustedAccess{});
      if (codec::peek_format(plain.bytes()) != plain.format()) {
        throw EnclaveError("payload format does not match the header");
      }
      model::ParameterSet params = codec::decode(plain.bytes());
      if (reference_) model::check_congruent(reference_->layers, params.layers);
      if (!staged_.entries.empty()) {
        model::check_congruent(staged_.entries.front().params.layers, params.layers);
      }
      staged_.entries.push_back({enc.client_id, std::move(params), sub.example_count});
    } catch (const Error& e) {
      reason = e.what();
    }
    const double dt = seconds_since(t0);
    {
      std::lock_guard lock(mu_);
      ++stats_.ecalls;
      stats_.ecall_seconds += dt;
    }
    if (reason.empty()) {
      ++report.accepted;
      log_event(enc.client_id, enc.round, "accepted", {});
    } else {
      report.rejected.push_back({enc.client_id, reason});
      log_event(enc.client_id, enc.round, "rejected", reason);
    }
  }
  return report;
}

std::size_t Enclave::staged() const {
  std::lock_guard lock(mu_);
  return staged_.entries.size();
}

model::ParameterSet Enclave::aggregate() {
  std::lock_guard lock(mu_);
  const auto t0 = Clock::now();
  AggregationInput input = std::move(staged_);
  staged_.entries.clear();
  model::ParameterSet out = fedavg(input);
  stats_.aggregation_seconds += seconds_since(t0);
  return out;
}

codec::Bytes Enclave::publish(const model::ParameterSet& params) {
  std::lock_guard lock(mu_);
  const auto t0 = Clock::now();
  codec::Bytes inside = codec::encode(params, codec::Format::kDense);
  if (inside.size() > trusted_bytes_) {
    throw EnclaveError("published model exceeds trusted memory");
  }
  trusted_buffer_.assign(inside.begin(), inside.end());
  codec::Bytes out(trusted_buffer_.begin(), trusted_buffer_.end());
  reference_ = params;
  ++stats_.ocalls;
  stats_.ocall_seconds += seconds_since(t0);
  return out;
}

BoundaryStats Enclave::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace esmfl::enclave
