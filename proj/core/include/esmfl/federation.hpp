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

// Partitioning, the round schedule and the experiment driver.
//
// Round schedule for W warm-up and P pruning rounds:
//   admm   : W dense rounds, then ADMM rounds whose budgets ramp
//            geometrically to the target over the first ramp_fraction * P
//            rounds, a hard projection of the global model, and masked
//            fine-tuning for the last finetune_fraction * P rounds.
//   masked : W dense rounds, then P rounds where every client magnitude-
//            prunes its own update (same budget ramp) and the server
//            projects the average back onto the budget.
//   dense  : W + P plain FedAvg rounds.
//
// Per round: publish global (ocall), clients download, train, encode and
// encrypt, transmit, enclave loads (ecalls) and averages. Warm-up and dense
// rounds upload dense blobs; pruning rounds upload CSR unless the dense
// encoding is smaller. Downloads are always dense.

#ifndef ESMFL_FEDERATION_HPP_
#define ESMFL_FEDERATION_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esmfl/comm_ledger.hpp"
#include "esmfl/config.hpp"
#include "esmfl/data.hpp"
#include "esmfl/enclave.hpp"
#include "esmfl/model.hpp"
#include "esmfl/pruning.hpp"

namespace esmfl::fl {

struct Partition {
  std::map<std::uint32_t, std::vector<std::size_t>> clients;
  std::string scheme;  // "iid" or "noniid(shards_per_client,shard_size)"
};

// Shuffled equal split; a remainder of dataset_size % num_clients examples
// is left unassigned. Throws ConfigError if num_clients > dataset_size.
Partition partition_iid(std::size_t dataset_size, std::size_t num_clients, std::uint64_t seed);

// Sort by label (stable), cut num_shards contiguous shards of shard_size,
// deal shards_per_client random shards to each client.
Partition partition_noniid(std::span<const std::uint8_t> labels, std::size_t num_clients,
                           std::size_t num_shards, std::size_t shard_size,
                           std::size_t shards_per_client, std::uint64_t seed);

enum class Phase { kWarmup, kAdmmPrune, kMaskedFinetune, kMaskedPrune, kDense };

const char* phase_name(Phase p);

struct RoundPlan {
  Phase phase = Phase::kWarmup;
  bool pruning_phase = false;
  int stage = 0;  // 0 = dense budgets, ramp_stages = target
  bool hard_prune_after = false;  // project the aggregate onto the target
};

std::vector<RoundPlan> make_schedule(const ExperimentConfig& cfg);

// Budgets for a ramp stage (stage == stages gives the target table).
pruning::SparsityConfig stage_budgets(const model::ParameterSet& ref,
                                      const pruning::KeepFractions& target, int stage,
                                      int stages);

struct LocalTraining {
  std::size_t epochs = 5;
  std::size_t batch_size = 10;
  double lr = 0.01;
  double momentum = 0.9;
};

struct ClientJob {
  Phase phase = Phase::kWarmup;
  const pruning::SparsityConfig* budgets = nullptr;  // admm/masked prune
  pruning::ADMMState* admm = nullptr;                // admm prune
  const pruning::PruneMask* mask = nullptr;          // masked fine-tune
  std::uint64_t seed = 0;                            // batch order
};

struct ClientResult {
  model::ParameterSet update;  // what the client uploads
  double mean_loss = 0.0;
  std::size_t examples = 0;
};

// Momentum SGD (velocity reset per round) over `indices` for the configured
// epochs, last partial batch included. Phase-specific behavior:
//   admm prune     : ADMM regularizer gradient each step, then one Z and one
//                    U update; the upload is W projected onto the budgets.
//   masked finetune: gradient and weights masked after every step.
//   masked prune   : upload is magnitude-pruned to the budgets.
ClientResult client_round(model::Network& net, const model::ParameterSet& global,
                          const data::Dataset& train, std::span<const std::size_t> indices,
                          const LocalTraining& hp, const ClientJob& job);

struct TimeBreakdown {
  double attestation = 0.0;
  double provisioning = 0.0;
  double transmission = 0.0;
  double ecall = 0.0;
  double ocall = 0.0;
  double local_training = 0.0;
  double aggregation = 0.0;

  double total() const {
    return attestation + provisioning + transmission + ecall + ocall + local_training +
           aggregation;
  }
};

struct RoundMetrics {
  std::size_t round = 0;
  Phase phase = Phase::kWarmup;
  std::optional<double> accuracy;  // empty when not evaluated this round
  double train_loss = 0.0;
  double scheduled_keep = 1.0;   // overall weight keep-fraction of the budgets
  double global_nonzero = 1.0;   // measured on the aggregated model's weights
  double compression_rate = 1.0;
  std::size_t participants = 0;
  std::size_t rejected = 0;
  std::uint64_t bytes_uploaded = 0;
  std::uint64_t bytes_downloaded = 0;
  std::uint64_t dense_bytes_uploaded = 0;
  std::uint64_t dense_bytes_downloaded = 0;
  bool pruning_phase = false;
  TimeBreakdown time;
  double wall_seconds = 0.0;  // measured independently, evaluation excluded
};

struct Datasets {
  data::Dataset train;
  data::Dataset test;
};

// Loads or synthesizes the configured datasets.
Datasets load_datasets(const ExperimentConfig& cfg);

struct RunOptions {
  // Called with each round's metrics as soon as the round completes.
  std::function<void(const RoundMetrics&)> on_round;
  // Test hook to corrupt an encrypted update on the wire.
  std::function<void(std::size_t round, std::uint32_t client, secure::Bytes& wire)> tamper;
  // Optional audit log of attestation and update events.
  secure::TranscriptLog* transcript = nullptr;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  codec::CommLedger ledger;
  model::ParameterSet final_params;
  std::size_t total_params = 0;
  enclave::BoundaryStats boundary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Datasets& data,
                                const RunOptions& options = {});

}  // namespace esmfl::fl

#endif  // ESMFL_FEDERATION_HPP_
