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

// Experiment configuration. Files are INI-style key = value text with the
// sections [model], [data], [federation], [pruning] and [crypto]; every key
// is optional. Inside [pruning], any key that is not one of the named
// settings is read as `layer_id = keep_fraction`.

#ifndef ESMFL_CONFIG_HPP_
#define ESMFL_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esmfl/model.hpp"
#include "esmfl/pruning.hpp"

namespace esmfl::fl {

enum class Mode { kAdmm, kMasked, kDense };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct ExperimentConfig {
  // [model]
  std::string arch = "lenet5";  // lenet5 | small_convnet | mlp
  std::vector<std::size_t> hidden = {64};  // mlp only

  // [data]
  std::string dataset = "mnist";  // mnist | cifar10 | synthetic
  std::string data_dir;           // empty: $ESMFL_DATA_DIR, then ./data
  std::string partition = "iid";  // iid | noniid
  std::size_t shard_size = 300;
  std::size_t shards_per_client = 2;
  std::size_t train_examples = 0;  // 0: whole training set
  std::size_t test_examples = 0;   // 0: whole test set
  bool synthetic_fallback = false;  // cifar10 without files: use blobs
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_test = 500;
  model::SampleShape synthetic_shape = {1, 8, 8};
  std::size_t synthetic_classes = 4;
  double synthetic_spread = 1.0;

  // [federation]
  std::size_t num_clients = 100;
  std::size_t clients_per_round = 10;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 10;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t warmup_rounds = 10;
  std::size_t pruning_rounds = 50;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1;

  // [pruning]
  Mode mode = Mode::kAdmm;
  double rho = pruning::kDefaultRho;
  int ramp_stages = 4;
  double ramp_fraction = 0.24;      // share of pruning rounds spent ramping
  double finetune_fraction = 0.4;   // share spent in masked fine-tuning
  pruning::KeepFractions keep;

  // [crypto]
  double uplink_mbps = 10.0;    // megabit/s per client, 0 disables delay
  double downlink_mbps = 50.0;
  std::size_t trusted_memory_mb = 128;
  bool transcript = true;

  std::size_t total_rounds() const { return warmup_rounds + pruning_rounds; }
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// key = value text that parse_config reads back to the same config.
std::string to_text(const ExperimentConfig& cfg);

// Throws ConfigError describing the first problem found.
void validate(const ExperimentConfig& cfg);

// Rescales warm-up and pruning rounds to a new total, keeping their ratio.
void set_total_rounds(ExperimentConfig& cfg, std::size_t rounds);

model::ModelArch make_arch(const ExperimentConfig& cfg, model::SampleShape input,
                           std::size_t num_classes);

std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg);

}  // namespace esmfl::fl

#endif  // ESMFL_CONFIG_HPP_
