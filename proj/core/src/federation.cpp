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

#include "esmfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "esmfl/errors.hpp"
#include "esmfl/secure_channel.hpp"
#include "esmfl/sparse_codec.hpp"

namespace esmfl::fl {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix(mix(mix(seed) ^ a) ^ b);
}

// Unbiased integer in [0, n) by rejection; stable across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<std::uint32_t> sample_clients(std::mt19937_64& rng, std::size_t num_clients,
                                          std::size_t k) {
  std::vector<std::uint32_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + uniform_index(rng, num_clients - i)]);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double scheduled_keep(const pruning::SparsityConfig& cfg, const model::ParameterSet& ref) {
  std::size_t kept = 0;
  for (const auto& l : ref.layers) kept += cfg.budget(l.id, l.weight.size());
  return static_cast<double>(kept) / static_cast<double>(ref.weight_count());
}

double weight_nonzero_fraction(const model::ParameterSet& p) {
  std::size_t nz = 0;
  for (const auto& l : p.layers) nz += count_nonzero(l.weight);
  return static_cast<double>(nz) / static_cast<double>(p.weight_count());
}

data::Dataset slice(const data::Dataset& ds, std::size_t begin, std::size_t end) {
  data::Dataset out;
  out.sample_shape = ds.sample_shape;
  out.num_classes = ds.num_classes;
  const std::size_t d = ds.sample_size();
  out.pixels.assign(ds.pixels.begin() + static_cast<std::ptrdiff_t>(begin * d),
                    ds.pixels.begin() + static_cast<std::ptrdiff_t>(end * d));
  out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Datasets blobs(model::SampleShape shape, std::size_t classes, std::size_t n_train,
               std::size_t n_test, double spread, std::uint64_t seed) {
  data::BlobSpec spec{shape, classes, n_train + n_test, spread, seed};
  const auto all = data::make_gaussian_blobs(spec);
  return {slice(all, 0, n_train), slice(all, n_train, n_train + n_test)};
}

std::filesystem::path first_existing(const std::vector<std::filesystem::path>& candidates) {
  for (const auto& p : candidates) {
    if (std::filesystem::exists(p)) return p;
  }
  return {};
}

}  // namespace

Partition partition_iid(std::size_t dataset_size, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (num_clients > dataset_size) {
    throw ConfigError("cannot split " + std::to_string(dataset_size) + " examples over " +
                      std::to_string(num_clients) + " clients");
  }
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive(seed, 0x11d));
  shuffle(perm, rng);
  const std::size_t per = dataset_size / num_clients;
  Partition p;
  p.scheme = "iid";
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(k * per),
                                 perm.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    std::sort(idx.begin(), idx.end());
    p.clients.emplace(static_cast<std::uint32_t>(k), std::move(idx));
  }
  return p;
}

Partition partition_noniid(std::span<const std::uint8_t> labels, std::size_t num_clients,
                           std::size_t num_shards, std::size_t shard_size,
                           std::size_t shards_per_client, std::uint64_t seed) {
  if (num_clients == 0 || shard_size == 0 || shards_per_client == 0) {
    throw ConfigError("non-IID partition parameters must be positive");
  }
  if (num_shards != num_clients * shards_per_client) {
    throw ConfigError("num_shards (" + std::to_string(num_shards) + ") must equal num_clients x " +
                      "shards_per_client (" + std::to_string(num_clients * shards_per_client) +
                      ")");
  }
  if (num_shards * shard_size > labels.size()) {
    throw ConfigError(std::to_string(num_shards) + " shards of " + std::to_string(shard_size) +
                      " exceed the " + std::to_string(labels.size()) + " available examples");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  std::vector<std::size_t> shards(num_shards);
  std::iota(shards.begin(), shards.end(), std::size_t{0});
  std::mt19937_64 rng(derive(seed, 0x2011d));
  shuffle(shards, rng);

  Partition p;
  p.scheme = "noniid(" + std::to_string(shards_per_client) + "," + std::to_string(shard_size) + ")";
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::vector<std::size_t> idx;
    idx.reserve(shards_per_client * shard_size);
    for (std::size_t s = 0; s < shards_per_client; ++s) {
      const std::size_t shard = shards[k * shards_per_client + s];
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(shard * shard_size);
      idx.insert(idx.end(), first, first + static_cast<std::ptrdiff_t>(shard_size));
    }
    std::sort(idx.begin(), idx.end());
    p.clients.emplace(static_cast<std::uint32_t>(k), std::move(idx));
  }
  return p;
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kWarmup:
      return "warmup";
    case Phase::kAdmmPrune:
      return "admm_prune";
    case Phase::kMaskedFinetune:
      return "masked_finetune";
    case Phase::kMaskedPrune:
      return "masked_prune";
    case Phase::kDense:
      return "dense";
  }
  return "?";
}

std::vector<RoundPlan> make_schedule(const ExperimentConfig& cfg) {
  const std::size_t W = cfg.warmup_rounds, P = cfg.pruning_rounds;
  const int stages = cfg.ramp_stages;
  std::vector<RoundPlan> plan;
  plan.reserve(W + P);
  for (std::size_t r = 0; r < W; ++r) {
    plan.push_back({cfg.mode == Mode::kDense ? Phase::kDense : Phase::kWarmup, false, 0, false});
  }
  if (P == 0) return plan;

  std::size_t F = cfg.mode == Mode::kAdmm
                      ? static_cast<std::size_t>(std::llround(cfg.finetune_fraction * P))
                      : 0;
  F = std::min(F, P - 1);
  std::size_t R = static_cast<std::size_t>(std::llround(cfg.ramp_fraction * P));
  R = std::min(R, P - F);

  for (std::size_t j = 0; j < P; ++j) {
    RoundPlan rp;
    rp.pruning_phase = true;
    if (cfg.mode == Mode::kDense) {
      rp.phase = Phase::kDense;
      plan.push_back(rp);
      continue;
    }
    rp.stage = j < R ? std::min(stages, static_cast<int>(j * stages / R) + 1) : stages;
    if (cfg.mode == Mode::kMasked) {
      rp.phase = Phase::kMaskedPrune;
      rp.hard_prune_after = true;
    } else if (j >= P - F) {
      rp.phase = Phase::kMaskedFinetune;
    } else {
      rp.phase = Phase::kAdmmPrune;
      rp.hard_prune_after = j + 1 == P - F;
    }
    plan.push_back(rp);
  }
  return plan;
}

pruning::SparsityConfig stage_budgets(const model::ParameterSet& ref,
                                      const pruning::KeepFractions& target, int stage,
                                      int stages) {
  return pruning::make_sparsity_config(ref, pruning::ramp_fractions(target, stage, stages));
}

ClientResult client_round(model::Network& net, const model::ParameterSet& global,
                          const data::Dataset& train, std::span<const std::size_t> indices,
                          const LocalTraining& hp, const ClientJob& job) {
  if (indices.empty()) throw DataError("client has no training examples");
  if (hp.batch_size == 0) throw ConfigError("batch size must be positive");
  const bool admm = job.phase == Phase::kAdmmPrune;
  const bool masked_ft = job.phase == Phase::kMaskedFinetune;
  if (admm != (job.admm != nullptr)) {
    throw ConfigError("ADMM state must be given exactly in the admm_prune phase");
  }
  if (masked_ft && !job.mask) throw ConfigError("masked fine-tuning needs a mask");
  if ((admm || job.phase == Phase::kMaskedPrune) && !job.budgets) {
    throw ConfigError("pruning phases need layer budgets");
  }

  ClientResult out;
  model::ParameterSet p = global;
  if (masked_ft) pruning::apply_mask(p, *job.mask);
  model::MomentumSgd opt(hp.lr, hp.momentum);
  std::mt19937_64 rng(job.seed);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  model::Gradient g;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t n = std::min(hp.batch_size, order.size() - start);
      const auto batch = data::make_batch(train, std::span(order).subspan(start, n));
      loss_sum += net.loss_and_gradient(p, batch, g);
      ++batches;
      if (admm) pruning::add_admm_reg_gradient(p, *job.admm, g);
      if (masked_ft) pruning::apply_mask(g, *job.mask);
      opt.step(p, g);
      if (masked_ft) pruning::apply_mask(p, *job.mask);
    }
  }
  out.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  out.examples = indices.size();

  if (admm) {
    *job.admm = pruning::admm_z_step(p, std::move(*job.admm));
    *job.admm = pruning::admm_u_step(p, std::move(*job.admm));
    out.update = pruning::magnitude_mask_update(p, *job.budgets);
  } else if (job.phase == Phase::kMaskedPrune) {
    out.update = pruning::magnitude_mask_update(p, *job.budgets);
  } else {
    out.update = std::move(p);
  }
  return out;
}

Datasets load_datasets(const ExperimentConfig& cfg) {
  Datasets d;
  const auto dir = resolve_data_dir(cfg);
  if (cfg.dataset == "mnist") {
    const auto root = first_existing({dir / "train-images-idx3-ubyte", dir / "mnist"});
    if (root.empty()) {
      throw DataError("MNIST not found under " + dir.string() +
                      " (set ESMFL_DATA_DIR or [data] dir)");
    }
    const auto mdir = root.filename() == "mnist" ? root : dir;
    d.train = data::load_mnist_train(mdir);
    d.test = data::load_mnist_test(mdir);
  } else if (cfg.dataset == "cifar10") {
    const auto root = first_existing({dir / "cifar-10-batches-bin" / "data_batch_1.bin",
                                      dir / "data_batch_1.bin"});
    if (!root.empty()) {
      const auto cdir = root.parent_path();
      std::vector<std::filesystem::path> files;
      for (int i = 1; i <= 5; ++i) files.push_back(cdir / ("data_batch_" + std::to_string(i) + ".bin"));
      d.train = data::load_cifar10_bin(files);
      d.test = data::load_cifar10_bin({cdir / "test_batch.bin"});
    } else if (cfg.synthetic_fallback) {
      d = blobs({3, 32, 32}, 10, cfg.synthetic_train, cfg.synthetic_test, cfg.synthetic_spread,
                derive(cfg.seed, 0xc1fa));
    } else {
      throw DataError("CIFAR-10 binary batches not found under " + dir.string() +
                      " and synthetic_fallback is off");
    }
  } else {
    d = blobs(cfg.synthetic_shape, cfg.synthetic_classes, cfg.synthetic_train, cfg.synthetic_test,
              cfg.synthetic_spread, derive(cfg.seed, 0xb10b));
  }
  if (cfg.train_examples > 0) d.train = data::head(d.train, cfg.train_examples);
  if (cfg.test_examples > 0) d.test = data::head(d.test, cfg.test_examples);
  return d;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Datasets& data,
                                const RunOptions& options) {
  validate(cfg);
  const auto& train = data.train;
  const auto arch = make_arch(cfg, train.sample_shape, train.num_classes);
  model::Network net(arch);
  model::ParameterSet global = codec::round_to_fp32(net.init(cfg.seed));

  ExperimentResult result;
  result.total_params = global.param_count();

  const Partition part =
      cfg.partition == "iid"
          ? partition_iid(train.size(), cfg.num_clients, cfg.seed)
          : partition_noniid(train.labels, cfg.num_clients,
                             cfg.num_clients * cfg.shards_per_client, cfg.shard_size,
                             cfg.shards_per_client, cfg.seed);
  for (const auto& [id, idx] : part.clients) {
    if (idx.empty()) throw ConfigError("client " + std::to_string(id) + " received no examples");
  }

  const auto schedule = make_schedule(cfg);
  const int stages = cfg.ramp_stages;
  std::optional<pruning::SparsityConfig> target;
  if (cfg.mode != Mode::kDense && cfg.pruning_rounds > 0) {
    target = stage_budgets(global, cfg.keep, stages, stages);
  }

  secure::DeterministicRng crypto_rng(derive(cfg.seed, 0xc0de));
  enclave::Enclave enclave(crypto_rng.next_seed(), cfg.trusted_memory_mb << 20,
                           options.transcript);
  std::map<std::uint32_t, secure::UpdateEncryptor> encryptors;
  std::map<std::uint32_t, pruning::ADMMState> admm_states;
  std::optional<pruning::PruneMask> shared_mask;
  std::mt19937_64 sampler(derive(cfg.seed, 0x5a3b1e));

  const LocalTraining hp{cfg.local_epochs, cfg.batch_size, cfg.lr, cfg.momentum};
  const std::uint64_t dense_wire =
      secure::kWireHeaderBytes + codec::encoded_size(global, codec::Format::kDense) +
      secure::kTagBytes;

  for (std::size_t r = 0; r < schedule.size(); ++r) {
    const RoundPlan& plan = schedule[r];
    const auto round_start = Clock::now();
    const auto round32 = static_cast<std::uint32_t>(r);
    RoundMetrics m;
    m.round = r;
    m.phase = plan.phase;
    m.pruning_phase = plan.pruning_phase;
    TimeBreakdown& tb = m.time;

    if (r == 0) {
      const auto t0 = Clock::now();
      for (std::uint32_t c = 0; c < cfg.num_clients; ++c) {
        auto res = enclave.attest(c, crypto_rng, 0);
        encryptors.emplace(c, secure::UpdateEncryptor(res.client_key));
      }
      tb.attestation = since(t0);
    }

    if (plan.phase == Phase::kMaskedFinetune && !shared_mask) {
      // The hard-prune round accepted nothing; prune the current global now.
      auto [pruned, mask] = pruning::final_hard_prune(global, *target);
      global = std::move(pruned);
      shared_mask = std::move(mask);
    }

    std::optional<pruning::SparsityConfig> budgets;
    if (plan.stage > 0) budgets = stage_budgets(global, cfg.keep, plan.stage, stages);
    m.scheduled_keep = budgets ? scheduled_keep(*budgets, global) : 1.0;

    const double ocall_before = enclave.stats().ocall_seconds;
    const codec::Bytes published = enclave.publish(global);
    tb.ocall = enclave.stats().ocall_seconds - ocall_before;

    const auto selected = sample_clients(sampler, cfg.num_clients, cfg.clients_per_round);
    m.participants = selected.size();

    std::vector<std::pair<std::uint32_t, secure::Bytes>> wires;
    std::map<std::uint32_t, std::uint64_t> weights;
    double loss_sum = 0.0;
    for (const std::uint32_t c : selected) {
      auto t0 = Clock::now();
      const model::ParameterSet received = codec::decode(published);
      tb.provisioning += since(t0);

      t0 = Clock::now();
      ClientJob job;
      job.phase = plan.phase;
      job.seed = derive(cfg.seed, r + 1, c + 1);
      if (plan.phase == Phase::kAdmmPrune) {
        auto it = admm_states.find(c);
        if (it == admm_states.end()) {
          it = admm_states.emplace(c, pruning::admm_init(received, *budgets, cfg.rho)).first;
        } else {
          it->second = pruning::admm_retarget(std::move(it->second), *budgets);
        }
        job.admm = &it->second;
      }
      if (budgets) job.budgets = &*budgets;
      if (plan.phase == Phase::kMaskedFinetune) job.mask = &*shared_mask;
      const auto& idx = part.clients.at(c);
      ClientResult res = client_round(net, received, train, idx, hp, job);
      loss_sum += res.mean_loss;
      tb.local_training += since(t0);

      t0 = Clock::now();
      // Sparse phases send CSR unless dense happens to be smaller.
      const bool sparse = plan.phase != Phase::kWarmup && plan.phase != Phase::kDense;
      const auto fmt = sparse && codec::encoded_size(res.update, codec::Format::kCsr) <
                                     codec::encoded_size(res.update, codec::Format::kDense)
                           ? codec::Format::kCsr
                           : codec::Format::kDense;
      const codec::Bytes bytes = codec::encode(res.update, fmt);
      const auto enc = encryptors.at(c).encrypt_update(bytes, round32, fmt);
      wires.emplace_back(c, secure::serialize(enc));
      weights[c] = res.examples;
      tb.provisioning += since(t0);
    }
    m.train_loss = selected.empty() ? 0.0 : loss_sum / static_cast<double>(selected.size());

    if (options.tamper) {
      for (auto& [c, w] : wires) options.tamper(r, c, w);
    }

    // Transmission: each client uploads on its own link, so the round waits
    // for the slowest download + upload.
    std::vector<std::uint64_t> up_sizes, dense_up;
    double longest = 0.0;
    for (const auto& [c, w] : wires) {
      up_sizes.push_back(w.size());
      dense_up.push_back(dense_wire);
      double t = 0.0;
      if (cfg.uplink_mbps > 0) t += 8.0 * static_cast<double>(w.size()) / (cfg.uplink_mbps * 1e6);
      if (cfg.downlink_mbps > 0) {
        t += 8.0 * static_cast<double>(published.size()) / (cfg.downlink_mbps * 1e6);
      }
      longest = std::max(longest, t);
    }
    {
      const auto t0 = Clock::now();
      if (longest > 0) std::this_thread::sleep_for(std::chrono::duration<double>(longest));
      tb.transmission = since(t0);
    }

    std::vector<enclave::Submission> subs;
    {
      const auto t0 = Clock::now();
      for (const auto& [c, w] : wires) {
        try {
          subs.push_back({secure::parse_encrypted(w), weights.at(c)});
        } catch (const DecryptError&) {
          ++m.rejected;
        }
      }
      tb.transmission += since(t0);
    }

    const double ecall_before = enclave.stats().ecall_seconds;
    const auto report = enclave.load(subs);
    tb.ecall = enclave.stats().ecall_seconds - ecall_before;
    m.rejected += report.rejected.size();

    if (report.accepted > 0) {
      const double agg_before = enclave.stats().aggregation_seconds;
      model::ParameterSet agg = enclave.aggregate();
      tb.aggregation = enclave.stats().aggregation_seconds - agg_before;
      const auto t0 = Clock::now();
      global = codec::round_to_fp32(agg);
      if (plan.hard_prune_after) {
        if (cfg.mode == Mode::kAdmm) {
          auto [pruned, mask] = pruning::final_hard_prune(global, *target);
          global = std::move(pruned);
          shared_mask = std::move(mask);
        } else {
          global = pruning::magnitude_mask_update(global, *budgets);
        }
      }
      tb.aggregation += since(t0);
    }
    m.wall_seconds = since(round_start);

    m.global_nonzero = weight_nonzero_fraction(global);
    m.compression_rate = pruning::compression_rate(global);
    const auto actual = codec::account_round(up_sizes, published.size(), selected.size());
    const auto dense = codec::account_round(dense_up, published.size(), selected.size());
    m.bytes_uploaded = actual.uploaded;
    m.bytes_downloaded = actual.downloaded;
    m.dense_bytes_uploaded = dense.uploaded;
    m.dense_bytes_downloaded = dense.downloaded;
    result.ledger.record(static_cast<int>(r), plan.pruning_phase, actual, dense);

    if ((r + 1) % cfg.eval_every == 0 || r + 1 == schedule.size()) {
      m.accuracy = data::evaluate(net, global, data.test);
    }
    result.rounds.push_back(m);
    if (options.on_round) options.on_round(m);
  }

  result.final_params = std::move(global);
  result.boundary = enclave.stats();
  return result;
}

}  // namespace esmfl::fl
