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

// Micro benchmarks for the per-round hot paths on LeNet-5.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "esmfl/enclave.hpp"
#include "esmfl/model.hpp"
#include "esmfl/pruning.hpp"
#include "esmfl/secure_channel.hpp"
#include "esmfl/sparse_codec.hpp"

namespace {

using namespace esmfl;

const model::ModelArch& arch() {
  static const auto a = model::lenet5();
  return a;
}

model::ParameterSet lenet(double keep) {
  auto p = model::init_model(arch(), 1);
  std::mt19937_64 rng(2);
  std::bernoulli_distribution b(keep);
  for (auto& l : p.layers) {
    for (auto& w : l.weight.values()) {
      if (!b(rng)) w = 0.0;
    }
  }
  return p;
}

model::Batch batch(std::size_t n) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  model::Batch b{Tensor({n, 1, 28, 28}), {}};
  for (auto& v : b.inputs.values()) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<std::uint32_t>(i % 10));
  return b;
}

void BM_TrainStep(benchmark::State& state) {
  auto p = model::init_model(arch(), 1);
  const auto b = batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    p = model::sgd_step(p, model::backward(arch(), p, b), 0.01);
    benchmark::DoNotOptimize(p);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Projection(benchmark::State& state) {
  const auto p = model::init_model(arch(), 1);
  const auto cfg = pruning::make_sparsity_config(
      p, {{"conv1", 0.66}, {"conv2", 0.12}, {"fc1", 0.0957275}, {"fc2", 0.19}});
  auto s = pruning::admm_init(p, cfg, 1e-3);
  for (auto _ : state) {
    s = pruning::admm_z_step(p, std::move(s));
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Projection)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  const auto f = state.range(0) ? codec::Format::kCsr : codec::Format::kDense;
  const auto p = lenet(0.1);
  for (auto _ : state) benchmark::DoNotOptimize(codec::encode(p, f));
  state.SetLabel(f == codec::Format::kCsr ? "csr 10%" : "dense");
}
BENCHMARK(BM_Encode)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Decode(benchmark::State& state) {
  const auto f = state.range(0) ? codec::Format::kCsr : codec::Format::kDense;
  const auto bytes = codec::encode(lenet(0.1), f);
  for (auto _ : state) benchmark::DoNotOptimize(codec::decode(bytes));
  state.SetLabel(f == codec::Format::kCsr ? "csr 10%" : "dense");
}
BENCHMARK(BM_Decode)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Encrypt(benchmark::State& state) {
  secure::Seed seed{};
  enclave::Enclave enc(seed);
  secure::DeterministicRng rng(4);
  secure::UpdateEncryptor client(enc.attest(1, rng).client_key);
  const auto bytes = codec::encode(lenet(1.0), codec::Format::kDense);
  for (auto _ : state) {
    benchmark::DoNotOptimize(client.encrypt_update(bytes, 1, codec::Format::kDense));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_Encrypt)->Unit(benchmark::kMicrosecond);

// Ten CSR updates at 10% density: decrypt, decode and average in the enclave.
void BM_EnclaveRound(benchmark::State& state) {
  secure::Seed seed{};
  enclave::Enclave enc(seed);
  secure::DeterministicRng rng(5);
  std::vector<secure::UpdateEncryptor> clients;
  for (std::uint32_t i = 0; i < 10; ++i) clients.emplace_back(enc.attest(i, rng).client_key);
  const auto bytes = codec::encode(lenet(0.1), codec::Format::kCsr);
  std::uint32_t round = 0;
  for (auto _ : state) {
    state.PauseTiming();
    std::vector<enclave::Submission> subs;
    for (auto& c : clients) subs.push_back({c.encrypt_update(bytes, round, codec::Format::kCsr), 600});
    ++round;
    state.ResumeTiming();
    enc.load(subs);
    benchmark::DoNotOptimize(enc.aggregate());
  }
}
BENCHMARK(BM_EnclaveRound)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
