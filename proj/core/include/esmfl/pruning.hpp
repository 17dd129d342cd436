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

// Cardinality-constrained weight pruning.
//
// Each constrained layer i must satisfy card(W_i) <= n_i. The ADMM scheme
// alternates a W-step (SGD on the loss plus (rho/2)||W - Z + U||^2), a Z-step
// (Euclidean projection of W + U onto the cardinality set) and a dual update
// U += W - Z. Biases are never constrained.

#ifndef ESMFL_PRUNING_HPP_
#define ESMFL_PRUNING_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "esmfl/model.hpp"
#include "esmfl/tensor.hpp"

namespace esmfl::pruning {

inline constexpr double kDefaultRho = 1e-3;

using KeepFractions = std::map<std::string, double>;

// Per-layer non-zero budgets n_i. Layers without an entry are unconstrained.
struct SparsityConfig {
  std::map<std::string, std::size_t> budgets;

  // n_i for `id`, or `card` if the layer is unconstrained.
  std::size_t budget(const std::string& id, std::size_t card) const;

  friend bool operator==(const SparsityConfig&, const SparsityConfig&) = default;
};

// n_i = round(fraction_i * card(W_i)). Throws ConfigError on unknown layers,
// fractions outside [0,1] or an empty table.
SparsityConfig make_sparsity_config(const model::ParameterSet& ref, const KeepFractions& fractions);

// Throws ConfigError unless every budget names a layer of `ref`, fits within
// card(W_i), and at least one layer is constrained.
void validate(const SparsityConfig& cfg, const model::ParameterSet& ref);

// Keep fractions of ramp stage `stage` of `stages`: target^(stage/stages),
// i.e. a geometric path from 1 (stage 0) to the target (last stage).
KeepFractions ramp_fractions(const KeepFractions& target, int stage, int stages);

// Per-layer boolean mask; true = weight retained.
struct PruneMask {
  struct Layer {
    std::string id;
    std::vector<std::uint8_t> keep;
  };
  std::vector<Layer> layers;

  std::size_t kept(const std::string& id) const;
  std::size_t kept_total() const;
};

// Keeps the n_keep largest-magnitude entries in place and zeros the rest.
// Ties are broken by the lowest flat index. Throws ConfigError if
// n_keep > size.
Tensor euclidean_project(const Tensor& t, std::size_t n_keep);

// Same selection, returned as a keep-mask.
std::vector<std::uint8_t> top_k_mask(const Tensor& t, std::size_t n_keep);

struct LayerAdmm {
  std::string id;
  Tensor z;
  Tensor u;
  std::size_t budget = 0;
};

struct ADMMState {
  std::vector<LayerAdmm> layers;
  double rho = kDefaultRho;
  std::uint64_t step = 0;
};

// Z_i = project(W_i, n_i), U_i = 0, step 0. Throws ConfigError for rho <= 0
// or a config that does not match `params`.
ADMMState admm_init(const model::ParameterSet& params, const SparsityConfig& cfg,
                    double rho = kDefaultRho);

// Per-layer rho * (W_i - Z_i + U_i); zero for biases.
model::Gradient admm_reg_gradient(const model::ParameterSet& params, const ADMMState& state);

// grad += rho * (W - Z + U) on the weights, without materializing the term.
void add_admm_reg_gradient(const model::ParameterSet& params, const ADMMState& state,
                           model::Gradient& grad);

// Z_i <- project(W_i + U_i, n_i).
ADMMState admm_z_step(const model::ParameterSet& params, ADMMState state);

// U_i <- U_i + W_i - Z_i; step += 1. Z must already be updated.
ADMMState admm_u_step(const model::ParameterSet& params, ADMMState state);

// Moves the state to new budgets (e.g. the next ramp stage) by re-projecting
// every Z_i onto its new cardinality set.
ADMMState admm_retarget(ADMMState state, const SparsityConfig& cfg);

// sqrt(sum_i ||W_i - Z_i||_F^2)
double primal_residual(const model::ParameterSet& params, const ADMMState& state);

// W_i <- project(W_i, n_i) for every layer, plus the surviving positions.
std::pair<model::ParameterSet, PruneMask> final_hard_prune(const model::ParameterSet& params,
                                                           const SparsityConfig& cfg);

// Zeros weights outside the mask.
void apply_mask(model::ParameterSet& params, const PruneMask& mask);
// Zeros weight gradients outside the mask so masked positions never move.
void apply_mask(model::Gradient& grad, const PruneMask& mask);

// Masked-pruning baseline: per-layer top-n_i magnitude projection of a
// client's outgoing update, recomputed from scratch on every call.
model::ParameterSet magnitude_mask_update(const model::ParameterSet& update,
                                          const SparsityConfig& cfg);

// total / retained. Biases are always counted as retained.
double compression_rate(std::size_t total_params, std::size_t retained);
// Counts non-zero weights of `params`.
double compression_rate(const model::ParameterSet& params);
double compression_rate(const PruneMask& mask, const model::ParameterSet& ref);
// Value implied by the budgets alone.
double compression_rate(const SparsityConfig& cfg, const model::ParameterSet& ref);

// Retained parameters (non-zero weights + all biases).
std::size_t retained_count(const model::ParameterSet& params);

}  // namespace esmfl::pruning

#endif  // ESMFL_PRUNING_HPP_
