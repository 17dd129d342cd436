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

#include "esmfl/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esmfl/errors.hpp"

namespace esmfl::pruning {

std::size_t SparsityConfig::budget(const std::string& id, std::size_t card) const {
  auto it = budgets.find(id);
  return it == budgets.end() ? card : it->second;
}

SparsityConfig make_sparsity_config(const model::ParameterSet& ref, const KeepFractions& fractions) {
  if (fractions.empty()) throw ConfigError("sparsity config has no layers");
  SparsityConfig cfg;
  for (const auto& [id, f] : fractions) {
    const auto* layer = ref.find(id);
    if (!layer) throw ConfigError("sparsity config names unknown layer '" + id + "'");
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("keep fraction for '" + id + "' must be in [0,1]");
    }
    cfg.budgets[id] =
        static_cast<std::size_t>(std::llround(f * static_cast<double>(layer->weight.size())));
  }
  validate(cfg, ref);
  return cfg;
}

void validate(const SparsityConfig& cfg, const model::ParameterSet& ref) {
  if (cfg.budgets.empty()) throw ConfigError("at least one layer must be constrained");
  for (const auto& [id, n] : cfg.budgets) {
    const auto* layer = ref.find(id);
    if (!layer) throw ConfigError("sparsity config names unknown layer '" + id + "'");
    if (n > layer->weight.size()) {
      throw ConfigError("budget " + std::to_string(n) + " for '" + id + "' exceeds " +
                        std::to_string(layer->weight.size()) + " weights");
    }
  }
}

KeepFractions ramp_fractions(const KeepFractions& target, int stage, int stages) {
  if (stages <= 0 || stage < 0 || stage > stages) throw ConfigError("bad ramp stage");
  KeepFractions out;
  const double t = static_cast<double>(stage) / static_cast<double>(stages);
  for (const auto& [id, f] : target) out[id] = stage == stages ? f : std::pow(f, t);
  return out;
}

std::size_t PruneMask::kept(const std::string& id) const {
  for (const auto& l : layers) {
    if (l.id == id) return static_cast<std::size_t>(std::count(l.keep.begin(), l.keep.end(), 1));
  }
  throw ShapeError("mask has no layer '" + id + "'");
}

std::size_t PruneMask::kept_total() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(std::count(l.keep.begin(), l.keep.end(), 1));
  return n;
}

std::vector<std::uint8_t> top_k_mask(const Tensor& t, std::size_t n_keep) {
  const std::size_t n = t.size();
  if (n_keep > n) {
    throw ConfigError("cannot keep " + std::to_string(n_keep) + " of " + std::to_string(n) +
                      " entries");
  }
  std::vector<std::uint8_t> keep(n, 0);
  if (n_keep == n) {
    std::fill(keep.begin(), keep.end(), 1);
    return keep;
  }
  if (n_keep == 0) return keep;
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  const double* v = t.data();
  // Total order: larger magnitude first, then lower index.
  auto before = [v](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(v[a]);
    const double mb = std::abs(v[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_keep - 1), idx.end(),
                   before);
  for (std::size_t i = 0; i < n_keep; ++i) keep[idx[i]] = 1;
  return keep;
}

Tensor euclidean_project(const Tensor& t, std::size_t n_keep) {
  const auto keep = top_k_mask(t, n_keep);
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out[i] = 0.0;
  }
  return out;
}

ADMMState admm_init(const model::ParameterSet& params, const SparsityConfig& cfg, double rho) {
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  validate(cfg, params);
  ADMMState s;
  s.rho = rho;
  for (const auto& l : params.layers) {
    const std::size_t n = cfg.budget(l.id, l.weight.size());
    s.layers.push_back({l.id, euclidean_project(l.weight, n), Tensor::zeros_like(l.weight), n});
  }
  return s;
}

namespace {

void check_state(const model::ParameterSet& params, const ADMMState& state) {
  if (params.layers.size() != state.layers.size()) {
    throw ShapeError("ADMM state does not match the parameter set");
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    if (params.layers[i].id != state.layers[i].id ||
        params.layers[i].weight.shape() != state.layers[i].z.shape()) {
      throw ShapeError("ADMM state layer '" + state.layers[i].id + "' is not congruent");
    }
  }
}

}  // namespace

model::Gradient admm_reg_gradient(const model::ParameterSet& params, const ADMMState& state) {
  auto g = model::Gradient::zeros_like(params);
  add_admm_reg_gradient(params, state, g);
  return g;
}

void add_admm_reg_gradient(const model::ParameterSet& params, const ADMMState& state,
                           model::Gradient& grad) {
  check_state(params, state);
  model::check_congruent(params.layers, grad.layers);
  const double rho = state.rho;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const double* w = params.layers[i].weight.data();
    const double* z = state.layers[i].z.data();
    const double* u = state.layers[i].u.data();
    double* g = grad.layers[i].weight.data();
    const std::size_t n = params.layers[i].weight.size();
    for (std::size_t j = 0; j < n; ++j) g[j] += rho * (w[j] - z[j] + u[j]);
  }
}

ADMMState admm_z_step(const model::ParameterSet& params, ADMMState state) {
  check_state(params, state);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& s = state.layers[i];
    Tensor wu = params.layers[i].weight;
    for (std::size_t j = 0; j < wu.size(); ++j) wu[j] += s.u[j];
    s.z = euclidean_project(wu, s.budget);
  }
  return state;
}

ADMMState admm_u_step(const model::ParameterSet& params, ADMMState state) {
  check_state(params, state);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& s = state.layers[i];
    const auto& w = params.layers[i].weight;
    for (std::size_t j = 0; j < w.size(); ++j) s.u[j] += w[j] - s.z[j];
  }
  ++state.step;
  return state;
}

ADMMState admm_retarget(ADMMState state, const SparsityConfig& cfg) {
  for (auto& s : state.layers) {
    s.budget = cfg.budget(s.id, s.z.size());
    if (s.budget > s.z.size()) throw ConfigError("budget exceeds layer size for '" + s.id + "'");
    s.z = euclidean_project(s.z, s.budget);
  }
  return state;
}

double primal_residual(const model::ParameterSet& params, const ADMMState& state) {
  check_state(params, state);
  double acc = 0.0;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& w = params.layers[i].weight;
    const auto& z = state.layers[i].z;
    for (std::size_t j = 0; j < w.size(); ++j) acc += (w[j] - z[j]) * (w[j] - z[j]);
  }
  return std::sqrt(acc);
}

std::pair<model::ParameterSet, PruneMask> final_hard_prune(const model::ParameterSet& params,
                                                           const SparsityConfig& cfg) {
  validate(cfg, params);
  model::ParameterSet out = params;
  PruneMask mask;
  for (auto& l : out.layers) {
    auto keep = top_k_mask(l.weight, cfg.budget(l.id, l.weight.size()));
    for (std::size_t j = 0; j < l.weight.size(); ++j) {
      if (!keep[j]) l.weight[j] = 0.0;
    }
    mask.layers.push_back({l.id, std::move(keep)});
  }
  return {std::move(out), std::move(mask)};
}

namespace {

template <class Layers>
void mask_weights(Layers& layers, const PruneMask& mask) {
  if (layers.size() != mask.layers.size()) throw ShapeError("mask does not match layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& w = layers[i].weight;
    const auto& keep = mask.layers[i].keep;
    if (layers[i].id != mask.layers[i].id || keep.size() != w.size()) {
      throw ShapeError("mask layer '" + mask.layers[i].id + "' does not match");
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!keep[j]) w[j] = 0.0;
    }
  }
}

}  // namespace

void apply_mask(model::ParameterSet& params, const PruneMask& mask) { mask_weights(params.layers, mask); }

void apply_mask(model::Gradient& grad, const PruneMask& mask) { mask_weights(grad.layers, mask); }

model::ParameterSet magnitude_mask_update(const model::ParameterSet& update,
                                          const SparsityConfig& cfg) {
  return final_hard_prune(update, cfg).first;
}

double compression_rate(std::size_t total_params, std::size_t retained) {
  if (retained == 0) throw ConfigError("compression rate undefined with no retained parameters");
  return static_cast<double>(total_params) / static_cast<double>(retained);
}

std::size_t retained_count(const model::ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& l : params.layers) n += count_nonzero(l.weight) + l.bias.size();
  return n;
}

double compression_rate(const model::ParameterSet& params) {
  return compression_rate(params.param_count(), retained_count(params));
}

double compression_rate(const PruneMask& mask, const model::ParameterSet& ref) {
  std::size_t biases = 0;
  for (const auto& l : ref.layers) biases += l.bias.size();
  return compression_rate(ref.param_count(), mask.kept_total() + biases);
}

double compression_rate(const SparsityConfig& cfg, const model::ParameterSet& ref) {
  std::size_t retained = 0;
  for (const auto& l : ref.layers) retained += cfg.budget(l.id, l.weight.size()) + l.bias.size();
  return compression_rate(ref.param_count(), retained);
}

}  // namespace esmfl::pruning
