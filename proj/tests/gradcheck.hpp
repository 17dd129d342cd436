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

#ifndef ESMFL_TESTS_GRADCHECK_HPP_
#define ESMFL_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "esmfl/model.hpp"

namespace esmfl::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences of the loss against backward(). With sample > 0 only
// that many random coordinates per tensor are checked.
inline GradCheckResult gradient_check(const model::ModelArch& arch,
                                      const model::ParameterSet& params,
                                      const model::Batch& batch, double h,
                                      std::size_t sample = 0) {
  const auto grad = model::backward(arch, params, batch);
  GradCheckResult res;
  std::mt19937_64 rng(99);
  auto p = params;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      Tensor& t = which == 0 ? p.layers[l].weight : p.layers[l].bias;
      const Tensor& g = which == 0 ? grad.layers[l].weight : grad.layers[l].bias;
      const std::size_t n = t.size();
      const std::size_t count = sample == 0 ? n : std::min(sample, n);
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t i = sample == 0 ? c : static_cast<std::size_t>(rng() % n);
        const double orig = t[i];
        t[i] = orig + h;
        const double up = model::forward_loss(arch, p, batch).loss;
        t[i] = orig - h;
        const double down = model::forward_loss(arch, p, batch).loss;
        t[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max(std::abs(numeric) + std::abs(g[i]), 1e-6);
        const double rel = std::abs(numeric - g[i]) / denom;
        ++res.checked;
        if (rel > res.max_rel_error) {
          res.max_rel_error = rel;
          res.worst = p.layers[l].id + (which == 0 ? ".weight[" : ".bias[") +
                      std::to_string(i) + "]";
        }
      }
    }
  }
  return res;
}

}  // namespace esmfl::testing

#endif  // ESMFL_TESTS_GRADCHECK_HPP_
