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

#ifndef ESMFL_DATA_HPP_
#define ESMFL_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "esmfl/model.hpp"

namespace esmfl::data {

// In-memory labelled image set. Pixels are stored as normalized fp32 to keep
// 60K-sample sets small; batches are widened to fp64.
struct Dataset {
  model::SampleShape sample_shape{};
  std::size_t num_classes = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t sample_size() const noexcept {
    return sample_shape[0] * sample_shape[1] * sample_shape[2];
  }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * sample_size(), sample_size());
  }
};

// Reads a pair of big-endian IDX files (idx3 images, idx1 labels). Pixels are
// scaled to [0,1] then standardized with the MNIST mean/std.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// train-images-idx3-ubyte etc. below `dir`.
Dataset load_mnist_train(const std::filesystem::path& dir);
Dataset load_mnist_test(const std::filesystem::path& dir);

// CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record).
Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& files);

struct BlobSpec {
  model::SampleShape shape{1, 8, 8};
  std::size_t num_classes = 10;
  std::size_t count = 1000;
  double spread = 1.0;  // per-pixel stddev around the class centre
  std::uint64_t seed = 0;
};

// Gaussian blobs: one random centre per class, samples drawn around it.
// Labels cycle 0..num_classes-1 so the set is balanced.
Dataset make_gaussian_blobs(const BlobSpec& spec);

// Concatenates the selected samples into a Batch.
model::Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices);

// First `n` samples (or all if n >= size).
Dataset head(const Dataset& ds, std::size_t n);

// Fraction of samples whose argmax prediction equals the label. Throws
// DataError on an empty dataset.
double evaluate(model::Network& net, const model::ParameterSet& params, const Dataset& ds,
                std::size_t batch_size = 100);
double evaluate(const model::ModelArch& arch, const model::ParameterSet& params,
                const Dataset& ds);

}  // namespace esmfl::data

#endif  // ESMFL_DATA_HPP_
