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

#include "esmfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "esmfl/errors.hpp"

namespace esmfl::data {
namespace {

constexpr float kMnistMean = 0.1307f;
constexpr float kMnistStd = 0.3081f;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& buf, std::size_t off) {
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

double normal(std::mt19937_64& rng) {
  // Box-Muller on the 53-bit uniform mapping, for cross-platform determinism.
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (img.size() < 16 || be32(img, 0) != 0x00000803) {
    throw DataError(images.string() + ": not an idx3-ubyte image file");
  }
  if (lab.size() < 8 || be32(lab, 0) != 0x00000801) {
    throw DataError(labels.string() + ": not an idx1-ubyte label file");
  }
  const std::size_t n = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  if (be32(lab, 4) != n) throw DataError("image and label counts differ");
  if (img.size() != 16 + n * rows * cols || lab.size() != 8 + n) {
    throw DataError("idx payload size does not match its header");
  }

  Dataset ds;
  ds.sample_shape = {1, rows, cols};
  ds.num_classes = 10;
  ds.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) {
    ds.pixels[i] = (static_cast<float>(img[16 + i]) / 255.0f - kMnistMean) / kMnistStd;
  }
  ds.labels.assign(lab.begin() + 8, lab.end());
  for (auto l : ds.labels) {
    if (l >= ds.num_classes) throw DataError("label out of range in " + labels.string());
  }
  return ds;
}

Dataset load_mnist_train(const std::filesystem::path& dir) {
  return load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
}

Dataset load_mnist_test(const std::filesystem::path& dir) {
  return load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
}

Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& files) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = 1 + kPixels;
  // Per-channel statistics of the CIFAR-10 training set.
  constexpr float kMean[3] = {0.4914f, 0.4822f, 0.4465f};
  constexpr float kStd[3] = {0.2470f, 0.2435f, 0.2616f};

  Dataset ds;
  ds.sample_shape = {3, 32, 32};
  ds.num_classes = 10;
  for (const auto& f : files) {
    const auto buf = read_file(f);
    if (buf.size() % kRecord != 0) throw DataError(f.string() + ": not a CIFAR-10 binary batch");
    for (std::size_t off = 0; off < buf.size(); off += kRecord) {
      if (buf[off] >= 10) throw DataError(f.string() + ": label out of range");
      ds.labels.push_back(buf[off]);
      for (std::size_t p = 0; p < kPixels; ++p) {
        const std::size_t ch = p / 1024;
        ds.pixels.push_back((static_cast<float>(buf[off + 1 + p]) / 255.0f - kMean[ch]) / kStd[ch]);
      }
    }
  }
  return ds;
}

Dataset make_gaussian_blobs(const BlobSpec& spec) {
  if (spec.num_classes == 0 || spec.count == 0) throw DataError("empty blob spec");
  std::mt19937_64 rng(spec.seed);
  Dataset ds;
  ds.sample_shape = spec.shape;
  ds.num_classes = spec.num_classes;
  const std::size_t d = ds.sample_size();
  std::vector<double> centres(spec.num_classes * d);
  for (auto& c : centres) c = normal(rng);
  ds.pixels.resize(spec.count * d);
  ds.labels.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t label = i % spec.num_classes;
    ds.labels[i] = static_cast<std::uint8_t>(label);
    for (std::size_t j = 0; j < d; ++j) {
      ds.pixels[i * d + j] = static_cast<float>(centres[label * d + j] + spec.spread * normal(rng));
    }
  }
  return ds;
}

model::Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const std::size_t d = ds.sample_size();
  std::vector<double> values(indices.size() * d);
  std::vector<std::uint32_t> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw DataError("sample index out of range");
    const auto s = ds.sample(indices[i]);
    std::copy(s.begin(), s.end(), values.begin() + static_cast<std::ptrdiff_t>(i * d));
    labels[i] = ds.labels[indices[i]];
  }
  Shape shape{indices.size(), ds.sample_shape[0], ds.sample_shape[1], ds.sample_shape[2]};
  return {Tensor(std::move(shape), std::move(values)), std::move(labels)};
}

Dataset head(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.size());
  Dataset out;
  out.sample_shape = ds.sample_shape;
  out.num_classes = ds.num_classes;
  out.pixels.assign(ds.pixels.begin(), ds.pixels.begin() + static_cast<std::ptrdiff_t>(n * ds.sample_size()));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

double evaluate(model::Network& net, const model::ParameterSet& params, const Dataset& ds,
                std::size_t batch_size) {
  if (ds.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  batch_size = std::max<std::size_t>(1, batch_size);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const auto batch = make_batch(ds, idx);
    const auto pred = net.predict(params, batch.inputs);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double evaluate(const model::ModelArch& arch, const model::ParameterSet& params,
                const Dataset& ds) {
  model::Network net(arch);
  return evaluate(net, params, ds);
}

}  // namespace esmfl::data
