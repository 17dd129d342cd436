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

// From-scratch feed-forward networks: dense and 2-D convolution layers with
// ReLU, max pooling and a softmax cross-entropy head. All math is fp64.

#ifndef ESMFL_MODEL_HPP_
#define ESMFL_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "esmfl/tensor.hpp"

namespace esmfl::model {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::string name;
};

// Valid (unpadded) convolution with a square kernel.
struct Conv2d {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::string name;
};

struct Relu {};

// Non-overlapping k x k max pooling (stride k, floor on odd sizes).
struct MaxPool {
  std::size_t k = 2;
};

struct Flatten {};

using Layer = std::variant<Dense, Conv2d, Relu, MaxPool, Flatten>;

enum class LossKind { kSoftmaxCrossEntropy };

// Per-sample activation shape (channels, height, width). Flat vectors use
// {features, 1, 1}.
using SampleShape = std::array<std::size_t, 3>;

struct ModelArch {
  SampleShape input{};
  std::vector<Layer> layers;
  std::size_t num_classes = 0;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;
};

// Fully connected net: input (C,H,W) is flattened, hidden layers use ReLU.
ModelArch mlp(SampleShape input, const std::vector<std::size_t>& widths);

// LeNet-5 in the layout used by the pruning literature for MNIST:
//   conv 1->20 5x5, pool 2, conv 20->50 5x5, pool 2, fc 800->500, fc 500->10
// with ReLU after each pool and after fc1. Valid convolutions on a 28x28 input
// give 24 -> 12 -> 8 -> 4, so fc1 sees 50*4*4 = 800 features. Parameter
// count: 520 + 25,050 + 400,500 + 5,010 = 431,080 (the "430K" figure). The
// classic 6/16-channel LeNet tops out near 62K parameters regardless of
// padding, so it cannot be reconciled with that figure.
ModelArch lenet5();

// Small convnet for 3x32x32 inputs (CIFAR-10 desk runs).
ModelArch small_convnet(SampleShape input = {3, 32, 32}, std::size_t num_classes = 10);

// Checks that adjacent layer shapes compose and returns the per-layer output
// shapes. Throws ShapeError otherwise.
std::vector<SampleShape> validate(const ModelArch& arch);

struct LayerParams {
  std::string id;
  Tensor weight;
  Tensor bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Ordered weights and biases of every parameterized layer.
struct ParameterSet {
  std::vector<LayerParams> layers;

  std::size_t param_count() const;
  std::size_t weight_count() const;
  std::size_t nonzero_count() const;
  const LayerParams& at(const std::string& id) const;
  LayerParams* find(const std::string& id);
  const LayerParams* find(const std::string& id) const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

// Same layout as a ParameterSet, holding d(loss)/d(param).
struct Gradient {
  std::vector<LayerParams> layers;

  static Gradient zeros_like(const ParameterSet& params);
  void set_zero();

  friend bool operator==(const Gradient&, const Gradient&) = default;
};

// Throws ShapeError unless ids and tensor shapes line up one to one.
void check_congruent(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b);

struct Batch {
  Tensor inputs;  // B x C x H x W (or B x features)
  std::vector<std::uint32_t> labels;
};

struct ForwardResult {
  double loss = 0.0;
  Tensor logits;  // B x num_classes
};

// Reusable forward/backward engine bound to one architecture. Holds scratch
// buffers, so one instance must not be shared between threads.
class Network {
 public:
  explicit Network(ModelArch arch);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ModelArch& arch() const noexcept;

  ParameterSet init(std::uint64_t seed) const;

  ForwardResult forward_loss(const ParameterSet& params, const Batch& batch);

  // Mean cross-entropy of the batch; writes the exact gradient into `grad`
  // (resized/overwritten).
  double loss_and_gradient(const ParameterSet& params, const Batch& batch, Gradient& grad);

  // argmax class for every row of the batch.
  std::vector<std::uint32_t> predict(const ParameterSet& params, const Tensor& inputs);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ParameterSet init_model(const ModelArch& arch, std::uint64_t seed);
ForwardResult forward_loss(const ModelArch& arch, const ParameterSet& params, const Batch& batch);
Gradient backward(const ModelArch& arch, const ParameterSet& params, const Batch& batch);

// params - lr * grad
ParameterSet sgd_step(const ParameterSet& params, const Gradient& grad, double lr);
// params - lr * (grad + extra)
ParameterSet sgd_step(const ParameterSet& params, const Gradient& grad, double lr,
                      const Gradient& extra);

// Heavy-ball SGD applied in place: v = mu*v + g; w -= lr*v. With mu = 0 this
// is exactly sgd_step.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum);

  void step(ParameterSet& params, const Gradient& grad);

 private:
  double lr_;
  double momentum_;
  Gradient velocity_;
};

}  // namespace esmfl::model

#endif  // ESMFL_MODEL_HPP_
