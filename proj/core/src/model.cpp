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

#include "esmfl/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>

#include "esmfl/errors.hpp"

namespace esmfl::model {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t numel(const SampleShape& s) { return s[0] * s[1] * s[2]; }

std::string shape_str(const SampleShape& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + ")";
}

// Gives every parameterized layer a stable id: convN / fcN in order.
void assign_names(ModelArch& arch) {
  int conv = 0;
  int fc = 0;
  for (auto& layer : arch.layers) {
    if (auto* d = std::get_if<Dense>(&layer)) {
      ++fc;
      if (d->name.empty()) d->name = "fc" + std::to_string(fc);
    } else if (auto* c = std::get_if<Conv2d>(&layer)) {
      ++conv;
      if (c->name.empty()) c->name = "conv" + std::to_string(conv);
    }
  }
}

// Uniform in [0,1) from the top 53 bits; std::uniform_real_distribution is
// implementation-defined, this mapping is not.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

ModelArch mlp(SampleShape input, const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ShapeError("mlp needs at least input and output widths");
  ModelArch arch;
  arch.input = input;
  arch.layers.push_back(Flatten{});
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    arch.layers.push_back(Dense{widths[i], widths[i + 1], {}});
    if (i + 2 < widths.size()) arch.layers.push_back(Relu{});
  }
  arch.num_classes = widths.back();
  assign_names(arch);
  return arch;
}

ModelArch lenet5() {
  ModelArch arch;
  arch.input = {1, 28, 28};
  arch.layers = {
      Conv2d{1, 20, 5, 1, "conv1"}, MaxPool{2}, Relu{},
      Conv2d{20, 50, 5, 1, "conv2"}, MaxPool{2}, Relu{},
      Flatten{},
      Dense{800, 500, "fc1"}, Relu{},
      Dense{500, 10, "fc2"},
  };
  arch.num_classes = 10;
  return arch;
}

ModelArch small_convnet(SampleShape input, std::size_t num_classes) {
  // 32 -> conv5 28 -> pool 14 -> conv5 10 -> pool 5
  const std::size_t h = (((input[1] - 4) / 2) - 4) / 2;
  const std::size_t w = (((input[2] - 4) / 2) - 4) / 2;
  ModelArch arch;
  arch.input = input;
  arch.layers = {
      Conv2d{input[0], 16, 5, 1, "conv1"}, MaxPool{2}, Relu{},
      Conv2d{16, 32, 5, 1, "conv2"}, MaxPool{2}, Relu{},
      Flatten{},
      Dense{32 * h * w, 128, "fc1"}, Relu{},
      Dense{128, num_classes, "fc2"},
  };
  arch.num_classes = num_classes;
  return arch;
}

std::vector<SampleShape> validate(const ModelArch& arch) {
  if (arch.layers.empty()) throw ShapeError("architecture has no layers");
  if (arch.num_classes < 2) throw ShapeError("need at least two classes");
  if (numel(arch.input) == 0) throw ShapeError("empty input shape");

  std::vector<SampleShape> out;
  SampleShape cur = arch.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i);
    cur = std::visit(
        Overloaded{
            [&](const Dense& d) -> SampleShape {
              if (cur[1] != 1 || cur[2] != 1) {
                throw ShapeError(where + ": dense layer needs a flat input, got " + shape_str(cur));
              }
              if (d.in != cur[0] || d.out == 0) {
                throw ShapeError(where + ": dense " + std::to_string(d.in) + "->" +
                                 std::to_string(d.out) + " does not accept " + shape_str(cur));
              }
              return {d.out, 1, 1};
            },
            [&](const Conv2d& c) -> SampleShape {
              if (c.in_ch != cur[0] || c.out_ch == 0 || c.kernel == 0 || c.stride == 0 ||
                  c.kernel > cur[1] || c.kernel > cur[2]) {
                throw ShapeError(where + ": conv does not accept " + shape_str(cur));
              }
              return {c.out_ch, (cur[1] - c.kernel) / c.stride + 1,
                      (cur[2] - c.kernel) / c.stride + 1};
            },
            [&](const Relu&) -> SampleShape { return cur; },
            [&](const MaxPool& p) -> SampleShape {
              if (p.k == 0 || cur[1] < p.k || cur[2] < p.k) {
                throw ShapeError(where + ": pool does not fit " + shape_str(cur));
              }
              return {cur[0], cur[1] / p.k, cur[2] / p.k};
            },
            [&](const Flatten&) -> SampleShape { return {numel(cur), 1, 1}; },
        },
        arch.layers[i]);
    out.push_back(cur);
  }
  if (cur != SampleShape{arch.num_classes, 1, 1}) {
    throw ShapeError("final layer output " + shape_str(cur) + " does not match " +
                     std::to_string(arch.num_classes) + " classes");
  }
  return out;
}

// ---------------------------------------------------------------------------
// ParameterSet / Gradient

std::size_t ParameterSet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::size_t ParameterSet::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size();
  return n;
}

std::size_t ParameterSet::nonzero_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += count_nonzero(l.weight) + count_nonzero(l.bias);
  return n;
}

const LayerParams& ParameterSet::at(const std::string& id) const {
  if (const auto* l = find(id)) return *l;
  throw ShapeError("no layer named '" + id + "'");
}

LayerParams* ParameterSet::find(const std::string& id) {
  auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.id == id; });
  return it == layers.end() ? nullptr : &*it;
}

const LayerParams* ParameterSet::find(const std::string& id) const {
  auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.id == id; });
  return it == layers.end() ? nullptr : &*it;
}

Gradient Gradient::zeros_like(const ParameterSet& params) {
  Gradient g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({l.id, Tensor::zeros_like(l.weight), Tensor::zeros_like(l.bias)});
  }
  return g;
}

void Gradient::set_zero() {
  for (auto& l : layers) {
    l.weight.fill(0.0);
    l.bias.fill(0.0);
  }
}

void check_congruent(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("layer count mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].weight.shape() != b[i].weight.shape() ||
        a[i].bias.shape() != b[i].bias.shape()) {
      throw ShapeError("layer '" + a[i].id + "' " + shape_string(a[i].weight.shape()) +
                       " is not congruent with '" + b[i].id + "' " +
                       shape_string(b[i].weight.shape()));
    }
  }
}

// ---------------------------------------------------------------------------
// Network

struct Network::Impl {
  struct Step {
    Layer layer;
    SampleShape in;
    SampleShape out;
    int param = -1;  // index into ParameterSet::layers
  };

  ModelArch arch;
  std::vector<Step> steps;
  std::vector<std::string> param_ids;
  std::vector<Shape> weight_shapes;

  // acts[i] is the input of step i; acts.back() holds the logits.
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> cols;  // im2col per conv step
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  std::vector<double> dcols;
  std::vector<double> gemm_out;
  std::size_t batch = 0;

  explicit Impl(ModelArch a) : arch(std::move(a)) {
    assign_names(arch);
    const auto shapes = validate(arch);
    SampleShape cur = arch.input;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      Step s{arch.layers[i], cur, shapes[i], -1};
      if (const auto* d = std::get_if<Dense>(&s.layer)) {
        s.param = static_cast<int>(param_ids.size());
        param_ids.push_back(d->name);
        weight_shapes.push_back({d->out, d->in});
      } else if (const auto* c = std::get_if<Conv2d>(&s.layer)) {
        s.param = static_cast<int>(param_ids.size());
        param_ids.push_back(c->name);
        weight_shapes.push_back({c->out_ch, c->in_ch, c->kernel, c->kernel});
      }
      steps.push_back(s);
      cur = shapes[i];
    }
    for (std::size_t i = 0; i < param_ids.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (param_ids[i] == param_ids[j]) throw ShapeError("duplicate layer id " + param_ids[i]);
      }
    }
    acts.resize(steps.size() + 1);
    cols.resize(steps.size());
    argmax.resize(steps.size());
  }

  void check_params(const ParameterSet& p) const {
    if (p.layers.size() != param_ids.size()) {
      throw ShapeError("parameter set has " + std::to_string(p.layers.size()) +
                       " layers, architecture expects " + std::to_string(param_ids.size()));
    }
    for (std::size_t i = 0; i < param_ids.size(); ++i) {
      const auto& l = p.layers[i];
      if (l.id != param_ids[i] || l.weight.shape() != weight_shapes[i] ||
          l.bias.shape() != Shape{weight_shapes[i][0]}) {
        throw ShapeError("layer '" + l.id + "' " + shape_string(l.weight.shape()) +
                         " does not match architecture layer '" + param_ids[i] + "' " +
                         shape_string(weight_shapes[i]));
      }
    }
  }

  std::size_t check_inputs(const Tensor& inputs) const {
    const std::size_t per = numel(arch.input);
    if (inputs.shape().empty() || inputs.shape()[0] == 0) throw ShapeError("empty batch");
    const std::size_t b = inputs.shape()[0];
    if (inputs.size() != b * per) {
      throw ShapeError("batch inputs " + shape_string(inputs.shape()) + " do not match sample " +
                       shape_str(arch.input));
    }
    return b;
  }

  void forward(const ParameterSet& p, const Tensor& inputs) {
    batch = check_inputs(inputs);
    acts[0].assign(inputs.values().begin(), inputs.values().end());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const Step& s = steps[i];
      const auto& x = acts[i];
      auto& y = acts[i + 1];
      y.resize(batch * numel(s.out));
      std::visit(Overloaded{
                     [&](const Dense&) { dense_forward(p.layers[s.param], x, y); },
                     [&](const Conv2d& c) { conv_forward(i, c, p.layers[s.param], x, y); },
                     [&](const Relu&) {
                       std::transform(x.begin(), x.end(), y.begin(),
                                      [](double v) { return v > 0.0 ? v : 0.0; });
                     },
                     [&](const MaxPool& mp) { pool_forward(i, mp, x, y); },
                     [&](const Flatten&) { std::copy(x.begin(), x.end(), y.begin()); },
                 },
                 s.layer);
    }
  }

  void dense_forward(const LayerParams& lp, const std::vector<double>& x, std::vector<double>& y) {
    const auto out = static_cast<Eigen::Index>(lp.weight.shape()[0]);
    const auto in = static_cast<Eigen::Index>(lp.weight.shape()[1]);
    const auto b = static_cast<Eigen::Index>(batch);
    ConstMatMap X(x.data(), b, in);
    ConstMatMap W(lp.weight.data(), out, in);
    MatMap Y(y.data(), b, out);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += ConstVecMap(lp.bias.data(), out).transpose();
  }

  // cols[i] is K x (B*P): column b*P+p holds the receptive field of output
  // pixel p of sample b, so each conv is one GEMM over the whole batch.
  void conv_forward(std::size_t i, const Conv2d& c, const LayerParams& lp,
                    const std::vector<double>& x, std::vector<double>& y) {
    const Step& s = steps[i];
    const std::size_t C = s.in[0], H = s.in[1], W = s.in[2];
    const std::size_t OH = s.out[1], OW = s.out[2], P = OH * OW;
    const std::size_t k = c.kernel, st = c.stride, K = C * k * k, BP = batch * P;
    auto& col = cols[i];
    col.resize(K * BP);
    for (std::size_t ch = 0; ch < C; ++ch) {
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          double* row = col.data() + ((ch * k + ki) * k + kj) * BP;
          for (std::size_t b = 0; b < batch; ++b) {
            const double* xb = x.data() + b * C * H * W;
            double* rb = row + b * P;
            for (std::size_t oh = 0; oh < OH; ++oh) {
              const double* src = xb + (ch * H + oh * st + ki) * W + kj;
              for (std::size_t ow = 0; ow < OW; ++ow) rb[oh * OW + ow] = src[ow * st];
            }
          }
        }
      }
    }
    const auto OC = static_cast<Eigen::Index>(c.out_ch);
    ConstMatMap Wm(lp.weight.data(), OC, static_cast<Eigen::Index>(K));
    ConstMatMap cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(BP));
    gemm_out.resize(c.out_ch * BP);
    MatMap out(gemm_out.data(), OC, static_cast<Eigen::Index>(BP));
    out.noalias() = Wm * cm;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
        const double* src = gemm_out.data() + oc * BP + b * P;
        double* dst = y.data() + (b * c.out_ch + oc) * P;
        const double bias = lp.bias[oc];
        for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bias;
      }
    }
  }

  void pool_forward(std::size_t i, const MaxPool& mp, const std::vector<double>& x,
                    std::vector<double>& y) {
    const Step& s = steps[i];
    const std::size_t C = s.in[0], H = s.in[1], W = s.in[2];
    const std::size_t OH = s.out[1], OW = s.out[2], k = mp.k;
    auto& am = argmax[i];
    am.resize(y.size());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t ch = 0; ch < C; ++ch) {
        const std::size_t in_base = (b * C + ch) * H * W;
        const std::size_t out_base = (b * C + ch) * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          for (std::size_t ow = 0; ow < OW; ++ow) {
            std::size_t best = (oh * k) * W + ow * k;
            double bv = x[in_base + best];
            for (std::size_t di = 0; di < k; ++di) {
              for (std::size_t dj = 0; dj < k; ++dj) {
                const std::size_t idx = (oh * k + di) * W + ow * k + dj;
                if (x[in_base + idx] > bv) {
                  bv = x[in_base + idx];
                  best = idx;
                }
              }
            }
            y[out_base + oh * OW + ow] = bv;
            am[out_base + oh * OW + ow] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
  }

  // Softmax cross-entropy on acts.back(); writes dloss/dlogits into delta.
  double loss_and_dlogits(const std::vector<std::uint32_t>& labels, bool want_grad) {
    const std::size_t n = arch.num_classes;
    if (labels.size() != batch) {
      throw ShapeError("batch has " + std::to_string(batch) + " inputs but " +
                       std::to_string(labels.size()) + " labels");
    }
    const auto& logits = acts.back();
    if (want_grad) delta.resize(batch * n);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (labels[b] >= n) throw ShapeError("label " + std::to_string(labels[b]) + " out of range");
      const double* z = logits.data() + b * n;
      const double zmax = *std::max_element(z, z + n);
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += std::exp(z[j] - zmax);
      const double log_norm = zmax + std::log(sum);
      total += log_norm - z[labels[b]];
      if (want_grad) {
        double* d = delta.data() + b * n;
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t j = 0; j < n; ++j) d[j] = std::exp(z[j] - log_norm) * inv_b;
        d[labels[b]] -= inv_b;
      }
    }
    return total / static_cast<double>(batch);
  }

  void backward(const ParameterSet& p, Gradient& g) {
    for (std::size_t ii = steps.size(); ii-- > 0;) {
      const Step& s = steps[ii];
      const auto& x = acts[ii];
      const bool need_dx = ii > 0;
      delta_prev.resize(batch * numel(s.in));
      std::visit(
          Overloaded{
              [&](const Dense&) {
                const auto& lp = p.layers[s.param];
                auto& gl = g.layers[s.param];
                const auto out = static_cast<Eigen::Index>(lp.weight.shape()[0]);
                const auto in = static_cast<Eigen::Index>(lp.weight.shape()[1]);
                const auto b = static_cast<Eigen::Index>(batch);
                ConstMatMap dY(delta.data(), b, out);
                ConstMatMap X(x.data(), b, in);
                MatMap(gl.weight.data(), out, in).noalias() = dY.transpose() * X;
                VecMap(gl.bias.data(), out) = dY.colwise().sum().transpose();
                if (need_dx) {
                  MatMap(delta_prev.data(), b, in).noalias() =
                      dY * ConstMatMap(lp.weight.data(), out, in);
                }
              },
              [&](const Conv2d& c) { conv_backward(ii, c, p.layers[s.param], g.layers[s.param],
                                                   need_dx); },
              [&](const Relu&) {
                const auto& y = acts[ii + 1];
                for (std::size_t j = 0; j < y.size(); ++j) {
                  delta_prev[j] = y[j] > 0.0 ? delta[j] : 0.0;
                }
              },
              [&](const MaxPool&) {
                std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
                const std::size_t C = s.in[0], HW = s.in[1] * s.in[2];
                const std::size_t OHW = s.out[1] * s.out[2];
                const auto& am = argmax[ii];
                for (std::size_t bc = 0; bc < batch * C; ++bc) {
                  for (std::size_t o = 0; o < OHW; ++o) {
                    delta_prev[bc * HW + am[bc * OHW + o]] += delta[bc * OHW + o];
                  }
                }
              },
              [&](const Flatten&) { std::copy(delta.begin(), delta.end(), delta_prev.begin()); },
          },
          s.layer);
      std::swap(delta, delta_prev);
    }
  }

  void conv_backward(std::size_t i, const Conv2d& c, const LayerParams& lp, LayerParams& gl,
                     bool need_dx) {
    const Step& s = steps[i];
    const std::size_t C = s.in[0], H = s.in[1], W = s.in[2];
    const std::size_t OH = s.out[1], OW = s.out[2], P = OH * OW;
    const std::size_t k = c.kernel, st = c.stride, K = C * k * k, BP = batch * P;
    const auto OC = static_cast<Eigen::Index>(c.out_ch);
    const auto Ki = static_cast<Eigen::Index>(K);
    const auto BPi = static_cast<Eigen::Index>(BP);

    // Regroup dY from [B][OC][P] to OC x (B*P).
    gemm_out.resize(c.out_ch * BP);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
        const double* src = delta.data() + (b * c.out_ch + oc) * P;
        std::copy(src, src + P, gemm_out.data() + oc * BP + b * P);
      }
    }
    ConstMatMap dY(gemm_out.data(), OC, BPi);
    ConstMatMap cm(cols[i].data(), Ki, BPi);
    MatMap(gl.weight.data(), OC, Ki).noalias() = dY * cm.transpose();
    VecMap(gl.bias.data(), OC) = dY.rowwise().sum();
    if (!need_dx) return;

    dcols.resize(K * BP);
    MatMap dc(dcols.data(), Ki, BPi);
    dc.noalias() = ConstMatMap(lp.weight.data(), OC, Ki).transpose() * dY;
    std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
    for (std::size_t ch = 0; ch < C; ++ch) {
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const double* row = dcols.data() + ((ch * k + ki) * k + kj) * BP;
          for (std::size_t b = 0; b < batch; ++b) {
            double* dxb = delta_prev.data() + b * C * H * W;
            const double* rb = row + b * P;
            for (std::size_t oh = 0; oh < OH; ++oh) {
              double* dst = dxb + (ch * H + oh * st + ki) * W + kj;
              for (std::size_t ow = 0; ow < OW; ++ow) dst[ow * st] += rb[oh * OW + ow];
            }
          }
        }
      }
    }
  }
};

Network::Network(ModelArch arch) : impl_(std::make_unique<Impl>(std::move(arch))) {}
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

const ModelArch& Network::arch() const noexcept { return impl_->arch; }

ParameterSet Network::init(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParameterSet p;
  for (std::size_t i = 0; i < impl_->param_ids.size(); ++i) {
    const Shape& ws = impl_->weight_shapes[i];
    const std::size_t fan_in = shape_numel(ws) / ws[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(ws);
    for (auto& v : w.values()) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    p.layers.push_back({impl_->param_ids[i], std::move(w), Tensor(Shape{ws[0]})});
  }
  return p;
}

ForwardResult Network::forward_loss(const ParameterSet& params, const Batch& batch) {
  impl_->check_params(params);
  impl_->forward(params, batch.inputs);
  ForwardResult r;
  r.loss = impl_->loss_and_dlogits(batch.labels, false);
  r.logits = Tensor({impl_->batch, impl_->arch.num_classes}, impl_->acts.back());
  return r;
}

double Network::loss_and_gradient(const ParameterSet& params, const Batch& batch,
                                  Gradient& grad) {
  impl_->check_params(params);
  impl_->forward(params, batch.inputs);
  const double loss = impl_->loss_and_dlogits(batch.labels, true);
  bool congruent = grad.layers.size() == params.layers.size();
  for (std::size_t i = 0; congruent && i < params.layers.size(); ++i) {
    congruent = grad.layers[i].id == params.layers[i].id &&
                grad.layers[i].weight.shape() == params.layers[i].weight.shape();
  }
  if (!congruent) grad = Gradient::zeros_like(params);
  impl_->backward(params, grad);
  return loss;
}

std::vector<std::uint32_t> Network::predict(const ParameterSet& params, const Tensor& inputs) {
  impl_->check_params(params);
  impl_->forward(params, inputs);
  const std::size_t n = impl_->arch.num_classes;
  const auto& logits = impl_->acts.back();
  std::vector<std::uint32_t> out(impl_->batch);
  for (std::size_t b = 0; b < impl_->batch; ++b) {
    const double* z = logits.data() + b * n;
    out[b] = static_cast<std::uint32_t>(std::max_element(z, z + n) - z);
  }
  return out;
}

ParameterSet init_model(const ModelArch& arch, std::uint64_t seed) {
  return Network(arch).init(seed);
}

ForwardResult forward_loss(const ModelArch& arch, const ParameterSet& params, const Batch& batch) {
  Network net(arch);
  return net.forward_loss(params, batch);
}

Gradient backward(const ModelArch& arch, const ParameterSet& params, const Batch& batch) {
  Network net(arch);
  Gradient g;
  net.loss_and_gradient(params, batch, g);
  return g;
}

ParameterSet sgd_step(const ParameterSet& params, const Gradient& grad, double lr) {
  check_congruent(params.layers, grad.layers);
  ParameterSet out = params;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    auto& l = out.layers[i];
    const auto& g = grad.layers[i];
    for (std::size_t j = 0; j < l.weight.size(); ++j) l.weight[j] -= lr * g.weight[j];
    for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= lr * g.bias[j];
  }
  return out;
}

ParameterSet sgd_step(const ParameterSet& params, const Gradient& grad, double lr,
                      const Gradient& extra) {
  check_congruent(params.layers, grad.layers);
  check_congruent(params.layers, extra.layers);
  ParameterSet out = params;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    auto& l = out.layers[i];
    const auto& g = grad.layers[i];
    const auto& e = extra.layers[i];
    for (std::size_t j = 0; j < l.weight.size(); ++j) l.weight[j] -= lr * (g.weight[j] + e.weight[j]);
    for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= lr * (g.bias[j] + e.bias[j]);
  }
  return out;
}

MomentumSgd::MomentumSgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

void MomentumSgd::step(ParameterSet& params, const Gradient& grad) {
  check_congruent(params.layers, grad.layers);
  if (velocity_.layers.size() != params.layers.size()) velocity_ = Gradient::zeros_like(params);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto update = [&](Tensor& w, const Tensor& g, Tensor& v) {
      double* wp = w.data();
      const double* gp = g.data();
      double* vp = v.data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        vp[j] = momentum_ * vp[j] + gp[j];
        wp[j] -= lr_ * vp[j];
      }
    };
    update(params.layers[i].weight, grad.layers[i].weight, velocity_.layers[i].weight);
    update(params.layers[i].bias, grad.layers[i].bias, velocity_.layers[i].bias);
  }
}

}  // namespace esmfl::model
