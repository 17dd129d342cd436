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

#include "esmfl/sparse_codec.hpp"

#include <cmath>
#include <limits>

#include "byte_io.hpp"
#include "esmfl/errors.hpp"

namespace esmfl::codec {
namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'S', 'M', 'B'};
constexpr std::size_t kMaxRank = 8;

using detail::ByteReader;
using detail::ByteWriter;
using Kind = DecodeError::Kind;

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

std::size_t layer_header_size(const model::LayerParams& l) {
  return 1 + l.id.size() + 1 + 4 * l.weight.shape().size() + 4;
}

void check_layer_meta(const model::LayerParams& l) {
  if (l.id.size() > 255) throw ShapeError("layer id longer than 255 bytes: " + l.id);
  if (l.weight.shape().empty() || l.weight.shape().size() > kMaxRank) {
    throw ShapeError("layer '" + l.id + "' has unsupported rank");
  }
}

std::uint32_t matrix_rows(const Shape& s) { return static_cast<std::uint32_t>(s[0]); }
std::uint32_t matrix_cols(const Shape& s) {
  return s[0] == 0 ? 0 : static_cast<std::uint32_t>(shape_numel(s) / s[0]);
}

void write_blob_header(ByteWriter& w, Format f, std::size_t layers) {
  if (layers > std::numeric_limits<std::uint16_t>::max()) throw ShapeError("too many layers");
  for (auto b : kMagic) w.u8(b);
  w.u8(kBlobVersion);
  w.u8(static_cast<std::uint8_t>(f));
  w.u16(static_cast<std::uint16_t>(layers));
}

void write_layer_header(ByteWriter& w, const std::string& id, const Shape& shape,
                        std::size_t bias_len) {
  w.u8(static_cast<std::uint8_t>(id.size()));
  w.str(id);
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) w.u32(to_u32(d, "dimension"));
  w.u32(to_u32(bias_len, "bias length"));
}

[[noreturn]] void fail(Kind k, const std::string& msg) { throw DecodeError(k, "blob: " + msg); }

void require(ByteReader& r, std::size_t n) {
  if (!r.has(n)) fail(Kind::kTruncated, "truncated");
}

std::uint16_t read_blob_header(ByteReader& r, Format expected) {
  require(r, kBlobHeaderBytes);
  for (auto b : kMagic) {
    if (r.u8() != b) fail(Kind::kBadMagic, "bad magic");
  }
  if (r.u8() != kBlobVersion) fail(Kind::kBadVersion, "unsupported version");
  if (r.u8() != static_cast<std::uint8_t>(expected)) fail(Kind::kBadFormat, "unexpected format");
  return r.u16();
}

struct LayerMeta {
  std::string id;
  Shape shape;
  std::size_t bias_len = 0;
};

LayerMeta read_layer_header(ByteReader& r) {
  LayerMeta m;
  require(r, 1);
  const std::size_t id_len = r.u8();
  require(r, id_len + 1);
  m.id = r.str(id_len);
  const std::size_t rank = r.u8();
  if (rank == 0 || rank > kMaxRank) fail(Kind::kShapeMismatch, "layer '" + m.id + "' bad rank");
  require(r, 4 * rank + 4);
  std::size_t numel = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t d = r.u32();
    if (d != 0 && numel > std::numeric_limits<std::uint32_t>::max() / d) {
      fail(Kind::kShapeMismatch, "layer '" + m.id + "' too large");
    }
    numel *= d;
    m.shape.push_back(d);
  }
  m.bias_len = r.u32();
  return m;
}

std::vector<float> read_floats(ByteReader& r, std::size_t n) {
  if (n > r.remaining() / 4) fail(Kind::kTruncated, "truncated float array");
  std::vector<float> v(n);
  for (auto& x : v) {
    x = r.f32();
    if (!std::isfinite(x)) fail(Kind::kNonFinite, "non-finite value");
  }
  return v;
}

std::vector<std::uint32_t> read_u32s(ByteReader& r, std::size_t n) {
  if (n > r.remaining() / 4) fail(Kind::kTruncated, "truncated index array");
  std::vector<std::uint32_t> v(n);
  for (auto& x : v) x = r.u32();
  return v;
}

void finish(ByteReader& r) {
  if (r.remaining() != 0) fail(Kind::kTrailingBytes, "trailing bytes");
}

Tensor widen(const Shape& shape, const std::vector<float>& v) {
  return Tensor(shape, std::vector<double>(v.begin(), v.end()));
}

std::vector<float> narrow(const Tensor& t) {
  std::vector<float> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<float>(t[i]);
  return v;
}

}  // namespace

const char* format_name(Format f) { return f == Format::kCsr ? "csr" : "dense"; }

DenseBlob dense_encode(const model::ParameterSet& params) {
  DenseBlob blob;
  for (const auto& l : params.layers) {
    check_layer_meta(l);
    blob.layers.push_back({l.id, l.weight.shape(), narrow(l.weight), narrow(l.bias)});
  }
  return blob;
}

model::ParameterSet dense_decode(const DenseBlob& blob) {
  model::ParameterSet p;
  for (const auto& l : blob.layers) {
    if (shape_numel(l.shape) != l.weight.size()) {
      throw DecodeError(Kind::kShapeMismatch, "dense layer '" + l.id + "' size mismatch");
    }
    p.layers.push_back({l.id, widen(l.shape, l.weight), widen(Shape{l.bias.size()}, l.bias)});
  }
  return p;
}

CsrBlob csr_encode(const model::ParameterSet& params) {
  CsrBlob blob;
  for (const auto& l : params.layers) {
    check_layer_meta(l);
    CsrLayer c;
    c.id = l.id;
    c.shape = l.weight.shape();
    c.rows = to_u32(c.shape[0], "rows");
    c.cols = to_u32(matrix_cols(c.shape), "cols");
    c.row_ptr.reserve(c.rows + 1);
    c.row_ptr.push_back(0);
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      for (std::uint32_t j = 0; j < c.cols; ++j) {
        const float v = static_cast<float>(l.weight[std::size_t{i} * c.cols + j]);
        if (v != 0.0f) {
          c.col_idx.push_back(j);
          c.values.push_back(v);
        }
      }
      c.row_ptr.push_back(to_u32(c.values.size(), "nnz"));
    }
    c.bias = narrow(l.bias);
    blob.layers.push_back(std::move(c));
  }
  return blob;
}

model::ParameterSet csr_decode(const CsrBlob& blob) {
  model::ParameterSet p;
  for (const auto& c : blob.layers) {
    const std::string where = "csr layer '" + c.id + "'";
    if (c.shape.empty() || c.rows != matrix_rows(c.shape) || c.cols != matrix_cols(c.shape)) {
      throw DecodeError(Kind::kShapeMismatch, where + ": rows/cols do not match shape");
    }
    if (c.row_ptr.size() != std::size_t{c.rows} + 1 || c.row_ptr.front() != 0) {
      throw DecodeError(Kind::kBadRowPtr, where + ": row_ptr must start at 0 with rows+1 entries");
    }
    if (c.col_idx.size() != c.values.size() || c.row_ptr.back() != c.values.size()) {
      throw DecodeError(Kind::kBadRowPtr, where + ": row_ptr[rows] != nnz");
    }
    Tensor w(c.shape);
    for (std::uint32_t i = 0; i < c.rows; ++i) {
      const std::uint32_t begin = c.row_ptr[i];
      const std::uint32_t end = c.row_ptr[i + 1];
      if (end < begin || end > c.values.size()) {
        throw DecodeError(Kind::kBadRowPtr, where + ": row_ptr decreasing at row " + std::to_string(i));
      }
      for (std::uint32_t k = begin; k < end; ++k) {
        const std::uint32_t j = c.col_idx[k];
        if (j >= c.cols) throw DecodeError(Kind::kBadColIdx, where + ": col_idx out of range");
        if (k > begin && j <= c.col_idx[k - 1]) {
          throw DecodeError(Kind::kBadColIdx, where + ": col_idx not strictly increasing");
        }
        if (!std::isfinite(c.values[k])) throw DecodeError(Kind::kNonFinite, where + ": non-finite");
        w[std::size_t{i} * c.cols + j] = c.values[k];
      }
    }
    p.layers.push_back({c.id, std::move(w), widen(Shape{c.bias.size()}, c.bias)});
  }
  return p;
}

Bytes serialize(const DenseBlob& blob) {
  Bytes out;
  ByteWriter w(out);
  write_blob_header(w, Format::kDense, blob.layers.size());
  for (const auto& l : blob.layers) {
    write_layer_header(w, l.id, l.shape, l.bias.size());
    for (float v : l.weight) w.f32(v);
    for (float v : l.bias) w.f32(v);
  }
  return out;
}

Bytes serialize(const CsrBlob& blob) {
  Bytes out;
  ByteWriter w(out);
  write_blob_header(w, Format::kCsr, blob.layers.size());
  for (const auto& c : blob.layers) {
    write_layer_header(w, c.id, c.shape, c.bias.size());
    w.u32(c.rows);
    w.u32(c.cols);
    w.u32(to_u32(c.values.size(), "nnz"));
    for (auto v : c.row_ptr) w.u32(v);
    for (auto v : c.col_idx) w.u32(v);
    for (float v : c.values) w.f32(v);
    for (float v : c.bias) w.f32(v);
  }
  return out;
}

Format peek_format(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  require(r, kBlobHeaderBytes);
  for (auto b : kMagic) {
    if (r.u8() != b) fail(Kind::kBadMagic, "bad magic");
  }
  if (r.u8() != kBlobVersion) fail(Kind::kBadVersion, "unsupported version");
  const auto f = r.u8();
  if (f > 1) fail(Kind::kBadFormat, "unknown format " + std::to_string(f));
  return static_cast<Format>(f);
}

DenseBlob parse_dense(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto n = read_blob_header(r, Format::kDense);
  DenseBlob blob;
  for (std::uint16_t i = 0; i < n; ++i) {
    auto m = read_layer_header(r);
    DenseLayer l{m.id, m.shape, read_floats(r, shape_numel(m.shape)), {}};
    l.bias = read_floats(r, m.bias_len);
    blob.layers.push_back(std::move(l));
  }
  finish(r);
  return blob;
}

CsrBlob parse_csr(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto n = read_blob_header(r, Format::kCsr);
  CsrBlob blob;
  for (std::uint16_t i = 0; i < n; ++i) {
    auto m = read_layer_header(r);
    CsrLayer c;
    c.id = m.id;
    c.shape = m.shape;
    require(r, 12);
    c.rows = r.u32();
    c.cols = r.u32();
    const std::size_t nnz = r.u32();
    const std::size_t numel = shape_numel(m.shape);
    if (c.rows != m.shape[0] || std::size_t{c.rows} * c.cols != numel) {
      fail(Kind::kShapeMismatch, "layer '" + m.id + "' rows/cols do not match shape");
    }
    if (nnz > numel) fail(Kind::kShapeMismatch, "layer '" + m.id + "' nnz exceeds size");
    c.row_ptr = read_u32s(r, std::size_t{c.rows} + 1);
    c.col_idx = read_u32s(r, nnz);
    c.values = read_floats(r, nnz);
    c.bias = read_floats(r, m.bias_len);
    blob.layers.push_back(std::move(c));
  }
  finish(r);
  return blob;
}

Bytes encode(const model::ParameterSet& params, Format format) {
  return format == Format::kCsr ? serialize(csr_encode(params)) : serialize(dense_encode(params));
}

model::ParameterSet decode(std::span<const std::uint8_t> bytes) {
  return peek_format(bytes) == Format::kCsr ? csr_decode(parse_csr(bytes))
                                            : dense_decode(parse_dense(bytes));
}

std::size_t encoded_size(const model::ParameterSet& params, Format format) {
  std::size_t total = kBlobHeaderBytes;
  for (const auto& l : params.layers) {
    total += layer_header_size(l) + 4 * l.bias.size();
    if (format == Format::kDense) {
      total += 4 * l.weight.size();
    } else {
      std::size_t nnz = 0;
      for (double v : l.weight.values()) nnz += static_cast<float>(v) != 0.0f;
      total += 12 + 4 * (std::size_t{matrix_rows(l.weight.shape())} + 1) + 8 * nnz;
    }
  }
  return total;
}

model::ParameterSet round_to_fp32(const model::ParameterSet& params) {
  model::ParameterSet out = params;
  for (auto& l : out.layers) {
    for (auto& v : l.weight.values()) v = static_cast<float>(v);
    for (auto& v : l.bias.values()) v = static_cast<float>(v);
  }
  return out;
}

}  // namespace esmfl::codec
