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

// Model blobs on the wire. Values travel as fp32, all integers little-endian.
//
//   blob   := "ESMB" | version u8 | format u8 (0 dense, 1 csr) | layers u16
//             | layer*
//   layer  := id_len u8 | id bytes | rank u8 | dim u32 * rank | bias_len u32
//             | body
//   dense body := weight f32 * numel | bias f32 * bias_len
//   csr body   := rows u32 | cols u32 | nnz u32 | row_ptr u32 * (rows+1)
//                 | col_idx u32 * nnz | values f32 * nnz | bias f32 * bias_len
//
// A weight tensor of any rank is viewed as a (dim0 x rest) matrix for CSR.

#ifndef ESMFL_SPARSE_CODEC_HPP_
#define ESMFL_SPARSE_CODEC_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esmfl/model.hpp"

namespace esmfl::codec {

using Bytes = std::vector<std::uint8_t>;

enum class Format : std::uint8_t { kDense = 0, kCsr = 1 };

inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::size_t kBlobHeaderBytes = 8;

const char* format_name(Format f);

struct DenseLayer {
  std::string id;
  Shape shape;
  std::vector<float> weight;
  std::vector<float> bias;
};

struct DenseBlob {
  std::vector<DenseLayer> layers;
};

struct CsrLayer {
  std::string id;
  Shape shape;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;
  std::vector<float> values;
  std::vector<float> bias;
};

struct CsrBlob {
  std::vector<CsrLayer> layers;
};

DenseBlob dense_encode(const model::ParameterSet& params);
model::ParameterSet dense_decode(const DenseBlob& blob);

// Entries that are zero at fp32 are dropped.
CsrBlob csr_encode(const model::ParameterSet& params);
// Throws DecodeError if row_ptr/col_idx violate the CSR invariants.
model::ParameterSet csr_decode(const CsrBlob& blob);

Bytes serialize(const DenseBlob& blob);
Bytes serialize(const CsrBlob& blob);

// Parsers validate the framing and throw DecodeError on any violation.
Format peek_format(std::span<const std::uint8_t> bytes);
DenseBlob parse_dense(std::span<const std::uint8_t> bytes);
CsrBlob parse_csr(std::span<const std::uint8_t> bytes);

// Convenience: params -> bytes and back (format read from the header).
Bytes encode(const model::ParameterSet& params, Format format);
model::ParameterSet decode(std::span<const std::uint8_t> bytes);

// Byte length of encode(params, format), computed without encoding.
std::size_t encoded_size(const model::ParameterSet& params, Format format);

// Rounds every value through fp32, i.e. what the receiver of a blob sees.
model::ParameterSet round_to_fp32(const model::ParameterSet& params);

}  // namespace esmfl::codec

#endif  // ESMFL_SPARSE_CODEC_HPP_
