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

#ifndef ESMFL_ERRORS_HPP_
#define ESMFL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace esmfl {

// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Raised by the blob codecs when a byte stream violates the wire layout or
// the CSR invariants.
class DecodeError : public Error {
 public:
  enum class Kind {
    kTruncated,
    kBadMagic,
    kBadVersion,
    kBadFormat,
    kBadRowPtr,
    kBadColIdx,
    kShapeMismatch,
    kNonFinite,
    kTrailingBytes,
  };

  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class AttestationError : public Error {
 public:
  using Error::Error;
};

// Rejection of an encrypted update by the key manager.
class DecryptError : public Error {
 public:
  enum class Kind {
    kMalformed,
    kUnknownClient,
    kAuthFailure,
    kReplay,
  };

  DecryptError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

class EnclaveError : public Error {
 public:
  using Error::Error;
};

}  // namespace esmfl

#endif  // ESMFL_ERRORS_HPP_
