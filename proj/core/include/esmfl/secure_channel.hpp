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

// Emulated remote attestation, per-client key agreement and authenticated
// encryption of model updates.
//
// Attestation: the client sends a random challenge and an ephemeral X25519
// key. The enclave answers with its (fixed) measurement, the challenge, its
// own ephemeral key, all signed with an experiment-local Ed25519 identity.
// Once the client has checked signature, measurement and challenge, both
// sides derive the same 256-bit key via X25519 + BLAKE2b (libsodium kx).
//
// Updates are sealed with ChaCha20-Poly1305 (IETF, 96-bit nonce, 128-bit
// tag). The whole wire header is associated data:
//
//   "ESMF" | version u8 | client_id u32 | round u32 | payload_format u8
//   | nonce 12 bytes | ciphertext_len u64 | ciphertext || tag
//
// Nonces are client_id || round || per-round counter, so they never repeat
// within an experiment.

#ifndef ESMFL_SECURE_CHANNEL_HPP_
#define ESMFL_SECURE_CHANNEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "esmfl/sparse_codec.hpp"

namespace esmfl::enclave {
class Enclave;
}

namespace esmfl::secure {

using Bytes = std::vector<std::uint8_t>;
using Key = std::array<std::uint8_t, 32>;
using Nonce = std::array<std::uint8_t, 12>;
using Seed = std::array<std::uint8_t, 32>;

inline constexpr std::size_t kTagBytes = 16;
inline constexpr std::size_t kWireHeaderBytes = 4 + 1 + 4 + 4 + 1 + 12 + 8;
inline constexpr std::uint8_t kWireVersion = 1;

// Stand-in for an MRENCLAVE value.
extern const std::array<std::uint8_t, 32> kEnclaveMeasurement;

// Initializes libsodium once; safe to call repeatedly.
void ensure_crypto_ready();

std::string to_hex(std::span<const std::uint8_t> bytes);

// Reproducible byte stream for tests and seeded experiments (ChaCha20 keyed
// by BLAKE2b(seed || counter)).
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed);

  void fill(std::span<std::uint8_t> out);
  Seed next_seed();

 private:
  Seed seed_{};
  std::uint64_t counter_ = 0;
};

struct ClientKey {
  std::uint32_t client_id = 0;
  Key sk{};
  std::uint32_t established_at = 0;  // round index

  friend bool operator==(const ClientKey&, const ClientKey&) = default;
};

struct AttestationRequest {
  std::uint32_t client_id = 0;
  std::array<std::uint8_t, 32> challenge{};
  std::array<std::uint8_t, 32> client_public{};
};

struct AttestationResponse {
  std::array<std::uint8_t, 32> measurement{};
  std::array<std::uint8_t, 32> challenge{};
  std::array<std::uint8_t, 32> enclave_public{};
  std::array<std::uint8_t, 64> signature{};
};

// Everything needed to re-verify a completed handshake later.
struct AttestationTranscript {
  AttestationRequest request;
  AttestationResponse response;
  // BLAKE2b of the derived key; lets an auditor confirm which key was agreed
  // without the log holding the key itself.
  std::array<std::uint8_t, 32> key_confirmation{};
};

// Bytes covered by the enclave's signature.
Bytes signed_payload(const AttestationRequest& req, const AttestationResponse& resp);

// Signature, measurement, challenge echo and key confirmation. Returns false
// if any field was altered.
bool verify_transcript(const AttestationTranscript& t,
                       const std::array<std::uint8_t, 32>& identity_public, const Key& key);

// Long-term signing identity of the emulated enclave.
class EnclaveIdentity {
 public:
  explicit EnclaveIdentity(const Seed& seed);

  const std::array<std::uint8_t, 32>& public_key() const noexcept { return public_; }

  // Answers a request and derives the enclave-side session key.
  std::pair<AttestationResponse, Key> respond(const AttestationRequest& req,
                                              const Seed& ephemeral_seed) const;

 private:
  std::array<std::uint8_t, 32> public_{};
  std::array<std::uint8_t, 64> secret_{};
};

// Client half of the handshake.
class ClientHandshake {
 public:
  ClientHandshake(std::uint32_t client_id, const std::array<std::uint8_t, 32>& identity_public,
                  DeterministicRng& rng);

  const AttestationRequest& request() const noexcept { return request_; }

  // Throws AttestationError if the response does not verify.
  std::pair<Key, AttestationTranscript> finish(const AttestationResponse& resp) const;

 private:
  AttestationRequest request_;
  std::array<std::uint8_t, 32> identity_public_{};
  std::array<std::uint8_t, 32> secret_{};
};

// Append-only JSON-lines audit log. With an empty path records are only kept
// in memory.
class TranscriptLog {
 public:
  TranscriptLog() = default;
  explicit TranscriptLog(const std::filesystem::path& path);

  void append(const std::string& json_line);
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
  std::unique_ptr<std::ofstream> out_;
};

struct EncryptedUpdate {
  std::uint8_t version = kWireVersion;
  std::uint32_t client_id = 0;
  std::uint32_t round = 0;
  codec::Format payload_format = codec::Format::kDense;
  Nonce nonce{};
  Bytes ciphertext;  // includes the 16-byte tag

  friend bool operator==(const EncryptedUpdate&, const EncryptedUpdate&) = default;
};

// Header bytes (everything before the ciphertext), i.e. the associated data.
Bytes wire_header(const EncryptedUpdate& u);
Bytes serialize(const EncryptedUpdate& u);
// Throws DecryptError(kMalformed) on bad framing.
EncryptedUpdate parse_encrypted(std::span<const std::uint8_t> wire);

// Client-side "data encryption" module: owns sk_i and the nonce counters.
class UpdateEncryptor {
 public:
  explicit UpdateEncryptor(ClientKey key);

  const ClientKey& key() const noexcept { return key_; }

  // Throws CryptoError when the per-round nonce counter is exhausted.
  EncryptedUpdate encrypt_update(std::span<const std::uint8_t> update_bytes, std::uint32_t round,
                                 codec::Format payload_format);

  // Test hook: start a round's counter near the end of its range.
  void set_counter_for_testing(std::uint32_t round, std::uint64_t next);

 private:
  ClientKey key_;
  std::map<std::uint32_t, std::uint64_t> next_counter_;
};

// Grants access to trusted-section operations; only the enclave can make one.
class TrustedAccess {
 private:
  TrustedAccess() = default;
  friend class esmfl::enclave::Enclave;
};

// Decrypted update bytes. Only KeyManager::decrypt_update can create one.
class PlaintextUpdate {
 public:
  PlaintextUpdate(PlaintextUpdate&&) noexcept = default;
  PlaintextUpdate& operator=(PlaintextUpdate&&) noexcept = default;
  PlaintextUpdate(const PlaintextUpdate&) = delete;
  PlaintextUpdate& operator=(const PlaintextUpdate&) = delete;

  std::uint32_t client_id() const noexcept { return client_id_; }
  std::uint32_t round() const noexcept { return round_; }
  codec::Format format() const noexcept { return format_; }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

 private:
  friend class KeyManager;
  PlaintextUpdate(std::uint32_t client_id, std::uint32_t round, codec::Format format, Bytes bytes)
      : client_id_(client_id), round_(round), format_(format), bytes_(std::move(bytes)) {}

  std::uint32_t client_id_;
  std::uint32_t round_;
  codec::Format format_;
  Bytes bytes_;
};

// Registry of per-client keys inside the enclave. Single writer, concurrent
// readers; also remembers accepted (client, round, nonce) triples.
class KeyManager {
 public:
  // Throws AttestationError on a duplicate client_id.
  void register_key(const ClientKey& key);

  bool contains(std::uint32_t client_id) const;
  std::size_t size() const;
  // Copy of the stored key; throws DecryptError(kUnknownClient).
  ClientKey key(std::uint32_t client_id) const;

  // Verifies and opens `enc`. Throws DecryptError on unknown client, tag
  // failure or replay.
  PlaintextUpdate decrypt_update(const EncryptedUpdate& enc, TrustedAccess access);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::uint32_t, ClientKey> keys_;
  std::set<std::tuple<std::uint32_t, std::uint32_t, Nonce>> accepted_;
};

struct AttestationResult {
  ClientKey client_key;
  ClientKey manager_key;
  AttestationTranscript transcript;
};

// Full handshake for one client against `identity`, registering the
// enclave-side key in `manager`. Throws AttestationError on verification
// failure or when the client is already registered.
AttestationResult attest_and_exchange(std::uint32_t client_id, const EnclaveIdentity& identity,
                                      KeyManager& manager, DeterministicRng& rng,
                                      std::uint32_t round = 0, TranscriptLog* log = nullptr);

std::string transcript_json(const AttestationTranscript& t);

}  // namespace esmfl::secure

#endif  // ESMFL_SECURE_CHANNEL_HPP_
