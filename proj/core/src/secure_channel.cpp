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

#include "esmfl/secure_channel.hpp"

#include <sodium.h>

#include <algorithm>
#include <limits>

#include "byte_io.hpp"
#include "esmfl/errors.hpp"

namespace esmfl::secure {

namespace {

static_assert(crypto_kx_PUBLICKEYBYTES == 32 && crypto_kx_SECRETKEYBYTES == 32);
static_assert(crypto_kx_SESSIONKEYBYTES == 32 && crypto_kx_SEEDBYTES == 32);
static_assert(crypto_sign_PUBLICKEYBYTES == 32 && crypto_sign_SECRETKEYBYTES == 64);
static_assert(crypto_sign_BYTES == 64 && crypto_sign_SEEDBYTES == 32);
static_assert(crypto_aead_chacha20poly1305_ietf_NPUBBYTES == 12);
static_assert(crypto_aead_chacha20poly1305_ietf_ABYTES == kTagBytes);
static_assert(crypto_aead_chacha20poly1305_ietf_KEYBYTES == 32);
static_assert(randombytes_SEEDBYTES == 32);

constexpr std::uint8_t kMagic[4] = {'E', 'S', 'M', 'F'};

std::array<std::uint8_t, 32> blake2b_256(std::span<const std::uint8_t> in) {
  std::array<std::uint8_t, 32> out{};
  crypto_generichash(out.data(), out.size(), in.data(), in.size(), nullptr, 0);
  return out;
}

Nonce make_nonce(std::uint32_t client_id, std::uint32_t round, std::uint32_t counter) {
  Nonce n{};
  for (int i = 0; i < 4; ++i) {
    n[i] = static_cast<std::uint8_t>(client_id >> (8 * i));
    n[4 + i] = static_cast<std::uint8_t>(round >> (8 * i));
    n[8 + i] = static_cast<std::uint8_t>(counter >> (8 * i));
  }
  return n;
}

}  // namespace

const std::array<std::uint8_t, 32> kEnclaveMeasurement = {
    0x3a, 0x91, 0x5c, 0x07, 0xe2, 0x4b, 0x18, 0xd6, 0x70, 0xaf, 0x2e, 0x93, 0x5d, 0xc4, 0x01, 0x8b,
    0x66, 0xf0, 0x27, 0xb9, 0x4e, 0x13, 0xca, 0x85, 0xd2, 0x39, 0x7e, 0x60, 0xab, 0x15, 0xfc, 0x42};

void ensure_crypto_ready() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoError("libsodium initialization failed");
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

DeterministicRng::DeterministicRng(std::uint64_t seed) {
  ensure_crypto_ready();
  std::array<std::uint8_t, 8> s{};
  for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  seed_ = blake2b_256(s);
}

Seed DeterministicRng::next_seed() {
  std::array<std::uint8_t, 8> c{};
  for (int i = 0; i < 8; ++i) c[i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  ++counter_;
  Seed out{};
  crypto_generichash(out.data(), out.size(), c.data(), c.size(), seed_.data(), seed_.size());
  return out;
}

void DeterministicRng::fill(std::span<std::uint8_t> out) {
  const Seed s = next_seed();
  randombytes_buf_deterministic(out.data(), out.size(), s.data());
}

Bytes signed_payload(const AttestationRequest& req, const AttestationResponse& resp) {
  Bytes out;
  detail::ByteWriter w(out);
  w.str("esmfl-attest-v1");
  w.bytes(resp.measurement);
  w.bytes(resp.challenge);
  w.bytes(resp.enclave_public);
  w.bytes(req.client_public);
  w.u32(req.client_id);
  return out;
}

bool verify_transcript(const AttestationTranscript& t,
                       const std::array<std::uint8_t, 32>& identity_public, const Key& key) {
  ensure_crypto_ready();
  const Bytes msg = signed_payload(t.request, t.response);
  if (crypto_sign_verify_detached(t.response.signature.data(), msg.data(), msg.size(),
                                  identity_public.data()) != 0) {
    return false;
  }
  if (t.response.measurement != kEnclaveMeasurement) return false;
  if (t.response.challenge != t.request.challenge) return false;
  return blake2b_256(key) == t.key_confirmation;
}

EnclaveIdentity::EnclaveIdentity(const Seed& seed) {
  ensure_crypto_ready();
  crypto_sign_seed_keypair(public_.data(), secret_.data(), seed.data());
}

std::pair<AttestationResponse, Key> EnclaveIdentity::respond(const AttestationRequest& req,
                                                             const Seed& ephemeral_seed) const {
  AttestationResponse resp;
  resp.measurement = kEnclaveMeasurement;
  resp.challenge = req.challenge;
  std::array<std::uint8_t, 32> eph_secret{};
  crypto_kx_seed_keypair(resp.enclave_public.data(), eph_secret.data(), ephemeral_seed.data());

  const Bytes msg = signed_payload(req, resp);
  crypto_sign_detached(resp.signature.data(), nullptr, msg.data(), msg.size(), secret_.data());

  Key rx{}, tx{};
  const int rc = crypto_kx_server_session_keys(rx.data(), tx.data(), resp.enclave_public.data(),
                                               eph_secret.data(), req.client_public.data());
  sodium_memzero(eph_secret.data(), eph_secret.size());
  if (rc != 0) throw AttestationError("enclave: invalid client public key");
  // The client's transmit key is the enclave's receive key.
  return {resp, rx};
}

ClientHandshake::ClientHandshake(std::uint32_t client_id,
                                 const std::array<std::uint8_t, 32>& identity_public,
                                 DeterministicRng& rng)
    : identity_public_(identity_public) {
  ensure_crypto_ready();
  request_.client_id = client_id;
  rng.fill(request_.challenge);
  const Seed s = rng.next_seed();
  crypto_kx_seed_keypair(request_.client_public.data(), secret_.data(), s.data());
}

std::pair<Key, AttestationTranscript> ClientHandshake::finish(
    const AttestationResponse& resp) const {
  const Bytes msg = signed_payload(request_, resp);
  if (crypto_sign_verify_detached(resp.signature.data(), msg.data(), msg.size(),
                                  identity_public_.data()) != 0) {
    throw AttestationError("client " + std::to_string(request_.client_id) +
                           ": quote signature does not verify");
  }
  if (resp.measurement != kEnclaveMeasurement) {
    throw AttestationError("client " + std::to_string(request_.client_id) +
                           ": unexpected enclave measurement");
  }
  if (resp.challenge != request_.challenge) {
    throw AttestationError("client " + std::to_string(request_.client_id) +
                           ": challenge mismatch");
  }
  Key rx{}, tx{};
  if (crypto_kx_client_session_keys(rx.data(), tx.data(), request_.client_public.data(),
                                    secret_.data(), resp.enclave_public.data()) != 0) {
    throw AttestationError("client " + std::to_string(request_.client_id) +
                           ": invalid enclave public key");
  }
  AttestationTranscript t{request_, resp, blake2b_256(tx)};
  return {tx, t};
}

TranscriptLog::TranscriptLog(const std::filesystem::path& path) {
  if (path.empty()) return;
  out_ = std::make_unique<std::ofstream>(path, std::ios::app);
  if (!*out_) throw Error("cannot open transcript log " + path.string());
}

void TranscriptLog::append(const std::string& json_line) {
  std::lock_guard lock(mu_);
  lines_.push_back(json_line);
  if (out_) {
    *out_ << json_line << '\n';
    out_->flush();
  }
}

std::vector<std::string> TranscriptLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

Bytes wire_header(const EncryptedUpdate& u) {
  Bytes out;
  out.reserve(kWireHeaderBytes);
  detail::ByteWriter w(out);
  w.bytes(kMagic);
  w.u8(u.version);
  w.u32(u.client_id);
  w.u32(u.round);
  w.u8(static_cast<std::uint8_t>(u.payload_format));
  w.bytes(u.nonce);
  w.u64(u.ciphertext.size());
  return out;
}

Bytes serialize(const EncryptedUpdate& u) {
  Bytes out = wire_header(u);
  out.insert(out.end(), u.ciphertext.begin(), u.ciphertext.end());
  return out;
}

EncryptedUpdate parse_encrypted(std::span<const std::uint8_t> wire) {
  using K = DecryptError::Kind;
  detail::ByteReader r(wire);
  const auto magic = r.bytes(4);
  if (!r.ok()) throw DecryptError(K::kMalformed, "encrypted update shorter than its header");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw DecryptError(K::kMalformed, "bad encrypted-update magic");
  }
  EncryptedUpdate u;
  u.version = r.u8();
  u.client_id = r.u32();
  u.round = r.u32();
  const std::uint8_t fmt = r.u8();
  const auto nonce = r.bytes(u.nonce.size());
  const std::uint64_t len = r.u64();
  if (!r.ok()) throw DecryptError(K::kMalformed, "encrypted update shorter than its header");
  if (u.version != kWireVersion) {
    throw DecryptError(K::kMalformed, "unsupported wire version " + std::to_string(u.version));
  }
  if (fmt > static_cast<std::uint8_t>(codec::Format::kCsr)) {
    throw DecryptError(K::kMalformed, "unknown payload format " + std::to_string(fmt));
  }
  u.payload_format = static_cast<codec::Format>(fmt);
  std::copy(nonce.begin(), nonce.end(), u.nonce.begin());
  if (len != r.remaining() || len < kTagBytes) {
    throw DecryptError(K::kMalformed, "ciphertext length field does not match the frame");
  }
  const auto ct = r.bytes(static_cast<std::size_t>(len));
  u.ciphertext.assign(ct.begin(), ct.end());
  return u;
}

UpdateEncryptor::UpdateEncryptor(ClientKey key) : key_(key) { ensure_crypto_ready(); }

void UpdateEncryptor::set_counter_for_testing(std::uint32_t round, std::uint64_t next) {
  next_counter_[round] = next;
}

EncryptedUpdate UpdateEncryptor::encrypt_update(std::span<const std::uint8_t> update_bytes,
                                                std::uint32_t round,
                                                codec::Format payload_format) {
  auto& next = next_counter_[round];
  if (next > std::numeric_limits<std::uint32_t>::max()) {
    throw CryptoError("nonce counter exhausted for client " + std::to_string(key_.client_id) +
                      " round " + std::to_string(round));
  }
  EncryptedUpdate u;
  u.client_id = key_.client_id;
  u.round = round;
  u.payload_format = payload_format;
  u.nonce = make_nonce(key_.client_id, round, static_cast<std::uint32_t>(next));
  ++next;
  u.ciphertext.resize(update_bytes.size() + kTagBytes);
  const Bytes ad = wire_header(u);
  unsigned long long clen = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(u.ciphertext.data(), &clen, update_bytes.data(),
                                            update_bytes.size(), ad.data(), ad.size(), nullptr,
                                            u.nonce.data(), key_.sk.data());
  return u;
}

void KeyManager::register_key(const ClientKey& key) {
  std::unique_lock lock(mu_);
  if (!keys_.emplace(key.client_id, key).second) {
    throw AttestationError("client " + std::to_string(key.client_id) + " is already registered");
  }
}

bool KeyManager::contains(std::uint32_t client_id) const {
  std::shared_lock lock(mu_);
  return keys_.count(client_id) != 0;
}

std::size_t KeyManager::size() const {
  std::shared_lock lock(mu_);
  return keys_.size();
}

ClientKey KeyManager::key(std::uint32_t client_id) const {
  std::shared_lock lock(mu_);
  const auto it = keys_.find(client_id);
  if (it == keys_.end()) {
    throw DecryptError(DecryptError::Kind::kUnknownClient,
                       "no key for client " + std::to_string(client_id));
  }
  return it->second;
}

PlaintextUpdate KeyManager::decrypt_update(const EncryptedUpdate& enc, TrustedAccess) {
  using K = DecryptError::Kind;
  const ClientKey k = key(enc.client_id);
  if (enc.version != kWireVersion) throw DecryptError(K::kMalformed, "unsupported wire version");
  if (enc.ciphertext.size() < kTagBytes) throw DecryptError(K::kMalformed, "ciphertext too short");
  const Bytes ad = wire_header(enc);
  Bytes plain(enc.ciphertext.size() - kTagBytes);
  unsigned long long plen = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(plain.data(), &plen, nullptr,
                                                enc.ciphertext.data(), enc.ciphertext.size(),
                                                ad.data(), ad.size(), enc.nonce.data(),
                                                k.sk.data()) != 0) {
    throw DecryptError(K::kAuthFailure, "authentication failed for client " +
                                            std::to_string(enc.client_id) + " round " +
                                            std::to_string(enc.round));
  }
  {
    std::unique_lock lock(mu_);
    if (!accepted_.emplace(enc.client_id, enc.round, enc.nonce).second) {
      throw DecryptError(K::kReplay, "replayed update from client " +
                                         std::to_string(enc.client_id) + " round " +
                                         std::to_string(enc.round));
    }
  }
  return PlaintextUpdate(enc.client_id, enc.round, enc.payload_format, std::move(plain));
}

std::string transcript_json(const AttestationTranscript& t) {
  return std::string("{\"event\":\"attestation\",\"client_id\":") +
         std::to_string(t.request.client_id) + ",\"challenge\":\"" + to_hex(t.request.challenge) +
         "\",\"client_public\":\"" + to_hex(t.request.client_public) + "\",\"measurement\":\"" +
         to_hex(t.response.measurement) + "\",\"enclave_public\":\"" +
         to_hex(t.response.enclave_public) + "\",\"signature\":\"" + to_hex(t.response.signature) +
         "\",\"key_confirmation\":\"" + to_hex(t.key_confirmation) + "\"}";
}

AttestationResult attest_and_exchange(std::uint32_t client_id, const EnclaveIdentity& identity,
                                      KeyManager& manager, DeterministicRng& rng,
                                      std::uint32_t round, TranscriptLog* log) {
  if (manager.contains(client_id)) {
    throw AttestationError("client " + std::to_string(client_id) + " is already registered");
  }
  ClientHandshake hs(client_id, identity.public_key(), rng);
  const auto [resp, enclave_key] = identity.respond(hs.request(), rng.next_seed());
  auto [client_key, transcript] = hs.finish(resp);
  AttestationResult res{{client_id, client_key, round}, {client_id, enclave_key, round}, transcript};
  manager.register_key(res.manager_key);
  if (log) log->append(transcript_json(transcript));
  return res;
}

}  // namespace esmfl::secure
