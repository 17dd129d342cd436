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

#include <gtest/gtest.h>
#include <sodium.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <type_traits>

#include "esmfl/errors.hpp"
#include "esmfl/secure_channel.hpp"

namespace esmfl::secure {
namespace {

// Plaintext can only be produced by the key manager, and only the enclave
// can authorize that.
static_assert(!std::is_default_constructible_v<TrustedAccess>);
static_assert(!std::is_copy_constructible_v<PlaintextUpdate>);
static_assert(!std::is_copy_assignable_v<PlaintextUpdate>);
static_assert(!std::is_constructible_v<PlaintextUpdate, std::uint32_t, std::uint32_t,
                                       codec::Format, Bytes>);

Seed seed_of(std::uint8_t b) {
  Seed s{};
  s.fill(b);
  return s;
}

// Wire header laid out by hand: magic, version, client, round, format,
// nonce, ciphertext length.
Bytes header_oracle(const EncryptedUpdate& u) {
  Bytes h{'E', 'S', 'M', 'F', u.version};
  for (int i = 0; i < 4; ++i) h.push_back(static_cast<std::uint8_t>(u.client_id >> (8 * i)));
  for (int i = 0; i < 4; ++i) h.push_back(static_cast<std::uint8_t>(u.round >> (8 * i)));
  h.push_back(static_cast<std::uint8_t>(u.payload_format));
  h.insert(h.end(), u.nonce.begin(), u.nonce.end());
  const std::uint64_t len = u.ciphertext.size();
  for (int i = 0; i < 8; ++i) h.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  return h;
}

// Independent ChaCha20-Poly1305 open with the header as associated data.
std::optional<Bytes> sodium_open(const EncryptedUpdate& u, const Key& key) {
  if (u.ciphertext.size() < crypto_aead_chacha20poly1305_ietf_ABYTES) return std::nullopt;
  const Bytes ad = header_oracle(u);
  Bytes out(u.ciphertext.size() - crypto_aead_chacha20poly1305_ietf_ABYTES);
  unsigned long long len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &len, nullptr, u.ciphertext.data(),
                                                u.ciphertext.size(), ad.data(), ad.size(),
                                                u.nonce.data(), key.data()) != 0) {
    return std::nullopt;
  }
  return out;
}

struct Session {
  EnclaveIdentity identity{seed_of(1)};
  KeyManager manager;
  DeterministicRng rng{42};
};

TEST(Rng, DeterministicPerSeed) {
  DeterministicRng a(5), b(5), c(6);
  std::array<std::uint8_t, 64> x{}, y{}, z{};
  a.fill(x);
  b.fill(y);
  c.fill(z);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_NE(a.next_seed(), a.next_seed());
}

TEST(Attestation, BothSidesDeriveTheSameKey) {
  Session s;
  const auto r = attest_and_exchange(7, s.identity, s.manager, s.rng, 3);
  EXPECT_EQ(r.client_key.sk, r.manager_key.sk);
  EXPECT_EQ(r.client_key.client_id, 7u);
  EXPECT_EQ(r.client_key.established_at, 3u);
  EXPECT_TRUE(s.manager.contains(7));
  EXPECT_EQ(s.manager.key(7), r.manager_key);
  EXPECT_EQ(r.transcript.response.measurement, kEnclaveMeasurement);
  EXPECT_EQ(r.transcript.response.challenge, r.transcript.request.challenge);
  EXPECT_TRUE(verify_transcript(r.transcript, s.identity.public_key(), r.client_key.sk));
  EXPECT_THROW(s.manager.key(8), DecryptError);
}

TEST(Attestation, HundredClientsGetDistinctKeys) {
  Session s;
  std::set<Key> keys;
  for (std::uint32_t c = 0; c < 100; ++c) {
    keys.insert(attest_and_exchange(c, s.identity, s.manager, s.rng).client_key.sk);
  }
  EXPECT_EQ(keys.size(), 100u);
  EXPECT_EQ(s.manager.size(), 100u);
}

TEST(Attestation, DuplicateClientRejected) {
  Session s;
  attest_and_exchange(1, s.identity, s.manager, s.rng);
  const auto before = s.manager.key(1);
  EXPECT_THROW(attest_and_exchange(1, s.identity, s.manager, s.rng), AttestationError);
  EXPECT_EQ(s.manager.key(1), before);
}

TEST(Attestation, ClientRejectsAlteredResponses) {
  Session s;
  ClientHandshake hs(3, s.identity.public_key(), s.rng);
  const auto [resp, enclave_key] = s.identity.respond(hs.request(), s.rng.next_seed());
  const auto [client_key, transcript] = hs.finish(resp);
  EXPECT_EQ(client_key, enclave_key);

  auto bad_sig = resp;
  bad_sig.signature[10] ^= 1;
  EXPECT_THROW(hs.finish(bad_sig), AttestationError);
  auto bad_measurement = resp;
  bad_measurement.measurement[0] ^= 1;
  EXPECT_THROW(hs.finish(bad_measurement), AttestationError);
  auto bad_challenge = resp;
  bad_challenge.challenge[31] ^= 0x80;
  EXPECT_THROW(hs.finish(bad_challenge), AttestationError);
  auto bad_pub = resp;
  bad_pub.enclave_public[5] ^= 2;
  EXPECT_THROW(hs.finish(bad_pub), AttestationError);

  // Properly signed by some other identity.
  EnclaveIdentity impostor(seed_of(2));
  EXPECT_THROW(hs.finish(impostor.respond(hs.request(), s.rng.next_seed()).first),
               AttestationError);
}

TEST(Attestation, TranscriptDetectsEveryFieldChange) {
  Session s;
  const auto r = attest_and_exchange(9, s.identity, s.manager, s.rng);
  const auto& pub = s.identity.public_key();
  const auto& key = r.client_key.sk;
  ASSERT_TRUE(verify_transcript(r.transcript, pub, key));
  auto check = [&](auto mutate) {
    auto t = r.transcript;
    mutate(t);
    EXPECT_FALSE(verify_transcript(t, pub, key));
  };
  check([](AttestationTranscript& t) { t.request.client_id ^= 1; });
  check([](AttestationTranscript& t) { t.request.challenge[0] ^= 1; });
  check([](AttestationTranscript& t) { t.request.client_public[0] ^= 1; });
  check([](AttestationTranscript& t) { t.response.measurement[0] ^= 1; });
  check([](AttestationTranscript& t) { t.response.challenge[0] ^= 1; });
  check([](AttestationTranscript& t) { t.response.enclave_public[0] ^= 1; });
  check([](AttestationTranscript& t) { t.response.signature[63] ^= 1; });
  check([](AttestationTranscript& t) { t.key_confirmation[0] ^= 1; });
  Key other = key;
  other[0] ^= 1;
  EXPECT_FALSE(verify_transcript(r.transcript, pub, other));
}

TEST(Attestation, LogNeverContainsTheKey) {
  const auto path = std::filesystem::temp_directory_path() / "esmfl_transcript_test.jsonl";
  std::filesystem::remove(path);
  std::string key_hex;
  {
    Session s;
    TranscriptLog log(path);
    const auto r = attest_and_exchange(4, s.identity, s.manager, s.rng, 0, &log);
    key_hex = to_hex(r.client_key.sk);
    ASSERT_EQ(log.lines().size(), 1u);
    EXPECT_EQ(log.lines()[0], transcript_json(r.transcript));
    EXPECT_NE(log.lines()[0].find(to_hex(r.transcript.request.challenge)), std::string::npos);
  }
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_EQ(line.find(key_hex), std::string::npos);
  }
  EXPECT_EQ(n, 1u);
  std::filesystem::remove(path);
}

ClientKey fixed_key(std::uint32_t id) {
  ClientKey k;
  k.client_id = id;
  for (std::size_t i = 0; i < k.sk.size(); ++i) k.sk[i] = static_cast<std::uint8_t>(i * 7 + id);
  return k;
}

TEST(Aead, OpensWithIndependentImplementation) {
  ensure_crypto_ready();
  UpdateEncryptor enc(fixed_key(12));
  const Bytes msg{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto u = enc.encrypt_update(msg, 5, codec::Format::kCsr);
  EXPECT_EQ(u.client_id, 12u);
  EXPECT_EQ(u.round, 5u);
  EXPECT_EQ(u.ciphertext.size(), msg.size() + kTagBytes);
  EXPECT_EQ(wire_header(u), header_oracle(u));
  EXPECT_EQ(header_oracle(u).size(), kWireHeaderBytes);
  EXPECT_EQ(sodium_open(u, fixed_key(12).sk), msg);
  EXPECT_FALSE(sodium_open(u, fixed_key(13).sk));
  // Same plaintext, next counter: different nonce and ciphertext.
  const auto v = enc.encrypt_update(msg, 5, codec::Format::kCsr);
  EXPECT_NE(u.nonce, v.nonce);
  EXPECT_NE(u.ciphertext, v.ciphertext);
}

TEST(Aead, NonceLayoutIsClientRoundCounter) {
  UpdateEncryptor enc(fixed_key(0x01020304));
  const auto u = enc.encrypt_update(Bytes{}, 0x0a0b0c0d, codec::Format::kDense);
  const auto v = enc.encrypt_update(Bytes{}, 0x0a0b0c0d, codec::Format::kDense);
  EXPECT_EQ(u.nonce, (Nonce{4, 3, 2, 1, 0x0d, 0x0c, 0x0b, 0x0a, 0, 0, 0, 0}));
  EXPECT_EQ(v.nonce, (Nonce{4, 3, 2, 1, 0x0d, 0x0c, 0x0b, 0x0a, 1, 0, 0, 0}));
}

TEST(Aead, TenThousandNoncesAreUnique) {
  std::set<Nonce> nonces;
  for (std::uint32_t c = 0; c < 10; ++c) {
    UpdateEncryptor enc(fixed_key(c));
    for (std::uint32_t r = 0; r < 100; ++r) {
      for (int k = 0; k < 10; ++k) nonces.insert(enc.encrypt_update(Bytes{1}, r, codec::Format::kDense).nonce);
    }
  }
  EXPECT_EQ(nonces.size(), 10000u);
}

TEST(Aead, CounterExhaustionIsAnError) {
  UpdateEncryptor enc(fixed_key(1));
  enc.set_counter_for_testing(3, 0xffffffffULL);
  const auto last = enc.encrypt_update(Bytes{1}, 3, codec::Format::kDense);
  EXPECT_EQ(last.nonce[8], 0xff);
  EXPECT_THROW(enc.encrypt_update(Bytes{1}, 3, codec::Format::kDense), CryptoError);
  EXPECT_NO_THROW(enc.encrypt_update(Bytes{1}, 4, codec::Format::kDense));
}

TEST(Aead, EverySingleBitFlipIsDetected) {
  UpdateEncryptor enc(fixed_key(2));
  const Bytes msg(40, 0x5a);
  const auto u = enc.encrypt_update(msg, 1, codec::Format::kDense);
  const auto key = fixed_key(2).sk;
  for (std::size_t bit = 0; bit < u.ciphertext.size() * 8; ++bit) {
    auto t = u;
    t.ciphertext[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_FALSE(sodium_open(t, key)) << "bit " << bit;
  }
  auto wire = serialize(u);
  for (std::size_t bit = 0; bit < kWireHeaderBytes * 8; ++bit) {
    auto w = wire;
    w[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      ASSERT_FALSE(sodium_open(parse_encrypted(w), key)) << "header bit " << bit;
    } catch (const DecryptError& e) {
      EXPECT_EQ(e.kind(), DecryptError::Kind::kMalformed);
    }
  }
}

TEST(Aead, HeaderFieldsAreAuthenticated) {
  UpdateEncryptor enc(fixed_key(3));
  const auto u = enc.encrypt_update(Bytes{9, 9, 9}, 2, codec::Format::kDense);
  const auto key = fixed_key(3).sk;
  auto a = u;
  a.round = 3;
  EXPECT_FALSE(sodium_open(a, key));
  auto b = u;
  b.payload_format = codec::Format::kCsr;
  EXPECT_FALSE(sodium_open(b, key));
  auto c = u;
  c.client_id = 4;
  EXPECT_FALSE(sodium_open(c, key));
  auto d = u;
  d.nonce[11] ^= 1;
  EXPECT_FALSE(sodium_open(d, key));
}

TEST(Wire, SerializeParseRoundTrip) {
  UpdateEncryptor enc(fixed_key(6));
  const auto u = enc.encrypt_update(Bytes(100, 1), 8, codec::Format::kCsr);
  const auto wire = serialize(u);
  EXPECT_EQ(wire.size(), kWireHeaderBytes + u.ciphertext.size());
  EXPECT_EQ(parse_encrypted(wire), u);

  auto kind = [](Bytes w) {
    try {
      parse_encrypted(w);
    } catch (const DecryptError& e) {
      return e.kind();
    }
    return DecryptError::Kind::kReplay;
  };
  using K = DecryptError::Kind;
  auto w = wire;
  w[0] = 'X';
  EXPECT_EQ(kind(w), K::kMalformed);
  w = wire;
  w[4] = 2;
  EXPECT_EQ(kind(w), K::kMalformed);
  w = wire;
  w[13] = 7;
  EXPECT_EQ(kind(w), K::kMalformed);
  w = wire;
  w.pop_back();
  EXPECT_EQ(kind(w), K::kMalformed);
  EXPECT_EQ(kind(Bytes(kWireHeaderBytes - 1, 0)), K::kMalformed);
  w.assign(wire.begin(), wire.begin() + kWireHeaderBytes);
  w[26] = 0;  // zero-length ciphertext: shorter than a tag
  std::fill(w.begin() + 26, w.end(), 0);
  EXPECT_EQ(kind(w), K::kMalformed);
}

}  // namespace
}  // namespace esmfl::secure
