#include "doctest.h"

#include <algorithm>

#include "cnmm/secure_channel.hpp"
#include "support.hpp"

using namespace cnmm;
using cnmm::testing::Gen;
using cnmm::testing::hex_bytes;

namespace {

ChannelErrc unprotect_error(std::span<const SecureEnvelope> envs, const ChannelKeys& keys,
                            const ChannelConfig& cfg) {
  try {
    unprotect(envs, keys, cfg);
  } catch (const ChannelError& e) {
    return e.code();
  }
  FAIL("unprotect unexpectedly succeeded");
  return ChannelErrc::Truncated;
}

const ChannelConfig kPlain{1400, Compression::Identity, Cipher::Null};

Bytes as_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

/// An envelope whose MAC is valid over an arbitrary body.
SecureEnvelope forge(const ChannelKeys& keys, std::uint16_t index, std::uint16_t count,
                     std::uint16_t plain_len, const Bytes& body) {
  SecureEnvelope env;
  env.frag_index = index;
  env.frag_count = count;
  env.plain_len = plain_len;
  const auto header = envelope_header_bytes(env);
  Bytes input(header.begin(), header.end());
  input.insert(input.end(), body.begin(), body.end());
  const auto mac = hmac_sha256(keys.key_mac, input);
  env.ciphertext = body;
  env.ciphertext.insert(env.ciphertext.end(), mac.begin(), mac.end());
  return env;
}

}  // namespace

TEST_CASE("empty plaintext still yields one envelope") {
  Gen gen(1);
  const auto envs = protect({}, gen.keys(), ChannelConfig{});
  REQUIRE(envs.size() == 1);
  CHECK(envs[0].frag_count == 1);
  CHECK(envs[0].frag_index == 0);
  CHECK(envs[0].plain_len == 0);
}

TEST_CASE("3000 bytes at max_fragment 1400 split 1400/1400/200") {
  Gen gen(2);
  const auto keys = gen.keys();
  const auto plain = gen.bytes(3000);
  const auto envs = protect(plain, keys, ChannelConfig{});
  REQUIRE(envs.size() == 3);
  CHECK(envs[0].plain_len == 1400);
  CHECK(envs[1].plain_len == 1400);
  CHECK(envs[2].plain_len == 200);
  for (std::uint16_t i = 0; i < 3; ++i) {
    CHECK(envs[i].frag_index == i);
    CHECK(envs[i].frag_count == 3);
  }
  CHECK(unprotect(envs, keys, ChannelConfig{}) == plain);
}

TEST_CASE("known-answer MAC with the null cipher and identity compression") {
  // Independent reference: tests/oracles/hmac_kat.py.
  const ChannelKeys keys{Bytes(32, 0x0B), Bytes(32, 0x0C)};
  const auto envs = protect(as_bytes("CNMM"), keys, kPlain);
  REQUIRE(envs.size() == 1);
  const auto header = envelope_header_bytes(envs[0]);
  CHECK(Bytes(header.begin(), header.end()) == hex_bytes("01000000010004"));

  const auto expected_mac =
      hex_bytes("532ceb90fb8e0ad6fd1699d4c1399c26ae0966dbd5a18891a45a0f31686da91e");
  Bytes expected = as_bytes("CNMM");
  expected.insert(expected.end(), expected_mac.begin(), expected_mac.end());
  CHECK(envs[0].ciphertext == expected);
}

TEST_CASE("HMAC-SHA256 matches RFC 4231 test case 1") {
  const auto mac = hmac_sha256(Bytes(20, 0x0B), as_bytes("Hi There"));
  CHECK(Bytes(mac.begin(), mac.end()) ==
        hex_bytes("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"));
}

TEST_CASE("envelope serialization") {
  SecureEnvelope env;
  env.frag_index = 0x0102;
  env.frag_count = 0x0304;
  env.plain_len = 0x0506;
  env.ciphertext = {0xAA, 0xBB};
  const auto bytes = encode_envelope(env);
  CHECK(bytes == hex_bytes("01010203040506aabb"));
  CHECK(decode_envelope(bytes) == env);

  try {
    decode_envelope(hex_bytes("010102030405"));
    FAIL("short envelope accepted");
  } catch (const ChannelError& e) {
    CHECK(e.code() == ChannelErrc::Truncated);
  }
}

TEST_CASE("configuration and key validation") {
  Gen gen(3);
  const auto keys = gen.keys();
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const ChannelError& e) {
      return e.code();
    }
    return ChannelErrc::Truncated;
  };
  CHECK(code_of([&] { protect(as_bytes("x"), ChannelKeys{{}, keys.key_enc}, ChannelConfig{}); }) ==
        ChannelErrc::KeyInvalid);
  CHECK(code_of([&] { protect(as_bytes("x"), keys, ChannelConfig{63}); }) ==
        ChannelErrc::ConfigInvalid);
  CHECK_NOTHROW(protect(as_bytes("x"), keys, ChannelConfig{64}));
  const Bytes huge(64 * 0xFFFF + 1, 0);
  CHECK(code_of([&] { protect(huge, keys, ChannelConfig{64, Compression::Identity, Cipher::Null}); }) ==
        ChannelErrc::Oversize);
}

TEST_CASE("unprotect structural errors") {
  Gen gen(4);
  const auto keys = gen.keys();
  const ChannelConfig cfg{100, Compression::Deflate, Cipher::Aes256Ctr};
  const auto plain = gen.bytes(250);
  auto envs = protect(plain, keys, cfg);
  REQUIRE(envs.size() == 3);

  SUBCASE("missing middle fragment") {
    std::vector<SecureEnvelope> two{envs[0], envs[2]};
    CHECK(unprotect_error(two, keys, cfg) == ChannelErrc::FragmentMissing);
  }
  SUBCASE("no envelopes") {
    CHECK(unprotect_error({}, keys, cfg) == ChannelErrc::FragmentMissing);
  }
  SUBCASE("fragments of messages with different counts") {
    const auto other = protect(gen.bytes(150), keys, cfg);
    std::vector<SecureEnvelope> mixed{envs[0], other[1]};
    CHECK(unprotect_error(mixed, keys, cfg) == ChannelErrc::FragCountMismatch);
  }
  SUBCASE("duplicated fragment") {
    std::vector<SecureEnvelope> dup{envs[0], envs[0], envs[1], envs[2]};
    CHECK(unprotect_error(dup, keys, cfg) == ChannelErrc::FragCountMismatch);
  }
  SUBCASE("out of order fragments reassemble") {
    std::vector<SecureEnvelope> shuffled{envs[2], envs[0], envs[1]};
    CHECK(unprotect(shuffled, keys, cfg) == plain);
  }
  SUBCASE("wrong MAC key") {
    auto wrong = keys;
    wrong.key_mac[0] ^= 1;
    CHECK(unprotect_error(envs, wrong, cfg) == ChannelErrc::MacFailure);
  }
  SUBCASE("wrong cipher key") {
    auto wrong = keys;
    wrong.key_enc[31] ^= 0x80;
    CHECK(unprotect_error(envs, wrong, cfg) == ChannelErrc::MacFailure);
  }
}

TEST_CASE("authenticated garbage fails decompression, not authentication") {
  Gen gen(5);
  const auto keys = gen.keys();
  const auto env = forge(keys, 0, 1, 10, hex_bytes("ffffffff00"));
  std::vector<SecureEnvelope> envs{env};
  CHECK(unprotect_error(envs, keys, ChannelConfig{1400, Compression::Deflate, Cipher::Null}) ==
        ChannelErrc::DecompressFailure);
  // A body that inflates to the wrong length is rejected as well.
  const auto wrong_len = forge(keys, 0, 1, 3, hex_bytes("ab"));
  std::vector<SecureEnvelope> envs2{wrong_len};
  CHECK(unprotect_error(envs2, keys, kPlain) == ChannelErrc::DecompressFailure);
}

TEST_CASE("authenticated envelope with a foreign version is BadVersion") {
  Gen gen(6);
  const auto keys = gen.keys();
  auto env = forge(keys, 0, 1, 0, {});
  env.env_version = 2;
  const auto header = envelope_header_bytes(env);
  const auto mac = hmac_sha256(keys.key_mac, Bytes(header.begin(), header.end()));
  env.ciphertext.assign(mac.begin(), mac.end());
  std::vector<SecureEnvelope> envs{env};
  CHECK(unprotect_error(envs, keys, kPlain) == ChannelErrc::BadVersion);
}

TEST_CASE("AES mode is deterministic and hides the plaintext") {
  Gen gen(7);
  const auto keys = gen.keys();
  const Bytes plain(200, 'A');
  const ChannelConfig cfg{1400, Compression::Identity, Cipher::Aes256Ctr};
  const auto a = protect(plain, keys, cfg);
  const auto b = protect(plain, keys, cfg);
  CHECK(a == b);
  const auto& ct = a[0].ciphertext;
  CHECK(ct.size() == 16 + plain.size() + kMacSize);
  CHECK(std::search(ct.begin(), ct.end(), plain.begin(), plain.begin() + 16) == ct.end());
}

TEST_CASE("deflate shrinks redundant fragments") {
  Gen gen(8);
  const auto keys = gen.keys();
  const auto plain = gen.text(1400);
  const auto envs = protect(plain, keys, ChannelConfig{1400, Compression::Deflate, Cipher::Null});
  CHECK(envs[0].ciphertext.size() < plain.size());
  CHECK(unprotect(envs, keys, ChannelConfig{1400, Compression::Deflate, Cipher::Null}) == plain);
}

TEST_CASE("derived keys are deterministic and distinct per agent") {
  const Bytes master(32, 0x42);
  const auto k1 = derive_channel_keys(master, 1);
  CHECK(k1 == derive_channel_keys(master, 1));
  CHECK(k1.key_mac != k1.key_enc);
  CHECK(k1.key_mac != derive_channel_keys(master, 2).key_mac);
  CHECK_NOTHROW(validate(k1));
}

TEST_CASE("wrap_message: a Get fits one envelope and round-trips") {
  Gen gen(9);
  const auto keys = gen.keys();
  Message get;
  get.header.kind = MessageKind::Get;
  get.header.agent_id = 9;
  const auto envs = wrap_message(get, keys, ChannelConfig{});
  CHECK(envs.size() == 1);
  CHECK(unwrap_message(envs, keys, ChannelConfig{}) == get);
  auto wrong = keys;
  wrong.key_mac[5] ^= 0x10;
  try {
    unwrap_message(envs, wrong, ChannelConfig{});
    FAIL("wrong key accepted");
  } catch (const ChannelError& e) {
    CHECK(e.code() == ChannelErrc::MacFailure);
  }
}

TEST_CASE("property: round trip across configurations") {
  Gen gen(10);
  for (int i = 0; i < 400; ++i) {
    const ChannelConfig cfg{64 + gen.below(1500),
                            gen.coin() ? Compression::Deflate : Compression::Identity,
                            gen.coin() ? Cipher::Aes256Ctr : Cipher::Null};
    const auto keys = gen.keys();
    const auto len = gen.below(10 * cfg.max_fragment + 1);
    const auto plain = gen.coin() ? gen.bytes(len) : gen.text(len);
    const auto envs = protect(plain, keys, cfg);
    REQUIRE(envs.size() == std::max<std::size_t>(1, (len + cfg.max_fragment - 1) / cfg.max_fragment));
    REQUIRE(unprotect(envs, keys, cfg) == plain);
  }
}

TEST_CASE("property: any single flipped bit is a MacFailure") {
  Gen gen(11);
  for (int i = 0; i < 300; ++i) {
    const ChannelConfig cfg{200, gen.coin() ? Compression::Deflate : Compression::Identity,
                            gen.coin() ? Cipher::Aes256Ctr : Cipher::Null};
    const auto keys = gen.keys();
    const auto envs = protect(gen.text(gen.below(600)), keys, cfg);
    std::vector<Bytes> wire;
    for (const auto& e : envs) wire.push_back(encode_envelope(e));
    const auto which = gen.below(wire.size());
    const auto bit = gen.below(wire[which].size() * 8);
    wire[which][bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    std::vector<SecureEnvelope> tampered;
    for (const auto& w : wire) tampered.push_back(decode_envelope(w));
    REQUIRE(unprotect_error(tampered, keys, cfg) == ChannelErrc::MacFailure);
  }
}
