#include "cnmm/secure_channel.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <zlib.h>

#include <algorithm>
#include <fmt/format.h>
#include <memory>

namespace cnmm {

namespace {

constexpr std::size_t kIvSize = 16;
constexpr std::string_view kIvLabel = "cnmm-synthetic-iv";

Bytes deflate_bytes(std::span<const std::uint8_t> in) {
  uLongf bound = compressBound(static_cast<uLong>(in.size()));
  Bytes out(bound);
  // compress2 accepts a null source only when the length is zero.
  static const std::uint8_t empty = 0;
  const auto* src = in.empty() ? &empty : in.data();
  if (compress2(out.data(), &bound, src, static_cast<uLong>(in.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("deflate failed");
  }
  out.resize(bound);
  return out;
}

Bytes inflate_bytes(std::span<const std::uint8_t> in, std::size_t expected) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) {
    throw std::runtime_error("inflateInit failed");
  }
  std::unique_ptr<z_stream, decltype(&inflateEnd)> guard(&zs, &inflateEnd);

  // One spare byte so that output longer than `expected` is detectable.
  Bytes out(expected + 1);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  if (rc != Z_STREAM_END || zs.total_out != expected || zs.avail_in != 0) {
    throw ChannelError(ChannelErrc::DecompressFailure,
                       fmt::format("inflate produced {} of {} bytes (rc {})", zs.total_out,
                                   expected, rc));
  }
  out.resize(expected);
  return out;
}

Bytes compress(std::span<const std::uint8_t> in, Compression mode) {
  if (mode == Compression::Identity) return Bytes(in.begin(), in.end());
  return deflate_bytes(in);
}

Bytes decompress(std::span<const std::uint8_t> in, std::size_t plain_len, Compression mode) {
  if (mode == Compression::Identity) {
    if (in.size() != plain_len) {
      throw ChannelError(ChannelErrc::DecompressFailure,
                         fmt::format("identity fragment is {} bytes, header says {}",
                                     in.size(), plain_len));
    }
    return Bytes(in.begin(), in.end());
  }
  return inflate_bytes(in, plain_len);
}

Bytes aes256_ctr(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                 std::span<const std::uint8_t> in) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(),
                                                                      &EVP_CIPHER_CTX_free);
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ctr(), nullptr, key.data(),
                                 iv.data()) != 1) {
    throw std::runtime_error("AES-256-CTR init failed");
  }
  Bytes out(in.size());
  int len = 0;
  if (!in.empty() &&
      EVP_EncryptUpdate(ctx.get(), out.data(), &len, in.data(), static_cast<int>(in.size())) !=
          1) {
    throw std::runtime_error("AES-256-CTR update failed");
  }
  return out;
}

std::array<std::uint8_t, kIvSize> synthetic_iv(std::span<const std::uint8_t> key_enc,
                                               std::span<const std::uint8_t> header,
                                               std::span<const std::uint8_t> body) {
  const auto iv_key = hmac_sha256(
      key_enc, std::span(reinterpret_cast<const std::uint8_t*>(kIvLabel.data()),
                         kIvLabel.size()));
  Bytes input(header.begin(), header.end());
  input.insert(input.end(), body.begin(), body.end());
  const auto digest = hmac_sha256(iv_key, input);
  std::array<std::uint8_t, kIvSize> iv{};
  std::copy_n(digest.begin(), kIvSize, iv.begin());
  return iv;
}

Bytes mac_input(const std::array<std::uint8_t, kEnvelopeHeaderSize>& header,
                std::span<const std::uint8_t> compressed) {
  Bytes input(header.begin(), header.end());
  input.insert(input.end(), compressed.begin(), compressed.end());
  return input;
}

// Returns compressed_fragment || mac.
Bytes decrypt(const SecureEnvelope& env, const ChannelKeys& keys, Cipher cipher) {
  if (cipher == Cipher::Null) return env.ciphertext;
  if (env.ciphertext.size() < kIvSize) {
    throw ChannelError(ChannelErrc::MacFailure, "ciphertext shorter than its IV");
  }
  std::span<const std::uint8_t> ct(env.ciphertext);
  return aes256_ctr(keys.key_enc, ct.first(kIvSize), ct.subspan(kIvSize));
}

}  // namespace

std::string_view to_string(Compression c) {
  return c == Compression::Identity ? "identity" : "deflate";
}

std::string_view to_string(Cipher c) { return c == Cipher::Null ? "null" : "aes-256-ctr"; }

std::string_view to_string(ChannelErrc code) {
  switch (code) {
    case ChannelErrc::Oversize: return "Oversize";
    case ChannelErrc::KeyInvalid: return "KeyInvalid";
    case ChannelErrc::ConfigInvalid: return "ConfigInvalid";
    case ChannelErrc::Truncated: return "Truncated";
    case ChannelErrc::MacFailure: return "MacFailure";
    case ChannelErrc::BadVersion: return "BadVersion";
    case ChannelErrc::FragmentMissing: return "FragmentMissing";
    case ChannelErrc::FragCountMismatch: return "FragCountMismatch";
    case ChannelErrc::DecompressFailure: return "DecompressFailure";
  }
  return "Unknown";
}

std::array<std::uint8_t, kMacSize> hmac_sha256(std::span<const std::uint8_t> key,
                                               std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, kMacSize> out{};
  unsigned int len = 0;
  static const std::uint8_t empty = 0;
  if (HMAC(EVP_sha256(), key.empty() ? &empty : key.data(), static_cast<int>(key.size()),
           data.empty() ? &empty : data.data(), data.size(), out.data(), &len) == nullptr ||
      len != kMacSize) {
    throw std::runtime_error("HMAC-SHA256 failed");
  }
  return out;
}

void validate(const ChannelKeys& keys) {
  if (keys.key_mac.size() != kKeySize || keys.key_enc.size() != kKeySize) {
    throw ChannelError(ChannelErrc::KeyInvalid,
                       fmt::format("keys must be {} bytes (mac {}, enc {})", kKeySize,
                                   keys.key_mac.size(), keys.key_enc.size()));
  }
}

void validate(const ChannelConfig& cfg) {
  if (cfg.max_fragment < 64 || cfg.max_fragment > 0xFFFF) {
    throw ChannelError(ChannelErrc::ConfigInvalid,
                       fmt::format("max_fragment {} outside [64, 65535]", cfg.max_fragment));
  }
}

ChannelKeys derive_channel_keys(std::span<const std::uint8_t> master_secret,
                                std::uint64_t agent_id) {
  auto derive = [&](std::string_view label) {
    Bytes input(label.begin(), label.end());
    for (int shift = 56; shift >= 0; shift -= 8) {
      input.push_back(static_cast<std::uint8_t>(agent_id >> shift));
    }
    const auto d = hmac_sha256(master_secret, input);
    return Bytes(d.begin(), d.end());
  };
  return ChannelKeys{derive("cnmm-mac"), derive("cnmm-enc")};
}

std::array<std::uint8_t, kEnvelopeHeaderSize> envelope_header_bytes(const SecureEnvelope& env) {
  return {env.env_version,
          static_cast<std::uint8_t>(env.frag_index >> 8),
          static_cast<std::uint8_t>(env.frag_index),
          static_cast<std::uint8_t>(env.frag_count >> 8),
          static_cast<std::uint8_t>(env.frag_count),
          static_cast<std::uint8_t>(env.plain_len >> 8),
          static_cast<std::uint8_t>(env.plain_len)};
}

std::vector<SecureEnvelope> protect(std::span<const std::uint8_t> plaintext,
                                    const ChannelKeys& keys, const ChannelConfig& cfg) {
  validate(keys);
  validate(cfg);
  if (plaintext.size() > cfg.max_fragment * 0xFFFF) {
    throw ChannelError(ChannelErrc::Oversize,
                       fmt::format("{} bytes exceed {} fragments of {}", plaintext.size(),
                                   0xFFFF, cfg.max_fragment));
  }
  const std::size_t count =
      plaintext.empty() ? 1 : (plaintext.size() + cfg.max_fragment - 1) / cfg.max_fragment;

  std::vector<SecureEnvelope> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t offset = i * cfg.max_fragment;
    const auto fragment =
        plaintext.subspan(offset, std::min(cfg.max_fragment, plaintext.size() - offset));

    SecureEnvelope env;
    env.frag_index = static_cast<std::uint16_t>(i);
    env.frag_count = static_cast<std::uint16_t>(count);
    env.plain_len = static_cast<std::uint16_t>(fragment.size());

    const auto header = envelope_header_bytes(env);
    Bytes body = compress(fragment, cfg.compression);
    const auto mac = hmac_sha256(keys.key_mac, mac_input(header, body));
    body.insert(body.end(), mac.begin(), mac.end());

    if (cfg.cipher == Cipher::Null) {
      env.ciphertext = std::move(body);
    } else {
      const auto iv = synthetic_iv(keys.key_enc, header, body);
      env.ciphertext.assign(iv.begin(), iv.end());
      const auto enc = aes256_ctr(keys.key_enc, iv, body);
      env.ciphertext.insert(env.ciphertext.end(), enc.begin(), enc.end());
    }
    out.push_back(std::move(env));
  }
  return out;
}

Bytes unprotect(std::span<const SecureEnvelope> envelopes, const ChannelKeys& keys,
                const ChannelConfig& cfg) {
  validate(keys);
  validate(cfg);

  // Authenticate everything first.
  std::vector<Bytes> compressed(envelopes.size());
  for (std::size_t i = 0; i < envelopes.size(); ++i) {
    const auto& env = envelopes[i];
    Bytes body = decrypt(env, keys, cfg.cipher);
    if (body.size() < kMacSize) {
      throw ChannelError(ChannelErrc::MacFailure, "fragment shorter than its MAC");
    }
    const std::size_t data_len = body.size() - kMacSize;
    const auto expected = hmac_sha256(
        keys.key_mac, mac_input(envelope_header_bytes(env), std::span(body).first(data_len)));
    if (CRYPTO_memcmp(expected.data(), body.data() + data_len, kMacSize) != 0) {
      throw ChannelError(ChannelErrc::MacFailure,
                         fmt::format("MAC mismatch on fragment {}", env.frag_index));
    }
    body.resize(data_len);
    compressed[i] = std::move(body);
  }

  if (envelopes.empty()) {
    throw ChannelError(ChannelErrc::FragmentMissing, "no envelopes");
  }
  const std::uint16_t count = envelopes.front().frag_count;
  std::vector<const Bytes*> slots(count, nullptr);
  std::vector<std::uint16_t> plain_lens(count, 0);
  for (std::size_t i = 0; i < envelopes.size(); ++i) {
    const auto& env = envelopes[i];
    if (env.env_version != kEnvelopeVersion) {
      throw ChannelError(ChannelErrc::BadVersion,
                         fmt::format("envelope version {}", env.env_version));
    }
    if (env.frag_count != count || count == 0 || env.frag_index >= count ||
        slots[env.frag_index] != nullptr) {
      throw ChannelError(ChannelErrc::FragCountMismatch,
                         fmt::format("fragment {}/{} inconsistent with count {}", env.frag_index,
                                     env.frag_count, count));
    }
    slots[env.frag_index] = &compressed[i];
    plain_lens[env.frag_index] = env.plain_len;
  }

  Bytes plaintext;
  for (std::size_t i = 0; i < count; ++i) {
    if (slots[i] == nullptr) {
      throw ChannelError(ChannelErrc::FragmentMissing,
                         fmt::format("fragment {} of {} missing", i, count));
    }
    const Bytes fragment = decompress(*slots[i], plain_lens[i], cfg.compression);
    plaintext.insert(plaintext.end(), fragment.begin(), fragment.end());
  }
  return plaintext;
}

std::vector<SecureEnvelope> wrap_message(const Message& msg, const ChannelKeys& keys,
                                         const ChannelConfig& cfg) {
  return protect(encode_message(msg), keys, cfg);
}

Message unwrap_message(std::span<const SecureEnvelope> envelopes, const ChannelKeys& keys,
                       const ChannelConfig& cfg) {
  return decode_message(unprotect(envelopes, keys, cfg));
}

Bytes encode_envelope(const SecureEnvelope& env) {
  const auto header = envelope_header_bytes(env);
  Bytes out;
  out.reserve(header.size() + env.ciphertext.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), env.ciphertext.begin(), env.ciphertext.end());
  return out;
}

SecureEnvelope decode_envelope(std::span<const std::uint8_t> datagram) {
  if (datagram.size() < kEnvelopeHeaderSize) {
    throw ChannelError(ChannelErrc::Truncated,
                       fmt::format("{} bytes is shorter than an envelope header",
                                   datagram.size()));
  }
  SecureEnvelope env;
  env.env_version = datagram[0];
  env.frag_index = static_cast<std::uint16_t>((datagram[1] << 8) | datagram[2]);
  env.frag_count = static_cast<std::uint16_t>((datagram[3] << 8) | datagram[4]);
  env.plain_len = static_cast<std::uint16_t>((datagram[5] << 8) | datagram[6]);
  env.ciphertext.assign(datagram.begin() + kEnvelopeHeaderSize, datagram.end());
  return env;
}

}  // namespace cnmm
