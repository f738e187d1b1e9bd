#pragma once

// Secure packet pipeline: fragment, compress, MAC, encrypt (and the inverse).
//
// Each fragment becomes one SecureEnvelope:
//
//   env_version[1] frag_index[2] frag_count[2] plain_len[2] ciphertext[...]
//
// where ciphertext = Enc(key_enc, compressed_fragment || mac) and
// mac = HMAC-SHA256(key_mac, envelope_header[7] || compressed_fragment).
// The MAC is computed before encryption and travels inside the ciphertext.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cnmm/wire.hpp"

namespace cnmm {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kMacSize = 32;
inline constexpr std::size_t kEnvelopeHeaderSize = 7;
inline constexpr std::uint8_t kEnvelopeVersion = 1;

using Bytes = std::vector<std::uint8_t>;

/// Pre-shared secrets for one (agent, manager pool) pair.
struct ChannelKeys {
  Bytes key_mac;
  Bytes key_enc;

  bool operator==(const ChannelKeys&) const = default;
};

enum class Compression { Identity, Deflate };
enum class Cipher { Null, Aes256Ctr };

std::string_view to_string(Compression c);
std::string_view to_string(Cipher c);

struct ChannelConfig {
  std::size_t max_fragment = 1400;
  Compression compression = Compression::Deflate;
  Cipher cipher = Cipher::Aes256Ctr;
};

struct SecureEnvelope {
  std::uint8_t env_version = kEnvelopeVersion;
  std::uint16_t frag_index = 0;
  std::uint16_t frag_count = 1;
  std::uint16_t plain_len = 0;
  Bytes ciphertext;

  bool operator==(const SecureEnvelope&) const = default;
};

enum class ChannelErrc {
  Oversize,
  KeyInvalid,
  ConfigInvalid,
  Truncated,
  MacFailure,
  BadVersion,
  FragmentMissing,
  FragCountMismatch,
  DecompressFailure,
};

std::string_view to_string(ChannelErrc code);

class ChannelError : public std::runtime_error {
 public:
  ChannelError(ChannelErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ChannelErrc code() const noexcept { return code_; }

 private:
  ChannelErrc code_;
};

/// Throws ChannelError{KeyInvalid} unless both keys are kKeySize bytes.
void validate(const ChannelKeys& keys);
/// Throws ChannelError{ConfigInvalid} unless 64 <= max_fragment <= 65535.
void validate(const ChannelConfig& cfg);

/// Per-agent keys derived from a scenario master secret with HMAC-SHA256
/// over a label and the big-endian agent id. Distinct agents get distinct keys.
ChannelKeys derive_channel_keys(std::span<const std::uint8_t> master_secret,
                                std::uint64_t agent_id);

std::vector<SecureEnvelope> protect(std::span<const std::uint8_t> plaintext,
                                    const ChannelKeys& keys, const ChannelConfig& cfg);

/// Every envelope is authenticated before any structural check, so a
/// modified byte anywhere in an envelope surfaces as MacFailure.
Bytes unprotect(std::span<const SecureEnvelope> envelopes, const ChannelKeys& keys,
                const ChannelConfig& cfg);

std::vector<SecureEnvelope> wrap_message(const Message& msg, const ChannelKeys& keys,
                                         const ChannelConfig& cfg);
/// Throws ChannelError or WireError.
Message unwrap_message(std::span<const SecureEnvelope> envelopes, const ChannelKeys& keys,
                       const ChannelConfig& cfg);

/// One envelope as one datagram.
Bytes encode_envelope(const SecureEnvelope& env);
/// Only the fixed header is parsed here; the version byte is checked after
/// authentication in unprotect(). Throws ChannelError{Truncated}.
SecureEnvelope decode_envelope(std::span<const std::uint8_t> datagram);

/// The seven header bytes the MAC covers.
std::array<std::uint8_t, kEnvelopeHeaderSize> envelope_header_bytes(const SecureEnvelope& env);

/// HMAC-SHA256, exposed for known-answer tests.
std::array<std::uint8_t, kMacSize> hmac_sha256(std::span<const std::uint8_t> key,
                                               std::span<const std::uint8_t> data);

}  // namespace cnmm
