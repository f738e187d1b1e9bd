#pragma once

// Hand-rolled generators shared by the property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "cnmm/secure_channel.hpp"
#include "cnmm/wire.hpp"

namespace cnmm::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t u64() { return rng_(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : rng_() % n; }
  std::int64_t i64() { return static_cast<std::int64_t>(rng_()); }
  bool coin() { return (rng_() & 1) != 0; }

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng_());
    return out;
  }

  /// Compressible bytes: runs from a small alphabet.
  Bytes text(std::size_t n) {
    Bytes out;
    out.reserve(n);
    while (out.size() < n) {
      const auto c = static_cast<std::uint8_t>('a' + below(4));
      const auto run = 1 + below(16);
      for (std::uint64_t i = 0; i < run && out.size() < n; ++i) out.push_back(c);
    }
    return out;
  }

  MessageKind kind() { return static_cast<MessageKind>(1 + below(kMessageKindCount)); }

  MetricRecord record(bool zero_counters = false) {
    MetricRecord r{static_cast<std::uint32_t>(u64()), i64(), u64(), u64()};
    if (zero_counters) r.interval_packets_sent = r.interval_packets_received = 0;
    return r;
  }

  /// A message satisfying the kind/payload arity rules.
  Message message(std::size_t max_records = 8) {
    Message m;
    m.header.kind = kind();
    m.header.flags = static_cast<std::uint8_t>(below(4));
    m.header.agent_id = u64();
    m.header.sequence = static_cast<std::uint32_t>(u64());
    m.header.timestamp_ms = u64();
    std::size_t n = 0;
    switch (m.header.kind) {
      case MessageKind::RegularUpdate:
      case MessageKind::Trap: n = 1 + below(max_records); break;
      case MessageKind::ActionSet: n = below(max_records + 1); break;
      default: break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      m.records.push_back(record(m.header.kind == MessageKind::ActionSet));
    }
    return m;
  }

  ChannelKeys keys() { return ChannelKeys{bytes(kKeySize), bytes(kKeySize)}; }

 private:
  std::mt19937_64 rng_;
};

inline Bytes hex_bytes(const char* hex) {
  Bytes out;
  auto nib = [](char c) { return c <= '9' ? c - '0' : c - 'a' + 10; };
  for (; hex[0] && hex[1]; hex += 2) {
    out.push_back(static_cast<std::uint8_t>(nib(hex[0]) << 4 | nib(hex[1])));
  }
  return out;
}

}  // namespace cnmm::testing
