#pragma once

// CNMM message codec.
//
// Every message is a fixed 26-byte big-endian header followed by zero or more
// fixed 28-byte metric records. See docs/protocol.md for the byte layout.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cnmm {

/// Simulated time, milliseconds since the start of a run.
using SimTime = std::chrono::milliseconds;

enum class MessageKind : std::uint8_t {
  RegularUpdate = 0x01,
  Trap = 0x02,
  ActionSet = 0x03,
  Get = 0x04,
  Advertisement = 0x05,
  Registration = 0x06,
  TrapReply = 0x07,
};

inline constexpr std::size_t kMessageKindCount = 7;

std::string_view to_string(MessageKind kind);

/// True for kinds only an agent may send (RegularUpdate, Trap, Advertisement).
bool agent_originated(MessageKind kind);

/// The manager reply kind that acknowledges an agent-originated kind.
MessageKind reply_kind_for(MessageKind agent_kind);

namespace flags {
inline constexpr std::uint8_t kAckRequired = 0x01;
inline constexpr std::uint8_t kRetransmission = 0x02;
inline constexpr std::uint8_t kKnownMask = kAckRequired | kRetransmission;
}  // namespace flags

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 26;
inline constexpr std::size_t kRecordSize = 28;
inline constexpr std::size_t kMaxRecords = 0xFFFF / kRecordSize;  // 2340

struct MessageHeader {
  std::uint8_t version = kProtocolVersion;
  MessageKind kind = MessageKind::Get;
  std::uint8_t flags = 0;
  std::uint64_t agent_id = 0;
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_ms = 0;
  // payload_len is derived from records on encode and checked on decode.

  bool operator==(const MessageHeader&) const = default;
};

/// One MIB object as carried on the wire. Packet counters are deltas for the
/// reporting interval that ends with this message, never running totals.
struct MetricRecord {
  std::uint32_t object_id = 0;
  std::int64_t value_milli = 0;
  std::uint64_t interval_packets_sent = 0;
  std::uint64_t interval_packets_received = 0;

  bool operator==(const MetricRecord&) const = default;
};

struct Message {
  MessageHeader header;
  std::vector<MetricRecord> records;

  bool operator==(const Message&) const = default;
};

enum class WireErrc {
  Truncated,
  BadVersion,
  UnknownKind,
  BadFlags,
  LengthMismatch,
  ArityViolation,
  Overflow,
};

std::string_view to_string(WireErrc code);

class WireError : public std::runtime_error {
 public:
  WireError(WireErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  WireErrc code() const noexcept { return code_; }

 private:
  WireErrc code_;
};

/// Serialize a message. Throws WireError{UnknownKind, BadFlags, ArityViolation, Overflow}.
std::vector<std::uint8_t> encode_message(const Message& msg);

/// Parse exactly one message occupying all of `bytes`. Never reads out of
/// bounds; every malformed input maps to a WireError.
Message decode_message(std::span<const std::uint8_t> bytes);

/// Encoded size of a message with `records` records.
constexpr std::size_t encoded_size(std::size_t records) {
  return kHeaderSize + kRecordSize * records;
}

}  // namespace cnmm
