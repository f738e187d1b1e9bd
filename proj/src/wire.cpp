#include "cnmm/wire.hpp"

#include <fmt/format.h>

namespace cnmm {

namespace {

enum class Arity { Empty, NonEmpty, Any };

Arity arity_of(MessageKind kind) {
  switch (kind) {
    case MessageKind::RegularUpdate:
    case MessageKind::Trap:
      return Arity::NonEmpty;
    case MessageKind::ActionSet:
      return Arity::Any;
    case MessageKind::Get:
    case MessageKind::Advertisement:
    case MessageKind::Registration:
    case MessageKind::TrapReply:
      return Arity::Empty;
  }
  return Arity::Empty;
}

bool valid_kind_code(std::uint8_t code) { return code >= 0x01 && code <= 0x07; }

void check_arity(MessageKind kind, const std::vector<MetricRecord>& records) {
  switch (arity_of(kind)) {
    case Arity::Empty:
      if (!records.empty()) {
        throw WireError(WireErrc::ArityViolation,
                        fmt::format("{} must not carry records", to_string(kind)));
      }
      break;
    case Arity::NonEmpty:
      if (records.empty()) {
        throw WireError(WireErrc::ArityViolation,
                        fmt::format("{} requires at least one record", to_string(kind)));
      }
      break;
    case Arity::Any:
      break;
  }
  // ActionSet records are write commands: only object_id and value are meaningful.
  if (kind == MessageKind::ActionSet) {
    for (const auto& r : records) {
      if (r.interval_packets_sent != 0 || r.interval_packets_received != 0) {
        throw WireError(WireErrc::ArityViolation,
                        "ActionSet record counters must be zero");
      }
    }
  }
}

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (int shift = (sizeof(U) - 1) * 8; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(u >> shift));
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  // Callers check bounds before reading.
  template <typename T>
  T get() {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      u = static_cast<U>((u << 8) | in_[pos_ + i]);
    }
    pos_ += sizeof(U);
    return static_cast<T>(u);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::RegularUpdate: return "RegularUpdate";
    case MessageKind::Trap: return "Trap";
    case MessageKind::ActionSet: return "ActionSet";
    case MessageKind::Get: return "Get";
    case MessageKind::Advertisement: return "Advertisement";
    case MessageKind::Registration: return "Registration";
    case MessageKind::TrapReply: return "TrapReply";
  }
  return "Unknown";
}

std::string_view to_string(WireErrc code) {
  switch (code) {
    case WireErrc::Truncated: return "Truncated";
    case WireErrc::BadVersion: return "BadVersion";
    case WireErrc::UnknownKind: return "UnknownKind";
    case WireErrc::BadFlags: return "BadFlags";
    case WireErrc::LengthMismatch: return "LengthMismatch";
    case WireErrc::ArityViolation: return "ArityViolation";
    case WireErrc::Overflow: return "Overflow";
  }
  return "Unknown";
}

bool agent_originated(MessageKind kind) {
  return kind == MessageKind::RegularUpdate || kind == MessageKind::Trap ||
         kind == MessageKind::Advertisement;
}

MessageKind reply_kind_for(MessageKind agent_kind) {
  switch (agent_kind) {
    case MessageKind::RegularUpdate: return MessageKind::ActionSet;
    case MessageKind::Trap: return MessageKind::TrapReply;
    case MessageKind::Advertisement: return MessageKind::Registration;
    default:
      throw std::invalid_argument(
          fmt::format("{} is not agent-originated", to_string(agent_kind)));
  }
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  const auto& h = msg.header;
  if (!valid_kind_code(static_cast<std::uint8_t>(h.kind))) {
    throw WireError(WireErrc::UnknownKind, "unknown message kind");
  }
  if (h.flags & ~flags::kKnownMask) {
    throw WireError(WireErrc::BadFlags, fmt::format("flags 0x{:02x}", h.flags));
  }
  if (msg.records.size() > kMaxRecords) {
    throw WireError(WireErrc::Overflow,
                    fmt::format("{} records exceed the 16-bit payload length",
                                msg.records.size()));
  }
  check_arity(h.kind, msg.records);

  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(msg.records.size()));
  Writer w(out);
  w.put(h.version);
  w.put(static_cast<std::uint8_t>(h.kind));
  w.put(h.flags);
  w.put(std::uint8_t{0});
  w.put(h.agent_id);
  w.put(h.sequence);
  w.put(h.timestamp_ms);
  w.put(static_cast<std::uint16_t>(msg.records.size() * kRecordSize));
  for (const auto& r : msg.records) {
    w.put(r.object_id);
    w.put(r.value_milli);
    w.put(r.interval_packets_sent);
    w.put(r.interval_packets_received);
  }
  return out;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw WireError(WireErrc::Truncated,
                    fmt::format("{} bytes is shorter than the header", bytes.size()));
  }
  Reader r(bytes);
  Message msg;
  auto& h = msg.header;
  h.version = r.get<std::uint8_t>();
  if (h.version != kProtocolVersion) {
    throw WireError(WireErrc::BadVersion, fmt::format("version {}", h.version));
  }
  const auto kind_code = r.get<std::uint8_t>();
  if (!valid_kind_code(kind_code)) {
    throw WireError(WireErrc::UnknownKind, fmt::format("kind 0x{:02x}", kind_code));
  }
  h.kind = static_cast<MessageKind>(kind_code);
  h.flags = r.get<std::uint8_t>();
  if ((h.flags & ~flags::kKnownMask) != 0) {
    throw WireError(WireErrc::BadFlags, fmt::format("flags 0x{:02x}", h.flags));
  }
  (void)r.get<std::uint8_t>();  // reserved, tolerated
  h.agent_id = r.get<std::uint64_t>();
  h.sequence = r.get<std::uint32_t>();
  h.timestamp_ms = r.get<std::uint64_t>();
  const std::size_t payload_len = r.get<std::uint16_t>();

  const std::size_t available = bytes.size() - kHeaderSize;
  if (available < payload_len) {
    throw WireError(WireErrc::Truncated,
                    fmt::format("payload_len {} but {} bytes follow", payload_len, available));
  }
  if (available > payload_len) {
    throw WireError(WireErrc::LengthMismatch,
                    fmt::format("{} trailing bytes", available - payload_len));
  }
  if (arity_of(h.kind) == Arity::Empty && payload_len != 0) {
    throw WireError(WireErrc::ArityViolation,
                    fmt::format("{} with payload_len {}", to_string(h.kind), payload_len));
  }
  if (payload_len % kRecordSize != 0) {
    throw WireError(WireErrc::LengthMismatch,
                    fmt::format("payload_len {} is not a multiple of {}", payload_len,
                                kRecordSize));
  }

  const std::size_t count = payload_len / kRecordSize;
  msg.records.resize(count);
  for (auto& rec : msg.records) {
    rec.object_id = r.get<std::uint32_t>();
    rec.value_milli = r.get<std::int64_t>();
    rec.interval_packets_sent = r.get<std::uint64_t>();
    rec.interval_packets_received = r.get<std::uint64_t>();
  }
  check_arity(h.kind, msg.records);
  return msg;
}

}  // namespace cnmm
