#pragma once

// Managed-node side of CNMM.
//
// The agent owns its MIB, watches each metric against two levels (minimum
// above threshold, both in "headroom" orientation where lower is worse) and
// reports on its own initiative: periodic RegularUpdates, a RegularUpdate when
// a metric falls below its minimum level, and an acknowledged Trap when it
// falls below its threshold level.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cnmm/secure_channel.hpp"
#include "cnmm/wire.hpp"

namespace cnmm {

/// ActionSet write targets. A record whose object_id is a metric id with one
/// of these bits set writes that metric's minimum or threshold level.
inline constexpr std::uint32_t kMinimumLevelBit = 0x4000'0000;
inline constexpr std::uint32_t kThresholdLevelBit = 0x8000'0000;
inline constexpr std::uint32_t kMaxMetricObjectId = 0x3FFF'FFFF;

struct MetricSpec {
  std::uint32_t object_id = 0;
  std::string name;
  std::int64_t minimum_level = 0;
  std::int64_t threshold_level = 0;
  /// Defaults to 5% of (minimum_level - threshold_level) when unset.
  std::optional<std::int64_t> hysteresis;

  std::int64_t effective_hysteresis() const;
};

/// Throws std::invalid_argument when a spec breaks its invariants.
void validate(const MetricSpec& spec);

enum class Zone { Normal, Warned, Critical };
std::string_view to_string(Zone zone);

struct MetricState {
  MetricSpec spec;
  std::int64_t current_value = 0;
  Zone zone = Zone::Normal;
  std::uint64_t raw_sent_count = 0;
  std::uint64_t raw_received_count = 0;
};

struct AgentConfig {
  std::uint64_t agent_id = 0;
  SimTime update_interval = std::chrono::seconds(300);
  int trap_retry_limit = 5;
  SimTime trap_retry_backoff = std::chrono::seconds(2);
  SimTime readvertise_interval = std::chrono::seconds(10);
  ChannelKeys keys;
};

struct PendingTrap {
  Message message;
  int retries_left = 0;
  SimTime next_retry_at{0};
  SimTime backoff{0};
  SimTime first_sent_at{0};
};

/// Local events an operator or test harness may inspect after a run.
struct AgentEvent {
  enum class Type { TrapAcked, TrapAbandoned, LevelWritten, ActionSetRejected };
  Type type;
  SimTime at{0};
  std::uint32_t sequence = 0;
  /// Trap latency for TrapAcked, otherwise zero.
  SimTime latency{0};
};

enum class AgentErrc { AlreadyRegistered, NotRegistered, UnknownObject, UnexpectedKind };
std::string_view to_string(AgentErrc code);

class AgentError : public std::runtime_error {
 public:
  AgentError(AgentErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  AgentErrc code() const noexcept { return code_; }

 private:
  AgentErrc code_;
};

struct AgentCounters {
  std::uint64_t updates_sent = 0;
  std::uint64_t traps_sent = 0;
  std::uint64_t trap_retransmissions = 0;
  std::uint64_t advertisements_sent = 0;
  std::uint64_t actionsets_received = 0;
  std::uint64_t action_errors = 0;
};

enum class TickScope {
  All,
  /// Only retransmit pending traps; no periodic updates or re-advertisements.
  RetransmitOnly,
};

class Agent {
 public:
  /// Metrics start in Normal with current_value at their minimum level.
  /// The first periodic update is due at boot + update_interval.
  Agent(AgentConfig config, const std::vector<MetricSpec>& metrics, SimTime boot = SimTime{0});

  /// Advertisement (ack required). Allowed repeatedly until registered.
  Message advertise(SimTime now);

  std::vector<Message> observe_sample(std::uint32_t object_id, std::int64_t value, SimTime now);

  /// Adds to the running tallies, saturating at 2^64-1.
  void record_traffic(std::uint32_t object_id, std::uint64_t sent, std::uint64_t received);

  std::vector<Message> tick(SimTime now, TickScope scope = TickScope::All);

  /// `msg` has already been authenticated by the channel.
  std::vector<Message> handle_message(const Message& msg, SimTime now);

  /// Earliest time at which tick() has work to do.
  std::optional<SimTime> next_wakeup(TickScope scope = TickScope::All) const;

  const AgentConfig& config() const { return config_; }
  bool registered() const { return registered_; }
  std::uint32_t next_sequence() const { return seq_out_; }
  SimTime next_update_deadline() const { return next_update_deadline_; }
  const std::map<std::uint32_t, MetricState>& metrics() const { return metrics_; }
  const MetricState& metric(std::uint32_t object_id) const;
  const std::map<std::uint32_t, PendingTrap>& pending_traps() const { return pending_traps_; }
  const std::vector<AgentEvent>& events() const { return events_; }
  const AgentCounters& counters() const { return counters_; }

 private:
  MetricState& metric_mut(std::uint32_t object_id);
  MessageHeader next_header(MessageKind kind, std::uint8_t flag_bits, SimTime now);
  MetricRecord drain(MetricState& m);
  Message make_update(SimTime now);
  Message make_trap(MetricState& m, SimTime now);
  void apply_action_set(const Message& msg, SimTime now);

  AgentConfig config_;
  std::map<std::uint32_t, MetricState> metrics_;
  bool registered_ = false;
  SimTime next_update_deadline_;
  std::optional<SimTime> next_advertise_at_;
  std::map<std::uint32_t, PendingTrap> pending_traps_;
  std::uint32_t seq_out_ = 0;
  std::vector<AgentEvent> events_;
  AgentCounters counters_;
};

}  // namespace cnmm
