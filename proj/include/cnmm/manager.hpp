#pragma once

// The manager pool: a set of logical virtual managers sharing one registry.
//
// Agent messages are accepted by handle_message() and queued; tick() drains
// the queue (traps before everything else), replies to every accepted
// message, and runs the per-agent liveness timer that escalates to the
// management console after three unanswered Gets.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cnmm/agent.hpp"
#include "cnmm/secure_channel.hpp"
#include "cnmm/wire.hpp"

namespace cnmm {

inline constexpr int kMaxGetProbes = 3;

struct ManagerPoolConfig {
  std::size_t num_virtual_managers = 4;
  SimTime update_interval_expectation = std::chrono::seconds(300);
  SimTime get_timeout = std::chrono::seconds(5);
  double deadline_slack = 1.5;
  std::size_t history_depth = 1024;
};

void validate(const ManagerPoolConfig& cfg);

struct ConsoleAlert {
  enum class Reason { AgentUnresponsive, TrapReceived };
  std::uint64_t agent_id = 0;
  Reason reason = Reason::TrapReceived;
  SimTime at{0};
  std::string detail;
};

std::string_view to_string(ConsoleAlert::Reason reason);

/// Fixed-capacity history of one object's records, oldest first.
class RecordHistory {
 public:
  explicit RecordHistory(std::size_t capacity = 1024) : capacity_(capacity) {}
  void push(const MetricRecord& r);
  const std::deque<MetricRecord>& records() const { return records_; }
  std::uint64_t total_sent() const { return total_sent_; }
  std::uint64_t total_received() const { return total_received_; }

 private:
  std::size_t capacity_;
  std::deque<MetricRecord> records_;
  std::uint64_t total_sent_ = 0;
  std::uint64_t total_received_ = 0;
};

/// Accepts each sequence number at most once, tolerating reordering within
/// a 64-message window behind the highest sequence seen.
class SequenceWindow {
 public:
  /// True if `seq` has not been accepted before; marks it accepted.
  bool accept(std::uint32_t seq);
  bool seen(std::uint32_t seq) const;
  std::optional<std::uint32_t> highest() const { return highest_; }

 private:
  std::optional<std::uint32_t> highest_;
  std::uint64_t bitmap_ = 0;  // bit i set: highest_ - i accepted
};

struct AgentRegistryEntry {
  std::uint64_t agent_id = 0;
  ChannelKeys keys;
  SimTime registered_at{0};
  SimTime last_heard{0};
  SimTime update_deadline{0};
  int get_retries_sent = 0;
  SimTime last_get_at{0};
  bool probing_paused = false;
  SequenceWindow inbound;
  std::uint32_t seq_out = 0;
  std::map<std::uint32_t, RecordHistory> latest_records;
};

struct ObjectStatus {
  std::uint32_t object_id = 0;
  /// Derived from the latest value against provisioned levels, if known.
  std::optional<Zone> zone;
  std::vector<MetricRecord> recent;
  std::uint64_t total_packets_sent = 0;
  std::uint64_t total_packets_received = 0;
};

struct AgentStatus {
  std::uint64_t agent_id = 0;
  SimTime last_heard{0};
  std::vector<ObjectStatus> objects;
};

enum class ManagerErrc { UnknownAgent, DuplicateSequence, UnexpectedKind };
std::string_view to_string(ManagerErrc code);

class ManagerError : public std::runtime_error {
 public:
  ManagerError(ManagerErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ManagerErrc code() const noexcept { return code_; }

 private:
  ManagerErrc code_;
};

/// Result of handing one authenticated message to the pool.
enum class Intake {
  Queued,
  /// A retransmission of an already processed Trap: queued for a fresh
  /// TrapReply only, registry untouched.
  Reacknowledge,
  DuplicateDropped,
  UnknownAgentDropped,
  UnexpectedKindDropped,
};

struct ManagerCounters {
  std::uint64_t accepted = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t unknown_agent = 0;
  std::uint64_t unexpected_kind = 0;
  std::uint64_t gets_sent = 0;
};

class ManagerPool {
 public:
  explicit ManagerPool(ManagerPoolConfig config);

  /// Pre-share keys (and optionally the metric levels) for an agent.
  void provision(std::uint64_t agent_id, ChannelKeys keys, std::vector<MetricSpec> specs = {});
  const ChannelKeys* keys_for(std::uint64_t agent_id) const;

  Intake handle_message(const Message& msg, SimTime now);

  /// Drains the work queue (traps first), then probes silent agents.
  /// With probe=false no Gets or AgentUnresponsive alerts are issued.
  std::vector<Message> tick(SimTime now, bool probe = true);

  /// Round-robin virtual-manager choice for one unit of work.
  std::size_t dispatch(const Message& msg);

  AgentStatus query_agent_status(std::uint64_t agent_id, std::size_t recent_limit = 16) const;

  /// The next ActionSet sent to this agent carries the write.
  void queue_level_write(std::uint64_t agent_id, const MetricRecord& write);

  std::optional<SimTime> next_wakeup(bool probe = true) const;
  bool queue_empty() const { return trap_queue_.empty() && regular_queue_.empty(); }

  const ManagerPoolConfig& config() const { return config_; }
  const std::map<std::uint64_t, AgentRegistryEntry>& registry() const { return registry_; }
  const std::vector<ConsoleAlert>& alerts() const { return alerts_; }
  const std::vector<std::uint64_t>& vm_processed() const { return vm_processed_; }
  std::size_t rr_cursor() const { return rr_cursor_; }
  const ManagerCounters& counters() const { return counters_; }

 private:
  struct WorkItem {
    Message message;
    bool reack_only = false;
  };

  SimTime deadline_after(SimTime heard) const;
  Message reply_to(const Message& msg, MessageKind kind, SimTime now);
  std::vector<Message> process(const WorkItem& item, SimTime now);
  void store(AgentRegistryEntry& entry, const Message& msg);

  ManagerPoolConfig config_;
  std::map<std::uint64_t, ChannelKeys> keystore_;
  std::map<std::uint64_t, std::vector<MetricSpec>> known_specs_;
  std::map<std::uint64_t, AgentRegistryEntry> registry_;
  std::map<std::uint64_t, std::vector<MetricRecord>> pending_writes_;
  std::deque<WorkItem> trap_queue_;
  std::deque<WorkItem> regular_queue_;
  std::vector<ConsoleAlert> alerts_;
  std::size_t rr_cursor_ = 0;
  std::vector<std::uint64_t> vm_processed_;
  ManagerCounters counters_;
};

}  // namespace cnmm
