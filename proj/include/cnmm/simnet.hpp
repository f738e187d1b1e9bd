#pragma once

// Deterministic discrete-event simulation of an unreliable datagram network.
//
// Events run in (at, insertion sequence) order. Every directed link owns an
// independent mt19937_64 stream seeded with substream_seed(seed, link_id),
// so a link's loss and jitter draws never depend on traffic elsewhere.
// Per send, the link draws once for loss (dropped iff u < loss_prob with
// u = (draw >> 11) * 2^-53) and, if the datagram survives and jitter_ms > 0,
// once more for jitter (draw mod (jitter_ms + 1)).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <variant>
#include <vector>

#include "cnmm/wire.hpp"

namespace cnmm::sim {

using NodeId = std::uint32_t;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

/// Seed of an independent substream: mix64(mix64(root) ^ id).
std::uint64_t substream_seed(std::uint64_t root, std::uint64_t id);

constexpr std::uint64_t link_id(NodeId src, NodeId dst) {
  return (std::uint64_t{src} << 32) | dst;
}

struct LinkModel {
  std::int64_t base_latency_ms = 0;
  std::int64_t jitter_ms = 0;
  double loss_prob = 0.0;
  bool allow_reorder = true;
};

void validate(const LinkModel& link);

/// One protocol message in flight: the serialized envelopes of its fragments.
/// `kind` is bookkeeping for statistics; receivers only see the bytes.
struct Datagram {
  NodeId src = 0;
  NodeId dst = 0;
  MessageKind kind = MessageKind::Get;
  std::vector<std::vector<std::uint8_t>> envelopes;

  std::size_t packet_count() const { return envelopes.size(); }
  std::size_t byte_count() const;
};

/// Traffic from Agent nodes counts as upstream, from Manager nodes as downstream.
enum class NodeRole { Manager, Agent };

struct TrafficCounters {
  std::uint64_t sends = 0;
  std::uint64_t deliveries = 0;
  std::uint64_t drops = 0;
  std::uint64_t packets = 0;
  std::uint64_t bytes = 0;
  std::uint64_t bytes_delivered = 0;

  bool operator==(const TrafficCounters&) const = default;
};

struct SimStats {
  TrafficCounters upstream;
  TrafficCounters downstream;
  std::array<std::uint64_t, kMessageKindCount> sends_by_kind{};
  std::map<std::uint64_t, TrafficCounters> per_link;

  TrafficCounters total() const;
  std::uint64_t sends_of(MessageKind kind) const {
    return sends_by_kind[static_cast<std::size_t>(kind) - 1];
  }
  /// sends == deliveries + drops for every link and both directions.
  bool conserved() const;

  bool operator==(const SimStats&) const = default;
};

struct Deliver {
  Datagram datagram;
};
struct TimerFire {
  NodeId node = 0;
};
struct SampleInject {
  NodeId node = 0;
  std::uint32_t object_id = 0;
  std::int64_t value = 0;
};
struct TrafficInject {
  NodeId node = 0;
  std::uint32_t object_id = 0;
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t octets = 0;
};

struct SimEvent {
  SimTime at{0};
  std::uint64_t seq_tiebreak = 0;
  std::variant<Deliver, TimerFire, SampleInject, TrafficInject> kind;
};

class Network;

class Node {
 public:
  virtual ~Node() = default;
  virtual void on_datagram(Network& net, const Datagram& d, SimTime now) = 0;
  virtual void on_timer(Network& net, SimTime now) = 0;
  virtual void on_sample(Network&, std::uint32_t, std::int64_t, SimTime) {}
  virtual void on_traffic(Network&, const TrafficInject&, SimTime) {}
};

class UnknownNode : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class Network {
 public:
  Network(LinkModel link, std::uint64_t seed);

  /// Nodes are referenced, not owned; they must outlive the network.
  NodeId add_node(Node& node, NodeRole role);

  void schedule_send(Datagram d, SimTime now);
  /// Requests a TimerFire. Requests for a (node, time) pair already pending
  /// are coalesced.
  void wake_at(NodeId node, SimTime at);
  void inject_sample(SimTime at, NodeId node, std::uint32_t object_id, std::int64_t value);
  void inject_traffic(SimTime at, const TrafficInject& t);

  /// Runs every event with at <= t_end, then advances the clock to t_end.
  const SimStats& run_until(SimTime t_end);

  SimTime now() const { return now_; }
  const SimStats& stats() const { return stats_; }
  std::size_t pending_events() const { return queue_.size(); }
  std::uint64_t events_executed() const { return executed_; }
  /// Datagrams sent but neither delivered nor dropped yet.
  std::uint64_t in_flight() const {
    const auto t = stats_.total();
    return t.sends - t.deliveries - t.drops;
  }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.at != b.at ? a.at > b.at : a.seq_tiebreak > b.seq_tiebreak;
    }
  };
  struct LinkState {
    std::mt19937_64 rng;
    SimTime last_delivery{0};
  };

  void push(SimTime at, decltype(SimEvent::kind) kind);
  void check_node(NodeId id) const;
  LinkState& link_state(NodeId src, NodeId dst);
  TrafficCounters& direction_counters(NodeId src);

  LinkModel link_;
  std::uint64_t seed_;
  std::vector<Node*> nodes_;
  std::vector<NodeRole> roles_;
  std::map<std::uint64_t, LinkState> links_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::set<std::pair<NodeId, SimTime::rep>> pending_timers_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  SimTime now_{0};
  SimStats stats_;
};

}  // namespace cnmm::sim
