#pragma once

// SNMP-style polling baseline.
//
// A poller sweeps every agent once per poll interval, reading a running
// 32-bit octet counter, and turns successive readings into rate estimates the
// way a classic poller does: modular difference over the nominal interval.
// The estimator's known failure modes (counter wrap, missed polls, sweep
// jitter) are reproduced on purpose so CNMM has something to be compared to.

#include <cstdint>
#include <optional>
#include <vector>

#include "cnmm/secure_channel.hpp"
#include "cnmm/simnet.hpp"
#include "cnmm/wire.hpp"

namespace cnmm::baseline {

struct Counter32 {
  std::uint32_t value = 0;
  bool operator==(const Counter32&) const = default;
};

/// (c + bytes) mod 2^32.
Counter32 counter_add(Counter32 c, std::uint64_t bytes);

/// ((curr - prev) mod 2^32) * 8 / interval_s, in bits per second.
double poll_estimate(Counter32 prev, Counter32 curr, double interval_s);

/// Upper bound of any estimate: 2^32 * 8 / interval_s.
double estimate_ceiling(double interval_s);

struct PollerConfig {
  SimTime poll_interval = std::chrono::seconds(300);
  SimTime sweep_gap = std::chrono::milliseconds(10);
  /// Extra agent-side processing time before a reply leaves.
  SimTime reply_delay{0};
};

inline constexpr int kMessagesPerPoll = 2;
/// Object id of the octet counter in poll replies.
inline constexpr std::uint32_t kOctetCounterObject = 1;

/// Throws std::invalid_argument (configuration invalid).
void validate(const PollerConfig& cfg);

struct Outage {
  SimTime from{0};
  std::optional<SimTime> until;
  bool covers(SimTime t) const { return t >= from && (!until || t < *until); }
};

struct PolledAgent {
  std::uint64_t agent_id = 0;
  ChannelKeys keys;
  std::vector<Outage> outages;
};

/// Octets counted by one agent's interface at a point in time.
struct OctetEvent {
  SimTime at{0};
  std::size_t agent_index = 0;
  std::uint64_t octets = 0;
};

struct RateSample {
  std::uint64_t agent_id = 0;
  std::uint32_t poll_index = 0;
  /// When the counter was read on the agent.
  SimTime read_at{0};
  /// Actual time between this reading and the previous one.
  SimTime actual_gap{0};
  /// Polls lost since the previous reading (the estimate ignores them).
  std::uint32_t missed_polls = 0;
  std::uint32_t counter = 0;
  double estimate_bps = 0.0;
  double true_bps = 0.0;
};

struct PollingResult {
  sim::SimStats stats;
  std::vector<RateSample> samples;
  std::uint64_t polls_sent = 0;
  std::uint64_t replies_received = 0;
  /// Reply arrival minus the start of its sweep, one entry per reply.
  std::vector<std::int64_t> reply_delay_ms;
  std::size_t request_bytes = 0;
  std::size_t response_bytes = 0;
};

struct PollingScenario {
  std::vector<PolledAgent> agents;
  sim::LinkModel link;
  PollerConfig poller;
  ChannelConfig channel;
  std::vector<OctetEvent> traffic;
  SimTime duration{0};
  /// Extra time after `duration` for in-flight replies.
  SimTime settle = std::chrono::seconds(60);
  std::uint64_t seed = 0;
};

/// Sweeps at k * poll_interval for k = 1..floor(duration / poll_interval),
/// agent i polled at sweep start + i * sweep_gap. Counters start at zero at
/// t = 0, which is also the poller's first reference reading.
PollingResult run_polling_scenario(const PollingScenario& scenario);

}  // namespace cnmm::baseline
