#pragma once

// Wires a scenario onto the simulator and runs CNMM and the polling baseline.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cnmm/agent.hpp"
#include "cnmm/baseline.hpp"
#include "cnmm/manager.hpp"
#include "cnmm/scenario.hpp"
#include "cnmm/simnet.hpp"

namespace cnmm {

/// A run broke one of its own bookkeeping identities.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One message handed to the network, as seen by its sender.
struct WireRecord {
  SimTime at{0};
  sim::NodeId src = 0;
  sim::NodeId dst = 0;
  std::uint64_t agent_id = 0;
  MessageKind kind = MessageKind::Get;
  std::uint32_t sequence = 0;
  std::uint8_t flags = 0;
  std::size_t records = 0;
  std::size_t bytes = 0;
};

/// Packet tallies of one object: what was injected, what the agent put on
/// the wire (first transmissions only), what it still holds, and what the
/// manager stored.
struct ObjectTally {
  std::uint64_t agent_id = 0;
  std::uint32_t object_id = 0;
  std::uint64_t injected_sent = 0;
  std::uint64_t injected_received = 0;
  std::uint64_t emitted_sent = 0;
  std::uint64_t emitted_received = 0;
  std::uint64_t residual_sent = 0;
  std::uint64_t residual_received = 0;
  std::uint64_t stored_sent = 0;
  std::uint64_t stored_received = 0;

  /// emitted + residual == injected for both directions.
  bool conserved() const {
    return emitted_sent + residual_sent == injected_sent &&
           emitted_received + residual_received == injected_received;
  }
};

struct AgentSummary {
  std::uint64_t agent_id = 0;
  bool registered = false;
  std::size_t pending_traps = 0;
  std::uint64_t rejected_inbound = 0;
  /// Samples that arrived before the agent registered.
  std::uint64_t samples_before_registration = 0;
  AgentCounters counters;
  std::vector<AgentEvent> events;
};

struct CnmmResult {
  sim::SimStats stats;
  std::vector<ConsoleAlert> alerts;
  std::vector<std::uint64_t> vm_processed;
  ManagerCounters manager_counters;
  std::uint64_t manager_rejected_inbound = 0;
  std::vector<AgentSummary> agents;
  std::vector<ObjectTally> tallies;
  std::vector<WireRecord> trace;
  SimTime finished_at{0};
};

struct RunResult {
  std::uint64_t seed = 0;
  CnmmResult cnmm;
  std::optional<baseline::PollingResult> baseline;
};

/// Seeds of the two protocol runs, independent substreams of the scenario seed.
std::uint64_t cnmm_run_seed(std::uint64_t seed);
std::uint64_t baseline_run_seed(std::uint64_t seed);

/// Runs the scenario for its duration, then for `settle` more with no new
/// periodic work, then until nothing is in flight.
/// Throws InvariantViolation.
CnmmResult run_cnmm(const Scenario& sc);

baseline::PollingScenario polling_scenario_for(const Scenario& sc);
baseline::PollingResult run_baseline(const Scenario& sc);

/// CNMM, then the baseline when enabled.
RunResult run_scenario(const Scenario& sc);

}  // namespace cnmm
