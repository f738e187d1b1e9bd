#pragma once

// Scenario files: everything a run needs, in JSON. The schema is documented
// in docs/scenario.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cnmm/agent.hpp"
#include "cnmm/baseline.hpp"
#include "cnmm/manager.hpp"
#include "cnmm/secure_channel.hpp"
#include "cnmm/simnet.hpp"

namespace cnmm {

/// Constant-rate traffic on one object of one agent (or of every agent).
struct TrafficProfile {
  std::optional<std::uint64_t> agent_id;
  std::uint32_t object_id = 0;
  std::uint64_t octets_per_s = 0;
  std::uint64_t packets_sent_per_s = 0;
  std::uint64_t packets_received_per_s = 0;
  SimTime from{0};
  std::optional<SimTime> to;  // defaults to the scenario duration
  SimTime step = std::chrono::milliseconds(1000);
};

struct SampleInjection {
  SimTime at{0};
  std::uint64_t agent_id = 0;
  std::uint32_t object_id = 0;
  std::int64_t value = 0;
};

struct TrafficInjection {
  SimTime at{0};
  std::uint64_t agent_id = 0;
  std::uint32_t object_id = 0;
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t octets = 0;
};

struct LevelWrite {
  enum class Level { Minimum, Threshold };
  SimTime at{0};
  std::uint64_t agent_id = 0;
  std::uint32_t object_id = 0;
  Level level = Level::Minimum;
  std::int64_t value = 0;

  /// The ActionSet object id encoding this write.
  std::uint32_t target_object() const {
    return object_id | (level == Level::Minimum ? kMinimumLevelBit : kThresholdLevelBit);
  }
};

struct AgentFailure {
  std::uint64_t agent_id = 0;
  SimTime fail_at{0};
  std::optional<SimTime> recover_at;
};

struct AgentTiming {
  SimTime update_interval = std::chrono::seconds(300);
  int trap_retry_limit = 5;
  SimTime trap_retry_backoff = std::chrono::seconds(2);
  SimTime readvertise_interval = std::chrono::seconds(10);
};

struct Scenario {
  std::uint64_t seed = 0;
  SimTime duration{0};
  /// Time after `duration` during which no new periodic work starts but
  /// in-flight exchanges and trap retransmissions complete.
  SimTime settle = std::chrono::seconds(180);
  sim::LinkModel link;

  std::size_t agent_count = 1;
  std::uint64_t first_agent_id = 1;
  std::vector<MetricSpec> metrics;
  Bytes master_secret;
  std::map<std::uint64_t, ChannelKeys> key_overrides;

  ChannelConfig channel;
  AgentTiming agent;
  ManagerPoolConfig pool;

  bool baseline_enabled = true;
  baseline::PollerConfig poller;

  std::vector<TrafficProfile> traffic;
  std::vector<SampleInjection> samples;
  std::vector<TrafficInjection> traffic_injections;
  std::vector<LevelWrite> level_writes;
  std::vector<AgentFailure> failures;

  std::vector<std::uint64_t> agent_ids() const;
  bool has_agent(std::uint64_t id) const;
  ChannelKeys keys_for(std::uint64_t agent_id) const;
};

/// Failing validation rule plus the JSON pointer of the offending value.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string pointer, const std::string& what)
      : std::runtime_error(what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// Parse or validation failure, anchored to a line of the source text.
class ScenarioLoadError : public std::runtime_error {
 public:
  ScenarioLoadError(std::size_t line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Throws ScenarioError.
Scenario scenario_from_json(const nlohmann::json& doc);
/// Throws ScenarioError.
void validate(const Scenario& sc);

/// Throws ScenarioLoadError with "<source>:<line>: ..." messages.
Scenario parse_scenario(const std::string& text, const std::string& source_name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

/// Normalized echo of every setting, defaults included.
nlohmann::ordered_json scenario_to_json(const Scenario& sc);

/// 1-based line of the value at `pointer` in JSON `text` (1 if not found).
std::size_t line_of_pointer(const std::string& text, const std::string& pointer);

/// Traffic profiles expanded into per-step increments, sorted by time.
std::vector<TrafficInjection> expand_traffic(const Scenario& sc);

}  // namespace cnmm
