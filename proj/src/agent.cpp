#include "cnmm/agent.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <limits>
#include <utility>

namespace cnmm {

namespace {

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const auto max = std::numeric_limits<std::uint64_t>::max();
  return a > max - b ? max : a + b;
}

}  // namespace

std::int64_t MetricSpec::effective_hysteresis() const {
  return hysteresis.value_or((minimum_level - threshold_level) / 20);
}

void validate(const MetricSpec& spec) {
  if (spec.object_id > kMaxMetricObjectId) {
    throw std::invalid_argument(
        fmt::format("object_id {} collides with the level-write bits", spec.object_id));
  }
  if (spec.minimum_level <= spec.threshold_level) {
    throw std::invalid_argument(
        fmt::format("object {}: minimum_level {} must be above threshold_level {}",
                    spec.object_id, spec.minimum_level, spec.threshold_level));
  }
  if (spec.effective_hysteresis() < 0) {
    throw std::invalid_argument(
        fmt::format("object {}: hysteresis must be non-negative", spec.object_id));
  }
}

std::string_view to_string(Zone zone) {
  switch (zone) {
    case Zone::Normal: return "Normal";
    case Zone::Warned: return "Warned";
    case Zone::Critical: return "Critical";
  }
  return "Unknown";
}

std::string_view to_string(AgentErrc code) {
  switch (code) {
    case AgentErrc::AlreadyRegistered: return "AlreadyRegistered";
    case AgentErrc::NotRegistered: return "NotRegistered";
    case AgentErrc::UnknownObject: return "UnknownObject";
    case AgentErrc::UnexpectedKind: return "UnexpectedKind";
  }
  return "Unknown";
}

Agent::Agent(AgentConfig config, const std::vector<MetricSpec>& metrics, SimTime boot)
    : config_(std::move(config)), next_update_deadline_(boot + config_.update_interval) {
  if (config_.update_interval <= SimTime::zero()) {
    throw std::invalid_argument("update_interval must be positive");
  }
  if (config_.trap_retry_limit < 1) {
    throw std::invalid_argument("trap_retry_limit must be at least 1");
  }
  for (const auto& spec : metrics) {
    validate(spec);
    MetricState state;
    state.spec = spec;
    state.current_value = spec.minimum_level;
    if (!metrics_.emplace(spec.object_id, std::move(state)).second) {
      throw std::invalid_argument(fmt::format("duplicate object_id {}", spec.object_id));
    }
  }
}

const MetricState& Agent::metric(std::uint32_t object_id) const {
  const auto it = metrics_.find(object_id);
  if (it == metrics_.end()) {
    throw AgentError(AgentErrc::UnknownObject, fmt::format("object {}", object_id));
  }
  return it->second;
}

MetricState& Agent::metric_mut(std::uint32_t object_id) {
  return const_cast<MetricState&>(std::as_const(*this).metric(object_id));
}

MessageHeader Agent::next_header(MessageKind kind, std::uint8_t flag_bits, SimTime now) {
  if (seq_out_ == std::numeric_limits<std::uint32_t>::max()) {
    throw std::overflow_error(fmt::format("agent {} exhausted its sequence space",
                                          config_.agent_id));
  }
  MessageHeader h;
  h.kind = kind;
  h.flags = flag_bits;
  h.agent_id = config_.agent_id;
  h.sequence = seq_out_++;
  h.timestamp_ms = static_cast<std::uint64_t>(now.count());
  return h;
}

MetricRecord Agent::drain(MetricState& m) {
  MetricRecord r{m.spec.object_id, m.current_value, m.raw_sent_count, m.raw_received_count};
  m.raw_sent_count = 0;
  m.raw_received_count = 0;
  return r;
}

Message Agent::make_update(SimTime now) {
  Message msg{next_header(MessageKind::RegularUpdate, flags::kAckRequired, now), {}};
  msg.records.reserve(metrics_.size());
  for (auto& [id, m] : metrics_) msg.records.push_back(drain(m));
  ++counters_.updates_sent;
  return msg;
}

Message Agent::make_trap(MetricState& m, SimTime now) {
  Message msg{next_header(MessageKind::Trap, flags::kAckRequired, now), {drain(m)}};
  PendingTrap pending;
  pending.message = msg;
  pending.retries_left = config_.trap_retry_limit;
  pending.backoff = config_.trap_retry_backoff;
  pending.next_retry_at = now + config_.trap_retry_backoff;
  pending.first_sent_at = now;
  pending_traps_.emplace(msg.header.sequence, std::move(pending));
  ++counters_.traps_sent;
  return msg;
}

Message Agent::advertise(SimTime now) {
  if (registered_) {
    throw AgentError(AgentErrc::AlreadyRegistered,
                     fmt::format("agent {} is already registered", config_.agent_id));
  }
  next_advertise_at_ = now + config_.readvertise_interval;
  ++counters_.advertisements_sent;
  return Message{next_header(MessageKind::Advertisement, flags::kAckRequired, now), {}};
}

std::vector<Message> Agent::observe_sample(std::uint32_t object_id, std::int64_t value,
                                           SimTime now) {
  auto& m = metric_mut(object_id);
  if (!registered_) {
    throw AgentError(AgentErrc::NotRegistered,
                     fmt::format("agent {} sampled before registration", config_.agent_id));
  }
  m.current_value = value;

  std::vector<Message> out;
  if (value < m.spec.threshold_level) {
    // Crossing both levels at once reports only the trap.
    if (m.zone != Zone::Critical) {
      m.zone = Zone::Critical;
      out.push_back(make_trap(m, now));
    }
  } else if (value < m.spec.minimum_level) {
    if (m.zone == Zone::Normal) {
      m.zone = Zone::Warned;
      out.push_back(make_update(now));
    }
  } else if (value >= m.spec.minimum_level + m.spec.effective_hysteresis()) {
    m.zone = Zone::Normal;
  }
  return out;
}

void Agent::record_traffic(std::uint32_t object_id, std::uint64_t sent, std::uint64_t received) {
  auto& m = metric_mut(object_id);
  m.raw_sent_count = saturating_add(m.raw_sent_count, sent);
  m.raw_received_count = saturating_add(m.raw_received_count, received);
}

std::vector<Message> Agent::tick(SimTime now, TickScope scope) {
  std::vector<Message> out;
  if (scope == TickScope::All) {
    if (!registered_ && next_advertise_at_ && now >= *next_advertise_at_) {
      out.push_back(advertise(now));
    }
    if (now >= next_update_deadline_) {
      // One update covers any deadlines missed while the node was down.
      while (next_update_deadline_ <= now) next_update_deadline_ += config_.update_interval;
      if (registered_) out.push_back(make_update(now));
    }
  }

  for (auto it = pending_traps_.begin(); it != pending_traps_.end();) {
    auto& p = it->second;
    if (now < p.next_retry_at) {
      ++it;
      continue;
    }
    if (p.retries_left == 0) {
      events_.push_back({AgentEvent::Type::TrapAbandoned, now, it->first, SimTime{0}});
      it = pending_traps_.erase(it);
      continue;
    }
    --p.retries_left;
    p.backoff *= 2;
    p.next_retry_at = now + p.backoff;
    Message copy = p.message;
    copy.header.flags |= flags::kRetransmission;
    out.push_back(std::move(copy));
    ++counters_.trap_retransmissions;
    ++it;
  }
  return out;
}

std::optional<SimTime> Agent::next_wakeup(TickScope scope) const {
  std::optional<SimTime> next;
  auto consider = [&](SimTime t) {
    if (!next || t < *next) next = t;
  };
  if (scope == TickScope::All) {
    consider(next_update_deadline_);
    if (!registered_ && next_advertise_at_) consider(*next_advertise_at_);
  }
  for (const auto& [seq, p] : pending_traps_) consider(p.next_retry_at);
  return next;
}

void Agent::apply_action_set(const Message& msg, SimTime now) {
  for (const auto& rec : msg.records) {
    const bool min_bit = (rec.object_id & kMinimumLevelBit) != 0;
    const bool thr_bit = (rec.object_id & kThresholdLevelBit) != 0;
    const std::uint32_t metric_id = rec.object_id & kMaxMetricObjectId;
    const auto it = metrics_.find(metric_id);
    if (min_bit == thr_bit || it == metrics_.end()) {
      ++counters_.action_errors;
      events_.push_back(
          {AgentEvent::Type::ActionSetRejected, now, msg.header.sequence, SimTime{0}});
      continue;
    }
    MetricSpec updated = it->second.spec;
    (min_bit ? updated.minimum_level : updated.threshold_level) = rec.value_milli;
    try {
      validate(updated);
    } catch (const std::invalid_argument&) {
      ++counters_.action_errors;
      events_.push_back(
          {AgentEvent::Type::ActionSetRejected, now, msg.header.sequence, SimTime{0}});
      continue;
    }
    it->second.spec = updated;
    events_.push_back({AgentEvent::Type::LevelWritten, now, msg.header.sequence, SimTime{0}});
  }
}

std::vector<Message> Agent::handle_message(const Message& msg, SimTime now) {
  switch (msg.header.kind) {
    case MessageKind::Get: {
      std::vector<Message> out{make_update(now)};
      next_update_deadline_ = now + config_.update_interval;
      return out;
    }
    case MessageKind::ActionSet:
      // Also the acknowledgement of the update it answers.
      ++counters_.actionsets_received;
      apply_action_set(msg, now);
      return {};
    case MessageKind::Registration:
      registered_ = true;
      next_advertise_at_.reset();
      return {};
    case MessageKind::TrapReply: {
      const auto it = pending_traps_.find(msg.header.sequence);
      if (it != pending_traps_.end()) {
        events_.push_back({AgentEvent::Type::TrapAcked, now, it->first,
                           now - it->second.first_sent_at});
        pending_traps_.erase(it);
      }
      return {};
    }
    case MessageKind::RegularUpdate:
    case MessageKind::Trap:
    case MessageKind::Advertisement:
      break;
  }
  throw AgentError(AgentErrc::UnexpectedKind,
                   fmt::format("agent received {}", to_string(msg.header.kind)));
}

}  // namespace cnmm
