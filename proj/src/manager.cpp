#include "cnmm/manager.hpp"

#include <cmath>
#include <fmt/format.h>

namespace cnmm {

void validate(const ManagerPoolConfig& cfg) {
  if (cfg.num_virtual_managers < 1) {
    throw std::invalid_argument("num_virtual_managers must be at least 1");
  }
  if (cfg.update_interval_expectation <= SimTime::zero() || cfg.get_timeout <= SimTime::zero()) {
    throw std::invalid_argument("manager intervals must be positive");
  }
  if (!(cfg.deadline_slack >= 1.0)) {
    throw std::invalid_argument("deadline_slack must be at least 1");
  }
  if (cfg.history_depth < 1) {
    throw std::invalid_argument("history_depth must be at least 1");
  }
}

std::string_view to_string(ConsoleAlert::Reason reason) {
  return reason == ConsoleAlert::Reason::AgentUnresponsive ? "AgentUnresponsive"
                                                           : "TrapReceived";
}

std::string_view to_string(ManagerErrc code) {
  switch (code) {
    case ManagerErrc::UnknownAgent: return "UnknownAgent";
    case ManagerErrc::DuplicateSequence: return "DuplicateSequence";
    case ManagerErrc::UnexpectedKind: return "UnexpectedKind";
  }
  return "Unknown";
}

void RecordHistory::push(const MetricRecord& r) {
  records_.push_back(r);
  if (records_.size() > capacity_) records_.pop_front();
  total_sent_ += r.interval_packets_sent;
  total_received_ += r.interval_packets_received;
}

bool SequenceWindow::seen(std::uint32_t seq) const {
  if (!highest_ || seq > *highest_) return false;
  const std::uint32_t behind = *highest_ - seq;
  if (behind >= 64) return true;
  return (bitmap_ >> behind) & 1U;
}

bool SequenceWindow::accept(std::uint32_t seq) {
  if (!highest_ || seq > *highest_) {
    const std::uint64_t shift = highest_ ? seq - *highest_ : 64;
    bitmap_ = shift >= 64 ? 0 : bitmap_ << shift;
    bitmap_ |= 1;
    highest_ = seq;
    return true;
  }
  if (seen(seq)) return false;
  bitmap_ |= std::uint64_t{1} << (*highest_ - seq);
  return true;
}

ManagerPool::ManagerPool(ManagerPoolConfig config)
    : config_(config), vm_processed_(config.num_virtual_managers, 0) {
  validate(config_);
}

void ManagerPool::provision(std::uint64_t agent_id, ChannelKeys keys,
                            std::vector<MetricSpec> specs) {
  validate(keys);
  keystore_[agent_id] = std::move(keys);
  known_specs_[agent_id] = std::move(specs);
}

const ChannelKeys* ManagerPool::keys_for(std::uint64_t agent_id) const {
  const auto it = keystore_.find(agent_id);
  return it == keystore_.end() ? nullptr : &it->second;
}

SimTime ManagerPool::deadline_after(SimTime heard) const {
  const auto slack_ms = std::llround(
      static_cast<double>(config_.update_interval_expectation.count()) * config_.deadline_slack);
  return heard + SimTime{slack_ms};
}

Intake ManagerPool::handle_message(const Message& msg, SimTime now) {
  const auto& h = msg.header;
  if (!agent_originated(h.kind)) {
    ++counters_.unexpected_kind;
    return Intake::UnexpectedKindDropped;
  }

  auto it = registry_.find(h.agent_id);
  if (it == registry_.end()) {
    const auto keys = keystore_.find(h.agent_id);
    if (h.kind != MessageKind::Advertisement || keys == keystore_.end()) {
      ++counters_.unknown_agent;
      return Intake::UnknownAgentDropped;
    }
    AgentRegistryEntry entry;
    entry.agent_id = h.agent_id;
    entry.keys = keys->second;
    entry.registered_at = now;
    it = registry_.emplace(h.agent_id, std::move(entry)).first;
  }

  auto& entry = it->second;
  if (!entry.inbound.accept(h.sequence)) {
    ++counters_.duplicates;
    if (h.kind == MessageKind::Trap) {
      trap_queue_.push_back({msg, true});
      return Intake::Reacknowledge;
    }
    return Intake::DuplicateDropped;
  }

  entry.last_heard = now;
  entry.update_deadline = deadline_after(now);
  entry.get_retries_sent = 0;
  entry.probing_paused = false;
  ++counters_.accepted;
  (h.kind == MessageKind::Trap ? trap_queue_ : regular_queue_).push_back({msg, false});
  return Intake::Queued;
}

std::size_t ManagerPool::dispatch(const Message& /*msg*/) {
  const std::size_t vm = rr_cursor_;
  rr_cursor_ = (rr_cursor_ + 1) % config_.num_virtual_managers;
  ++vm_processed_[vm];
  return vm;
}

Message ManagerPool::reply_to(const Message& msg, MessageKind kind, SimTime now) {
  MessageHeader h;
  h.kind = kind;
  h.agent_id = msg.header.agent_id;
  h.sequence = msg.header.sequence;  // echoes the acknowledged message
  h.timestamp_ms = static_cast<std::uint64_t>(now.count());
  return Message{h, {}};
}

void ManagerPool::store(AgentRegistryEntry& entry, const Message& msg) {
  for (const auto& rec : msg.records) {
    entry.latest_records.try_emplace(rec.object_id, config_.history_depth)
        .first->second.push(rec);
  }
}

std::vector<Message> ManagerPool::process(const WorkItem& item, SimTime now) {
  const auto& msg = item.message;
  dispatch(msg);
  auto& entry = registry_.at(msg.header.agent_id);

  if (item.reack_only) return {reply_to(msg, MessageKind::TrapReply, now)};

  switch (msg.header.kind) {
    case MessageKind::Advertisement:
      return {reply_to(msg, MessageKind::Registration, now)};
    case MessageKind::RegularUpdate: {
      store(entry, msg);
      Message ack = reply_to(msg, MessageKind::ActionSet, now);
      if (auto w = pending_writes_.find(msg.header.agent_id); w != pending_writes_.end()) {
        ack.records = std::move(w->second);
        pending_writes_.erase(w);
      }
      return {ack};
    }
    case MessageKind::Trap: {
      store(entry, msg);
      std::string detail;
      for (const auto& rec : msg.records) {
        if (!detail.empty()) detail += "; ";
        detail += fmt::format("object {} value {}", rec.object_id, rec.value_milli);
      }
      alerts_.push_back({msg.header.agent_id, ConsoleAlert::Reason::TrapReceived, now, detail});
      return {reply_to(msg, MessageKind::TrapReply, now)};
    }
    default:
      return {};
  }
}

std::vector<Message> ManagerPool::tick(SimTime now, bool probe) {
  std::vector<Message> out;
  auto drain = [&](std::deque<WorkItem>& queue) {
    while (!queue.empty()) {
      WorkItem item = std::move(queue.front());
      queue.pop_front();
      for (auto& reply : process(item, now)) out.push_back(std::move(reply));
    }
  };
  drain(trap_queue_);
  drain(regular_queue_);

  if (!probe) return out;
  for (auto& [id, entry] : registry_) {
    if (entry.probing_paused) continue;
    const bool due = entry.get_retries_sent == 0
                         ? now >= entry.update_deadline
                         : now >= entry.last_get_at + config_.get_timeout;
    if (!due) continue;
    if (entry.get_retries_sent < kMaxGetProbes) {
      MessageHeader h;
      h.kind = MessageKind::Get;
      h.agent_id = id;
      h.sequence = entry.seq_out++;
      h.timestamp_ms = static_cast<std::uint64_t>(now.count());
      out.push_back(Message{h, {}});
      ++entry.get_retries_sent;
      entry.last_get_at = now;
      ++counters_.gets_sent;
    } else {
      alerts_.push_back({id, ConsoleAlert::Reason::AgentUnresponsive, now,
                         fmt::format("no reply to {} Get probes", kMaxGetProbes)});
      entry.probing_paused = true;
    }
  }
  return out;
}

std::optional<SimTime> ManagerPool::next_wakeup(bool probe) const {
  if (!probe) return std::nullopt;
  std::optional<SimTime> next;
  for (const auto& [id, entry] : registry_) {
    if (entry.probing_paused) continue;
    const SimTime t = entry.get_retries_sent == 0 ? entry.update_deadline
                                                  : entry.last_get_at + config_.get_timeout;
    if (!next || t < *next) next = t;
  }
  return next;
}

void ManagerPool::queue_level_write(std::uint64_t agent_id, const MetricRecord& write) {
  pending_writes_[agent_id].push_back(
      MetricRecord{write.object_id, write.value_milli, 0, 0});
  auto& specs = known_specs_[agent_id];
  const std::uint32_t metric_id = write.object_id & kMaxMetricObjectId;
  for (auto& spec : specs) {
    if (spec.object_id != metric_id) continue;
    if (write.object_id & kMinimumLevelBit) spec.minimum_level = write.value_milli;
    if (write.object_id & kThresholdLevelBit) spec.threshold_level = write.value_milli;
  }
}

AgentStatus ManagerPool::query_agent_status(std::uint64_t agent_id,
                                            std::size_t recent_limit) const {
  const auto it = registry_.find(agent_id);
  if (it == registry_.end()) {
    throw ManagerError(ManagerErrc::UnknownAgent, fmt::format("agent {}", agent_id));
  }
  const auto& entry = it->second;
  AgentStatus status{agent_id, entry.last_heard, {}};

  const std::vector<MetricSpec>* specs = nullptr;
  if (auto s = known_specs_.find(agent_id); s != known_specs_.end()) specs = &s->second;

  for (const auto& [object_id, history] : entry.latest_records) {
    ObjectStatus os;
    os.object_id = object_id;
    os.total_packets_sent = history.total_sent();
    os.total_packets_received = history.total_received();
    const auto& recs = history.records();
    const std::size_t skip = recs.size() > recent_limit ? recs.size() - recent_limit : 0;
    os.recent.assign(recs.begin() + static_cast<std::ptrdiff_t>(skip), recs.end());
    if (specs != nullptr && !recs.empty()) {
      for (const auto& spec : *specs) {
        if (spec.object_id != object_id) continue;
        const auto v = recs.back().value_milli;
        os.zone = v < spec.threshold_level   ? Zone::Critical
                  : v < spec.minimum_level ? Zone::Warned
                                           : Zone::Normal;
      }
    }
    status.objects.push_back(std::move(os));
  }
  return status;
}

}  // namespace cnmm
