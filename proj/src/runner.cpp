#include "cnmm/runner.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>

namespace cnmm {

namespace {

constexpr std::uint64_t kCnmmStream = 1;
constexpr std::uint64_t kBaselineStream = 2;

using Trace = std::vector<WireRecord>;

sim::Datagram seal(const Message& msg, const ChannelKeys& keys, const ChannelConfig& channel,
                   sim::NodeId src, sim::NodeId dst) {
  sim::Datagram d{src, dst, msg.header.kind, {}};
  for (const auto& env : wrap_message(msg, keys, channel)) d.envelopes.push_back(encode_envelope(env));
  return d;
}

/// Throws ChannelError or WireError.
Message open(const sim::Datagram& d, const ChannelKeys& keys, const ChannelConfig& channel) {
  std::vector<SecureEnvelope> envs;
  envs.reserve(d.envelopes.size());
  for (const auto& bytes : d.envelopes) envs.push_back(decode_envelope(bytes));
  return unwrap_message(envs, keys, channel);
}

void send_traced(sim::Network& net, Trace& trace, const Message& msg, const ChannelKeys& keys,
                 const ChannelConfig& channel, sim::NodeId src, sim::NodeId dst, SimTime now) {
  auto d = seal(msg, keys, channel, src, dst);
  trace.push_back(WireRecord{now, src, dst, msg.header.agent_id, msg.header.kind,
                             msg.header.sequence, msg.header.flags, msg.records.size(),
                             d.byte_count()});
  net.schedule_send(std::move(d), now);
}

class AgentNode : public sim::Node {
 public:
  AgentNode(AgentConfig config, const std::vector<MetricSpec>& metrics,
            const ChannelConfig& channel, std::vector<baseline::Outage> outages, Trace& trace)
      : agent_(std::move(config), metrics), channel_(channel), outages_(std::move(outages)),
        trace_(trace) {}

  void bind(sim::NodeId self, sim::NodeId manager) {
    self_ = self;
    manager_ = manager;
  }

  void start(sim::Network& net) {
    if (down(SimTime{0})) {
      reschedule(net, SimTime{0});
      return;
    }
    emit(net, {agent_.advertise(SimTime{0})}, SimTime{0});
    reschedule(net, SimTime{0});
  }

  void wind_down(sim::Network& net) {
    scope_ = TickScope::RetransmitOnly;
    reschedule(net, net.now());
  }

  void on_datagram(sim::Network& net, const sim::Datagram& d, SimTime now) override {
    if (down(now)) return;
    Message msg;
    try {
      msg = open(d, agent_.config().keys, channel_);
    } catch (const std::exception&) {
      ++rejected_;
      return;
    }
    if (msg.header.agent_id != agent_.config().agent_id) {
      ++rejected_;
      return;
    }
    try {
      emit(net, agent_.handle_message(msg, now), now);
    } catch (const AgentError&) {
      ++rejected_;
    }
    reschedule(net, now);
  }

  void on_timer(sim::Network& net, SimTime now) override {
    if (!down(now)) emit(net, agent_.tick(now, scope_), now);
    reschedule(net, now);
  }

  void on_sample(sim::Network& net, std::uint32_t object_id, std::int64_t value,
                 SimTime now) override {
    if (down(now)) return;
    try {
      emit(net, agent_.observe_sample(object_id, value, now), now);
    } catch (const AgentError&) {
      ++dropped_samples_;
      return;
    }
    reschedule(net, now);
  }

  void on_traffic(sim::Network&, const sim::TrafficInject& t, SimTime now) override {
    if (down(now)) return;
    agent_.record_traffic(t.object_id, t.sent, t.received);
    auto& tally = injected_[t.object_id];
    tally.first += t.sent;
    tally.second += t.received;
  }

  const Agent& agent() const { return agent_; }
  std::uint64_t rejected() const { return rejected_; }
  std::uint64_t dropped_samples() const { return dropped_samples_; }
  const std::map<std::uint32_t, std::pair<std::uint64_t, std::uint64_t>>& injected() const {
    return injected_;
  }
  const std::map<std::uint32_t, std::pair<std::uint64_t, std::uint64_t>>& emitted() const {
    return emitted_;
  }

 private:
  bool down(SimTime now) const {
    return std::any_of(outages_.begin(), outages_.end(),
                       [&](const baseline::Outage& o) { return o.covers(now); });
  }

  void emit(sim::Network& net, const std::vector<Message>& msgs, SimTime now) {
    for (const auto& msg : msgs) {
      if (!(msg.header.flags & flags::kRetransmission)) {
        for (const auto& r : msg.records) {
          auto& tally = emitted_[r.object_id];
          tally.first += r.interval_packets_sent;
          tally.second += r.interval_packets_received;
        }
      }
      send_traced(net, trace_, msg, agent_.config().keys, channel_, self_, manager_, now);
    }
  }

  void reschedule(sim::Network& net, SimTime now) {
    if (const auto it = std::find_if(outages_.begin(), outages_.end(),
                                     [&](const baseline::Outage& o) { return o.covers(now); });
        it != outages_.end()) {
      if (it->until) net.wake_at(self_, *it->until);
      return;
    }
    if (const auto next = agent_.next_wakeup(scope_)) net.wake_at(self_, std::max(*next, now));
  }

  Agent agent_;
  const ChannelConfig& channel_;
  std::vector<baseline::Outage> outages_;
  Trace& trace_;
  TickScope scope_ = TickScope::All;
  sim::NodeId self_ = 0;
  sim::NodeId manager_ = 0;
  std::uint64_t rejected_ = 0;
  std::uint64_t dropped_samples_ = 0;
  std::map<std::uint32_t, std::pair<std::uint64_t, std::uint64_t>> injected_;
  std::map<std::uint32_t, std::pair<std::uint64_t, std::uint64_t>> emitted_;
};

class ManagerNode : public sim::Node {
 public:
  ManagerNode(const ManagerPoolConfig& config, const ChannelConfig& channel, Trace& trace)
      : pool_(config), channel_(channel), trace_(trace) {}

  ManagerPool& pool() { return pool_; }
  const ManagerPool& pool() const { return pool_; }
  void bind(sim::NodeId self) { self_ = self; }

  void attach(std::uint64_t agent_id, sim::NodeId node) {
    agent_of_node_[node] = agent_id;
    node_of_agent_[agent_id] = node;
  }

  void schedule_writes(sim::Network& net, std::vector<LevelWrite> writes) {
    std::stable_sort(writes.begin(), writes.end(),
                     [](const LevelWrite& a, const LevelWrite& b) { return a.at < b.at; });
    writes_ = std::move(writes);
    for (const auto& w : writes_) net.wake_at(self_, w.at);
  }

  void wind_down() { probe_ = false; }

  void on_datagram(sim::Network& net, const sim::Datagram& d, SimTime now) override {
    const auto it = agent_of_node_.find(d.src);
    const ChannelKeys* keys = it == agent_of_node_.end() ? nullptr : pool_.keys_for(it->second);
    if (keys == nullptr) {
      ++rejected_;
      return;
    }
    Message msg;
    try {
      msg = open(d, *keys, channel_);
    } catch (const std::exception&) {
      ++rejected_;
      return;
    }
    if (msg.header.agent_id != it->second) {
      ++rejected_;
      return;
    }
    pool_.handle_message(msg, now);
    if (!pool_.queue_empty()) net.wake_at(self_, now);
  }

  void on_timer(sim::Network& net, SimTime now) override {
    while (next_write_ < writes_.size() && writes_[next_write_].at <= now) {
      const auto& w = writes_[next_write_++];
      pool_.queue_level_write(w.agent_id, MetricRecord{w.target_object(), w.value, 0, 0});
    }
    for (const auto& msg : pool_.tick(now, probe_)) {
      const auto dst = node_of_agent_.find(msg.header.agent_id);
      if (dst == node_of_agent_.end()) continue;
      send_traced(net, trace_, msg, *pool_.keys_for(msg.header.agent_id), channel_, self_,
                  dst->second, now);
    }
    if (const auto next = pool_.next_wakeup(probe_)) net.wake_at(self_, std::max(*next, now));
  }

  std::uint64_t rejected() const { return rejected_; }

 private:
  ManagerPool pool_;
  const ChannelConfig& channel_;
  Trace& trace_;
  bool probe_ = true;
  sim::NodeId self_ = 0;
  std::map<sim::NodeId, std::uint64_t> agent_of_node_;
  std::map<std::uint64_t, sim::NodeId> node_of_agent_;
  std::vector<LevelWrite> writes_;
  std::size_t next_write_ = 0;
  std::uint64_t rejected_ = 0;
};

std::vector<baseline::Outage> outages_of(const Scenario& sc, std::uint64_t agent_id) {
  std::vector<baseline::Outage> out;
  for (const auto& f : sc.failures) {
    if (f.agent_id == agent_id) out.push_back(baseline::Outage{f.fail_at, f.recover_at});
  }
  return out;
}

void drain(sim::Network& net, SimTime until) {
  net.run_until(until);
  while (net.in_flight() > 0) net.run_until(net.now() + std::chrono::seconds(1));
}

}  // namespace

std::uint64_t cnmm_run_seed(std::uint64_t seed) { return sim::substream_seed(seed, kCnmmStream); }
std::uint64_t baseline_run_seed(std::uint64_t seed) {
  return sim::substream_seed(seed, kBaselineStream);
}

CnmmResult run_cnmm(const Scenario& sc) {
  validate(sc);
  CnmmResult result;
  sim::Network net(sc.link, cnmm_run_seed(sc.seed));

  ManagerNode manager(sc.pool, sc.channel, result.trace);
  const auto manager_id = net.add_node(manager, sim::NodeRole::Manager);
  manager.bind(manager_id);

  std::vector<AgentNode> agents;
  agents.reserve(sc.agent_count);
  std::map<std::uint64_t, sim::NodeId> node_of;
  for (const auto id : sc.agent_ids()) {
    AgentConfig cfg;
    cfg.agent_id = id;
    cfg.update_interval = sc.agent.update_interval;
    cfg.trap_retry_limit = sc.agent.trap_retry_limit;
    cfg.trap_retry_backoff = sc.agent.trap_retry_backoff;
    cfg.readvertise_interval = sc.agent.readvertise_interval;
    cfg.keys = sc.keys_for(id);
    agents.emplace_back(std::move(cfg), sc.metrics, sc.channel, outages_of(sc, id), result.trace);
  }
  for (auto& node : agents) {
    const auto id = node.agent().config().agent_id;
    const auto nid = net.add_node(node, sim::NodeRole::Agent);
    node.bind(nid, manager_id);
    node_of[id] = nid;
    manager.pool().provision(id, node.agent().config().keys, sc.metrics);
    manager.attach(id, nid);
  }

  for (const auto& s : sc.samples) net.inject_sample(s.at, node_of.at(s.agent_id), s.object_id, s.value);
  for (const auto& t : expand_traffic(sc)) {
    net.inject_traffic(t.at, sim::TrafficInject{node_of.at(t.agent_id), t.object_id, t.sent,
                                                t.received, t.octets});
  }
  manager.schedule_writes(net, sc.level_writes);
  for (auto& node : agents) node.start(net);

  net.run_until(sc.duration);
  manager.wind_down();
  for (auto& node : agents) node.wind_down(net);
  drain(net, sc.duration + sc.settle);
  result.finished_at = net.now();

  result.stats = net.stats();
  if (!result.stats.conserved()) {
    throw InvariantViolation("simulator lost track of a datagram (sends != deliveries + drops)");
  }
  const auto& pool = manager.pool();
  result.alerts = pool.alerts();
  result.vm_processed = pool.vm_processed();
  result.manager_counters = pool.counters();
  result.manager_rejected_inbound = manager.rejected();

  for (const auto& node : agents) {
    const Agent& a = node.agent();
    const auto id = a.config().agent_id;
    result.agents.push_back(AgentSummary{id, a.registered(), a.pending_traps().size(),
                                         node.rejected(), node.dropped_samples(), a.counters(),
                                         a.events()});
    const auto reg = pool.registry().find(id);
    for (const auto& [object_id, state] : a.metrics()) {
      ObjectTally t;
      t.agent_id = id;
      t.object_id = object_id;
      if (const auto it = node.injected().find(object_id); it != node.injected().end()) {
        t.injected_sent = it->second.first;
        t.injected_received = it->second.second;
      }
      if (const auto it = node.emitted().find(object_id); it != node.emitted().end()) {
        t.emitted_sent = it->second.first;
        t.emitted_received = it->second.second;
      }
      t.residual_sent = state.raw_sent_count;
      t.residual_received = state.raw_received_count;
      if (reg != pool.registry().end()) {
        if (const auto h = reg->second.latest_records.find(object_id);
            h != reg->second.latest_records.end()) {
          t.stored_sent = h->second.total_sent();
          t.stored_received = h->second.total_received();
        }
      }
      if (!t.conserved()) {
        throw InvariantViolation(fmt::format(
            "agent {} object {}: reported plus held packets differ from injected", id, object_id));
      }
      result.tallies.push_back(t);
    }
  }
  return result;
}

baseline::PollingScenario polling_scenario_for(const Scenario& sc) {
  baseline::PollingScenario ps;
  std::map<std::uint64_t, std::size_t> index_of;
  for (const auto id : sc.agent_ids()) {
    index_of[id] = ps.agents.size();
    ps.agents.push_back(baseline::PolledAgent{id, sc.keys_for(id), outages_of(sc, id)});
  }
  ps.link = sc.link;
  ps.poller = sc.poller;
  ps.channel = sc.channel;
  for (const auto& t : expand_traffic(sc)) {
    if (t.octets == 0) continue;
    ps.traffic.push_back(baseline::OctetEvent{t.at, index_of.at(t.agent_id), t.octets});
  }
  ps.duration = sc.duration;
  ps.settle = sc.settle;
  ps.seed = baseline_run_seed(sc.seed);
  return ps;
}

baseline::PollingResult run_baseline(const Scenario& sc) {
  auto result = baseline::run_polling_scenario(polling_scenario_for(sc));
  if (!result.stats.conserved()) {
    throw InvariantViolation("baseline simulator lost track of a datagram");
  }
  return result;
}

RunResult run_scenario(const Scenario& sc) {
  RunResult r;
  r.seed = sc.seed;
  r.cnmm = run_cnmm(sc);
  if (sc.baseline_enabled) r.baseline = run_baseline(sc);
  return r;
}

}  // namespace cnmm
