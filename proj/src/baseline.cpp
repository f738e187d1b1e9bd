#include "cnmm/baseline.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>
#include <stdexcept>

namespace cnmm::baseline {

Counter32 counter_add(Counter32 c, std::uint64_t bytes) {
  return Counter32{static_cast<std::uint32_t>(c.value + bytes)};
}

double poll_estimate(Counter32 prev, Counter32 curr, double interval_s) {
  if (!(interval_s > 0.0)) throw std::invalid_argument("interval must be positive");
  const std::uint32_t delta = curr.value - prev.value;  // modular
  return static_cast<double>(delta) * 8.0 / interval_s;
}

double estimate_ceiling(double interval_s) { return 4294967296.0 * 8.0 / interval_s; }

void validate(const PollerConfig& cfg) {
  if (cfg.poll_interval <= SimTime::zero()) {
    throw std::invalid_argument("poll_interval must be positive");
  }
  if (cfg.sweep_gap < SimTime::zero() || cfg.reply_delay < SimTime::zero()) {
    throw std::invalid_argument("sweep_gap and reply_delay must be non-negative");
  }
}

namespace {

struct Reading {
  SimTime at{0};
  std::uint64_t true_total = 0;
};

class PolledNode : public sim::Node {
 public:
  PolledNode(const PolledAgent& spec, const ChannelConfig& channel, SimTime reply_delay)
      : spec_(spec), channel_(channel), reply_delay_(reply_delay) {}

  void bind(sim::NodeId self, sim::NodeId poller) {
    self_ = self;
    poller_ = poller;
  }

  void on_datagram(sim::Network& net, const sim::Datagram& d, SimTime now) override {
    if (down(now)) return;
    Message request;
    try {
      std::vector<SecureEnvelope> envs;
      for (const auto& bytes : d.envelopes) envs.push_back(decode_envelope(bytes));
      request = unwrap_message(envs, spec_.keys, channel_);
    } catch (const std::exception&) {
      return;
    }
    if (request.header.kind != MessageKind::Get) return;
    pending_.emplace(now + reply_delay_, request.header.sequence);
    net.wake_at(self_, now + reply_delay_);
  }

  void on_timer(sim::Network& net, SimTime now) override {
    while (!pending_.empty() && pending_.begin()->first <= now) {
      const std::uint32_t seq = pending_.begin()->second;
      pending_.erase(pending_.begin());
      if (down(now)) continue;
      reads_[seq] = Reading{now, true_total_};
      MessageHeader h;
      h.kind = MessageKind::RegularUpdate;
      h.agent_id = spec_.agent_id;
      h.sequence = seq;
      h.timestamp_ms = static_cast<std::uint64_t>(now.count());
      Message reply{h, {MetricRecord{kOctetCounterObject, counter_.value, 0, 0}}};
      send(net, reply, now);
    }
  }

  void on_traffic(sim::Network&, const sim::TrafficInject& t, SimTime now) override {
    if (down(now)) return;
    counter_ = counter_add(counter_, t.octets);
    true_total_ += t.octets;
  }

  /// Ground truth recorded when the counter behind reply `seq` was read.
  const Reading* reading(std::uint32_t seq) const {
    const auto it = reads_.find(seq);
    return it == reads_.end() ? nullptr : &it->second;
  }

  std::size_t last_reply_bytes = 0;

 private:
  bool down(SimTime now) const {
    return std::any_of(spec_.outages.begin(), spec_.outages.end(),
                       [&](const Outage& o) { return o.covers(now); });
  }

  void send(sim::Network& net, const Message& msg, SimTime now) {
    sim::Datagram d{self_, poller_, msg.header.kind, {}};
    for (const auto& env : wrap_message(msg, spec_.keys, channel_)) {
      d.envelopes.push_back(encode_envelope(env));
    }
    last_reply_bytes = d.byte_count();
    net.schedule_send(std::move(d), now);
  }

  const PolledAgent& spec_;
  const ChannelConfig& channel_;
  SimTime reply_delay_;
  sim::NodeId self_ = 0;
  sim::NodeId poller_ = 0;
  Counter32 counter_;
  std::uint64_t true_total_ = 0;
  std::multimap<SimTime, std::uint32_t> pending_;
  std::map<std::uint32_t, Reading> reads_;
};

class PollerNode : public sim::Node {
 public:
  PollerNode(const PollingScenario& sc, std::vector<PolledNode>& agents, PollingResult& result)
      : sc_(sc), agents_(agents), result_(result), last_(agents.size()) {
    const auto sweeps = sc.duration / sc.poller.poll_interval;
    for (std::int64_t k = 1; k <= sweeps; ++k) {
      const SimTime start = k * sc.poller.poll_interval;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        schedule_.push_back({start + static_cast<std::int64_t>(i) * sc.poller.sweep_gap, start,
                             i, static_cast<std::uint32_t>(k)});
      }
    }
    std::stable_sort(schedule_.begin(), schedule_.end(),
                     [](const Poll& a, const Poll& b) { return a.at < b.at; });
  }

  void bind(sim::NodeId self, std::vector<sim::NodeId> agent_nodes) {
    self_ = self;
    agent_nodes_ = std::move(agent_nodes);
  }

  void start(sim::Network& net) {
    if (!schedule_.empty()) net.wake_at(self_, schedule_.front().at);
  }

  void on_timer(sim::Network& net, SimTime now) override {
    while (next_ < schedule_.size() && schedule_[next_].at <= now) {
      const Poll& p = schedule_[next_++];
      const auto& agent = sc_.agents[p.agent_index];
      MessageHeader h;
      h.kind = MessageKind::Get;
      h.agent_id = agent.agent_id;
      h.sequence = p.index;
      h.timestamp_ms = static_cast<std::uint64_t>(now.count());
      sim::Datagram d{self_, agent_nodes_[p.agent_index], MessageKind::Get, {}};
      for (const auto& env : wrap_message(Message{h, {}}, agent.keys, sc_.channel)) {
        d.envelopes.push_back(encode_envelope(env));
      }
      result_.request_bytes = d.byte_count();
      sweep_start_[{p.agent_index, p.index}] = p.sweep_start;
      ++result_.polls_sent;
      net.schedule_send(std::move(d), now);
    }
    if (next_ < schedule_.size()) net.wake_at(self_, schedule_[next_].at);
  }

  void on_datagram(sim::Network&, const sim::Datagram& d, SimTime now) override {
    const auto it = std::find(agent_nodes_.begin(), agent_nodes_.end(), d.src);
    if (it == agent_nodes_.end()) return;
    const auto idx = static_cast<std::size_t>(it - agent_nodes_.begin());
    const auto& agent = sc_.agents[idx];
    Message reply;
    try {
      std::vector<SecureEnvelope> envs;
      for (const auto& bytes : d.envelopes) envs.push_back(decode_envelope(bytes));
      reply = unwrap_message(envs, agent.keys, sc_.channel);
    } catch (const std::exception&) {
      return;
    }
    if (reply.header.kind != MessageKind::RegularUpdate || reply.records.empty()) return;
    const std::uint32_t k = reply.header.sequence;
    auto& last = last_[idx];
    if (k <= last.poll_index) return;  // stale, overtaken by a newer reply
    const Reading* truth = agents_[idx].reading(k);
    if (truth == nullptr) return;

    ++result_.replies_received;
    result_.response_bytes = agents_[idx].last_reply_bytes;
    result_.reply_delay_ms.push_back((now - sweep_start_.at({idx, k})).count());

    const Counter32 curr{static_cast<std::uint32_t>(reply.records.front().value_milli)};
    const double nominal_s = static_cast<double>(sc_.poller.poll_interval.count()) / 1000.0;
    RateSample s;
    s.agent_id = agent.agent_id;
    s.poll_index = k;
    s.read_at = truth->at;
    s.actual_gap = truth->at - last.read_at;
    s.missed_polls = k - last.poll_index - 1;
    s.counter = curr.value;
    // Divides by one nominal interval even when polls were missed.
    s.estimate_bps = poll_estimate(last.counter, curr, nominal_s);
    const double gap_s = static_cast<double>(s.actual_gap.count()) / 1000.0;
    s.true_bps = gap_s > 0.0 ? static_cast<double>(truth->true_total - last.true_total) * 8.0 / gap_s
                             : 0.0;
    result_.samples.push_back(s);

    last = Last{k, curr, truth->at, truth->true_total};
  }

 private:
  struct Poll {
    SimTime at;
    SimTime sweep_start;
    std::size_t agent_index;
    std::uint32_t index;
  };
  struct Last {
    std::uint32_t poll_index = 0;
    Counter32 counter;
    SimTime read_at{0};
    std::uint64_t true_total = 0;
  };

  const PollingScenario& sc_;
  std::vector<PolledNode>& agents_;
  PollingResult& result_;
  std::vector<Poll> schedule_;
  std::size_t next_ = 0;
  std::vector<Last> last_;
  std::map<std::pair<std::size_t, std::uint32_t>, SimTime> sweep_start_;
  sim::NodeId self_ = 0;
  std::vector<sim::NodeId> agent_nodes_;
};

}  // namespace

PollingResult run_polling_scenario(const PollingScenario& sc) {
  validate(sc.poller);
  validate(sc.channel);
  sim::validate(sc.link);
  if (sc.duration < sc.poller.poll_interval) {
    throw std::invalid_argument(
        fmt::format("duration {} ms is shorter than one poll interval ({} ms)",
                    sc.duration.count(), sc.poller.poll_interval.count()));
  }
  for (const auto& a : sc.agents) validate(a.keys);

  PollingResult result;
  std::vector<PolledNode> agents;
  agents.reserve(sc.agents.size());
  for (const auto& a : sc.agents) agents.emplace_back(a, sc.channel, sc.poller.reply_delay);
  PollerNode poller(sc, agents, result);

  sim::Network net(sc.link, sc.seed);
  const auto poller_id = net.add_node(poller, sim::NodeRole::Manager);
  std::vector<sim::NodeId> agent_ids;
  for (auto& a : agents) {
    const auto id = net.add_node(a, sim::NodeRole::Agent);
    a.bind(id, poller_id);
    agent_ids.push_back(id);
  }
  poller.bind(poller_id, agent_ids);

  for (const auto& ev : sc.traffic) {
    if (ev.agent_index >= agents.size()) {
      throw std::invalid_argument(fmt::format("traffic for unknown agent index {}", ev.agent_index));
    }
    net.inject_traffic(ev.at, sim::TrafficInject{agent_ids[ev.agent_index], kOctetCounterObject,
                                                 0, 0, ev.octets});
  }
  poller.start(net);

  net.run_until(sc.duration + sc.settle);
  while (net.in_flight() > 0) net.run_until(net.now() + std::chrono::seconds(1));
  result.stats = net.stats();
  return result;
}

}  // namespace cnmm::baseline
