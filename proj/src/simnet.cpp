#include "cnmm/simnet.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

namespace cnmm::sim {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t substream_seed(std::uint64_t root, std::uint64_t id) {
  return mix64(mix64(root) ^ id);
}

void validate(const LinkModel& link) {
  if (link.base_latency_ms < 0 || link.jitter_ms < 0) {
    throw std::invalid_argument("latency and jitter must be non-negative");
  }
  if (!(link.loss_prob >= 0.0 && link.loss_prob <= 1.0)) {
    throw std::invalid_argument("loss_prob must lie in [0, 1]");
  }
}

std::size_t Datagram::byte_count() const {
  return std::accumulate(envelopes.begin(), envelopes.end(), std::size_t{0},
                         [](std::size_t n, const auto& e) { return n + e.size(); });
}

TrafficCounters SimStats::total() const {
  TrafficCounters t;
  for (const auto* c : {&upstream, &downstream}) {
    t.sends += c->sends;
    t.deliveries += c->deliveries;
    t.drops += c->drops;
    t.packets += c->packets;
    t.bytes += c->bytes;
    t.bytes_delivered += c->bytes_delivered;
  }
  return t;
}

bool SimStats::conserved() const {
  auto ok = [](const TrafficCounters& c) { return c.sends == c.deliveries + c.drops; };
  return ok(upstream) && ok(downstream) &&
         std::all_of(per_link.begin(), per_link.end(), [&](const auto& kv) { return ok(kv.second); });
}

Network::Network(LinkModel link, std::uint64_t seed) : link_(link), seed_(seed) {
  validate(link_);
}

NodeId Network::add_node(Node& node, NodeRole role) {
  nodes_.push_back(&node);
  roles_.push_back(role);
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Network::check_node(NodeId id) const {
  if (id >= nodes_.size()) throw UnknownNode(fmt::format("node {}", id));
}

Network::LinkState& Network::link_state(NodeId src, NodeId dst) {
  const auto id = link_id(src, dst);
  auto it = links_.find(id);
  if (it == links_.end()) {
    it = links_.emplace(id, LinkState{std::mt19937_64(substream_seed(seed_, id)), SimTime{0}})
             .first;
  }
  return it->second;
}

TrafficCounters& Network::direction_counters(NodeId src) {
  return roles_[src] == NodeRole::Agent ? stats_.upstream : stats_.downstream;
}

void Network::push(SimTime at, decltype(SimEvent::kind) kind) {
  if (at < now_) {
    throw std::logic_error(
        fmt::format("event at {} ms scheduled in the past (now {} ms)", at.count(), now_.count()));
  }
  queue_.push(SimEvent{at, next_seq_++, std::move(kind)});
}

void Network::schedule_send(Datagram d, SimTime now) {
  check_node(d.src);
  check_node(d.dst);
  auto& link = link_state(d.src, d.dst);
  auto& dir = direction_counters(d.src);
  auto& per_link = stats_.per_link[link_id(d.src, d.dst)];
  const auto bytes = d.byte_count();

  for (auto* c : {&dir, &per_link}) {
    ++c->sends;
    c->packets += d.packet_count();
    c->bytes += bytes;
  }
  ++stats_.sends_by_kind[static_cast<std::size_t>(d.kind) - 1];

  const double u = static_cast<double>(link.rng() >> 11) * 0x1.0p-53;
  if (u < link_.loss_prob) {
    ++dir.drops;
    ++per_link.drops;
    return;
  }
  std::int64_t delay = link_.base_latency_ms;
  if (link_.jitter_ms > 0) {
    delay += static_cast<std::int64_t>(link.rng() % static_cast<std::uint64_t>(link_.jitter_ms + 1));
  }
  SimTime at = now + SimTime{delay};
  if (!link_.allow_reorder) at = std::max(at, link.last_delivery);
  link.last_delivery = at;
  push(at, Deliver{std::move(d)});
}

void Network::wake_at(NodeId node, SimTime at) {
  check_node(node);
  at = std::max(at, now_);
  if (!pending_timers_.emplace(node, at.count()).second) return;
  push(at, TimerFire{node});
}

void Network::inject_sample(SimTime at, NodeId node, std::uint32_t object_id,
                            std::int64_t value) {
  check_node(node);
  push(at, SampleInject{node, object_id, value});
}

void Network::inject_traffic(SimTime at, const TrafficInject& t) {
  check_node(t.node);
  push(at, t);
}

const SimStats& Network::run_until(SimTime t_end) {
  while (!queue_.empty() && queue_.top().at <= t_end) {
    SimEvent ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    ++executed_;
    std::visit(
        [&](auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, Deliver>) {
            auto& d = e.datagram;
            auto& dir = direction_counters(d.src);
            auto& per_link = stats_.per_link[link_id(d.src, d.dst)];
            const auto bytes = d.byte_count();
            ++dir.deliveries;
            ++per_link.deliveries;
            dir.bytes_delivered += bytes;
            per_link.bytes_delivered += bytes;
            nodes_[d.dst]->on_datagram(*this, d, now_);
          } else if constexpr (std::is_same_v<T, TimerFire>) {
            pending_timers_.erase({e.node, now_.count()});
            nodes_[e.node]->on_timer(*this, now_);
          } else if constexpr (std::is_same_v<T, SampleInject>) {
            nodes_[e.node]->on_sample(*this, e.object_id, e.value, now_);
          } else {
            nodes_[e.node]->on_traffic(*this, e, now_);
          }
        },
        ev.kind);
  }
  now_ = std::max(now_, t_end);
  return stats_;
}

}  // namespace cnmm::sim
