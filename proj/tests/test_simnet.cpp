#include "doctest.h"

#include <string>

#include "cnmm/simnet.hpp"
#include "support.hpp"

using namespace cnmm;
using namespace cnmm::sim;
using namespace std::chrono_literals;
using cnmm::testing::Gen;

namespace {

struct Recorder : Node {
  std::vector<std::pair<SimTime, std::uint8_t>> arrivals;
  std::vector<SimTime> timers;
  std::vector<std::string> log;

  void on_datagram(Network&, const Datagram& d, SimTime now) override {
    arrivals.emplace_back(now, d.envelopes.front().front());
    log.push_back("datagram");
  }
  void on_timer(Network&, SimTime now) override {
    timers.push_back(now);
    log.push_back("timer");
  }
  void on_sample(Network&, std::uint32_t, std::int64_t, SimTime) override {
    log.push_back("sample");
  }
  void on_traffic(Network&, const TrafficInject&, SimTime) override { log.push_back("traffic"); }
};

Datagram datagram(NodeId src, NodeId dst, std::uint8_t tag = 0,
                  MessageKind kind = MessageKind::RegularUpdate) {
  return Datagram{src, dst, kind, {std::vector<std::uint8_t>(10, tag)}};
}

struct Pair {
  Recorder manager;
  Recorder agent;
  Network net;
  NodeId m;
  NodeId a;

  Pair(LinkModel link, std::uint64_t seed)
      : net(link, seed),
        m(net.add_node(manager, NodeRole::Manager)),
        a(net.add_node(agent, NodeRole::Agent)) {}
};

}  // namespace

TEST_CASE("substream seeds match the SplitMix64 reference") {
  CHECK(substream_seed(42, 1) == 17532488217563185893ULL);
  CHECK(link_id(1, 2) == 0x0000000100000002ULL);
}

TEST_CASE("a lossless jitter-free link delivers after exactly the base latency") {
  Pair p(LinkModel{10, 0, 0.0, true}, 1);
  p.net.run_until(5ms);
  p.net.schedule_send(datagram(p.a, p.m), 5ms);
  p.net.run_until(14ms);
  CHECK(p.manager.arrivals.empty());
  p.net.run_until(15ms);
  REQUIRE(p.manager.arrivals.size() == 1);
  CHECK(p.manager.arrivals[0].first == 15ms);
}

TEST_CASE("loss probability one drops every send") {
  Pair p(LinkModel{1, 0, 1.0, true}, 9);
  for (int i = 0; i < 50; ++i) p.net.schedule_send(datagram(p.a, p.m), 0ms);
  const auto& s = p.net.run_until(1s);
  CHECK(s.upstream.sends == 50);
  CHECK(s.upstream.drops == 50);
  CHECK(s.upstream.deliveries == 0);
  CHECK(p.manager.arrivals.empty());
}

TEST_CASE("seeded loss on one link matches the independent PRNG model") {
  Pair p(LinkModel{1, 0, 0.3, true}, 42);
  // Nodes 0 and 1 are the manager and the agent in that order.
  for (int i = 0; i < 1000; ++i) {
    p.net.schedule_send(datagram(0, 1), 0ms);
    p.net.schedule_send(datagram(1, 0), 0ms);
  }
  const auto& s = p.net.run_until(1s);
  CHECK(s.per_link.at(link_id(0, 1)).drops == 270);
  CHECK(s.per_link.at(link_id(1, 0)).drops == 316);
  CHECK(s.downstream.drops == 270);
  CHECK(s.upstream.drops == 316);
}

TEST_CASE("link streams are independent of traffic on other links") {
  auto drops_on_0_to_1 = [](bool busy_reverse) {
    Pair p(LinkModel{1, 0, 0.5, true}, 5);
    for (int i = 0; i < 200; ++i) {
      p.net.schedule_send(datagram(0, 1), 0ms);
      if (busy_reverse) p.net.schedule_send(datagram(1, 0), 0ms);
    }
    return p.net.run_until(1s).per_link.at(link_id(0, 1)).drops;
  };
  CHECK(drops_on_0_to_1(false) == drops_on_0_to_1(true));
}

TEST_CASE("an empty queue runs to completion with zero statistics") {
  Network net(LinkModel{}, 3);
  const auto& s = net.run_until(1h);
  CHECK(s == SimStats{});
  CHECK(net.now() == 1h);
  CHECK(net.events_executed() == 0);
}

TEST_CASE("equal-time events run in insertion order") {
  Recorder r;
  Network net(LinkModel{0, 0, 0.0, true}, 1);
  const auto n = net.add_node(r, NodeRole::Agent);
  net.inject_sample(10ms, n, 1, 0);
  net.wake_at(n, 10ms);
  net.inject_traffic(10ms, TrafficInject{n, 1, 1, 1, 1});
  net.schedule_send(datagram(n, n), 10ms);
  net.run_until(10ms);
  CHECK(r.log == std::vector<std::string>{"sample", "timer", "traffic", "datagram"});
}

TEST_CASE("timer requests for the same node and time coalesce") {
  Recorder r;
  Network net(LinkModel{}, 1);
  const auto n = net.add_node(r, NodeRole::Agent);
  net.wake_at(n, 5ms);
  net.wake_at(n, 5ms);
  net.wake_at(n, 6ms);
  CHECK(net.pending_events() == 2);
  net.run_until(5ms);
  net.wake_at(n, 5ms);
  net.run_until(10ms);
  CHECK(r.timers == std::vector<SimTime>{5ms, 5ms, 6ms});
}

TEST_CASE("wake requests in the past fire at the current time") {
  Recorder r;
  Network net(LinkModel{}, 1);
  const auto n = net.add_node(r, NodeRole::Agent);
  net.run_until(100ms);
  net.wake_at(n, 10ms);
  net.run_until(100ms);
  CHECK(r.timers == std::vector<SimTime>{100ms});
}

TEST_CASE("scheduling behind the clock is a logic error") {
  Recorder r;
  Network net(LinkModel{}, 1);
  const auto n = net.add_node(r, NodeRole::Agent);
  net.run_until(50ms);
  CHECK_THROWS_AS(net.inject_sample(10ms, n, 1, 0), std::logic_error);
}

TEST_CASE("unknown nodes are rejected") {
  Recorder r;
  Network net(LinkModel{}, 1);
  const auto n = net.add_node(r, NodeRole::Agent);
  CHECK_THROWS_AS(net.schedule_send(datagram(n, 7), 0ms), UnknownNode);
  CHECK_THROWS_AS(net.wake_at(3, 0ms), UnknownNode);
  CHECK_THROWS_AS(net.inject_sample(0ms, 2, 1, 0), UnknownNode);
}

TEST_CASE("link models are validated") {
  CHECK_THROWS_AS(Network(LinkModel{-1, 0, 0.0, true}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Network(LinkModel{0, -1, 0.0, true}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Network(LinkModel{0, 0, 1.5, true}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Network(LinkModel{0, 0, -0.1, true}, 1), std::invalid_argument);
}

TEST_CASE("statistics split by direction and kind") {
  Pair p(LinkModel{2, 0, 0.0, true}, 1);
  auto d = datagram(p.a, p.m, 0, MessageKind::Trap);
  d.envelopes.push_back(std::vector<std::uint8_t>(5, 0));
  p.net.schedule_send(d, 0ms);
  p.net.schedule_send(datagram(p.m, p.a, 0, MessageKind::TrapReply), 0ms);
  const auto& s = p.net.run_until(10ms);
  CHECK(s.upstream.sends == 1);
  CHECK(s.upstream.packets == 2);
  CHECK(s.upstream.bytes == 15);
  CHECK(s.upstream.bytes_delivered == 15);
  CHECK(s.downstream.sends == 1);
  CHECK(s.downstream.bytes == 10);
  CHECK(s.sends_of(MessageKind::Trap) == 1);
  CHECK(s.sends_of(MessageKind::TrapReply) == 1);
  CHECK(s.sends_of(MessageKind::Get) == 0);
  CHECK(p.net.in_flight() == 0);
}

TEST_CASE("property: jitter stays within its bound and ordering follows allow_reorder") {
  Gen gen(0x51A);
  for (int trial = 0; trial < 40; ++trial) {
    const bool reorder = trial % 2 == 0;
    const std::int64_t base = static_cast<std::int64_t>(gen.below(50));
    const std::int64_t jitter = 1 + static_cast<std::int64_t>(gen.below(100));
    Pair p(LinkModel{base, jitter, 0.0, reorder}, gen.u64());
    std::vector<SimTime> sent_at;
    SimTime t{0};
    for (int i = 0; i < 100; ++i) {
      t += SimTime{static_cast<std::int64_t>(gen.below(20))};
      p.net.run_until(t);
      p.net.schedule_send(datagram(p.a, p.m, static_cast<std::uint8_t>(i)), t);
      sent_at.push_back(t);
    }
    p.net.run_until(t + 1s);
    REQUIRE(p.manager.arrivals.size() == 100);
    bool in_order = true;
    for (std::size_t i = 0; i < p.manager.arrivals.size(); ++i) {
      const auto [at, tag] = p.manager.arrivals[i];
      const auto delay = (at - sent_at[tag]).count();
      REQUIRE(delay >= base);
      if (reorder) REQUIRE(delay <= base + jitter);
      if (tag != i) in_order = false;
    }
    if (!reorder) REQUIRE(in_order);
  }
}

TEST_CASE("property: sends equal deliveries plus drops and replays are identical") {
  Gen gen(0xC0C0);
  for (int trial = 0; trial < 30; ++trial) {
    const LinkModel link{static_cast<std::int64_t>(gen.below(30)),
                         static_cast<std::int64_t>(gen.below(30)),
                         static_cast<double>(gen.below(101)) / 100.0, gen.coin()};
    const auto seed = gen.u64();
    const auto plan_seed = gen.u64();
    auto run = [&] {
      Gen plan(plan_seed);
      Recorder m, a1, a2;
      Network net(link, seed);
      std::vector<NodeId> ids = {net.add_node(m, NodeRole::Manager),
                                 net.add_node(a1, NodeRole::Agent),
                                 net.add_node(a2, NodeRole::Agent)};
      SimTime t{0};
      for (int i = 0; i < 300; ++i) {
        t += SimTime{static_cast<std::int64_t>(plan.below(5))};
        net.run_until(t);
        const auto src = ids[plan.below(3)];
        const auto dst = ids[plan.below(3)];
        net.schedule_send(datagram(src, dst, 0, plan.kind()), t);
      }
      const auto stats = net.run_until(t + 1s);
      REQUIRE(net.in_flight() == 0);
      return stats;
    };
    const auto first = run();
    REQUIRE(first.conserved());
    REQUIRE(first.total().sends == 300);
    REQUIRE(run() == first);
  }
}
