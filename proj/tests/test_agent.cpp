#include "doctest.h"

#include <limits>

#include "cnmm/agent.hpp"
#include "support.hpp"

using namespace cnmm;
using namespace std::chrono_literals;
using cnmm::testing::Gen;

namespace {

const MetricSpec kSpec{1, "headroom", 65000, 40000, std::nullopt};

AgentConfig config(std::uint64_t id = 11) {
  AgentConfig c;
  c.agent_id = id;
  return c;
}

Message reply(MessageKind kind, std::uint32_t seq, std::uint64_t agent = 11) {
  Message m;
  m.header.kind = kind;
  m.header.agent_id = agent;
  m.header.sequence = seq;
  return m;
}

Agent registered_agent(std::vector<MetricSpec> specs = {kSpec}) {
  Agent a(config(), specs);
  a.advertise(0ms);
  a.handle_message(reply(MessageKind::Registration, 0), 0ms);
  return a;
}

std::size_t count_kind(const std::vector<Message>& msgs, MessageKind kind) {
  return static_cast<std::size_t>(std::count_if(
      msgs.begin(), msgs.end(), [&](const Message& m) { return m.header.kind == kind; }));
}

template <class Fn>
AgentErrc agent_error(Fn&& fn) {
  try {
    fn();
  } catch (const AgentError& e) {
    return e.code();
  }
  FAIL("no AgentError");
  return AgentErrc::UnexpectedKind;
}

}  // namespace

TEST_CASE("metric spec invariants") {
  CHECK(kSpec.effective_hysteresis() == 1250);
  CHECK_NOTHROW(validate(kSpec));
  CHECK_THROWS_AS(validate(MetricSpec{1, "x", 10, 10, {}}), std::invalid_argument);
  CHECK_THROWS_AS(validate(MetricSpec{1, "x", 10, 20, {}}), std::invalid_argument);
  CHECK_THROWS_AS(validate(MetricSpec{1, "x", 20, 10, -1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(MetricSpec{kMinimumLevelBit, "x", 20, 10, {}}), std::invalid_argument);
  CHECK_THROWS_AS(Agent(config(), {kSpec, kSpec}), std::invalid_argument);
}

TEST_CASE("advertisement and registration") {
  Agent a(config(), {kSpec});
  const auto first = a.advertise(0ms);
  CHECK(first.header.kind == MessageKind::Advertisement);
  CHECK(first.header.sequence == 0);
  CHECK((first.header.flags & flags::kAckRequired) != 0);
  CHECK_FALSE(a.registered());

  SUBCASE("re-advertises after 10 s until registered") {
    CHECK(a.tick(9999ms).empty());
    const auto again = a.tick(10s);
    REQUIRE(again.size() == 1);
    CHECK(again[0].header.kind == MessageKind::Advertisement);
    CHECK(again[0].header.sequence == 1);
    CHECK(a.advertise(11s).header.sequence == 2);
  }
  SUBCASE("registration stops re-advertising") {
    CHECK(a.handle_message(reply(MessageKind::Registration, 0), 1s).empty());
    CHECK(a.registered());
    CHECK(a.tick(10s).empty());
    CHECK(agent_error([&] { a.advertise(20s); }) == AgentErrc::AlreadyRegistered);
  }
}

TEST_CASE("minimum-level crossing emits one RegularUpdate") {
  auto a = registered_agent();
  CHECK(a.observe_sample(1, 80000, 1s).empty());
  const auto out = a.observe_sample(1, 60000, 2s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].header.kind == MessageKind::RegularUpdate);
  CHECK(a.metric(1).zone == Zone::Warned);
}

TEST_CASE("crossing both levels at once emits only the Trap") {
  auto a = registered_agent();
  a.observe_sample(1, 80000, 1s);
  const auto out = a.observe_sample(1, 30000, 2s);
  CHECK(count_kind(out, MessageKind::Trap) == 1);
  CHECK(count_kind(out, MessageKind::RegularUpdate) == 0);
  CHECK((out[0].header.flags & flags::kAckRequired) != 0);
  CHECK(a.metric(1).zone == Zone::Critical);
  CHECK(a.pending_traps().size() == 1);
}

TEST_CASE("hysteresis: no re-fire without re-arm") {
  auto a = registered_agent();
  std::size_t updates = 0;
  for (std::int64_t v : {60000, 62000, 60000}) updates += a.observe_sample(1, v, 1s).size();
  CHECK(updates == 1);

  // 65000 + 1250 re-arms; the next dip fires again.
  CHECK(a.observe_sample(1, 66249, 2s).empty());
  CHECK(a.metric(1).zone == Zone::Warned);
  CHECK(a.observe_sample(1, 66250, 3s).empty());
  CHECK(a.metric(1).zone == Zone::Normal);
  CHECK(a.observe_sample(1, 64999, 4s).size() == 1);
}

TEST_CASE("Warned then Critical fires a Trap; Critical does not re-fire") {
  auto a = registered_agent();
  CHECK(count_kind(a.observe_sample(1, 50000, 1s), MessageKind::RegularUpdate) == 1);
  CHECK(count_kind(a.observe_sample(1, 39999, 2s), MessageKind::Trap) == 1);
  CHECK(a.observe_sample(1, 10000, 3s).empty());
  CHECK(a.observe_sample(1, 50000, 4s).empty());
  CHECK(a.metric(1).zone == Zone::Critical);
}

TEST_CASE("sample errors") {
  Agent a(config(), {kSpec});
  CHECK(agent_error([&] { a.observe_sample(1, 0, 0ms); }) == AgentErrc::NotRegistered);
  auto b = registered_agent();
  CHECK(agent_error([&] { b.observe_sample(2, 0, 0ms); }) == AgentErrc::UnknownObject);
  CHECK(agent_error([&] { b.record_traffic(2, 1, 1); }) == AgentErrc::UnknownObject);
}

TEST_CASE("traffic tallies drain into interval deltas") {
  auto a = registered_agent();
  a.record_traffic(1, 100, 7);
  a.record_traffic(1, 50, 3);
  const auto first = a.tick(300s);
  REQUIRE(first.size() == 1);
  CHECK(first[0].records[0].interval_packets_sent == 150);
  CHECK(first[0].records[0].interval_packets_received == 10);
  CHECK(a.metric(1).raw_sent_count == 0);

  const auto second = a.tick(600s);
  REQUIRE(second.size() == 1);
  CHECK(second[0].records[0].interval_packets_sent == 0);
  CHECK(second[0].records[0].interval_packets_received == 0);
}

TEST_CASE("tallies saturate instead of wrapping") {
  auto a = registered_agent();
  const auto max = std::numeric_limits<std::uint64_t>::max();
  a.record_traffic(1, max - 5, 0);
  a.record_traffic(1, 100, 0);
  CHECK(a.metric(1).raw_sent_count == max);
}

TEST_CASE("periodic update timer") {
  auto a = registered_agent();
  CHECK(a.tick(299999ms).empty());
  const auto out = a.tick(300s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].header.kind == MessageKind::RegularUpdate);
  CHECK(out[0].records.size() == 1);
  CHECK(a.next_update_deadline() == 600s);
  CHECK(a.next_wakeup() == 600s);

  SUBCASE("missed deadlines collapse into one update") {
    CHECK(a.tick(1250s).size() == 1);
    CHECK(a.next_update_deadline() == 1500s);
  }
  SUBCASE("a Get answers with an update and restarts the timer") {
    const auto r = a.handle_message(reply(MessageKind::Get, 0), 400s);
    REQUIRE(r.size() == 1);
    CHECK(r[0].header.kind == MessageKind::RegularUpdate);
    CHECK(a.next_update_deadline() == 700s);
  }
  SUBCASE("retransmit-only ticks skip the timer") {
    CHECK(a.tick(600s, TickScope::RetransmitOnly).empty());
    CHECK_FALSE(a.next_wakeup(TickScope::RetransmitOnly).has_value());
  }
}

TEST_CASE("unacknowledged trap: five retransmissions then TrapAbandoned") {
  auto a = registered_agent();
  const auto trap = a.observe_sample(1, 0, 1000ms);
  REQUIRE(trap.size() == 1);
  const auto seq = trap[0].header.sequence;

  std::vector<SimTime> sent_at;
  for (SimTime t = 1000ms; t <= 200s; t += 1ms) {
    for (const auto& m : a.tick(t, TickScope::RetransmitOnly)) {
      CHECK(m.header.kind == MessageKind::Trap);
      CHECK(m.header.sequence == seq);
      CHECK((m.header.flags & flags::kRetransmission) != 0);
      sent_at.push_back(t);
    }
  }
  CHECK(sent_at == std::vector<SimTime>{3s, 7s, 15s, 31s, 63s});
  CHECK(a.pending_traps().empty());
  REQUIRE(a.events().size() == 1);
  CHECK(a.events()[0].type == AgentEvent::Type::TrapAbandoned);
  CHECK(a.events()[0].at == 127s);
}

TEST_CASE("TrapReply clears the pending trap and records latency") {
  auto a = registered_agent();
  const auto seq = a.observe_sample(1, 0, 1s)[0].header.sequence;
  CHECK(a.handle_message(reply(MessageKind::TrapReply, seq + 5), 2s).empty());
  CHECK(a.pending_traps().size() == 1);
  a.handle_message(reply(MessageKind::TrapReply, seq), 1250ms);
  CHECK(a.pending_traps().empty());
  REQUIRE(a.events().size() == 1);
  CHECK(a.events()[0].type == AgentEvent::Type::TrapAcked);
  CHECK(a.events()[0].latency == 250ms);
}

TEST_CASE("ActionSet writes levels") {
  auto a = registered_agent();
  auto set = reply(MessageKind::ActionSet, 1);
  set.records = {MetricRecord{1 | kMinimumLevelBit, 70000, 0, 0},
                 MetricRecord{1 | kThresholdLevelBit, 45000, 0, 0}};
  CHECK(a.handle_message(set, 1s).empty());
  CHECK(a.metric(1).spec.minimum_level == 70000);
  CHECK(a.metric(1).spec.threshold_level == 45000);
  CHECK(a.counters().actionsets_received == 1);

  SUBCASE("unknown targets and invalid geometry are rejected and counted") {
    auto bad = reply(MessageKind::ActionSet, 2);
    bad.records = {MetricRecord{9 | kMinimumLevelBit, 1, 0, 0},
                   MetricRecord{1, 1, 0, 0},
                   MetricRecord{1 | kThresholdLevelBit, 80000, 0, 0}};
    CHECK(a.handle_message(bad, 2s).empty());
    CHECK(a.counters().action_errors == 3);
    CHECK(a.metric(1).spec.threshold_level == 45000);
  }
}

TEST_CASE("agent-originated kinds are unexpected") {
  auto a = registered_agent();
  for (auto k : {MessageKind::RegularUpdate, MessageKind::Trap, MessageKind::Advertisement}) {
    CHECK(agent_error([&] { a.handle_message(reply(k, 0), 1s); }) == AgentErrc::UnexpectedKind);
  }
}

TEST_CASE("property: sequence numbers rise by one and traffic is conserved") {
  Gen gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MetricSpec> specs{MetricSpec{1, "a", 65000, 40000, {}},
                                  MetricSpec{2, "b", 5000, -5000, 100}};
    auto a = registered_agent(specs);
    std::vector<Message> emitted;
    std::map<std::uint32_t, std::uint64_t> recorded, reported;
    SimTime now = 1s;
    for (int step = 0; step < 400; ++step) {
      now += SimTime(1 + static_cast<std::int64_t>(gen.below(20000)));
      const std::uint32_t obj = 1 + static_cast<std::uint32_t>(gen.below(2));
      std::vector<Message> out;
      switch (gen.below(4)) {
        case 0: {
          const auto sent = gen.below(1000);
          a.record_traffic(obj, sent, 0);
          recorded[obj] += sent;
          break;
        }
        case 1: {
          const auto& spec = a.metric(obj).spec;
          const auto span = spec.minimum_level - spec.threshold_level;
          out = a.observe_sample(obj, spec.threshold_level - span +
                                          static_cast<std::int64_t>(gen.below(4 * span)), now);
          break;
        }
        case 2: out = a.tick(now); break;
        default:
          if (!a.pending_traps().empty() && gen.coin()) {
            a.handle_message(reply(MessageKind::TrapReply, a.pending_traps().begin()->first), now);
          }
          break;
      }
      for (auto& m : out) {
        const bool first = (m.header.flags & flags::kRetransmission) == 0;
        if (first) {
          if (!emitted.empty()) REQUIRE(m.header.sequence == emitted.back().header.sequence + 1);
          for (const auto& r : m.records) reported[r.object_id] += r.interval_packets_sent;
          emitted.push_back(m);
        }
      }
    }
    for (const auto& [obj, total] : recorded) {
      REQUIRE(reported[obj] + a.metric(obj).raw_sent_count == total);
    }
  }
}

TEST_CASE("property: a single sample never yields both an update and a trap") {
  Gen gen(78);
  for (int trial = 0; trial < 2000; ++trial) {
    auto a = registered_agent();
    a.observe_sample(1, 40000 + static_cast<std::int64_t>(gen.below(60000)), 1s);
    const auto out = a.observe_sample(1, static_cast<std::int64_t>(gen.below(100000)), 2s);
    REQUIRE(out.size() <= 1);
    if (!out.empty() && a.metric(1).zone == Zone::Critical) {
      REQUIRE(out[0].header.kind == MessageKind::Trap);
    }
  }
}
