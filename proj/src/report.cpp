#include "cnmm/report.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace cnmm {

using oj = nlohmann::ordered_json;

namespace {

oj counters_json(const sim::TrafficCounters& c) {
  return oj{{"sends", c.sends},         {"deliveries", c.deliveries},
            {"drops", c.drops},         {"packets", c.packets},
            {"bytes", c.bytes},         {"bytes_delivered", c.bytes_delivered}};
}

oj stats_json(const sim::SimStats& s) {
  oj by_kind = oj::object();
  for (std::size_t k = 1; k <= kMessageKindCount; ++k) {
    const auto kind = static_cast<MessageKind>(k);
    by_kind[std::string(to_string(kind))] = s.sends_of(kind);
  }
  oj links = oj::array();
  for (const auto& [id, c] : s.per_link) {
    auto entry = counters_json(c);
    entry["src"] = id >> 32;
    entry["dst"] = id & 0xFFFF'FFFFu;
    links.push_back(entry);
  }
  return oj{{"upstream", counters_json(s.upstream)},
            {"downstream", counters_json(s.downstream)},
            {"sends_by_kind", by_kind},
            {"per_link", links}};
}

oj distribution_json(const std::vector<double>& values) {
  if (values.empty()) return nullptr;
  return oj{{"count", values.size()},
            {"p50", *percentile(values, 50)},
            {"p90", *percentile(values, 90)},
            {"p99", *percentile(values, 99)},
            {"max", *std::max_element(values.begin(), values.end())}};
}

oj cnmm_json(const CnmmResult& r) {
  oj out;
  const auto total = r.stats.total();
  out["messages"] = total.sends;
  out["bytes"] = total.bytes;
  out["stats"] = stats_json(r.stats);

  oj alerts = oj::array();
  for (const auto& a : r.alerts) {
    alerts.push_back({{"agent_id", a.agent_id},
                      {"reason", to_string(a.reason)},
                      {"at_ms", a.at.count()},
                      {"detail", a.detail}});
  }
  out["alerts"] = alerts;

  std::uint64_t emitted = 0, retransmissions = 0, acked = 0, abandoned = 0, pending = 0;
  std::uint64_t registered = 0, agent_rejected = 0, early_samples = 0;
  std::vector<double> latency;
  for (const auto& a : r.agents) {
    emitted += a.counters.traps_sent;
    retransmissions += a.counters.trap_retransmissions;
    pending += a.pending_traps;
    registered += a.registered ? 1 : 0;
    agent_rejected += a.rejected_inbound;
    early_samples += a.samples_before_registration;
    for (const auto& e : a.events) {
      if (e.type == AgentEvent::Type::TrapAcked) {
        ++acked;
        latency.push_back(static_cast<double>(e.latency.count()));
      } else if (e.type == AgentEvent::Type::TrapAbandoned) {
        ++abandoned;
      }
    }
  }
  out["traps"] = {{"emitted", emitted},
                  {"retransmissions", retransmissions},
                  {"acked", acked},
                  {"abandoned", abandoned},
                  {"pending", pending}};
  out["trap_latency_ms"] = distribution_json(latency);
  out["vm_processed"] = r.vm_processed;
  out["manager"] = {{"accepted", r.manager_counters.accepted},
                    {"duplicates", r.manager_counters.duplicates},
                    {"unknown_agent", r.manager_counters.unknown_agent},
                    {"unexpected_kind", r.manager_counters.unexpected_kind},
                    {"gets_sent", r.manager_counters.gets_sent},
                    {"rejected_inbound", r.manager_rejected_inbound}};
  out["agents"] = {{"count", r.agents.size()},
                   {"registered", registered},
                   {"rejected_inbound", agent_rejected},
                   {"samples_before_registration", early_samples}};

  ObjectTally sum;
  bool exact = true;
  for (const auto& t : r.tallies) {
    sum.injected_sent += t.injected_sent;
    sum.injected_received += t.injected_received;
    sum.emitted_sent += t.emitted_sent;
    sum.emitted_received += t.emitted_received;
    sum.residual_sent += t.residual_sent;
    sum.residual_received += t.residual_received;
    sum.stored_sent += t.stored_sent;
    sum.stored_received += t.stored_received;
    exact = exact && t.conserved();
  }
  out["packet_conservation"] = {{"objects", r.tallies.size()},
                                {"injected_sent", sum.injected_sent},
                                {"injected_received", sum.injected_received},
                                {"emitted_sent", sum.emitted_sent},
                                {"emitted_received", sum.emitted_received},
                                {"residual_sent", sum.residual_sent},
                                {"residual_received", sum.residual_received},
                                {"stored_sent", sum.stored_sent},
                                {"stored_received", sum.stored_received},
                                {"exact", exact}};
  out["finished_at_ms"] = r.finished_at.count();
  return out;
}

oj baseline_json(const baseline::PollingResult& r, double interval_s) {
  oj out;
  const auto total = r.stats.total();
  out["messages"] = total.sends;
  out["bytes"] = total.bytes;
  out["stats"] = stats_json(r.stats);
  out["polls_sent"] = r.polls_sent;
  out["replies_received"] = r.replies_received;
  out["message_sizes"] = {{"request_bytes", r.request_bytes},
                          {"response_bytes", r.response_bytes}};
  std::vector<double> delays(r.reply_delay_ms.begin(), r.reply_delay_ms.end());
  out["reply_delay_ms"] = distribution_json(delays);
  out["estimate_ceiling_bps"] = baseline::estimate_ceiling(interval_s);

  double max_error = 0.0;
  oj samples = oj::array();
  for (const auto& s : r.samples) {
    max_error = std::max(max_error, std::fabs(s.estimate_bps - s.true_bps));
    samples.push_back({{"agent_id", s.agent_id},
                       {"poll", s.poll_index},
                       {"read_at_ms", s.read_at.count()},
                       {"gap_ms", s.actual_gap.count()},
                       {"missed_polls", s.missed_polls},
                       {"counter", s.counter},
                       {"estimate_bps", s.estimate_bps},
                       {"true_bps", s.true_bps}});
  }
  out["max_rate_error_bps"] = max_error;
  out["rate_samples"] = samples;
  return out;
}

const nlohmann::json& member(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ReportError(fmt::format("malformed report: missing {}/{}", where, key));
  }
  return j.at(key);
}

std::uint64_t count_at(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = member(j, key, where);
  if (!v.is_number_unsigned()) {
    throw ReportError(fmt::format("malformed report: {}/{} is not a count", where, key));
  }
  return v.get<std::uint64_t>();
}

std::pair<std::uint64_t, std::uint64_t> totals_from_stats(const nlohmann::json& stats,
                                                          const std::string& where) {
  const auto& up = member(stats, "upstream", where);
  const auto& down = member(stats, "downstream", where);
  return {count_at(up, "sends", where + "/upstream") + count_at(down, "sends", where + "/downstream"),
          count_at(up, "bytes", where + "/upstream") + count_at(down, "bytes", where + "/downstream")};
}

}  // namespace

std::optional<double> percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

oj build_report(const Scenario& sc, const RunResult& run) {
  oj report;
  report["schema"] = kReportSchema;
  report["seed"] = run.seed;
  report["scenario"] = scenario_to_json(sc);
  report["cnmm"] = cnmm_json(run.cnmm);
  if (run.baseline) {
    const double interval_s = static_cast<double>(sc.poller.poll_interval.count()) / 1000.0;
    report["baseline"] = baseline_json(*run.baseline, interval_s);
    const auto c = run.cnmm.stats.total();
    const auto b = run.baseline->stats.total();
    report["comparison"] = {
        {"cnmm_messages", c.sends},
        {"baseline_messages", b.sends},
        {"reduction_ratio",
         b.sends == 0 ? oj(nullptr) : oj(static_cast<double>(c.sends) / static_cast<double>(b.sends))},
        {"cnmm_bytes", c.bytes},
        {"baseline_bytes", b.bytes},
        {"byte_ratio",
         b.bytes == 0 ? oj(nullptr) : oj(static_cast<double>(c.bytes) / static_cast<double>(b.bytes))}};
  } else {
    report["baseline"] = nullptr;
    report["comparison"] = nullptr;
  }
  return report;
}

std::string render_report(const oj& report) { return report.dump(2) + "\n"; }

ReportSummary summarize_report(const nlohmann::json& report) {
  if (!report.is_object()) throw ReportError("malformed report: not a JSON object");
  const auto& schema = member(report, "schema", "");
  if (!schema.is_string() || schema.get<std::string>() != kReportSchema) {
    throw ReportError(fmt::format("malformed report: schema is not {}", kReportSchema));
  }
  ReportSummary s;
  s.seed = count_at(report, "seed", "");

  const auto& cnmm = member(report, "cnmm", "");
  const auto& cstats = member(cnmm, "stats", "/cnmm");
  std::tie(s.cnmm_messages, s.cnmm_bytes) = totals_from_stats(cstats, "/cnmm/stats");
  s.cnmm_upstream = count_at(member(cstats, "upstream", "/cnmm/stats"), "sends", "/cnmm/stats/upstream");
  s.cnmm_downstream =
      count_at(member(cstats, "downstream", "/cnmm/stats"), "sends", "/cnmm/stats/downstream");

  const auto& alerts = member(cnmm, "alerts", "/cnmm");
  if (!alerts.is_array()) throw ReportError("malformed report: /cnmm/alerts is not an array");
  for (const auto& a : alerts) {
    const auto& reason = member(a, "reason", "/cnmm/alerts");
    if (reason == "AgentUnresponsive") ++s.alerts_unresponsive;
    else if (reason == "TrapReceived") ++s.alerts_trap;
    else throw ReportError("malformed report: unknown alert reason");
  }
  const auto& traps = member(cnmm, "traps", "/cnmm");
  s.traps_emitted = count_at(traps, "emitted", "/cnmm/traps");
  s.traps_acked = count_at(traps, "acked", "/cnmm/traps");
  s.traps_abandoned = count_at(traps, "abandoned", "/cnmm/traps");

  const auto& base = member(report, "baseline", "");
  if (!base.is_null()) {
    s.baseline_present = true;
    std::tie(s.baseline_messages, s.baseline_bytes) =
        totals_from_stats(member(base, "stats", "/baseline"), "/baseline/stats");
    const auto& samples = member(base, "rate_samples", "/baseline");
    if (!samples.is_array()) throw ReportError("malformed report: /baseline/rate_samples is not an array");
    for (const auto& r : samples) {
      const auto& est = member(r, "estimate_bps", "/baseline/rate_samples");
      const auto& tru = member(r, "true_bps", "/baseline/rate_samples");
      if (!est.is_number() || !tru.is_number()) {
        throw ReportError("malformed report: rate sample values must be numbers");
      }
      s.max_rate_error_bps =
          std::max(s.max_rate_error_bps, std::fabs(est.get<double>() - tru.get<double>()));
    }
    if (s.baseline_messages > 0) {
      s.reduction_ratio =
          static_cast<double>(s.cnmm_messages) / static_cast<double>(s.baseline_messages);
    }
  }
  return s;
}

ReportSummary summarize_report_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ReportError(fmt::format("malformed report: {}", e.what()));
  }
  return summarize_report(doc);
}

std::string format_summary(const ReportSummary& s) {
  std::string out;
  out += fmt::format("seed {}\n", s.seed);
  out += fmt::format("CNMM      messages {:>8}  bytes {:>10}  (upstream {}, downstream {})\n",
                     s.cnmm_messages, s.cnmm_bytes, s.cnmm_upstream, s.cnmm_downstream);
  out += fmt::format("          alerts: {} AgentUnresponsive, {} TrapReceived\n",
                     s.alerts_unresponsive, s.alerts_trap);
  out += fmt::format("          traps: {} emitted, {} acked, {} abandoned\n", s.traps_emitted,
                     s.traps_acked, s.traps_abandoned);
  if (!s.baseline_present) {
    out += "Baseline  not run (CNMM-only report)\n";
    return out;
  }
  out += fmt::format("Baseline  messages {:>8}  bytes {:>10}\n", s.baseline_messages,
                     s.baseline_bytes);
  out += fmt::format("          max rate error: {:.1f} bit/s\n", s.max_rate_error_bps);
  if (s.reduction_ratio) {
    out += fmt::format("Reduction ratio (CNMM / baseline messages): {:.3f}\n", *s.reduction_ratio);
  }
  return out;
}

}  // namespace cnmm
