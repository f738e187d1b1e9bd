#pragma once

// Run reports (JSON, schema "cnmm-report/1") and their human-readable summary.
// The layout is documented in docs/report.md.

#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cnmm/runner.hpp"
#include "cnmm/scenario.hpp"

namespace cnmm {

inline constexpr const char* kReportSchema = "cnmm-report/1";

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::ordered_json build_report(const Scenario& sc, const RunResult& run);

/// Pretty-printed report text, newline terminated. Identical inputs give
/// identical bytes.
std::string render_report(const nlohmann::ordered_json& report);

/// Nearest-rank percentile of an unsorted sample; nullopt when empty.
std::optional<double> percentile(std::vector<double> values, double p);

/// Figures of the summary, each recomputed from the raw counters in the report.
struct ReportSummary {
  std::uint64_t seed = 0;
  std::uint64_t cnmm_messages = 0;
  std::uint64_t cnmm_bytes = 0;
  std::uint64_t cnmm_upstream = 0;
  std::uint64_t cnmm_downstream = 0;
  std::uint64_t alerts_unresponsive = 0;
  std::uint64_t alerts_trap = 0;
  std::uint64_t traps_emitted = 0;
  std::uint64_t traps_acked = 0;
  std::uint64_t traps_abandoned = 0;
  bool baseline_present = false;
  std::uint64_t baseline_messages = 0;
  std::uint64_t baseline_bytes = 0;
  double max_rate_error_bps = 0.0;
  std::optional<double> reduction_ratio;
};

/// Throws ReportError when the document is not a well-formed report.
ReportSummary summarize_report(const nlohmann::json& report);
ReportSummary summarize_report_text(const std::string& text);

std::string format_summary(const ReportSummary& s);

}  // namespace cnmm
