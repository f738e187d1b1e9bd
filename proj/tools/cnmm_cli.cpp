// cnmm: run scenarios and summarize their reports.
//
//   cnmm run --scenario <path> --out <path> [--seed N]
//   cnmm compare --report <path>
//
// Exit codes: 0 success, 2 bad input (usage, scenario or report), 3 a run
// violated one of its own invariants.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "cnmm/report.hpp"
#include "cnmm/runner.hpp"
#include "cnmm/scenario.hpp"

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitInvariant = 3;

int run_command(const std::string& scenario_path, const std::string& out_path,
                std::optional<std::uint64_t> seed) {
  cnmm::Scenario sc;
  try {
    sc = cnmm::load_scenario(scenario_path);
  } catch (const cnmm::ScenarioLoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  if (seed) sc.seed = *seed;

  cnmm::RunResult result;
  try {
    result = cnmm::run_scenario(sc);
  } catch (const cnmm::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  out << cnmm::render_report(cnmm::build_report(sc, result));
  if (!out) {
    std::cerr << "error: cannot write " << out_path << "\n";
    return kExitBadInput;
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int compare_command(const std::string& report_path) {
  std::ifstream in(report_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << report_path << "\n";
    return kExitBadInput;
  }
  std::ostringstream text;
  text << in.rdbuf();
  try {
    std::cout << cnmm::format_summary(cnmm::summarize_report_text(text.str()));
  } catch (const cnmm::ReportError& e) {
    std::cerr << "error: " << report_path << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud network management model simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and write its report");
  std::string scenario_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  run->add_option("--scenario", scenario_path, "Scenario file (JSON)")->required();
  run->add_option("--out", out_path, "Report file to write (JSON)")->required();
  run->add_option("--seed", seed, "Overrides the scenario's seed");

  auto* compare = app.add_subcommand("compare", "Summarize a report");
  std::string report_path;
  compare->add_option("--report", report_path, "Report file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  if (*run) return run_command(scenario_path, out_path, seed);
  return compare_command(report_path);
}
