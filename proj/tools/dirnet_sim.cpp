#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dirnet/scenario.hpp"

namespace {

int write_output(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return 0;
  }
  std::ofstream out(path);
  if (!out) {
    std::cerr << "cannot open " << path << " for writing\n";
    return 2;
  }
  out << content;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DIR net scenario runner"};
  std::string scenario_path;
  std::string trace_path;
  std::string report_path;
  std::string report_format = "text";
  std::int64_t seed_override = -1;
  std::int64_t ticks_override = -1;

  app.add_option("--scenario", scenario_path, "scenario file")->required();
  app.add_option("--trace", trace_path, "trace output path, or - for stdout");
  app.add_option("--report", report_path, "report output path, or - for stdout");
  app.add_option("--report-format", report_format, "text or kv")
      ->check(CLI::IsMember({"text", "kv"}));
  app.add_option("--seed", seed_override, "override the scenario seed");
  app.add_option("--ticks", ticks_override, "override the scenario run length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  dirnet::Scenario scenario;
  try {
    std::ifstream in(scenario_path);
    if (!in) {
      std::cerr << "cannot read scenario file " << scenario_path << '\n';
      return 2;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    scenario = dirnet::parse_scenario(buffer.str());
  } catch (const std::exception& e) {
    std::cerr << "scenario error: " << e.what() << '\n';
    return 2;
  }

  if (seed_override >= 0) {
    scenario.config.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (ticks_override >= 0) {
    scenario.config.run_length = ticks_override;
  }

  dirnet::RunResult result;
  try {
    scenario.config.validate();
    result = dirnet::run(scenario.config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  if (!trace_path.empty()) {
    if (int rc = write_output(trace_path, result.trace_text); rc != 0) {
      return rc;
    }
  }
  if (!report_path.empty()) {
    const std::string report = report_format == "kv"
                                   ? result.report.render_kv()
                                   : result.report.render_text();
    if (int rc = write_output(report_path, report); rc != 0) {
      return rc;
    }
  }

  bool all_hold = true;
  for (const dirnet::ScenarioAssert& a : scenario.asserts) {
    const bool ok = a.holds(result.report);
    all_hold = all_hold && ok;
    if (!ok) {
      std::cerr << "assert failed: " << a.metric << ' ' << a.op << ' '
                << a.value << " (actual " << result.report.metric(a.metric)
                << ")\n";
    }
  }
  return all_hold ? 0 : 1;
}
