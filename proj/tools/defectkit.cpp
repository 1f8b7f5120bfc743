#include "defectkit/cli.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dk = defectkit;
namespace cli = defectkit::cli;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Errors raised before a run still get a report, so scripts can rely on report.json existing.
int fail_early(const std::string& out_dir, const dk::Error& e, const cli::Json& issues) {
  std::cerr << "defectkit: " << e.what() << "\n";
  if (out_dir.empty()) return 2;
  cli::RunOutcome outcome;
  outcome.exit_code = 2;
  cli::Json err{{"code", dk::to_string(e.code())}, {"message", e.what()}};
  if (!issues.empty()) err["issues"] = issues;
  outcome.report = cli::Json{{"cmd", nullptr}, {"version", cli::kVersion}, {"status", "error"}, {"exit_code", 2},
                             {"error", err}};
  cli::write_outputs(outcome, out_dir, {{"version", cli::kVersion}, {"timestamp", utc_timestamp()}});
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bodies with discrete defects: holonomy, Burgers vectors, symmetry, minimization, homogenization"};
  std::string command, config_path, out_dir;
  std::vector<std::string> tol_overrides;
  std::optional<std::uint64_t> seed;

  app.add_option("command", command, "holonomy | burgers | symmetry | minimize | homogenize | validate")
      ->check(CLI::IsMember(cli::commands()));
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory for report.json, convergence.csv and meta.json");
  app.add_option("--tol", tol_overrides, "tolerance override name=value (repeatable)")->take_all();
  app.add_option("--seed", seed, "seed for symmetry sample sets");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  cli::RunConfig cfg;
  try {
    std::ifstream in(config_path);
    std::stringstream text;
    text << in.rdbuf();
    cfg = cli::parse_config(text.str());
    if (!command.empty() && command != cfg.cmd) {
      throw dk::Error(dk::ErrorCode::validation,
                      "subcommand '" + command + "' does not match config cmd '" + cfg.cmd + "'");
    }
    for (const auto& t : tol_overrides) cli::apply_tolerance_override(cfg.tol, t);
    if (seed) cfg.seed = *seed;
  } catch (const cli::ConfigError& e) {
    cli::Json issues = cli::Json::array();
    for (const auto& i : e.issues()) issues.push_back({{"pointer", i.pointer}, {"message", i.message}});
    return fail_early(out_dir, e, issues);
  } catch (const dk::Error& e) {
    return fail_early(out_dir, e, cli::Json::array());
  }
  if (out_dir.empty() && cfg.out) out_dir = *cfg.out;

  const cli::RunOutcome outcome = cli::run(cfg);
  if (out_dir.empty()) {
    std::cout << outcome.report.dump(2) << "\n";
    if (outcome.csv) std::cout << *outcome.csv;
  } else {
    cli::write_outputs(outcome, out_dir,
                       {{"version", cli::kVersion}, {"timestamp", utc_timestamp()}, {"config", config_path}});
    std::cout << out_dir << "/report.json\n";
  }
  if (outcome.exit_code != 0) {
    std::cerr << "defectkit: " << outcome.report["error"]["message"].get<std::string>() << "\n";
  }
  return outcome.exit_code;
}
