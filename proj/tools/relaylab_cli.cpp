// relaylab command-line laboratory: coverage export, PCA fidelity sweeps,
// agent training, and full comparison campaigns.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relaylab/config.hpp"
#include "relaylab/coverage.hpp"
#include "relaylab/harness.hpp"

namespace fs = std::filesystem;
using namespace relaylab;

namespace {

Position3D parse_uav(const std::string& s) {
  Position3D p;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',')
    throw CLI::ValidationError("--uav", "expected x,y,z");
  return p;
}

void check_uav_in_bounds(const Position3D& p, const Box& b) {
  auto fail = [](const std::string& what) {
    throw std::runtime_error("uav pose violates bound: " + what);
  };
  if (p.x < b.x_min) fail("x < x_min (" + std::to_string(b.x_min) + ")");
  if (p.x > b.x_max) fail("x > x_max (" + std::to_string(b.x_max) + ")");
  if (p.y < b.y_min) fail("y < y_min (" + std::to_string(b.y_min) + ")");
  if (p.y > b.y_max) fail("y > y_max (" + std::to_string(b.y_max) + ")");
  if (p.z < b.z_min) fail("z < z_min (" + std::to_string(b.z_min) + ")");
  if (p.z > b.z_max) fail("z > z_max (" + std::to_string(b.z_max) + ")");
}

LabConfig load_or_default(const std::string& path) {
  if (path.empty()) return LabConfig{};
  return load_config(path);
}

void write_campaign_outputs(const ConvergenceReport& report,
                            const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const AgentReport& ar : report.agents) {
    const std::string name = agent_name(ar.kind);
    std::ofstream curves(fs::path(out_dir) / ("curves_" + name + ".csv"));
    write_curves_csv(ar, curves);
    for (const RunResult& rr : ar.run_logs) {
      std::ofstream log(fs::path(out_dir) /
                        ("runlog_" + name + "_" + std::to_string(rr.run) + ".csv"));
      write_runlog_csv(rr, log);
    }
  }
  std::ofstream rep(fs::path(out_dir) / "report.json");
  rep << report_to_json(report).dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relaylab: UAV relay path-planning laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_path, uav_str, agent_str;
  std::vector<double> targets{0.96, 0.98, 0.995};
  int runs = -1, episodes = -1, parallel = -1;
  long long seed = -1;

  auto* cov = app.add_subcommand("coverage", "Export a coverage map as CSV");
  cov->add_option("--config", config_path, "JSON config file");
  cov->add_option("--uav", uav_str, "UAV pose as x,y,z (meters)")->required();
  cov->add_option("--out", out_path, "Output CSV path (default stdout)");

  auto* pca_cmd =
      app.add_subcommand("pca", "PCA fidelity sweep over variance targets");
  pca_cmd->add_option("--config", config_path, "JSON config file");
  pca_cmd->add_option("--targets", targets,
                      "Variance targets in (0,1]")->delimiter(',');
  pca_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one agent kind");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--agent", agent_str, "Agent kind: td3|td3pca|etd3")
      ->required()
      ->check(CLI::IsMember({"td3", "td3pca", "etd3"}));
  train->add_option("--runs", runs, "Number of seeded runs");
  train->add_option("--episodes", episodes, "Episodes per run");
  train->add_option("--seed", seed, "Campaign seed base");
  train->add_option("--parallel", parallel, "Concurrent run workers");
  train->add_option("--out", out_path, "Output directory")->required();

  auto* compare =
      app.add_subcommand("compare", "Full multi-agent comparison campaign");
  compare->add_option("--config", config_path, "JSON config file");
  compare->add_option("--runs", runs, "Number of seeded runs");
  compare->add_option("--episodes", episodes, "Episodes per run");
  compare->add_option("--seed", seed, "Campaign seed base");
  compare->add_option("--parallel", parallel, "Concurrent run workers");
  compare->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    LabConfig cfg;
    try {
      cfg = load_or_default(config_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }

    if (cov->parsed()) {
      const Position3D uav = parse_uav(uav_str);
      const Scenario scenario = build_scenario(cfg, 0);
      check_uav_in_bounds(uav, scenario.bounds);
      const CoverageMap map = compute_coverage_map(scenario, uav, cfg.channel);
      if (out_path.empty()) {
        write_coverage_csv(map, std::cout);
      } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        write_coverage_csv(map, out);
      }
      return 0;
    }

    if (pca_cmd->parsed()) {
      for (double t : targets)
        if (!(t > 0.0 && t <= 1.0)) {
          std::cerr << "error: variance target " << t << " outside (0,1]\n";
          return 2;
        }
      const Scenario scenario = build_scenario(cfg, 0);
      const auto rows = pca_fidelity_report(scenario, cfg.channel, targets, 100,
                                            cfg.scenario.seed);
      fs::create_directories(out_path);
      std::ofstream out(fs::path(out_path) / "pca_fidelity.csv");
      write_pca_fidelity_csv(rows, out);
      return 0;
    }

    // train / compare
    if (train->parsed()) cfg.campaign.agents = {agent_str};
    if (runs > 0) cfg.campaign.runs = runs;
    if (episodes > 0) cfg.campaign.episodes = episodes;
    if (seed >= 0) cfg.campaign.seed_base = static_cast<std::uint64_t>(seed);
    if (parallel > 0) cfg.campaign.parallel = parallel;
    const ConvergenceReport report = run_campaign(cfg);
    write_campaign_outputs(report, out_path);
    return 0;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
