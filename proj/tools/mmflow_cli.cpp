#include <CLI11.hpp>

#include <iostream>

#include "mmflow/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Minimizing-movement solver for cross-diffusion systems with nonlinear mobility"};
  app.set_version_flag("--version", mmflow::kVersion);
  app.require_subcommand(1);

  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::string config, out_dir = ".";
  std::optional<double> tau_override;
  auto* run = app.add_subcommand("run", "Run a minimizing-movement trajectory");
  run->add_option("--config", config, "Scenario JSON")->required();
  run->add_option("--out-dir", out_dir, "Output directory")->required();
  run->add_option("--tau-override", tau_override, "Replace jko.tau");
  run->add_flag("--quiet", quiet);

  std::string run_dir;
  std::vector<std::string> checks;
  auto* verify = app.add_subcommand("verify", "Check the a-priori estimates on a finished run");
  verify->add_option("run_dir", run_dir, "Directory written by `run`")->required();
  verify->add_option("--checks", checks, "Check names, or `all` (default: from the config)")->delimiter(',');
  verify->add_flag("--quiet", quiet);

  std::string field_a, field_b;
  auto* dist = app.add_subcommand("distance", "Transport distance between two fields");
  dist->add_option("--config", config, "Scenario JSON (grid, space, K, tolerance)")->required();
  dist->add_option("field_a", field_a, "CSV with columns x,u_1..u_n")->required();
  dist->add_option("field_b", field_b, "CSV with columns x,u_1..u_n")->required();
  dist->add_option("--out-dir", out_dir, "Where path.csv goes");
  dist->add_flag("--quiet", quiet);

  int samples = 1000;
  std::uint64_t seed = 20240611;
  auto* ineq = app.add_subcommand("inequalities", "Interpolation inequalities on random bumps");
  ineq->add_option("--samples", samples, "Number of random bumps");
  ineq->add_option("--seed", seed, "Campaign seed");
  ineq->add_option("--out-dir", out_dir, "Where inequalities.csv goes");
  ineq->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return mmflow::cmd_run(config, out_dir, {tau_override, quiet});
    if (*verify) return mmflow::cmd_verify(run_dir, checks, quiet);
    if (*dist) return mmflow::cmd_distance(config, field_a, field_b, out_dir, quiet);
    if (*ineq) return mmflow::cmd_inequalities(samples, seed, out_dir, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
