// Acceptance run: one line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "mmflow/cli_io.hpp"

using namespace mmflow;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const char* title, const std::string& detail) {
  std::printf("criterion %2d  %s  %s: %s\n", id, ok ? "PASS" : "FAIL", title, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double constant(const EstimateReport& r, const std::string& name) {
  for (const auto& [k, v] : r.fitted_constants)
    if (k == name) return v;
  return std::nan("");
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  Scenario scenario;
  Trajectory trajectory;
  std::vector<Snapshot> snapshots;
};

Run run_scenario(const std::string& file, double tau, int steps) {
  ScenarioConfig c = load_config(fs::path(MMFLOW_SCENARIO_DIR) / file);
  c.tau = tau;
  c.steps = steps;
  Scenario s = build_scenario(c);
  GridField u0 = initial_field(c, s.space, s.grid);
  JkoConfig jko;
  jko.tau = c.tau;
  jko.steps = c.steps;
  jko.inner_steps = c.inner_steps;
  jko.solver.tolerance = c.tolerance;
  jko.solver.max_iterations = c.max_iterations;
  Trajectory t = run_trajectory(s.space, s.density, s.pairs, u0, jko);
  std::vector<Snapshot> snaps;
  for (int k = 0; k <= t.steps(); ++k) snaps.push_back({k, t.state(k)});
  return {std::move(s), std::move(t), std::move(snaps)};
}

// Zero-mass perturbation of 1/2: three signed Gaussians, recentred and scaled.
GridField equal_mass_field(const Grid1D& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(-1, 1), ctr(-2, 2), wid(0.3, 1.0), peak(0.1, 0.3);
  Eigen::ArrayXd d = Eigen::ArrayXd::Zero(g.cells());
  for (int b = 0; b < 3; ++b) {
    double a = amp(rng), c = ctr(rng), w = wid(rng);
    for (int i = 0; i < g.cells(); ++i) d(i) += a * std::exp(-std::pow((g.center(i) - c) / w, 2));
  }
  d -= d.mean();
  d *= peak(rng) / d.abs().maxCoeff();
  GridField u(g, 1);
  u.values().row(0) = (0.5 + d).transpose();
  return u;
}

void metric_sanity() {
  auto space = ValueSpace::case_b({0.0}, {1.0}, {0.5});
  auto pairs = logarithmic_pairs(space);
  Grid1D g(4.0, 64);
  SolverOptions opts;
  std::mt19937_64 rng(2024);
  double self = 0, sym = 0, tri = 0;
  for (int t = 0; t < 20; ++t) {
    GridField u = equal_mass_field(g, rng), v = equal_mass_field(g, rng), w = equal_mass_field(g, rng);
    self = std::max(self, distance(space, pairs, u, u, 8, opts).value);
    double uv = distance(space, pairs, u, v, 8, opts).value;
    double vu = distance(space, pairs, v, u, 8, opts).value;
    double vw = distance(space, pairs, v, w, 8, opts).value;
    double uw = distance(space, pairs, u, w, 8, opts).value;
    sym = std::max(sym, std::abs(uv - vu) / (1 + uv));
    tri = std::max(tri, uw - uv - vw);
  }
  bool ok = self <= 1e-8 && sym <= 1e-6 && tri <= 3 * opts.tolerance;
  report(1, ok, "metric sanity",
         fmt("max d(u,u) = %.3g (<= 1e-8), max symmetry gap/(1+d) = %.3g (<= 1e-6), "
             "max triangle excess = %.3g (<= %.1g)",
             self, sym, tri, 3 * opts.tolerance));
}

void oracle_equivalence() {
  // Frozen from tests/oracles/tiny_instances.py.
  auto space = ValueSpace::case_b({0.0}, {1.0}, {0.5});
  auto pairs = logarithmic_pairs(space);
  CahnHilliardParams p;
  p.gamma = Mat::Identity(1, 1);
  p.psi = Potential::separable_polynomial({{0.0, 0.0, 1.0}});
  auto f = make_cahn_hilliard(p, space);
  Grid1D g(1.0, 4);
  GridField u0(g, 1), u1(g, 1);
  const double a[] = {0.3, 0.5, 0.6, 0.4}, b[] = {0.5, 0.4, 0.3, 0.6};
  for (int i = 0; i < 4; ++i) u0(0, i) = a[i], u1(0, i) = b[i];
  double d = distance(space, pairs, u0, u1, 2).value;
  double j = jko_step(space, f, pairs, u0, 0.1, 2).objective;
  double ed = std::abs(d / 0.21362384603049192 - 1), ej = std::abs(j / 0.047065036239006486 - 1);
  report(2, ed <= 1e-5 && ej <= 1e-5, "oracle equivalence",
         fmt("distance rel. error %.2e, step objective rel. error %.2e (<= 1e-5)", ed, ej));
}

}  // namespace

int main() {
  auto start = std::chrono::steady_clock::now();

  metric_sanity();
  oracle_equivalence();

  Run b = run_scenario("reference_case_b.json", 1e-3, 500);
  const auto& rb = b.trajectory.records();
  const double cfb = b.scenario.density.coercivity_lower();

  auto mono = check_energy_monotonicity(rb, 1e-8);
  report(3, mono.passed, "energy monotonicity",
         fmt("largest per-step energy change %.3g (slack >= -1e-8)", mono.lhs));

  auto tele = check_telescoping(rb, 1e-3, 1e-8);
  report(4, tele.passed, "telescoping bound",
         fmt("sum of squared step distances %.6g <= 2 tau E(u0) = %.6g (+1e-8)", tele.lhs, tele.rhs));

  Run a = run_scenario("reference_case_a.json", 0.1, 500);
  const auto& ra = a.trajectory.records();
  const double cfa = a.scenario.density.coercivity_lower();

  auto mass = check_mass_conservation(ra, 1e-8);
  report(5, mass.passed, "mass conservation (case A)",
         fmt("max mass drift %.3g over %zu records (<= 1e-8)", mass.lhs, ra.size()));

  auto edb = check_entropy_dissipation(rb, 1e-3, cfb, b.scenario.grid.spacing(), 10.0);
  auto eda = check_entropy_dissipation(ra, 0.1, cfa, a.scenario.grid.spacing(), 10.0);
  report(6, edb.passed && eda.passed, "entropy-dissipation step estimate",
         fmt("worst slack case B %.3g, case A %.3g (>= 0 with 10 dx^2 included)", edb.slack, eda.slack));

  auto h2b = check_h2_budget(rb, ReferenceCase::B, 0.4, 1e-3);
  auto h2a = check_h2_budget(ra, ReferenceCase::A, 0.4, 0.1);
  report(7, h2b.passed && h2a.passed, "H2 budget",
         fmt("case B max prefix %.4g vs calibrated C %.4g (+5%%, first-quarter max alone %.4g); case A slack %.3g under C (1 + T^0.4), "
             "C = %.4g, growth exponent %.3f",
             h2b.lhs, constant(h2b, "C_fit"), constant(h2b, "first_quarter_max"), h2a.slack, constant(h2a, "C_q_fit"),
             constant(h2a, "growth_exponent")));

  {
    auto space = b.scenario.space;
    Grid1D g(4.0, 128);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> amp(-0.12, 0.12), ctr(-2, 2), wid(0.3, 1.0);
    double worst_d = INFINITY, worst_h = INFINITY;
    bool ok = true;
    for (int s = 0; s < 50; ++s) {
      GridField u = GridField::constant(g, std::vector<double>{0.5});
      for (int k = 0; k < 3; ++k) {
        double am = amp(rng), c = ctr(rng), w = wid(rng);
        for (int i = 0; i < g.cells(); ++i) u(0, i) += am * std::exp(-std::pow((g.center(i) - c) / w, 2));
      }
      auto [d, h] = heat_flow_dissipation_check(space, b.scenario.density, b.scenario.pairs, u, 1e-2, 20, 1e-6);
      ok = ok && d.passed && h.passed;
      worst_d = std::min(worst_d, d.slack);
      worst_h = std::min(worst_h, h.slack);
    }
    report(8, ok, "heat-flow dissipation",
           fmt("50 fields, worst dissipation slack %.3g (>= -1e-6), worst entropy-decrease slack %.3g",
               worst_d, worst_h));
  }

  {
    const ScenarioConfig& c = b.scenario.config;
    GridField rho(b.scenario.grid, 1);
    for (int i = 0; i < b.scenario.grid.cells(); ++i)
      rho(0, i) = smooth_bump(b.scenario.grid.center(i), c.weak_rho_center, c.weak_rho_radius);
    auto psi = [&](double t) { return smooth_bump(t, c.weak_psi_center, c.weak_psi_radius); };
    auto coarse = weak_form_residual(b.trajectory, b.scenario.space, b.scenario.density, b.scenario.pairs, psi, rho);
    Run fine = run_scenario("reference_case_b.json", 2.5e-4, 2000);
    auto fr = weak_form_residual(fine.trajectory, fine.scenario.space, fine.scenario.density, fine.scenario.pairs,
                                 psi, rho);
    auto rate = weak_residual_rate(coarse, fr, 0.75);
    report(9, rate.passed, "weak-form residual rate",
           fmt("residual %.3g at tau, %.3g at tau/4, ratio %.3f (<= 0.75), observed order %.2f", coarse.lhs,
               fr.lhs, rate.lhs, constant(rate, "observed_order")));
  }

  {
    Grid1D g(8.0, 1024);
    GridField gauss(g, 1);
    for (int i = 0; i < g.cells(); ++i) gauss(0, i) = std::exp(-g.center(i) * g.center(i));
    auto [l2, h1] = interpolation_check(gauss);
    double bare = l2.rhs - constant(l2, "eps_disc");
    bool ok = l2.passed && h1.passed && std::abs(l2.lhs - 1.1195) <= 1e-3 && std::abs(bare - 1.8048) <= 1e-3;
    int bad = 0;
    for (std::size_t s = 0; s < 1000; ++s) {
      auto [x, y] = interpolation_check(random_bump(g, sample_seed(20240611, s)));
      bad += (x.passed && y.passed) ? 0 : 1;
    }
    report(10, ok && bad == 0, "interpolation inequalities",
           fmt("Gaussian ||f|| = %.5f (1.1195), RHS = %.5f (1.8048) to 1e-3; %d of 1000 bumps fail", l2.lhs, bare,
               bad));
  }

  auto decay = decay_fit(ra, 1.0, 50.0);
  report(11, decay.passed, "long-time envelope",
         fmt("max E(T) T^0.25 = %.4g <= 10 E(1) = %.4g on [1, 50], fitted p = %.3f", decay.lhs, decay.rhs,
             constant(decay, "p_fit")));

  {
    fs::path dir = fs::temp_directory_path() / "mmflow_acceptance_determinism";
    fs::remove_all(dir);
    fs::path cfg = fs::path(MMFLOW_SCENARIO_DIR) / "reference_case_b.json";
    int c1 = cmd_run(cfg, dir / "first", {std::nullopt, true});
    int c2 = cmd_run(cfg, dir / "second", {std::nullopt, true});
    std::string r1 = slurp(dir / "first" / "records.csv"), r2 = slurp(dir / "second" / "records.csv");
    bool same = c1 == 0 && c2 == 0 && !r1.empty() && r1 == r2;
    report(12, same, "determinism",
           fmt("two runs of the reference case-B config, records.csv %s (%zu bytes)",
               same ? "byte-identical" : "differ", r1.size()));
    fs::remove_all(dir);
  }

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 12 criteria failed (%.0f s)\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
