#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mmflow/diagnostics.hpp"

using namespace mmflow;

namespace {

TrajectoryRecord record(int step, double tau, double energy, double entropy = 0, double h2 = 0,
                        double dist = 0, double mass = 0, double moment = 0) {
  TrajectoryRecord r;
  r.step = step;
  r.time = step * tau;
  r.energy = energy;
  r.heat_entropy = entropy;
  r.h2_seminorm = h2;
  r.step_distance = dist;
  r.masses = Eigen::VectorXd::Constant(1, mass);
  r.moments = Eigen::VectorXd::Constant(1, moment);
  return r;
}

// Records shaped like a genuine relaxation: E and H decay, steps shrink.
Records relaxation(int steps, double tau) {
  Records out;
  for (int k = 0; k <= steps; ++k) {
    double e = std::exp(-k * tau);
    double dist = k == 0 ? 0 : std::sqrt(tau * (std::exp(-(k - 1) * tau) - e));
    out.push_back(record(k, tau, e, e, k == 0 ? 0 : 0.5 * e, dist, 0.3, 0.2 * (1 + k * tau)));
  }
  return out;
}

ValueSpace unit_b() { return ValueSpace::case_b({0.0}, {1.0}, {0.5}); }

EnergyDensity reference_density(const ValueSpace& space) {
  CahnHilliardParams p;
  p.gamma = Mat::Identity(1, 1);
  p.psi = Potential::separable_polynomial({{0.0, 0.0, 1.0}});
  return make_cahn_hilliard(p, space);
}

double fitted(const EstimateReport& r, const std::string& name) {
  for (const auto& [k, v] : r.fitted_constants)
    if (k == name) return v;
  return std::nan("");
}

bool flagged(const EstimateReport& r, const std::string& flag) {
  return std::find(r.flags.begin(), r.flags.end(), flag) != r.flags.end();
}

}  // namespace

TEST_CASE("report serialization") {
  auto r = make_report("x", 1.0, 2.0, 0.0);
  CHECK(r.passed);
  CHECK(r.slack == 1.0);
  auto j = r.to_json();
  CHECK(j.find("\"name\":\"x\"") != std::string::npos);
  CHECK(j.find('\n') == std::string::npos);
  CHECK_FALSE(make_report("y", 2.0, 1.0, 0.5).passed);
  CHECK(make_report("z", 2.0, 1.0, 1.0).passed);
  CHECK_FALSE(make_report("nan", std::nan(""), 1.0, 1.0).passed);
}

TEST_CASE("classical estimates on a consistent relaxation") {
  const double tau = 0.01;
  Records recs = relaxation(40, tau);
  CHECK(check_energy_monotonicity(recs).passed);
  CHECK(check_telescoping(recs, tau).passed);
  CHECK(check_holder_chaining(recs, tau).passed);
  CHECK(check_mass_conservation(recs).passed);
  CHECK(check_entropy_dissipation(recs, tau, 1.0, 0.01).passed);
  auto moment = check_moment_envelope(recs, ReferenceCase::A);
  CHECK(moment.passed);
  CHECK(fitted(moment, "M_fit") == doctest::Approx(0.2));
  CHECK(flagged(check_moment_envelope(recs, ReferenceCase::B), "not_applicable_case_B"));
}

TEST_CASE("single step telescoping") {
  Records recs{record(0, 0.1, 1.0), record(1, 0.1, 0.5, 0, 0, std::sqrt(0.2))};
  auto r = check_telescoping(recs, 0.1);
  CHECK(r.lhs == doctest::Approx(0.2));
  CHECK(r.rhs == doctest::Approx(0.2));
  CHECK(r.passed);
}

TEST_CASE("negative controls") {
  const double tau = 0.01;
  Records base = relaxation(40, tau);

  auto bumped = base;
  bumped[10].energy = bumped[9].energy + 1e-3;
  CHECK_FALSE(check_energy_monotonicity(bumped).passed);
  CHECK(fitted(check_energy_monotonicity(bumped), "worst_index") == 10);

  auto long_steps = base;
  long_steps[5].step_distance = 1.0;
  CHECK_FALSE(check_telescoping(long_steps, tau).passed);
  CHECK_FALSE(check_holder_chaining(long_steps, tau).passed);

  auto leaking = base;
  leaking[20].masses(0) += 1e-6;
  CHECK_FALSE(check_mass_conservation(leaking).passed);

  auto spreading = base;
  for (std::size_t k = 20; k < spreading.size(); ++k) spreading[k].moments(0) *= 3;
  CHECK_FALSE(check_moment_envelope(spreading, ReferenceCase::A).passed);

  auto rough = base;
  rough[7].h2_seminorm = 100;
  CHECK_FALSE(check_entropy_dissipation(rough, tau, 1.0, 0.01).passed);

  // Prefix sums keep growing after the entropy stops dropping.
  Records growing;
  for (int k = 0; k <= 400; ++k)
    growing.push_back(record(k, tau, 1.0, std::max(0.0, 1.0 - 0.01 * k), k == 0 ? 0 : 1.0));
  CHECK_FALSE(check_h2_budget(growing, ReferenceCase::B, 0.4, tau).passed);
  CHECK_FALSE(check_h2_budget(growing, ReferenceCase::A, 0.4, tau).passed);
}

TEST_CASE("H2 budget") {
  Records still{record(0, 0.1, 0), record(1, 0.1, 0), record(2, 0.1, 0)};
  auto r = check_h2_budget(still, ReferenceCase::B, 0.4, 0.1);
  CHECK(r.passed);
  CHECK(r.lhs == 0.0);

  auto b = check_h2_budget(relaxation(200, 0.01), ReferenceCase::B, 0.4, 0.01);
  CHECK(b.passed);
  CHECK(fitted(b, "C_fit") > 0);

  // Case A: prefix sums growing like T^0.3 fit under C (1 + T^0.4).
  Records a;
  const double tau = 0.1;
  for (int k = 0; k <= 500; ++k) {
    double t = k * tau, prev = std::max(0.0, (k - 1) * tau);
    double inc = k == 0 ? 0 : std::pow(t, 0.3) - std::pow(prev, 0.3);
    a.push_back(record(k, tau, 1.0, 0.0, std::sqrt(inc / tau)));
  }
  auto ra = check_h2_budget(a, ReferenceCase::A, 0.4, tau);
  CHECK(ra.passed);
  CHECK(fitted(ra, "growth_exponent") == doctest::Approx(0.3).epsilon(1e-9));
  CHECK_THROWS_AS(check_h2_budget(a, ReferenceCase::A, 0.3, tau), InvalidArgument);
  CHECK_THROWS_AS(check_h2_budget({}, ReferenceCase::B, 0.4, tau), InvalidArgument);
}

TEST_CASE("H1 sup bound") {
  auto space = unit_b();
  auto f = reference_density(space);
  auto pairs = logarithmic_pairs(space);
  Grid1D g(4.0, 64);
  GridField u(g, 1);
  for (int i = 0; i < g.cells(); ++i) u(0, i) = 0.5 + 0.2 * std::exp(-g.center(i) * g.center(i));
  Records recs{make_record(space, f, pairs, u, 0, 0.01)};
  std::vector<Snapshot> snaps{{0, u}};
  CHECK(check_h1_sup_bound(recs, snaps, space, f.coercivity_lower()).passed);
  GridField wild = u;
  for (int i = 0; i < g.cells(); i += 2) wild(0, i) = 0.9;
  snaps.push_back({1, wild});
  CHECK_FALSE(check_h1_sup_bound(recs, snaps, space, f.coercivity_lower()).passed);
}

TEST_CASE("heat-flow dissipation") {
  auto space = unit_b();
  auto f = reference_density(space);
  auto pairs = logarithmic_pairs(space);
  Grid1D g(4.0, 128);
  auto [d0, h0] = heat_flow_dissipation_check(space, f, pairs, GridField::constant(g, std::vector<double>{0.5}),
                                              1e-3, 10);
  CHECK(d0.lhs == doctest::Approx(0.0).scale(1.0));
  CHECK(d0.rhs == doctest::Approx(0.0).scale(1.0));
  CHECK(d0.passed);
  CHECK(h0.passed);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> amp(-0.2, 0.2), ctr(-2, 2), wid(0.3, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    GridField u = GridField::constant(g, std::vector<double>{0.5});
    for (int b = 0; b < 3; ++b) {
      double a = amp(rng), c = ctr(rng), w = wid(rng);
      for (int i = 0; i < g.cells(); ++i) u(0, i) += a * std::exp(-std::pow((g.center(i) - c) / w, 2));
    }
    auto [d, h] = heat_flow_dissipation_check(space, f, pairs, u, 1e-2, 20);
    CHECK(d.passed);
    CHECK(h.passed);
  }
  CHECK_THROWS_AS(heat_flow_dissipation_check(space, f, pairs, GridField::constant(g, std::vector<double>{0.5}),
                                              1e-3, 3),
                  InvalidArgument);
}

TEST_CASE("heat step conserves mass and smooths") {
  Grid1D g(1.0, 32);
  Array2D u = Array2D::Zero(1, 32);
  u(0, 10) = 1.0;
  Array2D v = heat_step(g, u, 1e-3);
  CHECK(v.sum() == doctest::Approx(u.sum()).epsilon(1e-12));
  CHECK(v.maxCoeff() < 1.0);
  CHECK(v.minCoeff() >= 0.0);
}

TEST_CASE("weak-form residual vanishes in trivial cases") {
  auto space = unit_b();
  auto f = reference_density(space);
  auto pairs = logarithmic_pairs(space);
  Grid1D g(4.0, 32);
  GridField z = GridField::constant(g, std::vector<double>{0.5});
  Trajectory t(0.1, z, make_record(space, f, pairs, z, 0, 0.1));
  for (int k = 1; k <= 10; ++k) t.append(z, make_record(space, f, pairs, z, k, 0.1));
  GridField rho(g, 1);
  for (int i = 0; i < g.cells(); ++i) rho(0, i) = smooth_bump(g.center(i), 0, 2);
  auto psi = [](double s) { return smooth_bump(s, 0.5, 0.3); };
  CHECK(weak_form_residual(t, space, f, pairs, psi, rho).lhs == doctest::Approx(0.0).scale(1.0));

  GridField u = z;
  for (int i = 0; i < g.cells(); ++i) u(0, i) += 0.1 * std::exp(-g.center(i) * g.center(i));
  Trajectory moving(0.1, u, make_record(space, f, pairs, u, 0, 0.1));
  for (int k = 1; k <= 10; ++k) moving.append(u, make_record(space, f, pairs, u, k, 0.1));
  CHECK(weak_form_residual(moving, space, f, pairs, [](double) { return 0.0; }, rho).lhs == 0.0);

  GridField edge = rho;
  edge(0, 0) = 0.5;
  CHECK_THROWS_AS(weak_form_residual(moving, space, f, pairs, psi, edge), InvalidArgument);
}

TEST_CASE("weak residual rate") {
  auto coarse = make_report("weak_residual", 1e-6, INFINITY, 0);
  auto fine = make_report("weak_residual", 5e-7, INFINITY, 0);
  auto r = weak_residual_rate(coarse, fine);
  CHECK(r.passed);
  CHECK(fitted(r, "observed_order") == doctest::Approx(0.5));
  CHECK_FALSE(weak_residual_rate(coarse, coarse).passed);
}

TEST_CASE("smooth bump") {
  CHECK(smooth_bump(0.0, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK(smooth_bump(1.0, 0.0, 1.0) == 0.0);
  CHECK(smooth_bump(-3.0, 0.0, 1.0) == 0.0);
  CHECK(smooth_bump(0.5, 0.0, 1.0) > 0.0);
}

TEST_CASE("decay fit") {
  Records power, still, growing;
  for (int k = 0; k <= 100; ++k) {
    double t = 1 + k * 0.49;
    auto r = record(k, 1.0, std::pow(t, -0.3));
    r.time = t;
    power.push_back(r);
    auto s = record(k, 1.0, 0.0);
    s.time = t;
    still.push_back(s);
    auto gr = record(k, 1.0, t);
    gr.time = t;
    growing.push_back(gr);
  }
  auto p = decay_fit(power, 1, 50);
  CHECK(p.passed);
  CHECK(fitted(p, "p_fit") == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(fitted(p, "K_p_fit") == doctest::Approx(1.0).epsilon(1e-10));

  auto d = decay_fit(still, 1, 50);
  CHECK(d.passed);
  CHECK(flagged(d, "degenerate"));

  CHECK_FALSE(decay_fit(growing, 1, 50).passed);
  CHECK_THROWS_AS(decay_fit(power, 1, 3), InvalidArgument);
}

TEST_CASE("Gaussian norms against closed forms") {
  Grid1D g(8.0, 1024);
  GridField f(g, 1);
  for (int i = 0; i < g.cells(); ++i) f(0, i) = std::exp(-g.center(i) * g.center(i));
  const double root = std::sqrt(std::numbers::pi / 2);
  const double dx = g.spacing();
  CHECK(integrate(g, f.values().row(0).transpose()) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-6));
  auto space = ValueSpace::case_a({0.0}, {1.0});
  CHECK(l2_norm(f, space) == doctest::Approx(std::pow(root, 0.5)).epsilon(1e-6));
  // Difference quotients carry an O(dx^2) bias; compare after removing its leading term.
  double d1 = h1_seminorm(f), d2 = h2_seminorm(f);
  CHECK(std::abs(d1 * d1 - root) < dx * dx);
  CHECK(std::abs(d2 * d2 - 3 * root) < 10 * dx * dx);

  auto [l2, h1] = interpolation_check(f);
  double eps = fitted(l2, "eps_disc");
  CHECK(l2.lhs == doctest::Approx(1.1195).epsilon(1e-3));
  CHECK(l2.rhs - eps == doctest::Approx(1.8048).epsilon(1e-3));
  CHECK(l2.passed);
  CHECK(h1.passed);
}

TEST_CASE("interpolation check edge cases") {
  Grid1D g(8.0, 256);
  auto [a, b] = interpolation_check(GridField(g, 1));
  CHECK(a.lhs == 0.0);
  CHECK(b.lhs == 0.0);
  CHECK(a.passed);
  CHECK(b.passed);

  GridField neg(g, 1);
  neg(0, 100) = -1e-3;
  CHECK_THROWS_AS(interpolation_check(neg), InvalidArgument);

  GridField wide(g, 1);
  for (int i = 0; i < g.cells(); ++i) wide(0, i) = std::exp(-g.center(i) * g.center(i) / 20);
  CHECK_THROWS_AS(interpolation_check(wide), InvalidArgument);
}
