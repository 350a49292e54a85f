#include <doctest.h>

#include <cmath>
#include <random>

#include "mmflow/jko.hpp"

using namespace mmflow;

namespace {

ValueSpace unit_b() { return ValueSpace::case_b({0.0}, {1.0}, {0.5}); }

EnergyDensity reference_density(const ValueSpace& space) {
  CahnHilliardParams p;
  p.gamma = Mat::Identity(1, 1);
  p.psi = Potential::separable_polynomial({{0.0, 0.0, 1.0}});
  return make_cahn_hilliard(p, space);
}

GridField field(const Grid1D& g, const std::vector<double>& v) {
  GridField u(g, 1);
  for (int i = 0; i < g.cells(); ++i) u(0, i) = v[static_cast<std::size_t>(i)];
  return u;
}

}  // namespace

TEST_CASE("step objective matches the convex-programming oracle") {
  // Frozen from tests/oracles/tiny_instances.py (K = 2).
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  auto f = reference_density(space);

  SUBCASE("four cells") {
    Grid1D g(1.0, 4);
    auto r = jko_step(space, f, pairs, field(g, {0.3, 0.5, 0.6, 0.4}), 0.1, 2);
    CHECK(r.report.converged);
    CHECK(r.objective == doctest::Approx(0.047065036239006486).epsilon(1e-5));
    std::vector<double> end{0.36927006, 0.45999801, 0.50749192, 0.46324001};
    for (int i = 0; i < 4; ++i) CHECK(r.u_next(0, i) == doctest::Approx(end[static_cast<std::size_t>(i)]).epsilon(1e-6));
    CHECK(r.objective == doctest::Approx(r.step_distance * r.step_distance / 0.2 + discrete_energy(f, r.u_next)));
  }
  SUBCASE("eight cells") {
    Grid1D g(2.0, 8);
    auto u = field(g, {0.45, 0.55, 0.7, 0.62, 0.4, 0.3, 0.5, 0.48});
    auto r = jko_step(space, f, pairs, u, 0.05, 2);
    CHECK(r.objective == doctest::Approx(0.1220393835408792).epsilon(1e-5));
    std::vector<double> end{0.47556071, 0.56089424, 0.64719982, 0.58540981,
                            0.43245548, 0.36619002, 0.45086732, 0.48142261};
    for (int i = 0; i < 8; ++i) CHECK(r.u_next(0, i) == doctest::Approx(end[static_cast<std::size_t>(i)]).epsilon(1e-6));
  }
}

TEST_CASE("the reference state is a fixed point") {
  auto space = unit_b();
  Grid1D g(2.0, 16);
  auto z = GridField::constant(g, std::vector<double>{0.5});
  auto r = jko_step(space, reference_density(space), logarithmic_pairs(space), z, 1e-2, 4);
  CHECK(r.step_distance == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK((r.u_next.values() - 0.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("a step never increases the energy") {
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  auto f = reference_density(space);
  Grid1D g(2.0, 16);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(0.1, 0.9);
  for (int trial = 0; trial < 5; ++trial) {
    GridField u(g, 1);
    for (int i = 0; i < g.cells(); ++i) u(0, i) = d(rng);
    auto r = jko_step(space, f, pairs, u, 1e-2, 4);
    CHECK(discrete_energy(f, r.u_next) <= discrete_energy(f, u) + 1e-8);
    CHECK(std::abs(mass_vector(r.u_next, space)(0) - mass_vector(u, space)(0)) < 1e-10);
  }
}

TEST_CASE("trajectories") {
  auto space = ValueSpace::case_a({0.0}, {1.0});
  auto pairs = logarithmic_pairs(space);
  auto f = reference_density(space);
  Grid1D g(4.0, 32);
  GridField u0(g, 1);
  for (int i = 0; i < g.cells(); ++i) u0(0, i) = 1e-6 + 0.3 * std::exp(-2 * g.center(i) * g.center(i));

  JkoConfig none;
  none.steps = 0;
  auto t0 = run_trajectory(space, f, pairs, u0, none);
  CHECK(t0.steps() == 0);
  CHECK(t0.records().size() == 1);

  JkoConfig c;
  c.tau = 0.05;
  c.steps = 6;
  c.inner_steps = 4;
  int hooked = 0;
  auto t = run_trajectory(space, f, pairs, u0, c, [&](const GridField&, const TrajectoryRecord&) { ++hooked; });
  CHECK(hooked == 7);
  CHECK(t.steps() == 6);
  for (const auto& r : t.records()) {
    CHECK(std::abs(r.masses(0) - t.records()[0].masses(0)) < 1e-8);
    CHECK(r.time == doctest::Approx(r.step * c.tau));
  }
  for (int k = 1; k <= 6; ++k) CHECK(t.records()[k].energy <= t.records()[k - 1].energy + 1e-8);
  CHECK(&t.at(0.0) == &t.state(0));
  CHECK(&t.at(0.05) == &t.state(1));
  CHECK(&t.at(0.051) == &t.state(2));
  CHECK(&t.at(10.0) == &t.state(6));
}

TEST_CASE("solver failure carries the partial trajectory") {
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  auto f = reference_density(space);
  Grid1D g(2.0, 16);
  GridField u0(g, 1);
  for (int i = 0; i < g.cells(); ++i) u0(0, i) = 0.5 + 0.3 * std::exp(-g.center(i) * g.center(i));
  JkoConfig c;
  c.tau = 1e-2;
  c.steps = 3;
  c.inner_steps = 4;
  c.solver.max_iterations = 1;
  try {
    run_trajectory(space, f, pairs, u0, c);
    FAIL("expected a solver failure");
  } catch (const JkoError& e) {
    CHECK(e.partial().steps() == 0);
    CHECK_FALSE(e.report().converged);
  }
}
