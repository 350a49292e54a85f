#include <doctest.h>

#include <cmath>
#include <random>

#include "mmflow/transport.hpp"

using namespace mmflow;

namespace {

ValueSpace unit_b() { return ValueSpace::case_b({0.0}, {1.0}, {0.5}); }

GridField field(const Grid1D& g, std::vector<double> v) {
  Array2D a(1, g.cells());
  for (int i = 0; i < g.cells(); ++i) a(0, i) = v[static_cast<std::size_t>(i)];
  return GridField(g, a);
}

}  // namespace

TEST_CASE("perspective convention") {
  CHECK(perspective(0.0, 0.0) == 0.0);
  CHECK(std::isinf(perspective(0.1, 0.0)));
  CHECK(perspective(0.3, 0.5) == doctest::Approx(0.18));
}

TEST_CASE("action of a static path is zero") {
  Grid1D g(1.0, 8);
  GridField u = GridField::constant(g, std::vector<double>{0.4});
  auto pairs = logarithmic_pairs(unit_b());
  CHECK(action(TransportPath::constant(u, 3), pairs) == 0.0);
  CHECK(continuity_residual(TransportPath::constant(u, 3)) == 0.0);
}

TEST_CASE("flux through a face with zero mobility costs infinity") {
  Grid1D g(1.0, 8);
  GridField u = GridField::constant(g, std::vector<double>{0.0});
  auto pairs = logarithmic_pairs(unit_b());
  TransportPath p = TransportPath::constant(u, 2);
  p.momenta[0](0, 3) = 0.1;
  CHECK(std::isinf(action(p, pairs)));
}

TEST_CASE("action matches an explicit double sum") {
  Grid1D g(1.0, 8);
  auto pairs = logarithmic_pairs(unit_b());
  TransportPath p(g, 1, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.2, 0.8), W(-0.1, 0.1);
  for (auto& d : p.densities)
    for (int i = 0; i < 8; ++i) d(0, i) = U(rng);
  for (auto& w : p.momenta)
    for (int f = 1; f < 8; ++f) w(0, f) = W(rng);
  double expected = 0;
  for (int k = 0; k < 2; ++k)
    for (int f = 1; f < 8; ++f) {
      const double ubar = (p.densities[k](0, f - 1) + p.densities[k](0, f) +
                           p.densities[k + 1](0, f - 1) + p.densities[k + 1](0, f)) / 4;
      expected += 0.5 * 0.25 * p.momenta[k](0, f) * p.momenta[k](0, f) / (ubar * (1 - ubar));
    }
  CHECK(action(p, pairs) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("continuity residual recomputed independently") {
  Grid1D g(1.0, 8);
  GridField u = GridField::constant(g, std::vector<double>{0.4});
  TransportPath p = TransportPath::constant(u, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> W(-0.01, 0.01);
  double expected = 0;
  for (int k = 0; k < 4; ++k) {
    for (int f = 1; f < 8; ++f) p.momenta[k](0, f) = W(rng);
    for (int i = 0; i < 8; ++i)
      expected = std::max(expected, std::abs((p.momenta[k](0, i + 1) - p.momenta[k](0, i)) / 0.25));
  }
  CHECK(continuity_residual(p) > 0);
  CHECK(continuity_residual(p) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("perspective prox") {
  const auto pair = EntropyMobilityPair::logarithmic(0.0, 1.0);
  SUBCASE("no flux stays put") {
    const ProxPoint p = perspective_prox(0.0, 0.37, 0.8, pair);
    CHECK(p.w == 0.0);
    CHECK(p.rho == doctest::Approx(0.37).epsilon(1e-12));
  }
  SUBCASE("vanishing step") {
    const ProxPoint p = perspective_prox(0.3, 0.5, 1e-9, pair);
    CHECK(p.w == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(p.rho == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("grid search oracle") {
    const ProxPoint p = perspective_prox(0.3, 0.5, 1.0, pair);
    auto obj = [](double w, double r) {
      return perspective(w, r * (1 - r)) + ((w - 0.3) * (w - 0.3) + (r - 0.5) * (r - 0.5)) / 2;
    };
    // Coarse grid, then two zooms around the best cell.
    double bw = 0, br = 0.5, best = obj(bw, br), span = 0.5;
    for (int zoom = 0; zoom < 6; ++zoom) {
      const double cw = bw, cr = br;
      for (int a = -200; a <= 200; ++a)
        for (int b = -200; b <= 200; ++b) {
          const double w = cw + span * a / 200.0, r = cr + span * b / 200.0;
          if (r < 0 || r > 1) continue;
          const double v = obj(w, r);
          if (v < best) best = v, bw = w, br = r;
        }
      span /= 20;
    }
    CHECK(p.w == doctest::Approx(bw).epsilon(1e-6));
    CHECK(p.rho == doctest::Approx(br).epsilon(1e-6));
  }
}

TEST_CASE("distance to itself is zero") {
  Grid1D g(1.0, 8);
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  GridField u = field(g, {0.3, 0.5, 0.6, 0.4, 0.5, 0.5, 0.5, 0.5});
  const auto r = distance(space, pairs, u, u, 4);
  CHECK(r.value == 0.0);
}

TEST_CASE("tiny instance against the convex-programming oracle") {
  // Frozen from tests/oracles/tiny_instances.py.
  Grid1D g(1.0, 4);
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  GridField u0 = field(g, {0.3, 0.5, 0.6, 0.4});
  GridField u1 = field(g, {0.5, 0.4, 0.3, 0.6});
  const auto r = distance(space, pairs, u0, u1, 2);
  CHECK(r.report.converged);
  CHECK(r.value == doctest::Approx(0.21362384603049192).epsilon(1e-5));
  CHECK(action(r.path, pairs) == doctest::Approx(0.04563514759285932).epsilon(1e-5));
  CHECK(r.report.constraint_residual <= 1e-10);

  SolverOptions pd;
  pd.kind = SolverKind::primal_dual;
  pd.tolerance = 1e-9;
  const auto q = distance(space, pairs, u0, u1, 2, pd);
  CHECK(q.value == doctest::Approx(r.value).epsilon(1e-5));
}

TEST_CASE("distance is symmetric and keeps the zero-flux boundary") {
  Grid1D g(2.0, 16);
  auto space = unit_b();
  auto pairs = logarithmic_pairs(space);
  GridField u(g, 1), v(g, 1);
  for (int i = 0; i < 16; ++i) {
    u(0, i) = 0.4 + 0.2 * std::exp(-std::pow(g.center(i) - 0.5, 2));
    v(0, 15 - i) = u(0, i);
  }
  auto a = distance(space, pairs, u, v, 6);
  auto b = distance(space, pairs, v, u, 6);
  CHECK(a.value > 0);
  CHECK(std::abs(a.value - b.value) <= 1e-6 * (1 + a.value));
  CHECK(continuity_residual(a.path) <= 1e-10);
  for (int k = 0; k < a.path.inner_steps; ++k) {
    CHECK(a.path.momenta[static_cast<std::size_t>(k)](0, 0) == 0.0);
    CHECK(a.path.momenta[static_cast<std::size_t>(k)](0, 16) == 0.0);
  }
  for (int k = 0; k <= a.path.inner_steps; ++k)
    CHECK(mass_vector(a.path.density(k), space)(0) == doctest::Approx(mass_vector(u, space)(0)).epsilon(1e-10));
}

TEST_CASE("unequal masses") {
  Grid1D g(1.0, 8);
  GridField u = GridField::constant(g, std::vector<double>{0.3});
  GridField v = GridField::constant(g, std::vector<double>{0.4});
  auto b = unit_b();
  CHECK(std::isinf(distance(b, logarithmic_pairs(b), u, v, 4).value));
  auto a = ValueSpace::case_a({0.0}, {1.0});
  CHECK_THROWS_AS(distance(a, logarithmic_pairs(a), u, v, 4), MassMismatch);
}
