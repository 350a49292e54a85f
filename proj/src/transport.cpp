#include "mmflow/transport.hpp"

#include <Eigen/SparseCholesky>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>

#include "detail/path_newton.hpp"

namespace mmflow {

TransportPath::TransportPath(Grid1D g, std::size_t components, int k)
    : grid(g), inner_steps(k) {
  if (k < 1) throw InvalidArgument("transport path: need at least one inner step");
  const auto n = static_cast<Eigen::Index>(components);
  densities.assign(static_cast<std::size_t>(k) + 1, Array2D::Zero(n, g.cells()));
  momenta.assign(static_cast<std::size_t>(k), Array2D::Zero(n, g.faces()));
}

TransportPath TransportPath::constant(const GridField& u, int k) {
  TransportPath p(u.grid(), u.components(), k);
  for (auto& d : p.densities) d = u.values();
  return p;
}

double perspective(double w, double m) {
  if (m > 0) return w * w / m;
  return w == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double face_density(const TransportPath& path, int k, std::size_t j, int face) {
  const auto jj = static_cast<Eigen::Index>(j);
  const int N = path.grid.cells();
  const Array2D& a = path.densities[static_cast<std::size_t>(k)];
  const Array2D& b = path.densities[static_cast<std::size_t>(k) + 1];
  // Boundary faces see only their single adjacent cell.
  const int l = std::max(face - 1, 0);
  const int r = std::min(face, N - 1);
  return 0.25 * (a(jj, l) + a(jj, r) + b(jj, l) + b(jj, r));
}

namespace {

void check_structure(const TransportPath& path, const PairList* pairs) {
  const std::size_t n = path.components();
  const int K = path.inner_steps;
  if (path.densities.size() != static_cast<std::size_t>(K) + 1 ||
      path.momenta.size() != static_cast<std::size_t>(K))
    throw InvalidArgument("transport path: wrong number of time levels");
  for (const auto& d : path.densities)
    if (static_cast<std::size_t>(d.rows()) != n || d.cols() != path.grid.cells())
      throw InvalidArgument("transport path: density shape mismatch");
  for (const auto& w : path.momenta)
    if (static_cast<std::size_t>(w.rows()) != n || w.cols() != path.grid.faces())
      throw InvalidArgument("transport path: momentum shape mismatch");
  if (pairs && pairs->size() != n) throw InvalidArgument("transport path: one pair per component expected");
}

}  // namespace

std::vector<double> action_per_step(const TransportPath& path, const PairList& pairs) {
  check_structure(path, &pairs);
  const double c = path.inner_step() * path.grid.spacing();
  std::vector<double> out;
  for (int k = 0; k < path.inner_steps; ++k) {
    double sum = 0;
    const Array2D& w = path.momenta[static_cast<std::size_t>(k)];
    for (std::size_t j = 0; j < path.components(); ++j)
      for (int f = 0; f < path.grid.faces(); ++f)
        sum += perspective(w(static_cast<Eigen::Index>(j), f),
                           pairs[j].mobility(face_density(path, k, j, f)));
    out.push_back(c * sum);
  }
  return out;
}

double action(const TransportPath& path, const PairList& pairs) {
  double total = 0;
  for (double a : action_per_step(path, pairs)) total += a;
  return total;
}

double continuity_residual(const TransportPath& path) {
  check_structure(path, nullptr);
  const double ds = path.inner_step();
  const double dx = path.grid.spacing();
  double worst = 0;
  for (int k = 0; k < path.inner_steps; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Array2D& w = path.momenta[kk];
    const Array2D r = (path.densities[kk + 1] - path.densities[kk]) / ds +
                      (w.rightCols(w.cols() - 1) - w.leftCols(w.cols() - 1)) / dx;
    worst = std::max(worst, r.abs().maxCoeff());
  }
  return worst;
}

ProxPoint perspective_prox(double w, double rho, double sigma, const EntropyMobilityPair& pair) {
  if (!(sigma > 0)) throw InvalidArgument("perspective_prox: sigma must be positive");
  const double lo = pair.lower();
  const double hi = pair.upper();
  auto slope = [&](double r) {
    const double m = pair.mobility(r);
    const double d = m + 2 * sigma;
    return -w * w * pair.mobility_derivative(r) / (d * d) + (r - rho) / sigma;
  };
  double r;
  const double s_lo = slope(lo);
  const double s_hi = slope(hi);
  if (s_lo >= 0) {
    r = lo;
  } else if (s_hi <= 0) {
    r = hi;
  } else {
    std::uintmax_t max_iter = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-12; };
    const auto bracket = boost::math::tools::toms748_solve(slope, lo, hi, s_lo, s_hi, tol, max_iter);
    if (max_iter >= 200) throw std::logic_error("perspective_prox: root finder did not converge");
    r = 0.5 * (bracket.first + bracket.second);
  }
  const double m = pair.mobility(r);
  return {w * m / (m + 2 * sigma), r};
}

namespace {

TransportPath linear_start(const GridField& u0, const GridField& u1, int K) {
  TransportPath p(u0.grid(), u0.components(), K);
  for (int k = 0; k <= K; ++k) {
    const double t = static_cast<double>(k) / K;
    p.densities[static_cast<std::size_t>(k)] = (1 - t) * u0.values() + t * u1.values();
  }
  p.densities.back() = u1.values();
  const double dx = u0.grid().spacing();
  Array2D w = Array2D::Zero(u0.values().rows(), u0.grid().faces());
  for (int f = 1; f < u0.cells(); ++f)
    w.col(f) = w.col(f - 1) - dx * (u1.values().col(f - 1) - u0.values().col(f - 1));
  for (auto& m : p.momenta) m = w;
  return p;
}

// Chambolle-Pock on min F(Kx + b0) subject to the continuity constraint,
// F the summed perspective over interior faces.
DistanceResult primal_dual_distance(const PairList& pairs, const GridField& u0, const GridField& u1,
                                    int K, const SolverOptions& opts) {
  using SpMat = Eigen::SparseMatrix<double>;
  using Eigen::VectorXd;
  const int n = static_cast<int>(u0.components());
  const int N = u0.cells();
  const double ds = 1.0 / K;
  const double dx = u0.grid().spacing();
  const double c = ds * dx;
  const int levels = K - 1;
  const int nrho = levels * n * N;
  const int nw = K * n * (N - 1);
  const int nv = nrho + nw;
  const int nfaces = nw;
  auto rho_index = [&](int l, int j, int i) {
    return (l == 0 || l == K) ? -1 : ((l - 1) * n + j) * N + i;
  };
  auto w_index = [&](int k, int j, int f) {
    return (f <= 0 || f >= N) ? -1 : nrho + (k * n + j) * (N - 1) + (f - 1);
  };
  auto fixed = [&](int l, int j, int i) {
    return l == 0 ? u0.values()(j, i) : u1.values()(j, i);
  };

  // K: x -> (w, face mean) per interior face, offset b0 from the endpoints.
  std::vector<Eigen::Triplet<double>> kt;
  VectorXd b0 = VectorXd::Zero(2 * nfaces);
  std::vector<int> face_component(static_cast<std::size_t>(nfaces));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < n; ++j)
      for (int f = 1; f < N; ++f) {
        const int q = w_index(k, j, f) - nrho;
        face_component[static_cast<std::size_t>(q)] = j;
        kt.emplace_back(2 * q, w_index(k, j, f), 1.0);
        for (int l : {k, k + 1})
          for (int i : {f - 1, f}) {
            const int idx = rho_index(l, j, i);
            if (idx >= 0) kt.emplace_back(2 * q + 1, idx, 0.25);
            else b0(2 * q + 1) += 0.25 * fixed(l, j, i);
          }
      }
  SpMat Kop(2 * nfaces, nv);
  Kop.setFromTriplets(kt.begin(), kt.end());

  // Continuity constraint A x = b (last cell of the last step dropped).
  std::vector<Eigen::Triplet<double>> at;
  std::vector<double> bvals;
  int row = 0;
  const double ratio = ds / dx;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < N; ++i) {
        if (k == K - 1 && i == N - 1) continue;
        double b = 0;
        for (auto [l, s] : {std::pair{k + 1, 1.0}, std::pair{k, -1.0}}) {
          const int idx = rho_index(l, j, i);
          if (idx >= 0) at.emplace_back(row, idx, s);
          else b -= s * fixed(l, j, i);
        }
        for (auto [f, s] : {std::pair{i + 1, ratio}, std::pair{i, -ratio}}) {
          const int idx = w_index(k, j, f);
          if (idx >= 0) at.emplace_back(row, idx, s);
        }
        bvals.push_back(b);
        ++row;
      }
  SpMat A(row, nv);
  A.setFromTriplets(at.begin(), at.end());
  const VectorXd bvec = Eigen::Map<VectorXd>(bvals.data(), row);
  Eigen::SimplicialLDLT<SpMat> aat(SpMat(A * A.transpose()));
  if (aat.info() != Eigen::Success) throw std::logic_error("primal-dual: constraint factorization failed");
  auto project = [&](const VectorXd& v) -> VectorXd {
    return v - A.transpose() * aat.solve(A * v - bvec);
  };

  // Operator norm by power iteration.
  VectorXd v = VectorXd::Ones(nv);
  double norm = 0;
  for (int it = 0; it < 200; ++it) {
    VectorXd next = Kop.transpose() * (Kop * v);
    const double nn = next.norm();
    if (nn == 0) break;
    norm = std::sqrt(nn / v.norm());
    v = next / nn;
  }
  const double step = 0.99 / std::max(norm, 1e-12);

  const TransportPath start = linear_start(u0, u1, K);
  VectorXd x(nv);
  for (int l = 1; l < K; ++l)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < N; ++i) x(rho_index(l, j, i)) = start.densities[static_cast<std::size_t>(l)](j, i);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < n; ++j)
      for (int f = 1; f < N; ++f) x(w_index(k, j, f)) = start.momenta[static_cast<std::size_t>(k)](j, f);
  VectorXd xbar = x;
  VectorXd y = VectorXd::Zero(2 * nfaces);

  SolveReport report;
  report.method = "primal-dual";
  for (int it = 1; it <= opts.max_iterations; ++it) {
    VectorXd ynew = y + step * (Kop * xbar + b0);
    for (int q = 0; q < nfaces; ++q) {
      const auto& pair = pairs[static_cast<std::size_t>(face_component[static_cast<std::size_t>(q)])];
      const ProxPoint p = perspective_prox(ynew(2 * q) / step, ynew(2 * q + 1) / step, c / step, pair);
      ynew(2 * q) -= step * p.w;
      ynew(2 * q + 1) -= step * p.rho;
    }
    const VectorXd xnew = project(x - step * (Kop.transpose() * ynew));
    xbar = 2 * xnew - x;
    report.iterations = it;
    report.residual = std::max((xnew - x).lpNorm<Eigen::Infinity>(),
                               (ynew - y).lpNorm<Eigen::Infinity>()) / step;
    x = xnew;
    y = ynew;
    if (report.residual <= opts.tolerance) {
      report.converged = true;
      break;
    }
  }

  TransportPath path = start;
  for (int l = 1; l < K; ++l)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < N; ++i) path.densities[static_cast<std::size_t>(l)](j, i) = x(rho_index(l, j, i));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < n; ++j)
      for (int f = 1; f < N; ++f) path.momenta[static_cast<std::size_t>(k)](j, f) = x(w_index(k, j, f));
  report.constraint_residual = continuity_residual(path);
  const double a = action(path, pairs);
  if (!report.converged || !std::isfinite(a))
    throw SolverError("primal-dual: no convergence", std::sqrt(a), report);
  return {std::sqrt(a), std::move(path), report};
}

}  // namespace

DistanceResult distance(const ValueSpace& space, const PairList& pairs, const GridField& u0,
                        const GridField& u1, int inner_steps, const SolverOptions& opts) {
  require_same_grid(u0, u1);
  if (u0.components() != space.components() || pairs.size() != space.components())
    throw InvalidArgument("distance: component count mismatch");
  if (inner_steps < 1) throw InvalidArgument("distance: need at least one inner step");
  u0.require_in(space);
  u1.require_in(space);
  for (std::size_t j = 0; j < space.components(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double gap = integrate(u0.grid(), (u0.values().row(jj) - u1.values().row(jj)).transpose());
    if (std::abs(gap) > kMassTolerance) {
      if (space.reference_case() == ReferenceCase::A)
        throw MassMismatch("distance: component " + std::to_string(j + 1) +
                           " masses differ by " + std::to_string(gap));
      SolveReport r;
      r.method = "mass-mismatch";
      r.converged = true;
      return {std::numeric_limits<double>::infinity(), TransportPath::constant(u0, inner_steps), r};
    }
  }
  if ((u0.values() == u1.values()).all()) {
    SolveReport r;
    r.method = "identical";
    r.converged = true;
    return {0.0, TransportPath::constant(u0, inner_steps), r};
  }
  if (!u0.lies_inside(space) || !u1.lies_inside(space))
    throw InvalidArgument("distance: endpoints must lie strictly inside S");

  if (opts.kind == SolverKind::primal_dual) return primal_dual_distance(pairs, u0, u1, inner_steps, opts);

  detail::PathProblem problem;
  problem.pairs = &pairs;
  auto opt = detail::newton_path_solve(problem, linear_start(u0, u1, inner_steps), opts);
  opt.path.densities.front() = u0.values();
  opt.path.densities.back() = u1.values();
  return {std::sqrt(std::max(0.0, opt.objective)), std::move(opt.path), opt.report};
}

}  // namespace mmflow
