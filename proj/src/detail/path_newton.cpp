#include "detail/path_newton.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mmflow::detail {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

constexpr double kArmijo = 0.25;
constexpr double kBacktrack = 0.5;
constexpr double kBarrierShrink = 10.0;
constexpr double kBoundaryMargin = 1e-6;

class NewtonPathSolver {
 public:
  NewtonPathSolver(const PathProblem& problem, const TransportPath& start)
      : prob_(problem),
        grid_(start.grid),
        n_(static_cast<int>(start.components())),
        N_(start.grid.cells()),
        K_(start.inner_steps),
        free_right_(problem.energy != nullptr),
        levels_(free_right_ ? K_ : K_ - 1),
        nrho_(levels_ * n_ * N_),
        nw_(K_ * n_ * (N_ - 1)),
        ds_(1.0 / K_),
        dx_(start.grid.spacing()),
        base_(start) {
    for (int k = 0; k < K_; ++k)
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < N_; ++i) {
          // For a fixed right end the last row of each component follows
          // from the others and mass equality.
          if (!free_right_ && k == K_ - 1 && i == N_ - 1) continue;
          rows_.push_back({k, j, i});
        }
    x_ = pack(start);
    band_order();
  }

  PathOptimum solve(const SolverOptions& opts) {
    SolveReport report;
    report.method = "newton";
    const VectorXd x0 = x_;
    if (!std::isfinite(objective(x_, 0.0)))
      throw InvalidArgument("path solver: start point outside the domain");
    const int cap = std::min(opts.max_iterations, 500);

    const double plain_stop = 0.5 * opts.tolerance * opts.tolerance;
    Status status = near_boundary(x_) ? Status::stalled : newton(0.0, plain_stop, cap, report);
    if (status != Status::converged) {
      // The minimizer touches the boundary of S: follow the log-barrier
      // central path down to a duality gap of about 1e-12 instead.
      x_ = x0;
      report = SolveReport{};
      report.method = "newton-barrier";
      const double m = 2.0 * nrho_;
      const double gap = 1e-12 * (1.0 + std::abs(objective(x_, 0.0)));
      double mu = 1e-6;
      while (true) {
        const bool last = mu * m <= gap;
        const double stop = last ? 0.5 * opts.tolerance * opts.tolerance : 0.1 * mu * m;
        status = newton(mu, stop, cap, report);
        if (status != Status::converged) break;
        if (last) break;
        mu = std::max(mu / kBarrierShrink, 0.5 * gap / m);
      }
    }
    const double phi = objective(x_, 0.0);
    PathOptimum out{unpack(x_), phi, report};
    out.report.constraint_residual = continuity_residual(out.path);
    if (status == Status::singular) throw SolverError("path solver: singular KKT system", phi, out.report);
    if (status == Status::stalled) throw SolverError("path solver: line search failed", phi, out.report);
    if (status == Status::cap)
      throw SolverError("path solver: no convergence within the iteration cap", phi, out.report);
    out.report.converged = true;
    return out;
  }

  enum class Status { converged, singular, stalled, cap };

  // Cell-major ordering of unknowns and multipliers keeps the KKT matrix
  // banded in space, so the LU factors stay narrow without a fill-reducing
  // ordering.
  void band_order() {
    const int nv = nrho_ + nw_;
    const int total = nv + static_cast<int>(rows_.size());
    std::vector<double> key(static_cast<std::size_t>(total));
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < N_; ++i) key[static_cast<std::size_t>(rho_index(l, j, i))] = i;
    for (int k = 0; k < K_; ++k)
      for (int j = 0; j < n_; ++j)
        for (int f = 1; f < N_; ++f) key[static_cast<std::size_t>(w_index(k, j, f))] = f - 0.5;
    for (std::size_t r = 0; r < rows_.size(); ++r) key[static_cast<std::size_t>(nv) + r] = rows_[r].i;
    std::vector<int> order(static_cast<std::size_t>(total));
    for (int q = 0; q < total; ++q) order[static_cast<std::size_t>(q)] = q;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
    });
    perm_.resize(total);
    for (int q = 0; q < total; ++q) perm_(order[static_cast<std::size_t>(q)]) = q;
  }

  // The triplet sequence has the same positions at every iteration, so the
  // compressed pattern is built once and later only refilled.
  void load_kkt(const std::vector<Eigen::Triplet<double>>& trip, int size) {
    if (slots_.empty()) {
      std::vector<Eigen::Triplet<double>> moved;
      moved.reserve(trip.size());
      for (const auto& t : trip) moved.emplace_back(perm_(t.row()), perm_(t.col()), t.value());
      kkt_.resize(size, size);
      kkt_.setFromTriplets(moved.begin(), moved.end());
      kkt_.makeCompressed();
      slots_.reserve(trip.size());
      const int* outer = kkt_.outerIndexPtr();
      const int* inner = kkt_.innerIndexPtr();
      for (const auto& t : trip) {
        const int c = perm_(t.col());
        const int* pos = std::lower_bound(inner + outer[c], inner + outer[c + 1], perm_(t.row()));
        slots_.push_back(static_cast<int>(pos - inner));
      }
      return;
    }
    double* values = kkt_.valuePtr();
    std::fill(values, values + kkt_.nonZeros(), 0.0);
    for (std::size_t q = 0; q < trip.size(); ++q) values[slots_[q]] += trip[q].value();
  }

  bool near_boundary(const VectorXd& x) const {
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j) {
        const auto& pr = (*prob_.pairs)[static_cast<std::size_t>(j)];
        const double margin = kBoundaryMargin * (pr.upper() - pr.lower());
        for (int i = 0; i < N_; ++i) {
          const double v = x(rho_index(l, j, i));
          if (v - pr.lower() < margin || pr.upper() - v < margin) return true;
        }
      }
    return false;
  }

  // Damped Newton on objective(., mu) from the current iterate; stops once
  // half the squared decrement is below stop * (1 + |objective|).
  Status newton(double mu, double stop, int cap, SolveReport& report) {
    const int nv = nrho_ + nw_;
    const int nc = static_cast<int>(rows_.size());
    double phi = objective(x_, mu);
    double best_decrement = std::numeric_limits<double>::infinity();
    int stalls = 0;
    for (int it = 1; it <= cap; ++it) {
      ++report.iterations;
      VectorXd grad(nv);
      std::vector<Eigen::Triplet<double>> trip;
      assemble(x_, mu, grad, trip);
      const VectorXd prim = constraint_values(x_);
      const double ratio = ds_ / dx_;
      for (int r = 0; r < nc; ++r) {
        const Row& row = rows_[static_cast<std::size_t>(r)];
        auto add = [&](int col, double v) {
          if (col < 0) return;
          trip.emplace_back(nv + r, col, v);
          trip.emplace_back(col, nv + r, v);
        };
        add(rho_index(row.k + 1, row.j, row.i), 1.0);
        add(rho_index(row.k, row.j, row.i), -1.0);
        add(w_index(row.k, row.j, row.i + 1), ratio);
        add(w_index(row.k, row.j, row.i), -ratio);
      }
      load_kkt(trip, nv + nc);
      if (!analyzed_) {
        lu_.analyzePattern(kkt_);
        analyzed_ = true;
      }
      lu_.factorize(kkt_);
      if (lu_.info() != Eigen::Success) return Status::singular;
      VectorXd rhs(nv + nc);
      rhs.head(nv) = -grad;
      rhs.tail(nc) = -prim;
      VectorXd permuted(nv + nc);
      for (int q = 0; q < nv + nc; ++q) permuted(perm_(q)) = rhs(q);
      const VectorXd solved = lu_.solve(permuted);
      VectorXd dx(nv);
      for (int q = 0; q < nv; ++q) dx(q) = solved(perm_(q));
      const double slope = grad.dot(dx);
      const double decrement = std::max(0.0, -slope);
      report.residual = 0.5 * decrement;
      const double scale = 1.0 + std::abs(phi);

      if (0.5 * decrement <= stop * scale &&
          prim.lpNorm<Eigen::Infinity>() <= 1e-12)
        return Status::converged;
      if (decrement < best_decrement * 0.5) {
        best_decrement = decrement;
        stalls = 0;
      } else if (++stalls >= 4 && 0.5 * decrement <= 1e-10 * scale) {
        return Status::converged;  // roundoff floor
      }

      double t = 1.0;
      VectorXd trial;
      double phi_trial = std::numeric_limits<double>::infinity();
      while (t > 1e-14) {
        trial = x_ + t * dx;
        phi_trial = objective(trial, mu);
        if (std::isfinite(phi_trial) && phi_trial <= phi + kArmijo * t * std::min(slope, 0.0))
          break;
        t *= kBacktrack;
      }
      if (t <= 1e-14) return 0.5 * decrement <= 1e-10 * scale ? Status::converged : Status::stalled;
      x_ = trial;
      phi = phi_trial;
    }
    return Status::cap;
  }

 private:
  struct Row {
    int k, j, i;
  };

  int rho_index(int level, int j, int i) const {
    if (level == 0 || (level == K_ && !free_right_)) return -1;
    return ((level - 1) * n_ + j) * N_ + i;
  }
  int w_index(int k, int j, int f) const {
    if (f <= 0 || f >= N_) return -1;
    return nrho_ + (k * n_ + j) * (N_ - 1) + (f - 1);
  }

  double rho(const VectorXd& x, int level, int j, int i) const {
    const int idx = rho_index(level, j, i);
    return idx >= 0 ? x(idx) : base_.densities[static_cast<std::size_t>(level)](j, i);
  }

  VectorXd pack(const TransportPath& p) const {
    VectorXd x(nrho_ + nw_);
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < N_; ++i) x(rho_index(l, j, i)) = p.densities[static_cast<std::size_t>(l)](j, i);
    for (int k = 0; k < K_; ++k)
      for (int j = 0; j < n_; ++j)
        for (int f = 1; f < N_; ++f) x(w_index(k, j, f)) = p.momenta[static_cast<std::size_t>(k)](j, f);
    return x;
  }

  TransportPath unpack(const VectorXd& x) const {
    TransportPath p = base_;
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < N_; ++i) p.densities[static_cast<std::size_t>(l)](j, i) = x(rho_index(l, j, i));
    for (int k = 0; k < K_; ++k) {
      p.momenta[static_cast<std::size_t>(k)].setZero();
      for (int j = 0; j < n_; ++j)
        for (int f = 1; f < N_; ++f) p.momenta[static_cast<std::size_t>(k)](j, f) = x(w_index(k, j, f));
    }
    return p;
  }

  Array2D terminal(const VectorXd& x) const {
    Array2D u(n_, N_);
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < N_; ++i) u(j, i) = rho(x, K_, j, i);
    return u;
  }

  double face_mean(const VectorXd& x, int k, int j, int f) const {
    return 0.25 * (rho(x, k, j, f - 1) + rho(x, k, j, f) + rho(x, k + 1, j, f - 1) +
                   rho(x, k + 1, j, f));
  }

  double objective(const VectorXd& x, double mu) const {
    const PairList& pairs = *prob_.pairs;
    double barrier = 0;
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j) {
        const auto& pr = pairs[static_cast<std::size_t>(j)];
        for (int i = 0; i < N_; ++i) {
          const double v = x(rho_index(l, j, i));
          if (!(v > pr.lower() && v < pr.upper())) return std::numeric_limits<double>::infinity();
          if (mu > 0) barrier -= std::log(v - pr.lower()) + std::log(pr.upper() - v);
        }
      }
    const double c = prob_.weight * ds_ * dx_;
    double total = 0;
    for (int k = 0; k < K_; ++k)
      for (int j = 0; j < n_; ++j) {
        const auto& pr = pairs[static_cast<std::size_t>(j)];
        for (int f = 1; f < N_; ++f) {
          const double w = x(w_index(k, j, f));
          const double m = pr.mobility(face_mean(x, k, j, f));
          if (!(m > 0)) return std::numeric_limits<double>::infinity();
          total += w * w / m;
        }
      }
    double value = c * total + mu * barrier;
    if (prob_.energy) value += discrete_energy(*prob_.energy, grid_, terminal(x));
    return value;
  }

  void assemble(const VectorXd& x, double mu, VectorXd& grad,
                std::vector<Eigen::Triplet<double>>& trip) const {
    const PairList& pairs = *prob_.pairs;
    const double c = prob_.weight * ds_ * dx_;
    grad.setZero();
    trip.clear();
    for (int l = 1; l <= levels_; ++l)
      for (int j = 0; j < n_; ++j) {
        const auto& pr = pairs[static_cast<std::size_t>(j)];
        for (int i = 0; i < N_; ++i) {
          const int q = rho_index(l, j, i);
          const double a = x(q) - pr.lower();
          const double b = pr.upper() - x(q);
          grad(q) += mu * (1.0 / b - 1.0 / a);
          trip.emplace_back(q, q, mu * (1.0 / (a * a) + 1.0 / (b * b)));
        }
      }
    trip.reserve(static_cast<std::size_t>(K_ * n_ * (N_ - 1) * 25 + rows_.size() * 8 +
                                          (prob_.energy ? n_ * n_ * N_ * 12 : 0)));
    int idx[4];
    for (int k = 0; k < K_; ++k)
      for (int j = 0; j < n_; ++j) {
        const auto& pr = pairs[static_cast<std::size_t>(j)];
        for (int f = 1; f < N_; ++f) {
          const int wi = w_index(k, j, f);
          const double w = x(wi);
          const double u = face_mean(x, k, j, f);
          const double m = pr.mobility(u);
          const double m1 = pr.mobility_derivative(u);
          const double m2 = pr.mobility_second_derivative(u);
          const double t_w = 2 * c * w / m;
          const double t_u = -c * w * w * m1 / (m * m);
          const double t_ww = 2 * c / m;
          const double t_wu = -2 * c * w * m1 / (m * m);
          const double t_uu = c * w * w * (2 * m1 * m1 / (m * m * m) - m2 / (m * m));
          idx[0] = rho_index(k, j, f - 1);
          idx[1] = rho_index(k, j, f);
          idx[2] = rho_index(k + 1, j, f - 1);
          idx[3] = rho_index(k + 1, j, f);
          grad(wi) += t_w;
          trip.emplace_back(wi, wi, t_ww);
          for (int a = 0; a < 4; ++a) {
            if (idx[a] < 0) continue;
            grad(idx[a]) += 0.25 * t_u;
            trip.emplace_back(wi, idx[a], 0.25 * t_wu);
            trip.emplace_back(idx[a], wi, 0.25 * t_wu);
            for (int b = 0; b < 4; ++b)
              if (idx[b] >= 0) trip.emplace_back(idx[a], idx[b], 0.0625 * t_uu);
          }
        }
      }
    if (prob_.energy) {
      const Array2D u = terminal(x);
      const Array2D g = energy_gradient(*prob_.energy, grid_, u);
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < N_; ++i) grad(rho_index(K_, j, i)) += dx_ * g(j, i);
      const SpMat h = energy_hessian(*prob_.energy, grid_, u);
      const int offset = rho_index(K_, 0, 0);
      for (int col = 0; col < h.outerSize(); ++col)
        for (SpMat::InnerIterator it(h, col); it; ++it)
          trip.emplace_back(offset + static_cast<int>(it.row()), offset + static_cast<int>(it.col()),
                            it.value());
    }
  }

  VectorXd constraint_values(const VectorXd& x) const {
    VectorXd r(static_cast<Eigen::Index>(rows_.size()));
    const double ratio = ds_ / dx_;
    for (std::size_t q = 0; q < rows_.size(); ++q) {
      const Row& row = rows_[q];
      const int wr = w_index(row.k, row.j, row.i + 1);
      const int wl = w_index(row.k, row.j, row.i);
      r(static_cast<Eigen::Index>(q)) = rho(x, row.k + 1, row.j, row.i) - rho(x, row.k, row.j, row.i) +
                                        ratio * ((wr >= 0 ? x(wr) : 0.0) - (wl >= 0 ? x(wl) : 0.0));
    }
    return r;
  }

  const PathProblem& prob_;
  Grid1D grid_;
  int n_, N_, K_;
  bool free_right_;
  int levels_, nrho_, nw_;
  double ds_, dx_;
  TransportPath base_;
  std::vector<Row> rows_;
  VectorXd x_;
  Eigen::VectorXi perm_;
  SpMat kkt_;
  std::vector<int> slots_;
  Eigen::SparseLU<SpMat, Eigen::NaturalOrdering<int>> lu_;
  bool analyzed_ = false;
};

}  // namespace

PathOptimum newton_path_solve(const PathProblem& problem, const TransportPath& start,
                              const SolverOptions& opts) {
  if (!problem.pairs || problem.pairs->size() != start.components())
    throw InvalidArgument("path solver: one pair per component expected");
  NewtonPathSolver solver(problem, start);
  return solver.solve(opts);
}

}  // namespace mmflow::detail
