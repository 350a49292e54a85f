#include "mmflow/free_energy.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

namespace mmflow {

namespace {

constexpr double kFdStep = 1e-5;

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

class NormalizedModel final : public DensityModel {
 public:
  NormalizedModel(std::shared_ptr<const DensityModel> raw, Vec reference)
      : raw_(std::move(raw)), reference_(std::move(reference)) {
    const Vec zero = Vec::Zero(reference_.size());
    offset_ = raw_->value(zero, reference_);
    slope_p_ = raw_->grad_p(zero, reference_);
    slope_z_ = raw_->grad_z(zero, reference_);
  }

  std::size_t components() const override { return raw_->components(); }
  double value(const Vec& p, const Vec& z) const override {
    return raw_->value(p, z) - offset_ - p.dot(slope_p_) - (z - reference_).dot(slope_z_);
  }
  Vec grad_p(const Vec& p, const Vec& z) const override { return raw_->grad_p(p, z) - slope_p_; }
  Vec grad_z(const Vec& p, const Vec& z) const override { return raw_->grad_z(p, z) - slope_z_; }
  Mat hessian(const Vec& p, const Vec& z) const override { return raw_->hessian(p, z); }

 private:
  std::shared_ptr<const DensityModel> raw_;
  Vec reference_;
  double offset_ = 0;
  Vec slope_p_;
  Vec slope_z_;
};

class CahnHilliardModel final : public DensityModel {
 public:
  explicit CahnHilliardModel(CahnHilliardParams params) : params_(std::move(params)) {}

  std::size_t components() const override { return static_cast<std::size_t>(params_.gamma.rows()); }

  double value(const Vec& p, const Vec& z) const override {
    return 0.5 * (params_.epsilon + weight(z)) * p.dot(params_.gamma * p) + params_.psi.value(z);
  }
  Vec grad_p(const Vec& p, const Vec& z) const override {
    return (params_.epsilon + weight(z)) * (params_.gamma * p);
  }
  Vec grad_z(const Vec& p, const Vec& z) const override {
    return 0.5 * p.dot(params_.gamma * p) * weight_gradient(z) + params_.psi.gradient(z);
  }
  Mat hessian(const Vec& p, const Vec& z) const override {
    const auto n = static_cast<Eigen::Index>(components());
    Mat h = Mat::Zero(2 * n, 2 * n);
    const Vec gp = params_.gamma * p;
    const Vec da = weight_gradient(z);
    h.topLeftCorner(n, n) = (params_.epsilon + weight(z)) * params_.gamma;
    h.topRightCorner(n, n) = gp * da.transpose();
    h.bottomLeftCorner(n, n) = da * gp.transpose();
    Mat zz = params_.psi.hessian(z);
    if (!params_.a_weights.empty()) {
      const double quad = 0.5 * p.dot(gp);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double mu = params_.a_weights[static_cast<std::size_t>(k)];
        zz(k, k) += quad * mu * mu * std::exp(mu * z(k));
      }
    }
    h.bottomRightCorner(n, n) = zz;
    return h;
  }

  double weight(const Vec& z) const {
    double a = 0;
    for (std::size_t k = 0; k < params_.a_weights.size(); ++k)
      a += std::exp(params_.a_weights[k] * z(static_cast<Eigen::Index>(k)));
    return a;
  }
  Vec weight_gradient(const Vec& z) const {
    Vec g = Vec::Zero(z.size());
    for (std::size_t k = 0; k < params_.a_weights.size(); ++k) {
      const double mu = params_.a_weights[k];
      g(static_cast<Eigen::Index>(k)) = mu * std::exp(mu * z(static_cast<Eigen::Index>(k)));
    }
    return g;
  }
  Mat weight_hessian(const Vec& z) const {
    Mat h = Mat::Zero(z.size(), z.size());
    for (std::size_t k = 0; k < params_.a_weights.size(); ++k) {
      const double mu = params_.a_weights[k];
      const auto kk = static_cast<Eigen::Index>(k);
      h(kk, kk) = mu * mu * std::exp(mu * z(kk));
    }
    return h;
  }
  const CahnHilliardParams& params() const { return params_; }

 private:
  CahnHilliardParams params_;
};

class QuadraticModel final : public DensityModel {
 public:
  QuadraticModel(Mat q, Vec reference) : q_(std::move(q)), reference_(std::move(reference)) {}
  std::size_t components() const override { return static_cast<std::size_t>(reference_.size()); }
  double value(const Vec& p, const Vec& z) const override {
    const Vec x = concat(p, z - reference_);
    return 0.5 * x.dot(q_ * x);
  }
  Vec grad_p(const Vec& p, const Vec& z) const override {
    return (q_ * concat(p, z - reference_)).head(p.size());
  }
  Vec grad_z(const Vec& p, const Vec& z) const override {
    return (q_ * concat(p, z - reference_)).tail(z.size());
  }
  Mat hessian(const Vec&, const Vec&) const override { return q_; }

 private:
  Mat q_;
  Vec reference_;
};

Vec reference_vector(const ValueSpace& space) {
  Vec z(static_cast<Eigen::Index>(space.components()));
  for (std::size_t j = 0; j < space.components(); ++j) z(static_cast<Eigen::Index>(j)) = space.reference(j);
  return z;
}

Vec uniform_point(const ValueSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec z(static_cast<Eigen::Index>(space.components()));
  for (std::size_t j = 0; j < space.components(); ++j)
    z(static_cast<Eigen::Index>(j)) = space.lower(j) + unit(rng) * space.width(j);
  return z;
}

}  // namespace

FunctionDensityModel::FunctionDensityModel(std::size_t n, ValueFn value, GradFn grad_p,
                                           GradFn grad_z, HessFn hessian)
    : n_(n), value_(std::move(value)), grad_p_(std::move(grad_p)), grad_z_(std::move(grad_z)),
      hessian_(std::move(hessian)) {
  if (n_ == 0 || n_ > kMaxComponents) throw InvalidArgument("density: unsupported component count");
  if (!value_) throw InvalidArgument("density: value function required");
}

Vec FunctionDensityModel::full_gradient(const Vec& p, const Vec& z) const {
  const auto n = static_cast<Eigen::Index>(n_);
  Vec g(2 * n);
  if (grad_p_ && grad_z_) {
    g << grad_p_(p, z), grad_z_(p, z);
    return g;
  }
  for (Eigen::Index k = 0; k < 2 * n; ++k) {
    Vec pp = p, pm = p, zp = z, zm = z;
    if (k < n) {
      pp(k) += kFdStep;
      pm(k) -= kFdStep;
    } else {
      zp(k - n) += kFdStep;
      zm(k - n) -= kFdStep;
    }
    g(k) = (value_(pp, zp) - value_(pm, zm)) / (2 * kFdStep);
  }
  return g;
}

Vec FunctionDensityModel::grad_p(const Vec& p, const Vec& z) const {
  if (grad_p_) return grad_p_(p, z);
  return full_gradient(p, z).head(static_cast<Eigen::Index>(n_));
}

Vec FunctionDensityModel::grad_z(const Vec& p, const Vec& z) const {
  if (grad_z_) return grad_z_(p, z);
  return full_gradient(p, z).tail(static_cast<Eigen::Index>(n_));
}

Mat FunctionDensityModel::hessian(const Vec& p, const Vec& z) const {
  if (hessian_) return hessian_(p, z);
  const auto n = static_cast<Eigen::Index>(n_);
  Mat h(2 * n, 2 * n);
  auto shifted = [&](Eigen::Index k, double d) {
    Vec pp = p, zz = z;
    if (k < n) pp(k) += d; else zz(k - n) += d;
    return full_gradient(pp, zz);
  };
  for (Eigen::Index k = 0; k < 2 * n; ++k)
    h.col(k) = (shifted(k, kFdStep) - shifted(k, -kFdStep)) / (2 * kFdStep);
  return 0.5 * (h + h.transpose());
}

EnergyDensity::EnergyDensity(std::shared_ptr<const DensityModel> model, Coercivity constants)
    : model_(std::move(model)), constants_(constants) {
  if (!model_) throw InvalidArgument("energy density: null model");
  if (model_->components() == 0 || model_->components() > kMaxComponents)
    throw InvalidArgument("energy density: unsupported component count");
}

Potential Potential::separable_polynomial(std::vector<std::vector<double>> coeffs) {
  auto c = std::make_shared<const std::vector<std::vector<double>>>(std::move(coeffs));
  Potential psi;
  psi.value = [c](const Vec& z) {
    double v = 0;
    for (std::size_t j = 0; j < c->size(); ++j) {
      double power = 1;
      for (double a : (*c)[j]) {
        v += a * power;
        power *= z(static_cast<Eigen::Index>(j));
      }
    }
    return v;
  };
  psi.gradient = [c](const Vec& z) {
    Vec g = Vec::Zero(z.size());
    for (std::size_t j = 0; j < c->size(); ++j) {
      const double x = z(static_cast<Eigen::Index>(j));
      double power = 1;
      for (std::size_t d = 1; d < (*c)[j].size(); ++d) {
        g(static_cast<Eigen::Index>(j)) += static_cast<double>(d) * (*c)[j][d] * power;
        power *= x;
      }
    }
    return g;
  };
  psi.hessian = [c](const Vec& z) {
    Mat h = Mat::Zero(z.size(), z.size());
    for (std::size_t j = 0; j < c->size(); ++j) {
      const double x = z(static_cast<Eigen::Index>(j));
      double power = 1;
      for (std::size_t d = 2; d < (*c)[j].size(); ++d) {
        h(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) +=
            static_cast<double>(d * (d - 1)) * (*c)[j][d] * power;
        power *= x;
      }
    }
    return h;
  };
  return psi;
}

Potential Potential::quadratic(Mat q, Vec center) {
  Potential psi;
  psi.value = [q, center](const Vec& z) { return 0.5 * (z - center).dot(q * (z - center)); };
  psi.gradient = [q, center](const Vec& z) -> Vec { return q * (z - center); };
  psi.hessian = [q](const Vec&) { return q; };
  return psi;
}

EnergyDensity EnergyDensity::with_domain(const ValueSpace& space) const {
  if (space.components() != components())
    throw InvalidArgument("energy density: value space has the wrong component count");
  EnergyDensity d(model_, constants_);
  d.domain_ = std::make_shared<const ValueSpace>(space);
  return d;
}

EnergyDensity normalize_density(const EnergyDensity& raw, const ValueSpace& space) {
  if (raw.components() != space.components())
    throw InvalidArgument("normalize_density: component count mismatch");
  return EnergyDensity(std::make_shared<NormalizedModel>(raw.model(), reference_vector(space)),
                       raw.coercivity())
      .with_domain(space);
}

EnergyDensity make_cahn_hilliard(const CahnHilliardParams& params, const ValueSpace& space) {
  const auto n = static_cast<Eigen::Index>(space.components());
  if (params.gamma.rows() != n || params.gamma.cols() != n)
    throw InvalidArgument("Cahn-Hilliard: Gamma has the wrong shape");
  if ((params.gamma - params.gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgument("Cahn-Hilliard: Gamma must be symmetric");
  if (!(min_eigenvalue(params.gamma) > 0))
    throw InvalidArgument("Cahn-Hilliard: Gamma must be positive definite");
  if (!(params.epsilon >= 0)) throw InvalidArgument("Cahn-Hilliard: epsilon must be >= 0");
  if (!params.a_weights.empty() && params.a_weights.size() != space.components())
    throw InvalidArgument("Cahn-Hilliard: one exponential weight per component expected");
  if (!params.psi.value || !params.psi.gradient || !params.psi.hessian)
    throw InvalidArgument("Cahn-Hilliard: potential needs value, gradient and Hessian");
  if (params.a_weights.empty() && params.epsilon <= 0)
    throw InvalidArgument("Cahn-Hilliard: epsilon + a(z) must be positive");

  auto model = std::make_shared<CahnHilliardModel>(params);
  // Random samples plus every corner of S, where degeneracies tend to sit.
  std::vector<Vec> points;
  std::mt19937_64 rng(7);
  for (int s = 0; s < 1024; ++s) points.push_back(uniform_point(space, rng));
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    Vec corner(n);
    for (Eigen::Index j = 0; j < n; ++j)
      corner(j) = (mask >> j) & 1u ? space.upper(static_cast<std::size_t>(j)) : space.lower(static_cast<std::size_t>(j));
    points.push_back(corner);
  }
  for (const Vec& z : points) {
    if (!(min_eigenvalue(params.psi.hessian(z)) > 1e-12))
      throw InvalidArgument("Cahn-Hilliard: potential is not uniformly convex on S");
    if (!params.a_weights.empty()) {
      const Vec da = model->weight_gradient(z);
      const Mat g = (params.epsilon + model->weight(z)) * model->weight_hessian(z) -
                    2.0 * da * da.transpose();
      if (min_eigenvalue(g) < -1e-12)
        throw InvalidArgument(
            "Cahn-Hilliard: (epsilon + a) D^2 a >= 2 Da Da^T fails on S; "
            "the density is not convex for large gradients");
    }
  }
  EnergyDensity normalized = normalize_density(EnergyDensity(model), space);
  return normalized.with_coercivity(estimate_coercivity(normalized, space, 4096));
}

EnergyDensity make_quadratic_density(const Mat& q, const ValueSpace& space) {
  const auto n = static_cast<Eigen::Index>(space.components());
  if (q.rows() != 2 * n || q.cols() != 2 * n)
    throw InvalidArgument("quadratic density: Q must be 2n x 2n");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidArgument("quadratic density: Q must be symmetric");
  EnergyDensity d = EnergyDensity(std::make_shared<QuadraticModel>(q, reference_vector(space))).with_domain(space);
  return d.with_coercivity(estimate_coercivity(d, space, 100));
}

Coercivity estimate_coercivity(const EnergyDensity& density, const ValueSpace& space,
                               int samples, std::uint64_t seed) {
  if (samples < 100) throw InvalidArgument("estimate_coercivity: need at least 100 samples");
  const auto n = static_cast<Eigen::Index>(space.components());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int valid = 0;
  for (int s = 0; s < samples; ++s) {
    Vec dir(n);
    for (Eigen::Index k = 0; k < n; ++k) dir(k) = normal(rng);
    const double norm = dir.norm();
    const double radius = 10.0 * std::pow(unit(rng), 1.0 / static_cast<double>(n));
    const Vec p = norm > 0 ? Vec(dir * (radius / norm)) : Vec(Vec::Zero(n));
    const Vec z = uniform_point(space, rng);
    const Mat h = density.hessian(p, z);
    if (!h.allFinite()) continue;
    ++valid;
    hi = std::max(hi, max_eigenvalue(h));
    if (space.reference_case() == ReferenceCase::B) {
      lo = std::min(lo, min_eigenvalue(h));
    } else {
      const Mat zz = h.bottomRightCorner(n, n);
      if (min_eigenvalue(zz) <= 0) {
        lo = -std::numeric_limits<double>::infinity();
        continue;
      }
      const Mat schur = h.topLeftCorner(n, n) -
                        h.topRightCorner(n, n) * zz.ldlt().solve(h.bottomLeftCorner(n, n));
      lo = std::min(lo, min_eigenvalue(0.5 * (schur + schur.transpose())));
    }
  }
  if (valid < samples) throw InvalidArgument("estimate_coercivity: degenerate sampling");
  return Coercivity{std::max(lo, 1e-12), hi};
}

namespace {

// Calls visit(cell, face, p, z) for the two half-cells of every cell.
template <typename Visit>
void for_each_half_cell(const Grid1D& grid, const Array2D& u, Visit&& visit) {
  const int N = grid.cells();
  const auto n = u.rows();
  const double dx = grid.spacing();
  Vec p(n), z(n);
  for (int i = 0; i < N; ++i) {
    z = u.col(i).matrix();
    for (int side = 0; side < 2; ++side) {
      const int f = i + side;
      if (f == 0 || f == N) {
        p.setZero();
      } else {
        p = ((u.col(f) - u.col(f - 1)) / dx).matrix();
      }
      visit(i, f, p, z);
    }
  }
}

}  // namespace

double discrete_energy(const EnergyDensity& density, const Grid1D& grid, const Array2D& u) {
  if (static_cast<std::size_t>(u.rows()) != density.components())
    throw InvalidArgument("discrete_energy: component count mismatch");
  double total = 0;
  for_each_half_cell(grid, u, [&](int, int, const Vec& p, const Vec& z) {
    total += density.evaluate(p, z);
  });
  return 0.5 * grid.spacing() * total;
}

double discrete_energy(const EnergyDensity& density, const GridField& u) {
  if (density.domain()) u.require_in(*density.domain());
  return discrete_energy(density, u.grid(), u.values());
}

Array2D energy_gradient(const EnergyDensity& density, const Grid1D& grid, const Array2D& u) {
  if (static_cast<std::size_t>(u.rows()) != density.components())
    throw InvalidArgument("energy_gradient: component count mismatch");
  const int N = grid.cells();
  Array2D cell_part = Array2D::Zero(u.rows(), N);
  Array2D flux = Array2D::Zero(u.rows(), N + 1);
  for_each_half_cell(grid, u, [&](int i, int f, const Vec& p, const Vec& z) {
    cell_part.col(i) += 0.5 * density.grad_z(p, z).array();
    if (f > 0 && f < N) flux.col(f) += 0.5 * density.grad_p(p, z).array();
  });
  return cell_part - divergence(grid, flux);
}

Array2D energy_gradient(const EnergyDensity& density, const GridField& u) {
  return energy_gradient(density, u.grid(), u.values());
}

Eigen::SparseMatrix<double> energy_hessian(const EnergyDensity& density, const Grid1D& grid,
                                           const Array2D& u) {
  const int N = grid.cells();
  const auto n = u.rows();
  const double dx = grid.spacing();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(N * 8 * n * n));
  auto index = [N](Eigen::Index j, int i) { return static_cast<int>(j) * N + i; };
  Mat jac(2 * n, 2 * n);
  for_each_half_cell(grid, u, [&](int i, int f, const Vec& p, const Vec& z) {
    const Mat h = (0.5 * dx) * density.hessian(p, z);
    if (f == 0 || f == N) {
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
          triplets.emplace_back(index(a, i), index(b, i), h(n + a, n + b));
      return;
    }
    // local unknowns (u_{f-1}, u_f) -> (p, z)
    jac.setZero();
    for (Eigen::Index a = 0; a < n; ++a) {
      jac(a, a) = -1.0 / dx;
      jac(a, n + a) = 1.0 / dx;
      jac(n + a, (i == f - 1 ? 0 : n) + a) = 1.0;
    }
    const Mat local = jac.transpose() * h * jac;
    const int cells[2] = {f - 1, f};
    for (int ca = 0; ca < 2; ++ca)
      for (int cb = 0; cb < 2; ++cb)
        for (Eigen::Index a = 0; a < n; ++a)
          for (Eigen::Index b = 0; b < n; ++b)
            triplets.emplace_back(index(a, cells[ca]), index(b, cells[cb]),
                                  local(ca * n + a, cb * n + b));
  });
  Eigen::SparseMatrix<double> hess(n * N, n * N);
  hess.setFromTriplets(triplets.begin(), triplets.end());
  return hess;
}

double nonlinear_operator(const EnergyDensity& density, const PairList& pairs,
                          const GridField& u, const GridField& rho) {
  require_same_grid(u, rho);
  if (pairs.size() != u.components())
    throw InvalidArgument("nonlinear_operator: one pair per component expected");
  const int N = u.cells();
  for (std::size_t j = 0; j < rho.components(); ++j)
    if (rho(j, 0) != 0.0 || rho(j, N - 1) != 0.0)
      throw InvalidArgument("nonlinear_operator: test function support touches the boundary");
  const Grid1D& grid = u.grid();
  const Array2D z = energy_gradient(density, u);
  Array2D flux = face_gradient(rho);
  for (std::size_t j = 0; j < u.components(); ++j)
    for (int f = 1; f < N; ++f)
      flux(static_cast<Eigen::Index>(j), f) *= pairs[j].mobility(0.5 * (u(j, f - 1) + u(j, f)));
  return grid.spacing() * (divergence(grid, flux) * z).sum();
}

}  // namespace mmflow
