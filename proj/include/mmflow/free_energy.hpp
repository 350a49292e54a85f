#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "mmflow/grid.hpp"

namespace mmflow {

/// Small vectors and matrices for pointwise density evaluation (n <= 8).
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 8, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 16, 16>;

inline constexpr std::size_t kMaxComponents = 8;

/// Pointwise free-energy integrand f(p, z), p = du/dx, z = u.
class DensityModel {
 public:
  virtual ~DensityModel() = default;
  virtual std::size_t components() const = 0;
  virtual double value(const Vec& p, const Vec& z) const = 0;
  virtual Vec grad_p(const Vec& p, const Vec& z) const = 0;
  virtual Vec grad_z(const Vec& p, const Vec& z) const = 0;
  /// Full Hessian in block order (pp, pz; zp, zz).
  virtual Mat hessian(const Vec& p, const Vec& z) const = 0;
};

/// Density built from plain functions; missing derivatives fall back to
/// central differences with step 1e-5 (Hessian accuracy roughly 1e-5).
class FunctionDensityModel final : public DensityModel {
 public:
  using ValueFn = std::function<double(const Vec&, const Vec&)>;
  using GradFn = std::function<Vec(const Vec&, const Vec&)>;
  using HessFn = std::function<Mat(const Vec&, const Vec&)>;

  FunctionDensityModel(std::size_t n, ValueFn value, GradFn grad_p = {}, GradFn grad_z = {},
                       HessFn hessian = {});

  std::size_t components() const override { return n_; }
  double value(const Vec& p, const Vec& z) const override { return value_(p, z); }
  Vec grad_p(const Vec& p, const Vec& z) const override;
  Vec grad_z(const Vec& p, const Vec& z) const override;
  Mat hessian(const Vec& p, const Vec& z) const override;

 private:
  Vec full_gradient(const Vec& p, const Vec& z) const;

  std::size_t n_;
  ValueFn value_;
  GradFn grad_p_;
  GradFn grad_z_;
  HessFn hessian_;
};

struct Coercivity {
  double lower = 0;  ///< C_f
  double upper = std::numeric_limits<double>::infinity();  ///< upper growth constant
};

/// Normalized density with its growth constants. Value type; cheap to copy.
class EnergyDensity {
 public:
  EnergyDensity(std::shared_ptr<const DensityModel> model, Coercivity constants = {});

  std::size_t components() const { return model_->components(); }
  double evaluate(const Vec& p, const Vec& z) const { return model_->value(p, z); }
  Vec grad_p(const Vec& p, const Vec& z) const { return model_->grad_p(p, z); }
  Vec grad_z(const Vec& p, const Vec& z) const { return model_->grad_z(p, z); }
  Mat hessian(const Vec& p, const Vec& z) const { return model_->hessian(p, z); }

  double coercivity_lower() const { return constants_.lower; }
  double coercivity_upper() const { return constants_.upper; }
  const Coercivity& coercivity() const { return constants_; }
  EnergyDensity with_coercivity(Coercivity c) const {
    EnergyDensity d(model_, c);
    d.domain_ = domain_;
    return d;
  }
  /// Same density, remembering the value space it was built for.
  EnergyDensity with_domain(const ValueSpace& space) const;
  const std::shared_ptr<const DensityModel>& model() const { return model_; }
  /// Value space known to the density, or null.
  const ValueSpace* domain() const { return domain_.get(); }

 private:
  std::shared_ptr<const DensityModel> model_;
  Coercivity constants_;
  std::shared_ptr<const ValueSpace> domain_;
};

/// Homogeneous potential Psi(z) with derivatives.
struct Potential {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;

  /// Psi(z) = sum_j sum_d coeffs[j][d] * z_j^d.
  static Potential separable_polynomial(std::vector<std::vector<double>> coeffs);
  /// Psi(z) = 1/2 (z - center)^T Q (z - center).
  static Potential quadratic(Mat q, Vec center);
};

/// f(p, z) = 1/2 (epsilon + a(z)) p^T Gamma p + Psi(z),
/// a(z) = sum_k exp(mu_k z_k), or a == 0 when `a_weights` is empty.
struct CahnHilliardParams {
  Mat gamma;
  Potential psi;
  double epsilon = 1.0;
  std::vector<double> a_weights;
};

/// Subtracts the affine part of g at (0, z_ref); growth constants carry over
/// and the result remembers the value space.
EnergyDensity normalize_density(const EnergyDensity& raw, const ValueSpace& space);

/// Generalized Cahn-Hilliard density, normalized, with sampled growth
/// constants (4096 samples). Throws InvalidArgument if Gamma is not
/// symmetric positive definite, Psi is not uniformly convex on S, or the
/// exponential weight violates (epsilon + a) D^2 a >= 2 Da Da^T on S.
EnergyDensity make_cahn_hilliard(const CahnHilliardParams& params, const ValueSpace& space);

/// f(p, z) = 1/2 (p, z - z_ref)^T Q (p, z - z_ref) with constant symmetric Q.
EnergyDensity make_quadratic_density(const Mat& q, const ValueSpace& space);

/// Extreme Hessian eigenvalues over sampled p (ball of radius 10) and z
/// (uniform in S). In case A the lower value is the smallest eigenvalue of
/// the Schur complement on the p-block. The lower value is floored at 1e-12.
Coercivity estimate_coercivity(const EnergyDensity& density, const ValueSpace& space,
                               int samples, std::uint64_t seed = 20240611);

/// sum_i dx/2 [ f(D_{i-1/2}u, u_i) + f(D_{i+1/2}u, u_i) ]. Throws if the
/// density knows its value space and u leaves it; the array overload skips
/// that check.
double discrete_energy(const EnergyDensity& density, const GridField& u);
double discrete_energy(const EnergyDensity& density, const Grid1D& grid, const Array2D& u);

/// L2 gradient of discrete_energy: (1/dx) dE/du_i, shape n x N.
Array2D energy_gradient(const EnergyDensity& density, const GridField& u);
Array2D energy_gradient(const EnergyDensity& density, const Grid1D& grid, const Array2D& u);

/// Hessian of discrete_energy with respect to the raw cell values (not
/// divided by dx). Row/column index of (component j, cell i) is j * N + i.
Eigen::SparseMatrix<double> energy_hessian(const EnergyDensity& density, const Grid1D& grid,
                                           const Array2D& u);

/// Discrete N(u)[rho] = sum dx * div(M(u) D rho) . energy_gradient(u), with
/// the face mobility m(mean of the adjacent cells). `rho` must vanish in
/// the first and last cell.
double nonlinear_operator(const EnergyDensity& density, const PairList& pairs,
                          const GridField& u, const GridField& rho);

}  // namespace mmflow
