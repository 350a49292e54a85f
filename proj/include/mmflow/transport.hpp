#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mmflow/grid.hpp"

namespace mmflow {

/// Staggered space-time path: densities at inner-time nodes k = 0..K
/// (n x N, cell centered), momenta at inner-time midpoints k + 1/2
/// (n x (N+1), face centered, zero on the two boundary faces).
struct TransportPath {
  Grid1D grid;
  int inner_steps;
  std::vector<Array2D> densities;
  std::vector<Array2D> momenta;

  TransportPath(Grid1D grid, std::size_t components, int inner_steps);

  /// Path that stays at u with zero momentum.
  static TransportPath constant(const GridField& u, int inner_steps);

  std::size_t components() const { return static_cast<std::size_t>(densities.front().rows()); }
  double inner_step() const { return 1.0 / inner_steps; }
  GridField density(int k) const { return GridField(grid, densities[static_cast<std::size_t>(k)]); }
};

enum class SolverKind { newton, primal_dual };

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 200000;
  SolverKind kind = SolverKind::newton;
};

struct SolveReport {
  int iterations = 0;
  /// Newton: half the squared Newton decrement. Primal-dual: max of the
  /// scaled primal and dual step lengths.
  double residual = 0;
  double constraint_residual = 0;
  bool converged = false;
  std::string method;
};

/// Raised when an optimizer does not reach its tolerance. Carries the best
/// objective seen and the final report.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double best_value, SolveReport report)
      : std::runtime_error(what), best_value_(best_value), report_(std::move(report)) {}
  double best_value() const { return best_value_; }
  const SolveReport& report() const { return report_; }

 private:
  double best_value_;
  SolveReport report_;
};

class MassMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Perspective integrand w^2/m with 0 for (0, 0) and +inf for (w != 0, 0).
double perspective(double w, double m);

/// Mobility argument of a face at one inner step: mean of the two adjacent
/// cells at the two adjacent inner-time nodes.
double face_density(const TransportPath& path, int k, std::size_t j, int face);

/// sum over k, j, faces of ds * dx * perspective(w, m(face density)).
double action(const TransportPath& path, const PairList& pairs);

/// Action of each inner step separately.
std::vector<double> action_per_step(const TransportPath& path, const PairList& pairs);

/// max |(u^{k+1}-u^k)/ds + (w_{i+1/2}-w_{i-1/2})/dx|.
double continuity_residual(const TransportPath& path);

struct ProxPoint {
  double w;
  double rho;
};

/// argmin over (w', r) of perspective(w', m(r)) + ((w'-w)^2 + (r-rho)^2) / (2 sigma),
/// with r restricted to the pair's interval.
ProxPoint perspective_prox(double w, double rho, double sigma, const EntropyMobilityPair& pair);

struct DistanceResult {
  double value;
  TransportPath path;
  SolveReport report;
};

/// Componentwise mass differences above this are a mismatch.
inline constexpr double kMassTolerance = 1e-8;

/// Transport distance between u0 and u1 with K inner steps.
///
/// Unequal component masses give an infinite distance under the zero-flux
/// boundary: MassMismatch is thrown in case A, +inf is returned in case B.
/// The Newton solver needs both endpoints strictly inside S.
DistanceResult distance(const ValueSpace& space, const PairList& pairs, const GridField& u0,
                        const GridField& u1, int inner_steps, const SolverOptions& opts = {});

}  // namespace mmflow
