#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmflow/jko.hpp"

namespace mmflow {

struct EstimateReport {
  std::string name;
  double lhs = 0;
  double rhs = 0;
  double slack = 0;
  double tolerance = 0;
  bool passed = false;
  std::vector<std::pair<std::string, double>> fitted_constants;
  std::vector<std::string> flags;

  /// One JSON object, no trailing newline.
  std::string to_json() const;
};

/// Report for lhs <= rhs (+ tolerance).
EstimateReport make_report(std::string name, double lhs, double rhs, double tolerance);

using Records = std::vector<TrajectoryRecord>;

/// A stored state u^k.
struct Snapshot {
  int step;
  GridField u;
};

/// Largest per-step energy increase against 0.
EstimateReport check_energy_monotonicity(const Records& records, double tolerance = 1e-8);

/// sum of squared step distances against 2 tau E(u^0) (inf E = 0).
EstimateReport check_telescoping(const Records& records, double tau, double tolerance = 1e-8);

/// Chained step distances between every pair of steps against
/// [2 E(u^0) max(tau, |t - s|)]^{1/2}.
EstimateReport check_holder_chaining(const Records& records, double tau, double tolerance = 1e-8);

/// Case A: summed second moments under M (1 + t), M fitted on the first
/// quarter; case B is flagged not applicable.
EstimateReport check_moment_envelope(const Records& records, ReferenceCase reference_case);

/// Every component mass equal to the initial one.
EstimateReport check_mass_conservation(const Records& records, double tolerance = 1e-8);

/// sup_k ||u^k - z_ref||_{H1}^2 against 2 E(u^0) / C_f (+ sum_j |S_j| mass_j in case A).
EstimateReport check_h1_sup_bound(const Records& records, const std::vector<Snapshot>& states,
                                  const ValueSpace& space, double c_lower);

/// Prefix sums of tau ||D^2 u^k||^2, calibrated on the first quarter and
/// verified with a 5% margin on the rest. Case A: C (1 + T^q); case B: a
/// constant obtained by scaling the first-quarter ratio of prefix sum to
/// heat-entropy decrease up to the initial heat entropy.
EstimateReport check_h2_budget(const Records& records, ReferenceCase reference_case, double q,
                               double tau);

/// tau C_f ||D^2 u^k||^2 <= H(u^{k-1}) - H(u^k) + slack_factor dx^2 at every step.
EstimateReport check_entropy_dissipation(const Records& records, double tau, double c_lower,
                                         double dx, double slack_factor = 10.0);

/// The four energy checks plus the sup-H1 and H2 budget bounds.
std::vector<EstimateReport> check_classical_estimates(const Records& records,
                                                      const std::vector<Snapshot>& states,
                                                      double tau, const ValueSpace& space,
                                                      double c_lower, double q = 0.4);

/// Runs implicit-Euler heat flow and returns two reports: the dissipation
/// (E(u_0) - E(u_s)) / s >= C_f ||D^2 u_s||^2 - tolerance at every substep,
/// and H(u_s) non-increasing.
std::pair<EstimateReport, EstimateReport> heat_flow_dissipation_check(
    const ValueSpace& space, const EnergyDensity& density, const PairList& pairs,
    const GridField& u, double duration, int substeps, double tolerance = 1e-6);

/// One implicit Euler step of du/ds = second_difference(u).
Array2D heat_step(const Grid1D& grid, const Array2D& u, double ds);

/// |sum_k tau [(psi(k tau) - psi((k-1) tau)) / tau <rho, u^k - z_ref>
///            + psi((k-1) tau) N(u^k)[rho]]|, reported with C' = residual / sqrt(tau).
EstimateReport weak_form_residual(const Trajectory& trajectory, const ValueSpace& space,
                                  const EnergyDensity& density, const PairList& pairs,
                                  const std::function<double(double)>& psi, const GridField& rho);

/// Ratio of the residual at tau/4 to the one at tau against max_ratio.
EstimateReport weak_residual_rate(const EstimateReport& coarse, const EstimateReport& fine,
                                  double max_ratio = 0.75);

/// Smooth bump exp(1 - 1 / (1 - ((t - center) / radius)^2)), zero outside.
double smooth_bump(double t, double center, double radius);

/// E(T) T^{1/4} <= 10 E(1) over the window, with a power-law fit E ~ K T^{-p}.
EstimateReport decay_fit(const Records& records, double t_min, double t_max);

/// ||f||_{L2} <= ||f''||^{1/5} ||f||_{L1}^{4/5} + eps and
/// ||f'||_{L2} <= ||f''||^{3/5} ||f||_{L1}^{2/5} + eps, eps = c dx (1 + ||f''||).
std::pair<EstimateReport, EstimateReport> interpolation_check(const GridField& f,
                                                              double slack_factor = 10.0);

}  // namespace mmflow
