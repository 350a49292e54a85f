#pragma once

#include <functional>
#include <vector>

#include "mmflow/free_energy.hpp"
#include "mmflow/transport.hpp"

namespace mmflow {

struct JkoConfig {
  double tau = 1e-3;
  int steps = 1;
  int inner_steps = 8;
  SolverOptions solver;
};

struct StepResult {
  GridField u_next;
  TransportPath path;
  double step_distance;
  /// action / (2 tau) + E(u_next)
  double objective;
  SolveReport report;
};

/// One minimizing-movement step: minimizes action(path) / (2 tau) + E(endpoint)
/// over paths leaving u_prev, jointly in the path and its free endpoint.
/// u_prev must lie strictly inside S.
StepResult jko_step(const ValueSpace& space, const EnergyDensity& density, const PairList& pairs,
                    const GridField& u_prev, double tau, int inner_steps,
                    const SolverOptions& opts = {});

struct TrajectoryRecord {
  int step = 0;
  double time = 0;
  double energy = 0;
  double heat_entropy = 0;
  Eigen::VectorXd masses;
  Eigen::VectorXd moments;
  double step_distance = 0;
  double h2_seminorm = 0;
  int solver_iterations = 0;
  double solver_residual = 0;
};

TrajectoryRecord make_record(const ValueSpace& space, const EnergyDensity& density,
                             const PairList& pairs, const GridField& u, int step, double tau);

/// Discrete solution: states u^0..u^K at times k tau with their records.
class Trajectory {
 public:
  Trajectory(double tau, GridField u0, TrajectoryRecord r0);

  double tau() const { return tau_; }
  int steps() const { return static_cast<int>(states_.size()) - 1; }
  const GridField& state(int k) const { return states_.at(static_cast<std::size_t>(k)); }
  const std::vector<GridField>& states() const { return states_; }
  const std::vector<TrajectoryRecord>& records() const { return records_; }
  /// Piecewise-constant interpolant t -> u^{ceil(t / tau)}, clamped to the last state.
  const GridField& at(double t) const;

  void append(GridField u, TrajectoryRecord r);

 private:
  double tau_;
  std::vector<GridField> states_;
  std::vector<TrajectoryRecord> records_;
};

/// Step failure with everything computed up to the failing step.
class JkoError : public SolverError {
 public:
  JkoError(const SolverError& cause, Trajectory partial)
      : SolverError(cause.what(), cause.best_value(), cause.report()), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

/// Called after every accepted step (and once for the initial state).
using StepHook = std::function<void(const GridField& u, const TrajectoryRecord& record)>;

Trajectory run_trajectory(const ValueSpace& space, const EnergyDensity& density,
                          const PairList& pairs, const GridField& u0, const JkoConfig& config,
                          const StepHook& hook = {});

}  // namespace mmflow
