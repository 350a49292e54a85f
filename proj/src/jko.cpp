#include "mmflow/jko.hpp"

#include <cmath>
#include <optional>

#include "detail/path_newton.hpp"

namespace mmflow {

StepResult jko_step(const ValueSpace& space, const EnergyDensity& density, const PairList& pairs,
                    const GridField& u_prev, double tau, int inner_steps,
                    const SolverOptions& opts) {
  if (!(tau > 0)) throw InvalidArgument("jko_step: tau must be positive");
  if (u_prev.components() != space.components() || pairs.size() != space.components() ||
      density.components() != space.components())
    throw InvalidArgument("jko_step: component count mismatch");
  u_prev.require_in(space);
  if (!u_prev.lies_inside(space)) throw InvalidArgument("jko_step: state must lie strictly inside S");

  detail::PathProblem problem;
  problem.pairs = &pairs;
  problem.weight = 1.0 / (2 * tau);
  problem.energy = &density;
  auto opt = detail::newton_path_solve(problem, TransportPath::constant(u_prev, inner_steps), opts);
  GridField next(u_prev.grid(), opt.path.densities.back());
  const double a = action(opt.path, pairs);
  return {std::move(next), std::move(opt.path), std::sqrt(a), opt.objective, opt.report};
}

TrajectoryRecord make_record(const ValueSpace& space, const EnergyDensity& density,
                             const PairList& pairs, const GridField& u, int step, double tau) {
  TrajectoryRecord r;
  r.step = step;
  r.time = step * tau;
  r.energy = discrete_energy(density, u);
  r.heat_entropy = heat_entropy(space, pairs, u);
  r.masses = mass_vector(u, space);
  r.moments = second_moment(u, space);
  r.h2_seminorm = h2_seminorm(u);
  return r;
}

Trajectory::Trajectory(double tau, GridField u0, TrajectoryRecord r0) : tau_(tau) {
  states_.push_back(std::move(u0));
  records_.push_back(std::move(r0));
}

const GridField& Trajectory::at(double t) const {
  if (t <= 0) return states_.front();
  const double k = std::ceil(t / tau_ - 1e-9);
  return states_[static_cast<std::size_t>(std::min<double>(k, steps()))];
}

void Trajectory::append(GridField u, TrajectoryRecord r) {
  states_.push_back(std::move(u));
  records_.push_back(std::move(r));
}

Trajectory run_trajectory(const ValueSpace& space, const EnergyDensity& density,
                          const PairList& pairs, const GridField& u0, const JkoConfig& config,
                          const StepHook& hook) {
  if (!(config.tau > 0) || config.steps < 0 || config.inner_steps < 1)
    throw InvalidArgument("run_trajectory: tau, steps and K must be positive");
  Trajectory traj(config.tau, u0, make_record(space, density, pairs, u0, 0, config.tau));
  if (hook) hook(u0, traj.records().back());
  for (int k = 1; k <= config.steps; ++k) {
    std::optional<StepResult> step;
    try {
      step = jko_step(space, density, pairs, traj.state(k - 1), config.tau, config.inner_steps,
                      config.solver);
    } catch (const SolverError& e) {
      throw JkoError(e, traj);
    }
    TrajectoryRecord r = make_record(space, density, pairs, step->u_next, k, config.tau);
    r.step_distance = step->step_distance;
    r.solver_iterations = step->report.iterations;
    r.solver_residual = step->report.residual;
    traj.append(std::move(step->u_next), r);
    if (hook) hook(traj.state(k), r);
  }
  return traj;
}

}  // namespace mmflow
