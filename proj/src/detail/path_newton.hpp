#pragma once

#include "mmflow/free_energy.hpp"
#include "mmflow/transport.hpp"

namespace mmflow::detail {

/// min  weight * sum_{k,j,f} ds dx w^2 / m(face density)  [+ E(rho^K)]
/// over staggered paths with the first density of the start path fixed.
/// The last density is fixed too unless an energy is given.
struct PathProblem {
  const PairList* pairs = nullptr;
  double weight = 1.0;
  const EnergyDensity* energy = nullptr;
};

struct PathOptimum {
  TransportPath path;
  double objective;
  SolveReport report;
};

/// Equality-constrained damped Newton on the KKT system. `start` must be
/// feasible with every free density strictly inside the pair intervals.
PathOptimum newton_path_solve(const PathProblem& problem, const TransportPath& start,
                              const SolverOptions& opts);

}  // namespace mmflow::detail
