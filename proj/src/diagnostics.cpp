#include "mmflow/diagnostics.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>

namespace mmflow {

namespace {

constexpr double kCalibrationMargin = 1.05;

// Index of the last record in the calibration quarter (at least step 1).
std::size_t quarter_end(const Records& records) {
  const std::size_t steps = records.size() - 1;
  return std::max<std::size_t>(1, steps / 4);
}

void require_records(const Records& records, const char* who) {
  if (records.empty()) throw InvalidArgument(std::string(who) + ": empty trajectory");
}

// Keeps the instance with the smallest slack.
struct Worst {
  double lhs = 0;
  double rhs = 0;
  double slack = std::numeric_limits<double>::infinity();
  int where = -1;
  void offer(double l, double r, int at) {
    if (r - l < slack) {
      lhs = l;
      rhs = r;
      slack = r - l;
      where = at;
    }
  }
};

EstimateReport from_worst(std::string name, const Worst& w, double tolerance) {
  if (w.where < 0) {
    EstimateReport r = make_report(std::move(name), 0, 0, tolerance);
    r.flags.push_back("vacuous");
    return r;
  }
  EstimateReport r = make_report(std::move(name), w.lhs, w.rhs, tolerance);
  r.fitted_constants.emplace_back("worst_index", w.where);
  return r;
}

double total(const Eigen::VectorXd& v) { return v.sum(); }

}  // namespace

std::string EstimateReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["lhs"] = lhs;
  j["rhs"] = rhs;
  j["slack"] = slack;
  j["tolerance"] = tolerance;
  j["passed"] = passed;
  nlohmann::json fitted = nlohmann::json::object();
  for (const auto& [k, v] : fitted_constants) fitted[k] = v;
  j["fitted_constants"] = fitted;
  j["flags"] = flags;
  return j.dump();
}

EstimateReport make_report(std::string name, double lhs, double rhs, double tolerance) {
  EstimateReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = rhs - lhs;
  r.tolerance = tolerance;
  r.passed = std::isfinite(lhs) && r.slack >= -tolerance;
  return r;
}

EstimateReport check_energy_monotonicity(const Records& records, double tolerance) {
  require_records(records, "energy monotonicity");
  Worst w;
  for (std::size_t k = 1; k < records.size(); ++k)
    w.offer(records[k].energy - records[k - 1].energy, 0.0, static_cast<int>(k));
  return from_worst("energy_monotonicity", w, tolerance);
}

EstimateReport check_telescoping(const Records& records, double tau, double tolerance) {
  require_records(records, "telescoping");
  double sum = 0;
  for (std::size_t k = 1; k < records.size(); ++k) sum += records[k].step_distance * records[k].step_distance;
  return make_report("telescoping", sum, 2 * tau * records.front().energy, tolerance);
}

EstimateReport check_holder_chaining(const Records& records, double tau, double tolerance) {
  require_records(records, "Holder chaining");
  std::vector<double> prefix(records.size(), 0.0);
  for (std::size_t k = 1; k < records.size(); ++k) prefix[k] = prefix[k - 1] + records[k].step_distance;
  const double e0 = records.front().energy;
  Worst w;
  for (std::size_t a = 0; a < records.size(); ++a)
    for (std::size_t b = a + 1; b < records.size(); ++b) {
      const double span = std::max(tau, static_cast<double>(b - a) * tau);
      w.offer(prefix[b] - prefix[a], std::sqrt(2 * e0 * span), static_cast<int>(b - a));
    }
  return from_worst("holder_chaining", w, tolerance);
}

EstimateReport check_moment_envelope(const Records& records, ReferenceCase reference_case) {
  require_records(records, "moment envelope");
  if (reference_case == ReferenceCase::B) {
    EstimateReport r = make_report("moment_envelope", 0, 0, 0);
    r.flags.push_back("not_applicable_case_B");
    return r;
  }
  const std::size_t q = quarter_end(records);
  double m_fit = 0;
  for (std::size_t k = 0; k <= std::min(q, records.size() - 1); ++k)
    m_fit = std::max(m_fit, total(records[k].moments) / (1 + records[k].time));
  Worst w;
  for (std::size_t k = q + 1; k < records.size(); ++k)
    w.offer(total(records[k].moments), kCalibrationMargin * m_fit * (1 + records[k].time),
            static_cast<int>(k));
  EstimateReport r = from_worst("moment_envelope", w, 0);
  r.fitted_constants.emplace_back("M_fit", m_fit);
  return r;
}

EstimateReport check_mass_conservation(const Records& records, double tolerance) {
  require_records(records, "mass conservation");
  Worst w;
  for (std::size_t k = 1; k < records.size(); ++k)
    w.offer((records[k].masses - records.front().masses).lpNorm<Eigen::Infinity>(), 0.0,
            static_cast<int>(k));
  return from_worst("mass_conservation", w, tolerance);
}

EstimateReport check_h1_sup_bound(const Records& records, const std::vector<Snapshot>& states,
                                  const ValueSpace& space, double c_lower) {
  require_records(records, "H1 bound");
  if (!(c_lower > 0)) throw InvalidArgument("H1 bound: C_f must be positive");
  // Taylor with f(0, z_ref) = 0 and zero gradient there gives E >= C_f/2 |.|^2.
  double bound = 2 * records.front().energy / c_lower;
  if (space.reference_case() == ReferenceCase::A)
    for (std::size_t j = 0; j < space.components(); ++j)
      bound += space.width(j) * std::max(0.0, records.front().masses(static_cast<Eigen::Index>(j)));
  Worst w;
  for (const Snapshot& s : states) {
    const double h1 = h1_norm(s.u, space);
    w.offer(h1 * h1, bound, s.step);
  }
  EstimateReport r = from_worst("h1_sup_bound", w, 1e-10 * (1 + bound));
  r.fitted_constants.emplace_back("snapshots", static_cast<double>(states.size()));
  return r;
}

EstimateReport check_h2_budget(const Records& records, ReferenceCase reference_case, double q,
                               double tau) {
  require_records(records, "H2 budget");
  if (reference_case == ReferenceCase::A && !(q > 1.0 / 3.0))
    throw InvalidArgument("H2 budget: case A needs q > 1/3");
  std::vector<double> prefix(records.size(), 0.0);
  for (std::size_t k = 1; k < records.size(); ++k)
    prefix[k] = prefix[k - 1] + tau * records[k].h2_seminorm * records[k].h2_seminorm;
  const std::size_t qe = std::min(quarter_end(records), records.size() - 1);
  Worst w;
  EstimateReport r;
  if (reference_case == ReferenceCase::B) {
    const double h0 = records.front().heat_entropy;
    double ratio = 0;
    for (std::size_t k = 1; k <= qe; ++k) {
      const double drop = h0 - records[k].heat_entropy;
      if (prefix[k] > 0)
        ratio = std::max(ratio, drop > 0 ? prefix[k] / drop : std::numeric_limits<double>::infinity());
    }
    const double c_fit = ratio * h0;
    double plain = 0;
    for (std::size_t k = 1; k <= qe; ++k) plain = std::max(plain, prefix[k]);
    for (std::size_t k = 1; k < records.size(); ++k)
      w.offer(prefix[k], k <= qe ? c_fit : kCalibrationMargin * c_fit, static_cast<int>(k));
    r = from_worst("h2_budget", w, 0);
    r.fitted_constants.emplace_back("C_fit", c_fit);
    r.fitted_constants.emplace_back("entropy_ratio", ratio);
    r.fitted_constants.emplace_back("first_quarter_max", plain);
  } else {
    double c_fit = 0;
    for (std::size_t k = 1; k <= qe; ++k)
      c_fit = std::max(c_fit, prefix[k] / (1 + std::pow(records[k].time, q)));
    for (std::size_t k = 1; k < records.size(); ++k) {
      const double env = c_fit * (1 + std::pow(records[k].time, q));
      w.offer(prefix[k], k <= qe ? env : kCalibrationMargin * env, static_cast<int>(k));
    }
    r = from_worst("h2_budget", w, 0);
    r.fitted_constants.emplace_back("C_q_fit", c_fit);
    r.fitted_constants.emplace_back("q", q);
    // Growth exponent of the prefix sums over T >= 1.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (std::size_t k = 1; k < records.size(); ++k)
      if (records[k].time >= 1 && prefix[k] > 0) {
        const double x = std::log(records[k].time), y = std::log(prefix[k]);
        sx += x, sy += y, sxx += x * x, sxy += x * y, ++count;
      }
    if (count >= 2 && count * sxx - sx * sx > 0)
      r.fitted_constants.emplace_back("growth_exponent", (count * sxy - sx * sy) / (count * sxx - sx * sx));
  }
  if (records.size() < 2) r.flags.push_back("stationary");
  return r;
}

EstimateReport check_entropy_dissipation(const Records& records, double tau, double c_lower,
                                         double dx, double slack_factor) {
  require_records(records, "entropy dissipation");
  Worst w;
  for (std::size_t k = 1; k < records.size(); ++k)
    w.offer(tau * c_lower * records[k].h2_seminorm * records[k].h2_seminorm,
            records[k - 1].heat_entropy - records[k].heat_entropy + slack_factor * dx * dx,
            static_cast<int>(k));
  return from_worst("entropy_dissipation", w, 0);
}

std::vector<EstimateReport> check_classical_estimates(const Records& records,
                                                      const std::vector<Snapshot>& states,
                                                      double tau, const ValueSpace& space,
                                                      double c_lower, double q) {
  return {check_energy_monotonicity(records),
          check_telescoping(records, tau),
          check_holder_chaining(records, tau),
          check_moment_envelope(records, space.reference_case()),
          check_h1_sup_bound(records, states, space, c_lower),
          check_h2_budget(records, space.reference_case(), q, tau)};
}

Array2D heat_step(const Grid1D& grid, const Array2D& u, double ds) {
  const int N = grid.cells();
  const double r = ds / (grid.spacing() * grid.spacing());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < N; ++i) {
    double diag = 1;
    if (i > 0) t.emplace_back(i, i - 1, -r), diag += r;
    if (i < N - 1) t.emplace_back(i, i + 1, -r), diag += r;
    t.emplace_back(i, i, diag);
  }
  Eigen::SparseMatrix<double> a(N, N);
  a.setFromTriplets(t.begin(), t.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  Array2D out(u.rows(), u.cols());
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    const Eigen::VectorXd rhs = u.row(j).transpose().matrix();
    out.row(j) = solver.solve(rhs).transpose().array();
  }
  return out;
}

std::pair<EstimateReport, EstimateReport> heat_flow_dissipation_check(
    const ValueSpace& space, const EnergyDensity& density, const PairList& pairs,
    const GridField& u, double duration, int substeps, double tolerance) {
  if (substeps < 4) throw InvalidArgument("heat flow check: need at least 4 substeps");
  if (!(duration > 0)) throw InvalidArgument("heat flow check: duration must be positive");
  if (!u.lies_inside(space)) throw InvalidArgument("heat flow check: field must lie inside S");
  const double ds = duration / substeps;
  const double e0 = discrete_energy(density, u);
  double h_prev = heat_entropy(space, pairs, u);
  Array2D v = u.values();
  Worst dissipation, entropy;
  for (int m = 1; m <= substeps; ++m) {
    v = heat_step(u.grid(), v, ds);
    const GridField vs(u.grid(), v);
    const double s = m * ds;
    const double h2 = h2_seminorm(vs);
    dissipation.offer(density.coercivity_lower() * h2 * h2, (e0 - discrete_energy(density, vs)) / s, m);
    const double h = heat_entropy(space, pairs, vs);
    entropy.offer(h - h_prev, 0.0, m);
    h_prev = h;
  }
  return {from_worst("heat_flow_dissipation", dissipation, tolerance),
          from_worst("heat_flow_entropy_monotone", entropy, 1e-14 * (1 + std::abs(h_prev)))};
}

double smooth_bump(double t, double center, double radius) {
  const double y = (t - center) / radius;
  if (std::abs(y) >= 1) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - y * y));
}

EstimateReport weak_form_residual(const Trajectory& trajectory, const ValueSpace& space,
                                  const EnergyDensity& density, const PairList& pairs,
                                  const std::function<double(double)>& psi, const GridField& rho) {
  const double tau = trajectory.tau();
  const int K = trajectory.steps();
  if (psi(0.0) != 0.0 || psi(K * tau) != 0.0)
    throw InvalidArgument("weak residual: psi must vanish at 0 and at the final time");
  const int N = rho.cells();
  for (std::size_t j = 0; j < rho.components(); ++j)
    if (rho(j, 0) != 0.0 || rho(j, N - 1) != 0.0)
      throw InvalidArgument("weak residual: rho must vanish near the boundary");
  const Array2D rho_vals = rho.values();
  double sum = 0;
  for (int k = 1; k <= K; ++k) {
    const GridField& u = trajectory.state(k);
    const double dpsi = psi(k * tau) - psi((k - 1) * tau);
    if (dpsi != 0.0) sum += dpsi * u.grid().spacing() * (rho_vals * deviation(u, space)).sum();
    const double p = psi((k - 1) * tau);
    if (p != 0.0) sum += tau * p * nonlinear_operator(density, pairs, u, rho);
  }
  EstimateReport r = make_report("weak_residual", std::abs(sum), std::numeric_limits<double>::infinity(), 0);
  r.fitted_constants.emplace_back("tau", tau);
  r.fitted_constants.emplace_back("C_prime_fit", std::abs(sum) / std::sqrt(tau));
  return r;
}

EstimateReport weak_residual_rate(const EstimateReport& coarse, const EstimateReport& fine,
                                  double max_ratio) {
  const double ratio = coarse.lhs > 0 ? fine.lhs / coarse.lhs : (fine.lhs > 0 ? INFINITY : 0.0);
  EstimateReport r = make_report("weak_residual_rate", ratio, max_ratio, 0);
  r.fitted_constants.emplace_back("residual_coarse", coarse.lhs);
  r.fitted_constants.emplace_back("residual_fine", fine.lhs);
  if (coarse.lhs > 0 && fine.lhs > 0)
    r.fitted_constants.emplace_back("observed_order", std::log(coarse.lhs / fine.lhs) / std::log(4.0));
  return r;
}

EstimateReport decay_fit(const Records& records, double t_min, double t_max) {
  if (!(t_min > 0) || !(t_max > t_min)) throw InvalidArgument("decay fit: bad window");
  std::vector<const TrajectoryRecord*> window;
  for (const auto& r : records)
    if (r.time >= t_min - 1e-12 && r.time <= t_max + 1e-12) window.push_back(&r);
  if (window.size() < 8) throw InvalidArgument("decay fit: fewer than 8 records in the window");
  bool all_zero = true;
  for (const auto* r : window) {
    if (r->energy < 0) throw std::logic_error("decay fit: negative energy");
    if (r->energy != 0) all_zero = false;
  }
  if (all_zero) {
    EstimateReport r = make_report("decay_envelope", 0, 0, 0);
    r.flags.push_back("degenerate");
    return r;
  }
  for (const auto* r : window)
    if (r->energy == 0) throw std::logic_error("decay fit: energy vanished inside the window");
  const double e_ref = window.front()->energy * std::pow(window.front()->time, 0.25);
  Worst w;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(window.size());
  for (const auto* r : window) {
    w.offer(r->energy * std::pow(r->time, 0.25), 10 * e_ref, r->step);
    const double x = std::log(r->time), y = std::log(r->energy);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  EstimateReport r = from_worst("decay_envelope", w, 0);
  r.fitted_constants.emplace_back("p_fit", -slope);
  r.fitted_constants.emplace_back("K_p_fit", std::exp(intercept));
  return r;
}

std::pair<EstimateReport, EstimateReport> interpolation_check(const GridField& f,
                                                              double slack_factor) {
  if (f.components() != 1) throw InvalidArgument("interpolation check: single component expected");
  const Eigen::ArrayXd v = f.values().row(0).transpose();
  if ((v < 0).any()) throw InvalidArgument("interpolation check: negative values");
  const double peak = v.maxCoeff();
  const int N = f.cells();
  if (peak > 0 && std::max(v(0), v(N - 1)) > 1e-12 * peak)
    throw InvalidArgument("interpolation check: support touches the boundary");
  const Grid1D& g = f.grid();
  const double l1 = integrate(g, v);
  const double l2 = std::sqrt(integrate(g, v * v));
  const double d1 = h1_seminorm(f);
  const double d2 = h2_seminorm(f);
  const double eps = slack_factor * g.spacing() * (1 + d2);
  EstimateReport a = make_report("interpolation_l2", l2, std::pow(d2, 0.2) * std::pow(l1, 0.8) + eps, 0);
  EstimateReport b = make_report("interpolation_h1", d1, std::pow(d2, 0.6) * std::pow(l1, 0.4) + eps, 0);
  for (EstimateReport* r : {&a, &b}) {
    r->fitted_constants.emplace_back("l1", l1);
    r->fitted_constants.emplace_back("l2", l2);
    r->fitted_constants.emplace_back("h1_seminorm", d1);
    r->fitted_constants.emplace_back("h2_seminorm", d2);
    r->fitted_constants.emplace_back("eps_disc", eps);
  }
  return {a, b};
}

}  // namespace mmflow
