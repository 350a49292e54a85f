#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmflow/cli_io.hpp"

namespace py = pybind11;
using namespace mmflow;

namespace {

GridField as_field(const Grid1D& grid, const Array2D& values) {
  if (values.cols() != grid.cells())
    throw InvalidArgument("array must have shape (components, cells)");
  return GridField(grid, values);
}

py::dict report_dict(const EstimateReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["lhs"] = r.lhs;
  d["rhs"] = r.rhs;
  d["slack"] = r.slack;
  d["tolerance"] = r.tolerance;
  d["passed"] = r.passed;
  py::dict fitted;
  for (const auto& [k, v] : r.fitted_constants) fitted[py::str(k)] = v;
  d["fitted_constants"] = fitted;
  d["flags"] = r.flags;
  return d;
}

SolverOptions solver_options(double tolerance, int max_iterations, const std::string& solver) {
  SolverOptions o;
  o.tolerance = tolerance;
  o.max_iterations = max_iterations;
  if (solver == "newton") o.kind = SolverKind::newton;
  else if (solver == "primal_dual") o.kind = SolverKind::primal_dual;
  else throw InvalidArgument("solver must be 'newton' or 'primal_dual'");
  return o;
}

py::dict records_dict(const Records& records, std::size_t n) {
  const auto rows = static_cast<Eigen::Index>(records.size());
  Eigen::ArrayXd time(rows), energy(rows), entropy(rows), dist(rows), h2(rows), resid(rows);
  Eigen::ArrayXi step(rows), iters(rows);
  Eigen::ArrayXXd masses(rows, static_cast<Eigen::Index>(n)), moments(rows, static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < rows; ++k) {
    const auto& r = records[static_cast<std::size_t>(k)];
    step(k) = r.step;
    time(k) = r.time;
    energy(k) = r.energy;
    entropy(k) = r.heat_entropy;
    dist(k) = r.step_distance;
    h2(k) = r.h2_seminorm;
    iters(k) = r.solver_iterations;
    resid(k) = r.solver_residual;
    masses.row(k) = r.masses.transpose().array();
    moments.row(k) = r.moments.transpose().array();
  }
  py::dict d;
  d["step"] = step;
  d["time"] = time;
  d["energy"] = energy;
  d["heat_entropy"] = entropy;
  d["masses"] = masses;
  d["moments"] = moments;
  d["step_distance"] = dist;
  d["h2_seminorm"] = h2;
  d["solver_iterations"] = iters;
  d["solver_residual"] = resid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Minimizing-movement solver for cross-diffusion systems with nonlinear mobility";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<MassMismatch>(m, "MassMismatch", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<ConfigParseError>(m, "ConfigParseError", PyExc_ValueError);
  py::register_exception<ConfigValidationError>(m, "ConfigValidationError", PyExc_ValueError);

  py::class_<ValueSpace>(m, "ValueSpace")
      .def_static("case_a", &ValueSpace::case_a, py::arg("lower"), py::arg("upper"))
      .def_static("case_b", &ValueSpace::case_b, py::arg("lower"), py::arg("upper"), py::arg("reference"))
      .def_property_readonly("components", &ValueSpace::components)
      .def_property_readonly("reference_case", [](const ValueSpace& s) { return to_string(s.reference_case()); })
      .def_property_readonly("lower", [](const ValueSpace& s) { return std::vector<double>(s.lower().begin(), s.lower().end()); })
      .def_property_readonly("upper", [](const ValueSpace& s) { return std::vector<double>(s.upper().begin(), s.upper().end()); })
      .def_property_readonly("reference", [](const ValueSpace& s) {
        return std::vector<double>(s.reference().begin(), s.reference().end());
      });

  py::class_<Grid1D>(m, "Grid1D")
      .def(py::init<double, int>(), py::arg("half_length"), py::arg("cells"))
      .def_property_readonly("half_length", &Grid1D::half_length)
      .def_property_readonly("cells", &Grid1D::cells)
      .def_property_readonly("spacing", &Grid1D::spacing)
      .def("centers", [](const Grid1D& g) { return Eigen::ArrayXd(g.centers()); });

  py::class_<EntropyMobilityPair>(m, "EntropyMobilityPair")
      .def_static("logarithmic", &EntropyMobilityPair::logarithmic, py::arg("lower"), py::arg("upper"),
                  py::arg("scale") = 1.0)
      .def("entropy", &EntropyMobilityPair::entropy)
      .def("mobility", &EntropyMobilityPair::mobility);
  m.def("logarithmic_pairs", &logarithmic_pairs, py::arg("space"));

  py::class_<EnergyDensity>(m, "EnergyDensity")
      .def("evaluate", [](const EnergyDensity& d, const Eigen::VectorXd& p, const Eigen::VectorXd& z) {
        return d.evaluate(p, z);
      })
      .def_property_readonly("coercivity_lower", &EnergyDensity::coercivity_lower)
      .def_property_readonly("coercivity_upper", &EnergyDensity::coercivity_upper);

  m.def(
      "cahn_hilliard",
      [](const ValueSpace& space, const Eigen::MatrixXd& gamma, std::vector<std::vector<double>> psi,
         double epsilon, std::vector<double> mu) {
        CahnHilliardParams p;
        p.gamma = gamma;
        p.psi = Potential::separable_polynomial(std::move(psi));
        p.epsilon = epsilon;
        p.a_weights = std::move(mu);
        return make_cahn_hilliard(p, space);
      },
      py::arg("space"), py::arg("gamma"), py::arg("psi"), py::arg("epsilon") = 1.0,
      py::arg("mu") = std::vector<double>{},
      "Psi(z) = sum_j sum_d psi[j][d] z_j^d; the density is normalized at the reference.");
  m.def(
      "quadratic_density", [](const ValueSpace& space, const Eigen::MatrixXd& q) { return make_quadratic_density(q, space); },
      py::arg("space"), py::arg("q"));

  m.def(
      "discrete_energy",
      [](const EnergyDensity& d, const Grid1D& g, const Array2D& u) { return discrete_energy(d, as_field(g, u)); },
      py::arg("density"), py::arg("grid"), py::arg("u"));
  m.def(
      "energy_gradient",
      [](const EnergyDensity& d, const Grid1D& g, const Array2D& u) { return energy_gradient(d, as_field(g, u)); },
      py::arg("density"), py::arg("grid"), py::arg("u"));
  m.def(
      "heat_entropy",
      [](const ValueSpace& s, const PairList& p, const Grid1D& g, const Array2D& u) {
        return heat_entropy(s, p, as_field(g, u));
      },
      py::arg("space"), py::arg("pairs"), py::arg("grid"), py::arg("u"));
  m.def(
      "mass_vector",
      [](const ValueSpace& s, const Grid1D& g, const Array2D& u) { return Eigen::VectorXd(mass_vector(as_field(g, u), s)); },
      py::arg("space"), py::arg("grid"), py::arg("u"));

  m.def(
      "distance",
      [](const ValueSpace& s, const PairList& p, const Grid1D& g, const Array2D& u0, const Array2D& u1, int K,
         double tolerance, int max_iterations, const std::string& solver) {
        DistanceResult r = [&] {
          py::gil_scoped_release release;
          return distance(s, p, as_field(g, u0), as_field(g, u1), K, solver_options(tolerance, max_iterations, solver));
        }();
        py::dict d;
        d["value"] = r.value;
        d["iterations"] = r.report.iterations;
        d["converged"] = r.report.converged;
        d["method"] = r.report.method;
        d["action_per_step"] = std::isfinite(r.value) ? action_per_step(r.path, p) : std::vector<double>{};
        return d;
      },
      py::arg("space"), py::arg("pairs"), py::arg("grid"), py::arg("u0"), py::arg("u1"), py::arg("inner_steps") = 8,
      py::arg("tolerance") = 1e-8, py::arg("max_iterations") = 200000, py::arg("solver") = "newton");

  m.def(
      "jko_step",
      [](const ValueSpace& s, const EnergyDensity& f, const PairList& p, const Grid1D& g, const Array2D& u,
         double tau, int K, double tolerance) {
        SolverOptions o;
        o.tolerance = tolerance;
        StepResult r = [&] {
          py::gil_scoped_release release;
          return jko_step(s, f, p, as_field(g, u), tau, K, o);
        }();
        py::dict d;
        d["u_next"] = Array2D(r.u_next.values());
        d["step_distance"] = r.step_distance;
        d["objective"] = r.objective;
        d["iterations"] = r.report.iterations;
        return d;
      },
      py::arg("space"), py::arg("density"), py::arg("pairs"), py::arg("grid"), py::arg("u"), py::arg("tau"),
      py::arg("inner_steps") = 8, py::arg("tolerance") = 1e-8);

  m.def(
      "run_trajectory",
      [](const ValueSpace& s, const EnergyDensity& f, const PairList& p, const Grid1D& g, const Array2D& u0,
         double tau, int steps, int K, bool keep_states) {
        JkoConfig c;
        c.tau = tau;
        c.steps = steps;
        c.inner_steps = K;
        std::optional<Trajectory> t;
        {
          py::gil_scoped_release release;
          t = run_trajectory(s, f, p, as_field(g, u0), c);
        }
        py::dict d = records_dict(t->records(), s.components());
        if (keep_states) {
          py::list states;
          for (const auto& u : t->states()) states.append(Array2D(u.values()));
          d["states"] = states;
        } else {
          d["final_state"] = Array2D(t->states().back().values());
        }
        return d;
      },
      py::arg("space"), py::arg("density"), py::arg("pairs"), py::arg("grid"), py::arg("u0"), py::arg("tau"),
      py::arg("steps"), py::arg("inner_steps") = 8, py::arg("keep_states") = false);

  m.def(
      "interpolation_check",
      [](const Grid1D& g, const Eigen::ArrayXd& f) {
        GridField field(g, 1);
        if (f.size() != g.cells()) throw InvalidArgument("f must have one value per cell");
        field.values().row(0) = f.transpose();
        auto [a, b] = interpolation_check(field);
        return py::make_tuple(report_dict(a), report_dict(b));
      },
      py::arg("grid"), py::arg("f"));

  m.def("cmd_run",
        [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<double> tau, bool quiet) {
          return cmd_run(config, out, {tau, quiet});
        },
        py::arg("config"), py::arg("out_dir"), py::arg("tau_override") = py::none(), py::arg("quiet") = true);
  m.def("cmd_verify", &cmd_verify, py::arg("run_dir"), py::arg("checks") = std::vector<std::string>{"all"},
        py::arg("quiet") = true);
  m.def("cmd_distance", &cmd_distance, py::arg("config"), py::arg("field_a"), py::arg("field_b"),
        py::arg("out_dir") = ".", py::arg("quiet") = true);
  m.def("cmd_inequalities", &cmd_inequalities, py::arg("samples"), py::arg("seed"), py::arg("out_dir"),
        py::arg("quiet") = true);
}
