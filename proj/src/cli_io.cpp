#include "mmflow/cli_io.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

namespace mmflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Field access that turns shape errors into ConfigParseError.
template <class T>
T field(const json& block, const char* key, const std::string& where) {
  if (!block.contains(key)) throw ConfigParseError(where + "." + key + " is required");
  try {
    return block.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigParseError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T field_or(const json& block, const char* key, const std::string& where, T fallback) {
  if (!block.contains(key)) return fallback;
  return field<T>(block, key, where);
}

const json& block(const json& root, const char* key) {
  if (!root.contains(key) || !root.at(key).is_object())
    throw ConfigParseError(std::string("missing object '") + key + "'");
  return root.at(key);
}

InitialGenerator parse_generator(const json& g, const fs::path& base_dir) {
  if (!g.is_object()) throw ConfigParseError("initial.generators entries must be objects");
  InitialGenerator gen;
  gen.kind = field<std::string>(g, "kind", "generator");
  gen.component = field_or<std::size_t>(g, "component", "generator", 0);
  if (gen.kind == "gaussian_bump") {
    gen.center = field_or<double>(g, "center", "gaussian_bump", 0.0);
    gen.width = field<double>(g, "width", "gaussian_bump");
    gen.amplitude = field<double>(g, "amplitude", "gaussian_bump");
  } else if (gen.kind == "plateau") {
    auto edges = field<std::vector<double>>(g, "edges", "plateau");
    if (edges.size() != 2) throw ConfigParseError("plateau.edges needs two values");
    gen.left = edges[0];
    gen.right = edges[1];
    gen.height = field<double>(g, "height", "plateau");
  } else if (gen.kind == "from_file") {
    fs::path p = field<std::string>(g, "path", "from_file");
    gen.path = (p.is_absolute() ? p : base_dir / p).string();
  } else {
    throw ConfigParseError("unknown generator kind '" + gen.kind + "'");
  }
  return gen;
}

Records records_from_rows(const std::vector<std::vector<double>>& rows, std::size_t n) {
  Records out;
  for (const auto& r : rows) {
    TrajectoryRecord rec;
    rec.step = static_cast<int>(r[0]);
    rec.time = r[1];
    rec.energy = r[2];
    rec.heat_entropy = r[3];
    rec.masses = Eigen::Map<const Eigen::VectorXd>(r.data() + 4, static_cast<Eigen::Index>(n));
    rec.moments = Eigen::Map<const Eigen::VectorXd>(r.data() + 4 + n, static_cast<Eigen::Index>(n));
    rec.step_distance = r[4 + 2 * n];
    rec.h2_seminorm = r[5 + 2 * n];
    rec.solver_iterations = static_cast<int>(r[6 + 2 * n]);
    rec.solver_residual = r[7 + 2 * n];
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s, const fs::path& where) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error(where.string() + ": bad number '" + s + "'");
  return v;
}

// Header plus numeric rows.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  auto header = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ": row width differs from header");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, path));
    rows.push_back(std::move(row));
  }
  return {header, rows};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json masses_json(const Eigen::VectorXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

std::vector<Snapshot> load_snapshots(const fs::path& dir, const Grid1D& grid) {
  static const std::regex name(R"(snapshot_(\d+)\.csv)");
  std::vector<Snapshot> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, name))
      out.push_back({std::stoi(m[1].str()), read_field_csv(entry.path(), grid)});
  }
  std::sort(out.begin(), out.end(), [](const Snapshot& a, const Snapshot& b) { return a.step < b.step; });
  return out;
}

const std::vector<std::string> kClassical{"energy_monotonicity", "telescoping", "holder_chaining",
                                          "moment_envelope", "h1_sup_bound", "h2_budget"};
const std::vector<std::string> kOther{"mass_conservation", "entropy_dissipation",
                                      "heat_flow_dissipation", "heat_flow_entropy_monotone",
                                      "decay_envelope", "weak_residual"};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ScenarioConfig parse_config(const std::string& text, const fs::path& base_dir) {
  ScenarioConfig c;
  try {
    c.raw = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!c.raw.is_object()) throw ConfigParseError("config must be a JSON object");
  int version = field<int>(c.raw, "schema_version", "config");
  if (version != kSchemaVersion)
    throw ConfigParseError("unsupported schema_version " + std::to_string(version));

  const json& vs = block(c.raw, "value_space");
  c.n = field<std::size_t>(vs, "n", "value_space");
  c.lower = field<std::vector<double>>(vs, "lower", "value_space");
  c.upper = field<std::vector<double>>(vs, "upper", "value_space");
  c.reference = field_or<std::vector<double>>(vs, "reference", "value_space", {});
  std::string tag = field<std::string>(vs, "case", "value_space");
  if (tag != "A" && tag != "B") throw ConfigParseError("value_space.case must be \"A\" or \"B\"");
  c.reference_case = tag == "A" ? ReferenceCase::A : ReferenceCase::B;

  const json& g = block(c.raw, "grid");
  c.half_length = field<double>(g, "L", "grid");
  c.cells = field<int>(g, "N", "grid");

  const json& e = block(c.raw, "energy");
  c.energy_family = field<std::string>(e, "family", "energy");
  if (c.energy_family == "cahn_hilliard" || c.energy_family == "generalized") {
    c.gamma = field<std::vector<std::vector<double>>>(e, "gamma", "energy");
    c.psi = field<std::vector<std::vector<double>>>(e, "psi", "energy");
    c.epsilon = field_or<double>(e, "epsilon", "energy", 1.0);
    if (c.energy_family == "generalized") c.mu = field<std::vector<double>>(e, "mu", "energy");
  } else if (c.energy_family == "custom-coefficients") {
    c.q_matrix = field<std::vector<std::vector<double>>>(e, "Q", "energy");
  } else {
    throw ConfigParseError("unknown energy family '" + c.energy_family + "'");
  }

  if (c.raw.contains("mobility")) {
    const json& m = block(c.raw, "mobility");
    c.mobility_family = field<std::string>(m, "family", "mobility");
    c.mobility_scale = field_or<double>(m, "scale", "mobility", 1.0);
  }

  const json& init = block(c.raw, "initial");
  c.floor = field_or<double>(init, "floor", "initial", 0.0);
  if (init.contains("generators")) {
    if (!init.at("generators").is_array()) throw ConfigParseError("initial.generators must be an array");
    for (const auto& gen : init.at("generators")) c.generators.push_back(parse_generator(gen, base_dir));
  }

  const json& j = block(c.raw, "jko");
  c.tau = field<double>(j, "tau", "jko");
  c.steps = field<int>(j, "steps", "jko");
  c.inner_steps = field_or<int>(j, "K", "jko", 8);
  c.tolerance = field_or<double>(j, "tolerance", "jko", 1e-8);
  c.max_iterations = field_or<int>(j, "max_iterations", "jko", 500);
  c.snapshot_stride = field_or<int>(j, "snapshot_stride", "jko", 0);

  if (c.raw.contains("diagnostics")) {
    const json& d = block(c.raw, "diagnostics");
    c.checks = field_or<std::vector<std::string>>(d, "checks", "diagnostics", {"all"});
    c.q = field_or<double>(d, "q", "diagnostics", 0.4);
    auto window = field_or<std::vector<double>>(d, "decay_window", "diagnostics", {1.0, 50.0});
    if (window.size() != 2) throw ConfigParseError("diagnostics.decay_window needs two values");
    c.decay_from = window[0];
    c.decay_to = window[1];
    if (d.contains("weak_psi")) {
      c.weak_psi_center = field<double>(d.at("weak_psi"), "center", "weak_psi");
      c.weak_psi_radius = field<double>(d.at("weak_psi"), "radius", "weak_psi");
    }
    if (d.contains("weak_rho")) {
      c.weak_rho_center = field<double>(d.at("weak_rho"), "center", "weak_rho");
      c.weak_rho_radius = field<double>(d.at("weak_rho"), "radius", "weak_rho");
    }
    if (d.contains("heat_flow")) {
      c.heat_duration = field_or<double>(d.at("heat_flow"), "duration", "heat_flow", 1e-3);
      c.heat_substeps = field_or<int>(d.at("heat_flow"), "substeps", "heat_flow", 20);
    }
  }
  return c;
}

ScenarioConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

namespace {

Mat to_mat(const std::vector<std::vector<double>>& rows, std::size_t size, const char* what) {
  if (rows.size() != size) throw ConfigValidationError(std::string(what) + " has the wrong size");
  Mat m(size, size);
  for (std::size_t r = 0; r < size; ++r) {
    if (rows[r].size() != size) throw ConfigValidationError(std::string(what) + " has the wrong size");
    for (std::size_t col = 0; col < size; ++col) m(r, col) = rows[r][col];
  }
  return m;
}

Scenario build_scenario_unchecked(const ScenarioConfig& c) {
  if (c.n < 1 || c.n > kMaxComponents) throw ConfigValidationError("value_space.n must be in [1, 8]");
  if (c.lower.size() != c.n || c.upper.size() != c.n)
    throw ConfigValidationError("value_space bounds must have n entries");
  if (c.mobility_family == "custom")
    throw ConfigValidationError("custom mobilities are available through the library API only");
  if (c.mobility_family != "logarithmic")
    throw ConfigValidationError("unknown mobility family '" + c.mobility_family + "'");
  if (!(c.mobility_scale > 0)) throw ConfigValidationError("mobility.scale must be positive");
  if (!(c.tau > 0)) throw ConfigValidationError("jko.tau must be positive");
  if (c.steps < 1) throw ConfigValidationError("jko.steps must be at least 1");
  if (c.inner_steps < 1) throw ConfigValidationError("jko.K must be at least 1");
  if (!(c.tolerance > 0)) throw ConfigValidationError("jko.tolerance must be positive");
  if (c.max_iterations < 1) throw ConfigValidationError("jko.max_iterations must be at least 1");
  if (c.snapshot_stride < 0) throw ConfigValidationError("jko.snapshot_stride must be non-negative");

  ValueSpace space = c.reference_case == ReferenceCase::A
                         ? ValueSpace::case_a(c.lower, c.upper)
                         : ValueSpace::case_b(c.lower, c.upper, c.reference);
  PairList pairs;
  for (std::size_t j = 0; j < c.n; ++j)
    pairs.push_back(EntropyMobilityPair::logarithmic(c.lower[j], c.upper[j], c.mobility_scale));

  std::optional<EnergyDensity> density;
  if (c.energy_family == "custom-coefficients") {
    density = make_quadratic_density(to_mat(c.q_matrix, 2 * c.n, "energy.Q"), space);
  } else {
    if (c.psi.size() != c.n) throw ConfigValidationError("energy.psi needs one coefficient list per component");
    CahnHilliardParams p;
    p.gamma = to_mat(c.gamma, c.n, "energy.gamma");
    p.psi = Potential::separable_polynomial(c.psi);
    p.epsilon = c.epsilon;
    p.a_weights = c.mu;
    if (c.energy_family == "generalized" && c.mu.size() != c.n)
      throw ConfigValidationError("energy.mu needs n weights");
    density = make_cahn_hilliard(p, space);
  }
  Grid1D grid(c.half_length, c.cells);
  return Scenario{c, std::move(space), std::move(pairs), *density, grid};
}

}  // namespace

Scenario build_scenario(const ScenarioConfig& config) {
  try {
    return build_scenario_unchecked(config);
  } catch (const InvalidArgument& e) {
    throw ConfigValidationError(e.what());
  }
}

GridField initial_field(const ScenarioConfig& c, const ValueSpace& space, const Grid1D& grid) {
  GridField u = GridField::constant(grid, space.reference());
  for (const auto& g : c.generators) {
    if (g.component >= space.components())
      throw ConfigValidationError("generator component out of range");
    Eigen::Index j = static_cast<Eigen::Index>(g.component);
    if (g.kind == "from_file") {
      try {
        u = read_field_csv(g.path, grid);
      } catch (const std::exception& e) {
        throw ConfigValidationError(std::string("from_file: ") + e.what());
      }
      if (u.components() != space.components())
        throw ConfigValidationError("from_file field has the wrong number of components");
    } else if (g.kind == "gaussian_bump") {
      if (!(g.width > 0)) throw ConfigValidationError("gaussian_bump.width must be positive");
      for (int i = 0; i < grid.cells(); ++i) {
        double x = grid.center(i) - g.center;
        u.values()(j, i) += g.amplitude * std::exp(-x * x / (2 * g.width * g.width));
      }
    } else if (g.kind == "plateau") {
      if (!(g.left < g.right)) throw ConfigValidationError("plateau.edges must be increasing");
      for (int i = 0; i < grid.cells(); ++i)
        if (grid.center(i) >= g.left && grid.center(i) <= g.right) u.values()(j, i) += g.height;
    }
  }
  u.values() += c.floor;
  if (!u.lies_inside(space))
    throw ConfigValidationError("initial data must lie strictly inside S (check amplitudes and floor)");
  return u;
}

void write_records_csv(const fs::path& path, const Records& records, std::size_t n) {
  std::string out = "step,time,energy,heat_entropy";
  for (std::size_t j = 1; j <= n; ++j) out += ",mass_" + std::to_string(j);
  for (std::size_t j = 1; j <= n; ++j) out += ",moment_" + std::to_string(j);
  out += ",step_distance,h2_seminorm,solver_iters,solver_residual\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + "," + format_double(r.time) + "," + format_double(r.energy) + "," +
           format_double(r.heat_entropy);
    for (Eigen::Index j = 0; j < r.masses.size(); ++j) out += "," + format_double(r.masses(j));
    for (Eigen::Index j = 0; j < r.moments.size(); ++j) out += "," + format_double(r.moments(j));
    out += "," + format_double(r.step_distance) + "," + format_double(r.h2_seminorm) + "," +
           std::to_string(r.solver_iterations) + "," + format_double(r.solver_residual) + "\n";
  }
  write_text(path, out);
}

Records read_records_csv(const fs::path& path) {
  auto [header, rows] = read_table(path);
  if (header.size() < 10 || header.size() % 2 != 0 || header[0] != "step")
    throw std::runtime_error(path.string() + ": not a records table");
  std::size_t n = (header.size() - 8) / 2;
  return records_from_rows(rows, n);
}

void write_field_csv(const fs::path& path, const GridField& u) {
  std::string out = "x";
  for (std::size_t j = 1; j <= u.components(); ++j) out += ",u_" + std::to_string(j);
  out += "\n";
  for (int i = 0; i < u.cells(); ++i) {
    out += format_double(u.grid().center(i));
    for (std::size_t j = 0; j < u.components(); ++j) out += "," + format_double(u(j, i));
    out += "\n";
  }
  write_text(path, out);
}

GridField read_field_csv(const fs::path& path, const Grid1D& grid) {
  auto [header, rows] = read_table(path);
  if (header.size() < 2 || header[0] != "x") throw std::runtime_error(path.string() + ": not a field table");
  if (static_cast<int>(rows.size()) != grid.cells())
    throw std::runtime_error(path.string() + ": cell count differs from the configured grid");
  GridField u(grid, header.size() - 1);
  for (int i = 0; i < grid.cells(); ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (std::abs(row[0] - grid.center(i)) > 1e-9 * (1 + grid.half_length()))
      throw std::runtime_error(path.string() + ": cell centers differ from the configured grid");
    for (std::size_t j = 0; j + 1 < row.size(); ++j) u(j, i) = row[j + 1];
  }
  return u;
}

unsigned worker_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MMFLOW_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) return std::min(hw, static_cast<unsigned>(cap));
  }
  return hw;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

int cmd_run(const fs::path& config_path, const fs::path& out_dir, const RunOptions& options) {
  std::optional<Scenario> scenario;
  std::optional<GridField> u0;
  try {
    ScenarioConfig config = load_config(config_path);
    if (options.tau_override) {
      if (!(*options.tau_override > 0)) throw ConfigValidationError("--tau-override must be positive");
      config.tau = *options.tau_override;
    }
    scenario = build_scenario(config);
    u0 = initial_field(config, scenario->space, scenario->grid);
  } catch (const ConfigParseError& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigValidationError& e) {
    std::cerr << "config validation error: " << e.what() << "\n";
    return 2;
  }
  const ScenarioConfig& c = scenario->config;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "cannot create " << out_dir << ": " << ec.message() << "\n";
    return 2;
  }

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = c.raw;
  manifest["config_dir"] = fs::absolute(config_path).parent_path().string();
  manifest["effective_tau"] = c.tau;
  manifest["initial_masses"] = masses_json(mass_vector(*u0, scenario->space));
  if (!options.quiet && c.reference_case == ReferenceCase::A) {
    Eigen::VectorXd m = mass_vector(*u0, scenario->space);
    for (Eigen::Index j = 0; j < m.size(); ++j)
      std::cout << "initial mass " << j + 1 << ": " << format_double(m(j)) << "\n";
  }

  JkoConfig jko;
  jko.tau = c.tau;
  jko.steps = c.steps;
  jko.inner_steps = c.inner_steps;
  jko.solver.tolerance = c.tolerance;
  jko.solver.max_iterations = c.max_iterations;

  Records records;
  auto hook = [&](const GridField& u, const TrajectoryRecord& r) {
    records.push_back(r);
    bool stride_hit = c.snapshot_stride > 0 && r.step % c.snapshot_stride == 0;
    if (r.step == 0 || r.step == c.steps || stride_hit)
      write_field_csv(out_dir / ("snapshot_" + std::to_string(r.step) + ".csv"), u);
    if (!options.quiet && c.steps >= 10 && r.step % (c.steps / 10) == 0)
      std::cout << "step " << r.step << "/" << c.steps << "  E = " << format_double(r.energy) << "\n";
  };

  auto start = std::chrono::steady_clock::now();
  int code = 0;
  try {
    run_trajectory(scenario->space, scenario->density, scenario->pairs, *u0, jko, hook);
    manifest["status"] = "ok";
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    if (!records.empty()) {
      const GridField& last = dynamic_cast<const JkoError*>(&e)
                                  ? dynamic_cast<const JkoError&>(e).partial().states().back()
                                  : *u0;
      write_field_csv(out_dir / ("snapshot_" + std::to_string(records.back().step) + ".csv"), last);
    }
    manifest["status"] = "solver_failure";
    manifest["error"] = e.what();
    code = 3;
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["steps_completed"] = records.empty() ? 0 : records.back().step;
  manifest["wall_time_seconds"] = wall;
  write_records_csv(out_dir / "records.csv", records, scenario->space.components());
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  if (!options.quiet && code == 0)
    std::cout << "wrote " << records.size() << " records to " << (out_dir / "records.csv").string() << "\n";
  return code;
}

int cmd_verify(const fs::path& run_dir, const std::vector<std::string>& checks, bool quiet) {
  if (!fs::is_directory(run_dir) || !fs::exists(run_dir / "manifest.json") ||
      !fs::exists(run_dir / "records.csv")) {
    std::cerr << "missing run artifacts in " << run_dir << "\n";
    return 2;
  }
  std::optional<Scenario> scenario;
  Records records;
  std::vector<Snapshot> snaps;
  double tau = 0;
  try {
    std::ifstream in(run_dir / "manifest.json");
    json manifest = json::parse(in);
    tau = manifest.at("effective_tau").get<double>();
    ScenarioConfig config =
        parse_config(manifest.at("config").dump(), manifest.value("config_dir", std::string(".")));
    scenario = build_scenario(config);
    records = read_records_csv(run_dir / "records.csv");
    snaps = load_snapshots(run_dir, scenario->grid);
  } catch (const std::exception& e) {
    std::cerr << "cannot load run artifacts: " << e.what() << "\n";
    return 2;
  }
  if (records.empty() || snaps.empty()) {
    std::cerr << "run directory holds no records or snapshots\n";
    return 2;
  }
  const ScenarioConfig& c = scenario->config;
  const ValueSpace& space = scenario->space;
  bool case_a = space.reference_case() == ReferenceCase::A;
  bool full_history = static_cast<int>(snaps.size()) == static_cast<int>(records.size());

  std::vector<std::string> requested = checks.empty() ? c.checks : checks;
  std::set<std::string> selected;
  for (const auto& name : requested) {
    if (name == "all") {
      selected.insert(kClassical.begin(), kClassical.end());
      selected.insert({"mass_conservation", "entropy_dissipation", "heat_flow_dissipation",
                       "heat_flow_entropy_monotone"});
      if (case_a) selected.insert("decay_envelope");
      if (full_history && c.weak_psi_radius > 0) selected.insert("weak_residual");
    } else if (std::find(kClassical.begin(), kClassical.end(), name) != kClassical.end() ||
               std::find(kOther.begin(), kOther.end(), name) != kOther.end()) {
      selected.insert(name);
    } else {
      std::cerr << "unknown check '" << name << "'\n";
      return 2;
    }
  }
  if (selected.count("weak_residual") && !full_history) {
    std::cerr << "weak_residual needs a snapshot of every step (jko.snapshot_stride = 1)\n";
    return 2;
  }

  double c_lower = scenario->density.coercivity_lower();
  std::vector<EstimateReport> reports;
  try {
    if (std::any_of(kClassical.begin(), kClassical.end(), [&](auto& n) { return selected.count(n); }))
      for (auto& r : check_classical_estimates(records, snaps, tau, space, c_lower, c.q))
        if (selected.count(r.name)) reports.push_back(r);
    if (selected.count("mass_conservation")) reports.push_back(check_mass_conservation(records));
    if (selected.count("entropy_dissipation"))
      reports.push_back(check_entropy_dissipation(records, tau, c_lower, scenario->grid.spacing()));
    if (selected.count("heat_flow_dissipation") || selected.count("heat_flow_entropy_monotone")) {
      // First and last stored states; the worse of the two is reported.
      std::optional<std::pair<EstimateReport, EstimateReport>> worst;
      for (const Snapshot* s : {&snaps.front(), &snaps.back()}) {
        auto pair = heat_flow_dissipation_check(space, scenario->density, scenario->pairs, s->u,
                                                c.heat_duration, c.heat_substeps);
        if (!worst) {
          worst = pair;
          continue;
        }
        if (pair.first.slack < worst->first.slack) worst->first = pair.first;
        if (pair.second.slack < worst->second.slack) worst->second = pair.second;
      }
      if (selected.count("heat_flow_dissipation")) reports.push_back(worst->first);
      if (selected.count("heat_flow_entropy_monotone")) reports.push_back(worst->second);
    }
    if (selected.count("decay_envelope")) reports.push_back(decay_fit(records, c.decay_from, c.decay_to));
    if (selected.count("weak_residual")) {
      Trajectory t(tau, snaps.front().u, records.front());
      for (std::size_t k = 1; k < snaps.size(); ++k) t.append(snaps[k].u, records[k]);
      GridField rho(scenario->grid, space.components());
      for (int i = 0; i < scenario->grid.cells(); ++i)
        rho.values().col(i).setConstant(
            smooth_bump(scenario->grid.center(i), c.weak_rho_center, c.weak_rho_radius));
      double pc = c.weak_psi_center, pr = c.weak_psi_radius;
      reports.push_back(weak_form_residual(t, space, scenario->density, scenario->pairs,
                                           [=](double s) { return smooth_bump(s, pc, pr); }, rho));
    }
  } catch (const std::exception& e) {
    std::cerr << "diagnostics error: " << e.what() << "\n";
    return 2;
  }

  std::string lines;
  bool all_passed = true;
  for (const auto& r : reports) {
    lines += r.to_json() + "\n";
    all_passed = all_passed && r.passed;
    if (!quiet)
      std::printf("%-28s %s  lhs=%s rhs=%s slack=%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  format_double(r.lhs).c_str(), format_double(r.rhs).c_str(),
                  format_double(r.slack).c_str());
  }
  write_text(run_dir / "reports.jsonl", lines);
  return all_passed ? 0 : 4;
}

int cmd_distance(const fs::path& config_path, const fs::path& field_a, const fs::path& field_b,
                 const fs::path& out_dir, bool quiet) {
  std::optional<Scenario> scenario;
  std::optional<GridField> a, b;
  try {
    scenario = build_scenario(load_config(config_path));
    a = read_field_csv(field_a, scenario->grid);
    b = read_field_csv(field_b, scenario->grid);
    if (a->components() != scenario->space.components() || b->components() != scenario->space.components())
      throw ConfigValidationError("fields have the wrong number of components");
    if (!a->lies_in(scenario->space) || !b->lies_in(scenario->space))
      throw ConfigValidationError("fields must take values in S");
  } catch (const ConfigParseError& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  }
  const ScenarioConfig& c = scenario->config;
  SolverOptions opts;
  opts.tolerance = c.tolerance;
  opts.max_iterations = c.max_iterations;
  try {
    DistanceResult d = distance(scenario->space, scenario->pairs, *a, *b, c.inner_steps, opts);
    std::cout << format_double(d.value) << "\n";
    if (!quiet) std::cerr << "method " << d.report.method << ", " << d.report.iterations << " iterations\n";
    if (std::isfinite(d.value)) {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      std::string out = "inner_step,action\n";
      auto per_step = action_per_step(d.path, scenario->pairs);
      for (std::size_t k = 0; k < per_step.size(); ++k)
        out += std::to_string(k) + "," + format_double(per_step[k]) + "\n";
      write_text(out_dir / "path.csv", out);
    }
  } catch (const MassMismatch& e) {
    std::cerr << "mass mismatch: " << e.what() << "\n";
    return 5;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

GridField random_bump(const Grid1D& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(1, 5);
  std::uniform_real_distribution<double> weight(0.1, 1.0), center(-2.0, 2.0), sigma(0.2, 0.7);
  int terms = count(rng);
  GridField f(grid, 1);
  for (int t = 0; t < terms; ++t) {
    double w = weight(rng), c = center(rng), s = sigma(rng);
    for (int i = 0; i < grid.cells(); ++i) {
      double x = grid.center(i) - c;
      f(0, i) += w * std::exp(-x * x / (2 * s * s));
    }
  }
  return f;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> words;
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

int cmd_inequalities(int samples, std::uint64_t seed, const fs::path& out_dir, bool quiet) {
  if (samples < 1) {
    std::cerr << "--samples must be at least 1\n";
    return 2;
  }
  Grid1D grid(8.0, 1024);
  GridField gauss(grid, 1);
  for (int i = 0; i < grid.cells(); ++i) gauss(0, i) = std::exp(-grid.center(i) * grid.center(i));

  std::vector<std::pair<EstimateReport, EstimateReport>> rows(static_cast<std::size_t>(samples) + 1);
  rows[0] = interpolation_check(gauss);
  try {
    parallel_for(static_cast<std::size_t>(samples), [&](std::size_t s) {
      rows[s + 1] = interpolation_check(random_bump(grid, sample_seed(seed, s)));
    });
  } catch (const std::exception& e) {
    std::cerr << "interpolation check error: " << e.what() << "\n";
    return 2;
  }

  std::string out = "sample,l2_lhs,l2_rhs,h1_lhs,h1_rhs,passed\n";
  int failures = 0;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    const auto& [l2, h1] = rows[s];
    bool ok = l2.passed && h1.passed;
    failures += ok ? 0 : 1;
    out += (s == 0 ? std::string("gaussian") : std::to_string(s - 1)) + "," + format_double(l2.lhs) + "," +
           format_double(l2.rhs) + "," + format_double(h1.lhs) + "," + format_double(h1.rhs) + "," +
           (ok ? "1" : "0") + "\n";
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  write_text(out_dir / "inequalities.csv", out);
  if (!quiet) {
    auto eps = [](const EstimateReport& r) {
      for (const auto& [k, v] : r.fitted_constants)
        if (k == "eps_disc") return v;
      return 0.0;
    };
    const auto& [l2, h1] = rows[0];
    std::printf("gaussian  L2: %.6f <= %.6f (+ %.4f)   H1: %.6f <= %.6f (+ %.4f)\n", l2.lhs, l2.rhs - eps(l2),
                eps(l2), h1.lhs, h1.rhs - eps(h1), eps(h1));
    std::printf("%d random bumps, %d failures\n", samples, failures);
  }
  return failures == 0 ? 0 : 4;
}

}  // namespace mmflow
