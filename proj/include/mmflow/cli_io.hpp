#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmflow/diagnostics.hpp"

namespace mmflow {

inline constexpr const char* kVersion = "0.3.0";
inline constexpr int kSchemaVersion = 1;

/// Unreadable file, malformed JSON, or fields of the wrong shape.
class ConfigParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed configuration with inconsistent contents.
class ConfigValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InitialGenerator {
  std::string kind;  // gaussian_bump | plateau | from_file
  std::size_t component = 0;
  double center = 0, width = 1, amplitude = 0;  // gaussian_bump
  double left = 0, right = 0, height = 0;       // plateau
  std::string path;                             // from_file
};

struct ScenarioConfig {
  nlohmann::json raw;

  std::size_t n = 1;
  std::vector<double> lower, upper, reference;
  ReferenceCase reference_case = ReferenceCase::B;

  double half_length = 1;
  int cells = 64;

  std::string energy_family;  // cahn_hilliard | generalized | custom-coefficients
  std::vector<std::vector<double>> gamma;
  std::vector<std::vector<double>> psi;
  double epsilon = 1;
  std::vector<double> mu;
  std::vector<std::vector<double>> q_matrix;

  std::string mobility_family = "logarithmic";
  double mobility_scale = 1;

  double floor = 0;
  std::vector<InitialGenerator> generators;

  double tau = 1e-3;
  int steps = 1;
  int inner_steps = 8;
  double tolerance = 1e-8;
  int max_iterations = 500;
  int snapshot_stride = 0;

  std::vector<std::string> checks{"all"};
  double q = 0.4;
  double decay_from = 1, decay_to = 50;
  double weak_psi_center = 0, weak_psi_radius = 0;
  double weak_rho_center = 0, weak_rho_radius = 1;
  double heat_duration = 1e-3;
  int heat_substeps = 20;
};

/// Parses JSON text; throws ConfigParseError.
ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ScenarioConfig load_config(const std::filesystem::path& path);

/// Everything needed to run a scenario, built from a config.
struct Scenario {
  ScenarioConfig config;
  ValueSpace space;
  PairList pairs;
  EnergyDensity density;
  Grid1D grid;
};

/// Throws ConfigValidationError.
Scenario build_scenario(const ScenarioConfig& config);

/// Cell values of the configured initial data; throws ConfigValidationError
/// unless every value lies strictly inside S.
GridField initial_field(const ScenarioConfig& config, const ValueSpace& space, const Grid1D& grid);

std::string format_double(double v);

void write_records_csv(const std::filesystem::path& path, const Records& records, std::size_t n);
Records read_records_csv(const std::filesystem::path& path);

void write_field_csv(const std::filesystem::path& path, const GridField& u);
/// Reads x, u_1..u_n; the grid must match (same cell count and centers).
GridField read_field_csv(const std::filesystem::path& path, const Grid1D& grid);

/// Smallest thread count among MMFLOW_THREADS and the hardware.
unsigned worker_threads();

/// Runs body(i) for i in [0, count) on worker_threads() threads.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

struct RunOptions {
  std::optional<double> tau_override;
  bool quiet = false;
};

int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
            const RunOptions& options = {});
int cmd_verify(const std::filesystem::path& run_dir, const std::vector<std::string>& checks,
               bool quiet = false);
int cmd_distance(const std::filesystem::path& config_path, const std::filesystem::path& field_a,
                 const std::filesystem::path& field_b, const std::filesystem::path& out_dir,
                 bool quiet = false);
int cmd_inequalities(int samples, std::uint64_t seed, const std::filesystem::path& out_dir,
                     bool quiet = false);

/// Per-sample seed derived from a campaign seed; independent of thread count.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// Random sum of 1..5 positive Gaussians, well inside [-8, 8].
GridField random_bump(const Grid1D& grid, std::uint64_t seed);

}  // namespace mmflow
