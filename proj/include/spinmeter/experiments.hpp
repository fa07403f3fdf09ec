#pragma once

// Config-driven experiment runners: relaxation, entropy, calibration,
// quench and coupling sweep.  Every run checks conservation laws and the
// physical validity of each reduced density matrix it samples, and throws
// ConservationError on a violation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spinmeter/hamiltonian.hpp"
#include "spinmeter/states.hpp"

namespace spinmeter {

enum class Scenario { relax, entropy, calibrate, quench, sweep };

std::string to_string(Scenario scenario);
Scenario scenario_from_string(const std::string& name);

/// Conservation telemetry limits.
inline constexpr double kNormLimit = 1e-10;
inline constexpr double kSystemSpinLimit = 1e-10;
inline constexpr double kBranchWeightLimit = 1e-10;
inline constexpr double kEnergyRelativeLimit = 1e-8;

/// Columns propagated together in one block.
inline constexpr int kMaxBlockWidth = 16;
/// Working-set ceiling of a block (state plus three propagation buffers).
inline constexpr double kMemoryLimitBytes = 4.0 * (1ULL << 30);

struct ConservationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SweepSpec {
  /// Coupling varied: "I_SA", "I_AE" or "K".
  std::string axis = "I_AE";
  /// Signed coupling values.  Default: the sign of the default value times 16
  /// magnitudes log-spaced over [1e-3, 1].
  std::vector<double> values;
  std::vector<int> n_env = {8, 10, 12};
  double t_eval = 1e3;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::relax;
  int N_A = 4;
  int N_E = 12;
  double a = 0.75;
  ReadyState ready;
  HamiltonianSpec hamiltonian;
  int n_r = 15;
  std::uint64_t master_seed = 1;
  /// Draw fresh couplings for every realization instead of one shared set.
  bool redraw_couplings = false;
  /// Sample times; the default log grid of the scenario when empty.
  std::vector<double> time_grid;
  /// Quench: window edges, and whether S is ever coupled (false = control).
  double t1 = 2.5e3;
  double t2 = 5e3;
  bool coupling_enabled = true;
  /// Calibration.
  std::vector<double> a_grid;
  double t_measure = 1e4;
  SweepSpec sweep;
  std::string output = "out";
  int threads = 1;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

/// Scenario defaults (reference couplings, N_A = 4, N_E = 12).
ExperimentConfig default_config(Scenario scenario);

/// Parses a config object.  Keys absent from the object keep the scenario
/// defaults; unknown keys are rejected.  The object must name its scenario
/// unless `scenario` is given.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  std::optional<Scenario> scenario = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<Scenario> scenario = std::nullopt);
nlohmann::json to_json(const ExperimentConfig& config);

/// 0 followed by `per_decade` log-spaced points per decade from t_min up to
/// t_max (t_max always included).
std::vector<double> log_time_grid(double t_min, double t_max, int per_decade = 60);

/// The grid a config runs on: explicit or default, plus window edges.
std::vector<double> resolved_time_grid(const ExperimentConfig& config);

/// 11 points 0, 0.1, ..., 1.
std::vector<double> default_a_grid();

/// Sign of the default value times magnitudes log-spaced over [lo, hi].
std::vector<double> default_sweep_values(const std::string& axis, int count = 16, double lo = 1e-3,
                                         double hi = 1.0);

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  /// Standard error of the slope (0 for two points or an exact fit).
  double slope_stderr = 0.0;
};

/// Ordinary least squares.  R^2 = 1 - SS_res / SS_tot, with R^2 = 0 when y
/// is constant.  Throws std::invalid_argument with fewer than two distinct x.
FitResult linear_fit(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample standard deviation (n - 1 denominator; 0 for one sample).
MeanStd aggregate(std::span<const double> samples);

struct Series {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Largest violation seen of each conservation check.
struct Telemetry {
  double norm_drift = 0.0;
  double system_spin_drift = 0.0;
  double branch_weight_drift = 0.0;
  double energy_relative_drift = 0.0;
  long long samples = 0;
  long long rdm_checks = 0;

  void merge(const Telemetry& other);
  nlohmann::json to_json() const;
};

struct TimeSeriesResult {
  std::vector<double> times;
  /// Observable name -> aggregated series.  Names: correlation_x/_y/_z,
  /// coherence_abs/_re/_im, magnetization, branch_weight_up, order_up,
  /// order_down, branch_separation, entropy_up, entropy_down (conditional
  /// quantities only when that branch has weight).
  std::map<std::string, Series> series;
  /// Per-realization values, [observable][time][realization].
  std::map<std::string, std::vector<std::vector<double>>> samples;
  Telemetry telemetry;
  nlohmann::json meta;

  const Series& at(const std::string& name) const;
  std::size_t index_of_time(double t) const;
};

struct CalibrationResult {
  std::vector<double> a;
  std::vector<double> corr;
  std::vector<double> mag;
  std::vector<double> corr_std;
  std::vector<double> mag_std;
  FitResult corr_fit;
  FitResult mag_fit;
  Telemetry telemetry;
  nlohmann::json meta;
};

struct SweepPoint {
  double coupling = 0.0;
  int n_env = 0;
  /// <sigma_S^z sigma_A^z> / N_A (mean over realizations).
  double corr = 0.0;
  double corr_std = 0.0;
  /// <S_S^z S_A^z> with S = sigma / 2 and S_A the apparatus sum.
  double spin_corr = 0.0;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;
  Telemetry telemetry;
  nlohmann::json meta;
};

/// Progress messages of long runs (may be empty).
using ProgressFn = std::function<void(std::string_view)>;

TimeSeriesResult run_relaxation(const ExperimentConfig& config, const ProgressFn& progress = {});
TimeSeriesResult run_entropy(const ExperimentConfig& config, const ProgressFn& progress = {});
CalibrationResult run_calibration(const ExperimentConfig& config, const ProgressFn& progress = {});
TimeSeriesResult run_quench(const ExperimentConfig& config, const ProgressFn& progress = {});
SweepResult run_window_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

/// CSV files plus meta.json in `dir` (created if needed).  Numbers carry 17
/// significant digits.
void write_outputs(const TimeSeriesResult& result, const std::filesystem::path& dir);
void write_outputs(const CalibrationResult& result, const std::filesystem::path& dir);
void write_outputs(const SweepResult& result, const std::filesystem::path& dir);

/// Runs the config's scenario and writes its outputs to config.output.
void run_and_write(const ExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace spinmeter
