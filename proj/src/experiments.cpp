#include "spinmeter/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "spinmeter/observables.hpp"
#include "spinmeter/propagator.hpp"
#include "spinmeter/rng.hpp"

namespace spinmeter {

using nlohmann::json;

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::relax: return "relax";
    case Scenario::entropy: return "entropy";
    case Scenario::calibrate: return "calibrate";
    case Scenario::quench: return "quench";
    case Scenario::sweep: return "sweep";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& name) {
  for (Scenario s : {Scenario::relax, Scenario::entropy, Scenario::calibrate, Scenario::quench,
                     Scenario::sweep})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scenario '" + name +
                              "' (relax, entropy, calibrate, quench, sweep)");
}

// ---------------------------------------------------------------------------
// Config

std::vector<double> log_time_grid(double t_min, double t_max, int per_decade) {
  if (!(t_min > 0.0) || !(t_max >= t_min) || per_decade < 1)
    throw std::invalid_argument("log grid needs 0 < t_min <= t_max and per_decade >= 1");
  std::vector<double> t{0.0};
  const double decades = std::log10(t_max / t_min);
  const int n = static_cast<int>(std::floor(decades * per_decade + 1e-9));
  for (int j = 0; j <= n; ++j) t.push_back(t_min * std::pow(10.0, static_cast<double>(j) / per_decade));
  if (t.back() < t_max * (1.0 - 1e-12))
    t.push_back(t_max);
  else
    t.back() = t_max;
  return t;
}

std::vector<double> default_a_grid() {
  std::vector<double> a;
  for (int j = 0; j <= 10; ++j) a.push_back(j / 10.0);
  return a;
}

namespace {

double table_value(const std::string& axis) {
  const HamiltonianSpec d;
  if (axis == "I_SA") return d.I_SA;
  if (axis == "I_AE") return d.I_AE;
  if (axis == "K") return d.K;
  throw std::invalid_argument("sweep axis must be I_SA, I_AE or K (got '" + axis + "')");
}

double& axis_field(HamiltonianSpec& spec, const std::string& axis) {
  if (axis == "I_SA") return spec.I_SA;
  if (axis == "I_AE") return spec.I_AE;
  if (axis == "K") return spec.K;
  throw std::invalid_argument("sweep axis must be I_SA, I_AE or K (got '" + axis + "')");
}

double default_t_max(const ExperimentConfig& c) {
  switch (c.scenario) {
    case Scenario::quench: return 2.0 * c.t2;
    case Scenario::calibrate: return c.t_measure;
    case Scenario::sweep: return c.sweep.t_eval;
    default: return 1e4;
  }
}

}  // namespace

std::vector<double> default_sweep_values(const std::string& axis, int count, double lo, double hi) {
  if (count < 2 || !(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("bad sweep range");
  const double sign = table_value(axis) < 0.0 ? -1.0 : 1.0;
  std::vector<double> v;
  for (int k = 0; k < count; ++k)
    v.push_back(sign * lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1)));
  return v;
}

ExperimentConfig default_config(Scenario scenario) {
  ExperimentConfig c;
  c.scenario = scenario;
  switch (scenario) {
    case Scenario::relax: break;
    case Scenario::entropy: c.n_r = 1; break;
    case Scenario::calibrate:
      c.n_r = 1;
      c.a_grid = default_a_grid();
      break;
    case Scenario::quench: break;
    case Scenario::sweep:
      c.n_r = 1;
      c.sweep.values = default_sweep_values(c.sweep.axis);
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  SpinLayout layout(N_A, scenario == Scenario::sweep ? 0 : N_E);
  (void)layout;
  hamiltonian.validate();
  if (hamiltonian.window) throw std::invalid_argument("the coupling window is set through t1/t2 of a quench");
  if (n_r < 1) throw std::invalid_argument("n_r must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("a must lie in [0, 1]");
  if (!(ready.beta >= 0.0) || !std::isfinite(ready.beta)) throw std::invalid_argument("beta must be >= 0");
  for (std::size_t k = 0; k < time_grid.size(); ++k) {
    if (!std::isfinite(time_grid[k]) || time_grid[k] < 0.0)
      throw std::invalid_argument("time grid entries must be finite and >= 0");
    if (k > 0 && !(time_grid[k] > time_grid[k - 1]))
      throw std::invalid_argument("time grid must be strictly increasing");
  }
  if (scenario == Scenario::quench) {
    if (!(t1 >= 0.0 && t1 < t2) || !std::isfinite(t2)) throw std::invalid_argument("quench needs 0 <= t1 < t2");
    if (!time_grid.empty() && !(time_grid.back() >= t2))
      throw std::invalid_argument("time grid must reach t2");
  }
  if (scenario == Scenario::entropy && !(a > 0.0))
    throw std::invalid_argument("entropy of the up branch needs a > 0");
  if (scenario == Scenario::calibrate) {
    if (a_grid.empty()) throw std::invalid_argument("empty a_grid");
    for (double x : a_grid)
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("a_grid entries must lie in [0, 1]");
    if (!(t_measure > 0.0) || !std::isfinite(t_measure)) throw std::invalid_argument("t_measure must be > 0");
  }
  if (scenario == Scenario::sweep) {
    table_value(sweep.axis);
    if (sweep.values.empty() || sweep.n_env.empty()) throw std::invalid_argument("empty sweep grid");
    for (double v : sweep.values)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite sweep value");
    for (int ne : sweep.n_env) SpinLayout(N_A, ne);
    if (!(sweep.t_eval > 0.0) || !std::isfinite(sweep.t_eval)) throw std::invalid_argument("t_eval must be > 0");
  }
}

namespace {

template <typename F>
void for_each_key(const json& obj, const std::string& where, F&& handle) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!handle(key, value)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

double number(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("'" + key + "' must be a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw std::invalid_argument("'" + key + "' must be an integer");
  return v.get<int>();
}

std::vector<double> numbers(const json& v, const std::string& key) {
  if (!v.is_array()) throw std::invalid_argument("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(number(x, key));
  return out;
}

void parse_hamiltonian(const json& j, HamiltonianSpec& h) {
  for_each_key(j, "hamiltonian", [&](const std::string& k, const json& v) {
    if (k == "J") h.J = number(v, k);
    else if (k == "I_SA") h.I_SA = number(v, k);
    else if (k == "I_AE") h.I_AE = number(v, k);
    else if (k == "K") h.K = number(v, k);
    else if (k == "Delta") h.Delta = number(v, k);
    else if (k == "topology") h.topology = topology_from_string(v.get<std::string>());
    else return false;
    return true;
  });
}

void parse_sweep(const json& j, SweepSpec& s) {
  bool values_given = false;
  for_each_key(j, "sweep", [&](const std::string& k, const json& v) {
    if (k == "axis") s.axis = v.get<std::string>();
    else if (k == "values") { s.values = numbers(v, k); values_given = true; }
    else if (k == "n_env") {
      s.n_env.clear();
      for (const auto& x : v) s.n_env.push_back(integer(x, k));
    } else if (k == "t_eval") s.t_eval = number(v, k);
    else return false;
    return true;
  });
  if (!values_given) s.values = default_sweep_values(s.axis);
}

void parse_time_grid(const json& v, std::vector<double>& grid) {
  if (v.is_array()) {
    grid = numbers(v, "time_grid");
    return;
  }
  double t_min = 0.1, t_max = 1e4;
  int per_decade = 60;
  for_each_key(v, "time_grid", [&](const std::string& k, const json& x) {
    if (k == "t_min") t_min = number(x, k);
    else if (k == "t_max") t_max = number(x, k);
    else if (k == "points_per_decade") per_decade = integer(x, k);
    else return false;
    return true;
  });
  grid = log_time_grid(t_min, t_max, per_decade);
}

}  // namespace

ExperimentConfig config_from_json(const json& j, std::optional<Scenario> scenario) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (j.contains("scenario")) {
    const Scenario named = scenario_from_string(j.at("scenario").get<std::string>());
    if (scenario && *scenario != named)
      throw std::invalid_argument("config is for scenario '" + to_string(named) + "', not '" +
                                  to_string(*scenario) + "'");
    scenario = named;
  }
  if (!scenario) throw std::invalid_argument("config does not name its scenario");
  ExperimentConfig c = default_config(*scenario);
  for_each_key(j, "config", [&](const std::string& k, const json& v) {
    if (k == "scenario") {}
    else if (k == "N_A") c.N_A = integer(v, k);
    else if (k == "N_E") c.N_E = integer(v, k);
    else if (k == "a") c.a = number(v, k);
    else if (k == "ready") c.ready.kind = ready_kind_from_string(v.get<std::string>());
    else if (k == "beta") c.ready.beta = number(v, k);
    else if (k == "hamiltonian") parse_hamiltonian(v, c.hamiltonian);
    else if (k == "n_r") c.n_r = integer(v, k);
    else if (k == "master_seed") {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw std::invalid_argument("'master_seed' must be a non-negative integer");
      c.master_seed = v.get<std::uint64_t>();
    } else if (k == "redraw_couplings") c.redraw_couplings = v.get<bool>();
    else if (k == "time_grid") parse_time_grid(v, c.time_grid);
    else if (k == "t1" && c.scenario == Scenario::quench) c.t1 = number(v, k);
    else if (k == "t2" && c.scenario == Scenario::quench) c.t2 = number(v, k);
    else if (k == "coupling_enabled" && c.scenario == Scenario::quench) c.coupling_enabled = v.get<bool>();
    else if (k == "a_grid" && c.scenario == Scenario::calibrate) c.a_grid = numbers(v, k);
    else if (k == "t_measure" && c.scenario == Scenario::calibrate) c.t_measure = number(v, k);
    else if (k == "sweep" && c.scenario == Scenario::sweep) parse_sweep(v, c.sweep);
    else if (k == "output") c.output = v.get<std::string>();
    else if (k == "threads") c.threads = integer(v, k);
    else return false;
    return true;
  });
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<Scenario> scenario) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, scenario);
}

json to_json(const ExperimentConfig& c) {
  json h = {{"J", c.hamiltonian.J},           {"I_SA", c.hamiltonian.I_SA},
            {"I_AE", c.hamiltonian.I_AE},     {"K", c.hamiltonian.K},
            {"Delta", c.hamiltonian.Delta},   {"topology", to_string(c.hamiltonian.topology)}};
  json j = {{"scenario", to_string(c.scenario)},
            {"N_A", c.N_A},
            {"N_E", c.N_E},
            {"a", c.a},
            {"ready", to_string(c.ready.kind)},
            {"beta", c.ready.beta},
            {"hamiltonian", h},
            {"n_r", c.n_r},
            {"master_seed", c.master_seed},
            {"redraw_couplings", c.redraw_couplings},
            {"time_grid", resolved_time_grid(c)},
            {"output", c.output},
            {"threads", c.threads}};
  if (c.scenario == Scenario::quench) {
    j["t1"] = c.t1;
    j["t2"] = c.t2;
    j["coupling_enabled"] = c.coupling_enabled;
  }
  if (c.scenario == Scenario::calibrate) {
    j["a_grid"] = c.a_grid;
    j["t_measure"] = c.t_measure;
  }
  if (c.scenario == Scenario::sweep)
    j["sweep"] = {{"axis", c.sweep.axis},
                  {"values", c.sweep.values},
                  {"n_env", c.sweep.n_env},
                  {"t_eval", c.sweep.t_eval}};
  return j;
}

std::vector<double> resolved_time_grid(const ExperimentConfig& c) {
  std::vector<double> t;
  if (c.scenario == Scenario::calibrate) {
    t = {0.0, c.t_measure};
  } else if (c.scenario == Scenario::sweep) {
    t = {0.0, c.sweep.t_eval};
  } else {
    t = c.time_grid.empty() ? log_time_grid(0.1, default_t_max(c)) : c.time_grid;
    if (c.scenario == Scenario::quench) {
      for (double edge : {c.t1, c.t2})
        if (std::find(t.begin(), t.end(), edge) == t.end()) t.push_back(edge);
      std::sort(t.begin(), t.end());
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics

FitResult linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit needs equally long x and y");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("fit needs at least two points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit needs at least two distinct x values");
  FitResult f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = y[k] - (f.intercept + f.slope * x[k]);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;
  if (n > 2) f.slope_stderr = std::sqrt(ss_res / (n - 2) / sxx);
  return f;
}

MeanStd aggregate(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("aggregate needs at least one sample");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  if (samples.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

void Telemetry::merge(const Telemetry& o) {
  norm_drift = std::max(norm_drift, o.norm_drift);
  system_spin_drift = std::max(system_spin_drift, o.system_spin_drift);
  branch_weight_drift = std::max(branch_weight_drift, o.branch_weight_drift);
  energy_relative_drift = std::max(energy_relative_drift, o.energy_relative_drift);
  samples += o.samples;
  rdm_checks += o.rdm_checks;
}

json Telemetry::to_json() const {
  return {{"max_norm_drift", norm_drift},
          {"max_system_spin_drift", system_spin_drift},
          {"max_branch_weight_drift", branch_weight_drift},
          {"max_energy_relative_drift", energy_relative_drift},
          {"samples", samples},
          {"rdm_checks", rdm_checks}};
}

const Series& TimeSeriesResult::at(const std::string& name) const {
  const auto it = series.find(name);
  if (it == series.end()) throw std::out_of_range("no series '" + name + "'");
  return it->second;
}

std::size_t TimeSeriesResult::index_of_time(double t) const {
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
  throw std::out_of_range("time " + std::to_string(t) + " is not on the grid");
}

// ---------------------------------------------------------------------------
// Simulation core

namespace {

enum Obs : int {
  corr_x, corr_y, corr_z, coh_abs, coh_re, coh_im, mag, weight_up, order_up, order_down,
  separation, entropy_up, entropy_down, n_obs
};

constexpr std::array<const char*, n_obs> kObsNames = {
    "correlation_x", "correlation_y", "correlation_z", "coherence_abs", "coherence_re",
    "coherence_im",  "magnetization", "branch_weight_up", "order_up", "order_down",
    "branch_separation", "entropy_up", "entropy_down"};

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
// Decomposition a m_up + (1 - a) m_down = magnetization.
constexpr double kDecompositionLimit = 1e-10;

using Values = std::array<double, n_obs>;

[[noreturn]] void violation(const std::string& what, double value, double limit, double t) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s = %.3e exceeds %.1e at t = %.17g", what.c_str(), value, limit, t);
  throw ConservationError(buf);
}

void checked_validate(const ReducedDensityMatrix& rho, const char* what, double t) {
  try {
    rho.validate();
  } catch (const std::domain_error& e) {
    throw ConservationError(std::string(what) + " at t = " + std::to_string(t) + ": " + e.what());
  }
}

Values measure(const StateVector& psi, const SpinLayout& layout, double a, double t,
               Telemetry& tel) {
  Values v;
  v.fill(kMissing);
  double nn = 0.0, sz = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double p = std::norm(psi[k]);
    nn += p;
    sz += (k & 1U) ? p : -p;
  }
  const double norm_drift = std::abs(std::sqrt(nn) - 1.0);
  tel.norm_drift = std::max(tel.norm_drift, norm_drift);
  if (norm_drift > kNormLimit) violation("norm drift", norm_drift, kNormLimit, t);
  const double sz_drift = std::abs(sz - (2.0 * a - 1.0));
  tel.system_spin_drift = std::max(tel.system_spin_drift, sz_drift);
  if (sz_drift > kSystemSpinLimit) violation("<sigma_S^z> drift", sz_drift, kSystemSpinLimit, t);

  const auto sa = layout.system_apparatus_spins();
  const auto app = layout.apparatus_spins();
  const auto rho_sa = rdm(psi, sa);
  checked_validate(rho_sa, "rho_SA", t);
  ++tel.rdm_checks;
  const Complex c = coherence(rho_sa);
  v[coh_abs] = std::abs(c);
  v[coh_re] = c.real();
  v[coh_im] = c.imag();
  const double w_up = branch_weight(rho_sa, Branch::up);
  const double w_down = branch_weight(rho_sa, Branch::down);
  const double w_drift = std::max(std::abs(w_up - a), std::abs(w_down - (1.0 - a)));
  tel.branch_weight_drift = std::max(tel.branch_weight_drift, w_drift);
  if (w_drift > kBranchWeightLimit) violation("branch weight drift", w_drift, kBranchWeightLimit, t);
  v[weight_up] = w_up;

  for (Axis axis : kAxes) v[corr_x + static_cast<int>(axis)] = correlation(psi, layout, axis);
  v[mag] = magnetization(psi, layout);

  const double max_entropy = layout.n_apparatus() * std::log(2.0);
  double weighted = 0.0;
  bool both = true;
  for (Branch b : {Branch::up, Branch::down}) {
    const double w = b == Branch::up ? w_up : w_down;
    if (!(w > kMinBranchWeight)) {
      both = false;
      continue;
    }
    const auto rho = conditional_rdm(psi, app, b);
    checked_validate(rho, "conditional apparatus state", t);
    ++tel.rdm_checks;
    const double m = order_parameter(rho);
    const double s = entropy(rho);
    if (s < -1e-12 || s > max_entropy + 1e-10)
      throw ConservationError("entropy " + std::to_string(s) + " outside [0, N_A ln 2]");
    v[b == Branch::up ? order_up : order_down] = m;
    v[b == Branch::up ? entropy_up : entropy_down] = s;
    weighted += w * m;
  }
  if (both) v[separation] = std::abs(v[order_up] - v[order_down]);
  const double decomposition = std::abs(weighted - v[mag]);
  if (decomposition > kDecompositionLimit)
    violation("branch decomposition of the magnetization", decomposition, kDecompositionLimit, t);
  ++tel.samples;
  return v;
}

// [observable][time][column]
using Table = std::array<std::vector<std::vector<double>>, n_obs>;

Table make_table(std::size_t n_times, std::size_t n_columns) {
  Table table;
  for (auto& obs : table) obs.assign(n_times, std::vector<double>(n_columns, kMissing));
  return table;
}

double energy(const CompiledHamiltonian& h, const StateVector& psi, bool sa_on) {
  return expectation(h, psi, sa_on) + h.constant_offset();
}

bool sa_active_before(const CompiledHamiltonian& h, double t) {
  const auto& w = h.window();
  if (!w) return true;
  return t > w->t1 && t <= w->t2;
}

std::size_t block_width_limit(int n_spins) {
  const double per_column = 4.0 * 16.0 * std::ldexp(1.0, n_spins);
  const auto fit = static_cast<std::size_t>(kMemoryLimitBytes / per_column);
  if (fit < 1)
    throw std::runtime_error("resource guard: one state of " + std::to_string(n_spins) +
                             " spins exceeds the memory limit");
  return std::min<std::size_t>(fit, kMaxBlockWidth);
}

std::string format_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

// Propagates one block of initial states along `times`, measuring every
// column at every time into table[.][t][first_column + r].
void simulate_block(const CompiledHamiltonian& h, const SpinLayout& layout,
                    std::vector<StateVector> initial, std::span<const double> a_values,
                    std::span<const double> times, int threads, Table& table,
                    std::size_t first_column, Telemetry& tel, const ProgressFn& progress,
                    const std::string& label) {
  if (initial.empty()) return;
  if (const auto& w = h.window()) {
    for (double edge : {w->t1, w->t2})
      if (edge > times.front() && edge < times.back() &&
          std::find(times.begin(), times.end(), edge) == times.end())
        throw std::invalid_argument("time grid must contain the coupling window edges");
  }
  const int width = static_cast<int>(initial.size());
  StateBlock block = StateBlock::from_columns(initial);
  initial.clear();
  initial.shrink_to_fit();
  Propagator prop(h, threads);

  std::vector<double> e_ref(static_cast<std::size_t>(width), 0.0);
  const double e_floor = 1e-3 * h.propagation_bounds().halfwidth();
  double t_prev = times.front();
  double reported_decade = -std::numeric_limits<double>::infinity();
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    if (ti > 0) prop.advance(block, t_prev, t);
    const bool before = sa_active_before(h, t);
    const bool after = prop.sa_active_after(t);
    for (int r = 0; r < width; ++r) {
      const StateVector psi = block.column(r);
      const double a = a_values[static_cast<std::size_t>(r)];
      const Values v = measure(psi, layout, a, t, tel);
      for (int o = 0; o < n_obs; ++o) table[o][ti][first_column + r] = v[o];
      auto& ref = e_ref[static_cast<std::size_t>(r)];
      if (ti > 0) {
        const double e = energy(h, psi, before);
        const double drift = std::abs(e - ref) / std::max(std::abs(ref), e_floor);
        tel.energy_relative_drift = std::max(tel.energy_relative_drift, drift);
        if (drift > kEnergyRelativeLimit) violation("relative energy drift", drift, kEnergyRelativeLimit, t);
        if (after != before) ref = energy(h, psi, after);
      } else {
        ref = energy(h, psi, after);
      }
    }
    t_prev = t;
    const double decade = t > 0.0 ? std::floor(std::log10(t) + 1e-9) : reported_decade;
    if (progress && (ti + 1 == times.size() || decade > reported_decade)) {
      reported_decade = decade;
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      progress(label + ": t = " + format_time(t) + " (" + std::to_string(prop.applications()) +
               " applications, " + format_time(sec) + " s)");
    }
  }
}

struct RealizationSeeds {
  std::uint64_t couplings;
  ReadySeeds ready;
};

json seeds_json(std::span<const RealizationSeeds> seeds) {
  json arr = json::array();
  for (std::size_t k = 0; k < seeds.size(); ++k)
    arr.push_back({{"realization", k},
                   {"couplings", seeds[k].couplings},
                   {"ready_apparatus", seeds[k].ready.apparatus},
                   {"ready_environment", seeds[k].ready.environment},
                   {"ready_joint", seeds[k].ready.joint}});
  return arr;
}

std::vector<RealizationSeeds> realization_seeds(const ExperimentConfig& c, std::size_t count) {
  std::vector<RealizationSeeds> seeds;
  for (std::size_t k = 0; k < count; ++k)
    seeds.push_back({derive_seed(c.master_seed, c.redraw_couplings ? k : 0, SeedPurpose::couplings),
                     ReadySeeds::derive(c.master_seed, k)});
  return seeds;
}

// Runs every column (one per seed entry, with its own a) on the spec, grouping
// columns that share couplings into blocks.
Table simulate_columns(const ExperimentConfig& c, const HamiltonianSpec& spec,
                       const SpinLayout& layout, std::span<const RealizationSeeds> seeds,
                       std::span<const double> a_values, std::span<const double> times,
                       Telemetry& tel, json& bounds_meta, const ProgressFn& progress) {
  Table table = make_table(times.size(), seeds.size());
  const std::size_t max_width = block_width_limit(layout.n_total());
  std::size_t k = 0;
  while (k < seeds.size()) {
    // Consecutive columns with the same coupling seed share one Hamiltonian.
    std::size_t end = k;
    while (end < seeds.size() && seeds[end].couplings == seeds[k].couplings) ++end;
    const auto realization = draw_couplings(layout, seeds[k].couplings);
    const auto h = compile(spec, layout, realization);
    const auto projector = ready_projector(c.ready.kind, spec, layout, realization);
    const auto pb = h.propagation_bounds();
    bounds_meta.push_back({{"couplings", seeds[k].couplings},
                           {"propagation_lower", pb.lower},
                           {"propagation_upper", pb.upper},
                           {"term_norm_bound", h.bounds().upper}});
    for (std::size_t b = k; b < end; b += max_width) {
      const std::size_t e = std::min(end, b + max_width);
      std::vector<ReadySeeds> rs;
      for (std::size_t q = b; q < e; ++q) rs.push_back(seeds[q].ready);
      auto ready = ready_states(c.ready, layout, projector, rs, c.threads);
      std::vector<StateVector> init;
      for (std::size_t q = b; q < e; ++q) init.push_back(assemble_initial(a_values[q], ready[q - b]));
      ready.clear();
      const std::string label = "columns " + std::to_string(b) + "-" + std::to_string(e - 1) + "/" +
                                std::to_string(seeds.size());
      simulate_block(h, layout, std::move(init), a_values.subspan(b, e - b), times, c.threads, table,
                     b, tel, progress, label);
    }
    k = end;
  }
  return table;
}

TimeSeriesResult run_time_series(const ExperimentConfig& c, HamiltonianSpec spec,
                                 const ProgressFn& progress) {
  c.validate();
  const SpinLayout layout(c.N_A, c.N_E);
  const auto times = resolved_time_grid(c);
  const auto seeds = realization_seeds(c, static_cast<std::size_t>(c.n_r));
  const std::vector<double> a_values(seeds.size(), c.a);

  TimeSeriesResult result;
  result.times = times;
  json bounds = json::array();
  const auto started = std::chrono::steady_clock::now();
  Table table = simulate_columns(c, spec, layout, seeds, a_values, times, result.telemetry, bounds,
                                 progress);
  for (int o = 0; o < n_obs; ++o) {
    const auto& obs = table[o];
    const bool complete = std::all_of(obs.begin(), obs.end(), [](const auto& row) {
      return std::none_of(row.begin(), row.end(), [](double x) { return std::isnan(x); });
    });
    if (!complete) continue;
    Series s;
    for (const auto& row : obs) {
      const auto ms = aggregate(row);
      s.mean.push_back(ms.mean);
      s.std.push_back(ms.std);
    }
    result.series.emplace(kObsNames[o], std::move(s));
    result.samples.emplace(kObsNames[o], obs);
  }
  result.meta = {{"config", to_json(c)},
                 {"seeds", seeds_json(seeds)},
                 {"hamiltonians", bounds},
                 {"telemetry", result.telemetry.to_json()},
                 {"elapsed_seconds",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
  return result;
}

void require_scenario(const ExperimentConfig& c, Scenario s) {
  if (c.scenario != s)
    throw std::invalid_argument("config is for scenario '" + to_string(c.scenario) + "', not '" +
                                to_string(s) + "'");
}

}  // namespace

TimeSeriesResult run_relaxation(const ExperimentConfig& config, const ProgressFn& progress) {
  require_scenario(config, Scenario::relax);
  return run_time_series(config, config.hamiltonian, progress);
}

TimeSeriesResult run_entropy(const ExperimentConfig& config, const ProgressFn& progress) {
  require_scenario(config, Scenario::entropy);
  return run_time_series(config, config.hamiltonian, progress);
}

TimeSeriesResult run_quench(const ExperimentConfig& config, const ProgressFn& progress) {
  require_scenario(config, Scenario::quench);
  HamiltonianSpec spec = config.hamiltonian;
  if (config.coupling_enabled)
    spec.window = CouplingWindow{config.t1, config.t2};
  else
    spec.I_SA = 0.0;  // control run: the window never opens
  auto result = run_time_series(config, spec, progress);
  const auto t = resolved_time_grid(config);
  if (!(t.back() >= config.t2)) throw std::invalid_argument("time grid must reach t2");
  return result;
}

CalibrationResult run_calibration(const ExperimentConfig& c, const ProgressFn& progress) {
  require_scenario(c, Scenario::calibrate);
  c.validate();
  const SpinLayout layout(c.N_A, c.N_E);
  const auto times = resolved_time_grid(c);
  const std::size_t n_a = c.a_grid.size();
  const std::size_t n_r = static_cast<std::size_t>(c.n_r);
  // Column j * n_r + r: grid point j, realization r, each with fresh ready seeds.
  const auto seeds = realization_seeds(c, n_a * n_r);
  std::vector<double> a_values;
  for (std::size_t j = 0; j < n_a; ++j)
    for (std::size_t r = 0; r < n_r; ++r) a_values.push_back(c.a_grid[j]);

  CalibrationResult result;
  json bounds = json::array();
  const auto started = std::chrono::steady_clock::now();
  const Table table = simulate_columns(c, c.hamiltonian, layout, seeds, a_values, times,
                                       result.telemetry, bounds, progress);
  const std::size_t last = times.size() - 1;
  for (std::size_t j = 0; j < n_a; ++j) {
    std::vector<double> corr(table[corr_z][last].begin() + j * n_r,
                             table[corr_z][last].begin() + (j + 1) * n_r);
    std::vector<double> m(table[mag][last].begin() + j * n_r, table[mag][last].begin() + (j + 1) * n_r);
    const auto cs = aggregate(corr);
    const auto ms = aggregate(m);
    result.a.push_back(c.a_grid[j]);
    result.corr.push_back(cs.mean);
    result.corr_std.push_back(cs.std);
    result.mag.push_back(ms.mean);
    result.mag_std.push_back(ms.std);
  }
  auto fit_json = [](const FitResult& f) {
    return json{{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
                {"slope_stderr", f.slope_stderr}};
  };
  json fits = json::object();
  if (n_a >= 2) {
    result.corr_fit = linear_fit(result.a, result.corr);
    result.mag_fit = linear_fit(result.a, result.mag);
    fits = {{"corr", fit_json(result.corr_fit)}, {"mag", fit_json(result.mag_fit)}};
  }
  result.meta = {{"config", to_json(c)},
                 {"seeds", seeds_json(seeds)},
                 {"hamiltonians", bounds},
                 {"fits", fits},
                 {"telemetry", result.telemetry.to_json()},
                 {"elapsed_seconds",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
  return result;
}

SweepResult run_window_sweep(const ExperimentConfig& c, const ProgressFn& progress) {
  require_scenario(c, Scenario::sweep);
  c.validate();
  SweepResult result;
  result.axis = c.sweep.axis;
  const auto times = resolved_time_grid(c);
  const auto seeds = realization_seeds(c, static_cast<std::size_t>(c.n_r));
  const std::vector<double> a_values(seeds.size(), c.a);
  json bounds = json::array();
  const auto started = std::chrono::steady_clock::now();
  for (int ne : c.sweep.n_env) {
    const SpinLayout layout(c.N_A, ne);
    for (double value : c.sweep.values) {
      HamiltonianSpec spec = c.hamiltonian;
      axis_field(spec, c.sweep.axis) = value;
      ProgressFn tagged;
      if (progress)
        tagged = [&](std::string_view msg) {
          progress("N_E = " + std::to_string(ne) + ", " + c.sweep.axis + " = " + format_time(value) +
                   ": " + std::string(msg));
        };
      const Table table =
          simulate_columns(c, spec, layout, seeds, a_values, times, result.telemetry, bounds, tagged);
      const auto cs = aggregate(table[corr_z].back());
      result.points.push_back({value, ne, cs.mean, cs.std, cs.mean * c.N_A / 4.0});
    }
  }
  result.meta = {{"config", to_json(c)},
                 {"seeds", seeds_json(seeds)},
                 {"hamiltonians", bounds},
                 {"telemetry", result.telemetry.to_json()},
                 {"columns",
                  {{"sweep.csv", "coupling, n_env, <sigma_S^z sigma_A^z>/N_A (Pauli, per apparatus spin)"},
                   {"sweep_spin.csv", "coupling, n_env, <S_S^z S_A^z> (spin operators, S = sigma/2)"}}},
                 {"elapsed_seconds",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
  return result;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_meta(const json& meta, const std::filesystem::path& dir) {
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

}  // namespace

void write_outputs(const TimeSeriesResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, s] : result.series) {
    auto out = open_out(dir / (name + ".csv"));
    out << "t,mean,std\n";
    for (std::size_t k = 0; k < result.times.size(); ++k)
      out << fmt(result.times[k]) << ',' << fmt(s.mean[k]) << ',' << fmt(s.std[k]) << '\n';
  }
  write_meta(result.meta, dir);
}

void write_outputs(const CalibrationResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "calibration.csv");
    out << "a,corr,mag\n";
    for (std::size_t k = 0; k < result.a.size(); ++k)
      out << fmt(result.a[k]) << ',' << fmt(result.corr[k]) << ',' << fmt(result.mag[k]) << '\n';
  }
  {
    auto out = open_out(dir / "calibration_std.csv");
    out << "a,corr_std,mag_std\n";
    for (std::size_t k = 0; k < result.a.size(); ++k)
      out << fmt(result.a[k]) << ',' << fmt(result.corr_std[k]) << ',' << fmt(result.mag_std[k]) << '\n';
  }
  write_meta(result.meta, dir);
}

void write_outputs(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto pauli = open_out(dir / "sweep.csv");
  auto spin = open_out(dir / "sweep_spin.csv");
  pauli << "coupling,n_env,corr\n";
  spin << "coupling,n_env,corr\n";
  for (const auto& p : result.points) {
    pauli << fmt(p.coupling) << ',' << p.n_env << ',' << fmt(p.corr) << '\n';
    spin << fmt(p.coupling) << ',' << p.n_env << ',' << fmt(p.spin_corr) << '\n';
  }
  write_meta(result.meta, dir);
}

void run_and_write(const ExperimentConfig& config, const ProgressFn& progress) {
  switch (config.scenario) {
    case Scenario::relax: write_outputs(run_relaxation(config, progress), config.output); break;
    case Scenario::entropy: write_outputs(run_entropy(config, progress), config.output); break;
    case Scenario::calibrate: write_outputs(run_calibration(config, progress), config.output); break;
    case Scenario::quench: write_outputs(run_quench(config, progress), config.output); break;
    case Scenario::sweep: write_outputs(run_window_sweep(config, progress), config.output); break;
  }
}

}  // namespace spinmeter
