#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spinmeter/experiments.hpp"
#include "spinmeter/rng.hpp"

using namespace spinmeter;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small(Scenario s) {
  auto c = default_config(s);
  c.N_A = 4;
  c.N_E = 4;
  c.n_r = 3;
  c.time_grid = {0.0, 1.0, 10.0, 100.0};
  return c;
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = default_config(Scenario::relax);
  CHECK(c.N_A == 4);
  CHECK(c.N_E == 12);
  CHECK(c.n_r == 15);
  CHECK(c.ready.beta == 50.0);
  CHECK(c.hamiltonian.I_SA == 0.25);
  CHECK(c.hamiltonian.I_AE == -0.025);
  CHECK(c.hamiltonian.K == -0.1);
  CHECK(default_a_grid().size() == 11);
  CHECK(default_a_grid()[3] == doctest::Approx(0.3));
  const auto sweep = default_config(Scenario::sweep);
  REQUIRE(sweep.sweep.values.size() == 16);
  CHECK(sweep.sweep.values.front() == doctest::Approx(-1e-3));
  CHECK(sweep.sweep.values.back() == doctest::Approx(-1.0));
  CHECK(default_sweep_values("I_SA", 4).front() > 0.0);
  CHECK_THROWS_AS(default_sweep_values("J"), std::invalid_argument);
}

TEST_CASE("config parsing") {
  const json j = {{"scenario", "quench"},
                  {"N_A", 2},
                  {"N_E", 3},
                  {"ready", "randomR"},
                  {"beta", 20.0},
                  {"hamiltonian", {{"I_SA", 0.5}, {"topology", "fully_connected"}}},
                  {"t1", 1.0},
                  {"t2", 2.0},
                  {"time_grid", {{"t_min", 0.1}, {"t_max", 10.0}, {"points_per_decade", 2}}},
                  {"master_seed", 7}};
  const auto c = config_from_json(j);
  CHECK(c.scenario == Scenario::quench);
  CHECK(c.N_A == 2);
  CHECK(c.ready.kind == ReadyStateKind::random_zero_sector);
  CHECK(c.hamiltonian.I_SA == 0.5);
  CHECK(c.hamiltonian.K == -0.1);
  CHECK(c.hamiltonian.topology == Topology::fully_connected);
  CHECK(c.master_seed == 7);
  const auto grid = resolved_time_grid(c);
  CHECK(std::find(grid.begin(), grid.end(), 1.0) != grid.end());
  CHECK(std::find(grid.begin(), grid.end(), 2.0) != grid.end());
  CHECK(std::is_sorted(grid.begin(), grid.end()));

  const auto back = config_from_json(to_json(c));
  CHECK(back.N_E == 3);
  CHECK(back.t2 == 2.0);
  CHECK(resolved_time_grid(back) == grid);

  CHECK_THROWS_AS(config_from_json({{"scenario", "relax"}, {"bogus", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"scenario", "relax"}, {"t1", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"scenario", "relax"}, {"hamiltonian", {{"L", 1}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"N_A", 4}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"scenario", "relax"}}, Scenario::sweep), std::invalid_argument);
  CHECK(config_from_json({{"N_A", 4}}, Scenario::entropy).scenario == Scenario::entropy);
  CHECK_THROWS_AS(config_from_json({{"scenario", "relax"}, {"N_A", 2.5}}), std::invalid_argument);

  auto bad = small(Scenario::relax);
  bad.time_grid = {0.0, 2.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = small(Scenario::relax);
  bad.n_r = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("log time grid") {
  const auto g = log_time_grid(0.1, 1e4, 60);
  CHECK(g.front() == 0.0);
  CHECK(g[1] == doctest::Approx(0.1));
  CHECK(g.back() == 1e4);
  CHECK(g.size() == 1 + 5 * 60 + 1);
  CHECK(std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end());
  CHECK(resolved_time_grid(default_config(Scenario::relax)).back() == 1e4);
  CHECK(resolved_time_grid(default_config(Scenario::quench)).back() == 1e4);
  CHECK(resolved_time_grid(default_config(Scenario::calibrate)) == std::vector<double>{0.0, 1e4});
}

TEST_CASE("linear fits") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
  const auto f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r_squared == doctest::Approx(1.0));

  const std::vector<double> flat{2.0, 2.0, 2.0, 2.0};
  const auto g = linear_fit(x, flat);
  CHECK(g.slope == 0.0);
  CHECK(g.r_squared == 0.0);
  const std::vector<double> same{1.0, 1.0};
  CHECK_THROWS_AS(linear_fit(same, same), std::invalid_argument);

  RandomStream rng(derive_seed(1, 0, SeedPurpose::synthetic));
  std::vector<double> xs, ys;
  for (int k = 0; k < 200; ++k) {
    xs.push_back(k / 200.0);
    ys.push_back(-0.7 * xs.back() + 0.2 + 0.05 * rng.gaussian_pair().first);
  }
  const auto h = linear_fit(xs, ys);
  CHECK(std::abs(h.slope + 0.7) < 3.0 * h.slope_stderr);
  CHECK(h.r_squared > 0.0);
  CHECK(h.r_squared <= 1.0);
}

TEST_CASE("aggregation") {
  const std::vector<double> same{0.3, 0.3, 0.3};
  CHECK(aggregate(same).std == 0.0);
  const std::vector<double> two{0.0, 1.0};
  CHECK(aggregate(two).mean == 0.5);
  CHECK(aggregate(two).std == doctest::Approx(std::sqrt(0.5)));
  const std::vector<double> one{4.0};
  CHECK(aggregate(one).std == 0.0);

  RandomStream rng(3);
  std::vector<double> v;
  for (int k = 0; k < 1000; ++k) v.push_back(rng.uniform(-5.0, 5.0));
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  CHECK(std::abs(aggregate(v).mean - mean) < 1e-12);
  CHECK(std::abs(aggregate(v).std - std::sqrt(ss / (v.size() - 1))) < 1e-12);
}

TEST_CASE("relaxation run") {
  const auto c = small(Scenario::relax);
  const auto r = run_relaxation(c);
  CHECK(r.times == c.time_grid);
  CHECK(std::abs(r.at("correlation_z").mean[0]) < 1e-10);
  CHECK(std::abs(r.at("coherence_abs").mean[0] - std::sqrt(3.0) / 4.0) < 1e-10);
  CHECK(r.at("coherence_abs").std[0] < 1e-12);
  for (const auto& [name, s] : r.series) {
    CHECK(s.mean.size() == r.times.size());
    for (double x : s.std) CHECK(x >= 0.0);
  }
  CHECK(r.samples.at("magnetization")[2].size() == 3);
  CHECK(r.telemetry.norm_drift < 1e-10);
  CHECK(r.telemetry.energy_relative_drift < 1e-8);
  CHECK(r.telemetry.branch_weight_drift < 1e-10);
  CHECK(r.telemetry.samples == 12);
  CHECK(r.index_of_time(10.0) == 2);
  CHECK_THROWS_AS(r.index_of_time(5.0), std::out_of_range);
  CHECK(r.meta["seeds"].size() == 3);
  // couplings shared by the realizations unless redrawn
  CHECK(r.meta["seeds"][0]["couplings"] == r.meta["seeds"][2]["couplings"]);
  CHECK(r.meta["seeds"][0]["ready_environment"] != r.meta["seeds"][2]["ready_environment"]);

  auto redraw = c;
  redraw.redraw_couplings = true;
  const auto rr = run_relaxation(redraw);
  CHECK(rr.meta["seeds"][0]["couplings"] != rr.meta["seeds"][2]["couplings"]);
  CHECK_THROWS_AS(run_entropy(c), std::invalid_argument);
}

TEST_CASE("output is independent of the thread count") {
  auto c = small(Scenario::relax);
  c.N_E = 8;
  c.ready.kind = ReadyStateKind::joint_thermal;
  const auto dir = std::filesystem::temp_directory_path() / "spinmeter_threads";
  std::filesystem::remove_all(dir);
  c.threads = 1;
  write_outputs(run_relaxation(c), dir / "one");
  c.threads = 3;
  write_outputs(run_relaxation(c), dir / "three");
  for (const char* f : {"correlation_z.csv", "coherence_abs.csv", "entropy_up.csv", "order_down.csv"}) {
    const auto a = slurp(dir / "one" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "three" / f));
  }
  const auto head = slurp(dir / "one" / "magnetization.csv");
  CHECK(head.rfind("t,mean,std\n", 0) == 0);
  const auto meta = json::parse(slurp(dir / "one" / "meta.json"));
  CHECK(meta["config"]["N_E"] == 8);
  CHECK(meta["seeds"].size() == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("entropy run") {
  auto c = small(Scenario::entropy);
  c.n_r = 1;
  const auto r = run_entropy(c);
  CHECK(std::abs(r.at("entropy_up").mean[0]) < 1e-10);
  for (double s : r.at("entropy_up").mean) {
    CHECK(s >= 0.0);
    CHECK(s <= 4 * std::log(2.0) + 1e-12);
  }
  c.ready.kind = ReadyStateKind::joint_thermal;
  CHECK(run_entropy(c).at("entropy_up").mean[0] > 1e-6);
}

TEST_CASE("calibration run") {
  auto c = small(Scenario::calibrate);
  c.n_r = 2;
  c.a_grid = {0.0, 0.5, 1.0};
  c.t_measure = 50.0;
  c.hamiltonian.I_SA = 0.0;
  c.time_grid.clear();
  const auto r = run_calibration(c);
  REQUIRE(r.mag.size() == 3);
  // without the S-A coupling both branches see the same apparatus dynamics
  for (std::size_t k = 0; k < r.a.size(); ++k) {
    CHECK(std::abs(r.corr[k] - (2.0 * r.a[k] - 1.0) * r.mag[k]) < 1e-10);
    CHECK(std::abs(r.mag[k]) < 0.5);
  }
  CHECK(r.meta["seeds"].size() == 6);

  c.hamiltonian.I_SA = 0.25;
  const auto coupled = run_calibration(c);
  CHECK(coupled.corr_fit.r_squared >= 0.0);
  CHECK(coupled.corr_fit.r_squared <= 1.0);
  // a = 0 and a = 1 pull the apparatus in opposite directions
  CHECK(coupled.mag[0] * coupled.mag[2] <= 0.0);
}

TEST_CASE("quench run") {
  auto c = small(Scenario::quench);
  c.t1 = 10.0;
  c.t2 = 40.0;
  c.time_grid = {0.0, 5.0, 10.0, 20.0, 40.0, 80.0};
  const auto r = run_quench(c);
  const auto& up = r.at("order_up");
  const auto& down = r.at("order_down");
  for (std::size_t k = 0; k <= r.index_of_time(10.0); ++k)
    for (std::size_t q = 0; q < 3; ++q)
      CHECK(std::abs(r.samples.at("order_up")[k][q] - r.samples.at("order_down")[k][q]) < 1e-10);
  CHECK(std::abs(up.mean[r.index_of_time(40.0)] - down.mean[r.index_of_time(40.0)]) > 1e-6);

  c.coupling_enabled = false;
  const auto control = run_quench(c);
  for (double s : control.at("branch_separation").mean) CHECK(s < 1e-10);

  // the switching times are always sampled
  c.coupling_enabled = true;
  c.time_grid = {0.0, 5.0, 20.0, 80.0};
  const auto edges = run_quench(c);
  CHECK(edges.times[edges.index_of_time(10.0)] == 10.0);
  CHECK(edges.times[edges.index_of_time(40.0)] == 40.0);
}

TEST_CASE("sweep run") {
  auto c = small(Scenario::sweep);
  c.n_r = 1;
  c.a = 0.5;
  c.sweep.axis = "I_SA";
  c.sweep.values = {0.0, 0.25};
  c.sweep.n_env = {2, 4};
  c.sweep.t_eval = 20.0;
  c.time_grid.clear();
  const auto r = run_window_sweep(c);
  REQUIRE(r.points.size() == 4);
  CHECK(r.points[0].n_env == 2);
  CHECK(r.points[0].coupling == 0.0);
  CHECK(std::abs(r.points[0].corr) < 1e-10);
  CHECK(std::abs(r.points[2].corr) < 1e-10);
  CHECK(r.points[1].spin_corr == doctest::Approx(r.points[1].corr * 4 / 4.0));
  CHECK(r.points[3].corr != r.points[1].corr);
}

TEST_CASE("run_and_write emits the scenario files") {
  auto c = small(Scenario::sweep);
  c.n_r = 1;
  c.sweep.values = {-0.01, -0.1};
  c.sweep.n_env = {2};
  c.sweep.t_eval = 5.0;
  c.time_grid.clear();
  const auto dir = std::filesystem::temp_directory_path() / "spinmeter_sweep";
  std::filesystem::remove_all(dir);
  c.output = dir.string();
  run_and_write(c);
  const auto csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("coupling,n_env,corr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(std::filesystem::exists(dir / "sweep_spin.csv"));
  CHECK(std::filesystem::exists(dir / "meta.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped presets load") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(SPINMETER_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
    ++count;
  }
  CHECK(count >= 5);
}
