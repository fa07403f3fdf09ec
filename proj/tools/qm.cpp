// qm: command-line runner for the measurement-device experiments.
//
//   qm <scenario> --config <file> [--seed N] [--realizations N] [--threads N] [--out DIR]
//
// Flags override the matching config fields.  Exit code 0 on success,
// 1 on a conservation or validity violation, 2 on bad input.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spinmeter/experiments.hpp"

int main(int argc, char** argv) {
  using namespace spinmeter;

  CLI::App app{"Quantum spin measurement device simulator"};
  std::string scenario_name;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool quiet = false;

  app.add_option("scenario", scenario_name, "relax | entropy | calibrate | quench | sweep")
      ->required()
      ->check(CLI::IsMember({"relax", "entropy", "calibrate", "quench", "sweep"}));
  app.add_option("--config", config_path, "JSON config (absent keys take the scenario defaults)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--realizations", realizations, "number of ready-state realizations n_r");
  app.add_option("--threads", threads, "worker threads for operator application");
  app.add_option("--out", out, "output directory");
  app.add_flag("--quiet", quiet, "no progress messages");
  CLI11_PARSE(app, argc, argv);

  ExperimentConfig config;
  try {
    const Scenario scenario = scenario_from_string(scenario_name);
    config = config_path.empty() ? default_config(scenario) : load_config(config_path, scenario);
    if (seed) config.master_seed = *seed;
    if (realizations) config.n_r = *realizations;
    if (threads) config.threads = *threads;
    if (out) config.output = *out;
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "qm: " << e.what() << '\n';
    return 2;
  }

  ProgressFn progress;
  if (!quiet) progress = [](std::string_view msg) { std::cerr << "qm: " << msg << '\n'; };
  try {
    run_and_write(config, progress);
  } catch (const ConservationError& e) {
    std::cerr << "qm: invariant violated: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "qm: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qm: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "qm: wrote " << config.output << '\n';
  return 0;
}
