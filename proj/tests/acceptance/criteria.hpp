#pragma once

#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  /// Sweep the 16-value coupling grid instead of the 8-value CI grid.
  bool full_sweep = false;
  /// Progress messages on stderr.
  bool verbose = true;
};

Outcome oracle_equivalence(const Options& opt);
Outcome conservation(const Options& opt);
Outcome decoherence(const Options& opt);
Outcome correlation_saturation(const Options& opt);
Outcome calibration(const Options& opt);
Outcome quench(const Options& opt);
Outcome parameter_window(const Options& opt);
Outcome entropy(const Options& opt);

}  // namespace acceptance
