#pragma once

// Random coupling realizations and the compiled Hamiltonian of the
// system-apparatus-environment triad
//
//   H = H_SA + H_A + H_AE + H_E
//   H_SA = -I_SA S^z_S S^z_A
//   H_A  = -J sum_{chain bonds} S_i . S_{i+1}        (open chain)
//        = -(J/N_A) S_A . S_A                         (fully connected)
//   H_AE = -I_AE sum_{i in A, k in E} r_ik S_i . S_k,  r_ik in [0, 1]
//   H_E  =  K sum_{axis} sum_{k<l in E} r^axis_kl S^axis_k S^axis_l,  r in [-1, 1]
//
// Spin indices follow SpinLayout: S = 0, apparatus 1..N_A, environment after.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinmeter/spin_core.hpp"

namespace spinmeter {

namespace detail {
class PairOperator;
}

/// coefficient * S_i^axis S_j^axis
struct Term {
  int i = 0;
  int j = 0;
  Axis axis = Axis::z;
  double coefficient = 0.0;
};

struct CouplingWindow {
  double t1 = 0.0;
  double t2 = 0.0;
};

enum class Topology { open_chain, fully_connected };

std::string to_string(Topology topology);
Topology topology_from_string(const std::string& name);

/// Coupling constants; defaults are the reference parameter set (J = 1).
struct HamiltonianSpec {
  double J = 1.0;
  double I_SA = 0.25;
  double I_AE = -0.025;
  double K = -0.1;
  double Delta = 0.0;
  Topology topology = Topology::open_chain;
  std::optional<CouplingWindow> window;

  /// Throws std::invalid_argument on J <= 0, non-finite values or t1 >= t2.
  void validate() const;
};

/// One draw of the random couplings r_kl^axis (environment pairs) and r_ik
/// (apparatus-environment pairs).
class CouplingRealization {
 public:
  CouplingRealization(int n_apparatus, int n_environment, std::uint64_t seed,
                      std::array<std::vector<double>, 3> environment_pairs,
                      std::vector<double> apparatus_environment);

  int n_apparatus() const noexcept { return n_apparatus_; }
  int n_environment() const noexcept { return n_environment_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// r^axis_kl for environment spins k != l (0-based within the environment).
  double environment(Axis axis, int k, int l) const;
  /// r_ik for apparatus spin i and environment spin k (0-based within blocks).
  double apparatus_environment(int i, int k) const;

  std::span<const double> environment_values(Axis axis) const;
  std::span<const double> apparatus_environment_values() const { return r_ae_; }

  /// Position of the pair k < l in lexicographic order.
  static std::size_t pair_index(int n_environment, int k, int l);

  friend bool operator==(const CouplingRealization&, const CouplingRealization&) = default;

 private:
  int n_apparatus_;
  int n_environment_;
  std::uint64_t seed_;
  std::array<std::vector<double>, 3> r_ee_;
  std::vector<double> r_ae_;
};

/// Draws r^x, r^y, r^z for every environment pair (lexicographic k < l), then
/// r_ik row-major over (apparatus i, environment k), from one RandomStream.
CouplingRealization draw_couplings(const SpinLayout& layout, std::uint64_t seed);

struct SpectralBounds {
  double lower = 0.0;
  double upper = 0.0;

  double center() const noexcept { return 0.5 * (upper + lower); }
  double halfwidth() const noexcept { return 0.5 * (upper - lower); }
  bool contains(double e) const noexcept { return e >= lower && e <= upper; }
};

/// Safety factor applied to the certified spectral bounds.
inline constexpr double kBoundInflation = 1.05;
/// Lanczos steps used to estimate the extremal eigenvalues.
inline constexpr int kLanczosSteps = 100;
/// Padding added on each side of the Lanczos estimate, relative to its width.
inline constexpr double kEstimatePadding = 0.05;

/// A Hamiltonian as a flat list of two-spin single-axis terms, plus the
/// switchable system-apparatus terms.  Immutable; copies share the
/// precomputed application engine.
class CompiledHamiltonian {
 public:
  CompiledHamiltonian(int n_spins, std::vector<Term> static_terms, std::vector<Term> sa_terms,
                      std::optional<CouplingWindow> window = std::nullopt,
                      double constant_offset = 0.0);

  int n_spins() const noexcept { return n_spins_; }
  std::span<const Term> static_terms() const noexcept { return static_terms_; }
  std::span<const Term> sa_terms() const noexcept { return sa_terms_; }
  const std::optional<CouplingWindow>& window() const noexcept { return window_; }

  /// Energy constant removed from the dynamics (self-pairs of S_A . S_A).
  double constant_offset() const noexcept { return constant_offset_; }

  /// True when the system-apparatus terms act at time t.
  bool sa_active(double t) const noexcept;

  /// Term-norm bound: |E| <= 1.05 * sum |c| / 4.
  SpectralBounds bounds() const noexcept { return term_bounds_; }

  /// Interval used to rescale H for Chebyshev propagation, valid for both
  /// switch states.  The certified part is the term-norm bound intersected
  /// with the Gershgorin interval widened by 5%; it is further narrowed to
  /// the Lanczos extremal Ritz values padded by 5% of the width plus the Ritz
  /// residuals.  A too-narrow interval shows up as norm drift during
  /// propagation, which is checked.
  SpectralBounds propagation_bounds() const noexcept { return propagation_bounds_; }

  /// The certified part of propagation_bounds().
  SpectralBounds certified_bounds() const noexcept { return certified_bounds_; }

  CompiledHamiltonian with_window(std::optional<CouplingWindow> window) const;

  const detail::PairOperator& engine() const noexcept { return *engine_; }

 private:
  int n_spins_;
  std::vector<Term> static_terms_;
  std::vector<Term> sa_terms_;
  std::optional<CouplingWindow> window_;
  double constant_offset_;
  SpectralBounds term_bounds_;
  SpectralBounds certified_bounds_;
  SpectralBounds propagation_bounds_;
  std::shared_ptr<const detail::PairOperator> engine_;
};

/// Full Hamiltonian on the layout; spec.window becomes the coupling window.
CompiledHamiltonian compile(const HamiltonianSpec& spec, const SpinLayout& layout,
                            const CouplingRealization& realization);

/// H_E alone on the N_E environment spins (indices 0..N_E-1).
CompiledHamiltonian compile_environment(const HamiltonianSpec& spec, const SpinLayout& layout,
                                        const CouplingRealization& realization);

/// H_A + H_AE + H_E on the apparatus+environment block (apparatus 0..N_A-1,
/// environment N_A..N_A+N_E-1); the system spin and H_SA are left out.
CompiledHamiltonian compile_ready_block(const HamiltonianSpec& spec, const SpinLayout& layout,
                                        const CouplingRealization& realization);

SpectralBounds spectral_bounds(const CompiledHamiltonian& h) noexcept;

/// H psi, with the system-apparatus terms included iff H.sa_active(t).
StateVector apply(const CompiledHamiltonian& h, const StateVector& psi, double t);

/// H psi with the system-apparatus terms switched explicitly.
StateVector apply_switched(const CompiledHamiltonian& h, const StateVector& psi, bool sa_on);

/// <psi|H|psi> (real part) with an explicit switch state.
double expectation(const CompiledHamiltonian& h, const StateVector& psi, bool sa_on);

}  // namespace spinmeter
