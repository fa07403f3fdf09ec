#pragma once

// Chebyshev expansion of exp(-i H dt) and exp(-tau H).  With the rescaled
// operator H~ = (H - c)/w, whose spectrum lies in [-1, 1],
//
//   exp(-i H dt)  = e^{-i c dt} sum_n (2 - delta_n0) (-i)^n J_n(w dt) T_n(H~)
//   exp(-tau H)  ~  sum_n (2 - delta_n0) (-1)^n e^{-w tau} I_n(w tau) T_n(H~)
//
// (the imaginary-time form drops the positive factor e^{-c tau + w tau},
// which the subsequent normalization removes).  T_n(H~) psi is generated by
// the three-term recurrence, so only operator applications are needed.

#include <map>
#include <optional>
#include <vector>

#include "spinmeter/hamiltonian.hpp"
#include "spinmeter/spin_core.hpp"

namespace spinmeter {

/// Relative size below which trailing expansion coefficients are dropped.
inline constexpr double kChebyshevTailCutoff = 1e-15;
/// Extra coefficients kept beyond the cutoff.
inline constexpr int kChebyshevGuardTerms = 3;
/// Largest w * dt per real-time step; longer steps are chained.
inline constexpr double kMaxRescaledStep = 1000.0;
/// Largest w * dtau per imaginary-time sub-step.
inline constexpr double kMaxRescaledImaginaryStep = 20.0;
/// A propagation whose column norms move by more than this aborts.
inline constexpr double kNormDriftLimit = 1e-8;

/// J_0(x) .. J_n_max(x) by Miller's backward recurrence, normalized with
/// J_0 + 2 sum_k J_2k = 1.
std::vector<double> bessel_j_sequence(double x, int n_max);

/// e^{-x} I_0(x) .. e^{-x} I_n_max(x) by backward recurrence, normalized with
/// I_0 + 2 sum_k I_k = e^x.
std::vector<double> scaled_bessel_i_sequence(double x, int n_max);

struct ChebyshevPlan {
  enum class Mode { real_time, imaginary_time };

  Mode mode = Mode::real_time;
  double center = 0.0;
  double halfwidth = 1.0;
  double step = 0.0;  // dt (real time) or tau (imaginary time)
  /// Expansion coefficients with the global phase e^{-i c dt} folded in.
  std::vector<Complex> coefficients;

  int order() const noexcept { return static_cast<int>(coefficients.size()); }
};

/// Plan for exp(-i H dt).  dt = 0 gives the identity plan (one coefficient).
ChebyshevPlan plan_real(const SpectralBounds& bounds, double dt);

/// Plan for exp(-tau H) up to a positive factor.
ChebyshevPlan plan_imaginary(const SpectralBounds& bounds, double tau);

/// Runs one plan on every column of the block.
void apply_plan(const ChebyshevPlan& plan, const CompiledHamiltonian& h, bool sa_on,
                StateBlock& psi, int threads = 1);

/// psi <- exp(-i H dt) psi with the system-apparatus terms held in the given
/// state.  The caller segments propagation at window edges.
void evolve(StateBlock& psi, const CompiledHamiltonian& h, double dt, bool sa_on, int threads = 1);
StateVector evolve(const StateVector& psi, const CompiledHamiltonian& h, double dt, bool sa_on);
/// Switch state taken from the window at the start of the step.
StateVector evolve(const StateVector& psi, const CompiledHamiltonian& h, double dt);

/// psi <- exp(-beta H / 2) psi, renormalized after each sub-step.  The
/// system-apparatus terms are included iff `sa_on`.
void imaginary_evolve(StateBlock& psi, const CompiledHamiltonian& h, double beta, bool sa_on,
                      int threads = 1);
StateVector imaginary_evolve(const StateVector& psi, const CompiledHamiltonian& h, double beta,
                             bool sa_on = true);

/// Real-time propagation along a time axis for one Hamiltonian: segments at
/// the coupling window edges and caches one plan per distinct step length.
class Propagator {
 public:
  explicit Propagator(CompiledHamiltonian h, int threads = 1);

  const CompiledHamiltonian& hamiltonian() const noexcept { return h_; }
  const SpectralBounds& bounds() const noexcept { return bounds_; }
  long long applications() const noexcept { return applications_; }

  /// psi(t_to) from psi(t_from); t_to >= t_from.
  void advance(StateBlock& psi, double t_from, double t_to);

  /// Switch state in force on the open interval following t.
  bool sa_active_after(double t) const noexcept;

 private:
  void step(StateBlock& psi, double dt, bool sa_on);

  CompiledHamiltonian h_;
  SpectralBounds bounds_;
  int threads_;
  long long applications_ = 0;
  std::map<double, ChebyshevPlan> plans_;
};

}  // namespace spinmeter
