#pragma once

// Initial states: the measured spin, the three ready states of apparatus and
// environment, and the assembled product state
//   |Psi(0)> = |psi(a)>_S (x) |0>_{A,E}.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spinmeter/hamiltonian.hpp"
#include "spinmeter/spin_core.hpp"

namespace spinmeter {

enum class ReadyStateKind {
  dicke_zero,          // Dicke S_A^z = 0 apparatus (x) thermal environment
  random_zero_sector,  // Gaussian apparatus in the S_A^z = 0 sector (x) thermal environment
  joint_thermal,       // thermal state of H_A + H_AE + H_E
};

/// Config names: "dicke0", "randomR", "jointBeta".
std::string to_string(ReadyStateKind kind);
ReadyStateKind ready_kind_from_string(const std::string& name);

struct ReadyState {
  ReadyStateKind kind = ReadyStateKind::dicke_zero;
  double beta = 50.0;
};

/// Seeds of one ready-state realization.  Only those the kind needs are used.
struct ReadySeeds {
  std::uint64_t apparatus = 0;
  std::uint64_t environment = 0;
  std::uint64_t joint = 0;

  /// Seeds for realization k of a run with the given master seed.
  static ReadySeeds derive(std::uint64_t master, std::uint64_t realization);
};

/// sqrt(a) |up> + sqrt(1 - a) |down> on one spin.
StateVector system_state(double a);

/// Equal-weight superposition of all S_A^z = 0 basis states of n spins.
StateVector dicke_zero(int n_apparatus);

/// Box-Muller amplitudes (real and imaginary parts) on the S_A^z = 0 basis
/// states in ascending index order, zero elsewhere, normalized.
StateVector random_zero_sector(int n_apparatus, std::uint64_t seed);

/// Box-Muller amplitudes on every basis state in ascending order, normalized.
StateVector gaussian_state(int n_spins, std::uint64_t seed);

/// exp(-beta H / 2) applied to gaussian_state(seed), normalized.  H acts on
/// all of the block's spins.
StateVector thermal_state(const CompiledHamiltonian& h, double beta, std::uint64_t seed,
                          int threads = 1);

/// Several thermal states projected together (one column per seed); each
/// column equals thermal_state for its seed.
std::vector<StateVector> thermal_states(const CompiledHamiltonian& h, double beta,
                                        std::span<const std::uint64_t> seeds, int threads = 1);

/// The operator used for the thermal projection of the given kind:
/// H_E on the environment, or H_A + H_AE + H_E on apparatus and environment.
CompiledHamiltonian ready_projector(ReadyStateKind kind, const HamiltonianSpec& spec,
                                    const SpinLayout& layout,
                                    const CouplingRealization& realization);

/// Ready states |0>_{A,E} on spins 1..N_A+N_E of the layout, re-indexed from 0
/// (apparatus first), one per seed set.  `projector` comes from
/// ready_projector for the same kind.
std::vector<StateVector> ready_states(const ReadyState& ready, const SpinLayout& layout,
                                      const CompiledHamiltonian& projector,
                                      std::span<const ReadySeeds> seeds, int threads = 1);

/// |psi(a)>_S (x) ready.
StateVector assemble_initial(double a, const StateVector& ready);

/// Single-realization convenience form.
StateVector assemble_initial(double a, const ReadyState& ready, const SpinLayout& layout,
                             const HamiltonianSpec& spec, const CouplingRealization& realization,
                             const ReadySeeds& seeds);

}  // namespace spinmeter
