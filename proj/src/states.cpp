#include "spinmeter/states.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "spinmeter/propagator.hpp"
#include "spinmeter/rng.hpp"

namespace spinmeter {

std::string to_string(ReadyStateKind kind) {
  switch (kind) {
    case ReadyStateKind::dicke_zero: return "dicke0";
    case ReadyStateKind::random_zero_sector: return "randomR";
    case ReadyStateKind::joint_thermal: return "jointBeta";
  }
  return "?";
}

ReadyStateKind ready_kind_from_string(const std::string& name) {
  if (name == "dicke0") return ReadyStateKind::dicke_zero;
  if (name == "randomR") return ReadyStateKind::random_zero_sector;
  if (name == "jointBeta") return ReadyStateKind::joint_thermal;
  throw std::invalid_argument("unknown ready state '" + name + "' (dicke0, randomR, jointBeta)");
}

ReadySeeds ReadySeeds::derive(std::uint64_t master, std::uint64_t realization) {
  return {derive_seed(master, realization, SeedPurpose::ready_apparatus),
          derive_seed(master, realization, SeedPurpose::ready_environment),
          derive_seed(master, realization, SeedPurpose::ready_joint)};
}

StateVector system_state(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("a must lie in [0, 1]");
  StateVector s(1);
  s[1] = std::sqrt(a);
  s[0] = std::sqrt(1.0 - a);
  return s;
}

namespace {

void require_even(int n) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("the zero-magnetization sector needs an even apparatus size");
  if (n > kMaxSpins) throw std::invalid_argument("apparatus too large");
}

std::vector<std::size_t> zero_sector(int n) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < (std::size_t{1} << n); ++k)
    if (std::popcount(k) == n / 2) idx.push_back(k);
  return idx;
}

}  // namespace

StateVector dicke_zero(int n_apparatus) {
  require_even(n_apparatus);
  const auto idx = zero_sector(n_apparatus);
  StateVector s(n_apparatus);
  const double amp = 1.0 / std::sqrt(static_cast<double>(idx.size()));
  for (auto k : idx) s[k] = amp;
  return s;
}

StateVector random_zero_sector(int n_apparatus, std::uint64_t seed) {
  require_even(n_apparatus);
  RandomStream rng(seed);
  StateVector s(n_apparatus);
  for (auto k : zero_sector(n_apparatus)) {
    const auto [re, im] = rng.gaussian_pair();
    s[k] = Complex(re, im);
  }
  return normalize(std::move(s));
}

StateVector gaussian_state(int n_spins, std::uint64_t seed) {
  RandomStream rng(seed);
  StateVector s(n_spins);
  for (auto& amp : s.amplitudes()) {
    const auto [re, im] = rng.gaussian_pair();
    amp = Complex(re, im);
  }
  return normalize(std::move(s));
}

std::vector<StateVector> thermal_states(const CompiledHamiltonian& h, double beta,
                                        std::span<const std::uint64_t> seeds, int threads) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be >= 0");
  std::vector<StateVector> start;
  start.reserve(seeds.size());
  for (auto seed : seeds) start.push_back(gaussian_state(h.n_spins(), seed));
  if (start.empty()) return start;
  auto block = StateBlock::from_columns(start);
  imaginary_evolve(block, h, beta, true, threads);
  std::vector<StateVector> out;
  out.reserve(seeds.size());
  for (int r = 0; r < block.width(); ++r) out.push_back(block.column(r));
  return out;
}

StateVector thermal_state(const CompiledHamiltonian& h, double beta, std::uint64_t seed,
                          int threads) {
  const std::uint64_t seeds[] = {seed};
  return std::move(thermal_states(h, beta, seeds, threads).front());
}

CompiledHamiltonian ready_projector(ReadyStateKind kind, const HamiltonianSpec& spec,
                                    const SpinLayout& layout,
                                    const CouplingRealization& realization) {
  if (kind == ReadyStateKind::joint_thermal) return compile_ready_block(spec, layout, realization);
  return compile_environment(spec, layout, realization);
}

std::vector<StateVector> ready_states(const ReadyState& ready, const SpinLayout& layout,
                                      const CompiledHamiltonian& projector,
                                      std::span<const ReadySeeds> seeds, int threads) {
  const int na = layout.n_apparatus();
  const int ne = layout.n_environment();
  std::vector<std::uint64_t> thermal_seeds;
  for (const auto& s : seeds)
    thermal_seeds.push_back(ready.kind == ReadyStateKind::joint_thermal ? s.joint : s.environment);

  if (ready.kind == ReadyStateKind::joint_thermal) {
    if (projector.n_spins() != na + ne)
      throw std::invalid_argument("joint projector must act on apparatus and environment");
    return thermal_states(projector, ready.beta, thermal_seeds, threads);
  }

  std::vector<StateVector> env;
  if (ne > 0) {
    if (projector.n_spins() != ne)
      throw std::invalid_argument("environment projector must act on the environment only");
    env = thermal_states(projector, ready.beta, thermal_seeds, threads);
  }
  std::vector<StateVector> out;
  out.reserve(seeds.size());
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    StateVector app = ready.kind == ReadyStateKind::dicke_zero
                          ? dicke_zero(na)
                          : random_zero_sector(na, seeds[r].apparatus);
    if (ne == 0) {
      out.push_back(std::move(app));
    } else {
      const StateVector parts[] = {std::move(app), std::move(env[r])};
      out.push_back(tensor_product(parts));
    }
  }
  return out;
}

StateVector assemble_initial(double a, const StateVector& ready) {
  const StateVector parts[] = {system_state(a), ready};
  return tensor_product(parts);
}

StateVector assemble_initial(double a, const ReadyState& ready, const SpinLayout& layout,
                             const HamiltonianSpec& spec, const CouplingRealization& realization,
                             const ReadySeeds& seeds) {
  const auto projector = ready_projector(ready.kind, spec, layout, realization);
  const ReadySeeds one[] = {seeds};
  return assemble_initial(a, ready_states(ready, layout, projector, one).front());
}

}  // namespace spinmeter
