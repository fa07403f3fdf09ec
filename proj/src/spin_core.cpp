#include "spinmeter/spin_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spinmeter {

namespace {

void require_same_size(const StateVector& a, const StateVector& b) {
  if (a.n_spins() != b.n_spins() || a.size() != b.size())
    throw std::invalid_argument("state vectors live on different spin counts (" +
                                std::to_string(a.n_spins()) + " vs " +
                                std::to_string(b.n_spins()) + ")");
}

void require_spin(int n_spins, int i) {
  if (i < 0 || i >= n_spins)
    throw std::out_of_range("spin index " + std::to_string(i) + " outside 0.." +
                            std::to_string(n_spins - 1));
}

void require_spin_count(int n_spins) {
  if (n_spins < 0 || n_spins > kMaxSpins)
    throw std::invalid_argument("spin count " + std::to_string(n_spins) +
                                " outside 0.." + std::to_string(kMaxSpins));
}

}  // namespace

char axis_name(Axis axis) noexcept {
  switch (axis) {
    case Axis::x: return 'x';
    case Axis::y: return 'y';
    case Axis::z: return 'z';
  }
  return '?';
}

SpinLayout::SpinLayout(int n_apparatus, int n_environment)
    : n_apparatus_(n_apparatus), n_environment_(n_environment) {
  if (n_apparatus < 2 || n_apparatus % 2 != 0)
    throw std::invalid_argument("apparatus size must be even and at least 2, got " +
                                std::to_string(n_apparatus));
  if (n_environment < 0)
    throw std::invalid_argument("environment size must be nonnegative");
  if (n_total() > kMaxSpins)
    throw std::invalid_argument("layout needs " + std::to_string(n_total()) +
                                " spins, ceiling is " + std::to_string(kMaxSpins));
}

int SpinLayout::apparatus_index(int i) const {
  if (i < 0 || i >= n_apparatus_) throw std::out_of_range("apparatus spin out of range");
  return 1 + i;
}

int SpinLayout::environment_index(int k) const {
  if (k < 0 || k >= n_environment_) throw std::out_of_range("environment spin out of range");
  return 1 + n_apparatus_ + k;
}

std::vector<int> SpinLayout::apparatus_spins() const {
  std::vector<int> spins(n_apparatus_);
  for (int i = 0; i < n_apparatus_; ++i) spins[i] = 1 + i;
  return spins;
}

std::vector<int> SpinLayout::system_apparatus_spins() const {
  std::vector<int> spins(n_apparatus_ + 1);
  for (int i = 0; i <= n_apparatus_; ++i) spins[i] = i;
  return spins;
}

StateVector::StateVector(int n_spins) : n_spins_(n_spins) {
  require_spin_count(n_spins);
  amplitudes_.assign(std::size_t{1} << n_spins, Complex{});
}

StateVector::StateVector(int n_spins, std::vector<Complex> amplitudes)
    : n_spins_(n_spins), amplitudes_(std::move(amplitudes)) {
  require_spin_count(n_spins);
  if (amplitudes_.size() != (std::size_t{1} << n_spins))
    throw std::invalid_argument("amplitude count does not match 2^" + std::to_string(n_spins));
}

StateVector StateVector::basis(int n_spins, std::uint64_t index) {
  StateVector psi(n_spins);
  if (index >= psi.size()) throw std::out_of_range("basis index out of range");
  psi[index] = 1.0;
  return psi;
}

StateVector& StateVector::operator+=(const StateVector& other) {
  require_same_size(*this, other);
  for (std::size_t k = 0; k < size(); ++k) amplitudes_[k] += other.amplitudes_[k];
  return *this;
}

StateVector& StateVector::operator*=(Complex factor) noexcept {
  for (auto& v : amplitudes_) v *= factor;
  return *this;
}

StateBlock::StateBlock(int n_spins, int width) : n_spins_(n_spins), width_(width) {
  require_spin_count(n_spins);
  if (width < 1) throw std::invalid_argument("state block needs at least one column");
  data_.assign((std::size_t{1} << n_spins) * static_cast<std::size_t>(width), Complex{});
}

StateBlock StateBlock::from_columns(std::span<const StateVector> columns) {
  if (columns.empty()) throw std::invalid_argument("state block needs at least one column");
  StateBlock block(columns.front().n_spins(), static_cast<int>(columns.size()));
  for (std::size_t r = 0; r < columns.size(); ++r)
    block.set_column(static_cast<int>(r), columns[r]);
  return block;
}

StateVector StateBlock::column(int r) const {
  if (r < 0 || r >= width_) throw std::out_of_range("column out of range");
  StateVector psi(n_spins_);
  const std::size_t w = static_cast<std::size_t>(width_);
  for (std::size_t k = 0; k < rows(); ++k) psi[k] = data_[k * w + r];
  return psi;
}

void StateBlock::set_column(int r, const StateVector& state) {
  if (r < 0 || r >= width_) throw std::out_of_range("column out of range");
  if (state.n_spins() != n_spins_) throw std::invalid_argument("column spin count mismatch");
  const std::size_t w = static_cast<std::size_t>(width_);
  for (std::size_t k = 0; k < rows(); ++k) data_[k * w + r] = state[k];
}

std::vector<double> StateBlock::column_norms() const {
  std::vector<double> sums(width_, 0.0);
  const std::size_t w = static_cast<std::size_t>(width_);
  for (std::size_t k = 0; k < rows(); ++k)
    for (std::size_t r = 0; r < w; ++r) sums[r] += std::norm(data_[k * w + r]);
  for (auto& s : sums) s = std::sqrt(s);
  return sums;
}

void StateBlock::normalize_columns() {
  auto norms = column_norms();
  for (double n : norms)
    if (!(n > 0.0) || !std::isfinite(n))
      throw std::domain_error("cannot normalize a zero or non-finite column");
  const std::size_t w = static_cast<std::size_t>(width_);
  std::vector<double> inv(w);
  for (std::size_t r = 0; r < w; ++r) inv[r] = 1.0 / norms[r];
  for (std::size_t k = 0; k < rows(); ++k)
    for (std::size_t r = 0; r < w; ++r) data_[k * w + r] *= inv[r];
}

void StateBlock::swap(StateBlock& other) noexcept {
  std::swap(n_spins_, other.n_spins_);
  std::swap(width_, other.width_);
  data_.swap(other.data_);
}

Complex inner(const StateVector& a, const StateVector& b) {
  require_same_size(a, b);
  Complex sum{};
  for (std::size_t k = 0; k < a.size(); ++k) sum += std::conj(a[k]) * b[k];
  return sum;
}

double norm(const StateVector& psi) {
  double sum = 0.0;
  for (const auto& v : psi.amplitudes()) sum += std::norm(v);
  return std::sqrt(sum);
}

StateVector normalize(StateVector psi) {
  const double n = norm(psi);
  if (!(n > 0.0) || !std::isfinite(n))
    throw std::domain_error("cannot normalize a zero or non-finite state");
  psi *= 1.0 / n;
  return psi;
}

StateVector scaled_add(const StateVector& psi, Complex c, const StateVector& phi) {
  require_same_size(psi, phi);
  StateVector out = psi;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += c * phi[k];
  return out;
}

void accumulate_two_spin_term(const StateVector& psi, int i, int j, Axis axis, double c,
                              StateVector& out) {
  require_same_size(psi, out);
  require_spin(psi.n_spins(), i);
  require_spin(psi.n_spins(), j);
  if (i == j) throw std::invalid_argument("two-spin term needs distinct spins");

  const std::uint64_t bit_i = std::uint64_t{1} << i;
  const std::uint64_t bit_j = std::uint64_t{1} << j;
  const std::uint64_t flip = bit_i | bit_j;
  const std::size_t dim = psi.size();
  const double quarter = 0.25 * c;

  switch (axis) {
    case Axis::z:
      for (std::size_t k = 0; k < dim; ++k) {
        const bool parallel = ((k & bit_i) != 0) == ((k & bit_j) != 0);
        out[k] += (parallel ? quarter : -quarter) * psi[k];
      }
      break;
    case Axis::x:
      for (std::size_t k = 0; k < dim; ++k) out[k ^ flip] += quarter * psi[k];
      break;
    case Axis::y:
      // S^y|up> = (i/2)|down>, S^y|down> = (-i/2)|up>: parallel pairs pick up
      // (i/2)^2 = -1/4, antiparallel pairs (i/2)(-i/2) = +1/4.
      for (std::size_t k = 0; k < dim; ++k) {
        const bool parallel = ((k & bit_i) != 0) == ((k & bit_j) != 0);
        out[k ^ flip] += (parallel ? -quarter : quarter) * psi[k];
      }
      break;
  }
}

void accumulate_one_spin_term(const StateVector& psi, int i, Axis axis, Complex c,
                              StateVector& out) {
  require_same_size(psi, out);
  require_spin(psi.n_spins(), i);
  const std::uint64_t bit = std::uint64_t{1} << i;
  const Complex half = 0.5 * c;
  const Complex half_i = half * Complex{0.0, 1.0};
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const bool up = (k & bit) != 0;
    switch (axis) {
      case Axis::x: out[k ^ bit] += half * psi[k]; break;
      case Axis::y: out[k ^ bit] += (up ? half_i : -half_i) * psi[k]; break;
      case Axis::z: out[k] += (up ? half : -half) * psi[k]; break;
    }
  }
}

StateVector tensor_product(std::span<const SpinBlock> blocks, int n_spins) {
  require_spin_count(n_spins);
  std::vector<const SpinBlock*> order;
  for (const auto& b : blocks) order.push_back(&b);
  std::sort(order.begin(), order.end(),
            [](const SpinBlock* a, const SpinBlock* b) { return a->first_spin < b->first_spin; });

  int next = 0;
  for (const auto* b : order) {
    if (b->first_spin < next) throw std::invalid_argument("tensor blocks overlap");
    if (b->first_spin > next) throw std::invalid_argument("tensor blocks leave spins uncovered");
    next += b->state.n_spins();
  }
  if (next != n_spins) throw std::invalid_argument("tensor blocks do not cover all spins");

  StateVector out(n_spins);
  out[0] = 1.0;
  // Build up the product from the lowest block; after each step the first
  // 2^covered amplitudes hold the partial product.
  std::size_t covered = 1;
  for (const auto* b : order) {
    const std::size_t block_dim = b->state.size();
    for (std::size_t hi = block_dim; hi-- > 0;) {
      const Complex f = b->state[hi];
      for (std::size_t lo = 0; lo < covered; ++lo) out[hi * covered + lo] = f * out[lo];
    }
    covered *= block_dim;
  }
  return out;
}

StateVector tensor_product(std::span<const StateVector> parts) {
  std::vector<SpinBlock> blocks;
  int first = 0;
  for (const auto& p : parts) {
    blocks.push_back({first, p});
    first += p.n_spins();
  }
  return tensor_product(blocks, first);
}

}  // namespace spinmeter
