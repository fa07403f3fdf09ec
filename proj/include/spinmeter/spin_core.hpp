#pragma once

// Basis conventions and state storage for systems of spin-1/2 particles.
//
// Basis index bit b_i holds the z-projection of spin i (1 = up, 0 = down);
// spin 0 is the least significant bit.  The measured spin S sits at index 0,
// the apparatus spins follow at 1..N_A and the environment spins at
// N_A+1..N_A+N_E, so tracing out the environment is a contiguous-stride sum.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spinmeter {

using Complex = std::complex<double>;

enum class Axis { x, y, z };

inline constexpr Axis kAxes[] = {Axis::x, Axis::y, Axis::z};

char axis_name(Axis axis) noexcept;

/// Largest number of spins a state may hold (2^26 amplitudes = 1 GiB).
inline constexpr int kMaxSpins = 26;

/// Index assignment of the system, apparatus and environment spins.
class SpinLayout {
 public:
  SpinLayout(int n_apparatus, int n_environment);

  int n_apparatus() const noexcept { return n_apparatus_; }
  int n_environment() const noexcept { return n_environment_; }
  int n_total() const noexcept { return 1 + n_apparatus_ + n_environment_; }
  std::size_t dimension() const noexcept { return std::size_t{1} << n_total(); }

  static constexpr int system_index() noexcept { return 0; }
  int apparatus_index(int i) const;
  int environment_index(int k) const;

  std::vector<int> apparatus_spins() const;
  /// {S} followed by the apparatus spins, i.e. 0..N_A.
  std::vector<int> system_apparatus_spins() const;

  friend bool operator==(const SpinLayout&, const SpinLayout&) = default;

 private:
  int n_apparatus_;
  int n_environment_;
};

/// Dense vector of 2^n complex amplitudes over the product basis.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(int n_spins);
  StateVector(int n_spins, std::vector<Complex> amplitudes);

  static StateVector basis(int n_spins, std::uint64_t index);

  int n_spins() const noexcept { return n_spins_; }
  std::size_t size() const noexcept { return amplitudes_.size(); }

  std::span<Complex> amplitudes() noexcept { return amplitudes_; }
  std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
  Complex* data() noexcept { return amplitudes_.data(); }
  const Complex* data() const noexcept { return amplitudes_.data(); }

  Complex& operator[](std::size_t k) noexcept { return amplitudes_[k]; }
  const Complex& operator[](std::size_t k) const noexcept { return amplitudes_[k]; }

  StateVector& operator+=(const StateVector& other);
  StateVector& operator*=(Complex factor) noexcept;

 private:
  int n_spins_ = 0;
  std::vector<Complex> amplitudes_;
};

/// Several state vectors over the same spins, stored row-interleaved:
/// amplitude k of column r lives at data()[k * width() + r].  Columns share
/// every operator application, which keeps the kernels cache friendly.
class StateBlock {
 public:
  StateBlock() = default;
  StateBlock(int n_spins, int width);

  static StateBlock from_columns(std::span<const StateVector> columns);

  int n_spins() const noexcept { return n_spins_; }
  int width() const noexcept { return width_; }
  std::size_t rows() const noexcept { return std::size_t{1} << n_spins_; }

  Complex* data() noexcept { return data_.data(); }
  const Complex* data() const noexcept { return data_.data(); }

  StateVector column(int r) const;
  void set_column(int r, const StateVector& state);

  /// Column norms, each summed in ascending basis order.
  std::vector<double> column_norms() const;
  void normalize_columns();

  void swap(StateBlock& other) noexcept;

 private:
  int n_spins_ = 0;
  int width_ = 0;
  std::vector<Complex> data_;
};

/// <a|b>, antilinear in the first argument.
Complex inner(const StateVector& a, const StateVector& b);
double norm(const StateVector& psi);
/// Throws std::domain_error on a zero vector.
StateVector normalize(StateVector psi);
/// psi + c * phi
StateVector scaled_add(const StateVector& psi, Complex c, const StateVector& phi);

/// out += c * S_i^axis S_j^axis psi, with S = sigma / 2.
void accumulate_two_spin_term(const StateVector& psi, int i, int j, Axis axis, double c,
                              StateVector& out);

/// out += c * S_i^axis psi.
void accumulate_one_spin_term(const StateVector& psi, int i, Axis axis, Complex c,
                              StateVector& out);

/// A state placed on the contiguous spins first_spin .. first_spin + n - 1.
struct SpinBlock {
  int first_spin = 0;
  StateVector state;
};

/// Product state of blocks that must tile 0..n_spins-1 without overlap.
StateVector tensor_product(std::span<const SpinBlock> blocks, int n_spins);

/// Product state of parts listed in index order (parts[0] on the lowest spins).
StateVector tensor_product(std::span<const StateVector> parts);

}  // namespace spinmeter
