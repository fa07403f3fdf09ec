#pragma once

// Matrix-free application of a sum of two-spin terms to a block of states.
//
// For one spin pair (i, j) the three axis terms combine into
//   diagonal:      cz/4 * (+1 parallel, -1 antiparallel)
//   double flip:   (cx - cy)/4 between |uu> and |dd>, (cx + cy)/4 between |ud> and |du>
// so the operator is real in the product basis.  The diagonal of all terms is
// precomputed; off-diagonal pairs are applied block by block with
// contiguous axpy runs over rows of 2 * width doubles.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spinmeter/hamiltonian.hpp"

namespace spinmeter::detail {

/// Fused tail of one operator application, evaluated per row after
///   v = scale * (H - shift) * in + prev_weight * prev
/// is formed:  out = v;  acc += acc_coef * v  (when acc is set).
/// `out` may alias `prev` but never `in`.
struct ApplyStep {
  double scale = 1.0;
  double shift = 0.0;
  const Complex* prev = nullptr;
  double prev_weight = 0.0;
  Complex* acc = nullptr;
  Complex acc_coef{};
};

class PairOperator {
 public:
  PairOperator(int n_spins, std::span<const Term> static_terms, std::span<const Term> sa_terms);

  int n_spins() const noexcept { return n_spins_; }
  std::size_t rows() const noexcept { return std::size_t{1} << n_spins_; }

  /// Applies the step to `width` interleaved columns.  Output rows are
  /// partitioned across `threads` workers; results do not depend on it.
  void apply(const Complex* in, Complex* out, int width, bool sa_on, const ApplyStep& step,
             int threads = 1) const;

  /// Gershgorin interval [min_k (d_k - R_k), max_k (d_k + R_k)].
  SpectralBounds gershgorin(bool sa_on) const;

 private:
  struct FlipPair {
    int low_bit;
    int high_bit;
    double parallel;      // (cx - cy)/4
    double antiparallel;  // (cx + cy)/4
  };
  struct Layout {
    std::size_t row;  // doubles per basis row
    int block_bits;
    int sub_bits;
  };
  struct Group {
    std::uint64_t high_mask;  // block-index flip shared by all pairs in the group
    std::vector<FlipPair> pairs;
  };
  struct Part {
    std::vector<double> diagonal;  // empty when the part has no z terms
    std::vector<FlipPair> pairs;
  };

  Part build_part(std::span<const Term> terms) const;
  std::vector<Group> group_pairs(int block_bits, bool sa_on) const;
  void apply_blocks(const double* in, double* out, const Layout& lay,
                    const std::vector<Group>& groups, bool sa_on, const ApplyStep& step,
                    std::size_t block_begin, std::size_t block_end) const;

  int n_spins_;
  Part static_part_;
  Part sa_part_;
};

}  // namespace spinmeter::detail
