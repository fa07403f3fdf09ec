#pragma once

// Reduced density matrices and the quantities read off them.
//
// Within a reduced density matrix, bit m of the row index is the z-projection
// of kept_spins()[m] (kept spins in ascending order), matching the full-basis
// convention.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spinmeter/spin_core.hpp"

namespace spinmeter {

/// Largest kept set accepted by rdm (d = 1024).
inline constexpr int kMaxKeptSpins = 10;

/// Tolerances of the physical-matrix checks.
inline constexpr double kTraceTolerance = 1e-10;
inline constexpr double kHermiticityTolerance = 1e-12;
inline constexpr double kNegativeEigenvalueFloor = -1e-10;
/// Eigenvalues at or below this contribute nothing to the entropy.
inline constexpr double kEntropyCutoff = 1e-12;
/// Smallest branch weight for which a conditional state is defined.
inline constexpr double kMinBranchWeight = 1e-12;

enum class Branch { down = 0, up = 1 };

class ReducedDensityMatrix {
 public:
  ReducedDensityMatrix(std::vector<int> kept_spins, Eigen::MatrixXcd matrix);

  const std::vector<int>& kept_spins() const noexcept { return kept_; }
  const Eigen::MatrixXcd& matrix() const noexcept { return matrix_; }
  int dimension() const noexcept { return static_cast<int>(matrix_.rows()); }

  Complex trace() const { return matrix_.trace(); }
  double purity() const;
  /// Ascending eigenvalues.
  Eigen::VectorXd eigenvalues() const;

  /// Throws std::domain_error unless the matrix is Hermitian, trace-one and
  /// positive semidefinite within the tolerances above.
  void validate() const;

 private:
  std::vector<int> kept_;
  Eigen::MatrixXcd matrix_;
};

/// Partial trace of |psi><psi| over every spin not in `kept`.
ReducedDensityMatrix rdm(const StateVector& psi, std::span<const int> kept);

/// Tr_A <up| rho_SA |down>.  rho_SA must keep spin 0 plus others.
Complex coherence(const ReducedDensityMatrix& rho_sa);

/// Tr[rho_ii]: weight of the given state of spin 0.
double branch_weight(const ReducedDensityMatrix& rho_sa, Branch branch);

/// rho_ii / Tr[rho_ii] on the remaining kept spins.  Throws std::domain_error
/// when the branch weight is below kMinBranchWeight.
ReducedDensityMatrix conditional_rdm(const ReducedDensityMatrix& rho_sa, Branch branch);

/// Same conditional state obtained by slicing psi on spin 0 before tracing
/// over the spins not in `kept` (which must exclude spin 0).
ReducedDensityMatrix conditional_rdm(const StateVector& psi, std::span<const int> kept,
                                     Branch branch);

/// -sum lambda ln lambda (nats).  Eigenvalues in [-1e-10, 1e-12] count as
/// zero; anything more negative throws std::domain_error.
double entropy(const ReducedDensityMatrix& rho);

/// <sigma_S^axis sigma_A^axis> / N_A with sigma_A = sum over apparatus spins.
double correlation(const StateVector& psi, const SpinLayout& layout, Axis axis);

/// <sigma_A^z> / N_A.
double magnetization(const StateVector& psi, const SpinLayout& layout);

/// Tr[sigma_A^z rho~_ii] / N_A, where rho_sa keeps spin 0 and the apparatus
/// (every other kept spin counts as apparatus).
double conditional_order_parameter(const ReducedDensityMatrix& rho_sa, Branch branch);

/// Tr[sigma_A^z rho] / (number of kept spins) for a state on apparatus spins.
double order_parameter(const ReducedDensityMatrix& rho_apparatus);

}  // namespace spinmeter
