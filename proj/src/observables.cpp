#include "spinmeter/observables.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spinmeter {

ReducedDensityMatrix::ReducedDensityMatrix(std::vector<int> kept_spins, Eigen::MatrixXcd matrix)
    : kept_(std::move(kept_spins)), matrix_(std::move(matrix)) {
  if (!std::is_sorted(kept_.begin(), kept_.end()) ||
      std::adjacent_find(kept_.begin(), kept_.end()) != kept_.end())
    throw std::invalid_argument("kept spins must be strictly ascending");
  if (kept_.size() > static_cast<std::size_t>(kMaxKeptSpins))
    throw std::invalid_argument("too many kept spins");
  const Eigen::Index d = Eigen::Index{1} << kept_.size();
  if (matrix_.rows() != d || matrix_.cols() != d)
    throw std::invalid_argument("density matrix size does not match the kept spins");
}

double ReducedDensityMatrix::purity() const {
  // Tr rho^2 = sum |rho_ij|^2 for Hermitian rho.
  return matrix_.squaredNorm();
}

Eigen::VectorXd ReducedDensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(matrix_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

void ReducedDensityMatrix::validate() const {
  const Complex tr = trace();
  if (std::abs(tr.real() - 1.0) > kTraceTolerance || std::abs(tr.imag()) > kTraceTolerance)
    throw std::domain_error("reduced density matrix trace " + std::to_string(tr.real()) + " != 1");
  const double asym = (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
  if (asym > kHermiticityTolerance)
    throw std::domain_error("reduced density matrix not Hermitian (" + std::to_string(asym) + ")");
  const double lmin = eigenvalues()(0);
  if (lmin < kNegativeEigenvalueFloor)
    throw std::domain_error("reduced density matrix has eigenvalue " + std::to_string(lmin));
}

namespace {

std::uint64_t mask_of(std::span<const int> spins, int n_spins) {
  std::uint64_t mask = 0;
  for (std::size_t m = 0; m < spins.size(); ++m) {
    const int s = spins[m];
    if (s < 0 || s >= n_spins) throw std::out_of_range("kept spin outside the state");
    if (m > 0 && s <= spins[m - 1]) throw std::invalid_argument("kept spins must be strictly ascending");
    mask |= std::uint64_t{1} << s;
  }
  return mask;
}

// Columns of M enumerate the traced spins, rows the kept spins; bits in
// `fixed_mask` are pinned to `fixed_value`.  rho = M M^dagger.
Eigen::MatrixXcd amplitude_matrix(const StateVector& psi, std::uint64_t kept_mask,
                                  std::uint64_t fixed_mask, std::uint64_t fixed_value) {
  const std::uint64_t all = (std::uint64_t{1} << psi.n_spins()) - 1;
  const std::uint64_t rest_mask = all & ~kept_mask & ~fixed_mask;
  const int k = std::popcount(kept_mask);
  const Eigen::Index d = Eigen::Index{1} << k;
  const Eigen::Index cols = Eigen::Index{1} << std::popcount(rest_mask);

  std::vector<std::uint64_t> kept_offset(static_cast<std::size_t>(d));
  {
    std::uint64_t cur = 0;
    for (Eigen::Index a = 0; a < d; ++a) {
      kept_offset[static_cast<std::size_t>(a)] = cur;
      cur = ((cur | ~kept_mask) + 1) & kept_mask;
    }
  }
  Eigen::MatrixXcd m(d, cols);
  std::uint64_t rest = 0;
  for (Eigen::Index b = 0; b < cols; ++b) {
    const std::uint64_t base = rest | fixed_value;
    for (Eigen::Index a = 0; a < d; ++a) m(a, b) = psi[base | kept_offset[static_cast<std::size_t>(a)]];
    rest = ((rest | ~rest_mask) + 1) & rest_mask;
  }
  return m;
}

Eigen::MatrixXcd gram(const Eigen::MatrixXcd& m) {
  Eigen::MatrixXcd rho = m * m.adjoint();
  // Exact Hermitian symmetry; the product is Hermitian up to rounding.
  return 0.5 * (rho + rho.adjoint());
}

void require_system_kept(const ReducedDensityMatrix& rho) {
  if (rho.kept_spins().empty() || rho.kept_spins().front() != 0)
    throw std::invalid_argument("density matrix must keep the measured spin 0");
}

// sum of sigma^z over bits first .. first + count - 1 of index a.
int sigma_z_sum(std::size_t a, int first, int count) {
  int s = 0;
  for (int m = first; m < first + count; ++m) s += ((a >> m) & 1U) ? 1 : -1;
  return s;
}

}  // namespace

ReducedDensityMatrix rdm(const StateVector& psi, std::span<const int> kept) {
  if (kept.size() > static_cast<std::size_t>(kMaxKeptSpins))
    throw std::invalid_argument("kept set larger than " + std::to_string(kMaxKeptSpins) + " spins");
  const std::uint64_t mask = mask_of(kept, psi.n_spins());
  return ReducedDensityMatrix(std::vector<int>(kept.begin(), kept.end()),
                              gram(amplitude_matrix(psi, mask, 0, 0)));
}

Complex coherence(const ReducedDensityMatrix& rho_sa) {
  require_system_kept(rho_sa);
  const auto& m = rho_sa.matrix();
  Complex c = 0.0;
  for (Eigen::Index a = 0; a < m.rows() / 2; ++a) c += m(2 * a + 1, 2 * a);
  return c;
}

double branch_weight(const ReducedDensityMatrix& rho_sa, Branch branch) {
  require_system_kept(rho_sa);
  const auto& m = rho_sa.matrix();
  const Eigen::Index bit = static_cast<Eigen::Index>(branch);
  double w = 0.0;
  for (Eigen::Index a = 0; a < m.rows() / 2; ++a) w += m(2 * a + bit, 2 * a + bit).real();
  return w;
}

ReducedDensityMatrix conditional_rdm(const ReducedDensityMatrix& rho_sa, Branch branch) {
  require_system_kept(rho_sa);
  if (rho_sa.kept_spins().size() < 2) throw std::invalid_argument("nothing left after spin 0");
  const double w = branch_weight(rho_sa, branch);
  if (!(w > kMinBranchWeight)) throw std::domain_error("branch weight vanishes; conditional state undefined");
  const auto& m = rho_sa.matrix();
  const Eigen::Index bit = static_cast<Eigen::Index>(branch);
  const Eigen::Index d = m.rows() / 2;
  Eigen::MatrixXcd sub(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) sub(a, b) = m(2 * a + bit, 2 * b + bit) / w;
  std::vector<int> kept(rho_sa.kept_spins().begin() + 1, rho_sa.kept_spins().end());
  return ReducedDensityMatrix(std::move(kept), std::move(sub));
}

ReducedDensityMatrix conditional_rdm(const StateVector& psi, std::span<const int> kept,
                                     Branch branch) {
  const std::uint64_t mask = mask_of(kept, psi.n_spins());
  if (mask & 1U) throw std::invalid_argument("conditional state cannot keep spin 0");
  if (kept.size() > static_cast<std::size_t>(kMaxKeptSpins))
    throw std::invalid_argument("kept set too large");
  Eigen::MatrixXcd rho = gram(amplitude_matrix(psi, mask, 1, static_cast<std::uint64_t>(branch)));
  const double w = rho.trace().real();
  if (!(w > kMinBranchWeight)) throw std::domain_error("branch weight vanishes; conditional state undefined");
  rho /= w;
  return ReducedDensityMatrix(std::vector<int>(kept.begin(), kept.end()), std::move(rho));
}

double entropy(const ReducedDensityMatrix& rho) {
  const Eigen::VectorXd lambda = rho.eigenvalues();
  double s = 0.0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const double l = lambda(k);
    if (l < kNegativeEigenvalueFloor)
      throw std::domain_error("negative eigenvalue " + std::to_string(l) + " in entropy");
    if (l > kEntropyCutoff && l < 1.0) s -= l * std::log(l);
  }
  // eigenvalues a rounding error above 1 would give -0
  return std::max(s, 0.0);
}

double correlation(const StateVector& psi, const SpinLayout& layout, Axis axis) {
  if (psi.n_spins() != layout.n_total()) throw std::invalid_argument("state does not match layout");
  StateVector out(psi.n_spins());
  for (int i : layout.apparatus_spins())
    accumulate_two_spin_term(psi, SpinLayout::system_index(), i, axis, 1.0, out);
  // sigma = 2 S on both spins.
  return 4.0 * inner(psi, out).real() / layout.n_apparatus();
}

double magnetization(const StateVector& psi, const SpinLayout& layout) {
  if (psi.n_spins() != layout.n_total()) throw std::invalid_argument("state does not match layout");
  const int na = layout.n_apparatus();
  double m = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) m += std::norm(psi[k]) * sigma_z_sum(k, 1, na);
  return m / na;
}

double conditional_order_parameter(const ReducedDensityMatrix& rho_sa, Branch branch) {
  return order_parameter(conditional_rdm(rho_sa, branch));
}

double order_parameter(const ReducedDensityMatrix& rho_apparatus) {
  const int n = static_cast<int>(rho_apparatus.kept_spins().size());
  if (n == 0) throw std::invalid_argument("empty apparatus");
  const auto& m = rho_apparatus.matrix();
  double s = 0.0;
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    s += m(a, a).real() * sigma_z_sum(static_cast<std::size_t>(a), 0, n);
  return s / n;
}

}  // namespace spinmeter
