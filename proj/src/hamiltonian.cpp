#include "spinmeter/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "pair_operator.hpp"
#include "spinmeter/rng.hpp"

namespace spinmeter {

std::string to_string(Topology topology) {
  return topology == Topology::open_chain ? "open_chain" : "fully_connected";
}

Topology topology_from_string(const std::string& name) {
  if (name == "open_chain") return Topology::open_chain;
  if (name == "fully_connected") return Topology::fully_connected;
  throw std::invalid_argument("unknown topology '" + name + "'");
}

void HamiltonianSpec::validate() const {
  for (double v : {J, I_SA, I_AE, K, Delta})
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite coupling constant");
  if (!(J > 0.0)) throw std::invalid_argument("J must be positive (ferromagnetic apparatus)");
  if (window) {
    if (!std::isfinite(window->t1) || !std::isfinite(window->t2))
      throw std::invalid_argument("non-finite coupling window");
    if (!(window->t1 < window->t2)) throw std::invalid_argument("coupling window needs t1 < t2");
  }
}

CouplingRealization::CouplingRealization(int n_apparatus, int n_environment, std::uint64_t seed,
                                         std::array<std::vector<double>, 3> environment_pairs,
                                         std::vector<double> apparatus_environment)
    : n_apparatus_(n_apparatus),
      n_environment_(n_environment),
      seed_(seed),
      r_ee_(std::move(environment_pairs)),
      r_ae_(std::move(apparatus_environment)) {
  const std::size_t pairs =
      static_cast<std::size_t>(n_environment) * static_cast<std::size_t>(std::max(n_environment - 1, 0)) / 2;
  for (const auto& v : r_ee_)
    if (v.size() != pairs) throw std::invalid_argument("environment coupling count mismatch");
  if (r_ae_.size() != static_cast<std::size_t>(n_apparatus) * n_environment)
    throw std::invalid_argument("apparatus-environment coupling count mismatch");
}

std::size_t CouplingRealization::pair_index(int n_environment, int k, int l) {
  if (k > l) std::swap(k, l);
  if (k < 0 || l >= n_environment || k == l) throw std::out_of_range("invalid environment pair");
  // pairs (0,1..n-1), (1,2..n-1), ...
  const std::size_t n = static_cast<std::size_t>(n_environment);
  const std::size_t kk = static_cast<std::size_t>(k);
  return kk * n - kk * (kk + 1) / 2 + static_cast<std::size_t>(l - k - 1);
}

double CouplingRealization::environment(Axis axis, int k, int l) const {
  return r_ee_[static_cast<int>(axis)][pair_index(n_environment_, k, l)];
}

double CouplingRealization::apparatus_environment(int i, int k) const {
  if (i < 0 || i >= n_apparatus_ || k < 0 || k >= n_environment_)
    throw std::out_of_range("invalid apparatus-environment pair");
  return r_ae_[static_cast<std::size_t>(i) * n_environment_ + k];
}

std::span<const double> CouplingRealization::environment_values(Axis axis) const {
  return r_ee_[static_cast<int>(axis)];
}

CouplingRealization draw_couplings(const SpinLayout& layout, std::uint64_t seed) {
  RandomStream rng(seed);
  const int ne = layout.n_environment();
  const int na = layout.n_apparatus();
  const std::size_t pairs = static_cast<std::size_t>(ne) * std::max(ne - 1, 0) / 2;
  std::array<std::vector<double>, 3> r_ee;
  for (auto& v : r_ee) v.resize(pairs);
  for (std::size_t p = 0; p < pairs; ++p)
    for (auto& v : r_ee) v[p] = rng.uniform(-1.0, 1.0);
  std::vector<double> r_ae(static_cast<std::size_t>(na) * ne);
  for (auto& r : r_ae) r = rng.uniform();
  return CouplingRealization(na, ne, seed, std::move(r_ee), std::move(r_ae));
}

namespace {

SpectralBounds term_norm_bounds(std::span<const Term> a, std::span<const Term> b) {
  double sum = 0.0;
  for (const auto& t : a) sum += std::abs(t.coefficient);
  for (const auto& t : b) sum += std::abs(t.coefficient);
  const double radius = kBoundInflation * 0.25 * sum;
  return {-radius, radius};
}

SpectralBounds inflate(SpectralBounds b) {
  const double c = b.center();
  const double w = kBoundInflation * b.halfwidth();
  return {c - w, c + w};
}

// Extremal Ritz values after a fixed number of Lanczos steps from a seeded
// random start, padded outward.  Exact (to rounding) once the Krylov space
// becomes invariant.
SpectralBounds lanczos_estimate(const detail::PairOperator& op, bool sa_on) {
  const std::size_t dim = op.rows();
  std::vector<Complex> v(dim), w(dim), prev(dim);
  RandomStream rng(0x51ce7a11ULL);
  for (auto& a : v) a = Complex(rng.gaussian_pair().first, 0.0);
  double nv = 0.0;
  for (const auto& a : v) nv += std::norm(a);
  nv = std::sqrt(nv);
  for (auto& a : v) a /= nv;

  std::vector<double> alpha, beta;
  double b = 0.0;
  for (int k = 0; k < kLanczosSteps; ++k) {
    op.apply(v.data(), w.data(), 1, sa_on, {});
    double a = 0.0;
    for (std::size_t q = 0; q < dim; ++q) a += (std::conj(v[q]) * w[q]).real();
    for (std::size_t q = 0; q < dim; ++q) w[q] -= a * v[q] + b * prev[q];
    b = 0.0;
    for (const auto& x : w) b += std::norm(x);
    b = std::sqrt(b);
    alpha.push_back(a);
    beta.push_back(b);
    if (b <= 1e-12 * (std::abs(a) + 1.0)) break;
    std::swap(prev, v);
    for (std::size_t q = 0; q < dim; ++q) v[q] = w[q] / b;
  }

  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    t(k, k) = alpha[k];
    if (k + 1 < m) t(k, k + 1) = t(k + 1, k) = beta[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(m - 1);
  // Residual norm of a Ritz pair: beta_m * |last component of its vector|.
  const double res_lo = beta[m - 1] * std::abs(es.eigenvectors()(m - 1, 0));
  const double res_hi = beta[m - 1] * std::abs(es.eigenvectors()(m - 1, m - 1));
  const double pad = kEstimatePadding * (hi - lo);
  return {lo - pad - res_lo, hi + pad + res_hi};
}

struct TermSet {
  std::vector<Term> static_terms;
  std::vector<Term> sa_terms;
  double constant = 0.0;
};

void add_heisenberg(std::vector<Term>& terms, int i, int j, double c) {
  for (Axis a : kAxes) terms.push_back({i, j, a, c});
}

// Apparatus self-Hamiltonian on spins first..first+n-1.
void add_apparatus(TermSet& set, const HamiltonianSpec& spec, int first, int n) {
  if (spec.topology == Topology::open_chain) {
    for (int b = 0; b + 1 < n; ++b) add_heisenberg(set.static_terms, first + b, first + b + 1, -spec.J);
    if (spec.Delta != 0.0)
      for (int b = 0; b + 1 < n; ++b)
        set.static_terms.push_back({first + b, first + b + 1, Axis::z, -spec.Delta});
    return;
  }
  // -(J/N) S_A . S_A = -(J/N) [sum_i S_i . S_i + 2 sum_{i<j} S_i . S_j]; the
  // self-pair part is the constant -(J/N) * N * 3/4.
  const double pair = -2.0 * spec.J / n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) add_heisenberg(set.static_terms, first + i, first + j, pair);
  if (spec.Delta != 0.0)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        set.static_terms.push_back({first + i, first + j, Axis::z, -spec.Delta});
  set.constant += -spec.J * 0.75;
}

void add_environment(TermSet& set, const HamiltonianSpec& spec, const CouplingRealization& r,
                     int first) {
  const int ne = r.n_environment();
  for (int k = 0; k < ne; ++k)
    for (int l = k + 1; l < ne; ++l)
      for (Axis a : kAxes)
        set.static_terms.push_back({first + k, first + l, a, spec.K * r.environment(a, k, l)});
}

void add_apparatus_environment(TermSet& set, const HamiltonianSpec& spec,
                               const CouplingRealization& r, int first_a, int first_e) {
  for (int i = 0; i < r.n_apparatus(); ++i)
    for (int k = 0; k < r.n_environment(); ++k)
      add_heisenberg(set.static_terms, first_a + i, first_e + k,
                     -spec.I_AE * r.apparatus_environment(i, k));
}

void check_consistent(const HamiltonianSpec& spec, const SpinLayout& layout,
                      const CouplingRealization& r) {
  spec.validate();
  if (r.n_apparatus() != layout.n_apparatus() || r.n_environment() != layout.n_environment())
    throw std::invalid_argument("coupling realization was drawn for a different layout");
}

}  // namespace

CompiledHamiltonian::CompiledHamiltonian(int n_spins, std::vector<Term> static_terms,
                                         std::vector<Term> sa_terms,
                                         std::optional<CouplingWindow> window,
                                         double constant_offset)
    : n_spins_(n_spins),
      static_terms_(std::move(static_terms)),
      sa_terms_(std::move(sa_terms)),
      window_(window),
      constant_offset_(constant_offset) {
  if (window_ && !(window_->t1 < window_->t2))
    throw std::invalid_argument("coupling window needs t1 < t2");
  engine_ = std::make_shared<const detail::PairOperator>(n_spins_, static_terms_, sa_terms_);
  term_bounds_ = term_norm_bounds(static_terms_, sa_terms_);

  // Both switch states must fit inside one interval.
  const auto g_on = engine_->gershgorin(true);
  const auto g_off = engine_->gershgorin(false);
  SpectralBounds g{std::min(g_on.lower, g_off.lower), std::max(g_on.upper, g_off.upper)};
  g = inflate(g);
  certified_bounds_ = {std::max(g.lower, term_bounds_.lower), std::min(g.upper, term_bounds_.upper)};
  propagation_bounds_ = certified_bounds_;
  if (!static_terms_.empty() || !sa_terms_.empty()) {
    auto est = lanczos_estimate(*engine_, true);
    if (!sa_terms_.empty()) {
      const auto off = lanczos_estimate(*engine_, false);
      est = {std::min(est.lower, off.lower), std::max(est.upper, off.upper)};
    }
    propagation_bounds_ = {std::max(est.lower, certified_bounds_.lower),
                           std::min(est.upper, certified_bounds_.upper)};
  }
  if (!(propagation_bounds_.upper - propagation_bounds_.lower > 1e-9)) {
    // (Nearly) scalar operator: keep a nondegenerate interval for the rescaling.
    const double c = propagation_bounds_.center();
    propagation_bounds_ = {c - 1e-3, c + 1e-3};
  }
}

bool CompiledHamiltonian::sa_active(double t) const noexcept {
  if (!window_) return true;
  return t >= window_->t1 && t <= window_->t2;
}

CompiledHamiltonian CompiledHamiltonian::with_window(std::optional<CouplingWindow> window) const {
  CompiledHamiltonian copy = *this;
  if (window && !(window->t1 < window->t2))
    throw std::invalid_argument("coupling window needs t1 < t2");
  copy.window_ = window;
  return copy;
}

CompiledHamiltonian compile(const HamiltonianSpec& spec, const SpinLayout& layout,
                            const CouplingRealization& realization) {
  check_consistent(spec, layout, realization);
  TermSet set;
  const int first_a = layout.apparatus_index(0);
  const int first_e = 1 + layout.n_apparatus();
  for (int i = 0; i < layout.n_apparatus(); ++i)
    set.sa_terms.push_back({SpinLayout::system_index(), first_a + i, Axis::z, -spec.I_SA});
  add_apparatus(set, spec, first_a, layout.n_apparatus());
  add_apparatus_environment(set, spec, realization, first_a, first_e);
  add_environment(set, spec, realization, first_e);
  return CompiledHamiltonian(layout.n_total(), std::move(set.static_terms), std::move(set.sa_terms),
                             spec.window, set.constant);
}

CompiledHamiltonian compile_environment(const HamiltonianSpec& spec, const SpinLayout& layout,
                                        const CouplingRealization& realization) {
  check_consistent(spec, layout, realization);
  if (layout.n_environment() < 1) throw std::invalid_argument("layout has no environment");
  TermSet set;
  add_environment(set, spec, realization, 0);
  return CompiledHamiltonian(layout.n_environment(), std::move(set.static_terms), {});
}

CompiledHamiltonian compile_ready_block(const HamiltonianSpec& spec, const SpinLayout& layout,
                                        const CouplingRealization& realization) {
  check_consistent(spec, layout, realization);
  TermSet set;
  const int na = layout.n_apparatus();
  add_apparatus(set, spec, 0, na);
  add_apparatus_environment(set, spec, realization, 0, na);
  add_environment(set, spec, realization, na);
  return CompiledHamiltonian(na + layout.n_environment(), std::move(set.static_terms), {},
                             std::nullopt, set.constant);
}

SpectralBounds spectral_bounds(const CompiledHamiltonian& h) noexcept { return h.bounds(); }

StateVector apply_switched(const CompiledHamiltonian& h, const StateVector& psi, bool sa_on) {
  if (psi.n_spins() != h.n_spins())
    throw std::invalid_argument("state and Hamiltonian live on different spin counts");
  StateVector out(h.n_spins());
  h.engine().apply(psi.data(), out.data(), 1, sa_on, {});
  return out;
}

StateVector apply(const CompiledHamiltonian& h, const StateVector& psi, double t) {
  return apply_switched(h, psi, h.sa_active(t));
}

double expectation(const CompiledHamiltonian& h, const StateVector& psi, bool sa_on) {
  return inner(psi, apply_switched(h, psi, sa_on)).real();
}

}  // namespace spinmeter
