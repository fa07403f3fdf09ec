#include "spinmeter/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pair_operator.hpp"

namespace spinmeter {

namespace {

constexpr double kRescaleAbove = 1e200;

int recurrence_start(double x, int n_max) {
  const double top = std::max(static_cast<double>(n_max), x);
  int m = static_cast<int>(std::ceil(top + 40.0 + 2.0 * std::sqrt(40.0 * top)));
  return m + (m % 2);
}

void require_finite_step(double value, const char* what) {
  if (!std::isfinite(value) || value < 0.0)
    throw std::invalid_argument(std::string(what) + " must be finite and nonnegative");
}

void require_bounds(const SpectralBounds& b) {
  if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.upper > b.lower))
    throw std::invalid_argument("spectral bounds must be finite with upper > lower");
}

// Index of the last coefficient at or above the relative tail cutoff.
int last_significant(const std::vector<double>& magnitudes) {
  const double peak = *std::max_element(magnitudes.begin(), magnitudes.end());
  int last = 0;
  for (int n = static_cast<int>(magnitudes.size()) - 1; n >= 0; --n)
    if (magnitudes[n] >= kChebyshevTailCutoff * peak) {
      last = n;
      break;
    }
  return last;
}

// Chooses how many Bessel orders to compute so that the tail below the
// cutoff is resolved, growing the window until it is.
template <typename Sequence>
std::vector<double> resolved_magnitudes(double x, Sequence&& sequence) {
  int n_hi = static_cast<int>(std::ceil(x + 15.0 * std::cbrt(x) + 40.0));
  for (;;) {
    auto values = sequence(x, n_hi);
    std::vector<double> mags(values.size());
    for (std::size_t n = 0; n < values.size(); ++n)
      mags[n] = (n == 0 ? 1.0 : 2.0) * std::abs(values[n]);
    const int last = last_significant(mags);
    if (last + kChebyshevGuardTerms + 4 < n_hi) {
      values.resize(static_cast<std::size_t>(last + 1 + kChebyshevGuardTerms));
      return values;
    }
    n_hi = n_hi + n_hi / 2 + 16;
  }
}

void require_plan_covers(const ChebyshevPlan& plan, const CompiledHamiltonian& h) {
  const auto b = h.propagation_bounds();
  const double lo = plan.center - plan.halfwidth;
  const double hi = plan.center + plan.halfwidth;
  const double slack = 1e-12 * std::max(1.0, plan.halfwidth);
  if (lo > b.lower + slack || hi < b.upper - slack)
    throw std::invalid_argument("Chebyshev plan does not cover the Hamiltonian's spectral bounds");
}

}  // namespace

std::vector<double> bessel_j_sequence(double x, int n_max) {
  if (n_max < 0) throw std::invalid_argument("negative Bessel order");
  if (!std::isfinite(x) || x < 0.0) throw std::invalid_argument("Bessel argument must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const int m = recurrence_start(x, n_max);
  double above = 0.0;     // J_{n+1}
  double current = 1e-300;  // J_n, n = m
  double norm_sum = 0.0;  // J_0 + 2 sum J_2k, accumulated for n >= 1 below
  for (int n = m; n >= 1; --n) {
    if (n <= n_max) out[n] = current;
    if (n % 2 == 0) norm_sum += 2.0 * current;
    const double below = (2.0 * n / x) * current - above;
    above = current;
    current = below;
    if (std::abs(current) > kRescaleAbove) {
      const double f = 1.0 / kRescaleAbove;
      current *= f;
      above *= f;
      norm_sum *= f;
      for (int k = n - 1; k <= std::min(m, n_max); ++k)
        if (k >= 0) out[k] *= f;
    }
  }
  out[0] = current;
  norm_sum += current;
  for (auto& v : out) v /= norm_sum;
  return out;
}

std::vector<double> scaled_bessel_i_sequence(double x, int n_max) {
  if (n_max < 0) throw std::invalid_argument("negative Bessel order");
  if (!std::isfinite(x) || x < 0.0) throw std::invalid_argument("Bessel argument must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const int m = recurrence_start(x, n_max);
  double above = 0.0;
  double current = 1e-300;
  double norm_sum = 0.0;  // I_0 + 2 sum_{n>=1} I_n
  for (int n = m; n >= 1; --n) {
    if (n <= n_max) out[n] = current;
    norm_sum += 2.0 * current;
    const double below = (2.0 * n / x) * current + above;
    above = current;
    current = below;
    if (current > kRescaleAbove) {
      const double f = 1.0 / kRescaleAbove;
      current *= f;
      above *= f;
      norm_sum *= f;
      for (int k = std::max(n - 1, 0); k <= std::min(m, n_max); ++k) out[k] *= f;
    }
  }
  out[0] = current;
  norm_sum += current;
  for (auto& v : out) v /= norm_sum;
  return out;
}

ChebyshevPlan plan_real(const SpectralBounds& bounds, double dt) {
  require_bounds(bounds);
  require_finite_step(dt, "time step");
  ChebyshevPlan plan;
  plan.mode = ChebyshevPlan::Mode::real_time;
  plan.center = bounds.center();
  plan.halfwidth = bounds.halfwidth();
  plan.step = dt;
  const Complex phase = std::exp(Complex{0.0, -plan.center * dt});
  const double x = plan.halfwidth * dt;
  if (x == 0.0) {
    plan.coefficients = {phase};
    return plan;
  }
  const auto j = resolved_magnitudes(x, bessel_j_sequence);
  plan.coefficients.resize(j.size());
  Complex minus_i_power{1.0, 0.0};
  for (std::size_t n = 0; n < j.size(); ++n) {
    plan.coefficients[n] = phase * minus_i_power * ((n == 0 ? 1.0 : 2.0) * j[n]);
    minus_i_power *= Complex{0.0, -1.0};
  }
  return plan;
}

ChebyshevPlan plan_imaginary(const SpectralBounds& bounds, double tau) {
  require_bounds(bounds);
  require_finite_step(tau, "imaginary time step");
  ChebyshevPlan plan;
  plan.mode = ChebyshevPlan::Mode::imaginary_time;
  plan.center = bounds.center();
  plan.halfwidth = bounds.halfwidth();
  plan.step = tau;
  const double x = plan.halfwidth * tau;
  if (x == 0.0) {
    plan.coefficients = {Complex{1.0, 0.0}};
    return plan;
  }
  const auto i = resolved_magnitudes(x, scaled_bessel_i_sequence);
  plan.coefficients.resize(i.size());
  for (std::size_t n = 0; n < i.size(); ++n) {
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    plan.coefficients[n] = Complex{sign * (n == 0 ? 1.0 : 2.0) * i[n], 0.0};
  }
  return plan;
}

void apply_plan(const ChebyshevPlan& plan, const CompiledHamiltonian& h, bool sa_on,
                StateBlock& psi, int threads) {
  if (psi.n_spins() != h.n_spins())
    throw std::invalid_argument("state and Hamiltonian live on different spin counts");
  if (plan.coefficients.empty()) throw std::invalid_argument("empty Chebyshev plan");
  require_plan_covers(plan, h);

  const std::size_t len = psi.rows() * static_cast<std::size_t>(psi.width());
  const auto& a = plan.coefficients;
  if (a.size() == 1) {
    for (std::size_t q = 0; q < len; ++q) psi.data()[q] *= a[0];
    return;
  }

  const auto& op = h.engine();
  const int width = psi.width();
  StateBlock current(psi.n_spins(), width);
  StateBlock acc(psi.n_spins(), width);
  for (std::size_t q = 0; q < len; ++q) acc.data()[q] = a[0] * psi.data()[q];

  const double inv_w = 1.0 / plan.halfwidth;
  // T_1 psi
  op.apply(psi.data(), current.data(), width, sa_on,
           {.scale = inv_w, .shift = plan.center, .acc = acc.data(), .acc_coef = a[1]}, threads);
  // psi's storage now carries T_{n-1} psi.
  StateBlock& previous = psi;
  for (std::size_t n = 2; n < a.size(); ++n) {
    op.apply(current.data(), previous.data(), width, sa_on,
             {.scale = 2.0 * inv_w,
              .shift = plan.center,
              .prev = previous.data(),
              .prev_weight = -1.0,
              .acc = acc.data(),
              .acc_coef = a[n]},
             threads);
    previous.swap(current);
  }
  psi.swap(acc);
}

void evolve(StateBlock& psi, const CompiledHamiltonian& h, double dt, bool sa_on, int threads) {
  require_finite_step(dt, "time step");
  const auto bounds = h.propagation_bounds();
  const double x = bounds.halfwidth() * dt;
  const int pieces = std::max(1, static_cast<int>(std::ceil(x / kMaxRescaledStep)));
  const auto plan = plan_real(bounds, dt / pieces);
  const auto before = psi.column_norms();
  for (int p = 0; p < pieces; ++p) apply_plan(plan, h, sa_on, psi, threads);
  const auto after = psi.column_norms();
  for (std::size_t r = 0; r < before.size(); ++r)
    if (!(std::abs(after[r] - before[r]) <= kNormDriftLimit))
      throw std::runtime_error("norm drift " + std::to_string(after[r] - before[r]) +
                               " during real-time propagation (spectral bounds too tight?)");
}

StateVector evolve(const StateVector& psi, const CompiledHamiltonian& h, double dt, bool sa_on) {
  StateBlock block = StateBlock::from_columns(std::span<const StateVector>(&psi, 1));
  evolve(block, h, dt, sa_on);
  return block.column(0);
}

StateVector evolve(const StateVector& psi, const CompiledHamiltonian& h, double dt) {
  return evolve(psi, h, dt, h.sa_active(0.0));
}

void imaginary_evolve(StateBlock& psi, const CompiledHamiltonian& h, double beta, bool sa_on,
                      int threads) {
  require_finite_step(beta, "inverse temperature");
  if (beta == 0.0) return;
  const auto bounds = h.propagation_bounds();
  const double tau = 0.5 * beta;
  const int pieces =
      std::max(1, static_cast<int>(std::ceil(bounds.halfwidth() * tau / kMaxRescaledImaginaryStep)));
  const auto plan = plan_imaginary(bounds, tau / pieces);
  for (int p = 0; p < pieces; ++p) {
    apply_plan(plan, h, sa_on, psi, threads);
    psi.normalize_columns();
  }
}

StateVector imaginary_evolve(const StateVector& psi, const CompiledHamiltonian& h, double beta,
                             bool sa_on) {
  StateBlock block = StateBlock::from_columns(std::span<const StateVector>(&psi, 1));
  block.normalize_columns();
  imaginary_evolve(block, h, beta, sa_on);
  return block.column(0);
}

Propagator::Propagator(CompiledHamiltonian h, int threads)
    : h_(std::move(h)), bounds_(h_.propagation_bounds()), threads_(std::max(threads, 1)) {}

bool Propagator::sa_active_after(double t) const noexcept {
  const auto& w = h_.window();
  if (!w) return true;
  return t >= w->t1 && t < w->t2;
}

void Propagator::advance(StateBlock& psi, double t_from, double t_to) {
  if (!std::isfinite(t_from) || !std::isfinite(t_to) || t_to < t_from)
    throw std::invalid_argument("propagation interval must be finite and forward in time");
  std::vector<double> cuts{t_from};
  if (const auto& w = h_.window()) {
    for (double edge : {w->t1, w->t2})
      if (edge > t_from && edge < t_to) cuts.push_back(edge);
  }
  cuts.push_back(t_to);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double dt = cuts[s + 1] - cuts[s];
    if (dt > 0.0) step(psi, dt, sa_active_after(cuts[s]));
  }
}

void Propagator::step(StateBlock& psi, double dt, bool sa_on) {
  const int pieces =
      std::max(1, static_cast<int>(std::ceil(bounds_.halfwidth() * dt / kMaxRescaledStep)));
  const double piece = dt / pieces;
  auto it = plans_.find(piece);
  if (it == plans_.end()) {
    if (plans_.size() > 64) plans_.clear();
    it = plans_.emplace(piece, plan_real(bounds_, piece)).first;
  }
  const auto before = psi.column_norms();
  for (int p = 0; p < pieces; ++p) {
    apply_plan(it->second, h_, sa_on, psi, threads_);
    applications_ += it->second.order() - 1;
  }
  const auto after = psi.column_norms();
  for (std::size_t r = 0; r < before.size(); ++r)
    if (!(std::abs(after[r] - before[r]) <= kNormDriftLimit))
      throw std::runtime_error("norm drift " + std::to_string(after[r] - before[r]) +
                               " during real-time propagation (spectral bounds too tight?)");
}

}  // namespace spinmeter
