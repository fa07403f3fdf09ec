#include "doctest.h"

#include <cmath>
#include <vector>

#include "dense_oracle.hpp"
#include "pair_operator.hpp"
#include "spinmeter/hamiltonian.hpp"
#include "spinmeter/rng.hpp"

using namespace spinmeter;

namespace {

HamiltonianSpec random_spec(unsigned seed) {
  RandomStream r(seed);
  HamiltonianSpec s;
  s.J = r.uniform(0.5, 1.5);
  s.I_SA = r.uniform(-0.5, 0.5);
  s.I_AE = r.uniform(-0.3, 0.3);
  s.K = r.uniform(-0.5, 0.5);
  s.Delta = r.uniform(-0.2, 0.2);
  return s;
}

double max_abs(const Eigen::VectorXcd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("coupling draws") {
  SpinLayout layout(4, 12);
  const auto r1 = draw_couplings(layout, 99);
  CHECK(r1 == draw_couplings(layout, 99));
  CHECK_FALSE(r1 == draw_couplings(layout, 100));
  CHECK(r1.environment(Axis::y, 3, 7) == r1.environment(Axis::y, 7, 3));
  CHECK(CouplingRealization::pair_index(12, 0, 1) == 0);
  CHECK(CouplingRealization::pair_index(12, 1, 2) == 11);
  CHECK(CouplingRealization::pair_index(12, 10, 11) == 65);

  double sum = 0.0;
  long n = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto r = draw_couplings(layout, seed);
    for (Axis a : kAxes)
      for (double v : r.environment_values(a)) {
        CHECK_UNARY(v >= -1.0);
        CHECK_UNARY(v <= 1.0);
      }
    for (double v : r.apparatus_environment_values()) {
      CHECK_UNARY(v >= 0.0);
      CHECK_UNARY(v <= 1.0);
      sum += v;
      ++n;
    }
  }
  // uniform on [0, 1]: sigma = 1/sqrt(12)
  CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("term lists") {
  SpinLayout layout(4, 0);
  const auto r = draw_couplings(layout, 1);
  HamiltonianSpec spec;
  auto h = compile(spec, layout, r);
  CHECK(h.static_terms().size() == 9);
  for (const auto& t : h.static_terms()) CHECK(t.coefficient == -spec.J);
  REQUIRE(h.sa_terms().size() == 4);
  for (const auto& t : h.sa_terms()) {
    CHECK(t.i == 0);
    CHECK(t.axis == Axis::z);
    CHECK(t.coefficient == -spec.I_SA);
  }
  spec.Delta = 0.1;
  auto ha = compile(spec, layout, r);
  CHECK(ha.static_terms().size() == 12);
  int extra = 0;
  for (const auto& t : ha.static_terms())
    if (t.coefficient == -0.1) {
      CHECK(t.axis == Axis::z);
      ++extra;
    }
  CHECK(extra == 3);

  spec.Delta = 0.0;
  spec.topology = Topology::fully_connected;
  auto hf = compile(spec, layout, r);
  CHECK(hf.static_terms().size() == 18);
  for (const auto& t : hf.static_terms()) CHECK(t.coefficient == doctest::Approx(-0.5));
  CHECK(hf.constant_offset() == doctest::Approx(-0.75));

  SpinLayout full(4, 3);
  auto hfull = compile(HamiltonianSpec{}, full, draw_couplings(full, 2));
  // chain 9, AE 4*3*3 = 36, EE 3 pairs * 3 = 9
  CHECK(hfull.static_terms().size() == 54);
  CHECK_THROWS_AS(compile(HamiltonianSpec{}, full, r), std::invalid_argument);
}

TEST_CASE("spec validation") {
  HamiltonianSpec s;
  s.J = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.window = CouplingWindow{5.0, 5.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.K = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(topology_from_string(to_string(Topology::fully_connected)) == Topology::fully_connected);
  CHECK_THROWS_AS(topology_from_string("ring"), std::invalid_argument);
}

TEST_CASE("aligned state is an eigenstate") {
  SpinLayout layout(4, 0);
  auto h = compile(HamiltonianSpec{}, layout, draw_couplings(layout, 1));
  const auto psi = StateVector::basis(5, 0b11111);
  const auto hpsi = apply(h, psi, 0.0);
  for (std::size_t k = 0; k < hpsi.size(); ++k)
    CHECK(std::abs(hpsi[k] - (k == 31 ? -1.0 : 0.0) * psi[31]) < 1e-15);
}

TEST_CASE("coupling window switching") {
  SpinLayout layout(4, 0);
  HamiltonianSpec spec;
  spec.window = CouplingWindow{1e4, 2e4};
  auto h = compile(spec, layout, draw_couplings(layout, 1));
  CHECK_FALSE(h.sa_active(0.0));
  CHECK(h.sa_active(1.5e4));
  CHECK(h.sa_active(1e4));
  CHECK(h.sa_active(2e4));
  CHECK_FALSE(h.sa_active(2.5e4));
  const auto psi = StateVector::basis(5, 0b11111);
  CHECK(std::abs(apply(h, psi, 0.0)[31] - Complex(-0.75)) < 1e-15);
  CHECK(std::abs(apply(h, psi, 1.5e4)[31] - Complex(-1.0)) < 1e-15);
  CHECK_FALSE(h.with_window(std::nullopt).window().has_value());
}

TEST_CASE("apply matches the dense oracle") {
  for (unsigned seed = 1; seed <= 3; ++seed) {
    SpinLayout layout(4, 5);
    const auto spec = random_spec(seed);
    auto h = compile(spec, layout, draw_couplings(layout, seed));
    const auto psi = oracle::random_state(10, seed);
    for (bool on : {false, true}) {
      const Eigen::MatrixXcd m = oracle::dense_hamiltonian(h, on);
      const Eigen::VectorXcd ref = m * oracle::to_eigen(psi);
      CHECK(max_abs(oracle::to_eigen(apply_switched(h, psi, on)) - ref) < 1e-12);
      CHECK(expectation(h, psi, on) == doctest::Approx((oracle::to_eigen(psi).adjoint() * ref)(0).real()));
    }
  }
}

TEST_CASE("blocked kernel on wide blocks") {
  // Large enough that rows span several cache blocks for every width.
  const int n = 15;
  const auto terms = oracle::random_terms(n, 5, 0.35);
  std::vector<Term> sa{{0, 3, Axis::z, -0.3}, {0, 9, Axis::z, 0.2}};
  const detail::PairOperator op(n, terms, sa);
  std::vector<Term> all = terms;
  all.insert(all.end(), sa.begin(), sa.end());
  const oracle::Sparse m = oracle::sparse_terms(n, all);

  for (int width : {1, 2, 3, 4, 8}) {
    std::vector<StateVector> cols;
    for (int r = 0; r < width; ++r) cols.push_back(oracle::random_state(n, 50 + r));
    auto in = StateBlock::from_columns(cols);
    auto prev = StateBlock::from_columns(cols);
    StateBlock out(n, width), acc(n, width);
    std::vector<StateVector> prev_cols;
    for (int r = 0; r < width; ++r) prev_cols.push_back(oracle::random_state(n, 80 + r));
    prev = StateBlock::from_columns(prev_cols);

    op.apply(in.data(), out.data(), width, true, {});
    for (int r = 0; r < width; ++r) {
      const Eigen::VectorXcd ref = m * oracle::to_eigen(cols[r]);
      CHECK(max_abs(oracle::to_eigen(out.column(r)) - ref) < 1e-12);
    }

    // fused step: out = 2 (H - 0.5) in - prev, acc += (0.25 - 0.5i) out
    detail::ApplyStep step;
    step.scale = 2.0;
    step.shift = 0.5;
    step.prev = prev.data();
    step.prev_weight = -1.0;
    step.acc = acc.data();
    step.acc_coef = Complex(0.25, -0.5);
    StateBlock fused(n, width);
    op.apply(in.data(), fused.data(), width, true, step);
    for (int r = 0; r < width; ++r) {
      const Eigen::VectorXcd v = oracle::to_eigen(cols[r]);
      const Eigen::VectorXcd ref = 2.0 * (m * v - 0.5 * v) - oracle::to_eigen(prev_cols[r]);
      CHECK(max_abs(oracle::to_eigen(fused.column(r)) - ref) < 1e-12);
      CHECK(max_abs(oracle::to_eigen(acc.column(r)) - Complex(0.25, -0.5) * ref) < 1e-12);
    }

    // switched off
    op.apply(in.data(), out.data(), width, false, {});
    const oracle::Sparse m_off = oracle::sparse_terms(n, terms);
    CHECK(max_abs(oracle::to_eigen(out.column(0)) - m_off * oracle::to_eigen(cols[0])) < 1e-12);
  }
}

TEST_CASE("thread count does not change results") {
  const int n = 16;
  const auto terms = oracle::random_terms(n, 9, 0.3);
  const detail::PairOperator op(n, terms, {});
  std::vector<StateVector> cols{oracle::random_state(n, 1), oracle::random_state(n, 2), oracle::random_state(n, 3)};
  auto in = StateBlock::from_columns(cols);
  StateBlock a(n, 3), b(n, 3);
  op.apply(in.data(), a.data(), 3, true, {}, 1);
  op.apply(in.data(), b.data(), 3, true, {}, 4);
  bool identical = true;
  for (std::size_t k = 0; k < a.rows() * 3; ++k) identical = identical && a.data()[k] == b.data()[k];
  CHECK(identical);
}

TEST_CASE("hermiticity and conserved system spin") {
  SpinLayout layout(4, 4);
  auto h = compile(random_spec(7), layout, draw_couplings(layout, 7));
  const auto phi = oracle::random_state(9, 1), psi = oracle::random_state(9, 2);
  for (bool on : {false, true}) {
    const Complex l = inner(phi, apply_switched(h, psi, on));
    const Complex r = inner(apply_switched(h, phi, on), psi);
    CHECK(std::abs(l - r) < 1e-12);
  }
  const Eigen::MatrixXcd m = oracle::dense_hamiltonian(h, true);
  const Eigen::MatrixXcd sz0(oracle::spin_operator(9, 0, Axis::z));
  CHECK((m * sz0 - sz0 * m).cwiseAbs().maxCoeff() < 1e-14);

  // total S^z of apparatus + environment is not conserved for random r^axis
  Eigen::MatrixXcd sz_ae = Eigen::MatrixXcd::Zero(512, 512);
  for (int i = 1; i < 9; ++i) sz_ae += Eigen::MatrixXcd(oracle::spin_operator(9, i, Axis::z));
  CHECK((m * sz_ae - sz_ae * m).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("fully polarized apparatus energies") {
  SpinLayout layout(4, 0);
  HamiltonianSpec spec;
  spec.I_SA = 0.0;
  const auto r = draw_couplings(layout, 1);
  const auto up = StateVector::basis(5, 0b11110);
  auto chain = compile(spec, layout, r);
  CHECK(expectation(chain, up, true) + chain.constant_offset() == doctest::Approx(-0.75));
  spec.topology = Topology::fully_connected;
  auto full = compile(spec, layout, r);
  // -(J/N) S(S+1) with S = N/2
  CHECK(expectation(full, up, true) + full.constant_offset() == doctest::Approx(-1.5));
}

TEST_CASE("spectral bounds") {
  SpinLayout layout(4, 0);
  HamiltonianSpec spec;
  spec.I_SA = 0.0;
  auto ha = compile(spec, layout, draw_couplings(layout, 1));
  CHECK(ha.bounds().upper == doctest::Approx(9.0 / 4.0 * 1.05));
  CHECK(ha.bounds().lower == doctest::Approx(-9.0 / 4.0 * 1.05));
  CHECK(spectral_bounds(ha).contains(-0.75));

  std::vector<Term> terms(ha.static_terms().begin(), ha.static_terms().end());
  const double before = CompiledHamiltonian(5, terms, {}).bounds().upper;
  terms.push_back({0, 2, Axis::x, -0.8});
  CHECK(CompiledHamiltonian(5, terms, {}).bounds().upper - before == doctest::Approx(0.8 / 4.0 * 1.05));

  for (unsigned seed = 1; seed <= 3; ++seed) {
    SpinLayout l(4, 5);
    auto h = compile(random_spec(seed), l, draw_couplings(l, seed));
    const auto b = h.bounds(), c = h.certified_bounds(), p = h.propagation_bounds();
    CHECK(c.lower >= b.lower);
    CHECK(c.upper <= b.upper);
    CHECK(p.lower >= c.lower);
    CHECK(p.upper <= c.upper);
    for (bool on : {false, true}) {
      const auto s = oracle::eigh(oracle::checked_real(oracle::dense_hamiltonian(h, on)));
      CHECK(p.contains(s.values(0)));
      CHECK(p.contains(s.values(s.values.size() - 1)));
    }
    double lo = 1e300, hi = -1e300;
    for (unsigned k = 0; k < 200; ++k) {
      const auto v = oracle::random_state(10, 1000 + k);
      for (bool on : {false, true}) {
        const double e = expectation(h, v, on);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
      }
    }
    CHECK(b.contains(lo));
    CHECK(b.contains(hi));
    CHECK(p.contains(lo));
    CHECK(p.contains(hi));
  }
}

TEST_CASE("sub-Hamiltonians") {
  SpinLayout layout(4, 3);
  const auto r = draw_couplings(layout, 3);
  const HamiltonianSpec spec;
  auto he = compile_environment(spec, layout, r);
  CHECK(he.n_spins() == 3);
  CHECK(he.static_terms().size() == 9);
  CHECK(he.sa_terms().empty());
  auto hb = compile_ready_block(spec, layout, r);
  CHECK(hb.n_spins() == 7);
  CHECK(hb.static_terms().size() == 54);
  CHECK(hb.sa_terms().empty());
  // the block equals the full Hamiltonian without S and H_SA, shifted down one spin
  auto full = compile(spec, layout, r);
  for (std::size_t k = 0; k < hb.static_terms().size(); ++k) {
    CHECK(hb.static_terms()[k].i + 1 == full.static_terms()[k].i);
    CHECK(hb.static_terms()[k].coefficient == full.static_terms()[k].coefficient);
  }
}
