#include "doctest.h"

#include <cmath>
#include <random>
#include <unordered_set>

#include "spinmeter/rng.hpp"

using namespace spinmeter;

TEST_CASE("splitmix64 reference values") {
  // First outputs of the SplitMix64 generator started at state 0; the
  // generator adds the golden gamma before mixing, as splitmix64() does.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(0x9e3779b97f4a7c15ULL) == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("stream follows mt19937_64") {
  RandomStream s(42);
  std::mt19937_64 ref(42);
  for (int k = 0; k < 100; ++k) CHECK(s.next() == ref());
  RandomStream u(7);
  std::mt19937_64 r7(7);
  CHECK(u.uniform() == static_cast<double>(r7() >> 11) * 0x1.0p-53);
}

TEST_CASE("uniform ranges") {
  RandomStream s(3);
  for (int k = 0; k < 100000; ++k) {
    const double u = s.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double v = s.uniform_open_low();
    CHECK_UNARY(v > 0.0);
    CHECK_UNARY(v <= 1.0);
    const double w = s.uniform(-1.0, 1.0);
    CHECK_UNARY(w >= -1.0);
    CHECK_UNARY(w < 1.0);
  }
}

TEST_CASE("gaussian moments") {
  RandomStream s(11);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0, cross = 0.0;
  for (int k = 0; k < n; ++k) {
    auto [a, b] = s.gaussian_pair();
    m1 += a + b;
    m2 += a * a + b * b;
    cross += a * b;
  }
  const double count = 2.0 * n;
  // 5 sigma: var of the mean 1/count, var of the sample second moment 2/count
  CHECK(std::abs(m1 / count) < 5.0 / std::sqrt(count));
  CHECK(std::abs(m2 / count - 1.0) < 5.0 * std::sqrt(2.0 / count));
  CHECK(std::abs(cross / n) < 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("derived seeds do not collide") {
  std::unordered_set<std::uint64_t> seen;
  const SeedPurpose purposes[] = {SeedPurpose::couplings, SeedPurpose::ready_apparatus,
                                  SeedPurpose::ready_environment, SeedPurpose::ready_joint,
                                  SeedPurpose::synthetic};
  for (std::uint64_t k = 0; k < 20000; ++k)
    for (auto p : purposes) seen.insert(derive_seed(1, k, p));
  CHECK(seen.size() == 100000);
  CHECK(derive_seed(1, 0, SeedPurpose::couplings) != derive_seed(2, 0, SeedPurpose::couplings));
  static_assert(derive_seed(5, 3, SeedPurpose::synthetic) ==
                splitmix64(splitmix64(splitmix64(5) ^ 3) ^ 5));
}
