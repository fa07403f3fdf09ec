#include "pair_operator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace spinmeter::detail {

namespace {

// Rows are processed in blocks of about kBlockBytes (kept in L2 together with
// one source block) split into sub-tiles of about kSubTileBytes (kept in L1).
constexpr std::size_t kBlockBytes = 256 * 1024;
constexpr std::size_t kSubTileBytes = 8 * 1024;

int bits_for(std::size_t bytes, int n_spins, std::size_t row) {
  std::size_t rows = std::max<std::size_t>(1, bytes / (row * sizeof(double)));
  int bits = 0;
  while ((std::size_t{2} << bits) <= rows) ++bits;
  return std::min(bits, n_spins);
}

inline void axpy(double* __restrict y, const double* __restrict x, double a, std::size_t n) {
  for (std::size_t q = 0; q < n; ++q) y[q] += a * x[q];
}

// Short flips: 32-double chunks with the in-chunk part of the flip folded
// into a fixed permutation.  cv[sel] holds per-double coefficients, sel being
// bit `sel_bit` of the row index of the chunk start (0 when sel_bit < 0).
constexpr std::size_t kChunk = 32;

template <int M>
void flip_chunks(double* __restrict y, const double* __restrict x, std::size_t len,
                 std::size_t x_xor, const double (&cv)[2][kChunk], std::size_t row0, int row_log,
                 int sel_bit) {
  for (std::size_t c = 0; c < len; c += kChunk) {
    const std::size_t sel = sel_bit < 0 ? 0 : (((row0 + (c >> row_log)) >> sel_bit) & 1U);
    const double* __restrict w = cv[sel];
    const double* __restrict xc = x + (c ^ x_xor);
    double* __restrict yc = y + c;
#pragma GCC unroll 32
    for (std::size_t q = 0; q < kChunk; ++q) yc[q] += w[q] * xc[q ^ M];
  }
}

using FlipChunksFn = void (*)(double*, const double*, std::size_t, std::size_t,
                              const double (&)[2][kChunk], std::size_t, int, int);

template <std::size_t... M>
constexpr std::array<FlipChunksFn, kChunk> make_flip_table(std::index_sequence<M...>) {
  return {&flip_chunks<static_cast<int>(M)>...};
}

constexpr auto kFlipChunks = make_flip_table(std::make_index_sequence<kChunk>{});

}  // namespace

PairOperator::PairOperator(int n_spins, std::span<const Term> static_terms,
                           std::span<const Term> sa_terms)
    : n_spins_(n_spins) {
  if (n_spins < 1 || n_spins > kMaxSpins)
    throw std::invalid_argument("operator spin count out of range");
  static_part_ = build_part(static_terms);
  sa_part_ = build_part(sa_terms);
}

PairOperator::Part PairOperator::build_part(std::span<const Term> terms) const {
  std::map<std::pair<int, int>, std::array<double, 3>> by_pair;
  for (const auto& t : terms) {
    if (t.i < 0 || t.j < 0 || t.i >= n_spins_ || t.j >= n_spins_)
      throw std::out_of_range("term spin index outside 0.." + std::to_string(n_spins_ - 1));
    if (t.i == t.j) throw std::invalid_argument("term couples a spin to itself");
    if (!std::isfinite(t.coefficient)) throw std::invalid_argument("non-finite term coefficient");
    auto key = std::minmax(t.i, t.j);
    by_pair[{key.first, key.second}][static_cast<int>(t.axis)] += t.coefficient;
  }

  Part part;
  const std::size_t dim = rows();
  for (const auto& [key, c] : by_pair) {
    const auto [lo, hi] = key;
    const double cx = c[0], cy = c[1], cz = c[2];
    if (cz != 0.0) {
      if (part.diagonal.empty()) part.diagonal.assign(dim, 0.0);
      const double q = 0.25 * cz;
      for (std::size_t k = 0; k < dim; ++k) {
        const bool parallel = ((k >> lo) & 1U) == ((k >> hi) & 1U);
        part.diagonal[k] += parallel ? q : -q;
      }
    }
    if (cx != 0.0 || cy != 0.0)
      part.pairs.push_back({lo, hi, 0.25 * (cx - cy), 0.25 * (cx + cy)});
  }
  return part;
}

std::vector<PairOperator::Group> PairOperator::group_pairs(int block_bits, bool sa_on) const {
  std::map<std::uint64_t, std::vector<FlipPair>> by_mask;
  auto add = [&](const FlipPair& p) {
    std::uint64_t mask = 0;
    if (p.high_bit >= block_bits) mask |= std::uint64_t{1} << (p.high_bit - block_bits);
    if (p.low_bit >= block_bits) mask |= std::uint64_t{1} << (p.low_bit - block_bits);
    by_mask[mask].push_back(p);
  };
  for (const auto& p : static_part_.pairs) add(p);
  if (sa_on)
    for (const auto& p : sa_part_.pairs) add(p);

  std::vector<Group> groups;
  groups.reserve(by_mask.size());
  for (auto& [mask, pairs] : by_mask) groups.push_back({mask, std::move(pairs)});
  return groups;
}

void PairOperator::apply(const Complex* in, Complex* out, int width, bool sa_on,
                         const ApplyStep& step, int threads) const {
  if (width < 1) throw std::invalid_argument("apply needs at least one column");
  if (in == out) throw std::invalid_argument("apply cannot run in place");
  Layout lay;
  lay.row = 2 * static_cast<std::size_t>(width);
  lay.block_bits = bits_for(kBlockBytes, n_spins_, lay.row);
  lay.sub_bits = std::min(lay.block_bits, bits_for(kSubTileBytes, n_spins_, lay.row));
  const std::size_t n_blocks = rows() >> lay.block_bits;
  const auto groups = group_pairs(lay.block_bits, sa_on);

  const auto* src = reinterpret_cast<const double*>(in);
  auto* dst = reinterpret_cast<double*>(out);

  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n_blocks);
  if (workers == 1) {
    apply_blocks(src, dst, lay, groups, sa_on, step, 0, n_blocks);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n_blocks + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = std::min(n_blocks, w * chunk);
    const std::size_t e = std::min(n_blocks, b + chunk);
    if (b < e)
      pool.emplace_back([&, b, e] { apply_blocks(src, dst, lay, groups, sa_on, step, b, e); });
  }
  apply_blocks(src, dst, lay, groups, sa_on, step, 0, std::min(n_blocks, chunk));
}

void PairOperator::apply_blocks(const double* in, double* out, const Layout& lay,
                                const std::vector<Group>& groups, bool sa_on,
                                const ApplyStep& step, std::size_t block_begin,
                                std::size_t block_end) const {
  const std::size_t row = lay.row;
  const int bb = lay.block_bits;
  const int tb = lay.sub_bits;
  const std::size_t block_rows = std::size_t{1} << bb;
  const std::size_t block_len = block_rows * row;
  const std::size_t sub_rows = std::size_t{1} << tb;
  const std::size_t sub_len = sub_rows * row;
  std::vector<double> scratch(block_len);
  // Rows per chunk (0 when rows do not tile a chunk).
  std::size_t chunk_rows = 0;
  int chunk_bits = 0, row_log = 0;
  if (kChunk % row == 0 && sub_len % kChunk == 0) {
    chunk_rows = kChunk / row;
    while ((std::size_t{1} << chunk_bits) < chunk_rows) ++chunk_bits;
    while ((std::size_t{1} << row_log) < row) ++row_log;
  }

  const double* diag_static =
      static_part_.diagonal.empty() ? nullptr : static_part_.diagonal.data();
  const double* diag_sa =
      (sa_on && !sa_part_.diagonal.empty()) ? sa_part_.diagonal.data() : nullptr;
  const auto* prev = reinterpret_cast<const double*>(step.prev);
  auto* acc = reinterpret_cast<double*>(step.acc);
  const double acc_re = step.acc_coef.real();
  const double acc_im = step.acc_coef.imag();

  for (std::size_t block = block_begin; block < block_end; ++block) {
    const std::size_t base = block << bb;
    const double* own = in + base * row;

    for (std::size_t s = 0; s < block_rows; ++s) {
      double d = -step.shift;
      if (diag_static) d += diag_static[base + s];
      if (diag_sa) d += diag_sa[base + s];
      const double* x = own + s * row;
      double* y = scratch.data() + s * row;
      for (std::size_t q = 0; q < row; ++q) y[q] = d * x[q];
    }

    for (const auto& group : groups) {
      const double* src = in + ((block ^ group.high_mask) << bb) * row;
      for (std::size_t t0 = 0; t0 < block_rows; t0 += sub_rows) {
        double* y = scratch.data() + t0 * row;
        const std::size_t index0 = base + t0;
        for (const auto& p : group.pairs) {
          const std::size_t local_flip = ((std::size_t{1} << p.low_bit) | (std::size_t{1} << p.high_bit)) &
                                         (block_rows - 1);
          if (p.low_bit >= tb) {
            const bool bl = (index0 >> p.low_bit) & 1U;
            const bool bh = (index0 >> p.high_bit) & 1U;
            axpy(y, src + (t0 ^ local_flip) * row, bl == bh ? p.parallel : p.antiparallel, sub_len);
            continue;
          }
          const std::size_t run = std::size_t{1} << p.low_bit;
          const std::size_t run_len = run * row;
          const double* x = src + (t0 ^ (local_flip & ~(sub_rows - 1))) * row;
          const std::size_t inner_flip = local_flip & (sub_rows - 1);
          if (chunk_rows > 0 && run_len < kChunk) {
            // Both flipped bits decide the coefficient; bits inside the chunk
            // vary per double, a higher bit selects between two patterns.
            const bool high_inside = p.high_bit < chunk_bits;
            const std::size_t chunk_flip = inner_flip & (chunk_rows - 1);
            double cv[2][kChunk];
            for (int sel = 0; sel < 2; ++sel)
              for (std::size_t q = 0; q < kChunk; ++q) {
                const std::size_t r = q / row;
                const bool bl = (r >> p.low_bit) & 1U;
                const bool bh = high_inside ? ((r >> p.high_bit) & 1U) : sel == 1;
                cv[sel][q] = bl == bh ? p.parallel : p.antiparallel;
              }
            kFlipChunks[chunk_flip * row](y, x, sub_len, (inner_flip & ~(chunk_rows - 1)) * row, cv,
                                          index0, row_log, high_inside ? -1 : p.high_bit);
            continue;
          }
          for (std::size_t s0 = 0; s0 < sub_rows; s0 += run) {
            const std::size_t k = index0 + s0;
            const bool bl = (k >> p.low_bit) & 1U;
            const bool bh = (k >> p.high_bit) & 1U;
            axpy(y + s0 * row, x + (s0 ^ inner_flip) * row, bl == bh ? p.parallel : p.antiparallel,
                 run_len);
          }
        }
      }
    }

    double* o = out + base * row;
    const double* pv = prev ? prev + base * row : nullptr;
    const double scale = step.scale;
    if (pv) {
      const double pw = step.prev_weight;
      for (std::size_t q = 0; q < block_len; ++q) o[q] = scale * scratch[q] + pw * pv[q];
    } else {
      for (std::size_t q = 0; q < block_len; ++q) o[q] = scale * scratch[q];
    }
    if (acc) {
      double* a = acc + base * row;
      for (std::size_t q = 0; q < block_len; q += 2) {
        const double re = o[q], im = o[q + 1];
        a[q] += acc_re * re - acc_im * im;
        a[q + 1] += acc_re * im + acc_im * re;
      }
    }
  }
}

SpectralBounds PairOperator::gershgorin(bool sa_on) const {
  std::vector<FlipPair> pairs = static_part_.pairs;
  if (sa_on) pairs.insert(pairs.end(), sa_part_.pairs.begin(), sa_part_.pairs.end());
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t k = 0; k < rows(); ++k) {
    double d = 0.0;
    if (!static_part_.diagonal.empty()) d += static_part_.diagonal[k];
    if (sa_on && !sa_part_.diagonal.empty()) d += sa_part_.diagonal[k];
    double radius = 0.0;
    for (const auto& p : pairs) {
      const bool parallel = ((k >> p.low_bit) & 1U) == ((k >> p.high_bit) & 1U);
      radius += std::abs(parallel ? p.parallel : p.antiparallel);
    }
    if (first || d - radius < lo) lo = d - radius;
    if (first || d + radius > hi) hi = d + radius;
    first = false;
  }
  return {lo, hi};
}

}  // namespace spinmeter::detail
