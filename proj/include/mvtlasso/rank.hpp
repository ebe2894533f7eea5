#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/rng.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace mvtlasso {

/// Type-7 (linear interpolation) sample quantile; `values` is reordered.
inline double quantile(std::vector<double>& values, double q) {
  if (values.empty()) throw ValidationError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace detail {

inline Vector singular_values(const Matrix& x) {
  Eigen::BDCSVD<Matrix> svd(x);
  return svd.singularValues();  // descending
}

}  // namespace detail

/// Parallel analysis: the leading singular values of the gene-centered view
/// are kept while they exceed the `quantile` of the same-index singular
/// values of copies whose rows are permuted independently. The result is
/// clamped to [1, n−1].
inline int select_rank(const Matrix& x, int n_permutations = 49, double q = 0.95, std::uint64_t seed = 0) {
  if (n_permutations < 19) throw ValidationError("select_rank: need at least 19 permutations");
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("select_rank: quantile must lie in (0, 1)");
  const Index n = x.cols();
  if (n < 2) throw ValidationError("select_rank: need at least 2 samples");
  const Matrix xc = x.colwise() - x.rowwise().mean();
  const Vector real = detail::singular_values(xc);
  const Index count = real.size();

  std::vector<std::vector<double>> null(static_cast<std::size_t>(count));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  Matrix shuffled(xc.rows(), n);
  for (int b = 0; b < n_permutations; ++b) {
    for (Index i = 0; i < xc.rows(); ++i) {
      Philox rng(seed, stream_id(stream_purpose::kRank, static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(i)));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Index j = 0; j < n; ++j) shuffled(i, j) = xc(i, perm[static_cast<std::size_t>(j)]);
    }
    const Vector sv = detail::singular_values(shuffled);
    for (Index c = 0; c < count; ++c) null[static_cast<std::size_t>(c)].push_back(sv(c));
  }
  int k = 0;
  for (Index c = 0; c < count; ++c) {
    if (real(c) > quantile(null[static_cast<std::size_t>(c)], q))
      ++k;
    else
      break;
  }
  return std::clamp(k, 1, static_cast<int>(n) - 1);
}

inline int select_rank(const ExpressionView& view, int n_permutations = 49, double q = 0.95, std::uint64_t seed = 0) {
  return select_rank(view.data(), n_permutations, q, seed);
}

}  // namespace mvtlasso
