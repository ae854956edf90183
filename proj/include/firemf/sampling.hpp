#pragma once

// Latin-hypercube designs and the imbalance split protocol: fixed
// lower-fidelity budgets, a high-fidelity budget given as a percentage, and
// either disjoint (independently sampled) or nested high-fidelity inputs.

#include "firemf/benchmarks.hpp"
#include "firemf/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace firemf {

/// One point per stratum per dimension, strata randomly paired across
/// dimensions.
inline Matrix sample_lhs(Index d, Index n, const Vector& lower, const Vector& upper, std::mt19937_64& rng) {
  if (n < 1) throw InvalidArgument("lhs: n must be >= 1");
  if (lower.size() != d || upper.size() != d) throw InvalidArgument("lhs: bounds do not match dimension");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix X(n, d);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + unit(rng)) / static_cast<double>(n);
      X(i, j) = lower[j] + u * (upper[j] - lower[j]);
    }
  }
  return X;
}

inline Matrix sample_lhs(Index d, Index n, const Vector& lower, const Vector& upper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_lhs(d, n, lower, upper, rng);
}

/// Imbalance ratios (percent) accepted without `allow_custom_ratios`.
inline const std::vector<double>& standard_ratios() {
  static const std::vector<double> r{2, 4, 5, 10, 20, 25};
  return r;
}

struct SplitPlan {
  double ratio_percent = 5;
  bool nested = false;
  std::uint64_t seed = 0;
  /// Overrides the lowest-fidelity budget; higher LF budgets and the HF
  /// base scale with it.
  std::optional<Index> n_lf;
};

struct SplitSizes {
  std::vector<Index> per_fidelity;  // N_1 .. N_T
  Index n_test = 0;
};

inline Index hf_budget(double ratio_percent, Index hf_base) {
  const auto n = static_cast<Index>(std::llround(ratio_percent / 100.0 * static_cast<double>(hf_base)));
  if (n < 1)
    throw InvalidArgument("ratio " + std::to_string(ratio_percent) + "% of " + std::to_string(hf_base) +
                          " gives fewer than one high-fidelity point");
  return n;
}

inline SplitSizes split_sizes(const ProblemSpec& p, const SplitPlan& plan) {
  SplitSizes s;
  std::vector<Index> lf = p.lf_sizes;
  Index hf_base = p.hf_base;
  if (plan.n_lf) {
    if (*plan.n_lf < 2) throw InvalidArgument("n_lf must be >= 2");
    const double scale = static_cast<double>(*plan.n_lf) / static_cast<double>(lf.front());
    for (auto& n : lf) n = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(n) * scale)));
    hf_base = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(hf_base) * scale)));
  }
  s.per_fidelity = lf;
  s.per_fidelity.push_back(hf_budget(plan.ratio_percent, hf_base));
  s.n_test = lf.front() / 2;
  return s;
}

struct Split {
  MultiFidelityDataset train;
  Matrix X_test;
  Vector y_test;
};

namespace detail {

struct RowLess {
  bool operator()(const std::vector<double>& a, const std::vector<double>& b) const { return a < b; }
};
using RowSet = std::set<std::vector<double>, RowLess>;

inline std::vector<double> row_key(const Matrix& X, Index i) {
  std::vector<double> k(static_cast<std::size_t>(X.cols()));
  for (Index j = 0; j < X.cols(); ++j) k[static_cast<std::size_t>(j)] = X(i, j);
  return k;
}

// Replaces rows already present in `seen` by uniform draws, then records them.
inline void make_unique_rows(Matrix& X, RowSet& seen, const Vector& lo, const Vector& hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < X.rows(); ++i) {
    auto key = row_key(X, i);
    while (seen.count(key)) {
      for (Index j = 0; j < X.cols(); ++j) X(i, j) = lo[j] + unit(rng) * (hi[j] - lo[j]);
      key = row_key(X, i);
    }
    seen.insert(std::move(key));
  }
}

inline Vector evaluate(const ProblemSpec& p, const Matrix& X, int t, std::mt19937_64* noise_rng) {
  Vector y(X.rows());
  std::normal_distribution<double> normal;
  for (Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    y[i] = p(x, t);
    if (t == p.T && p.hf_noise_sd && noise_rng) y[i] += p.hf_noise_sd(x) * normal(*noise_rng);
  }
  return y;
}

}  // namespace detail

/// Builds the training dataset and test set for one grid cell. The same
/// plan always yields the same arrays.
inline Split make_splits(const ProblemSpec& p, const SplitPlan& plan) {
  const SplitSizes sizes = split_sizes(p, plan);
  std::mt19937_64 rng(plan.seed);
  std::mt19937_64 noise_rng(plan.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::vector<FidelityBlock> blocks;
  detail::RowSet seen;

  if (!plan.nested) {
    for (int t = 1; t <= p.T; ++t) {
      Matrix X = sample_lhs(p.d, sizes.per_fidelity[static_cast<std::size_t>(t - 1)], p.lower, p.upper, rng);
      detail::make_unique_rows(X, seen, p.lower, p.upper, rng);
      blocks.push_back({t, X, Vector()});
    }
  } else {
    Matrix X1 = sample_lhs(p.d, sizes.per_fidelity[0], p.lower, p.upper, rng);
    detail::make_unique_rows(X1, seen, p.lower, p.upper, rng);
    blocks.push_back({1, X1, Vector()});
    for (int t = 2; t <= p.T; ++t) {
      const Matrix& prev = blocks.back().X;
      const Index n = sizes.per_fidelity[static_cast<std::size_t>(t - 1)];
      if (n > prev.rows())
        throw InvalidArgument("nested design needs N_" + std::to_string(t) + " <= N_" + std::to_string(t - 1) +
                              " (got " + std::to_string(n) + " > " + std::to_string(prev.rows()) + ")");
      std::vector<Index> idx(static_cast<std::size_t>(prev.rows()));
      std::iota(idx.begin(), idx.end(), Index{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      Matrix X(n, p.d);
      for (Index i = 0; i < n; ++i) X.row(i) = prev.row(idx[static_cast<std::size_t>(i)]);
      blocks.push_back({t, X, Vector()});
    }
  }
  for (auto& b : blocks) b.y = detail::evaluate(p, b.X, b.t, &noise_rng);

  Split out;
  out.X_test = sample_lhs(p.d, std::max<Index>(1, sizes.n_test), p.lower, p.upper, rng);
  detail::make_unique_rows(out.X_test, seen, p.lower, p.upper, rng);
  out.y_test = detail::evaluate(p, out.X_test, p.T, &noise_rng);
  out.train = MultiFidelityDataset(std::move(blocks));
  return out;
}

}  // namespace firemf
