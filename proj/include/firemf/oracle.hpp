#pragma once

// Nonparametric estimate of the conditional risk E[(r - E[r | Z])^2] by
// equal-mass binning of the conditioning columns, plus the synthetic
// processes used to check how that risk depends on which summaries of the
// low-fidelity predictive distribution are conditioned on.

#include "firemf/benchmarks.hpp"
#include "firemf/core.hpp"
#include "firemf/surrogate.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace firemf {

struct OracleEstimate {
  double mse = 0;
  double stderr_ = 0;     // Monte-Carlo standard error of `mse`
  std::size_t cells = 0;  // after merging
  Vector losses;          // per-sample cross-fitted squared errors
};

namespace detail {

// Equal-mass bin index per row; tied values always share a bin.
inline std::vector<int> equal_mass_bins(const Eigen::Ref<const Vector>& v, int bins) {
  const Index n = v.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  std::vector<int> out(static_cast<std::size_t>(n));
  Index group_start = 0;
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<std::size_t>(k)];
    if (k > 0 && v[i] != v[order[static_cast<std::size_t>(k - 1)]]) group_start = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(group_start * bins / n);
  }
  return out;
}

}  // namespace detail

/// Cross-fitted binning estimate. Each conditioning column gets
/// ceil(n^(1/(2+p))) equal-mass bins; cells with fewer than `min_cell`
/// samples are merged with their lexicographic successors. Cell means are
/// estimated on one random half and evaluated on the other, then swapped.
inline OracleEstimate oracle_conditional_mse(const Matrix& Z, const Vector& r, std::uint64_t seed = 0,
                                             Index min_cell = 30) {
  const Index n = Z.rows();
  if (r.size() != n) throw InvalidArgument("oracle: rows(Z) != len(r)");
  if (n < 2 * min_cell) throw InvalidArgument("oracle: too few samples");
  const Index p = Z.cols();
  const int bins = static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 1.0 / (2.0 + static_cast<double>(p)))));

  std::vector<std::vector<int>> col_bins;
  for (Index j = 0; j < p; ++j) col_bins.push_back(detail::equal_mass_bins(Z.col(j), bins));
  std::map<std::vector<int>, std::vector<Index>> cells;
  for (Index i = 0; i < n; ++i) {
    std::vector<int> key(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) key[static_cast<std::size_t>(j)] = col_bins[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    cells[key].push_back(i);
  }

  std::vector<std::vector<Index>> groups;
  std::vector<Index> current;
  for (auto& [key, members] : cells) {
    current.insert(current.end(), members.begin(), members.end());
    if (static_cast<Index>(current.size()) >= min_cell) {
      groups.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    if (groups.empty()) groups.push_back({});
    groups.back().insert(groups.back().end(), current.begin(), current.end());
  }

  std::vector<int> half(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) half[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
  std::mt19937_64 rng(seed);
  std::shuffle(half.begin(), half.end(), rng);

  double global_sum[2] = {0, 0};
  Index global_n[2] = {0, 0};
  for (Index i = 0; i < n; ++i) {
    global_sum[half[static_cast<std::size_t>(i)]] += r[i];
    ++global_n[half[static_cast<std::size_t>(i)]];
  }

  OracleEstimate est;
  est.cells = groups.size();
  est.losses.resize(n);
  for (const auto& g : groups) {
    double sum[2] = {0, 0};
    Index cnt[2] = {0, 0};
    for (Index i : g) {
      sum[half[static_cast<std::size_t>(i)]] += r[i];
      ++cnt[half[static_cast<std::size_t>(i)]];
    }
    for (Index i : g) {
      const int other = 1 - half[static_cast<std::size_t>(i)];
      const double m = cnt[other] > 0 ? sum[other] / static_cast<double>(cnt[other])
                                       : global_sum[other] / static_cast<double>(global_n[other]);
      est.losses[i] = (r[i] - m) * (r[i] - m);
    }
  }
  est.mse = est.losses.mean();
  const double var = (est.losses.array() - est.mse).square().sum() / static_cast<double>(n - 1);
  est.stderr_ = std::sqrt(var / static_cast<double>(n));
  return est;
}

/// Monte-Carlo standard error for the difference of two independent-style
/// estimates.
inline double combined_stderr(const OracleEstimate& a, const OracleEstimate& b) {
  return std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
}

/// Draws of (x, LF predictive summary, residual).
struct TheorySamples {
  Vector x;
  Vector mean;
  Vector variance;
  Matrix quantiles;  // default decile levels
  Vector r;

  Matrix z_mean() const { return hstack(2); }
  Matrix z_mv() const { return hstack(3); }
  Matrix z_aug() const { return hstack(3 + quantiles.cols()); }

 private:
  Matrix hstack(Index cols) const {
    Matrix Z(x.size(), cols);
    Z.col(0) = x;
    Z.col(1) = mean;
    if (cols > 2) Z.col(2) = variance;
    if (cols > 3) Z.rightCols(cols - 3) = quantiles.leftCols(cols - 3);
    return Z;
  }
};

enum class TheoryGenerator {
  Goldberg,          // residual = heteroscedastic noise, no conditional signal
  Independent,       // residual independent of every feature
  VarianceCoupled,   // residual magnitude tied to the LF variance only
  Skewed,            // residual tied to the skew direction visible only in quantiles
};

inline TheorySamples generate_theory_samples(TheoryGenerator g, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  const QuantileLevels levels;
  std::vector<double> z(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) z[k] = normal_icdf(levels[k]);

  TheorySamples s;
  s.x.resize(n);
  s.mean.resize(n);
  s.variance.resize(n);
  s.quantiles.resize(n, static_cast<Index>(levels.size()));
  s.r.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = unit(rng);
    s.x[i] = x;
    double sd = 1.0;
    switch (g) {
      case TheoryGenerator::Goldberg:
        s.mean[i] = bench::goldberg_mean(x);
        sd = bench::goldberg_sd(x);
        s.r[i] = sd * normal(rng);
        break;
      case TheoryGenerator::Independent:
        s.mean[i] = std::sin(2 * bench::kPi * x);
        sd = 0.5 + unit(rng);
        s.r[i] = normal(rng);
        break;
      case TheoryGenerator::VarianceCoupled:
        s.mean[i] = bench::goldberg_mean(x);
        sd = 0.5 + unit(rng);
        s.r[i] = sd * std::abs(normal(rng));
        break;
      case TheoryGenerator::Skewed: {
        // Standardized lognormal with random shape and direction: mean and
        // variance are fixed, the quantiles reveal the skew.
        s.mean[i] = 0.1 * std::sin(2 * bench::kPi * x);
        const double shape = 0.3 + 0.7 * unit(rng);
        const double dir = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double m = std::exp(shape * shape / 2);
        const double sdl = std::sqrt((std::exp(shape * shape) - 1) * std::exp(shape * shape));
        for (std::size_t k = 0; k < levels.size(); ++k) {
          const double zk = dir > 0 ? z[k] : z[levels.size() - 1 - k];
          s.quantiles(i, static_cast<Index>(k)) = s.mean[i] + dir * (std::exp(shape * zk) - m) / sdl;
        }
        s.variance[i] = 1.0;
        const double median = dir * (1 - m) / sdl;
        s.r[i] = median + 0.5 * normal(rng);
        continue;
      }
    }
    s.variance[i] = sd * sd;
    for (std::size_t k = 0; k < levels.size(); ++k) s.quantiles(i, static_cast<Index>(k)) = s.mean[i] + sd * z[k];
  }
  return s;
}

/// Pearson correlation.
inline double correlation(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  const Vector da = a.array() - ma, db = b.array() - mb;
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

/// corr(sd(x)^2, (y_HF - y_LF)^2) on the named heteroscedastic problem.
inline double heteroscedastic_coupling(const std::string& name, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ProblemSpec& p = find_problem(name);
  if (!p.hf_noise_sd) throw InvalidArgument(name + " is not a heteroscedastic problem");
  Vector var(n), sq(n);
  for (Index i = 0; i < n; ++i) {
    const double x = unit(rng);
    const auto s = gen_heteroscedastic(name, x, rng);
    const double sd = p.hf_noise_sd(Vector::Constant(1, x));
    var[i] = sd * sd;
    sq[i] = (s.y_hf - s.y_lf) * (s.y_hf - s.y_lf);
  }
  return correlation(var, sq);
}

}  // namespace firemf
