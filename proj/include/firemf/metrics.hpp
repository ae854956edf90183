#pragma once

// Per-trial accuracy/calibration metrics and the cross-problem aggregations
// built on them: Bradley-Terry Elo with problem-level bootstrap, average
// rank, median-normalized score, and pairwise win rates.

#include "firemf/core.hpp"
#include "firemf/log.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace firemf {

inline double nrmse(const Vector& y, const Vector& y_hat) {
  if (y.size() < 1 || y.size() != y_hat.size()) throw InvalidArgument("nrmse: length mismatch");
  const double range = y.maxCoeff() - y.minCoeff();
  if (!(range > 0)) throw InvalidArgument("degenerate range");
  return std::sqrt((y - y_hat).squaredNorm() / static_cast<double>(y.size())) / range;
}

inline constexpr double kVarianceFloor = 1e-12;

/// Mean Gaussian negative log density, variances floored at 1e-12.
inline double nll(const Vector& y, const Vector& y_hat, const Vector& sigma2) {
  if (y.size() < 1 || y.size() != y_hat.size() || y.size() != sigma2.size())
    throw InvalidArgument("nll: length mismatch");
  double acc = 0;
  for (Index i = 0; i < y.size(); ++i) {
    const double v = std::max(sigma2[i], kVarianceFloor);
    const double e = y[i] - y_hat[i];
    acc += std::log(2 * M_PI * v) + e * e / v;
  }
  return acc / (2.0 * static_cast<double>(y.size()));
}

inline double r2(const Vector& y, const Vector& y_hat) {
  if (y.size() < 1 || y.size() != y_hat.size()) throw InvalidArgument("r2: length mismatch");
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (!(ss_tot > 0)) throw InvalidArgument("r2: constant targets");
  return 1.0 - (y - y_hat).squaredNorm() / ss_tot;
}

struct MetricRecord {
  std::string problem;
  double ratio = 0;
  int fold = 0;
  int trial = 0;
  std::string algorithm;
  double nrmse = 0;
  double nll = 0;
  double r2 = 0;
  double runtime_seconds = 0;
  bool ok = true;
  std::string error;
  std::string error_type;   // exception class of a failed cell
  std::uint64_t seed = 0;   // per-cell seed shared by every algorithm
};

enum class Metric { Nrmse, Nll, R2 };

inline Metric metric_from_string(const std::string& s) {
  if (s == "nrmse") return Metric::Nrmse;
  if (s == "nll") return Metric::Nll;
  if (s == "r2") return Metric::R2;
  throw InvalidArgument("unknown metric '" + s + "' (expected nrmse | nll | r2)");
}

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::Nrmse: return "nrmse";
    case Metric::Nll: return "nll";
    case Metric::R2: return "r2";
  }
  return "nrmse";
}

/// Metric value oriented so that lower is better.
inline double loss_value(const MetricRecord& r, Metric m) {
  switch (m) {
    case Metric::Nrmse: return r.nrmse;
    case Metric::Nll: return r.nll;
    case Metric::R2: return -r.r2;
  }
  return r.nrmse;
}

/// Comparison unit for pairwise aggregations.
enum class CompareUnit { Trial, ProblemMean };

namespace detail {

using UnitKey = std::tuple<std::string, double, int, int>;  // problem, ratio, fold, trial

struct Unit {
  std::string problem;
  std::map<std::string, double> loss;  // algorithm -> loss
};

inline std::vector<Unit> comparison_units(const std::vector<MetricRecord>& recs, Metric m, CompareUnit unit) {
  std::map<UnitKey, Unit> units;
  std::map<UnitKey, std::map<std::string, std::pair<double, int>>> sums;
  for (const auto& r : recs) {
    if (!r.ok) continue;
    const double v = loss_value(r, m);
    if (!std::isfinite(v)) continue;
    UnitKey key = unit == CompareUnit::Trial ? UnitKey{r.problem, r.ratio, r.fold, r.trial}
                                             : UnitKey{r.problem, r.ratio, 0, 0};
    units[key].problem = r.problem;
    auto& s = sums[key][r.algorithm];
    s.first += v;
    s.second += 1;
  }
  std::vector<Unit> out;
  for (auto& [key, u] : units) {
    for (const auto& [alg, s] : sums[key]) u.loss[alg] = s.first / s.second;
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<std::string> algorithms_of(const std::vector<MetricRecord>& recs) {
  std::set<std::string> s;
  for (const auto& r : recs) s.insert(r.algorithm);
  return {s.begin(), s.end()};
}

// wins(i, j) accumulates i's score against j; counts(i, j) the comparisons.
inline void tally(const std::vector<const detail::Unit*>& units, const std::vector<std::string>& algs, Matrix& wins,
                  Matrix& counts) {
  const Index k = static_cast<Index>(algs.size());
  wins = Matrix::Zero(k, k);
  counts = Matrix::Zero(k, k);
  for (const Unit* u : units) {
    for (Index i = 0; i < k; ++i) {
      auto a = u->loss.find(algs[static_cast<std::size_t>(i)]);
      if (a == u->loss.end()) continue;
      for (Index j = 0; j < k; ++j) {
        if (i == j) continue;
        auto b = u->loss.find(algs[static_cast<std::size_t>(j)]);
        if (b == u->loss.end()) continue;
        counts(i, j) += 1;
        if (a->second < b->second) wins(i, j) += 1;
        else if (a->second == b->second) wins(i, j) += 0.5;
      }
    }
  }
}

// Bradley-Terry log-strengths by minorization-maximization. A small
// symmetric pseudo-count on each compared pair keeps undefeated players
// finite.
inline Vector bradley_terry(const Matrix& wins, const Matrix& counts, double pseudo = 0.005) {
  const Index k = wins.rows();
  Matrix w = wins;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j && counts(i, j) > 0) w(i, j) += pseudo;
  Matrix n = w + w.transpose();
  Vector p = Vector::Ones(k);
  const Vector total = w.rowwise().sum();
  for (int it = 0; it < 100000; ++it) {
    Vector next(k);
    for (Index i = 0; i < k; ++i) {
      double denom = 0;
      for (Index j = 0; j < k; ++j)
        if (j != i && n(i, j) > 0) denom += n(i, j) / (p[i] + p[j]);
      next[i] = denom > 0 ? total[i] / denom : p[i];
    }
    const double g = std::exp(next.array().log().mean());
    next /= g;
    const double change = (next.array().log() - p.array().log()).abs().maxCoeff();
    p = next;
    if (change < 1e-13) break;
  }
  return p.array().log();
}

}  // namespace detail

struct EloResult {
  std::vector<std::string> algorithms;
  Vector rating;
  Vector ci_low;
  Vector ci_high;
  std::string anchor;
  double anchor_value = 1000;
};

struct EloOptions {
  std::string anchor = "resgp";
  double anchor_value = 1000;
  int bootstrap_rounds = 100;
  std::uint64_t seed = 0;
  CompareUnit unit = CompareUnit::Trial;
};

inline EloResult elo_ratings(const std::vector<MetricRecord>& recs, Metric m, const EloOptions& opts = {}) {
  const auto units = detail::comparison_units(recs, m, opts.unit);
  std::vector<std::string> algs = detail::algorithms_of(recs);

  std::vector<const detail::Unit*> all;
  for (const auto& u : units) all.push_back(&u);
  Matrix wins, counts;
  detail::tally(all, algs, wins, counts);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < algs.size(); ++i) {
    if (counts.row(static_cast<Index>(i)).sum() > 0) kept.push_back(algs[i]);
    else warn("elo: algorithm '" + algs[i] + "' has no comparisons; excluded");
  }
  if (kept.size() < 2) throw InvalidArgument("elo: need at least two algorithms with comparisons");
  algs = kept;
  const auto anchor_it = std::find(algs.begin(), algs.end(), opts.anchor);
  if (anchor_it == algs.end())
    throw InvalidArgument("elo: anchor algorithm '" + opts.anchor + "' not present in results");
  const Index anchor = anchor_it - algs.begin();

  auto ratings_for = [&](const std::vector<const detail::Unit*>& sample) {
    Matrix w, c;
    detail::tally(sample, algs, w, c);
    const Vector theta = detail::bradley_terry(w, c);
    return Vector(opts.anchor_value + 400.0 * (theta.array() - theta[anchor]) / std::log(10.0));
  };

  EloResult res;
  res.algorithms = algs;
  res.anchor = opts.anchor;
  res.anchor_value = opts.anchor_value;
  res.rating = ratings_for(all);
  res.rating[anchor] = opts.anchor_value;

  // Bootstrap over problems.
  std::map<std::string, std::vector<const detail::Unit*>> by_problem;
  for (const auto& u : units) by_problem[u.problem].push_back(&u);
  std::vector<std::string> problems;
  for (const auto& [p, _] : by_problem) problems.push_back(p);
  const Index k = static_cast<Index>(algs.size());
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(k));
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, problems.size() - 1);
  for (int b = 0; b < opts.bootstrap_rounds; ++b) {
    std::vector<const detail::Unit*> sample;
    for (std::size_t q = 0; q < problems.size(); ++q) {
      const auto& us = by_problem[problems[pick(rng)]];
      sample.insert(sample.end(), us.begin(), us.end());
    }
    const Vector r = ratings_for(sample);
    for (Index i = 0; i < k; ++i) draws[static_cast<std::size_t>(i)].push_back(r[i]);
  }
  res.ci_low = res.rating;
  res.ci_high = res.rating;
  if (opts.bootstrap_rounds > 0) {
    auto quantile = [](std::vector<double> v, double q) {
      std::sort(v.begin(), v.end());
      const double pos = q * static_cast<double>(v.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, v.size() - 1);
      return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    for (Index i = 0; i < k; ++i) {
      res.ci_low[i] = quantile(draws[static_cast<std::size_t>(i)], 0.025);
      res.ci_high[i] = quantile(draws[static_cast<std::size_t>(i)], 0.975);
    }
  }
  return res;
}

/// Per-(problem, ratio) cell means of the loss for every algorithm.
struct CellTable {
  std::vector<std::string> algorithms;
  std::vector<std::pair<std::string, double>> cells;
  Matrix loss;  // cells x algorithms, NaN where missing
};

inline CellTable cell_means(const std::vector<MetricRecord>& recs, Metric m) {
  CellTable t;
  t.algorithms = detail::algorithms_of(recs);
  std::map<std::pair<std::string, double>, std::map<std::string, std::pair<double, int>>> acc;
  for (const auto& r : recs) {
    if (!r.ok || !std::isfinite(loss_value(r, m))) continue;
    auto& s = acc[{r.problem, r.ratio}][r.algorithm];
    s.first += loss_value(r, m);
    s.second += 1;
  }
  t.loss = Matrix::Constant(static_cast<Index>(acc.size()), static_cast<Index>(t.algorithms.size()),
                            std::numeric_limits<double>::quiet_NaN());
  Index row = 0;
  for (const auto& [cell, per_alg] : acc) {
    t.cells.push_back(cell);
    for (std::size_t a = 0; a < t.algorithms.size(); ++a) {
      auto it = per_alg.find(t.algorithms[a]);
      if (it != per_alg.end()) t.loss(row, static_cast<Index>(a)) = it->second.first / it->second.second;
    }
    ++row;
  }
  return t;
}

struct AlgorithmScores {
  std::vector<std::string> algorithms;
  Vector value;
  std::size_t cells_used = 0;
};

/// Ranks (ties averaged) on each complete cell, averaged over cells.
inline AlgorithmScores average_rank(const std::vector<MetricRecord>& recs, Metric m) {
  const CellTable t = cell_means(recs, m);
  const Index k = static_cast<Index>(t.algorithms.size());
  AlgorithmScores out{t.algorithms, Vector::Zero(k), 0};
  for (Index c = 0; c < t.loss.rows(); ++c) {
    const Vector v = t.loss.row(c).transpose();
    if (v.array().isNaN().any()) {
      warn("average_rank: cell (" + t.cells[static_cast<std::size_t>(c)].first + ", " +
           std::to_string(t.cells[static_cast<std::size_t>(c)].second) + ") is missing algorithms; skipped");
      continue;
    }
    for (Index i = 0; i < k; ++i) {
      double less = 0, equal = 0;
      for (Index j = 0; j < k; ++j) {
        if (v[j] < v[i]) less += 1;
        else if (v[j] == v[i]) equal += 1;
      }
      out.value[i] += less + (equal + 1) / 2.0;
    }
    ++out.cells_used;
  }
  if (out.cells_used > 0) out.value /= static_cast<double>(out.cells_used);
  return out;
}

/// Per cell: best maps to 1, median to 0, linear in between, floored at -1.
inline AlgorithmScores normalized_score(const std::vector<MetricRecord>& recs, Metric m) {
  const CellTable t = cell_means(recs, m);
  const Index k = static_cast<Index>(t.algorithms.size());
  AlgorithmScores out{t.algorithms, Vector::Zero(k), 0};
  if (k < 2) throw InvalidArgument("normalized_score: need at least two algorithms");
  for (Index c = 0; c < t.loss.rows(); ++c) {
    const Vector v = t.loss.row(c).transpose();
    if (v.array().isNaN().any()) {
      warn("normalized_score: cell is missing algorithms; skipped");
      continue;
    }
    std::vector<double> sorted(v.data(), v.data() + k);
    std::sort(sorted.begin(), sorted.end());
    const double best = sorted.front();
    const double median = k % 2 ? sorted[static_cast<std::size_t>(k / 2)]
                                : 0.5 * (sorted[static_cast<std::size_t>(k / 2 - 1)] + sorted[static_cast<std::size_t>(k / 2)]);
    for (Index i = 0; i < k; ++i) {
      const double s = median == best ? 0.0 : (median - v[i]) / (median - best);
      out.value[i] += std::max(-1.0, s);
    }
    ++out.cells_used;
  }
  if (out.cells_used > 0) out.value /= static_cast<double>(out.cells_used);
  return out;
}

struct WinRate {
  std::vector<std::string> algorithms;
  Matrix rate;  // rate(i, j): share of units where i beats j, ties 0.5
};

inline WinRate win_rate_matrix(const std::vector<MetricRecord>& recs, Metric m,
                               CompareUnit unit = CompareUnit::Trial) {
  const auto units = detail::comparison_units(recs, m, unit);
  WinRate out;
  out.algorithms = detail::algorithms_of(recs);
  if (out.algorithms.size() < 2) throw InvalidArgument("win_rate_matrix: need at least two algorithms");
  std::vector<const detail::Unit*> all;
  for (const auto& u : units) all.push_back(&u);
  Matrix wins, counts;
  detail::tally(all, out.algorithms, wins, counts);
  const Index k = wins.rows();
  out.rate = Matrix::Constant(k, k, 0.5);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j && counts(i, j) > 0) out.rate(i, j) = wins(i, j) / counts(i, j);
  return out;
}

struct RawRow {
  std::string problem;
  double ratio;
  std::string algorithm;
  double mean;
  double std;  // sample standard deviation; 0 for a single record
  std::size_t n;
};

/// Mean and standard deviation of the raw metric per (problem, ratio, algorithm).
inline std::vector<RawRow> raw_table(const std::vector<MetricRecord>& recs, Metric m) {
  std::map<std::tuple<std::string, double, std::string>, std::vector<double>> acc;
  for (const auto& r : recs) {
    if (!r.ok) continue;
    const double v = m == Metric::Nrmse ? r.nrmse : m == Metric::Nll ? r.nll : r.r2;
    acc[{r.problem, r.ratio, r.algorithm}].push_back(v);
  }
  std::vector<RawRow> out;
  for (const auto& [key, vals] : acc) {
    const double n = static_cast<double>(vals.size());
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= n;
    double ss = 0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean,
                   vals.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0, vals.size()});
  }
  return out;
}

}  // namespace firemf
