#pragma once

// The probabilistic-surrogate contract shared by every backend: fit on
// (X, y), then summarize the predictive distribution at query points.

#include "firemf/core.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

namespace firemf {

/// Standard normal inverse CDF.
inline double normal_icdf(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

/// Quantiles of N(mean, variance) at each level, one row per query.
inline Matrix gaussian_quantiles(const Vector& mean, const Vector& variance, const QuantileLevels& levels) {
  Matrix q(mean.size(), static_cast<Index>(levels.size()));
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double z = levels[k] == 0.5 ? 0.0 : normal_icdf(levels[k]);
    q.col(static_cast<Index>(k)) = mean.array() + variance.array().max(0.0).sqrt() * z;
  }
  return q;
}

/// Failure inside a surrogate's fit or predict.
class SurrogateError : public Error {
 public:
  using Error::Error;
};

class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual void fit(const Matrix& X, const Vector& y) = 0;

  /// Predictive summary at Xq. Implementations return quantiles aligned
  /// with `levels`; callers still run PredictiveSummary::enforce_invariants.
  virtual PredictiveSummary predict(const Matrix& Xq, const QuantileLevels& levels) const = 0;

  virtual std::string name() const = 0;
};

/// Creates a fresh, unfitted surrogate. The seed drives any randomness in
/// the surrogate's fitting procedure.
using SurrogateFactory = std::function<std::unique_ptr<Surrogate>(std::uint64_t seed)>;

/// Runs predict and applies the monotone-quantile / nonnegative-variance
/// repair every consumer relies on.
inline PredictiveSummary checked_predict(const Surrogate& s, const Matrix& Xq, const QuantileLevels& levels) {
  PredictiveSummary out = s.predict(Xq, levels);
  if (out.mean.size() != Xq.rows() || out.variance.size() != Xq.rows() || out.quantiles.rows() != Xq.rows() ||
      out.quantiles.cols() != static_cast<Index>(levels.size()))
    throw SurrogateError(s.name() + ": predictive summary shape does not match the query");
  out.enforce_invariants();
  return out;
}

/// Derives a child seed from a parent seed and a stream label (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace firemf
