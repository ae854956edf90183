#pragma once

// Classical autoregressive multi-fidelity GP baselines. Each method fits a
// GP at the lowest fidelity and then one correction stage per higher
// fidelity, using the chain-so-far posterior at the upper stage's inputs, so
// the upper inputs need not coincide with lower ones.

#include "firemf/core.hpp"
#include "firemf/gp.hpp"
#include "firemf/log.hpp"
#include "firemf/surrogate.hpp"

#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace firemf {

struct MeanVariance {
  Vector mean;
  Vector variance;
};

/// Linear autoregressive chain f_t = rho_t f_{t-1} + delta_t. With
/// `fixed_rho` set every stage uses that value (ResGP is rho = 1).
class AutoregressiveChain {
 public:
  explicit AutoregressiveChain(SurrogateFactory factory = gp_factory(), std::optional<double> fixed_rho = std::nullopt)
      : factory_(std::move(factory)), fixed_rho_(fixed_rho) {}

  void fit(const MultiFidelityDataset& data, std::uint64_t seed) {
    if (data.levels() < 2) throw InvalidArgument("autoregressive chain: need at least two fidelities");
    stages_.clear();
    rho_.clear();
    targets_.clear();
    const auto& blocks = data.blocks();
    dim_ = data.dim();
    auto first = factory_(derive_seed(seed, 0));
    first->fit(blocks[0].X, blocks[0].y);
    stages_.push_back(std::move(first));
    for (std::size_t k = 1; k < blocks.size(); ++k) {
      const auto& upper = blocks[k];
      const MeanVariance lower = predict_upto(upper.X, k - 1);
      double rho;
      if (fixed_rho_) {
        rho = *fixed_rho_;
      } else {
        const double mm = lower.mean.squaredNorm();
        if (mm == 0.0) {
          warn("ar1: lower-fidelity means are all zero at stage " + std::to_string(k) + "; using rho = 0");
          rho = 0.0;
        } else {
          rho = upper.y.dot(lower.mean) / mm;
        }
      }
      Vector r = upper.y - rho * lower.mean;
      auto delta = factory_(derive_seed(seed, k));
      delta->fit(upper.X, r);
      stages_.push_back(std::move(delta));
      rho_.push_back(rho);
      targets_.push_back(std::move(r));
    }
  }

  MeanVariance predict(const Matrix& Xq) const { return predict_upto(Xq, stages_.size() - 1); }

  /// Chain prediction through correction stage `level` (0 = lowest GP only).
  MeanVariance predict_upto(const Matrix& Xq, std::size_t level) const {
    if (stages_.empty()) throw SurrogateError("autoregressive chain: predict called before fit");
    if (Xq.cols() != dim_) throw InvalidArgument("autoregressive chain: query dimension mismatch");
    static const QuantileLevels kMedian{0.5};
    const auto s0 = checked_predict(*stages_[0], Xq, kMedian);
    MeanVariance out{s0.mean, s0.variance};
    for (std::size_t k = 1; k <= level; ++k) {
      const auto d = checked_predict(*stages_[k], Xq, kMedian);
      const double rho = rho_[k - 1];
      out.mean = rho * out.mean + d.mean;
      out.variance = (rho * rho) * out.variance + d.variance;
    }
    return out;
  }

  const std::vector<double>& rho() const { return rho_; }
  /// Discrepancy targets of correction stage k (0-based).
  const Vector& residual_targets(std::size_t k) const { return targets_.at(k); }
  const Surrogate& stage(std::size_t k) const { return *stages_.at(k); }

 private:
  SurrogateFactory factory_;
  std::optional<double> fixed_rho_;
  std::vector<std::unique_ptr<Surrogate>> stages_;
  std::vector<double> rho_;
  std::vector<Vector> targets_;
  Index dim_ = 0;
};

inline AutoregressiveChain make_ar1(SurrogateFactory f = gp_factory()) { return AutoregressiveChain(std::move(f)); }
inline AutoregressiveChain make_resgp(SurrogateFactory f = gp_factory()) {
  return AutoregressiveChain(std::move(f), 1.0);
}

struct NargpOptions {
  bool monte_carlo = false;
  int samples = 100;
};

/// Nonlinear autoregression: stage t is a GP on [x, mu_{t-1}(x)].
class Nargp {
 public:
  explicit Nargp(SurrogateFactory factory = gp_factory(), NargpOptions opts = {})
      : factory_(std::move(factory)), opts_(opts) {}

  void fit(const MultiFidelityDataset& data, std::uint64_t seed) {
    if (data.levels() < 2) throw InvalidArgument("nargp: need at least two fidelities");
    if (opts_.monte_carlo && opts_.samples < 1) throw InvalidArgument("nargp: Monte-Carlo samples must be >= 1");
    stages_.clear();
    seed_ = seed;
    dim_ = data.dim();
    const auto& blocks = data.blocks();
    auto first = factory_(derive_seed(seed, 0));
    first->fit(blocks[0].X, blocks[0].y);
    stages_.push_back(std::move(first));
    for (std::size_t k = 1; k < blocks.size(); ++k) {
      const auto& upper = blocks[k];
      const Vector lower_mean = predict_upto(upper.X, k - 1).mean;
      auto g = factory_(derive_seed(seed, k));
      g->fit(stack(upper.X, lower_mean), upper.y);
      stages_.push_back(std::move(g));
    }
  }

  MeanVariance predict(const Matrix& Xq) const { return predict_upto(Xq, stages_.size() - 1); }

  MeanVariance predict_upto(const Matrix& Xq, std::size_t level) const {
    if (stages_.empty()) throw SurrogateError("nargp: predict called before fit");
    if (Xq.cols() != dim_) throw InvalidArgument("nargp: query dimension mismatch");
    static const QuantileLevels kMedian{0.5};
    const auto s0 = checked_predict(*stages_[0], Xq, kMedian);
    MeanVariance out{s0.mean, s0.variance};
    for (std::size_t k = 1; k <= level; ++k) {
      if (!opts_.monte_carlo) {
        const auto s = checked_predict(*stages_[k], stack(Xq, out.mean), kMedian);
        out = {s.mean, s.variance};
        continue;
      }
      // Sample the lower output, push each sample through the upper GP and
      // pool with the law of total variance.
      std::mt19937_64 rng(derive_seed(seed_, 1000 + k));
      std::normal_distribution<double> normal;
      const Index n = Xq.rows();
      Vector sum_mean = Vector::Zero(n), sum_var = Vector::Zero(n), sum_sq = Vector::Zero(n);
      const Vector sd = out.variance.array().max(0.0).sqrt();
      for (int s = 0; s < opts_.samples; ++s) {
        Vector draw(n);
        for (Index i = 0; i < n; ++i) draw[i] = out.mean[i] + sd[i] * normal(rng);
        const auto p = checked_predict(*stages_[k], stack(Xq, draw), kMedian);
        sum_mean += p.mean;
        sum_var += p.variance;
        sum_sq += p.mean.cwiseProduct(p.mean);
      }
      const double S = opts_.samples;
      const Vector m = sum_mean / S;
      const Vector between = (sum_sq / S - m.cwiseProduct(m)).cwiseMax(0.0);
      out = {m, sum_var / S + between};
    }
    return out;
  }

  /// Input width of every correction stage.
  Index stage_input_dim() const { return dim_ + 1; }

  static Matrix stack(const Matrix& X, const Vector& m) {
    Matrix out(X.rows(), X.cols() + 1);
    out.leftCols(X.cols()) = X;
    out.col(X.cols()) = m;
    return out;
  }

 private:
  SurrogateFactory factory_;
  NargpOptions opts_;
  std::vector<std::unique_ptr<Surrogate>> stages_;
  std::uint64_t seed_ = 0;
  Index dim_ = 0;
};

}  // namespace firemf
