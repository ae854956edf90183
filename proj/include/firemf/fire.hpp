#pragma once

// FIRE: a base surrogate fitted on every lower-fidelity observation, then a
// residual surrogate fitted on the high-fidelity residuals with the base
// model's predictive distribution appended to its inputs. Prediction adds
// the two means and the two variances.

#include "firemf/core.hpp"
#include "firemf/surrogate.hpp"

#include <memory>
#include <string>
#include <vector>

namespace firemf {

enum class AugmentationMode { Full, MeanVariance, MeanOnly, None };

inline std::string to_string(AugmentationMode m) {
  switch (m) {
    case AugmentationMode::Full: return "full";
    case AugmentationMode::MeanVariance: return "mean_variance";
    case AugmentationMode::MeanOnly: return "mean_only";
    case AugmentationMode::None: return "none";
  }
  return "full";
}

inline AugmentationMode augmentation_mode_from_string(const std::string& s) {
  if (s == "full") return AugmentationMode::Full;
  if (s == "mean_variance" || s == "mv") return AugmentationMode::MeanVariance;
  if (s == "mean_only" || s == "mean") return AugmentationMode::MeanOnly;
  if (s == "none") return AugmentationMode::None;
  throw InvalidArgument("unknown augmentation mode '" + s + "' (expected full | mean_variance | mean_only | none)");
}

/// Number of columns appended to the tokenized input under `mode`.
inline Index appended_columns(AugmentationMode mode, const QuantileLevels& levels) {
  switch (mode) {
    case AugmentationMode::Full: return 2 + static_cast<Index>(levels.size());
    case AugmentationMode::MeanVariance: return 2;
    case AugmentationMode::MeanOnly: return 1;
    case AugmentationMode::None: return 0;
  }
  return 0;
}

/// [x.., token, mu, sigma^2, q(tau_1) .. q(tau_k)], truncated per mode.
inline Matrix build_augmented_features(const Matrix& x_tok, const PredictiveSummary& s, AugmentationMode mode) {
  if (s.mean.size() != x_tok.rows() || s.variance.size() != x_tok.rows())
    throw InvalidArgument("augmentation: summary rows do not match inputs");
  const Index k = s.quantiles.cols();
  Index extra = 0;
  switch (mode) {
    case AugmentationMode::Full: extra = 2 + k; break;
    case AugmentationMode::MeanVariance: extra = 2; break;
    case AugmentationMode::MeanOnly: extra = 1; break;
    case AugmentationMode::None: extra = 0; break;
  }
  const Index d = x_tok.cols();
  Matrix z(x_tok.rows(), d + extra);
  z.leftCols(d) = x_tok;
  if (extra >= 1) z.col(d) = s.mean;
  if (extra >= 2) z.col(d + 1) = s.variance;
  if (extra > 2) {
    if (s.quantiles.rows() != x_tok.rows()) throw InvalidArgument("augmentation: quantile rows do not match inputs");
    z.rightCols(k) = s.quantiles;
  }
  return z;
}

/// Predicts one stored value everywhere. Used as the residual stage when
/// only one high-fidelity observation exists.
class ConstantSurrogate : public Surrogate {
 public:
  ConstantSurrogate(double mean, double variance) : mean_(mean), variance_(std::max(0.0, variance)) {}

  void fit(const Matrix&, const Vector&) override {}

  PredictiveSummary predict(const Matrix& Xq, const QuantileLevels& levels) const override {
    PredictiveSummary s;
    s.mean = Vector::Constant(Xq.rows(), mean_);
    s.variance = Vector::Constant(Xq.rows(), variance_);
    s.quantiles = gaussian_quantiles(s.mean, s.variance, levels);
    return s;
  }

  std::string name() const override { return "constant"; }

 private:
  double mean_, variance_;
};

struct FireOptions {
  AugmentationMode mode = AugmentationMode::Full;
  QuantileLevels levels;
};

/// Per-stage surrogate factories; the residual factory may differ from the
/// base (e.g. an external model for one stage and a GP for the other).
struct FireFactories {
  SurrogateFactory base;
  SurrogateFactory residual;

  static FireFactories uniform(SurrogateFactory f) { return {f, f}; }
};

struct FirePrediction {
  Vector mean;
  Vector variance;
  PredictiveSummary base;      // at the tokenized query
  PredictiveSummary residual;  // at the augmented query
};

namespace detail {

template <class Fn>
auto tagged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InvalidArgument&) {
    throw;
  } catch (Error& e) {
    e.add_context(stage);
    throw;
  } catch (const std::exception& e) {
    throw SurrogateError(std::string(stage) + ": " + e.what());
  }
}

// Fits the residual stage on (z, r), or the constant fallback for a single row.
inline std::unique_ptr<Surrogate> fit_residual_stage(const SurrogateFactory& factory, std::uint64_t seed,
                                                     const Matrix& z, const Vector& r, double base_variance0) {
  if (r.size() == 1) return std::make_unique<ConstantSurrogate>(r[0], base_variance0);
  auto model = factory(seed);
  model->fit(z, r);
  return model;
}

}  // namespace detail

class FireModel {
 public:
  FireModel(std::unique_ptr<Surrogate> base, std::unique_ptr<Surrogate> residual, FireOptions opts, Index dim,
            int hf_token, Matrix z_train, Vector r_train)
      : base_(std::move(base)),
        residual_(std::move(residual)),
        opts_(std::move(opts)),
        dim_(dim),
        hf_token_(hf_token),
        z_train_(std::move(z_train)),
        r_train_(std::move(r_train)) {}

  /// Xq holds raw inputs (d columns); the high-fidelity token is appended.
  FirePrediction predict(const Matrix& Xq) const {
    if (Xq.cols() != dim_)
      throw InvalidArgument("fire: query has " + std::to_string(Xq.cols()) + " columns, expected " +
                            std::to_string(dim_));
    const Matrix xt = append_token(Xq, hf_token_);
    FirePrediction out;
    out.base = detail::tagged("base", [&] { return checked_predict(*base_, xt, opts_.levels); });
    const Matrix z = build_augmented_features(xt, out.base, opts_.mode);
    out.residual = detail::tagged("residual", [&] { return checked_predict(*residual_, z, opts_.levels); });
    out.mean = out.base.mean + out.residual.mean;
    out.variance = out.base.variance + out.residual.variance;
    return out;
  }

  const Surrogate& base() const { return *base_; }
  const Surrogate& residual() const { return *residual_; }
  const FireOptions& options() const { return opts_; }
  Index input_dim() const { return dim_; }
  int hf_token() const { return hf_token_; }
  /// Augmented training inputs and residual targets of the residual stage.
  const Matrix& augmented_inputs() const { return z_train_; }
  const Vector& residual_targets() const { return r_train_; }

 private:
  std::unique_ptr<Surrogate> base_;
  std::unique_ptr<Surrogate> residual_;
  FireOptions opts_;
  Index dim_;
  int hf_token_;
  Matrix z_train_;
  Vector r_train_;
};

inline FireModel fire_fit(const MultiFidelityDataset& data, const FireFactories& factories, const FireOptions& opts,
                          std::uint64_t seed) {
  auto [lf, hf] = aggregate_bilevel(data);

  auto base = factories.base(derive_seed(seed, 0));
  detail::tagged("base", [&] { base->fit(lf.X, lf.y); });
  const PredictiveSummary at_hf = detail::tagged("base", [&] { return checked_predict(*base, hf.X, opts.levels); });

  Matrix z = build_augmented_features(hf.X, at_hf, opts.mode);
  Vector r = hf.y - at_hf.mean;
  auto residual = detail::tagged("residual", [&] {
    return detail::fit_residual_stage(factories.residual, derive_seed(seed, 1), z, r, at_hf.variance[0]);
  });
  return FireModel(std::move(base), std::move(residual), opts, data.dim(), data.highest(), std::move(z),
                   std::move(r));
}

struct RecursivePrediction {
  Vector mean;
  Vector variance;
  std::vector<Vector> stage_means;      // base first, then each residual stage
  std::vector<Vector> stage_variances;  // same order
};

/// Chain of residual stages, one per adjacent fidelity pair. Stage k is
/// trained on fidelity k+1 with the chain-so-far prediction as its base.
class RecursiveFireModel {
 public:
  RecursiveFireModel(std::unique_ptr<Surrogate> base, std::vector<std::unique_ptr<Surrogate>> stages,
                     std::vector<int> tokens, FireOptions opts, Index dim)
      : base_(std::move(base)), stages_(std::move(stages)), tokens_(std::move(tokens)), opts_(std::move(opts)),
        dim_(dim) {}

  RecursivePrediction predict(const Matrix& Xq) const { return predict_upto(Xq, stages_.size()); }

  std::size_t stage_count() const { return stages_.size(); }
  const Surrogate& base() const { return *base_; }
  const Surrogate& stage(std::size_t k) const { return *stages_.at(k); }
  const Vector& residual_targets(std::size_t k) const { return targets_.at(k); }

  /// Runs the chain through `count` residual stages. The first stage uses
  /// the base summary directly; later stages see Gaussian quantiles of the
  /// accumulated mean and variance.
  RecursivePrediction predict_upto(const Matrix& Xq, std::size_t count) const {
    if (Xq.cols() != dim_) throw InvalidArgument("fire: query dimension mismatch");
    RecursivePrediction out;
    // Like the two-stage model, the base is queried with the token of the
    // level it is being corrected towards.
    const Matrix x_base = append_token(Xq, tokens_[count == 0 ? 0 : 1]);
    PredictiveSummary summary = checked_predict(*base_, x_base, opts_.levels);
    out.mean = summary.mean;
    out.variance = summary.variance;
    out.stage_means.push_back(summary.mean);
    out.stage_variances.push_back(summary.variance);
    for (std::size_t k = 0; k < count; ++k) {
      const Matrix xt = append_token(Xq, tokens_[k + 1]);
      if (k > 0) {
        summary.mean = out.mean;
        summary.variance = out.variance;
        summary.quantiles = gaussian_quantiles(out.mean, out.variance, opts_.levels);
      }
      const Matrix z = build_augmented_features(xt, summary, opts_.mode);
      const PredictiveSummary res = checked_predict(*stages_[k], z, opts_.levels);
      out.mean += res.mean;
      out.variance += res.variance;
      out.stage_means.push_back(res.mean);
      out.stage_variances.push_back(res.variance);
    }
    return out;
  }

 private:
  friend RecursiveFireModel fire_fit_recursive(const MultiFidelityDataset&, const FireFactories&, const FireOptions&,
                                               std::uint64_t);

  std::unique_ptr<Surrogate> base_;
  std::vector<std::unique_ptr<Surrogate>> stages_;
  std::vector<int> tokens_;
  FireOptions opts_;
  Index dim_;
  std::vector<Vector> targets_;
};

inline RecursiveFireModel fire_fit_recursive(const MultiFidelityDataset& data, const FireFactories& factories,
                                             const FireOptions& opts, std::uint64_t seed) {
  if (data.levels() < 2) throw InvalidArgument("need at least two fidelities");
  const auto& blocks = data.blocks();
  std::vector<int> tokens;
  for (const auto& b : blocks) tokens.push_back(b.t);

  auto base = factories.base(derive_seed(seed, 0));
  const Matrix x1 = append_token(blocks[0].X, blocks[0].t);
  detail::tagged("base", [&] { base->fit(x1, blocks[0].y); });

  RecursiveFireModel model(std::move(base), {}, tokens, opts, data.dim());
  for (std::size_t k = 0; k + 1 < blocks.size(); ++k) {
    const auto& upper = blocks[k + 1];
    PredictiveSummary summary;
    if (k == 0) {
      summary = checked_predict(*model.base_, append_token(upper.X, upper.t), opts.levels);
    } else {
      const auto chain = model.predict_upto(upper.X, k);
      summary.mean = chain.mean;
      summary.variance = chain.variance;
      summary.quantiles = gaussian_quantiles(chain.mean, chain.variance, opts.levels);
    }
    const Matrix z = build_augmented_features(append_token(upper.X, upper.t), summary, opts.mode);
    Vector r = upper.y - summary.mean;
    const std::string tag = "residual stage " + std::to_string(k + 1);
    auto stage = detail::tagged(tag.c_str(), [&] {
      return detail::fit_residual_stage(factories.residual, derive_seed(seed, k + 1), z, r, summary.variance[0]);
    });
    model.stages_.push_back(std::move(stage));
    model.targets_.push_back(std::move(r));
  }
  return model;
}

}  // namespace firemf
