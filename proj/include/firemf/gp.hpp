#pragma once

// Exact Gaussian-process regression: stationary kernels with optional ARD,
// Cholesky-based conditioning with jitter escalation, log marginal
// likelihood with analytic gradients, and multi-start hyperparameter search.

#include "firemf/core.hpp"
#include "firemf/lbfgs.hpp"
#include "firemf/log.hpp"
#include "firemf/surrogate.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <random>

namespace firemf {

enum class KernelFamily { SquaredExponential, Matern52 };

inline std::string to_string(KernelFamily k) {
  return k == KernelFamily::SquaredExponential ? "se" : "matern52";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "se" || s == "rbf" || s == "squared-exponential") return KernelFamily::SquaredExponential;
  if (s == "matern52" || s == "matern-5/2") return KernelFamily::Matern52;
  throw InvalidArgument("unknown kernel '" + s + "' (expected se | matern52)");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  bool ard = true;

  Index lengthscale_count(Index d) const { return ard ? d : 1; }
};

struct GPHyperparams {
  double signal_variance = 1.0;
  Vector lengthscales = Vector::Ones(1);
  double noise_variance = 1e-6;
};

/// Search box in standardized space.
struct HyperBounds {
  double lengthscale_lo = 1e-3, lengthscale_hi = 1e3;
  double signal_lo = 1e-4, signal_hi = 1e4;
  double noise_lo = 1e-8, noise_hi = 1e1;

  bool operator==(const HyperBounds&) const = default;
};

/// Raised when K + sigma_n^2 I stays indefinite after maximal jitter.
class NotPositiveDefinite : public SurrogateError {
 public:
  NotPositiveDefinite() : SurrogateError("covariance not positive definite") {}
};

namespace detail {

inline double scaled_sqdist(const KernelSpec& spec, const Vector& ls, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                            const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  double r2 = 0.0;
  for (Index j = 0; j < a.size(); ++j) {
    const double l = spec.ard ? ls[j] : ls[0];
    const double diff = (a[j] - b[j]) / l;
    r2 += diff * diff;
  }
  return r2;
}

// Kernel value as a function of the scaled squared distance.
inline double kernel_from_r2(KernelFamily family, double sf2, double r2) {
  if (family == KernelFamily::SquaredExponential) return sf2 * std::exp(-0.5 * r2);
  const double s = std::sqrt(5.0 * r2);
  return sf2 * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

// d k / d log(l_j) = factor(r2) * diff_j^2 / l_j^2.
inline double lengthscale_factor(KernelFamily family, double sf2, double r2) {
  if (family == KernelFamily::SquaredExponential) return sf2 * std::exp(-0.5 * r2);
  const double s = std::sqrt(5.0 * r2);
  return sf2 * (5.0 / 3.0) * (1.0 + s) * std::exp(-s);
}

inline void check_lengthscales(const KernelSpec& spec, const GPHyperparams& h, Index d) {
  if (h.lengthscales.size() != spec.lengthscale_count(d))
    throw InvalidArgument("expected " + std::to_string(spec.lengthscale_count(d)) + " lengthscales, got " +
                          std::to_string(h.lengthscales.size()));
}

}  // namespace detail

/// k(x, x') for one pair of points.
inline double kernel_eval(const KernelSpec& spec, const GPHyperparams& h, const Vector& x, const Vector& xp) {
  if (x.size() != xp.size()) throw InvalidArgument("kernel_eval: dimension mismatch");
  detail::check_lengthscales(spec, h, x.size());
  return detail::kernel_from_r2(spec.family, h.signal_variance,
                                detail::scaled_sqdist(spec, h.lengthscales, x.transpose(), xp.transpose()));
}

/// Cross-covariance K(A, B) without noise.
inline Matrix kernel_matrix(const KernelSpec& spec, const GPHyperparams& h, const Matrix& A, const Matrix& B) {
  Matrix K(A.rows(), B.rows());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j)
      K(i, j) = detail::kernel_from_r2(spec.family, h.signal_variance,
                                       detail::scaled_sqdist(spec, h.lengthscales, A.row(i), B.row(j)));
  return K;
}

inline Matrix kernel_matrix(const KernelSpec& spec, const GPHyperparams& h, const Matrix& A) {
  const Index n = A.rows();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i) {
    K(i, i) = h.signal_variance;
    for (Index j = 0; j < i; ++j)
      K(i, j) = K(j, i) = detail::kernel_from_r2(spec.family, h.signal_variance,
                                                 detail::scaled_sqdist(spec, h.lengthscales, A.row(i), A.row(j)));
  }
  return K;
}

struct JitteredCholesky {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

/// Factorizes K + noise I, adding jitter (initial, x10 each retry, up to
/// max_jitter) when the factorization fails.
inline JitteredCholesky factorize(const Matrix& K, double noise, double initial_jitter = 1e-6,
                                  double max_jitter = 1e-2) {
  JitteredCholesky out;
  Matrix Kn = K;
  Kn.diagonal().array() += noise;
  out.llt.compute(Kn);
  if (out.llt.info() == Eigen::Success) return out;
  for (double jitter = initial_jitter; jitter <= max_jitter * (1.0 + 1e-9); jitter *= 10.0) {
    Matrix Kj = Kn;
    Kj.diagonal().array() += jitter;
    out.llt.compute(Kj);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
  }
  throw NotPositiveDefinite();
}

/// -1/2 y' Kn^-1 y - 1/2 log|Kn| - n/2 log 2 pi with Kn = K + noise I.
inline double log_marginal_likelihood(const Matrix& X, const Vector& y, const KernelSpec& spec,
                                      const GPHyperparams& h) {
  detail::check_lengthscales(spec, h, X.cols());
  const auto chol = factorize(kernel_matrix(spec, h, X), h.noise_variance);
  const Vector alpha = chol.llt.solve(y);
  const Matrix L = chol.llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

/// Log marginal likelihood and its gradient with respect to
/// [log sf2, log l_1..l_k, log sn2].
inline double log_marginal_likelihood_grad(const Matrix& X, const Vector& y, const KernelSpec& spec,
                                           const GPHyperparams& h, Vector& grad, double initial_jitter = 1e-6,
                                           double max_jitter = 1e-2) {
  const Index n = X.rows();
  const Index d = X.cols();
  const Index nl = spec.lengthscale_count(d);
  detail::check_lengthscales(spec, h, d);
  const Matrix Kf = kernel_matrix(spec, h, X);
  const auto chol = factorize(Kf, h.noise_variance, initial_jitter, max_jitter);
  const Vector alpha = chol.llt.solve(y);
  const Matrix L = chol.llt.matrixL();
  const double lml = -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
                     0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

  // W = alpha alpha' - Kn^-1; dLML/dtheta = 1/2 tr(W dK/dtheta).
  Matrix Linv = Matrix::Identity(n, n);
  L.triangularView<Eigen::Lower>().solveInPlace(Linv);
  Matrix W = alpha * alpha.transpose();
  W.noalias() -= Linv.transpose().triangularView<Eigen::Upper>() * Linv;

  grad.setZero(nl + 2);
  grad[0] = 0.5 * (W.array() * Kf.array()).sum();
  grad[nl + 1] = 0.5 * h.noise_variance * W.trace();
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < a; ++b) {
      const double r2 = detail::scaled_sqdist(spec, h.lengthscales, X.row(a), X.row(b));
      const double f = detail::lengthscale_factor(spec.family, h.signal_variance, r2) * W(a, b);
      for (Index j = 0; j < d; ++j) {
        const double l = spec.ard ? h.lengthscales[j] : h.lengthscales[0];
        const double diff = (X(a, j) - X(b, j)) / l;
        grad[spec.ard ? 1 + j : 1] += f * diff * diff;  // symmetric pair counted once, times 2 * 1/2
      }
    }
  }
  return lml;
}

class HyperparameterCache;

struct GpOptions {
  KernelSpec kernel;
  int iterations = 200;  // total optimizer budget across all restarts
  int restarts = 5;
  HyperBounds bounds;
  bool standardize = true;
  bool predictive_noise = true;  // add sigma_n^2 to the predictive variance
  double initial_jitter = 1e-6;
  double max_jitter = 1e-2;
  /// Shared store of optimized hyperparameters. Fits with identical
  /// effective training data, seed and search settings reuse the stored
  /// result instead of repeating the search.
  std::shared_ptr<HyperparameterCache> cache;
};

/// Thread-safe memo of hyperparameter searches, keyed on the exact
/// standardized training arrays, the fit seed and the search settings.
class HyperparameterCache {
 public:
  struct Key {
    std::uint64_t seed;
    KernelFamily family;
    bool ard;
    int iterations, restarts;
    HyperBounds bounds;
    Matrix X;
    Vector y;

    bool operator==(const Key& o) const {
      return seed == o.seed && family == o.family && ard == o.ard && iterations == o.iterations &&
             restarts == o.restarts && bounds == o.bounds && X.rows() == o.X.rows() && X.cols() == o.X.cols() && X == o.X && y == o.y;
    }
  };

  std::optional<GPHyperparams> find(const Key& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& [k, h] : entries_)
      if (k == key) {
        ++hits_;
        return h;
      }
    return std::nullopt;
  }

  void store(Key key, const GPHyperparams& h) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.emplace_back(std::move(key), h);
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }
  std::size_t hits() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return hits_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::pair<Key, GPHyperparams>> entries_;
  mutable std::size_t hits_ = 0;
};

/// Exact GP regressor implementing the surrogate contract.
///
/// Inputs and outputs are standardized before fitting (unless disabled) and
/// predictions are mapped back. Columns that are constant in the training
/// inputs carry no information for the kernel and are dropped, which is the
/// limit of an infinite lengthscale on that column.
class GaussianProcess : public Surrogate {
 public:
  explicit GaussianProcess(GpOptions opts = {}, std::uint64_t seed = 0) : opts_(opts), seed_(seed) {}

  void fit(const Matrix& X, const Vector& y) override {
    prepare(X, y);
    if (!opts_.cache) {
      optimize();
    } else {
      HyperparameterCache::Key key{seed_, opts_.kernel.family, opts_.kernel.ard, opts_.iterations, opts_.restarts,
                                   opts_.bounds, Xs_, ys_};
      if (auto h = opts_.cache->find(key)) {
        hyper_ = *h;
      } else {
        optimize();
        opts_.cache->store(std::move(key), hyper_);
      }
    }
    finalize();
  }

  /// Conditions on (X, y) with fixed hyperparameters, expressed in the
  /// model's internal (standardized, active-column) space.
  void condition(const Matrix& X, const Vector& y, const GPHyperparams& h) {
    prepare(X, y);
    detail::check_lengthscales(opts_.kernel, h, Xs_.cols());
    hyper_ = h;
    finalize();
  }

  PredictiveSummary predict(const Matrix& Xq, const QuantileLevels& levels) const override {
    PredictiveSummary out;
    predict_moments(Xq, out.mean, out.variance);
    out.quantiles = gaussian_quantiles(out.mean, out.variance, levels);
    return out;
  }

  /// Posterior mean and variance in original units.
  void predict_moments(const Matrix& Xq, Vector& mean, Vector& variance) const {
    if (!fitted_) throw SurrogateError("gp: predict called before fit");
    if (Xq.cols() != input_dim_)
      throw InvalidArgument("gp: query has " + std::to_string(Xq.cols()) + " columns, model expects " +
                            std::to_string(input_dim_));
    const Matrix Zq = active_inputs(Xq);
    const Matrix Ks = kernel_matrix(opts_.kernel, hyper_, Zq, Xs_);
    Vector mu = Ks * alpha_;
    const Matrix V = chol_.llt.matrixL().solve(Ks.transpose());
    Vector var = Vector::Constant(Zq.rows(), hyper_.signal_variance) - V.colwise().squaredNorm().transpose();
    for (Index i = 0; i < var.size(); ++i) {
      if (var[i] < 0.0) {
        var[i] = 0.0;
        ++clamped_;
      }
    }
    if (opts_.predictive_noise) var.array() += hyper_.noise_variance;
    mean = stdz_.invert_output(mu);
    variance = stdz_.invert_variance(var);
  }

  std::string name() const override { return "gp"; }

  const GPHyperparams& hyperparams() const { return hyper_; }
  const GpOptions& options() const { return opts_; }
  double log_marginal_likelihood() const { return lml_; }
  double jitter() const { return chol_.jitter; }
  Matrix cholesky_factor() const { return chol_.llt.matrixL(); }
  const std::vector<Index>& active_columns() const { return active_; }
  int optimizer_iterations() const { return iterations_used_; }
  int likelihood_evaluations() const { return evaluations_used_; }
  std::size_t clamped_variances() const { return clamped_.load(); }

 private:
  void prepare(const Matrix& X, const Vector& y) {
    if (X.rows() < 1) throw InvalidArgument("gp: need at least one training row");
    if (X.rows() != y.size()) throw InvalidArgument("gp: rows(X) != len(y)");
    if (!all_finite(X) || !all_finite(y)) throw InvalidArgument("gp: non-finite training data");
    input_dim_ = X.cols();
    if (opts_.standardize) {
      stdz_ = Standardizer::fit(X, y);
    } else {
      stdz_ = Standardizer::fit(Matrix::Zero(1, X.cols()), Vector::Zero(1));
    }
    active_.clear();
    for (Index j = 0; j < X.cols(); ++j) {
      bool constant = (X.col(j).array() == X(0, j)).all();
      if (!constant) active_.push_back(j);
    }
    Xs_ = active_inputs(X);
    ys_ = opts_.standardize ? stdz_.apply_output(y) : y;
    fitted_ = false;
  }

  Matrix active_inputs(const Matrix& X) const {
    const Matrix Z = opts_.standardize ? stdz_.apply_inputs(X) : X;
    Matrix out(Z.rows(), static_cast<Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) out.col(static_cast<Index>(k)) = Z.col(active_[k]);
    return out;
  }

  GPHyperparams unpack(const Vector& theta) const {
    const Index nl = theta.size() - 2;
    GPHyperparams h;
    h.signal_variance = std::exp(theta[0]);
    h.lengthscales = theta.segment(1, nl).array().exp();
    h.noise_variance = std::exp(theta[nl + 1]);
    return h;
  }

  void optimize() {
    const auto& b = opts_.bounds;
    const Index nl = opts_.kernel.lengthscale_count(Xs_.cols());
    Vector lo(nl + 2), hi(nl + 2);
    lo[0] = std::log(b.signal_lo);
    hi[0] = std::log(b.signal_hi);
    lo.segment(1, nl).setConstant(std::log(b.lengthscale_lo));
    hi.segment(1, nl).setConstant(std::log(b.lengthscale_hi));
    lo[nl + 1] = std::log(b.noise_lo);
    hi[nl + 1] = std::log(b.noise_hi);

    auto objective = [&](const Vector& theta, Vector& grad) {
      try {
        const double lml = log_marginal_likelihood_grad(Xs_, ys_, opts_.kernel, unpack(theta), grad,
                                                        opts_.initial_jitter, opts_.max_jitter);
        grad = -grad;
        return -lml;
      } catch (const NotPositiveDefinite&) {
        grad.setZero(theta.size());
        return std::numeric_limits<double>::infinity();
      }
    };

    const int restarts = std::max(1, opts_.restarts);
    const int per_start = std::max(1, opts_.iterations / restarts);
    std::mt19937_64 rng(seed_);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double best = std::numeric_limits<double>::infinity();
    Vector best_theta;
    iterations_used_ = 0;
    evaluations_used_ = 0;
    for (int start = 0; start < restarts; ++start) {
      Vector theta0(nl + 2);
      if (start == 0) {
        theta0[0] = 0.0;
        theta0.segment(1, nl).setConstant(0.5 * std::log(std::max<double>(1.0, static_cast<double>(Xs_.cols()))));
        theta0[nl + 1] = std::log(1e-2);
      } else {
        for (Index i = 0; i < theta0.size(); ++i) theta0[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
      }
      BoxMinimizerOptions mopts;
      mopts.max_iterations = per_start;
      const auto res = minimize_box(objective, theta0, lo, hi, mopts);
      iterations_used_ += res.iterations;
      evaluations_used_ += res.evaluations;
      if (std::isfinite(res.f) && res.f < best) {
        best = res.f;
        best_theta = res.x;
      }
    }
    if (!std::isfinite(best)) throw NotPositiveDefinite();
    hyper_ = unpack(best_theta);
  }

  void finalize() {
    const Matrix K = kernel_matrix(opts_.kernel, hyper_, Xs_);
    chol_ = factorize(K, hyper_.noise_variance, opts_.initial_jitter, opts_.max_jitter);
    alpha_ = chol_.llt.solve(ys_);
    const Matrix L = chol_.llt.matrixL();
    lml_ = -0.5 * ys_.dot(alpha_) - L.diagonal().array().log().sum() -
           0.5 * static_cast<double>(ys_.size()) * std::log(2.0 * M_PI);
    fitted_ = true;
  }

  GpOptions opts_;
  std::uint64_t seed_;
  Standardizer stdz_;
  std::vector<Index> active_;
  Index input_dim_ = 0;
  Matrix Xs_;
  Vector ys_;
  GPHyperparams hyper_;
  JitteredCholesky chol_;
  Vector alpha_;
  double lml_ = 0.0;
  int iterations_used_ = 0;
  int evaluations_used_ = 0;
  bool fitted_ = false;
  mutable std::atomic<std::size_t> clamped_{0};
};

inline SurrogateFactory gp_factory(GpOptions opts = {}) {
  return [opts](std::uint64_t seed) { return std::make_unique<GaussianProcess>(opts, seed); };
}

}  // namespace firemf
