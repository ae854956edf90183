#pragma once

// Shared domain types for multi-fidelity regression: fidelity blocks,
// datasets, quantile levels, predictive summaries, standardization and the
// bi-level (LF aggregate / HF target) split used by every algorithm.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace firemf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::exception {
 public:
  explicit Error(std::string message) : message_(std::move(message)) {}

  const char* what() const noexcept override { return message_.c_str(); }

  /// Prefixes the message with "<context>: ". Lets intermediate layers
  /// label an error while rethrowing it with its dynamic type intact.
  void add_context(const std::string& context) { message_ = context + ": " + message_; }

 private:
  std::string message_;
};

/// Violated precondition on user-supplied data or configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// One observation block at a single fidelity level.
struct FidelityBlock {
  int t = 1;  // 1-based fidelity index
  Matrix X;   // N_t x d
  Vector y;   // N_t

  Index rows() const { return X.rows(); }
  Index dim() const { return X.cols(); }

  void validate() const {
    if (t < 1) throw InvalidArgument("fidelity index must be >= 1, got " + std::to_string(t));
    if (X.rows() < 1) throw InvalidArgument("fidelity block " + std::to_string(t) + " is empty");
    if (X.rows() != y.size())
      throw InvalidArgument("fidelity block " + std::to_string(t) + ": rows(X) != len(y)");
    if (!all_finite(X) || !all_finite(y))
      throw InvalidArgument("fidelity block " + std::to_string(t) + " contains non-finite entries");
  }
};

/// Observation blocks ordered by strictly increasing fidelity index.
class MultiFidelityDataset {
 public:
  MultiFidelityDataset() = default;

  explicit MultiFidelityDataset(std::vector<FidelityBlock> blocks, bool enforce_imbalance = false)
      : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw InvalidArgument("dataset has no fidelity blocks");
    const Index d = blocks_.front().dim();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i].validate();
      if (blocks_[i].dim() != d) throw InvalidArgument("fidelity blocks disagree on input dimension");
      if (i > 0 && blocks_[i].t <= blocks_[i - 1].t)
        throw InvalidArgument("fidelity indices must be strictly increasing");
    }
    if (enforce_imbalance) {
      for (std::size_t i = 1; i < blocks_.size(); ++i)
        if (blocks_[i].rows() > blocks_[i - 1].rows())
          throw InvalidArgument("imbalance violated: N_" + std::to_string(blocks_[i].t) + " > N_" +
                                std::to_string(blocks_[i - 1].t));
    }
  }

  const std::vector<FidelityBlock>& blocks() const { return blocks_; }
  int highest() const { return blocks_.empty() ? 0 : blocks_.back().t; }
  Index dim() const { return blocks_.empty() ? 0 : blocks_.front().dim(); }
  std::size_t levels() const { return blocks_.size(); }

  const FidelityBlock& block(int t) const {
    for (const auto& b : blocks_)
      if (b.t == t) return b;
    throw InvalidArgument("no fidelity block with index " + std::to_string(t));
  }

 private:
  std::vector<FidelityBlock> blocks_;
};

/// Probabilities strictly inside (0, 1) in strictly increasing order.
class QuantileLevels {
 public:
  QuantileLevels() : levels_{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9} {}
  QuantileLevels(std::initializer_list<double> levels) : QuantileLevels(std::vector<double>(levels)) {}
  explicit QuantileLevels(std::vector<double> levels) : levels_(std::move(levels)) {
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!(levels_[i] > 0.0 && levels_[i] < 1.0))
        throw InvalidArgument("quantile level outside (0,1): " + std::to_string(levels_[i]));
      if (i > 0 && levels_[i] <= levels_[i - 1])
        throw InvalidArgument("quantile levels must be strictly increasing");
    }
  }

  const std::vector<double>& values() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }
  bool operator==(const QuantileLevels&) const = default;

 private:
  std::vector<double> levels_;
};

/// Per-query predictive mean, variance and quantiles (one row per query,
/// one quantile column per level).
struct PredictiveSummary {
  Vector mean;
  Vector variance;
  Matrix quantiles;

  Index size() const { return mean.size(); }

  /// Clamp negative variances to zero and sort each query's quantiles
  /// ascending. Returns the number of clamped variances.
  std::size_t enforce_invariants() {
    std::size_t clamped = 0;
    for (Index i = 0; i < variance.size(); ++i) {
      if (variance[i] < 0.0 || std::isnan(variance[i])) {
        variance[i] = 0.0;
        ++clamped;
      }
    }
    for (Index i = 0; i < quantiles.rows(); ++i) {
      Vector row = quantiles.row(i).transpose();
      std::sort(row.begin(), row.end());
      quantiles.row(i) = row.transpose();
    }
    return clamped;
  }

  bool quantiles_monotone() const {
    for (Index i = 0; i < quantiles.rows(); ++i)
      for (Index j = 1; j < quantiles.cols(); ++j)
        if (quantiles(i, j) < quantiles(i, j - 1)) return false;
    return true;
  }
};

/// Affine per-column standardization of inputs and output.
class Standardizer {
 public:
  Standardizer() = default;

  static Standardizer fit(const Matrix& X, const Vector& y) {
    if (X.rows() < 1 || y.size() < 1) throw InvalidArgument("standardizer needs at least one row");
    Standardizer s;
    s.in_shift_.resize(X.cols());
    s.in_scale_.resize(X.cols());
    s.in_degenerate_.assign(static_cast<std::size_t>(X.cols()), false);
    for (Index j = 0; j < X.cols(); ++j) {
      auto [shift, scale, degenerate] = moments(X.col(j));
      s.in_shift_[j] = shift;
      s.in_scale_[j] = scale;
      s.in_degenerate_[static_cast<std::size_t>(j)] = degenerate;
    }
    const Moments out = moments(y);
    s.out_shift_ = out.shift;
    s.out_scale_ = out.scale;
    return s;
  }

  Matrix apply_inputs(const Matrix& X) const {
    check_cols(X);
    Matrix Z(X.rows(), X.cols());
    for (Index j = 0; j < X.cols(); ++j)
      Z.col(j) = (X.col(j).array() - in_shift_[j]) / in_scale_[j];
    return Z;
  }
  Matrix invert_inputs(const Matrix& Z) const {
    check_cols(Z);
    Matrix X(Z.rows(), Z.cols());
    for (Index j = 0; j < Z.cols(); ++j) X.col(j) = Z.col(j).array() * in_scale_[j] + in_shift_[j];
    return X;
  }
  Vector apply_output(const Vector& y) const { return (y.array() - out_shift_) / out_scale_; }
  Vector invert_output(const Vector& z) const { return z.array() * out_scale_ + out_shift_; }
  /// Maps a variance in standardized output units back to original units.
  Vector invert_variance(const Vector& v) const { return v.array() * (out_scale_ * out_scale_); }

  const Vector& input_shift() const { return in_shift_; }
  const Vector& input_scale() const { return in_scale_; }
  double output_shift() const { return out_shift_; }
  double output_scale() const { return out_scale_; }

  /// True when column j had zero spread in the fitting data.
  bool degenerate_input(Index j) const { return in_degenerate_.at(static_cast<std::size_t>(j)); }

 private:
  // Population mean and std; zero-variance data keeps scale 1.
  struct Moments {
    double shift;
    double scale;
    bool degenerate;
  };
  static Moments moments(const Eigen::Ref<const Vector>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = v.sum() / n;
    const double var = (v.array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return {mean, 1.0, true};
    return {mean, sd, false};
  }

  void check_cols(const Matrix& X) const {
    if (X.cols() != in_shift_.size())
      throw InvalidArgument("standardizer fitted on " + std::to_string(in_shift_.size()) +
                            " columns, got " + std::to_string(X.cols()));
  }

  Vector in_shift_, in_scale_;
  std::vector<bool> in_degenerate_;
  double out_shift_ = 0.0;
  double out_scale_ = 1.0;
};

/// Design matrix with the fidelity index appended as the last column.
struct TokenizedBlock {
  Matrix X;  // rows x (d + 1)
  Vector y;
};

/// Appends a constant fidelity-token column holding t.
inline Matrix append_token(const Matrix& X, int t) {
  Matrix out(X.rows(), X.cols() + 1);
  out.leftCols(X.cols()) = X;
  out.col(X.cols()).setConstant(static_cast<double>(t));
  return out;
}

/// Stacks every block below the highest fidelity into one LF context and
/// returns it together with the HF block, both carrying the fidelity token.
inline std::pair<TokenizedBlock, TokenizedBlock> aggregate_bilevel(const MultiFidelityDataset& data) {
  if (data.levels() < 2) throw InvalidArgument("need at least two fidelities");
  const auto& blocks = data.blocks();
  Index lf_rows = 0;
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) lf_rows += blocks[i].rows();

  TokenizedBlock lf{Matrix(lf_rows, data.dim() + 1), Vector(lf_rows)};
  Index offset = 0;
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) {
    const auto& b = blocks[i];
    lf.X.middleRows(offset, b.rows()) = append_token(b.X, b.t);
    lf.y.segment(offset, b.rows()) = b.y;
    offset += b.rows();
  }
  const auto& top = blocks.back();
  TokenizedBlock hf{append_token(top.X, top.t), top.y};
  return {std::move(lf), std::move(hf)};
}

}  // namespace firemf
