#pragma once

// Projected L-BFGS for smooth objectives under simple box constraints.
// Used for GP hyperparameter search in log space.

#include "firemf/core.hpp"

#include <deque>

namespace firemf {

struct BoxMinimizerOptions {
  int max_iterations = 40;
  int memory = 8;
  double projected_gradient_tol = 1e-6;  // scaled by max(1, |f|)
  double relative_f_tol = 1e-10;
  int max_line_search_steps = 25;
};

struct BoxMinimizerResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes `objective(x, grad) -> f` over lo <= x <= hi. The objective
/// may return a non-finite value to reject a point; the line search then
/// backtracks.
template <class Objective>
BoxMinimizerResult minimize_box(Objective&& objective, Vector x0, const Vector& lo, const Vector& hi,
                                const BoxMinimizerOptions& opts = {}) {
  const Index n = x0.size();
  auto clamp = [&](Vector v) {
    for (Index i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
    return v;
  };
  auto projected = [&](const Vector& x, const Vector& g) {
    Vector pg = g;
    for (Index i = 0; i < n; ++i)
      if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
    return pg;
  };

  BoxMinimizerResult res;
  res.x = clamp(std::move(x0));
  Vector g(n);
  res.f = objective(res.x, g);
  ++res.evaluations;
  if (!std::isfinite(res.f)) return res;

  std::deque<std::pair<Vector, Vector>> history;  // (s, y) pairs
  int stalls = 0;
  for (; res.iterations < opts.max_iterations; ++res.iterations) {
    const Vector pg = projected(res.x, g);
    if (n == 0 || pg.lpNorm<Eigen::Infinity>() < opts.projected_gradient_tol * std::max(1.0, std::abs(res.f))) {
      res.converged = true;
      break;
    }

    // Two-loop recursion restricted to the free variables.
    Vector q = pg;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& [s, y] = history[k];
      alpha[k] = s.dot(q) / y.dot(s);
      q -= alpha[k] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& [s, y] = history[k];
      const double beta = y.dot(q) / y.dot(s);
      q += (alpha[k] - beta) * s;
    }
    Vector d = -q;
    for (Index i = 0; i < n; ++i)
      if (pg[i] == 0.0) d[i] = 0.0;
    if (!(d.dot(pg) < 0.0)) {
      d = -pg;
      history.clear();
    }

    double step = history.empty() ? std::min(1.0, 1.0 / std::max(1e-12, pg.lpNorm<Eigen::Infinity>())) : 1.0;
    Vector x_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < opts.max_line_search_steps; ++ls) {
      x_new = clamp(res.x + step * d);
      f_new = objective(x_new, g_new);
      ++res.evaluations;
      const double slope = g.dot(x_new - res.x);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * slope) {
        accepted = true;
        break;
      }
      // Backtrack to the minimizer of the quadratic through f(0), f'(0) and
      // f(step), kept within [0.1, 0.5] of the current step.
      double next = 0.5;
      if (std::isfinite(f_new) && slope < 0.0) {
        const double curvature = f_new - res.f - slope;
        if (curvature > 0.0) next = std::clamp(-slope / (2.0 * curvature), 0.1, 0.5);
      } else if (!std::isfinite(f_new)) {
        next = 0.1;
      }
      step *= next;
    }
    if (!accepted) {
      if (history.empty()) break;
      history.clear();
      continue;
    }

    Vector s = x_new - res.x;
    Vector yv = g_new - g;
    if (s.dot(yv) > 1e-12 * std::max(1.0, yv.squaredNorm())) {
      history.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
    }
    const double change = std::abs(res.f - f_new) / std::max({1.0, std::abs(res.f), std::abs(f_new)});
    res.x = std::move(x_new);
    res.f = f_new;
    g = g_new;
    if (change < opts.relative_f_tol) {
      if (++stalls >= 2) {
        res.converged = true;
        ++res.iterations;
        break;
      }
    } else {
      stalls = 0;
    }
  }
  return res;
}

}  // namespace firemf
