#pragma once

// Benchmark problem catalog: MF2-style two-fidelity test functions, the
// Emukit three-fidelity Branin and Hartmann variants, the high-dimensional
// suite, heteroscedastic single-fidelity problems recast as two fidelities,
// and the Concrete low-fidelity power law.

#include "firemf/core.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace firemf {

/// Evaluates f^(t)(x) for fidelity t in 1..T (T is the most accurate).
using Evaluator = std::function<double(const Vector& x, int t)>;

struct ProblemSpec {
  std::string name;
  Index d = 1;
  int T = 2;
  Vector lower, upper;
  Evaluator f;
  /// Per-query noise standard deviation applied to fidelity T observations
  /// (heteroscedastic problems only).
  std::function<double(const Vector& x)> hf_noise_sd;
  /// Default sizes of fidelities 1..T-1.
  std::vector<Index> lf_sizes;
  /// N_T = round(ratio * hf_base).
  Index hf_base = 200;
  std::string source;

  double operator()(const Vector& x, int t) const {
    if (x.size() != d) throw InvalidArgument(name + ": expected " + std::to_string(d) + " inputs");
    if (t < 1 || t > T) throw InvalidArgument(name + ": fidelity must be in 1.." + std::to_string(T));
    return f(x, t);
  }
};

namespace bench {

inline constexpr double kPi = 3.14159265358979323846;

// ---- Forrester, d = 1, x in [0, 1]
inline double forrester_hf(const Vector& x) {
  const double v = x[0];
  return (6 * v - 2) * (6 * v - 2) * std::sin(12 * v - 4);
}
inline double forrester_lf(const Vector& x) { return 0.5 * forrester_hf(x) + 10 * (x[0] - 0.5) - 5; }

// ---- Bohachevsky, x in [-5, 5]^2
inline double bohachevsky_hf(double x1, double x2) {
  return x1 * x1 + 2 * x2 * x2 - 0.3 * std::cos(3 * kPi * x1) - 0.4 * std::cos(4 * kPi * x2) + 0.7;
}
inline double bohachevsky_lf(double x1, double x2) {
  return bohachevsky_hf(0.7 * x1, x2) + x1 * x2 - 12;
}

// ---- Booth, x in [-10, 10]^2
inline double booth_hf(double x1, double x2) {
  return (x1 + 2 * x2 - 7) * (x1 + 2 * x2 - 7) + (2 * x1 + x2 - 5) * (2 * x1 + x2 - 5);
}
inline double booth_lf(double x1, double x2) { return booth_hf(0.4 * x1, x2) + 1.7 * x1 * x2 - x1 + 2 * x2; }

// ---- Branin (MF2 variant), x1 in [-5, 10], x2 in [0, 15]
inline double branin_base(double x1, double x2) {
  const double a = x2 - 5.1 * x1 * x1 / (4 * kPi * kPi) + 5 * x1 / kPi - 6;
  return a * a + 10 * (1 - 1 / (8 * kPi)) * std::cos(x1) + 10;
}
inline double branin_hf(double x1, double x2) { return branin_base(x1, x2) - 22.5 * x2; }
inline double branin_lf(double x1, double x2) {
  return branin_base(0.7 * x1, 0.7 * x2) - 15.75 * x2 + 20 * (0.9 + x1) * (0.9 + x1) - 50;
}

// ---- Currin, x in [0, 1]^2
inline double currin_hf(double x1, double x2) {
  const double f1 = x2 <= 1e-8 ? 1.0 : 1 - std::exp(-1 / (2 * x2));
  const double num = 2300 * x1 * x1 * x1 + 1900 * x1 * x1 + 2092 * x1 + 60;
  const double den = 100 * x1 * x1 * x1 + 500 * x1 * x1 + 4 * x1 + 20;
  return f1 * num / den;
}
inline double currin_lf(double x1, double x2) {
  const double up = x2 + 0.05, dn = std::max(x2 - 0.05, 0.0);
  return (currin_hf(x1 + 0.05, up) + currin_hf(x1 + 0.05, dn) + currin_hf(x1 - 0.05, up) +
          currin_hf(x1 - 0.05, dn)) /
         4;
}

// ---- Borehole, inputs (rw, r, Tu, Hu, Tl, Hl, L, Kw)
inline double borehole(const Vector& x, double numerator_const, double denominator_const) {
  const double rw = x[0], r = x[1], Tu = x[2], Hu = x[3], Tl = x[4], Hl = x[5], L = x[6], Kw = x[7];
  const double lr = std::log(r / rw);
  const double num = numerator_const * Tu * (Hu - Hl);
  const double den = lr * (denominator_const + 2 * L * Tu / (lr * rw * rw * Kw) + Tu / Tl);
  return num / den;
}

// ---- Hartmann 6-D (MF2 scaling), x in [0.1, 1]^6
// The low fidelity replaces exp(v) by its degree-9 expansion around -4.
inline double hartmann6(const Vector& x, const std::array<double, 4>& alpha, bool approx_exp) {
  static const double A[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                 {0.05, 10, 17, 0.1, 8, 14},
                                 {3, 3.5, 1.7, 10, 17, 8},
                                 {17, 8, 0.05, 10, 0.1, 14}};
  static const double P[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                 {2329, 4135, 8307, 3736, 1004, 9991},
                                 {2348, 1451, 3522, 2883, 3047, 6650},
                                 {4047, 8828, 8732, 5743, 1091, 381}};
  double s = 0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0;
    for (int j = 0; j < 6; ++j) {
      const double diff = x[j] - 1e-4 * P[i][j];
      inner += A[i][j] * diff * diff;
    }
    const double e = approx_exp ? std::pow(std::exp(-4.0 / 9) * (1 + (4 - inner) / 9), 9) : std::exp(-inner);
    s += alpha[static_cast<std::size_t>(i)] * e;
  }
  return -(2.58 + s) / 1.94;
}

// ---- Himmelblau, x in [-4, 4]^2
inline double himmelblau_hf(double x1, double x2) {
  const double a = x1 * x1 + x2 - 11, b = x1 + x2 * x2 - 7;
  return a * a + b * b;
}
inline double himmelblau_lf(double x1, double x2) {
  return himmelblau_hf(0.5 * x1, 0.8 * x2) + x2 * x2 * x2 - (x1 + 1) * (x1 + 1);
}

// ---- Park (1991) functions, x in [0, 1]^4
inline double park91a_hf(const Vector& x) {
  const double x1 = x[0] == 0.0 ? 1e-9 : x[0];
  const double x2 = x[1], x3 = x[2], x4 = x[3];
  const double t1 = x1 / 2 * (std::sqrt(1 + (x2 + x3 * x3) * x4 / (x1 * x1)) - 1);
  const double t2 = (x1 + 3 * x4) * std::exp(1 + std::sin(x3));
  return t1 + t2;
}
inline double park91a_lf(const Vector& x) {
  return (1 + std::sin(x[0]) / 10) * park91a_hf(x) - 2 * x[0] + x[1] * x[1] + x[2] * x[2] + 0.5;
}
inline double park91b_hf(const Vector& x) {
  return 2.0 / 3.0 * std::exp(x[0] + x[1]) - x[3] * std::sin(x[2]) + x[2];
}
inline double park91b_lf(const Vector& x) { return 1.2 * park91b_hf(x) - 1; }

// ---- Six-hump camelback, x in [-2, 2]^2
inline double camelback_hf(double x1, double x2) {
  const double x1s = x1 * x1, x2s = x2 * x2;
  return 4 * x1s - 2.1 * x1s * x1s + x1s * x1s * x1s / 3 + x1 * x2 - 4 * x2s + 4 * x2s * x2s;
}
inline double camelback_lf(double x1, double x2) { return camelback_hf(0.7 * x1, 0.7 * x2) + x1 * x2 - 15; }

// ---- Emukit three-fidelity Branin, x1 in [-5, 10], x2 in [0, 15]; all
// levels are scaled by 1/100.
inline double branin3f_high(double x1, double x2) { return branin_base(x1, x2) / 100; }
inline double branin3f_medium(double x1, double x2) {
  return (10 * std::sqrt(branin_base(x1 - 2, x2 - 2)) + 2 * (x1 - 0.5) - 3 * (3 * x2 - 1) - 1) / 100;
}
inline double branin3f_low(double x1, double x2) {
  return (100 * branin3f_medium(1.2 * (x1 + 2), 1.2 * (x2 + 2)) - 3 * x2 + 1) / 100;
}

// ---- Emukit three-fidelity Hartmann 3-D, x in [0, 1]^3
inline double hartmann3f(const Vector& x, int t) {
  static const double A[4][3] = {{3, 10, 30}, {0.1, 10, 35}, {3, 10, 30}, {0.1, 10, 35}};
  static const double P[4][3] = {{3689, 1170, 2673}, {4699, 4387, 7470}, {1091, 8732, 5547}, {381, 5743, 8828}};
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double delta[4] = {0.01, -0.01, -0.1, 0.1};
  double s = 0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0;
    for (int j = 0; j < 3; ++j) {
      const double diff = x[j] - 1e-4 * P[i][j];
      inner += A[i][j] * diff * diff;
    }
    s += (alpha[i] + (3 - t) * delta[i]) * std::exp(-inner);
  }
  return s;
}

// ---- Heteroscedastic problems on [0, 1]: mean and noise standard deviation
inline double goldberg_mean(double x) { return 2 * std::sin(2 * kPi * x); }
inline double goldberg_sd(double x) { return 0.5 + x; }
inline double yuan_mean(double x) {
  return 2 * (std::exp(-30 * (x - 0.25) * (x - 0.25)) + std::sin(kPi * x * x)) - 2;
}
inline double yuan_sd(double x) { return std::exp(std::sin(2 * kPi * x)); }
inline double williams_mean(double x) { return std::sin(2.5 * x) * std::sin(1.5 * x); }
inline double williams_sd(double x) {
  const double a = 1 - std::sin(2.5 * x);
  return 0.01 + 0.25 * a * a;
}

}  // namespace bench

/// High-dimensional suite: f_HF = sum_{i>=2} (2 x_i^2 - x_{i-1})^2 + (x_1 - 1)^2,
/// f_LF = 0.8 f_HF + sum_{i>=2} 0.4 x_{i-1} x_i - 50.
inline double eval_hd(const Vector& x, Index d, int t) {
  if (d != 10 && d != 20 && d != 30 && d != 40 && d != 50)
    throw InvalidArgument("hd: dimension must be one of 10, 20, 30, 40, 50");
  if (x.size() != d) throw InvalidArgument("hd: expected " + std::to_string(d) + " inputs");
  if (t != 1 && t != 2) throw InvalidArgument("hd: fidelity must be 1 or 2");
  double hf = (x[0] - 1) * (x[0] - 1);
  double cross = 0;
  for (Index i = 1; i < d; ++i) {
    const double a = 2 * x[i] * x[i] - x[i - 1];
    hf += a * a;
    cross += 0.4 * x[i - 1] * x[i];
  }
  return t == 2 ? hf : 0.8 * hf + cross - 50;
}

/// Concrete low-fidelity strength. Inputs follow the UCI column order
/// (cement, slag, fly ash, water, superplasticizer, coarse, fine, age).
/// Slag, fly ash and superplasticizer enter as (v + 1) since the data
/// contain zeros.
inline double concrete_lf(const Vector& x) {
  if (x.size() != 8) throw InvalidArgument("concrete: expected 8 mix-design features");
  const double cement = x[0], slag = x[1], fly = x[2], water = x[3], sp = x[4], age = x[7];
  if (!(cement > 0) || !(water > 0) || !(age > 0))
    throw InvalidArgument("concrete: cement, water and age must be positive");
  if (slag < 0 || fly < 0 || sp < 0) throw InvalidArgument("concrete: slag, fly ash and superplasticizer must be >= 0");
  constexpr double b0 = 2.56, b1 = -0.815, b2 = -0.0380, b3 = 0.0161, b4 = 0.00231, b5 = 0.0148, b6 = 0.292;
  return std::exp(b0 + b1 * std::log(water / cement) + b2 * std::log(cement) + b3 * std::log(slag + 1) +
                  b4 * std::log(fly + 1) + b5 * std::log(sp + 1) + b6 * std::log(age));
}

struct HeteroscedasticSample {
  double y_hf;
  double y_lf;
};

/// Draws (y_HF, y_LF) at x: LF is the noiseless mean, HF adds N(0, sd(x)^2).
inline HeteroscedasticSample gen_heteroscedastic(const std::string& name, double x, std::mt19937_64& rng) {
  double mu, sd;
  if (name == "goldberg") {
    mu = bench::goldberg_mean(x);
    sd = bench::goldberg_sd(x);
  } else if (name == "yuan") {
    mu = bench::yuan_mean(x);
    sd = bench::yuan_sd(x);
  } else if (name == "williams") {
    mu = bench::williams_mean(x);
    sd = bench::williams_sd(x);
  } else {
    throw InvalidArgument("unknown heteroscedastic generator '" + name + "' (expected goldberg | yuan | williams)");
  }
  std::normal_distribution<double> normal;
  return {mu + sd * normal(rng), mu};
}

namespace detail {

inline ProblemSpec make_problem(std::string name, Index d, int T, Vector lower, Vector upper, Evaluator f,
                                std::vector<Index> lf_sizes, Index hf_base, std::string source) {
  ProblemSpec p;
  p.name = std::move(name);
  p.d = d;
  p.T = T;
  p.lower = std::move(lower);
  p.upper = std::move(upper);
  p.f = std::move(f);
  p.lf_sizes = std::move(lf_sizes);
  p.hf_base = hf_base;
  p.source = std::move(source);
  return p;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline ProblemSpec two_fidelity(std::string name, Vector lo, Vector hi, std::function<double(const Vector&)> hf,
                                std::function<double(const Vector&)> lf, std::string source = "mf2") {
  const Index d = lo.size();
  const Index n_lf = d < 10 ? 200 : 2000;
  return make_problem(
      std::move(name), d, 2, std::move(lo), std::move(hi),
      [hf, lf](const Vector& x, int t) { return t == 2 ? hf(x) : lf(x); }, {n_lf}, n_lf, std::move(source));
}

inline ProblemSpec heteroscedastic_problem(const std::string& name, double (*mean)(double), double (*sd)(double)) {
  auto p = make_problem(
      name, 1, 2, vec({0.0}), vec({1.0}), [mean](const Vector& x, int) { return mean(x[0]); }, {200}, 200,
      "heteroscedastic");
  p.hf_noise_sd = [sd](const Vector& x) { return sd(x[0]); };
  return p;
}

inline std::vector<ProblemSpec> build_catalog() {
  using namespace bench;
  std::vector<ProblemSpec> c;
  auto xy = [](auto fn) { return [fn](const Vector& x) { return fn(x[0], x[1]); }; };

  c.push_back(two_fidelity("bohachevsky", vec({-5, -5}), vec({5, 5}), xy(bohachevsky_hf), xy(bohachevsky_lf)));
  c.push_back(two_fidelity("booth", vec({-10, -10}), vec({10, 10}), xy(booth_hf), xy(booth_lf)));
  c.push_back(two_fidelity(
      "borehole", vec({0.05, 100, 63070, 990, 63.1, 700, 1120, 9855}),
      vec({0.15, 50000, 115600, 1110, 116, 820, 1680, 12045}),
      [](const Vector& x) { return borehole(x, 2 * kPi, 1.0); }, [](const Vector& x) { return borehole(x, 5.0, 1.5); }));
  c.push_back(two_fidelity("branin", vec({-5, 0}), vec({10, 15}), xy(branin_hf), xy(branin_lf)));
  c.push_back(two_fidelity("currin", vec({0, 0}), vec({1, 1}), xy(currin_hf), xy(currin_lf)));
  c.push_back(two_fidelity("forrester", vec({0}), vec({1}), forrester_hf, forrester_lf));
  c.push_back(two_fidelity(
      "hartmann6", Vector::Constant(6, 0.1), Vector::Ones(6),
      [](const Vector& x) { return hartmann6(x, {1.0, 1.2, 3.0, 3.2}, false); },
      [](const Vector& x) { return hartmann6(x, {0.5, 0.5, 2.0, 4.0}, true); }));
  c.push_back(two_fidelity("himmelblau", vec({-4, -4}), vec({4, 4}), xy(himmelblau_hf), xy(himmelblau_lf)));
  c.push_back(two_fidelity("park91a", vec({1e-8, 0, 0, 0}), Vector::Ones(4), park91a_hf, park91a_lf));
  c.push_back(two_fidelity("park91b", Vector::Zero(4), Vector::Ones(4), park91b_hf, park91b_lf));
  c.push_back(two_fidelity("six_hump_camelback", vec({-2, -2}), vec({2, 2}), xy(camelback_hf), xy(camelback_lf)));

  for (Index d : {10, 20, 30, 40, 50}) {
    c.push_back(make_problem(
        "hd" + std::to_string(d), d, 2, Vector::Constant(d, -3.0), Vector::Constant(d, 3.0),
        [d](const Vector& x, int t) { return eval_hd(x, d, t); }, {2000}, 2000, "hd"));
  }

  c.push_back(make_problem(
      "branin3f", 2, 3, vec({-5, 0}), vec({10, 15}),
      [](const Vector& x, int t) {
        if (t == 3) return branin3f_high(x[0], x[1]);
        if (t == 2) return branin3f_medium(x[0], x[1]);
        return branin3f_low(x[0], x[1]);
      },
      {200, 50}, 2000, "emukit"));
  c.push_back(make_problem(
      "hartmann3f", 3, 3, Vector::Zero(3), Vector::Ones(3), [](const Vector& x, int t) { return hartmann3f(x, t); },
      {200, 50}, 2000, "emukit"));

  c.push_back(heteroscedastic_problem("goldberg", goldberg_mean, goldberg_sd));
  c.push_back(heteroscedastic_problem("yuan", yuan_mean, yuan_sd));
  c.push_back(heteroscedastic_problem("williams", williams_mean, williams_sd));
  return c;
}

}  // namespace detail

inline const std::vector<ProblemSpec>& problem_catalog() {
  static const std::vector<ProblemSpec> catalog = detail::build_catalog();
  return catalog;
}

inline const ProblemSpec& find_problem(const std::string& name) {
  for (const auto& p : problem_catalog())
    if (p.name == name) return p;
  std::string names;
  for (const auto& p : problem_catalog()) names += (names.empty() ? "" : ", ") + p.name;
  throw InvalidArgument("unknown problem '" + name + "'; catalog: " + names);
}

inline double eval_catalog(const std::string& name, const Vector& x, int t) { return find_problem(name)(x, t); }

}  // namespace firemf
