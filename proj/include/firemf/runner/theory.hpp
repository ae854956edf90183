#pragma once

// Monte-Carlo checks of how the conditional risk of the high-fidelity
// residual depends on which low-fidelity summaries are conditioned on.

#include "firemf/oracle.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace firemf::runner {

struct TheoryComparison {
  std::string generator;
  std::string lhs, rhs;     // feature sets being compared
  OracleEstimate lhs_est, rhs_est;
  double stderr_ = 0;       // of the difference
  std::string criterion;    // human-readable pass rule
  bool passed = false;
};

struct TheoryReport {
  std::string name;
  Index samples = 0;
  std::uint64_t seed = 0;
  std::vector<TheoryComparison> comparisons;
  std::vector<std::pair<std::string, double>> correlations;  // hetero-coupling only
  bool passed = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"check", name}, {"samples", samples}, {"seed", seed}, {"passed", passed}};
    j["comparisons"] = nlohmann::json::array();
    for (const auto& c : comparisons)
      j["comparisons"].push_back({{"generator", c.generator},
                                  {"lhs", c.lhs},
                                  {"rhs", c.rhs},
                                  {"lhs_mse", c.lhs_est.mse},
                                  {"rhs_mse", c.rhs_est.mse},
                                  {"lhs_stderr", c.lhs_est.stderr_},
                                  {"rhs_stderr", c.rhs_est.stderr_},
                                  {"diff_stderr", c.stderr_},
                                  {"criterion", c.criterion},
                                  {"passed", c.passed}});
    j["correlations"] = nlohmann::json::object();
    for (const auto& [k, v] : correlations) j["correlations"][k] = v;
    return j;
  }
};

inline const std::vector<std::string>& theory_check_names() {
  static const std::vector<std::string> names{"risk-monotonicity", "quantile-risk", "hetero-coupling"};
  return names;
}

namespace detail {

enum class Rule { NotWorse, StrictlyBetter, Equal };

inline TheoryComparison compare(const std::string& gen_name, TheoryGenerator gen, Index n, std::uint64_t seed,
                                const std::string& lhs, const std::string& rhs, Rule rule) {
  const TheorySamples s = generate_theory_samples(gen, n, seed);
  auto features = [&](const std::string& which) {
    if (which == "aug") return s.z_aug();
    if (which == "mv") return s.z_mv();
    return s.z_mean();
  };
  const std::uint64_t split_seed = derive_seed(seed, 1);
  TheoryComparison c;
  c.generator = gen_name;
  c.lhs = lhs;
  c.rhs = rhs;
  c.lhs_est = oracle_conditional_mse(features(lhs), s.r, split_seed);
  c.rhs_est = oracle_conditional_mse(features(rhs), s.r, split_seed);
  c.stderr_ = combined_stderr(c.lhs_est, c.rhs_est);
  const double diff = c.lhs_est.mse - c.rhs_est.mse;
  switch (rule) {
    case Rule::NotWorse:
      c.criterion = "R(" + lhs + ") <= R(" + rhs + ") + 2 se";
      c.passed = diff <= 2 * c.stderr_;
      break;
    case Rule::StrictlyBetter:
      c.criterion = "R(" + lhs + ") < R(" + rhs + ") - 2 se";
      c.passed = diff < -2 * c.stderr_;
      break;
    case Rule::Equal:
      c.criterion = "|R(" + lhs + ") - R(" + rhs + ")| <= 2 se";
      c.passed = std::abs(diff) <= 2 * c.stderr_;
      break;
  }
  return c;
}

}  // namespace detail

inline TheoryReport theory_check(const std::string& name, Index samples, std::uint64_t seed) {
  if (samples < 10000) throw InvalidArgument("theory-check needs at least 10000 samples");
  TheoryReport rep;
  rep.name = name;
  rep.samples = samples;
  rep.seed = seed;
  using detail::Rule;
  if (name == "risk-monotonicity") {
    rep.comparisons.push_back(
        detail::compare("goldberg", TheoryGenerator::Goldberg, samples, derive_seed(seed, 10), "aug", "mean", Rule::NotWorse));
    rep.comparisons.push_back(detail::compare("variance-coupled", TheoryGenerator::VarianceCoupled, samples,
                                              derive_seed(seed, 11), "aug", "mean", Rule::StrictlyBetter));
    rep.comparisons.push_back(detail::compare("independent", TheoryGenerator::Independent, samples,
                                              derive_seed(seed, 12), "aug", "mean", Rule::Equal));
  } else if (name == "quantile-risk") {
    rep.comparisons.push_back(
        detail::compare("skewed", TheoryGenerator::Skewed, samples, derive_seed(seed, 20), "aug", "mv", Rule::StrictlyBetter));
  } else if (name == "hetero-coupling") {
    for (const char* p : {"goldberg", "yuan", "williams"})
      rep.correlations.emplace_back(p, heteroscedastic_coupling(p, samples, derive_seed(seed, 30)));
  } else {
    std::string valid;
    for (const auto& n : theory_check_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown theory check '" + name + "'; valid: " + valid);
  }
  rep.passed = true;
  for (const auto& c : rep.comparisons) rep.passed = rep.passed && c.passed;
  for (const auto& [p, r] : rep.correlations) rep.passed = rep.passed && r > 0;
  return rep;
}

}  // namespace firemf::runner
