#pragma once

// Run configuration, read from a JSON document:
//
//   {
//     "problems":   ["forrester", "data/pool.csv"],
//     "algorithms": ["fire", "ar1", {"name": "fire_tfm", "kind": "fire", "backend": {"base": "external"}}],
//     "ratios": [5, 10, 25], "folds": 5, "trials": 10, "nested": false, "seed": 0,
//     "output": "results/run1",
//     "workers": 1,
//     "gp": {"restarts": 5, "iterations": 200, "kernel": "matern52", "ard": true},
//     "sidecar": {"path": "/usr/local/bin/tfm-sidecar", "args": [], "timeout_seconds": 300}
//   }
//
// Every key except "problems", "algorithms" and "output" is optional.

#include "firemf/core.hpp"
#include "firemf/gp.hpp"
#include "firemf/sampling.hpp"
#include "firemf/sidecar.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace firemf::runner {

enum class Backend { Gp, External };

inline Backend backend_from_string(const std::string& s) {
  if (s == "gp") return Backend::Gp;
  if (s == "external") return Backend::External;
  throw InvalidArgument("unknown backend '" + s + "' (expected gp | external)");
}

inline std::string to_string(Backend b) { return b == Backend::Gp ? "gp" : "external"; }

inline const std::vector<std::string>& algorithm_kinds() {
  static const std::vector<std::string> kinds{"fire",  "fire_mv", "fire_mean", "fire_none", "fire_recursive",
                                              "ar1",   "resgp",   "nargp"};
  return kinds;
}

struct AlgorithmConfig {
  std::string name;  // label in results
  std::string kind;  // one of algorithm_kinds()
  Backend base_backend = Backend::Gp;
  Backend residual_backend = Backend::Gp;
  bool nargp_monte_carlo = false;
  int nargp_samples = 100;
  std::optional<SidecarOptions> sidecar;  // overrides the run-level sidecar
};

struct RunConfig {
  std::vector<std::string> problems;
  std::vector<AlgorithmConfig> algorithms;
  std::vector<double> ratios{5};
  int folds = 5;
  int trials = 10;
  bool nested = false;
  std::uint64_t seed = 0;
  bool allow_custom_ratios = false;
  std::optional<Index> n_lf;
  std::string output;
  int workers = 1;
  GpOptions gp;
  /// Reuse hyperparameter searches between algorithms of one cell when they
  /// fit a GP to identical data (the lowest-fidelity stage, typically).
  bool share_hyperparameters = true;
  SidecarOptions sidecar;
  nlohmann::json source;  // normalized document, used for the config hash
};

inline bool is_csv_problem(const std::string& p) {
  return p.size() > 4 && p.compare(p.size() - 4, 4, ".csv") == 0;
}

namespace detail {

inline SidecarOptions parse_sidecar(const nlohmann::json& j, SidecarOptions base = {}) {
  if (!j.is_object()) throw InvalidArgument("config: 'sidecar' must be an object");
  if (j.contains("path")) base.path = j["path"].get<std::string>();
  if (j.contains("args")) base.args = j["args"].get<std::vector<std::string>>();
  if (j.contains("timeout_seconds")) base.timeout_seconds = j["timeout_seconds"].get<double>();
  if (!(base.timeout_seconds > 0)) throw InvalidArgument("config: sidecar timeout_seconds must be positive");
  return base;
}

inline AlgorithmConfig parse_algorithm(const nlohmann::json& j) {
  AlgorithmConfig a;
  if (j.is_string()) {
    a.name = a.kind = j.get<std::string>();
  } else if (j.is_object()) {
    a.kind = j.at("kind").get<std::string>();
    a.name = j.value("name", a.kind);
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      if (b.is_string()) {
        a.base_backend = a.residual_backend = backend_from_string(b.get<std::string>());
      } else if (b.is_object()) {
        for (const auto& [k, v] : b.items())
          if (k != "base" && k != "residual") throw InvalidArgument("config: backend stage must be base or residual");
        if (b.contains("base")) a.base_backend = backend_from_string(b["base"].get<std::string>());
        if (b.contains("residual")) a.residual_backend = backend_from_string(b["residual"].get<std::string>());
      } else {
        throw InvalidArgument("config: 'backend' must be a string or an object");
      }
    }
    a.nargp_monte_carlo = j.value("monte_carlo", false);
    a.nargp_samples = j.value("samples", 100);
    if (a.nargp_samples < 1) throw InvalidArgument("config: nargp samples must be >= 1");
    if (j.contains("sidecar")) a.sidecar = parse_sidecar(j["sidecar"]);
  } else {
    throw InvalidArgument("config: algorithm entries must be names or objects");
  }
  const auto& kinds = algorithm_kinds();
  if (std::find(kinds.begin(), kinds.end(), a.kind) == kinds.end()) {
    std::string valid;
    for (const auto& k : kinds) valid += (valid.empty() ? "" : ", ") + k;
    throw InvalidArgument("config: unknown algorithm '" + a.kind + "'; valid: " + valid);
  }
  return a;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  static const std::set<std::string> known{"problems", "algorithms", "ratios", "folds",  "trials",
                                           "nested",   "seed",       "allow_custom_ratios", "n_lf",
                                           "output",   "workers",    "gp",     "sidecar", "share_hyperparameters"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw InvalidArgument("config: unknown key '" + k + "'");

  RunConfig c;
  try {
    c.problems = j.at("problems").get<std::vector<std::string>>();
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(detail::parse_algorithm(a));
    c.output = j.at("output").get<std::string>();
    if (j.contains("ratios")) c.ratios = j["ratios"].get<std::vector<double>>();
    c.folds = j.value("folds", 5);
    c.trials = j.value("trials", 10);
    c.nested = j.value("nested", false);
    c.seed = j.value("seed", std::uint64_t{0});
    c.allow_custom_ratios = j.value("allow_custom_ratios", false);
    if (j.contains("n_lf") && !j["n_lf"].is_null()) c.n_lf = j["n_lf"].get<Index>();
    c.workers = j.value("workers", 1);
    c.share_hyperparameters = j.value("share_hyperparameters", true);
    if (j.contains("gp")) {
      const auto& g = j["gp"];
      c.gp.restarts = g.value("restarts", c.gp.restarts);
      c.gp.iterations = g.value("iterations", c.gp.iterations);
      c.gp.kernel.ard = g.value("ard", c.gp.kernel.ard);
      if (g.contains("kernel")) c.gp.kernel.family = kernel_family_from_string(g["kernel"].get<std::string>());
    }
    if (j.contains("sidecar")) c.sidecar = detail::parse_sidecar(j["sidecar"]);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }

  if (c.problems.empty()) throw InvalidArgument("config: 'problems' is empty");
  if (c.algorithms.empty()) throw InvalidArgument("config: 'algorithms' is empty");
  std::set<std::string> names;
  for (const auto& a : c.algorithms)
    if (!names.insert(a.name).second) throw InvalidArgument("config: duplicate algorithm name '" + a.name + "'");
  if (c.folds < 1) throw InvalidArgument("config: folds must be >= 1");
  if (c.trials < 1) throw InvalidArgument("config: trials must be >= 1");
  if (c.workers < 1) throw InvalidArgument("config: workers must be >= 1");
  if (c.ratios.empty()) throw InvalidArgument("config: 'ratios' is empty");
  for (double r : c.ratios) {
    if (!(r > 0 && r <= 100)) throw InvalidArgument("config: ratio " + std::to_string(r) + " outside (0, 100]");
    const auto& std_r = standard_ratios();
    if (!c.allow_custom_ratios && std::find(std_r.begin(), std_r.end(), r) == std_r.end())
      throw InvalidArgument("config: ratio " + std::to_string(r) +
                            " is not one of 2, 4, 5, 10, 20, 25 (set allow_custom_ratios to use it)");
  }
  if (c.gp.restarts < 1 || c.gp.iterations < 1) throw InvalidArgument("config: gp restarts and iterations must be >= 1");

  // The hash covers everything that changes results; the output location
  // and worker count do not.
  c.source = j;
  c.source.erase("output");
  c.source.erase("workers");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

/// FNV-1a over bytes.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.source.dump())));
  return buf;
}

/// Seed of one grid cell; every algorithm in the cell receives it.
inline std::uint64_t cell_seed(std::uint64_t seed, const std::string& problem, double ratio, int fold, int trial) {
  char ratio_buf[32];
  std::snprintf(ratio_buf, sizeof ratio_buf, "%.17g", ratio);
  const std::string key = problem + '\x1f' + ratio_buf + '\x1f' + std::to_string(fold) + '\x1f' + std::to_string(trial);
  return derive_seed(seed, fnv1a(key));
}

}  // namespace firemf::runner
