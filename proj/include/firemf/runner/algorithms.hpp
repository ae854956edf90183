#pragma once

// Maps configured algorithm names to fit-and-predict calls.

#include "firemf/baselines.hpp"
#include "firemf/fire.hpp"
#include "firemf/gp.hpp"
#include "firemf/runner/config.hpp"
#include "firemf/sidecar.hpp"

#include <memory>

namespace firemf::runner {

struct AlgorithmPrediction {
  Vector mean;
  Vector variance;
};

inline SurrogateFactory stage_factory(Backend backend, const AlgorithmConfig& alg, const RunConfig& run,
                                      const std::shared_ptr<HyperparameterCache>& cache) {
  if (backend == Backend::External) return external_factory(alg.sidecar.value_or(run.sidecar));
  GpOptions opts = run.gp;
  opts.cache = cache;
  return gp_factory(opts);
}

/// Fits `alg` on `train` with the cell seed and predicts at `X_test`.
inline AlgorithmPrediction fit_predict(const AlgorithmConfig& alg, const RunConfig& run,
                                       const MultiFidelityDataset& train, const Matrix& X_test, std::uint64_t seed,
                                       const std::shared_ptr<HyperparameterCache>& cache = nullptr) {
  const SurrogateFactory base = stage_factory(alg.base_backend, alg, run, cache);
  const std::string& k = alg.kind;
  if (k.rfind("fire", 0) == 0) {
    const FireFactories factories{base, stage_factory(alg.residual_backend, alg, run, cache)};
    FireOptions opts;
    if (k == "fire_mv") opts.mode = AugmentationMode::MeanVariance;
    else if (k == "fire_mean") opts.mode = AugmentationMode::MeanOnly;
    else if (k == "fire_none") opts.mode = AugmentationMode::None;
    if (k == "fire_recursive") {
      const RecursivePrediction p = fire_fit_recursive(train, factories, opts, seed).predict(X_test);
      return {p.mean, p.variance};
    }
    const FirePrediction p = fire_fit(train, factories, opts, seed).predict(X_test);
    return {p.mean, p.variance};
  }
  // Baselines run every stage on the base backend.
  if (k == "ar1" || k == "resgp") {
    AutoregressiveChain chain = k == "ar1" ? make_ar1(base) : make_resgp(base);
    chain.fit(train, seed);
    const MeanVariance p = chain.predict(X_test);
    return {p.mean, p.variance};
  }
  if (k == "nargp") {
    Nargp model(base, NargpOptions{alg.nargp_monte_carlo, alg.nargp_samples});
    model.fit(train, seed);
    const MeanVariance p = model.predict(X_test);
    return {p.mean, p.variance};
  }
  throw InvalidArgument("unknown algorithm kind '" + k + "'");
}

}  // namespace firemf::runner
