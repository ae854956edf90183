#pragma once

// Executes the (problem x ratio x fold x trial) grid. Each cell builds one
// split from its cell seed, then fits every configured algorithm on that
// same split, so all algorithms see identical training and test arrays.

#include "firemf/benchmarks.hpp"
#include "firemf/csv.hpp"
#include "firemf/log.hpp"
#include "firemf/metrics.hpp"
#include "firemf/runner/algorithms.hpp"
#include "firemf/runner/config.hpp"
#include "firemf/runner/results.hpp"
#include "firemf/sampling.hpp"
#include "firemf/sidecar.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace firemf::runner {

struct RunOptions {
  bool resume = false;
  /// Stop after this many cells have been processed (testing aid for
  /// interrupted runs). Zero means no limit.
  std::size_t max_cells = 0;
};

struct RunSummary {
  std::size_t cells_total = 0;
  std::size_t records_written = 0;
  std::size_t records_skipped = 0;  // already present on resume
  std::size_t records_failed = 0;
};

struct GridCell {
  std::size_t problem;  // index into RunConfig::problems
  double ratio;
  int fold;
  int trial;
};

inline std::vector<GridCell> grid_cells(const RunConfig& c) {
  std::vector<GridCell> out;
  for (std::size_t p = 0; p < c.problems.size(); ++p)
    for (double r : c.ratios)
      for (int f = 0; f < c.folds; ++f)
        for (int t = 0; t < c.trials; ++t) out.push_back({p, r, f, t});
  return out;
}

/// Name of the most specific library error class, for failed-cell records.
inline std::string error_type_of(const std::exception& e) {
  if (dynamic_cast<const SidecarTimeout*>(&e)) return "SidecarTimeout";
  if (dynamic_cast<const SidecarExited*>(&e)) return "SidecarExited";
  if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
  if (dynamic_cast<const NotPositiveDefinite*>(&e)) return "NotPositiveDefinite";
  if (dynamic_cast<const SurrogateError*>(&e)) return "SurrogateError";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "std::exception";
}

/// Source of splits for one configured problem.
class ProblemSource {
 public:
  ProblemSource(const std::string& entry, const RunConfig& c) : entry_(entry) {
    if (is_csv_problem(entry)) {
      pool_ = load_mf_csv(entry);
      if (c.folds < 2) throw InvalidArgument("problem '" + entry + "': data pools need folds >= 2");
    } else {
      spec_ = &find_problem(entry);
    }
  }

  Split split(const RunConfig& c, const GridCell& cell, std::uint64_t seed) const {
    if (spec_) {
      SplitPlan plan;
      plan.ratio_percent = cell.ratio;
      plan.nested = c.nested;
      plan.seed = seed;
      plan.n_lf = c.n_lf;
      return make_splits(*spec_, plan);
    }
    PoolSplitPlan plan;
    plan.ratio_percent = cell.ratio;
    plan.nested = c.nested;
    plan.fold = cell.fold;
    plan.folds = c.folds;
    // One fold partition per trial, shared by every ratio and fold.
    plan.partition_seed = derive_seed(c.seed, fnv1a(entry_ + "\x1fpartition\x1f" + std::to_string(cell.trial)));
    plan.seed = seed;
    plan.n_lf = c.n_lf;
    return split_pool(*pool_, plan);
  }

 private:
  std::string entry_;
  const ProblemSpec* spec_ = nullptr;
  std::optional<MultiFidelityDataset> pool_;
};

namespace detail {

inline MetricRecord failed_record(MetricRecord r, const std::exception& e) {
  r.ok = false;
  r.error = e.what();
  r.error_type = error_type_of(e);
  r.nrmse = r.nll = r.r2 = std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline void score(MetricRecord& r, const Vector& y, const AlgorithmPrediction& p) {
  if (p.mean.size() != y.size() || p.variance.size() != y.size())
    throw SurrogateError("prediction length does not match the test set");
  if (!all_finite(p.mean) || !all_finite(p.variance)) throw SurrogateError("non-finite predictions");
  r.nrmse = nrmse(y, p.mean);
  r.nll = nll(y, p.mean, p.variance);
  r.r2 = r2(y, p.mean);
}

inline void prepare_output(const RunConfig& c, const RunOptions& opts) {
  namespace fs = std::filesystem;
  fs::create_directories(c.output);
  const std::string manifest = manifest_path(c.output);
  const std::string hash = config_hash(c);
  if (fs::exists(manifest)) {
    if (!opts.resume)
      throw InvalidArgument("output directory " + c.output + " already holds a run; pass --resume to continue it");
    std::ifstream in(manifest);
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("unreadable manifest " + manifest + ": " + e.what());
    }
    if (m.value("config_hash", "") != hash)
      throw InvalidArgument("config hash " + hash + " does not match the existing run (" + m.value("config_hash", "") +
                            "); refusing to mix results");
    return;
  }
  if (fs::exists(results_path(c.output)) && fs::file_size(results_path(c.output)) > 0)
    throw InvalidArgument("results file without manifest in " + c.output);
  nlohmann::json m{{"schema", kResultsSchema}, {"config_hash", hash}, {"config", c.source}};
  std::ofstream out(manifest);
  out << m.dump(2) << '\n';
  if (!out) throw Error("cannot write " + manifest);
}

}  // namespace detail

/// Runs every missing (cell, algorithm) pair and appends its record.
inline RunSummary run_experiment(const RunConfig& config, const RunOptions& opts = {}) {
  detail::prepare_output(config, opts);
  const std::string rpath = results_path(config.output);

  // Drop an interrupted trailing write before appending.
  LoadedResults existing = read_results_file(rpath);
  if (existing.truncated_tail) {
    warn("results: discarding an incomplete final line left by an interrupted run");
    std::filesystem::resize_file(rpath, existing.valid_bytes);
  }
  std::set<RecordKey> done;
  for (const auto& r : existing.records) done.insert(key_of(r));

  std::vector<std::unique_ptr<ProblemSource>> sources;
  for (const auto& p : config.problems) sources.push_back(std::make_unique<ProblemSource>(p, config));

  const std::vector<GridCell> cells = grid_cells(config);
  RunSummary summary;
  summary.cells_total = cells.size();
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    bool missing = false;
    for (const auto& a : config.algorithms) {
      if (done.count({config.problems[c.problem], c.ratio, c.fold, c.trial, a.name}))
        ++summary.records_skipped;
      else
        missing = true;
    }
    if (missing) todo.push_back(i);
  }
  if (opts.max_cells > 0 && todo.size() > opts.max_cells) todo.resize(opts.max_cells);

  ResultsWriter writer(rpath);
  std::atomic<std::size_t> next{0}, failed{0};

  auto run_cell = [&](const GridCell& cell) {
    const std::string& problem = config.problems[cell.problem];
    const std::uint64_t seed = cell_seed(config.seed, problem, cell.ratio, cell.fold, cell.trial);
    MetricRecord base;
    base.problem = problem;
    base.ratio = cell.ratio;
    base.fold = cell.fold;
    base.trial = cell.trial;
    base.seed = seed;

    std::optional<Split> split;
    try {
      split = sources[cell.problem]->split(config, cell, seed);
    } catch (const std::exception& e) {
      for (const auto& a : config.algorithms) {
        if (done.count({problem, cell.ratio, cell.fold, cell.trial, a.name})) continue;
        MetricRecord r = base;
        r.algorithm = a.name;
        r = detail::failed_record(r, e);
        r.error = "data: " + r.error;
        writer.write(r);
        ++failed;
      }
      return;
    }

    auto cache = config.share_hyperparameters ? std::make_shared<HyperparameterCache>() : nullptr;
    for (const auto& a : config.algorithms) {
      if (done.count({problem, cell.ratio, cell.fold, cell.trial, a.name})) continue;
      MetricRecord r = base;
      r.algorithm = a.name;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const AlgorithmPrediction p = fit_predict(a, config, split->train, split->X_test, seed, cache);
        r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail::score(r, split->y_test, p);
      } catch (const std::exception& e) {
        r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r = detail::failed_record(r, e);
        ++failed;
      }
      writer.write(r);
    }
  };

  // Algorithm failures are recorded inside run_cell; anything escaping it
  // (an unwritable results file) stops all workers and is rethrown.
  std::mutex fatal_mutex;
  std::exception_ptr fatal;
  auto worker = [&] {
    try {
      for (std::size_t k = next++; k < todo.size(); k = next++) run_cell(cells[todo[k]]);
    } catch (...) {
      std::lock_guard<std::mutex> lock(fatal_mutex);
      if (!fatal) fatal = std::current_exception();
      next = todo.size();
    }
  };
  const int width = std::max(1, std::min<int>(config.workers, static_cast<int>(todo.size())));
  if (width == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  summary.records_written = writer.written();
  summary.records_failed = failed;
  return summary;
}

}  // namespace firemf::runner
