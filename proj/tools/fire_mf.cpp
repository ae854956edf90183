// fire-mf: experiment runner, report generator and diagnostics.

#include "firemf/benchmarks.hpp"
#include "firemf/runner/config.hpp"
#include "firemf/runner/report.hpp"
#include "firemf/runner/run.hpp"
#include "firemf/runner/theory.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>

namespace fr = firemf::runner;

namespace {

int cmd_run(const std::string& config_path, bool resume, int workers) {
  fr::RunConfig cfg = fr::load_config(config_path);
  if (workers > 0) cfg.workers = workers;
  fr::RunOptions opts;
  opts.resume = resume;
  const fr::RunSummary s = fr::run_experiment(cfg, opts);
  std::cout << "cells: " << s.cells_total << "  written: " << s.records_written << "  skipped: " << s.records_skipped
            << "  failed: " << s.records_failed << "\n"
            << "results: " << fr::results_path(cfg.output) << "\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& metric, const std::string& agg, const std::string& anchor,
               const std::string& unit, int bootstrap, std::uint64_t seed, const std::string& out) {
  fr::ReportOptions o;
  o.aggregation = agg;
  o.metric = firemf::metric_from_string(metric);
  o.elo.anchor = anchor;
  o.elo.bootstrap_rounds = bootstrap;
  o.elo.seed = seed;
  if (unit == "trial") o.unit = firemf::CompareUnit::Trial;
  else if (unit == "problem_mean") o.unit = firemf::CompareUnit::ProblemMean;
  else throw firemf::InvalidArgument("unknown comparison unit '" + unit + "'; valid: trial, problem_mean");
  o.out_dir = out;
  const fr::ReportFiles f = fr::write_report(in, o);
  fr::write_report_csv(std::cout, f.table);
  std::cerr << "wrote " << f.csv << " and " << f.json << "\n";
  return 0;
}

int cmd_theory(const std::string& name, long long samples, std::uint64_t seed, bool as_json) {
  const fr::TheoryReport r = fr::theory_check(name, samples, seed);
  if (as_json) {
    std::cout << r.to_json().dump(2) << "\n";
  } else {
    std::cout << "theory-check " << r.name << " (samples " << r.samples << ", seed " << r.seed << ")\n";
    std::cout << std::setprecision(6);
    for (const auto& c : r.comparisons)
      std::cout << "  " << c.generator << ": R(" << c.lhs << ") = " << c.lhs_est.mse << " +- " << c.lhs_est.stderr_
                << ", R(" << c.rhs << ") = " << c.rhs_est.mse << " +- " << c.rhs_est.stderr_ << ", diff se "
                << c.stderr_ << "  [" << c.criterion << "] " << (c.passed ? "pass" : "FAIL") << "\n";
    for (const auto& [p, v] : r.correlations)
      std::cout << "  " << p << ": corr(sigma^2, (y_hf - y_lf)^2) = " << v << (v > 0 ? "  pass" : "  FAIL") << "\n";
    std::cout << (r.passed ? "PASS" : "FAIL") << "\n";
  }
  return r.passed ? 0 : 1;
}

int cmd_list_problems() {
  std::cout << std::left << std::setw(22) << "name" << std::setw(5) << "d" << std::setw(4) << "T" << std::setw(12)
            << "lf_sizes" << std::setw(9) << "hf_base"
            << "source\n";
  for (const auto& p : firemf::problem_catalog()) {
    std::string lf;
    for (auto n : p.lf_sizes) lf += (lf.empty() ? "" : "/") + std::to_string(n);
    std::cout << std::setw(22) << p.name << std::setw(5) << p.d << std::setw(4) << p.T << std::setw(12) << lf
              << std::setw(9) << p.hf_base << p.source << (p.hf_noise_sd ? " (noisy)" : "") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity regression experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run (or resume) an experiment grid");
  std::string config_path;
  bool resume = false;
  int workers = 0;
  run->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  run->add_flag("--resume", resume, "Continue an existing run in the output directory");
  run->add_option("--workers", workers, "Override the configured worker count");

  auto* report = app.add_subcommand("report", "Aggregate a results directory");
  std::string in, metric = "nrmse", agg = "elo", anchor = "resgp", unit = "trial", out;
  int bootstrap = 100;
  std::uint64_t report_seed = 0;
  report->add_option("--in", in, "Results directory")->required();
  report->add_option("--metric", metric, "nrmse | nll | r2");
  report->add_option("--agg", agg, "elo | rank | normscore | winrate | raw");
  report->add_option("--anchor", anchor, "Elo anchor algorithm (rated 1000)");
  report->add_option("--unit", unit, "Pairwise comparison unit: trial | problem_mean");
  report->add_option("--bootstrap", bootstrap, "Elo bootstrap rounds")->check(CLI::NonNegativeNumber);
  report->add_option("--seed", report_seed, "Bootstrap seed");
  report->add_option("--out", out, "Output directory (default: the results directory)");

  auto* theory = app.add_subcommand("theory-check", "Monte-Carlo checks of the conditional-risk ordering");
  std::string theory_name;
  long long samples = 100000;
  std::uint64_t theory_seed = 0;
  bool as_json = false;
  theory->add_option("--name", theory_name, "risk-monotonicity | quantile-risk | hetero-coupling")->required();
  theory->add_option("--samples", samples, "Monte-Carlo samples (>= 10000)");
  theory->add_option("--seed", theory_seed, "Random seed");
  theory->add_flag("--json", as_json, "Print the full report as JSON");

  auto* list = app.add_subcommand("list-problems", "Print the benchmark catalog");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, resume, workers);
    if (*report) return cmd_report(in, metric, agg, anchor, unit, bootstrap, report_seed, out);
    if (*theory) return cmd_theory(theory_name, samples, theory_seed, as_json);
    if (*list) return cmd_list_problems();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
