#pragma once

// Aggregation reports over a results directory. Each report is written
// twice: as CSV with fixed column names and as JSON
// {"schema": 1, "aggregation", "metric", "columns", "rows", ...}.

#include "firemf/metrics.hpp"
#include "firemf/runner/results.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace firemf::runner {

inline const std::vector<std::string>& aggregation_names() {
  static const std::vector<std::string> names{"elo", "rank", "normscore", "winrate", "raw"};
  return names;
}

struct ReportOptions {
  std::string aggregation = "elo";
  Metric metric = Metric::Nrmse;
  EloOptions elo;
  CompareUnit unit = CompareUnit::Trial;
  std::string out_dir;  // defaults to the results directory
};

/// A rendered table: header plus rows of already-formatted cells, and the
/// same content as JSON.
struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
  nlohmann::json extra = nlohmann::json::object();
};

struct ReportFiles {
  std::string csv;
  std::string json;
  ReportTable table;
};

namespace detail {

inline std::string csv_cell(const nlohmann::json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  if (v.is_null()) return "";
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline ReportTable build_report(const std::vector<MetricRecord>& recs, const ReportOptions& o) {
  const auto& names = aggregation_names();
  if (std::find(names.begin(), names.end(), o.aggregation) == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown aggregation '" + o.aggregation + "'; valid: " + valid);
  }
  std::size_t usable = 0;
  for (const auto& r : recs) usable += r.ok ? 1 : 0;
  if (usable == 0) throw InvalidArgument("report: no successful records to aggregate");

  ReportTable t;
  if (o.aggregation == "elo") {
    EloOptions eo = o.elo;
    eo.unit = o.unit;
    const EloResult e = elo_ratings(recs, o.metric, eo);
    t.columns = {"algorithm", "rating", "ci_low", "ci_high"};
    for (std::size_t i = 0; i < e.algorithms.size(); ++i) {
      const auto k = static_cast<Index>(i);
      t.rows.push_back({e.algorithms[i], e.rating[k], e.ci_low[k], e.ci_high[k]});
    }
    t.extra = {{"anchor", e.anchor}, {"anchor_value", e.anchor_value}, {"bootstrap_rounds", eo.bootstrap_rounds},
               {"unit", o.unit == CompareUnit::Trial ? "trial" : "problem_mean"}};
  } else if (o.aggregation == "rank" || o.aggregation == "normscore") {
    const AlgorithmScores s = o.aggregation == "rank" ? average_rank(recs, o.metric) : normalized_score(recs, o.metric);
    t.columns = {"algorithm", o.aggregation == "rank" ? "average_rank" : "normalized_score"};
    for (std::size_t i = 0; i < s.algorithms.size(); ++i)
      t.rows.push_back({s.algorithms[i], detail::num(s.value[static_cast<Index>(i)])});
    t.extra = {{"cells_used", s.cells_used}};
  } else if (o.aggregation == "winrate") {
    const WinRate w = win_rate_matrix(recs, o.metric, o.unit);
    t.columns = {"algorithm"};
    for (const auto& a : w.algorithms) t.columns.push_back(a);
    for (std::size_t i = 0; i < w.algorithms.size(); ++i) {
      std::vector<nlohmann::json> row{w.algorithms[i]};
      for (std::size_t j = 0; j < w.algorithms.size(); ++j) row.push_back(w.rate(static_cast<Index>(i), static_cast<Index>(j)));
      t.rows.push_back(std::move(row));
    }
  } else {
    t.columns = {"problem", "ratio", "algorithm", "mean", "std", "n"};
    for (const auto& r : raw_table(recs, o.metric))
      t.rows.push_back({r.problem, r.ratio, r.algorithm, detail::num(r.mean), detail::num(r.std), r.n});
  }
  return t;
}

inline void write_report_csv(std::ostream& out, const ReportTable& t) {
  for (std::size_t j = 0; j < t.columns.size(); ++j) out << (j ? "," : "") << detail::csv_cell(t.columns[j]);
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << detail::csv_cell(row[j]);
    out << '\n';
  }
}

inline nlohmann::json report_json(const ReportTable& t, const ReportOptions& o) {
  nlohmann::json j{{"schema", kResultsSchema}, {"aggregation", o.aggregation}, {"metric", to_string(o.metric)}};
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t k = 0; k < row.size(); ++k) obj[t.columns[k]] = row[k];
    j["rows"].push_back(obj);
  }
  for (const auto& [k, v] : t.extra.items()) j[k] = v;
  return j;
}

/// Builds the report for `results_dir` and writes
/// report_<aggregation>_<metric>.{csv,json}.
inline ReportFiles write_report(const std::string& results_dir, const ReportOptions& o) {
  const std::vector<MetricRecord> recs = load_results(results_dir);
  ReportFiles f;
  f.table = build_report(recs, o);
  const std::filesystem::path dir = o.out_dir.empty() ? std::filesystem::path(results_dir) : std::filesystem::path(o.out_dir);
  std::filesystem::create_directories(dir);
  const std::string stem = "report_" + o.aggregation + "_" + to_string(o.metric);
  f.csv = (dir / (stem + ".csv")).string();
  f.json = (dir / (stem + ".json")).string();
  std::ofstream csv(f.csv);
  write_report_csv(csv, f.table);
  std::ofstream js(f.json);
  js << report_json(f.table, o).dump(2) << '\n';
  if (!csv || !js) throw Error("report: cannot write output files in " + dir.string());
  return f;
}

}  // namespace firemf::runner
