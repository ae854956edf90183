#pragma once

// Results directory layout:
//   manifest.json   {"schema": 1, "config_hash": "...", "config": {...}}
//   results.jsonl   one MetricRecord per line, each stamped "schema": 1

#include "firemf/log.hpp"
#include "firemf/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

namespace firemf::runner {

inline constexpr int kResultsSchema = 1;

inline std::string results_path(const std::string& dir) { return (std::filesystem::path(dir) / "results.jsonl").string(); }
inline std::string manifest_path(const std::string& dir) { return (std::filesystem::path(dir) / "manifest.json").string(); }

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double number_or_nan(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j[key].get<double>();
}

}  // namespace detail

inline nlohmann::json record_to_json(const MetricRecord& r) {
  nlohmann::json j{{"schema", kResultsSchema},
                   {"problem", r.problem},
                   {"ratio", r.ratio},
                   {"fold", r.fold},
                   {"trial", r.trial},
                   {"algorithm", r.algorithm},
                   {"seed", r.seed},
                   {"ok", r.ok},
                   {"nrmse", detail::finite_or_null(r.nrmse)},
                   {"nll", detail::finite_or_null(r.nll)},
                   {"r2", detail::finite_or_null(r.r2)},
                   {"runtime_seconds", r.runtime_seconds}};
  if (!r.ok) {
    j["error"] = r.error;
    j["error_type"] = r.error_type;
  }
  return j;
}

inline MetricRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("results: record is not an object");
  const int schema = j.value("schema", 0);
  if (schema != kResultsSchema) throw InvalidArgument("results: unsupported schema " + std::to_string(schema));
  MetricRecord r;
  r.problem = j.at("problem").get<std::string>();
  r.ratio = j.at("ratio").get<double>();
  r.fold = j.at("fold").get<int>();
  r.trial = j.at("trial").get<int>();
  r.algorithm = j.at("algorithm").get<std::string>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.ok = j.at("ok").get<bool>();
  r.nrmse = detail::number_or_nan(j, "nrmse");
  r.nll = detail::number_or_nan(j, "nll");
  r.r2 = detail::number_or_nan(j, "r2");
  r.runtime_seconds = j.value("runtime_seconds", 0.0);
  r.error = j.value("error", "");
  r.error_type = j.value("error_type", "");
  return r;
}

/// Identifies one algorithm's entry in one grid cell.
using RecordKey = std::tuple<std::string, double, int, int, std::string>;

inline RecordKey key_of(const MetricRecord& r) { return {r.problem, r.ratio, r.fold, r.trial, r.algorithm}; }

struct LoadedResults {
  std::vector<MetricRecord> records;
  /// Byte length of the complete-line prefix; anything after it is an
  /// interrupted trailing write.
  std::uintmax_t valid_bytes = 0;
  bool truncated_tail = false;
};

/// Reads results.jsonl. A final line without its newline, or one that does
/// not parse, is treated as an interrupted write and reported, not
/// returned. Any other unreadable line is an error.
inline LoadedResults read_results_file(const std::string& path) {
  LoadedResults out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    ++line_no;
    const std::size_t nl = content.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = content.substr(pos, complete ? nl - pos : std::string::npos);
    const std::size_t next = complete ? nl + 1 : content.size();
    if (line.empty()) {
      pos = next;
      out.valid_bytes = next;
      continue;
    }
    try {
      if (!complete) throw InvalidArgument("missing newline");
      out.records.push_back(record_from_json(nlohmann::json::parse(line)));
      out.valid_bytes = next;
    } catch (const std::exception& e) {
      if (next >= content.size()) {
        out.truncated_tail = true;
        break;
      }
      throw InvalidArgument(path + ":" + std::to_string(line_no) + ": unreadable record (" + e.what() + ")");
    }
    pos = next;
  }
  return out;
}

inline std::vector<MetricRecord> load_results(const std::string& dir) {
  const std::string path = results_path(dir);
  if (!std::filesystem::exists(path)) throw InvalidArgument("no results file at " + path);
  LoadedResults r = read_results_file(path);
  if (r.truncated_tail) warn("results: ignoring an incomplete final line in " + path);
  return std::move(r.records);
}

/// Serialized appender; each record is written and flushed as one line.
class ResultsWriter {
 public:
  explicit ResultsWriter(const std::string& path) : out_(path, std::ios::app | std::ios::binary) {
    if (!out_) throw InvalidArgument("cannot open " + path + " for appending");
  }

  void write(const MetricRecord& r) {
    const std::string line = record_to_json(r).dump() + "\n";
    std::lock_guard<std::mutex> lock(mutex_);
    out_ << line;
    out_.flush();
    if (!out_) throw Error("results: write failed");
    ++written_;
  }

  std::size_t written() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return written_;
  }

 private:
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::size_t written_ = 0;
};

}  // namespace firemf::runner
