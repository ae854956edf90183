#pragma once

// Multi-fidelity CSV files: header `fidelity,x_1,...,x_d,y`, one row per
// observation. Also the split rule for datasets that come from files,
// where test points are drawn from the highest-fidelity pool by fold.

#include "firemf/core.hpp"
#include "firemf/sampling.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace firemf {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    out.push_back(cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument("csv line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
  if (pos != s.size()) throw InvalidArgument("csv line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  if (!std::isfinite(v)) throw InvalidArgument("csv line " + std::to_string(line_no) + ": non-finite value");
  return v;
}

}  // namespace detail

inline MultiFidelityDataset read_mf_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header.front() != "fidelity" || header.back() != "y")
    throw InvalidArgument("csv: header must be fidelity,x_1..x_d,y");
  const std::size_t d = header.size() - 2;

  std::map<int, std::vector<std::vector<double>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw InvalidArgument("csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(cells.size()));
    const double t = detail::parse_double(cells[0], line_no);
    if (t < 1 || t != std::floor(t))
      throw InvalidArgument("csv line " + std::to_string(line_no) + ": fidelity must be a positive integer");
    std::vector<double> r(d + 1);
    for (std::size_t j = 0; j <= d; ++j) r[j] = detail::parse_double(cells[j + 1], line_no);
    rows[static_cast<int>(t)].push_back(std::move(r));
  }
  std::vector<FidelityBlock> blocks;
  for (auto& [t, rs] : rows) {
    FidelityBlock b;
    b.t = t;
    b.X.resize(static_cast<Index>(rs.size()), static_cast<Index>(d));
    b.y.resize(static_cast<Index>(rs.size()));
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) b.X(static_cast<Index>(i), static_cast<Index>(j)) = rs[i][j];
      b.y[static_cast<Index>(i)] = rs[i][d];
    }
    blocks.push_back(std::move(b));
  }
  return MultiFidelityDataset(std::move(blocks));
}

inline MultiFidelityDataset load_mf_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return read_mf_csv(in);
}

inline void write_mf_csv(std::ostream& out, const MultiFidelityDataset& data) {
  out << "fidelity";
  for (Index j = 0; j < data.dim(); ++j) out << ",x_" << (j + 1);
  out << ",y\n";
  out.precision(17);
  for (const auto& b : data.blocks())
    for (Index i = 0; i < b.rows(); ++i) {
      out << b.t;
      for (Index j = 0; j < b.dim(); ++j) out << ',' << b.X(i, j);
      out << ',' << b.y[i] << '\n';
    }
}

struct PoolSplitPlan {
  double ratio_percent = 5;
  bool nested = false;
  int fold = 0;
  int folds = 5;
  std::uint64_t partition_seed = 0;  // fixes the fold assignment for a run
  std::uint64_t seed = 0;            // per-cell subsampling
  std::optional<Index> n_lf;
};

/// Splits a finite multi-fidelity pool. Highest-fidelity rows are assigned
/// to folds; the held-out fold is the test set and the training HF rows are
/// subsampled from the rest. In disjoint mode, lower-fidelity rows whose
/// inputs coincide with any HF row are removed; in nested mode the training
/// HF rows are restricted to inputs also present at the lowest fidelity.
inline Split split_pool(const MultiFidelityDataset& pool, const PoolSplitPlan& plan) {
  if (pool.levels() < 2) throw InvalidArgument("need at least two fidelities");
  if (plan.folds < 2 || plan.fold < 0 || plan.fold >= plan.folds) throw InvalidArgument("invalid fold index");
  const auto& blocks = pool.blocks();
  const FidelityBlock& top = blocks.back();

  std::vector<Index> order(static_cast<std::size_t>(top.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 part_rng(plan.partition_seed);
  std::shuffle(order.begin(), order.end(), part_rng);
  std::vector<Index> test_idx, train_pool;
  for (std::size_t k = 0; k < order.size(); ++k)
    (static_cast<int>(k % static_cast<std::size_t>(plan.folds)) == plan.fold ? test_idx : train_pool).push_back(order[k]);

  std::mt19937_64 rng(plan.seed);
  std::vector<FidelityBlock> out_blocks;
  Index n_lowest = blocks.front().rows();
  if (plan.n_lf) n_lowest = std::min(n_lowest, *plan.n_lf);

  detail::RowSet hf_rows;
  for (Index i = 0; i < top.rows(); ++i) hf_rows.insert(detail::row_key(top.X, i));
  detail::RowSet lowest_rows;

  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    const auto& src = blocks[b];
    std::vector<Index> keep;
    for (Index i = 0; i < src.rows(); ++i)
      if (plan.nested || !hf_rows.count(detail::row_key(src.X, i))) keep.push_back(i);
    std::shuffle(keep.begin(), keep.end(), rng);
    if (b == 0 && static_cast<Index>(keep.size()) > n_lowest) keep.resize(static_cast<std::size_t>(n_lowest));
    if (keep.empty()) throw InvalidArgument("fidelity " + std::to_string(src.t) + " has no usable rows");
    FidelityBlock nb{src.t, Matrix(static_cast<Index>(keep.size()), src.dim()), Vector(static_cast<Index>(keep.size()))};
    for (std::size_t k = 0; k < keep.size(); ++k) {
      nb.X.row(static_cast<Index>(k)) = src.X.row(keep[k]);
      nb.y[static_cast<Index>(k)] = src.y[keep[k]];
      if (b == 0) lowest_rows.insert(detail::row_key(src.X, keep[k]));
    }
    out_blocks.push_back(std::move(nb));
  }

  if (plan.nested) {
    std::vector<Index> filtered;
    for (Index i : train_pool)
      if (lowest_rows.count(detail::row_key(top.X, i))) filtered.push_back(i);
    train_pool = std::move(filtered);
  }
  const Index n_hf = hf_budget(plan.ratio_percent, out_blocks.front().rows());
  if (n_hf > static_cast<Index>(train_pool.size()))
    throw InvalidArgument("pool has only " + std::to_string(train_pool.size()) + " usable high-fidelity rows, need " +
                          std::to_string(n_hf));
  std::shuffle(train_pool.begin(), train_pool.end(), rng);
  FidelityBlock hf{top.t, Matrix(n_hf, top.dim()), Vector(n_hf)};
  for (Index k = 0; k < n_hf; ++k) {
    hf.X.row(k) = top.X.row(train_pool[static_cast<std::size_t>(k)]);
    hf.y[k] = top.y[train_pool[static_cast<std::size_t>(k)]];
  }
  out_blocks.push_back(std::move(hf));

  Split out;
  out.X_test.resize(static_cast<Index>(test_idx.size()), top.dim());
  out.y_test.resize(static_cast<Index>(test_idx.size()));
  for (std::size_t k = 0; k < test_idx.size(); ++k) {
    out.X_test.row(static_cast<Index>(k)) = top.X.row(test_idx[k]);
    out.y_test[static_cast<Index>(k)] = top.y[test_idx[k]];
  }
  out.train = MultiFidelityDataset(std::move(out_blocks));
  return out;
}

}  // namespace firemf
