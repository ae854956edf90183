#include "firemf/benchmarks.hpp"
#include "firemf/csv.hpp"
#include "firemf/oracle.hpp"
#include "firemf/sampling.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace firemf;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct GoldenRow {
  std::string problem;
  int t;
  Vector x;
  double y;
};

// Values produced by tests/oracles/benchmark_goldens.py from the reference
// Python implementations.
std::vector<GoldenRow> load_goldens() {
  std::ifstream in(std::string(FIREMF_ORACLE_DIR) + "/benchmark_goldens.csv");
  std::vector<GoldenRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    GoldenRow r;
    r.problem = cells[0];
    r.t = std::stoi(cells[1]);
    r.x.resize(static_cast<Index>(cells.size() - 3));
    for (std::size_t j = 2; j + 1 < cells.size(); ++j) r.x[static_cast<Index>(j - 2)] = std::stod(cells[j]);
    r.y = std::stod(cells.back());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST(HdSuite, OnesVector) {
  const Vector x = Vector::Ones(10);
  EXPECT_EQ(eval_hd(x, 10, 2), 9.0);
  EXPECT_NEAR(eval_hd(x, 10, 1), -39.2, 1e-12);
}

TEST(HdSuite, ZeroVector) {
  for (Index d : {10, 20, 30, 40, 50}) {
    const Vector x = Vector::Zero(d);
    EXPECT_EQ(eval_hd(x, d, 2), 1.0);
    EXPECT_NEAR(eval_hd(x, d, 1), -49.2, 1e-12);
  }
}

TEST(HdSuite, RejectsUnsupportedDimension) {
  EXPECT_THROW(eval_hd(Vector::Zero(12), 12, 1), InvalidArgument);
  EXPECT_THROW(eval_hd(Vector::Zero(10), 10, 3), InvalidArgument);
  EXPECT_THROW(eval_hd(Vector::Zero(9), 10, 1), InvalidArgument);
}

TEST(Catalog, MatchesReferenceImplementations) {
  const auto rows = load_goldens();
  ASSERT_GT(rows.size(), 100u);
  std::set<std::string> seen;
  for (const auto& r : rows) {
    const double got = eval_catalog(r.problem, r.x, r.t);
    EXPECT_NEAR(got, r.y, 1e-9 * std::max(1.0, std::abs(r.y))) << r.problem << " t=" << r.t;
    seen.insert(r.problem);
  }
  EXPECT_EQ(seen.size(), 13u);
}

TEST(Catalog, ForresterAtZero) {
  EXPECT_NEAR(eval_catalog("forrester", vec({0.0}), 2), 4 * std::sin(-4.0), 1e-15);
  EXPECT_NEAR(eval_catalog("forrester", vec({0.0}), 2), 3.0272099812, 1e-9);
}

TEST(Catalog, BoothMinimum) { EXPECT_EQ(eval_catalog("booth", vec({1.0, 3.0}), 2), 0.0); }

TEST(Catalog, Purity) {
  std::mt19937_64 rng(3);
  for (const auto& p : problem_catalog()) {
    const Matrix X = sample_lhs(p.d, 3, p.lower, p.upper, rng);
    for (int t = 1; t <= p.T; ++t)
      for (Index i = 0; i < X.rows(); ++i) {
        const Vector x = X.row(i).transpose();
        const double a = p(x, t), b = p(x, t);
        EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0) << p.name;
        EXPECT_TRUE(std::isfinite(a)) << p.name << " t=" << t;
      }
  }
}

TEST(Catalog, UnknownNameListsCatalog) {
  try {
    find_problem("rosenbrock");
    FAIL();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rosenbrock"), std::string::npos);
    EXPECT_NE(msg.find("forrester"), std::string::npos);
    EXPECT_NE(msg.find("hartmann3f"), std::string::npos);
  }
}

TEST(Catalog, WrongFidelityOrDimension) {
  EXPECT_THROW(eval_catalog("currin", vec({0.5, 0.5}), 3), InvalidArgument);
  EXPECT_THROW(eval_catalog("currin", vec({0.5}), 2), InvalidArgument);
  EXPECT_NO_THROW(eval_catalog("branin3f", vec({0.5, 0.5}), 3));
}

TEST(Catalog, TableNineShapes) {
  struct Row {
    const char* name;
    Index d;
    int T;
    std::vector<Index> lf;
    std::vector<Index> hf;
  };
  const std::vector<Index> small{4, 8, 10, 20, 40, 50};
  const std::vector<Index> large{40, 80, 100, 200, 400, 500};
  const std::vector<Row> rows{
      {"bohachevsky", 2, 2, {200}, small}, {"booth", 2, 2, {200}, small},
      {"borehole", 8, 2, {200}, small},    {"branin", 2, 2, {200}, small},
      {"currin", 2, 2, {200}, small},      {"forrester", 1, 2, {200}, small},
      {"hartmann6", 6, 2, {200}, small},   {"himmelblau", 2, 2, {200}, small},
      {"park91a", 4, 2, {200}, small},     {"park91b", 4, 2, {200}, small},
      {"six_hump_camelback", 2, 2, {200}, small},
      {"hd10", 10, 2, {2000}, large},      {"hd20", 20, 2, {2000}, large},
      {"hd30", 30, 2, {2000}, large},      {"hd40", 40, 2, {2000}, large},
      {"hd50", 50, 2, {2000}, large},      {"branin3f", 2, 3, {200, 50}, large},
      {"hartmann3f", 3, 3, {200, 50}, large},
  };
  for (const auto& r : rows) {
    const ProblemSpec& p = find_problem(r.name);
    EXPECT_EQ(p.d, r.d) << r.name;
    EXPECT_EQ(p.T, r.T) << r.name;
    EXPECT_EQ(p.lf_sizes, r.lf) << r.name;
    for (std::size_t k = 0; k < standard_ratios().size(); ++k) {
      const SplitSizes s = split_sizes(p, {standard_ratios()[k], false, 0, std::nullopt});
      std::vector<Index> expect = r.lf;
      expect.push_back(r.hf[k]);
      EXPECT_EQ(s.per_fidelity, expect) << r.name << " ratio " << standard_ratios()[k];
      EXPECT_EQ(s.n_test, r.lf.front() / 2);
    }
  }
}

TEST(Heteroscedastic, PlugInValues) {
  EXPECT_NEAR(bench::goldberg_mean(0.25), 2.0, 1e-15);
  EXPECT_NEAR(bench::goldberg_sd(0.25), 0.75, 1e-15);
  EXPECT_EQ(bench::williams_mean(0.0), 0.0);
  EXPECT_NEAR(bench::williams_sd(0.0), 0.26, 1e-15);
  EXPECT_EQ(bench::yuan_sd(0.0), 1.0);
}

TEST(Heteroscedastic, LowFidelityIsNoiselessMean) {
  std::mt19937_64 rng(9);
  for (const char* name : {"goldberg", "yuan", "williams"}) {
    const auto s = gen_heteroscedastic(name, 0.3, rng);
    const double mu = find_problem(name)(vec({0.3}), 1);
    EXPECT_EQ(s.y_lf, mu) << name;
    EXPECT_NE(s.y_hf, mu) << name;
  }
  EXPECT_THROW(gen_heteroscedastic("bogus", 0.3, rng), InvalidArgument);
}

TEST(Heteroscedastic, NoiseScaleMatchesSd) {
  std::mt19937_64 rng(4);
  const int n = 40000;
  double ss = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = gen_heteroscedastic("goldberg", 0.5, rng);
    ss += (s.y_hf - s.y_lf) * (s.y_hf - s.y_lf);
  }
  EXPECT_NEAR(std::sqrt(ss / n), 1.0, 0.02);
}

TEST(Heteroscedastic, CouplingIsPositiveOnGoldberg) {
  EXPECT_GT(heteroscedastic_coupling("goldberg", 10000, 1), 0.2);
}

TEST(Concrete, UnitPowerBases) {
  // Offsets make slag, fly ash and superplasticizer contribute (v + 1).
  Vector x(8);
  x << 1, 0, 0, 1, 0, 500, 700, 1;
  EXPECT_NEAR(concrete_lf(x), std::exp(2.56), 1e-9);
  EXPECT_NEAR(concrete_lf(x), 12.935817315543076, 1e-9);
}

TEST(Concrete, AgeDoubling) {
  Vector x(8);
  x << 300, 50, 20, 180, 5, 900, 750, 28;
  Vector y = x;
  y[7] = 56;
  EXPECT_NEAR(concrete_lf(y) / concrete_lf(x), std::pow(2.0, 0.292), 1e-12);
  EXPECT_NEAR(std::pow(2.0, 0.292), 1.2244, 1e-4);
}

TEST(Concrete, DecreasingInWaterCementRatio) {
  Vector x(8);
  x << 300, 50, 20, 150, 5, 900, 750, 28;
  double prev = concrete_lf(x);
  for (double w = 160; w <= 250; w += 10) {
    x[3] = w;
    const double v = concrete_lf(x);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Concrete, RejectsNonPositiveInputs) {
  Vector x(8);
  x << 300, 50, 20, 150, 5, 900, 750, 28;
  for (int j : {0, 3, 7}) {
    Vector z = x;
    z[j] = 0;
    EXPECT_THROW(concrete_lf(z), InvalidArgument);
  }
  Vector z = x;
  z[1] = -1;
  EXPECT_THROW(concrete_lf(z), InvalidArgument);
}

TEST(Lhs, OnePointPerStratum) {
  const Matrix X = sample_lhs(1, 4, vec({0}), vec({1}), std::uint64_t{5});
  std::vector<int> count(4, 0);
  for (Index i = 0; i < 4; ++i) ++count[static_cast<std::size_t>(std::min(3.0, std::floor(X(i, 0) * 4)))];
  for (int c : count) EXPECT_EQ(c, 1);
}

TEST(Lhs, MarginalHistogram) {
  const Matrix X = sample_lhs(3, 10, Vector::Zero(3), Vector::Ones(3), std::uint64_t{11});
  for (Index j = 0; j < 3; ++j) {
    std::vector<int> count(10, 0);
    for (Index i = 0; i < 10; ++i) ++count[static_cast<std::size_t>(std::min(9.0, std::floor(X(i, j) * 10)))];
    for (int c : count) EXPECT_EQ(c, 1);
  }
}

TEST(Lhs, DeterministicAndScaled) {
  const Matrix a = sample_lhs(2, 7, vec({-5, 0}), vec({10, 15}), std::uint64_t{1});
  const Matrix b = sample_lhs(2, 7, vec({-5, 0}), vec({10, 15}), std::uint64_t{1});
  EXPECT_EQ(a, b);
  EXPECT_GE(a.col(0).minCoeff(), -5);
  EXPECT_LE(a.col(0).maxCoeff(), 10);
  EXPECT_THROW(sample_lhs(2, 0, vec({0, 0}), vec({1, 1}), std::uint64_t{1}), InvalidArgument);
}

TEST(Splits, CurrinFivePercent) {
  const Split s = make_splits(find_problem("currin"), {5, false, 42, std::nullopt});
  EXPECT_EQ(s.train.blocks()[0].rows(), 200);
  EXPECT_EQ(s.train.blocks()[1].rows(), 10);
  EXPECT_EQ(s.X_test.rows(), 100);
}

TEST(Splits, HdTwoPercent) {
  const SplitSizes s = split_sizes(find_problem("hd10"), {2, false, 0, std::nullopt});
  EXPECT_EQ(s.per_fidelity.front(), 2000);
  EXPECT_EQ(s.per_fidelity.back(), 40);
}

TEST(Splits, DisjointRowsArePairwiseDistinct) {
  const Split s = make_splits(find_problem("branin3f"), {2, false, 3, std::nullopt});
  detail::RowSet all;
  Index total = 0;
  for (const auto& b : s.train.blocks())
    for (Index i = 0; i < b.rows(); ++i, ++total) all.insert(detail::row_key(b.X, i));
  for (Index i = 0; i < s.X_test.rows(); ++i, ++total) all.insert(detail::row_key(s.X_test, i));
  EXPECT_EQ(static_cast<Index>(all.size()), total);
}

TEST(Splits, NestedRowsAreSubsets) {
  const Split s = make_splits(find_problem("currin"), {25, true, 8, std::nullopt});
  detail::RowSet lf;
  for (Index i = 0; i < s.train.blocks()[0].rows(); ++i) lf.insert(detail::row_key(s.train.blocks()[0].X, i));
  for (Index i = 0; i < s.train.blocks()[1].rows(); ++i) EXPECT_TRUE(lf.count(detail::row_key(s.train.blocks()[1].X, i)));
}

TEST(Splits, NestedNeedsDecreasingSizes) {
  EXPECT_THROW(make_splits(find_problem("branin3f"), {5, true, 1, std::nullopt}), InvalidArgument);
  EXPECT_NO_THROW(make_splits(find_problem("branin3f"), {2, true, 1, std::nullopt}));
}

TEST(Splits, DeterministicPerSeed) {
  const auto& p = find_problem("goldberg");
  const Split a = make_splits(p, {10, false, 77, std::nullopt});
  const Split b = make_splits(p, {10, false, 77, std::nullopt});
  const Split c = make_splits(p, {10, false, 78, std::nullopt});
  EXPECT_EQ(a.train.blocks()[1].y, b.train.blocks()[1].y);
  EXPECT_EQ(a.y_test, b.y_test);
  EXPECT_NE(a.train.blocks()[1].y, c.train.blocks()[1].y);
}

TEST(Splits, TooSmallRatioIsAnError) {
  EXPECT_THROW(make_splits(find_problem("forrester"), {0.1, false, 0, std::nullopt}), InvalidArgument);
}

TEST(Splits, LowFidelityOverride) {
  const Split s = make_splits(find_problem("forrester"), {25, false, 0, Index{100}});
  EXPECT_EQ(s.train.blocks()[0].rows(), 100);
  EXPECT_EQ(s.train.blocks()[1].rows(), 25);
  EXPECT_EQ(s.X_test.rows(), 50);
}

TEST(Splits, HeteroscedasticHighFidelityIsNoisy) {
  const auto& p = find_problem("williams");
  const Split s = make_splits(p, {25, true, 2, std::nullopt});
  const auto& hf = s.train.blocks()[1];
  double diff = 0;
  for (Index i = 0; i < hf.rows(); ++i) diff += std::abs(hf.y[i] - p(hf.X.row(i).transpose(), 1));
  EXPECT_GT(diff, 0);
}

TEST(PoolSplit, HoldsOutOneFold) {
  std::vector<FidelityBlock> blocks;
  Matrix Xl = sample_lhs(2, 120, Vector::Zero(2), Vector::Ones(2), std::uint64_t{1});
  Matrix Xh = sample_lhs(2, 50, Vector::Zero(2), Vector::Ones(2), std::uint64_t{2});
  Vector yl = Xl.rowwise().sum(), yh = Xh.rowwise().squaredNorm();
  MultiFidelityDataset pool({{1, Xl, yl}, {2, Xh, yh}});
  detail::RowSet test_rows;
  Index test_total = 0;
  for (int fold = 0; fold < 5; ++fold) {
    const Split s = split_pool(pool, {10, false, fold, 5, 3, 4, std::nullopt});
    EXPECT_EQ(s.X_test.rows(), 10);
    EXPECT_EQ(s.train.blocks()[1].rows(), 12);
    for (Index i = 0; i < s.X_test.rows(); ++i) test_rows.insert(detail::row_key(s.X_test, i));
    test_total += s.X_test.rows();
  }
  EXPECT_EQ(static_cast<Index>(test_rows.size()), 50);
  EXPECT_EQ(test_total, 50);
}

TEST(Csv, RoundTrip) {
  Matrix X(3, 2);
  X << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  MultiFidelityDataset data({{1, X, Vector::Constant(3, 1.5)}, {2, X.topRows(1), Vector::Constant(1, -2.25)}});
  std::stringstream buf;
  write_mf_csv(buf, data);
  const MultiFidelityDataset back = read_mf_csv(buf);
  ASSERT_EQ(back.levels(), 2u);
  EXPECT_EQ(back.blocks()[0].X, X);
  EXPECT_EQ(back.blocks()[1].y[0], -2.25);
}

TEST(Csv, RejectsMalformedInput) {
  std::stringstream a("fidelity,x_1,y\n1,0.5\n");
  EXPECT_THROW(read_mf_csv(a), InvalidArgument);
  std::stringstream b("fidelity,x_1,y\n1.5,0.5,1\n");
  EXPECT_THROW(read_mf_csv(b), InvalidArgument);
  std::stringstream c("fid,x_1,y\n1,0.5,1\n");
  EXPECT_THROW(read_mf_csv(c), InvalidArgument);
  std::stringstream d("fidelity,x_1,y\n1,abc,1\n");
  EXPECT_THROW(read_mf_csv(d), InvalidArgument);
}

TEST(Oracle, IndependentResidualGivesVariance) {
  const TheorySamples s = generate_theory_samples(TheoryGenerator::Independent, 20000, 5);
  const double var = (s.r.array() - s.r.mean()).square().mean();
  for (const Matrix& Z : {s.z_mean(), s.z_mv(), s.z_aug()}) {
    const OracleEstimate e = oracle_conditional_mse(Z, s.r, 1);
    EXPECT_NEAR(e.mse, var, 4 * e.stderr_ + 0.02 * var);
  }
}

TEST(Oracle, ResidualEqualToVarianceColumn) {
  const TheorySamples s = generate_theory_samples(TheoryGenerator::Independent, 20000, 6);
  const Vector r = s.variance;
  const double var = (r.array() - r.mean()).square().mean();
  const OracleEstimate with_var = oracle_conditional_mse(s.z_mv(), r, 2);
  const OracleEstimate mean_only = oracle_conditional_mse(s.z_mean(), r, 2);
  EXPECT_LT(with_var.mse, 0.05 * var);
  EXPECT_NEAR(mean_only.mse, var, 0.05 * var);
}

TEST(Oracle, TiesShareBins) {
  Vector v(6);
  v << 1, 1, 1, 1, 2, 3;
  const auto bins = detail::equal_mass_bins(v, 3);
  EXPECT_EQ(bins[0], bins[3]);
  EXPECT_LE(bins[3], bins[4]);
}

TEST(Oracle, RejectsTooFewSamples) {
  EXPECT_THROW(oracle_conditional_mse(Matrix::Zero(10, 1), Vector::Zero(10)), InvalidArgument);
  EXPECT_THROW(oracle_conditional_mse(Matrix::Zero(100, 1), Vector::Zero(90)), InvalidArgument);
}

TEST(Oracle, AugmentedSetNotWorseOnGoldberg) {
  const TheorySamples s = generate_theory_samples(TheoryGenerator::Goldberg, 100000, 7);
  const OracleEstimate aug = oracle_conditional_mse(s.z_aug(), s.r, 3);
  const OracleEstimate mean = oracle_conditional_mse(s.z_mean(), s.r, 3);
  EXPECT_LE(aug.mse, mean.mse + 2 * combined_stderr(aug, mean));
}
