#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cirlab/error.hpp"
#include "cirlab/metrics_pca.hpp"

namespace cirlab {
namespace {

MetricMatrix make(const std::vector<std::string>& cols, const std::vector<std::vector<double>>& rows) {
  MetricMatrix m;
  m.cols = cols;
  m.values.cols = cols.size();
  for (std::size_t i = 0; i < rows.size(); ++i) m.add_row("b" + std::to_string(i), rows[i], Provenance::Ingested);
  return m;
}

MetricMatrix published_table() {
  auto f = read_csv_file(std::string(CIRLAB_DATA_DIR) + "/renaissance_metrics.csv");
  EXPECT_TRUE(f.diagnostics.empty());
  return exclude_rows(f.matrix, {"tradebeans", "actors", "scimark.monte_carlo"});
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  }
  return e;
}

MetricMatrix random_columns(std::size_t n, std::size_t k, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(10.0, 1.0);
  std::vector<std::string> cols;
  for (std::size_t j = 0; j < k; ++j) cols.push_back("m" + std::to_string(j));
  std::vector<std::vector<double>> rows(n, std::vector<double>(k));
  for (auto& r : rows) {
    for (auto& x : r) x = std::abs(g(rng));
  }
  return make(cols, rows);
}

// ---- ingest ------------------------------------------------------------

TEST(MetricCsv, ParsesScientificNotation) {
  std::istringstream in("benchmark,synch,cpu\nakka-uct,4.27E+05,94.45\n");
  auto f = read_csv(in);
  ASSERT_TRUE(f.diagnostics.empty());
  EXPECT_EQ(f.matrix.rows, std::vector<std::string>{"akka-uct"});
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 0), 427000.0);
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 1), 94.45);
  EXPECT_EQ(f.matrix.provenance[0], Provenance::Ingested);
}

TEST(MetricCsv, RejectsRowsWithGaps) {
  std::istringstream in("benchmark,a,b\nx,1,2\ny,,3\nz,4\nw,1,oops\nv,-1,2\n");
  auto f = read_csv(in);
  EXPECT_EQ(f.matrix.rows, std::vector<std::string>{"x"});
  ASSERT_EQ(f.diagnostics.size(), 4u);
  EXPECT_NE(f.diagnostics[0].find("missing value for 'a'"), std::string::npos);
  EXPECT_NE(f.diagnostics[1].find("expected 2 values"), std::string::npos);
  EXPECT_NE(f.diagnostics[3].find("negative"), std::string::npos);
}

TEST(MetricCsv, RejectsBadHeader) {
  std::istringstream in("name,a,b\nx,1,2\n");
  EXPECT_THROW(read_csv(in), Error);
  std::istringstream narrow("benchmark,a\nx,1\n");
  EXPECT_THROW(read_csv(narrow), Error);
}

TEST(MetricCsv, WriteReadRoundTrip) {
  auto m = make({"a", "b"}, {{1.5e-7, 3}, {0.1, 4.27e5}});
  std::ostringstream out;
  write_csv(out, m);
  std::istringstream in(out.str());
  auto back = read_csv(in);
  EXPECT_EQ(back.matrix.values.data, m.values.data);
  EXPECT_EQ(back.matrix.cols, m.cols);
}

TEST(MetricCsv, PublishedTableShape) {
  auto m = published_table();
  EXPECT_EQ(m.rows.size(), 65u);
  EXPECT_EQ(m.cols.size(), 11u);
  EXPECT_NO_THROW(m.check());
  EXPECT_DOUBLE_EQ(m.values(0, m.column("cpu")), 94.45);
}

// ---- normalize ---------------------------------------------------------

TEST(Normalize, DividesByReferenceCycles) {
  MetricMatrix m = make({"synch", "cpu", "refcycles"}, {{100, 94.45, 1000}});
  auto f = normalize(m);
  ASSERT_TRUE(f.diagnostics.empty());
  EXPECT_EQ(f.matrix.cols, (std::vector<std::string>{"synch", "cpu"}));
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 1), 94.45);
}

TEST(Normalize, ZeroReferenceRowExcluded) {
  MetricMatrix m = make({"synch", "refcycles"}, {{100, 0}, {5, 10}});
  auto f = normalize(m);
  EXPECT_EQ(f.matrix.rows, std::vector<std::string>{"b1"});
  ASSERT_EQ(f.diagnostics.size(), 1u);
  EXPECT_NE(f.diagnostics[0].find("b0"), std::string::npos);
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 0), 0.5);
}

TEST(Normalize, CustomSkipSet) {
  MetricMatrix m = make({"cachemiss", "cpu", "refcycles"}, {{50, 10, 100}});
  auto f = normalize(m, "refcycles", {"cpu", "cachemiss"});
  EXPECT_DOUBLE_EQ(f.matrix.values(0, 0), 50);
  EXPECT_THROW(normalize(m, "cycles"), Error);
}

// ---- standardize -------------------------------------------------------

TEST(Standardize, OneTwoThree) {
  auto s = standardize(make({"a", "b"}, {{1, 5}, {2, 7}, {3, 6}}));
  EXPECT_EQ(s.y(0, 0), -1.0);
  EXPECT_EQ(s.y(1, 0), 0.0);
  EXPECT_EQ(s.y(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.stds[0], 1.0);
  EXPECT_DOUBLE_EQ(s.means[0], 2.0);
}

TEST(Standardize, Idempotent) {
  auto m = random_columns(30, 4, 3);
  auto s = standardize(m);
  MetricMatrix again;
  again.cols = s.cols;
  again.rows = s.rows;
  again.values = s.y;
  again.provenance.assign(s.rows.size(), Provenance::Ingested);
  auto t = standardize(again);
  for (std::size_t i = 0; i < s.y.data.size(); ++i) EXPECT_NEAR(t.y.data[i], s.y.data[i], 1e-12);
}

TEST(Standardize, ConstantColumnNamed) {
  try {
    standardize(make({"a", "flat"}, {{1, 5}, {2, 5}, {3, 5}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'flat'"), std::string::npos);
  }
}

TEST(Standardize, PublishedColumnsCentered) {
  auto s = standardize(published_table());
  for (std::size_t j = 0; j < s.y.cols; ++j) {
    double mean = 0, ss = 0;
    for (std::size_t i = 0; i < s.y.rows; ++i) mean += s.y(i, j);
    mean /= static_cast<double>(s.y.rows);
    for (std::size_t i = 0; i < s.y.rows; ++i) ss += (s.y(i, j) - mean) * (s.y(i, j) - mean);
    EXPECT_LT(std::abs(mean), 1e-9) << s.cols[j];
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(s.y.rows - 1)), 1.0, 1e-9) << s.cols[j];
  }
}

// ---- eigensolver -------------------------------------------------------

TEST(Jacobi, MatchesEigenOnRandomSymmetric) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 14);
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = u(rng);
    }
    auto r = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(to_eigen(a));
    auto mine = r.values;
    std::sort(mine.begin(), mine.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(mine[i], oracle.eigenvalues()(static_cast<Eigen::Index>(i)), 1e-9);
    Eigen::MatrixXd v = to_eigen(r.vectors);
    EXPECT_LT((v * v.transpose() - Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))).norm(), 1e-9);
    EXPECT_LT(r.residual, 1e-12);
  }
}

TEST(Jacobi, RejectsNonSquare) { EXPECT_THROW(jacobi_eigen(Matrix(2, 3)), Error); }

// ---- PCA ---------------------------------------------------------------

void expect_model_properties(const PcaModel& m, const Standardized& s) {
  const std::size_t k = m.metrics.size();
  const std::size_t n = m.benchmarks.size();
  Matrix vvt = m.loadings * m.loadings.transposed();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(vvt(i, j), i == j ? 1.0 : 0.0, 1e-9);
  }
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    sum += m.eigenvalues[c];
    if (c) EXPECT_GE(m.eigenvalues[c - 1], m.eigenvalues[c]);
  }
  EXPECT_NEAR(sum, static_cast<double>(k), 1e-9);
  Matrix back = m.scores * m.loadings.transposed();
  for (std::size_t i = 0; i < back.data.size(); ++i) EXPECT_NEAR(back.data[i], s.y.data[i], 1e-9);
  for (std::size_t c = 0; c < k; ++c) {
    double mean = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) mean += m.scores(i, c);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) ss += (m.scores(i, c) - mean) * (m.scores(i, c) - mean);
    EXPECT_NEAR(ss / static_cast<double>(n - 1), m.eigenvalues[c], 1e-9);
  }
  for (std::size_t c = 0; c < k; ++c) {
    double biggest = 0;
    for (std::size_t i = 0; i < k; ++i) biggest = std::max(biggest, std::abs(m.loadings(i, c)));
    bool positive = false;
    for (std::size_t i = 0; i < k; ++i) positive |= m.loadings(i, c) >= biggest * (1 - 1e-9);
    EXPECT_TRUE(positive) << "PC" << c + 1;
  }
}

TEST(Pca, RankOneCorrelation) {
  auto s = standardize(make({"x", "y"}, {{1, 2}, {2, 4}, {3, 6}, {5, 10}}));
  auto m = pca_fit(s);
  EXPECT_NEAR(m.eigenvalues[0], 2.0, 1e-9);
  EXPECT_NEAR(m.eigenvalues[1], 0.0, 1e-9);
  EXPECT_NEAR(m.loadings(0, 0), m.loadings(1, 0), 1e-12);
  EXPECT_NEAR(m.loadings(0, 0), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(m.explained[0], 1.0, 1e-9);
}

TEST(Pca, IndependentColumnsShareVariance) {
  auto s = standardize(random_columns(20000, 4, 5));
  auto m = pca_fit(s);
  for (double r : m.explained) EXPECT_NEAR(r, 0.25, 0.02);
}

TEST(Pca, PublishedDatasetProperties) {
  auto s = standardize(published_table());
  auto m = pca_fit(s);
  ASSERT_EQ(m.metrics.size(), 11u);
  expect_model_properties(m, s);
}

TEST(Pca, PublishedDatasetMatchesEigen) {
  auto s = standardize(published_table());
  auto m = pca_fit(s);
  Eigen::MatrixXd y = to_eigen(s.y);
  Eigen::MatrixXd corr = y.transpose() * y / static_cast<double>(s.y.rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(corr);
  const Eigen::Index k = corr.rows();
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = k - 1 - c; // Eigen sorts ascending
    EXPECT_NEAR(m.eigenvalues[static_cast<std::size_t>(c)], oracle.eigenvalues()(src), 1e-9);
    double dot = 0;
    for (Eigen::Index i = 0; i < k; ++i) dot += m.loadings(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) * oracle.eigenvectors()(i, src);
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-9);
  }
}

TEST(Pca, RandomDataProperties) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    auto s = standardize(random_columns(40, 3 + seed * 3, seed));
    expect_model_properties(pca_fit(s), s);
  }
}

TEST(Pca, ColumnPermutationPermutesLoadings) {
  auto base = published_table();
  std::vector<std::size_t> perm(base.cols.size());
  for (std::size_t j = 0; j < perm.size(); ++j) perm[j] = perm.size() - 1 - j;
  std::rotate(perm.begin(), perm.begin() + 3, perm.end());
  MetricMatrix shuffled;
  for (std::size_t j : perm) shuffled.cols.push_back(base.cols[j]);
  shuffled.values.cols = shuffled.cols.size();
  for (std::size_t i = 0; i < base.rows.size(); ++i) {
    std::vector<double> row;
    for (std::size_t j : perm) row.push_back(base.values(i, j));
    shuffled.add_row(base.rows[i], row, Provenance::Ingested);
  }
  auto a = pca_fit(standardize(base));
  auto b = pca_fit(standardize(shuffled));
  for (std::size_t jb = 0; jb < perm.size(); ++jb) {
    const std::size_t ja = perm[jb];
    for (std::size_t c = 0; c < perm.size(); ++c) EXPECT_NEAR(b.loadings(jb, c), a.loadings(ja, c), 1e-9);
  }
}

// ---- ranked loadings ---------------------------------------------------

TEST(TopComponents, RankOneTieBrokenByName) {
  auto m = pca_fit(standardize(make({"zeta", "alpha"}, {{1, 2}, {2, 4}, {3, 6}})));
  auto t = top_components(m, 1);
  ASSERT_EQ(t.size(), 1u);
  ASSERT_EQ(t[0].size(), 2u);
  EXPECT_EQ(t[0][0].metric, "alpha");
  EXPECT_EQ(t[0][1].metric, "zeta");
  EXPECT_NEAR(std::abs(t[0][0].loading), std::abs(t[0][1].loading), 1e-12);
}

TEST(TopComponents, ShapeOnElevenMetrics) {
  auto m = pca_fit(standardize(published_table()));
  auto t = top_components(m, 4);
  ASSERT_EQ(t.size(), 4u);
  for (const auto& col : t) {
    EXPECT_EQ(col.size(), 11u);
    for (std::size_t r = 1; r < col.size(); ++r) EXPECT_GE(std::abs(col[r - 1].loading), std::abs(col[r].loading));
  }
  EXPECT_THROW(top_components(m, 0), Error);
  EXPECT_THROW(top_components(m, 12), Error);
  std::ostringstream out;
  write_loadings_csv(out, t);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "PC1,load,PC2,load,PC3,load,PC4,load");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
}

TEST(TopComponents, AtomicDominatesSecondComponent) {
  // object/method/array move together; park and wait are noisy copies of atomic.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0, 1);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 2000; ++i) {
    const double f = g(rng), a = g(rng);
    rows.push_back({50 + f + 0.05 * g(rng), 50 + f + 0.05 * g(rng), 50 + f + 0.05 * g(rng), 50 + a, 50 + a + g(rng), 50 + a + g(rng)});
  }
  auto m = pca_fit(standardize(make({"object", "method", "array", "atomic", "park", "wait"}, rows)));
  auto t = top_components(m, 2);
  EXPECT_EQ(t[1][0].metric, "atomic");
  const std::set<std::string> group{"object", "method", "array"};
  for (int r = 0; r < 3; ++r) EXPECT_TRUE(group.count(t[0][static_cast<std::size_t>(r)].metric));
}

TEST(PcaOutput, VarianceAndScoresCsv) {
  auto m = pca_fit(standardize(make({"x", "y"}, {{1, 2}, {2, 1}, {3, 5}})));
  std::ostringstream v, s;
  write_variance_csv(v, m);
  write_scores_csv(s, m);
  EXPECT_EQ(v.str().rfind("component,eigenvalue,explained,cumulative\nPC1,", 0), 0u);
  EXPECT_EQ(s.str().rfind("benchmark,PC1,PC2\nb0,", 0), 0u);
}

} // namespace
} // namespace cirlab
