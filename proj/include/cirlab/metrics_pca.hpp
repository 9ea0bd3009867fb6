#pragma once

// Metric matrices and correlation PCA.
//
// Rows are benchmarks, columns are metrics. The usual flow is
// read_csv -> normalize -> standardize -> pca_fit -> top_components.

#include <cstddef>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cirlab {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Matrix identity(std::size_t n);
  Matrix transposed() const;
};

Matrix operator*(const Matrix& a, const Matrix& b);

enum class Provenance { Interpreter, Ingested };

struct MetricMatrix {
  std::vector<std::string> rows; // benchmark names
  std::vector<std::string> cols; // metric names
  Matrix values;                 // rows.size() x cols.size()
  std::vector<Provenance> provenance;

  /// Index of a column; throws Error when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  /// Throws Error unless rectangular, K >= 2, finite and nonnegative.
  void check() const;
  void add_row(std::string name, const std::vector<double>& row, Provenance from);
};

/// Result of an operation that drops offending rows instead of failing.
struct Filtered {
  MetricMatrix matrix;
  std::vector<std::string> diagnostics; // one line per rejected row
};

/// Parses a metric CSV: header "benchmark,<metric>...", one row per
/// benchmark. Rows with missing, non-numeric, or negative cells are rejected.
Filtered read_csv(std::istream& in, Provenance from = Provenance::Ingested);
Filtered read_csv_file(const std::string& path, Provenance from = Provenance::Ingested);
void write_csv(std::ostream& out, const MetricMatrix& m);

/// Divides every column not in `skip` by `refcol` rowwise and drops `refcol`.
/// Rows whose reference value is not strictly positive are rejected.
Filtered normalize(const MetricMatrix& m, std::string_view refcol = "refcycles",
                   const std::set<std::string, std::less<>>& skip = {"cpu"});

/// Drops the named rows; names not present are ignored.
MetricMatrix exclude_rows(const MetricMatrix& m, const std::set<std::string, std::less<>>& names);

struct Standardized {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  Matrix y;
  std::vector<double> means;
  std::vector<double> stds; // sample (n-1) standard deviations
};

/// Throws Error naming the first constant column.
Standardized standardize(const MetricMatrix& m);

struct PcaModel {
  std::vector<std::string> metrics;
  std::vector<std::string> benchmarks;
  std::vector<double> means;
  std::vector<double> stds;
  Matrix loadings;                  // K x K, column k is PC(k+1)
  std::vector<double> eigenvalues;  // descending
  Matrix scores;                    // N x K, Y * loadings
  std::vector<double> explained;    // eigenvalue / sum of eigenvalues
  int sweeps = 0;
};

struct EigenResult {
  std::vector<double> values; // unsorted, matching the columns of vectors
  Matrix vectors;
  int sweeps = 0;
  double residual = 0.0; // off-diagonal Frobenius norm at exit
};

/// Cyclic Jacobi on a symmetric matrix. Throws Error if the off-diagonal
/// norm is still above 1e-12 after 100 sweeps.
EigenResult jacobi_eigen(const Matrix& a);

/// Correlation PCA. Eigenpairs are sorted by eigenvalue, descending, and
/// every eigenvector is flipped so its largest-magnitude entry is positive.
PcaModel pca_fit(const Standardized& s);

struct RankedLoading {
  std::string metric;
  double loading = 0.0;
};

/// For each of the first j components, its loadings ordered by absolute
/// value descending, ties broken by metric name.
std::vector<std::vector<RankedLoading>> top_components(const PcaModel& model, int j);

/// One row per rank: "PC1,load,PC2,load,...".
void write_loadings_csv(std::ostream& out, const std::vector<std::vector<RankedLoading>>& table);
void write_scores_csv(std::ostream& out, const PcaModel& model);
/// "component,eigenvalue,explained,cumulative".
void write_variance_csv(std::ostream& out, const PcaModel& model);

} // namespace cirlab
