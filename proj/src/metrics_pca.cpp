#include "cirlab/metrics_pca.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "cirlab/error.hpp"

namespace cirlab {

namespace {

constexpr double kJacobiTolerance = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) {
      if (i != j) sum += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(sum);
}

} // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw Error("matrix shape mismatch in product");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

std::size_t MetricMatrix::column(std::string_view name) const {
  auto it = std::find(cols.begin(), cols.end(), name);
  if (it == cols.end()) throw Error("no metric column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - cols.begin());
}

bool MetricMatrix::has_column(std::string_view name) const {
  return std::find(cols.begin(), cols.end(), name) != cols.end();
}

void MetricMatrix::check() const {
  if (cols.size() < 2) throw Error("metric matrix needs at least 2 columns");
  if (values.rows != rows.size() || values.cols != cols.size() || provenance.size() != rows.size()) {
    throw Error("metric matrix is not rectangular");
  }
  for (std::size_t i = 0; i < values.rows; ++i) {
    for (std::size_t j = 0; j < values.cols; ++j) {
      double v = values(i, j);
      if (!std::isfinite(v) || v < 0) {
        throw Error("row '" + rows[i] + "', column '" + cols[j] + "': value must be finite and nonnegative");
      }
    }
  }
}

void MetricMatrix::add_row(std::string name, const std::vector<double>& row, Provenance from) {
  if (values.cols == 0 && values.rows == 0) values.cols = cols.size();
  if (row.size() != cols.size()) throw Error("row '" + name + "' has " + std::to_string(row.size()) + " values, expected " + std::to_string(cols.size()));
  rows.push_back(std::move(name));
  values.data.insert(values.data.end(), row.begin(), row.end());
  ++values.rows;
  provenance.push_back(from);
}

Filtered read_csv(std::istream& in, Provenance from) {
  Filtered out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  auto header = split(line);
  if (header.size() < 3 || header[0] != "benchmark") {
    throw Error("metric CSV header must be 'benchmark,<metric>,<metric>...'");
  }
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j].empty()) throw Error("empty metric name in CSV header");
    out.matrix.cols.emplace_back(header[j]);
  }
  out.matrix.values.cols = out.matrix.cols.size();
  const std::size_t k = out.matrix.cols.size();
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    const std::string name(cells[0]);
    const std::string where = "line " + std::to_string(lineno) + " ('" + name + "'): ";
    if (cells.size() != k + 1) {
      out.diagnostics.push_back(where + "expected " + std::to_string(k) + " values, found " + std::to_string(cells.size() - 1));
      continue;
    }
    std::vector<double> row;
    std::string problem;
    for (std::size_t j = 0; j < k && problem.empty(); ++j) {
      auto v = parse_number(cells[j + 1]);
      if (cells[j + 1].empty()) {
        problem = "missing value for '" + out.matrix.cols[j] + "'";
      } else if (!v || !std::isfinite(*v)) {
        problem = "bad number '" + std::string(cells[j + 1]) + "' for '" + out.matrix.cols[j] + "'";
      } else if (*v < 0) {
        problem = "negative value for '" + out.matrix.cols[j] + "'";
      } else {
        row.push_back(*v);
      }
    }
    if (!problem.empty()) {
      out.diagnostics.push_back(where + problem);
      continue;
    }
    out.matrix.add_row(name, row, from);
  }
  return out;
}

Filtered read_csv_file(const std::string& path, Provenance from) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_csv(in, from);
}

void write_csv(std::ostream& out, const MetricMatrix& m) {
  out << "benchmark";
  for (const auto& c : m.cols) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out << m.rows[i];
    for (std::size_t j = 0; j < m.cols.size(); ++j) out << ',' << format_number(m.values(i, j));
    out << '\n';
  }
}

Filtered normalize(const MetricMatrix& m, std::string_view refcol, const std::set<std::string, std::less<>>& skip) {
  const std::size_t ref = m.column(refcol);
  Filtered out;
  for (std::size_t j = 0; j < m.cols.size(); ++j) {
    if (j != ref) out.matrix.cols.push_back(m.cols[j]);
  }
  out.matrix.values.cols = out.matrix.cols.size();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const double denom = m.values(i, ref);
    if (!(denom > 0)) {
      out.diagnostics.push_back("row '" + m.rows[i] + "': " + std::string(refcol) + " = " + format_number(denom) +
                                " is not positive; row excluded");
      continue;
    }
    std::vector<double> row;
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
      if (j == ref) continue;
      row.push_back(skip.count(m.cols[j]) ? m.values(i, j) : m.values(i, j) / denom);
    }
    out.matrix.add_row(m.rows[i], row, m.provenance[i]);
  }
  return out;
}

MetricMatrix exclude_rows(const MetricMatrix& m, const std::set<std::string, std::less<>>& names) {
  MetricMatrix out;
  out.cols = m.cols;
  out.values.cols = m.cols.size();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (names.count(m.rows[i])) continue;
    std::vector<double> row(m.values.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols.size()),
                            m.values.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.cols.size()));
    out.add_row(m.rows[i], row, m.provenance[i]);
  }
  return out;
}

Standardized standardize(const MetricMatrix& m) {
  const std::size_t n = m.rows.size();
  const std::size_t k = m.cols.size();
  if (n < 2) throw Error("standardization needs at least 2 rows");
  Standardized s{m.rows, m.cols, Matrix(n, k), std::vector<double>(k), std::vector<double>(k)};
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += m.values(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (m.values(i, j) - mean) * (m.values(i, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0)) throw Error("column '" + m.cols[j] + "' is constant and cannot be standardized");
    s.means[j] = mean;
    s.stds[j] = sd;
    for (std::size_t i = 0; i < n; ++i) s.y(i, j) = (m.values(i, j) - mean) / sd;
  }
  return s;
}

EigenResult jacobi_eigen(const Matrix& input) {
  if (input.rows != input.cols) throw Error("eigendecomposition needs a square matrix");
  const std::size_t n = input.rows;
  Matrix a = input;
  Matrix v = Matrix::identity(n);
  EigenResult r;
  for (; r.sweeps < kJacobiMaxSweeps; ++r.sweeps) {
    if (off_diagonal_norm(a) < kJacobiTolerance) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = std::abs(theta) > 1e150 ? 1.0 / (2.0 * theta)
                                           : std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  r.residual = off_diagonal_norm(a);
  if (r.residual >= kJacobiTolerance) {
    std::ostringstream msg;
    msg << "Jacobi eigensolver did not converge after " << kJacobiMaxSweeps << " sweeps (residual " << r.residual << ")";
    throw Error(msg.str());
  }
  r.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.values[i] = a(i, i);
  r.vectors = std::move(v);
  return r;
}

PcaModel pca_fit(const Standardized& s) {
  const std::size_t n = s.y.rows;
  const std::size_t k = s.y.cols;
  if (n < 2) throw Error("PCA needs at least 2 rows");
  Matrix corr = s.y.transposed() * s.y;
  for (double& x : corr.data) x /= static_cast<double>(n - 1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) corr(i, j) = corr(j, i) = 0.5 * (corr(i, j) + corr(j, i));
  }
  EigenResult eig = jacobi_eigen(corr);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return eig.values[x] > eig.values[y]; });

  PcaModel m;
  m.metrics = s.cols;
  m.benchmarks = s.rows;
  m.means = s.means;
  m.stds = s.stds;
  m.sweeps = eig.sweeps;
  m.loadings = Matrix(k, k);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t src = order[c];
    m.eigenvalues.push_back(eig.values[src]);
    total += eig.values[src];
    double biggest = 0.0;
    for (std::size_t i = 0; i < k; ++i) biggest = std::max(biggest, std::abs(eig.vectors(i, src)));
    // Near-ties resolve to the alphabetically first metric.
    std::size_t pivot = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::abs(eig.vectors(i, src)) >= biggest * (1 - 1e-9) && (pivot == k || s.cols[i] < s.cols[pivot])) pivot = i;
    }
    const double sign = eig.vectors(pivot, src) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < k; ++i) m.loadings(i, c) = sign * eig.vectors(i, src);
  }
  for (double l : m.eigenvalues) m.explained.push_back(l / total);
  m.scores = s.y * m.loadings;
  return m;
}

std::vector<std::vector<RankedLoading>> top_components(const PcaModel& model, int j) {
  const int k = static_cast<int>(model.metrics.size());
  if (j < 1 || j > k) throw Error("component count " + std::to_string(j) + " out of range 1.." + std::to_string(k));
  std::vector<std::vector<RankedLoading>> table;
  for (int c = 0; c < j; ++c) {
    std::vector<RankedLoading> col;
    for (int i = 0; i < k; ++i) {
      col.push_back({model.metrics[static_cast<std::size_t>(i)], model.loadings(static_cast<std::size_t>(i), static_cast<std::size_t>(c))});
    }
    std::sort(col.begin(), col.end(), [](const RankedLoading& a, const RankedLoading& b) {
      const double x = std::abs(a.loading), y = std::abs(b.loading);
      if (x != y) return x > y;
      return a.metric < b.metric;
    });
    table.push_back(std::move(col));
  }
  return table;
}

void write_loadings_csv(std::ostream& out, const std::vector<std::vector<RankedLoading>>& table) {
  for (std::size_t c = 0; c < table.size(); ++c) {
    out << (c ? "," : "") << "PC" << c + 1 << ",load";
  }
  out << '\n';
  const std::size_t depth = table.empty() ? 0 : table[0].size();
  for (std::size_t r = 0; r < depth; ++r) {
    for (std::size_t c = 0; c < table.size(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.6f", table[c][r].loading);
      out << (c ? "," : "") << table[c][r].metric << ',' << buf;
    }
    out << '\n';
  }
}

void write_scores_csv(std::ostream& out, const PcaModel& model) {
  out << "benchmark";
  for (std::size_t c = 0; c < model.metrics.size(); ++c) out << ",PC" << c + 1;
  out << '\n';
  for (std::size_t i = 0; i < model.benchmarks.size(); ++i) {
    out << model.benchmarks[i];
    for (std::size_t c = 0; c < model.scores.cols; ++c) out << ',' << format_number(model.scores(i, c));
    out << '\n';
  }
}

void write_variance_csv(std::ostream& out, const PcaModel& model) {
  out << "component,eigenvalue,explained,cumulative\n";
  double cumulative = 0.0;
  for (std::size_t c = 0; c < model.eigenvalues.size(); ++c) {
    cumulative += model.explained[c];
    out << "PC" << c + 1 << ',' << format_number(model.eigenvalues[c]) << ',' << format_number(model.explained[c]) << ','
        << format_number(cumulative) << '\n';
  }
}

} // namespace cirlab
