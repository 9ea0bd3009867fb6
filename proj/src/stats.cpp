#include "cirlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cirlab/error.hpp"

namespace cirlab {

namespace {

constexpr double kTolerance = 1e-12;
constexpr int kMaxIterations = 1000;

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTolerance) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

void check_sample(const SampleSet& s) {
  if (s.values.size() < 2) throw Error("sample '" + s.label + "' needs at least 2 values");
  for (double v : s.values) {
    if (!std::isfinite(v)) throw Error("sample '" + s.label + "' has a non-finite value");
  }
}

} // namespace

double mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw Error("incomplete beta needs positive shape parameters");
  if (x < 0 || x > 1) throw Error("incomplete beta argument outside [0, 1]");
  if (x == 0 || x == 1) return x;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1) / (a + b + 2)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0)) throw Error("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(df / 2, 0.5, df / (df + t * t)), 0.0, 1.0);
}

WelchResult welch_t(const SampleSet& a, const SampleSet& b) {
  check_sample(a);
  check_sample(b);
  const double na = static_cast<double>(a.values.size());
  const double nb = static_cast<double>(b.values.size());
  const double ma = mean(a.values), mb = mean(b.values);
  const double va = sample_variance(a.values) / na;
  const double vb = sample_variance(b.values) / nb;
  WelchResult r;
  if (va + vb == 0) {
    r.df = na + nb - 2;
    if (ma == mb) return r;
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0;
    r.degenerate = true;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
  r.p = student_t_two_sided(r.t, r.df);
  return r;
}

SampleSet winsorize(const SampleSet& a, double fraction) {
  if (!(fraction >= 0 && fraction < 0.5)) throw Error("winsorize fraction must lie in [0, 0.5)");
  SampleSet out = a;
  const std::size_t n = a.values.size();
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n == 0 || k == 0) return out;
  std::vector<double> sorted = a.values;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[k], hi = sorted[n - 1 - k];
  for (double& v : out.values) v = std::clamp(v, lo, hi);
  return out;
}

} // namespace cirlab
