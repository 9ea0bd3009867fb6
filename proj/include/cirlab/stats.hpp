#pragma once

// Welch's two-sample t-test and Winsorized filtering.

#include <string>
#include <vector>

namespace cirlab {

struct SampleSet {
  std::vector<double> values;
  std::string label;
};

double mean(const std::vector<double>& xs);
/// Sample (n-1) variance.
double sample_variance(const std::vector<double>& xs);

/// Regularized incomplete beta I_x(a, b), continued fraction to 1e-12.
double incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct WelchResult {
  double t = 0;
  double df = 0;
  double p = 1;
  bool degenerate = false; // both variances zero with different means
};

/// Two-sided Welch test of mean(a) == mean(b). Throws Error when either
/// sample has fewer than 2 values or a non-finite value.
WelchResult welch_t(const SampleSet& a, const SampleSet& b);

/// Replaces the lowest and highest floor(fraction * n) values with the
/// nearest retained value. Order is preserved. Throws Error unless
/// 0 <= fraction < 0.5.
SampleSet winsorize(const SampleSet& a, double fraction);

} // namespace cirlab
