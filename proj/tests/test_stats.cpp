#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cirlab/error.hpp"
#include "cirlab/stats.hpp"

namespace cirlab {
namespace {

SampleSet s(std::vector<double> v) { return {std::move(v), "s"}; }

double boost_two_sided(double t, double df) {
  boost::math::students_t dist(df);
  return 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TEST(IncompleteBeta, MatchesBoost) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shape(0.1, 40), unit(0, 1);
  for (int i = 0; i < 500; ++i) {
    double a = shape(rng), b = shape(rng), x = unit(rng);
    EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-10) << a << ' ' << b << ' ' << x;
  }
  EXPECT_EQ(incomplete_beta(2, 3, 0), 0);
  EXPECT_EQ(incomplete_beta(2, 3, 1), 1);
  EXPECT_THROW(incomplete_beta(0, 1, 0.5), Error);
  EXPECT_THROW(incomplete_beta(1, 1, 1.5), Error);
}

TEST(StudentT, MatchesBoost) {
  for (double df : {1.0, 2.5, 4.0, 10.0, 57.3, 1000.0}) {
    for (double t = -8; t <= 8; t += 0.37) EXPECT_NEAR(student_t_two_sided(t, df), boost_two_sided(t, df), 1e-10);
  }
}

TEST(Welch, ReferenceExample) {
  auto r = welch_t(s({1, 2, 3}), s({2, 3, 4}));
  EXPECT_NEAR(r.t, -1.2247448714, 1e-9);
  EXPECT_NEAR(r.df, 4.0, 1e-9);
  EXPECT_NEAR(r.p, 0.2878641347, 1e-9);
  EXPECT_NEAR(r.p, boost_two_sided(r.t, r.df), 1e-12);
  EXPECT_FALSE(r.degenerate);
}

TEST(Welch, IdenticalSamples) {
  auto r = welch_t(s({1, 2, 3, 4}), s({1, 2, 3, 4}));
  EXPECT_EQ(r.t, 0);
  EXPECT_NEAR(r.p, 1, 1e-12);
  auto flat = welch_t(s({5, 5, 5}), s({5, 5}));
  EXPECT_EQ(flat.t, 0);
  EXPECT_EQ(flat.p, 1);
  EXPECT_FALSE(flat.degenerate);
}

TEST(Welch, ZeroVarianceDifferentMeans) {
  auto r = welch_t(s({0, 0, 0}), s({1, 1, 1}));
  EXPECT_EQ(r.p, 0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_LT(r.t, 0);
}

TEST(Welch, AntisymmetricInT) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 50; ++i) {
    SampleSet a, b;
    for (int k = 0; k < 3 + i % 7; ++k) a.values.push_back(g(rng));
    for (int k = 0; k < 2 + i % 5; ++k) b.values.push_back(g(rng) + 0.5);
    auto ab = welch_t(a, b), ba = welch_t(b, a);
    EXPECT_NEAR(ab.t, -ba.t, 1e-12);
    EXPECT_NEAR(ab.p, ba.p, 1e-12);
    EXPECT_NEAR(ab.df, ba.df, 1e-9);
    EXPECT_GE(ab.p, 0);
    EXPECT_LE(ab.p, 1);
    EXPECT_NEAR(ab.p, boost_two_sided(ab.t, ab.df), 1e-10);
  }
}

TEST(Welch, PMonotoneInAbsT) {
  for (double df : {1.0, 3.0, 12.0, 80.0}) {
    double prev = 1.0;
    for (double t = 0; t <= 20; t += 0.05) {
      double p = student_t_two_sided(t, df);
      EXPECT_LE(p, prev + 1e-15);
      prev = p;
    }
  }
}

TEST(Welch, RejectsBadInput) {
  EXPECT_THROW(welch_t(s({1}), s({1, 2})), Error);
  EXPECT_THROW(welch_t(s({1, NAN}), s({1, 2})), Error);
}

TEST(Winsorize, Examples) {
  EXPECT_EQ(winsorize(s({1, 2, 3, 100}), 0.25).values, (std::vector<double>{2, 2, 3, 3}));
  EXPECT_EQ(winsorize(s({100, 1, 3, 2}), 0.25).values, (std::vector<double>{3, 2, 3, 2}));
  EXPECT_EQ(winsorize(s({4, 1, 9}), 0).values, (std::vector<double>{4, 1, 9}));
  EXPECT_EQ(winsorize(s({7, 7, 7, 7}), 0.3).values, (std::vector<double>{7, 7, 7, 7}));
  EXPECT_THROW(winsorize(s({1, 2}), 0.5), Error);
  EXPECT_THROW(winsorize(s({1, 2}), -0.1), Error);
}

TEST(Winsorize, LengthPreservedAndIdempotent) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1);
  for (int i = 0; i < 100; ++i) {
    SampleSet a;
    for (int k = 0; k < 1 + i; ++k) a.values.push_back(e(rng));
    for (double f : {0.05, 0.1, 0.2, 0.45}) {
      auto w = winsorize(a, f);
      EXPECT_EQ(w.values.size(), a.values.size());
      EXPECT_EQ(winsorize(w, f).values, w.values);
    }
  }
}

} // namespace
} // namespace cirlab
