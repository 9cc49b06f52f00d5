#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dat/grid.hpp"

using namespace dat;

TEST(TimeGrid, CentersAreMidpoints) {
  TimeGrid g(2.0, 4);
  EXPECT_DOUBLE_EQ(g.dt(), 0.5);
  EXPECT_DOUBLE_EQ(g.center(0), 0.25);
  EXPECT_DOUBLE_EQ(g.center(3), 1.75);
  const auto c = g.centers();
  for (std::size_t k = 1; k < c.size(); ++k) EXPECT_NEAR(c[k] - c[k - 1], g.dt(), 1e-15);
}

TEST(TimeGrid, RejectsDegenerateInput) {
  EXPECT_THROW(TimeGrid(1.0, 1), Error);
  EXPECT_THROW(TimeGrid(0.0, 10), Error);
  EXPECT_THROW(TimeGrid(-1.0, 10), Error);
}

TEST(TimeGrid, BinOfClamps) {
  TimeGrid g(1.0, 10);
  EXPECT_EQ(g.bin_of(0.05), 0u);
  EXPECT_EQ(g.bin_of(0.35), 3u);
  EXPECT_EQ(g.bin_of(-3.0), 0u);
  EXPECT_EQ(g.bin_of(7.0), 9u);
}

TEST(Measure, RejectsNegativeAndWrongLength) {
  TimeGrid g(1.0, 3);
  EXPECT_THROW(Measure(g, {0.5, -0.1, 0.6}), Error);
  EXPECT_THROW(Measure(g, {0.5, 0.5}), Error);
  EXPECT_THROW(Measure(g, {0.5, NAN, 0.5}), Error);
}

TEST(Cdf, DiracAtStart) {
  TimeGrid g(1.0, 6);
  for (double f : cdf(Measure::dirac(g, 0))) EXPECT_DOUBLE_EQ(f, 1.0);
}

TEST(Cdf, Uniform) {
  TimeGrid g(1.0, 10);
  const auto f = cdf(Measure::uniform(g));
  for (std::size_t k = 0; k < f.size(); ++k) EXPECT_NEAR(f[k], (k + 1) / 10.0, 1e-15);
}

TEST(Cdf, TwoAtoms) {
  TimeGrid g(1.0, 8);
  std::vector<double> m(8, 0.0);
  m[2] = 0.3;
  m[5] = 0.7;
  const auto f = cdf(Measure(g, m));
  const std::vector<double> expect{0, 0, 0.3, 0.3, 0.3, 1, 1, 1};
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(f[k], expect[k], 1e-15);
}

TEST(Quantile, Examples) {
  TimeGrid g(1.0, 10);
  EXPECT_DOUBLE_EQ(quantile(Measure::uniform(g), 0.05), g.center(0));
  for (double u : {0.01, 0.5, 1.0}) EXPECT_DOUBLE_EQ(quantile(Measure::dirac(g, 4), u), g.center(4));

  TimeGrid g8(1.0, 8);
  std::vector<double> m(8, 0.0);
  m[2] = 0.3;
  m[5] = 0.7;
  EXPECT_DOUBLE_EQ(quantile(Measure(g8, m), 0.31), g8.center(5));
  EXPECT_DOUBLE_EQ(quantile(Measure(g8, m), 0.3), g8.center(2));
}

TEST(Quantile, RejectsNonProbability) {
  TimeGrid g(1.0, 4);
  try {
    quantile(Measure(g, {0.2, 0.2, 0.2, 0.2}), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonProbability);
  }
}

TEST(Quantile, RoundTripProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TimeGrid g(1.0, 25);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> m(g.size());
    double total = 0.0;
    for (auto& x : m) total += (x = unif(rng) < 0.3 ? 0.0 : unif(rng));
    if (total == 0.0) continue;
    for (auto& x : m) x /= total;
    const Measure mu(g, m);
    const auto f = cdf(mu);
    for (std::size_t k = 1; k < f.size(); ++k) EXPECT_GE(f[k], f[k - 1]);
    for (int s = 0; s < 20; ++s) {
      const double u = 1e-6 + (1.0 - 1e-6) * unif(rng);
      const auto k = quantile_bin(mu, u);
      EXPECT_GE(f[k], u - 1e-12);
      if (k > 0) {
        EXPECT_LT(f[k - 1], u);
      }
    }
  }
}

TEST(GaussianMixture, FlatLimit) {
  TimeGrid g(1.0, 50);
  const auto m = gaussian_mixture(g, {{1.0, 0.5, 100.0}});
  EXPECT_NEAR(m.total(), 1.0, 1e-12);
  for (double x : m.mass()) EXPECT_NEAR(x, 1.0 / 50, 1e-6);
}

TEST(GaussianMixture, DiracLimit) {
  TimeGrid g(1.0, 50);
  const auto m = gaussian_mixture(g, {{1.0, 0.333, 1e-9}});
  EXPECT_NEAR(m.total(), 1.0, 1e-12);
  EXPECT_NEAR(m[g.bin_of(0.333)], 1.0, 1e-12);
}

TEST(GaussianMixture, BimodalPeaksMatchDirectEvaluation) {
  TimeGrid g(1.0, 100);
  const auto m = gaussian_mixture(g, {{0.5, 0.2, 0.05}, {0.5, 0.8, 0.05}});
  EXPECT_NEAR(m.total(), 1.0, 1e-12);
  // independent evaluation of the density at bin centers
  std::vector<double> ref(100);
  double total = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    const double t = g.center(k);
    ref[k] = 0.5 * std::exp(-0.5 * std::pow((t - 0.2) / 0.05, 2)) + 0.5 * std::exp(-0.5 * std::pow((t - 0.8) / 0.05, 2));
    total += ref[k];
  }
  for (std::size_t k = 0; k < 100; ++k) EXPECT_NEAR(m[k], ref[k] / total, 1e-14);
  std::size_t left = 0;
  std::size_t right = 50;
  for (std::size_t k = 0; k < 50; ++k)
    if (m[k] > m[left]) left = k;
  for (std::size_t k = 50; k < 100; ++k)
    if (m[k] > m[right]) right = k;
  EXPECT_TRUE(left == 19 || left == 20);
  EXPECT_TRUE(right == 79 || right == 80);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_NEAR(m[k], m[99 - k], 1e-15);
}

TEST(GaussianMixture, RejectsBadComponents) {
  TimeGrid g(1.0, 10);
  EXPECT_THROW(gaussian_mixture(g, {{-0.1, 0.5, 0.1}, {1.1, 0.5, 0.1}}), Error);
  EXPECT_THROW(gaussian_mixture(g, {{1.0, 0.5, 0.0}}), Error);
}

TEST(GaussianMixture, AlwaysNormalized) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TimeGrid g(2.0, 64);
  for (int i = 0; i < 50; ++i) {
    const auto m = gaussian_mixture(g, {{unif(rng), 2 * unif(rng), 0.01 + unif(rng)}, {unif(rng), 2 * unif(rng), 0.01 + unif(rng)}});
    EXPECT_NEAR(m.total(), 1.0, 1e-12);
  }
}

TEST(JointMeasure, Marginals) {
  TimeGrid g(1.0, 3);
  Matrix j(3, 3, 0.0);
  j(0, 1) = 0.25;
  j(0, 2) = 0.25;
  j(1, 2) = 0.5;
  const JointMeasure jm(g, j);
  EXPECT_DOUBLE_EQ(jm.total(), 1.0);
  EXPECT_DOUBLE_EQ(jm.first_marginal()[0], 0.5);
  EXPECT_DOUBLE_EQ(jm.second_marginal()[2], 0.75);
}
