#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vbblocks/numeric.hpp"

using namespace vbb::numeric;

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

double pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

}  // namespace

TEST(NormalFunctions, CdfMatchesErfc) {
  for (double x : {-40.0, -12.0, -5.5, -1.0, 0.0, 0.3, 2.0, 8.0}) {
    EXPECT_NEAR(normal_cdf(x), 0.5 * std::erfc(-x / std::sqrt(2.0)), 1e-15 * (1 + normal_cdf(x))) << x;
    EXPECT_NEAR(normal_pdf(x), pdf(x), 1e-300 + 1e-15 * pdf(x));
  }
}

TEST(NormalFunctions, LogCdfStaysFiniteInTheTail) {
  // Reference from the asymptotic series for x -> -inf.
  const double x = -60.0;
  const double series = -0.5 * x * x - std::log(-x) - 0.5 * std::log(2 * std::numbers::pi) +
                        std::log(1.0 - 1.0 / (x * x) + 3.0 / std::pow(x, 4) - 15.0 / std::pow(x, 6));
  EXPECT_NEAR(log_normal_cdf(x), series, 1e-9);
  EXPECT_NEAR(log_normal_cdf(-3.0), std::log(0.5 * std::erfc(3.0 / std::sqrt(2.0))), 1e-13);
}

TEST(NormalFunctions, InverseMillsAcrossBranches) {
  for (double x : {-30.0, -6.0, -5.01, -4.99, -2.0, 0.0, 3.0}) {
    const double direct = pdf(x) / (0.5 * std::erfc(-x / std::sqrt(2.0)));
    EXPECT_NEAR(inverse_mills(x), direct, 1e-11 * direct) << x;
  }
}

class TruncatedNormal : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(TruncatedNormal, MomentsAndEntropyMatchQuadrature) {
  const auto [loc, scale2] = GetParam();
  const double sd = std::sqrt(scale2);
  const double z = oracle::integrate([&](double s) { return pdf((s - loc) / sd) / sd; }, 0.0, INFINITY);
  const double m1 = oracle::integrate([&](double s) { return s * pdf((s - loc) / sd) / sd; }, 0.0, INFINITY) / z;
  const double m2 =
      oracle::integrate([&](double s) { return s * s * pdf((s - loc) / sd) / sd; }, 0.0, INFINITY) / z;
  const double h = oracle::integrate(
      [&](double s) {
        const double p = pdf((s - loc) / sd) / sd / z;
        return p > 0 ? -p * std::log(p) : 0.0;
      },
      0.0, INFINITY);
  const auto m = truncated_normal_moments(loc, scale2);
  EXPECT_NEAR(m.mean, m1, 1e-8);
  EXPECT_NEAR(m.variance, m2 - m1 * m1, 1e-8);
  EXPECT_NEAR(truncated_normal_entropy(loc, scale2), h, 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Grid, TruncatedNormal,
                         ::testing::Values(std::pair{0.0, 1.0}, std::pair{1.5, 0.3}, std::pair{-2.0, 1.0},
                                           std::pair{-4.0, 0.25}, std::pair{3.0, 4.0}, std::pair{0.2, 0.01}));

TEST(TruncatedNormal, StandardCase) {
  const auto m = truncated_normal_moments(0.0, 1.0);
  EXPECT_NEAR(m.mean, std::sqrt(2.0 / std::numbers::pi), 1e-14);
  EXPECT_NEAR(m.variance, 1.0 - 2.0 / std::numbers::pi, 1e-14);
}

TEST(TruncatedNormal, FarTailStaysPositiveAndSmall) {
  // For loc << 0 the truncated law approaches an exponential with rate -loc/scale2.
  const auto m = truncated_normal_moments(-200.0, 1.0);
  EXPECT_GT(m.mean, 0.0);
  EXPECT_NEAR(m.mean, 1.0 / 200.0, 1e-6);
  EXPECT_NEAR(m.variance, 1.0 / (200.0 * 200.0), 1e-8);
}

class NonlinMomentsTest : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(NonlinMomentsTest, ExpSquareMatchesQuadrature) {
  const auto [mu, v] = GetParam();
  const auto m = expsquare_moments(mu, v);
  const double q1 = oracle::normal_expectation_adaptive([](double s) { return std::exp(-s * s); }, mu, v);
  const double q2 = oracle::normal_expectation_adaptive([](double s) { return std::exp(-2 * s * s); }, mu, v);
  EXPECT_NEAR(m.m1, q1, 1e-8);
  EXPECT_NEAR(m.m2, q2, 1e-8);
}

TEST_P(NonlinMomentsTest, CutMatchesQuadrature) {
  const auto [mu, v] = GetParam();
  const auto m = cut_moments(mu, v);
  const double q1 = oracle::normal_expectation_adaptive([](double s) { return std::max(s, 0.0); }, mu, v, {0.0});
  const double q2 = oracle::normal_expectation_adaptive([](double s) { return s > 0 ? s * s : 0.0; }, mu, v, {0.0});
  EXPECT_NEAR(m.m1, q1, 1e-8);
  EXPECT_NEAR(m.m2, q2, 1e-8);
}

TEST_P(NonlinMomentsTest, DerivativesMatchFiniteDifferences) {
  const auto [mu, v] = GetParam();
  for (auto fn : {&expsquare_moments, &cut_moments}) {
    const auto m = fn(mu, v);
    auto m1_mu = [&](double x) { return fn(x, v).m1; };
    auto m1_v = [&](double x) { return fn(mu, x).m1; };
    auto m2_mu = [&](double x) { return fn(x, v).m2; };
    auto m2_v = [&](double x) { return fn(mu, x).m2; };
    const double h = 1e-5 * std::min(1.0, v);
    EXPECT_NEAR(m.m1_mu, oracle::derivative(m1_mu, mu), 1e-6);
    EXPECT_NEAR(m.m1_v, oracle::derivative(m1_v, v, h), 1e-6);
    EXPECT_NEAR(m.m2_mu, oracle::derivative(m2_mu, mu), 1e-6);
    EXPECT_NEAR(m.m2_v, oracle::derivative(m2_v, v, h), 1e-6);
    EXPECT_NEAR(m.m1_mumu, oracle::derivative([&](double x) { return fn(x, v).m1_mu; }, mu), 1e-5);
    EXPECT_NEAR(m.m1_muv, oracle::derivative([&](double x) { return fn(mu, x).m1_mu; }, v, h), 1e-5);
    EXPECT_NEAR(m.m1_vv, oracle::derivative([&](double x) { return fn(mu, x).m1_v; }, v, h), 1e-5);
    EXPECT_NEAR(m.m2_mumu, oracle::derivative([&](double x) { return fn(x, v).m2_mu; }, mu), 1e-5);
    EXPECT_NEAR(m.m2_muv, oracle::derivative([&](double x) { return fn(mu, x).m2_mu; }, v, h), 1e-5);
    EXPECT_NEAR(m.m2_vv, oracle::derivative([&](double x) { return fn(mu, x).m2_v; }, v, h), 1e-5);
  }
}

INSTANTIATE_TEST_SUITE_P(Grid, NonlinMomentsTest,
                         ::testing::Values(std::pair{0.0, 0.5}, std::pair{2.0, 1.0}, std::pair{-0.7, 0.2},
                                           std::pair{0.3, 3.0}, std::pair{-3.0, 0.8}));

TEST(NonlinMoments, PointMasses) {
  const auto e = expsquare_moments(0.0, 0.0);
  EXPECT_DOUBLE_EQ(e.m1, 1.0);
  EXPECT_DOUBLE_EQ(e.m2, 1.0);
  const auto c = cut_moments(5.0, 0.0);
  EXPECT_DOUBLE_EQ(c.m1, 5.0);
  EXPECT_DOUBLE_EQ(c.m2, 25.0);
  const auto n = cut_moments(-5.0, 0.0);
  EXPECT_DOUBLE_EQ(n.m1, 0.0);
  EXPECT_DOUBLE_EQ(n.m2, 0.0);
}
