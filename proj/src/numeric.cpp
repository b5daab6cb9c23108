#include "vbblocks/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vbb::numeric {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
// Below this argument the tail is evaluated with a continued fraction.
constexpr double kTailSwitch = -5.0;
constexpr int kFractionDepth = 400;

// For z > 0 returns (g, h) with
//   g = 1 / (z + 2 / (z + 3 / (z + ...))),  h = 2 / (z + 3 / (z + ...)),
// so that phi(-z)/Phi(-z) = z + g and g = 1 / (z + h).
struct TailFractions {
  double g;
  double h;
};

TailFractions tail_fractions(double z) noexcept {
  double t = 0.0;
  for (int n = kFractionDepth; n >= 2; --n) t = n / (z + t);
  return {1.0 / (z + t), t};
}

}  // namespace

double normal_pdf(double x) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double log_normal_cdf(double x) noexcept {
  if (x >= kTailSwitch) {
    if (x > 0.0) return std::log1p(-normal_cdf(-x));
    return std::log(normal_cdf(x));
  }
  return -0.5 * x * x - 0.5 * kLog2Pi - std::log(inverse_mills(x));
}

double inverse_mills(double x) noexcept {
  if (x >= kTailSwitch) return normal_pdf(x) / normal_cdf(x);
  const double z = -x;
  return z + tail_fractions(z).g;
}

Moments truncated_normal_moments(double loc, double scale2) noexcept {
  if (!(scale2 > kVarianceFloor)) return {std::max(loc, 0.0), 0.0};
  const double sigma = std::sqrt(scale2);
  const double alpha = loc / sigma;
  if (alpha >= kTailSwitch) {
    const double lambda = inverse_mills(alpha);
    const double var = scale2 * (1.0 - alpha * lambda - lambda * lambda);
    return {loc + sigma * lambda, std::max(var, 0.0)};
  }
  const auto [g, h] = tail_fractions(-alpha);
  return {sigma * g, scale2 * g * (h - g)};
}

double truncated_normal_entropy(double loc, double scale2) noexcept {
  const double scale = std::max(scale2, kVarianceFloor);
  const double sigma = std::sqrt(scale);
  const double alpha = loc / sigma;
  const double lambda = inverse_mills(alpha);
  return 0.5 * (kLog2Pi + 1.0 + std::log(scale)) + log_normal_cdf(alpha) - 0.5 * alpha * lambda;
}

NonlinMoments expsquare_moments(double mean, double var) noexcept {
  NonlinMoments r;
  const double d1 = 1.0 + 2.0 * var;
  const double d2 = 1.0 + 4.0 * var;
  r.m1 = std::exp(-mean * mean / d1) / std::sqrt(d1);
  r.m2 = std::exp(-2.0 * mean * mean / d2) / std::sqrt(d2);

  // Derivatives via the log: dM = M dlogM, d2M = M (dlogM dlogM + d2logM).
  const double l1_mu = -2.0 * mean / d1;
  const double l1_v = -1.0 / d1 + 2.0 * mean * mean / (d1 * d1);
  const double l1_mumu = -2.0 / d1;
  const double l1_muv = 4.0 * mean / (d1 * d1);
  const double l1_vv = 2.0 / (d1 * d1) - 8.0 * mean * mean / (d1 * d1 * d1);
  const double l2_mu = -4.0 * mean / d2;
  const double l2_v = -2.0 / d2 + 8.0 * mean * mean / (d2 * d2);
  const double l2_mumu = -4.0 / d2;
  const double l2_muv = 16.0 * mean / (d2 * d2);
  const double l2_vv = 8.0 / (d2 * d2) - 64.0 * mean * mean / (d2 * d2 * d2);

  r.m1_mu = r.m1 * l1_mu;
  r.m1_v = r.m1 * l1_v;
  r.m1_mumu = r.m1 * (l1_mu * l1_mu + l1_mumu);
  r.m1_muv = r.m1 * (l1_mu * l1_v + l1_muv);
  r.m1_vv = r.m1 * (l1_v * l1_v + l1_vv);
  r.m2_mu = r.m2 * l2_mu;
  r.m2_v = r.m2 * l2_v;
  r.m2_mumu = r.m2 * (l2_mu * l2_mu + l2_mumu);
  r.m2_muv = r.m2 * (l2_mu * l2_v + l2_muv);
  r.m2_vv = r.m2 * (l2_v * l2_v + l2_vv);
  return r;
}

NonlinMoments cut_moments(double mean, double var) noexcept {
  NonlinMoments r;
  if (!(var > kVarianceFloor)) {
    r.m1 = std::max(mean, 0.0);
    r.m2 = r.m1 * r.m1;
    const double step = mean > 0.0 ? 1.0 : 0.0;
    r.m1_mu = step;
    r.m2_mu = 2.0 * r.m1;
    r.m2_v = step;
    return r;
  }
  const double sigma = std::sqrt(var);
  const double alpha = mean / sigma;
  const double cdf = normal_cdf(alpha);
  const double pdf = normal_pdf(alpha);
  if (alpha >= kTailSwitch) {
    r.m1 = mean * cdf + sigma * pdf;
    r.m2 = (mean * mean + var) * cdf + mean * sigma * pdf;
  } else {
    // alpha*Phi + phi = Phi*g and alpha^2 + 1 + alpha*lambda = h*g.
    const auto [g, h] = tail_fractions(-alpha);
    r.m1 = sigma * cdf * g;
    r.m2 = var * cdf * h * g;
  }
  r.m1_mu = cdf;
  r.m1_v = pdf / (2.0 * sigma);
  r.m1_mumu = pdf / sigma;
  r.m1_muv = -alpha * pdf / (2.0 * var);
  r.m1_vv = pdf * (alpha * alpha - 1.0) / (4.0 * sigma * var);
  r.m2_mu = 2.0 * r.m1;
  r.m2_v = cdf;
  r.m2_mumu = 2.0 * cdf;
  r.m2_muv = pdf / sigma;
  r.m2_vv = -alpha * pdf / (2.0 * var);
  return r;
}

}  // namespace vbb::numeric
