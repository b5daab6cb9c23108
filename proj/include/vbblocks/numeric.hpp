#ifndef VBBLOCKS_NUMERIC_HPP
#define VBBLOCKS_NUMERIC_HPP

// Standard normal helpers and the closed-form moments used by the
// rectification and exp(-s^2) nodes.

namespace vbb::numeric {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kVarianceFloor = 1e-300;

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;
double log_normal_cdf(double x) noexcept;

/// phi(x) / Phi(x), stable for large negative x.
double inverse_mills(double x) noexcept;

struct Moments {
  double mean;
  double variance;
};

/// Moments of N(loc, scale2) truncated to [0, inf).
Moments truncated_normal_moments(double loc, double scale2) noexcept;

/// Differential entropy of N(loc, scale2) truncated to [0, inf).
double truncated_normal_entropy(double loc, double scale2) noexcept;

/// First and second raw moments of f(s) for s ~ N(mean, var), together with
/// their first and second partial derivatives with respect to (mean, var).
struct NonlinMoments {
  double m1 = 0.0, m2 = 0.0;
  double m1_mu = 0.0, m1_v = 0.0, m2_mu = 0.0, m2_v = 0.0;
  double m1_mumu = 0.0, m1_muv = 0.0, m1_vv = 0.0;
  double m2_mumu = 0.0, m2_muv = 0.0, m2_vv = 0.0;
};

/// f(s) = exp(-s^2).
NonlinMoments expsquare_moments(double mean, double var) noexcept;

/// f(s) = max(s, 0).  var == 0 is handled as a point mass.
NonlinMoments cut_moments(double mean, double var) noexcept;

}  // namespace vbb::numeric

#endif  // VBBLOCKS_NUMERIC_HPP
