#ifndef VBBLOCKS_MESSAGES_HPP
#define VBBLOCKS_MESSAGES_HPP

// Sufficient-statistics algebra.  Forward messages carry the moments a node
// exposes to its children; backward messages are the coefficients with which
// a parent's moments enter the expected cost of its descendants.

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace vbb {

struct ForwardStats {
  double mean = 0.0;
  double variance = 0.0;
  /// <exp(s)>; present only for outputs allowed to act as variance parents.
  std::optional<double> exp_mean;

  double second_moment() const noexcept { return mean * mean + variance; }

  static ForwardStats constant(double value);
  static ForwardStats zero() { return constant(0.0); }
};

/// Per-sample factorial Gaussian posterior q(s) = N(mean, variance).
struct GaussianPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Cost contribution quad * <t^2> + lin * <t> of a mean-type parent t.
struct MeanPotential {
  double quad = 0.0;
  double lin = 0.0;
};

/// Cost contribution exp_coef * <exp t> + lin * <t> of a variance-type parent t.
struct VarPotential {
  double exp_coef = 0.0;
  double lin = 0.0;
};

/// Combined potential quad * <t^2> + lin * <t> + exp_coef * <exp t>.  A node
/// can be used both as a mean and as a variance parent, so the engine keeps
/// the sum of both kinds of message.
struct Potential {
  double quad = 0.0;
  double lin = 0.0;
  double exp_coef = 0.0;

  Potential() = default;
  Potential(double q, double l, double e) : quad(q), lin(l), exp_coef(e) {}
  explicit Potential(MeanPotential p) : quad(p.quad), lin(p.lin) {}
  explicit Potential(VarPotential p) : lin(p.lin), exp_coef(p.exp_coef) {}

  Potential& operator+=(const Potential& o) noexcept {
    quad += o.quad;
    lin += o.lin;
    exp_coef += o.exp_coef;
    return *this;
  }
  Potential scaled(double f) const noexcept { return {quad * f, lin * f, exp_coef * f}; }

  /// Value of the potential against a set of moments.  exp_coef is only read
  /// when non-zero, so mean-only stats are accepted for pure mean potentials.
  double evaluate(const ForwardStats& s) const;
};

ForwardStats forward_gaussian(const GaussianPosterior& q);
ForwardStats forward_sum(std::span<const ForwardStats> inputs);
ForwardStats forward_product(const ForwardStats& a, const ForwardStats& b);
ForwardStats forward_nonlin_expsquare(const GaussianPosterior& q);
ForwardStats forward_nonlin_cut(const GaussianPosterior& q);

MeanPotential backward_mean_through_sum(const MeanPotential& p, double sibling_mean_total);
MeanPotential backward_mean_through_product(const MeanPotential& p, const ForwardStats& other);

/// Throws Error(MissingExpStat) when a sibling lacks <exp s>; callers that
/// already hold the product of sibling exponentials use the scalar overload.
VarPotential backward_var_through_sum(const VarPotential& p, double sibling_exp_total);
VarPotential backward_var_through_sum(const VarPotential& p, std::span<const ForwardStats> siblings);

/// Full potential transformations used by the engine.
Potential backward_through_sum(const Potential& p, double sibling_mean_total,
                               double sibling_exp_total);
Potential backward_through_product(const Potential& p, const ForwardStats& other);

/// Messages from a Gaussian child s ~ N(m, exp(-v)) to its two parents.
std::pair<MeanPotential, VarPotential> gaussian_child_potentials(const ForwardStats& child,
                                                                 const ForwardStats& mean_parent,
                                                                 const ForwardStats& var_parent);

/// Expected negative log-density of a Gaussian child, per sample.
double gaussian_child_cost(const ForwardStats& child, const ForwardStats& mean_parent,
                           const ForwardStats& var_parent);

/// Delay: output(0) = init, output(t) = input(t - 1).
std::vector<ForwardStats> shift_delay(std::span<const ForwardStats> input, const ForwardStats& init);

/// Adjoint of shift_delay: routes output potentials to (input potentials, init potential).
std::pair<std::vector<Potential>, Potential> shift_delay_adjoint(std::span<const Potential> output);

}  // namespace vbb

#endif  // VBBLOCKS_MESSAGES_HPP
