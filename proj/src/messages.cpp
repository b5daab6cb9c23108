#include "vbblocks/messages.hpp"

#include <algorithm>
#include <cmath>

#include "vbblocks/error.hpp"
#include "vbblocks/numeric.hpp"

namespace vbb {

ForwardStats ForwardStats::constant(double value) { return {value, 0.0, std::exp(value)}; }

double Potential::evaluate(const ForwardStats& s) const {
  double v = quad * s.second_moment() + lin * s.mean;
  if (exp_coef != 0.0) {
    if (!s.exp_mean) throw Error(ErrorCode::MissingExpStat, "potential needs <exp s>");
    v += exp_coef * *s.exp_mean;
  }
  return v;
}

ForwardStats forward_gaussian(const GaussianPosterior& q) {
  return {q.mean, q.variance, std::exp(q.mean + 0.5 * q.variance)};
}

ForwardStats forward_sum(std::span<const ForwardStats> inputs) {
  ForwardStats out{0.0, 0.0, 1.0};
  for (const auto& in : inputs) {
    out.mean += in.mean;
    out.variance += in.variance;
    if (out.exp_mean && in.exp_mean)
      *out.exp_mean *= *in.exp_mean;
    else
      out.exp_mean.reset();
  }
  return out;
}

ForwardStats forward_product(const ForwardStats& a, const ForwardStats& b) {
  const double var = a.mean * a.mean * b.variance + b.mean * b.mean * a.variance + a.variance * b.variance;
  return {a.mean * b.mean, var, std::nullopt};
}

ForwardStats forward_nonlin_expsquare(const GaussianPosterior& q) {
  const auto m = numeric::expsquare_moments(q.mean, q.variance);
  return {m.m1, std::max(m.m2 - m.m1 * m.m1, 0.0), std::nullopt};
}

ForwardStats forward_nonlin_cut(const GaussianPosterior& q) {
  const auto m = numeric::cut_moments(q.mean, q.variance);
  return {m.m1, std::max(m.m2 - m.m1 * m.m1, 0.0), std::nullopt};
}

MeanPotential backward_mean_through_sum(const MeanPotential& p, double sibling_mean_total) {
  return {p.quad, p.lin + 2.0 * p.quad * sibling_mean_total};
}

MeanPotential backward_mean_through_product(const MeanPotential& p, const ForwardStats& other) {
  return {p.quad * other.second_moment(), p.lin * other.mean};
}

VarPotential backward_var_through_sum(const VarPotential& p, double sibling_exp_total) {
  return {p.exp_coef * sibling_exp_total, p.lin};
}

VarPotential backward_var_through_sum(const VarPotential& p, std::span<const ForwardStats> siblings) {
  double total = 1.0;
  for (const auto& s : siblings) {
    if (!s.exp_mean) throw Error(ErrorCode::MissingExpStat, "summand lacks <exp s>");
    total *= *s.exp_mean;
  }
  return backward_var_through_sum(p, total);
}

Potential backward_through_sum(const Potential& p, double sibling_mean_total, double sibling_exp_total) {
  const auto m = backward_mean_through_sum({p.quad, p.lin}, sibling_mean_total);
  return {m.quad, m.lin, p.exp_coef * sibling_exp_total};
}

Potential backward_through_product(const Potential& p, const ForwardStats& other) {
  if (p.exp_coef != 0.0)
    throw Error(ErrorCode::MissingExpStat, "a product cannot act as a variance parent");
  const auto m = backward_mean_through_product({p.quad, p.lin}, other);
  return {m.quad, m.lin, 0.0};
}

std::pair<MeanPotential, VarPotential> gaussian_child_potentials(const ForwardStats& child,
                                                                 const ForwardStats& mean_parent,
                                                                 const ForwardStats& var_parent) {
  if (!var_parent.exp_mean) throw Error(ErrorCode::MissingExpStat, "variance parent lacks <exp v>");
  const double prec = *var_parent.exp_mean;
  const double diff = child.mean - mean_parent.mean;
  MeanPotential to_mean{0.5 * prec, -prec * child.mean};
  VarPotential to_var{0.5 * (diff * diff + child.variance + mean_parent.variance), -0.5};
  return {to_mean, to_var};
}

double gaussian_child_cost(const ForwardStats& child, const ForwardStats& mean_parent,
                           const ForwardStats& var_parent) {
  if (!var_parent.exp_mean) throw Error(ErrorCode::MissingExpStat, "variance parent lacks <exp v>");
  const double diff = child.mean - mean_parent.mean;
  return 0.5 * *var_parent.exp_mean * (diff * diff + child.variance + mean_parent.variance) -
         0.5 * var_parent.mean + 0.5 * numeric::kLog2Pi;
}

std::vector<ForwardStats> shift_delay(std::span<const ForwardStats> input, const ForwardStats& init) {
  std::vector<ForwardStats> out(input.size());
  if (out.empty()) return out;
  out[0] = init;
  std::copy(input.begin(), input.end() - 1, out.begin() + 1);
  return out;
}

std::pair<std::vector<Potential>, Potential> shift_delay_adjoint(std::span<const Potential> output) {
  std::vector<Potential> input(output.size());
  Potential init;
  if (output.empty()) return {input, init};
  init = output[0];
  for (std::size_t t = 1; t < output.size(); ++t) input[t - 1] = output[t];
  return {input, init};
}

}  // namespace vbb
