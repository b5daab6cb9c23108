#include "vbblocks/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <boost/math/special_functions/digamma.hpp>

#include "vbblocks/error.hpp"
#include "vbblocks/numeric.hpp"

namespace vbb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = std::numbers::ln2;

double gaussian_entropy(double var) {
  return 0.5 * (numeric::kLog2Pi + 1.0 + std::log(std::max(var, numeric::kVarianceFloor)));
}

double exp_stat(const ForwardStats& s) {
  if (!s.exp_mean) throw Error(ErrorCode::MissingExpStat, "variance parent lacks <exp v>");
  return *s.exp_mean;
}

// Root of the stationarity equation for c > 0 without nonlinear terms,
// in y = mean + var / 2.
GaussianSolve solve_with_exp(double a, double b, double c) {
  auto f = [&](double y) {
    const double ce = c * std::exp(y);
    if (!std::isfinite(ce)) return kInf;
    return y + (b + ce) / (2.0 * a) - 0.5 / (2.0 * a + ce);
  };
  // At the c = 0 solution f > 0; the root lies below it.
  double hi = -b / (2.0 * a) + 0.25 / a;
  double step = 1.0;
  double lo = hi - step;
  while (f(lo) >= 0.0) {
    step *= 2.0;
    lo = hi - step;
  }
  // Bisection to a unit bracket first: from far above the root, Newton on
  // the exponential branch only moves by about one per step.
  int it = 0;
  while (hi - lo > 1.0 && it < 200) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
    ++it;
  }
  double y = 0.5 * (lo + hi);
  for (; it < 200; ++it) {
    const double fy = f(y);
    if (fy == 0.0) break;
    (fy > 0.0 ? hi : lo) = y;
    const double ce = c * std::exp(y);
    const double d = 1.0 + ce / (2.0 * a) + ce / (2.0 * (2.0 * a + ce) * (2.0 * a + ce));
    double next = y - fy / d;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - y) <= 1e-15 * (1.0 + std::abs(y)) || hi - lo <= 1e-15 * (1.0 + std::abs(y));
    y = next;
    if (done) break;
  }
  const double ce = c * std::exp(y);
  return {-(b + ce) / (2.0 * a), 1.0 / (2.0 * a + ce), it};
}

struct LocalDerivs {
  double f, gm, gv, hmm, hmv, hvv;
};

LocalDerivs local_derivs(double a, double b, double c, const NonlinCoefs& nl, double m, double v) {
  LocalDerivs d{};
  const double ce = c != 0.0 ? c * std::exp(m + 0.5 * v) : 0.0;
  d.f = a * (m * m + v) + b * m + ce - 0.5 * std::log(v);
  d.gm = 2.0 * a * m + b + ce;
  d.gv = a + 0.5 * ce - 0.5 / v;
  d.hmm = 2.0 * a + ce;
  d.hmv = 0.5 * ce;
  d.hvv = 0.25 * ce + 0.5 / (v * v);
  for (int k = 0; k < 2; ++k) {
    const double q = nl.quad[k], l = nl.lin[k];
    if (q == 0.0 && l == 0.0) continue;
    const auto mm = k == 0 ? numeric::expsquare_moments(m, v) : numeric::cut_moments(m, v);
    d.f += q * mm.m2 + l * mm.m1;
    d.gm += q * mm.m2_mu + l * mm.m1_mu;
    d.gv += q * mm.m2_v + l * mm.m1_v;
    d.hmm += q * mm.m2_mumu + l * mm.m1_mumu;
    d.hmv += q * mm.m2_muv + l * mm.m1_muv;
    d.hvv += q * mm.m2_vv + l * mm.m1_vv;
  }
  return d;
}

}  // namespace

double gaussian_local_cost(double a, double b, double c, const NonlinCoefs& nl, double mean, double var) {
  if (!(var > 0.0)) return kInf;
  double f = a * (mean * mean + var) + b * mean - 0.5 * std::log(var);
  if (c != 0.0) f += c * std::exp(mean + 0.5 * var);
  for (int k = 0; k < 2; ++k) {
    if (nl.quad[k] == 0.0 && nl.lin[k] == 0.0) continue;
    const auto mm = k == 0 ? numeric::expsquare_moments(mean, var) : numeric::cut_moments(mean, var);
    f += nl.quad[k] * mm.m2 + nl.lin[k] * mm.m1;
  }
  return std::isnan(f) ? kInf : f;
}

GaussianSolve solve_gaussian(double a, double b, double c, const NonlinCoefs& nl, GaussianPosterior current) {
  if (!(a > 0.0) || !std::isfinite(a))
    throw Error(ErrorCode::NonPositiveQuad, "quadratic coefficient " + std::to_string(a) + " is not positive");
  GaussianSolve base = c > 0.0 ? solve_with_exp(a, b, c) : GaussianSolve{-b / (2.0 * a), 1.0 / (2.0 * a), 0};
  base.variance = std::max(base.variance, numeric::kVarianceFloor);
  if (!nl.any()) {
    if (current.variance > 0.0 && gaussian_local_cost(a, b, c, nl, current.mean, current.variance) <
                                      gaussian_local_cost(a, b, c, nl, base.mean, base.variance))
      return {current.mean, current.variance, base.iterations};
    return base;
  }

  // Damped Newton in (mean, log var), started from the better of the
  // nonlinearity-free optimum and the current posterior.
  double m = base.mean, v = base.variance;
  double fcur = gaussian_local_cost(a, b, c, nl, m, v);
  if (current.variance > 0.0) {
    const double fold = gaussian_local_cost(a, b, c, nl, current.mean, current.variance);
    if (fold < fcur) {
      m = current.mean;
      v = current.variance;
      fcur = fold;
    }
  }
  int it = 0;
  for (; it < 100; ++it) {
    const auto d = local_derivs(a, b, c, nl, m, v);
    if (std::max(std::abs(d.gm), std::abs(d.gv)) < 1e-10) break;
    // Chain rule to r = log v.
    const double gr = v * d.gv;
    double hmm = d.hmm, hmr = v * d.hmv, hrr = v * v * d.hvv + v * d.gv;
    double shift = 0.0;
    const double scale = 1e-10 * (1.0 + std::abs(hmm) + std::abs(hrr));
    while (!(hmm + shift > 0.0 && (hmm + shift) * (hrr + shift) - hmr * hmr > 0.0)) {
      shift = shift == 0.0 ? scale : 4.0 * shift;
      if (!std::isfinite(shift)) break;
    }
    hmm += shift;
    hrr += shift;
    const double det = hmm * hrr - hmr * hmr;
    double dm = -(hrr * d.gm - hmr * gr) / det;
    double dr = -(hmm * gr - hmr * d.gm) / det;
    if (!std::isfinite(dm) || !std::isfinite(dr)) break;
    bool accepted = false;
    for (int halving = 0; halving <= 50; ++halving) {
      const double m2 = m + dm;
      const double v2 = v * std::exp(dr);
      const double f2 = gaussian_local_cost(a, b, c, nl, m2, v2);
      if (f2 < fcur) {
        m = m2;
        v = std::max(v2, numeric::kVarianceFloor);
        fcur = f2;
        accepted = true;
        break;
      }
      dm *= 0.5;
      dr *= 0.5;
    }
    if (!accepted) break;
  }
  return {m, v, it};
}

Engine::Engine(ModelGraph& graph) : graph_(graph) { rebuild(); }

void Engine::rebuild() {
  const auto report = graph_.validate();
  if (!report.ok()) throw Error(ErrorCode::InvalidGraph, report.to_string());
  topo_ = graph_.topology();
  order_ = graph_.update_order();
  const std::size_t n_nodes = graph_.size();
  const auto nodes = graph_.nodes();

  // Evaluation order of computational nodes.
  comp_rank_.assign(n_nodes, 0);
  {
    std::vector<int> indeg(n_nodes, 0);
    for (const auto& n : nodes) {
      if (!n.alive || !is_computational(n.kind)) continue;
      for (const auto& e : topo_.parents[n.id.value])
        if (is_computational(nodes[e.parent.value].kind)) indeg[n.id.value]++;
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (const auto& n : nodes)
      if (n.alive && is_computational(n.kind) && indeg[n.id.value] == 0) ready.push(n.id.value);
    std::size_t rank = 0;
    while (!ready.empty()) {
      const std::size_t v = ready.top();
      ready.pop();
      comp_rank_[v] = rank++;
      for (const auto& c : topo_.children[v])
        if (is_computational(nodes[c.child.value].kind) && --indeg[c.child.value] == 0) ready.push(c.child.value);
    }
  }

  downstream_.assign(n_nodes, {});
  for (const auto& n : nodes) {
    if (!n.alive || n.kind == NodeKind::Proxy) continue;
    std::vector<NodeId> found;
    std::vector<std::size_t> stack{n.id.value};
    std::vector<char> mark(n_nodes, 0);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (const auto& c : topo_.children[v]) {
        const std::size_t w = c.child.value;
        if (!is_computational(nodes[w].kind) || mark[w]) continue;
        mark[w] = 1;
        found.push_back(c.child);
        stack.push_back(w);
      }
    }
    std::sort(found.begin(), found.end(),
              [&](NodeId x, NodeId y) { return comp_rank_[x.value] < comp_rank_[y.value]; });
    downstream_[n.id.value] = std::move(found);
  }

  // Slot colors: a vector variable that reaches an endpoint through k
  // delays couples slots t and t+k, so slots are updated modulo kmax + 1.
  colors_.assign(n_nodes, 1);
  for (const auto& n : nodes) {
    if (!n.alive || !n.is_latent() || n.arity != Arity::Vector) continue;
    std::vector<int> best(n_nodes, -1);
    auto step = [&](const ChildRef& ref) {
      const auto& edge = topo_.parents[ref.child.value][ref.edge];
      return nodes[ref.child.value].kind == NodeKind::Delay && edge.role.kind == RoleKind::DelayInput ? 1 : 0;
    };
    int kmax = 0;
    for (const auto& c : topo_.children[n.id.value]) {
      best[c.child.value] = std::max(best[c.child.value], step(c));
      kmax = std::max(kmax, best[c.child.value]);
    }
    for (NodeId d : downstream_[n.id.value]) {
      if (best[d.value] < 0) continue;
      for (const auto& c : topo_.children[d.value]) {
        best[c.child.value] = std::max(best[c.child.value], best[d.value] + step(c));
        kmax = std::max(kmax, best[c.child.value]);
      }
    }
    colors_[n.id.value] = static_cast<std::size_t>(kmax) + 1;
  }

  overrides_.resize(n_nodes);
  fwd_.assign(n_nodes, {});
  refresh();
}

void Engine::refresh() {
  const auto nodes = graph_.nodes();
  std::vector<NodeId> comps;
  for (const auto& n : nodes) {
    if (!n.alive || n.kind == NodeKind::Proxy) continue;
    if (is_computational(n.kind))
      comps.push_back(n.id);
    else
      compute_forward(n.id);
  }
  std::sort(comps.begin(), comps.end(),
            [&](NodeId x, NodeId y) { return comp_rank_[x.value] < comp_rank_[y.value]; });
  for (NodeId c : comps) compute_forward(c);
}

const ForwardStats& Engine::stats(NodeId id, std::size_t t) const {
  const auto& v = fwd_[graph_.resolve(id).value];
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "node has no forward statistics");
  return v.size() == 1 ? v[0] : v[t];
}

std::span<const ForwardStats> Engine::stats(NodeId id) const { return fwd_[graph_.resolve(id).value]; }

std::optional<NodeId> Engine::parent_with(NodeId child, RoleKind role, std::size_t component) const {
  const bool indexed = role == RoleKind::ComponentMean || role == RoleKind::ComponentVariance;
  for (const auto& e : topo_.parents[child.value])
    if (e.role.kind == role && (!indexed || e.role.component == component)) return e.parent;
  return std::nullopt;
}

void Engine::compute_forward(NodeId id) {
  const Node& n = graph_.node(id);
  const std::size_t slots = n.arity == Arity::Vector ? graph_.sample_count() : 1;
  auto& out = fwd_[id.value];
  if (n.kind == NodeKind::Dirichlet || n.kind == NodeKind::Evidence || n.kind == NodeKind::Proxy || !n.alive) {
    out.clear();
    return;
  }
  out.resize(slots);
  if (overrides_[id.value]) {
    std::fill(out.begin(), out.end(), *overrides_[id.value]);
    return;
  }
  const auto& parents = topo_.parents[id.value];
  auto at = [&](NodeId p, std::size_t t) -> const ForwardStats& {
    const auto& v = fwd_[p.value];
    return v.size() == 1 ? v[0] : v[t];
  };
  switch (n.kind) {
    case NodeKind::Constant:
      std::fill(out.begin(), out.end(), ForwardStats::constant(n.value));
      break;
    case NodeKind::Gaussian:
      for (std::size_t t = 0; t < slots; ++t)
        out[t] = forward_gaussian({n.mean[t], n.observed ? 0.0 : n.var[t]});
      break;
    case NodeKind::RectifiedGaussian:
      for (std::size_t t = 0; t < slots; ++t) {
        const auto m = numeric::truncated_normal_moments(n.mean[t], n.var[t]);
        out[t] = {m.mean, m.variance, std::nullopt};
      }
      break;
    case NodeKind::MixtureOfGaussians:
      for (std::size_t t = 0; t < slots; ++t) out[t] = {n.mean[t], n.var[t], std::nullopt};
      break;
    case NodeKind::Sum:
      for (std::size_t t = 0; t < slots; ++t) {
        ForwardStats s{0.0, 0.0, 1.0};
        for (const auto& e : parents) {
          const auto& in = at(e.parent, t);
          s.mean += in.mean;
          s.variance += in.variance;
          if (s.exp_mean && in.exp_mean)
            *s.exp_mean *= *in.exp_mean;
          else
            s.exp_mean.reset();
        }
        out[t] = s;
      }
      break;
    case NodeKind::Product:
      for (std::size_t t = 0; t < slots; ++t) out[t] = forward_product(at(parents[0].parent, t), at(parents[1].parent, t));
      break;
    case NodeKind::NonlinExpSquare:
    case NodeKind::NonlinCut:
      for (std::size_t t = 0; t < slots; ++t) {
        const auto& in = at(parents[0].parent, t);
        out[t] = n.kind == NodeKind::NonlinExpSquare ? forward_nonlin_expsquare({in.mean, in.variance})
                                                     : forward_nonlin_cut({in.mean, in.variance});
      }
      break;
    case NodeKind::Delay: {
      const NodeId input = *parent_with(id, RoleKind::DelayInput);
      const NodeId init = *parent_with(id, RoleKind::DelayInit);
      out[0] = at(init, 0);
      for (std::size_t t = 1; t < slots; ++t) out[t] = at(input, t - 1);
      break;
    }
    default:
      break;
  }
}

void Engine::propagate(NodeId id) {
  compute_forward(id);
  for (NodeId d : downstream_[id.value]) compute_forward(d);
}

void Engine::override_stats(NodeId id, std::optional<ForwardStats> replacement) {
  overrides_[id.value] = replacement;
  propagate(id);
}

const std::vector<NodeId>& Engine::downstream(NodeId id) const { return downstream_[id.value]; }

std::vector<NodeId> Engine::endpoints(NodeId id) const {
  std::vector<NodeId> out;
  auto collect = [&](NodeId v) {
    for (const auto& c : topo_.children[v.value])
      if (!is_computational(graph_.node(c.child).kind)) out.push_back(c.child);
  };
  collect(id);
  for (NodeId d : downstream_[id.value]) collect(d);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Engine::colors(NodeId id) const { return colors_[graph_.resolve(id).value]; }

// ---------------------------------------------------------------- potentials

std::vector<Potential> Engine::output_potential(NodeId id, std::vector<NonlinCoefs>* nonlin) const {
  id = graph_.resolve(id);
  const std::size_t slots = graph_.node(id).arity == Arity::Vector ? graph_.sample_count() : 1;
  std::vector<Potential> out(slots);
  if (nonlin) nonlin->assign(slots, NonlinCoefs{});
  for (const auto& ref : topo_.children[id.value]) contribute(id, ref, out, nonlin);
  return out;
}

void Engine::contribute(NodeId parent, const ChildRef& ref, std::vector<Potential>& out,
                        std::vector<NonlinCoefs>* nonlin) const {
  (void)parent;
  const Node& c = graph_.node(ref.child);
  const auto& parents = topo_.parents[ref.child.value];
  const ParentRole role = parents[ref.edge].role;
  const std::size_t child_slots = c.arity == Arity::Vector ? graph_.sample_count() : 1;
  const bool scalar_out = out.size() == 1;
  auto add = [&](std::size_t t, const Potential& p) { out[scalar_out ? 0 : t] += p; };
  auto at = [&](NodeId p, std::size_t t) -> const ForwardStats& {
    const auto& v = fwd_[p.value];
    return v.size() == 1 ? v[0] : v[t];
  };

  switch (c.kind) {
    case NodeKind::Gaussian: {
      if (role.kind == RoleKind::Mean) {
        const NodeId vp = *parent_with(ref.child, RoleKind::Variance);
        for (std::size_t t = 0; t < child_slots; ++t) {
          const double ev = exp_stat(at(vp, t));
          add(t, {0.5 * ev, -ev * c.mean[t], 0.0});
        }
      } else {
        const NodeId mp = *parent_with(ref.child, RoleKind::Mean);
        for (std::size_t t = 0; t < child_slots; ++t) {
          const auto& m = at(mp, t);
          const double d = c.mean[t] - m.mean;
          const double cv = c.observed ? 0.0 : c.var[t];
          add(t, {0.0, -0.5, 0.5 * (d * d + cv + m.variance)});
        }
      }
      break;
    }
    case NodeKind::RectifiedGaussian:
      for (std::size_t t = 0; t < child_slots; ++t) {
        const auto m = numeric::truncated_normal_moments(c.mean[t], c.var[t]);
        add(t, {0.0, -0.5, 0.5 * (m.mean * m.mean + m.variance)});
      }
      break;
    case NodeKind::MixtureOfGaussians: {
      const std::size_t K = c.components;
      const std::size_t k = role.component;
      if (role.kind == RoleKind::ComponentMean) {
        const NodeId vp = *parent_with(ref.child, RoleKind::ComponentVariance, k);
        for (std::size_t t = 0; t < child_slots; ++t) {
          const double r = c.resp[t * K + k];
          const double ev = exp_stat(at(vp, t));
          add(t, {0.5 * r * ev, -r * ev * c.mean[t], 0.0});
        }
      } else if (role.kind == RoleKind::ComponentVariance) {
        const NodeId mp = *parent_with(ref.child, RoleKind::ComponentMean, k);
        for (std::size_t t = 0; t < child_slots; ++t) {
          const double r = c.resp[t * K + k];
          const auto& m = at(mp, t);
          const double d = c.mean[t] - m.mean;
          add(t, {0.0, -0.5 * r, 0.5 * r * (d * d + c.var[t] + m.variance)});
        }
      }
      break;
    }
    case NodeKind::Evidence: {
      const double lambda = graph_.evidence_weight(c);
      if (lambda == 0.0) break;
      for (std::size_t t = 0; t < child_slots; ++t) {
        const double target = c.target.size() == 1 ? c.target[0] : c.target[t];
        add(t, {0.5 * lambda * c.precision, -lambda * c.precision * target, 0.0});
      }
      break;
    }
    case NodeKind::Sum: {
      const auto pc = output_potential(ref.child);
      for (std::size_t t = 0; t < child_slots; ++t) {
        const Potential& p = pc[t];
        if (p.quad == 0.0 && p.lin == 0.0 && p.exp_coef == 0.0) continue;
        double mean_total = 0.0, exp_total = 1.0;
        for (std::size_t j = 0; j < parents.size(); ++j) {
          if (j == ref.edge) continue;
          const auto& s = at(parents[j].parent, t);
          mean_total += s.mean;
          if (p.exp_coef != 0.0) exp_total *= exp_stat(s);
        }
        add(t, backward_through_sum(p, mean_total, exp_total));
      }
      break;
    }
    case NodeKind::Product: {
      const auto pc = output_potential(ref.child);
      const NodeId other = parents[1 - ref.edge].parent;
      for (std::size_t t = 0; t < child_slots; ++t) add(t, backward_through_product(pc[t], at(other, t)));
      break;
    }
    case NodeKind::NonlinExpSquare:
    case NodeKind::NonlinCut: {
      if (!nonlin) throw Error(ErrorCode::InvalidGraph, "nonlinearity reached through a computational node");
      const auto pc = output_potential(ref.child);
      const int k = c.kind == NodeKind::NonlinExpSquare ? 0 : 1;
      for (std::size_t t = 0; t < child_slots; ++t) {
        auto& slot = (*nonlin)[scalar_out ? 0 : t];
        slot.quad[k] += pc[t].quad;
        slot.lin[k] += pc[t].lin;
      }
      break;
    }
    case NodeKind::Delay: {
      const auto pc = output_potential(ref.child);
      if (role.kind == RoleKind::DelayInput) {
        for (std::size_t t = 1; t < child_slots; ++t) add(t - 1, pc[t]);
      } else {
        add(0, pc[0]);
      }
      break;
    }
    default:
      break;
  }
}

// ---------------------------------------------------------------- costs

double Engine::cost_gaussian(const Node& n) const {
  const NodeId mp = *parent_with(n.id, RoleKind::Mean);
  const NodeId vp = *parent_with(n.id, RoleKind::Variance);
  double total = 0.0;
  for (std::size_t t = 0; t < n.mean.size(); ++t) {
    const auto& m = stats(mp, t);
    const auto& v = stats(vp, t);
    const double var = n.observed ? 0.0 : n.var[t];
    const double d = n.mean[t] - m.mean;
    total += 0.5 * exp_stat(v) * (d * d + var + m.variance) - 0.5 * v.mean + 0.5 * numeric::kLog2Pi;
    if (!n.observed) total -= gaussian_entropy(var);
  }
  return total;
}

double Engine::cost_rectified(const Node& n) const {
  const NodeId vp = *parent_with(n.id, RoleKind::Variance);
  double total = 0.0;
  for (std::size_t t = 0; t < n.mean.size(); ++t) {
    const auto& v = stats(vp, t);
    const auto m = numeric::truncated_normal_moments(n.mean[t], n.var[t]);
    const double s2 = m.mean * m.mean + m.variance;
    total += -kLn2 + 0.5 * numeric::kLog2Pi - 0.5 * v.mean + 0.5 * exp_stat(v) * s2 -
             numeric::truncated_normal_entropy(n.mean[t], n.var[t]);
  }
  return total;
}

std::vector<double> Engine::expected_log_weights(NodeId mixture) const {
  const auto sel = parent_with(mixture, RoleKind::Selector);
  const Node& d = graph_.node(*sel);
  double total = 0.0;
  for (double u : d.counts) total += u;
  const double psi_total = boost::math::digamma(total);
  std::vector<double> out(d.counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = boost::math::digamma(d.counts[k]) - psi_total;
  return out;
}

double Engine::cost_mixture(const Node& n) const {
  const std::size_t K = n.components;
  const auto elog = expected_log_weights(n.id);
  std::vector<NodeId> mp(K), vp(K);
  for (std::size_t k = 0; k < K; ++k) {
    mp[k] = *parent_with(n.id, RoleKind::ComponentMean, k);
    vp[k] = *parent_with(n.id, RoleKind::ComponentVariance, k);
  }
  double total = 0.0;
  for (std::size_t t = 0; t < n.mean.size(); ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      const double r = n.resp[t * K + k];
      if (r <= 0.0) continue;
      const auto& m = stats(mp[k], t);
      const auto& v = stats(vp[k], t);
      const double d = n.mean[t] - m.mean;
      const double e = 0.5 * exp_stat(v) * (d * d + n.var[t] + m.variance) - 0.5 * v.mean + 0.5 * numeric::kLog2Pi;
      total += r * (e - elog[k] + std::log(r));
    }
    total -= gaussian_entropy(n.var[t]);
  }
  return total;
}

std::vector<double> Engine::dirichlet_prior(const Node& n) const {
  if (const auto c = parent_with(n.id, RoleKind::Concentration))
    return std::vector<double>(n.components, graph_.node(*c).value);
  return n.prior_counts;
}

double Engine::cost_dirichlet(const Node& n) const {
  const auto u = dirichlet_prior(n);
  const auto& w = n.counts;
  double su = 0.0, sw = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    su += u[k];
    sw += w[k];
  }
  const double psi_sw = boost::math::digamma(sw);
  double kl = std::lgamma(sw) - std::lgamma(su);
  for (std::size_t k = 0; k < w.size(); ++k)
    kl += std::lgamma(u[k]) - std::lgamma(w[k]) + (w[k] - u[k]) * (boost::math::digamma(w[k]) - psi_sw);
  return kl;
}

double Engine::cost_evidence(const Node& n) const {
  const double lambda = graph_.evidence_weight(n);
  if (lambda == 0.0) return 0.0;
  const NodeId p = *parent_with(n.id, RoleKind::Mean);
  double total = 0.0;
  for (std::size_t t = 0; t < n.target.size(); ++t) {
    const auto& s = stats(p, t);
    const double d = s.mean - n.target[t];
    total += 0.5 * lambda * n.precision * (d * d + s.variance);
  }
  return total;
}

double Engine::node_cost(NodeId id) const {
  const Node& n = graph_.node(id);
  if (!n.alive) return 0.0;
  switch (n.kind) {
    case NodeKind::Gaussian: return cost_gaussian(n);
    case NodeKind::RectifiedGaussian: return cost_rectified(n);
    case NodeKind::MixtureOfGaussians: return cost_mixture(n);
    case NodeKind::Dirichlet: return cost_dirichlet(n);
    case NodeKind::Evidence: return cost_evidence(n);
    default: return 0.0;
  }
}

CostBreakdown Engine::cost() const {
  CostBreakdown c;
  c.per_node.assign(graph_.size(), 0.0);
  for (const auto& n : graph_.nodes()) {
    if (!n.alive) continue;
    c.per_node[n.id.value] = node_cost(n.id);
    c.total += c.per_node[n.id.value];
  }
  c.bits_per_sample = c.total / (static_cast<double>(graph_.sample_count()) * kLn2);
  return c;
}

// ---------------------------------------------------------------- updates

void Engine::update(NodeId id) {
  id = graph_.resolve(id);
  const Node& n = graph_.node(id);
  if (!n.alive || !n.is_latent()) return;
  switch (n.kind) {
    case NodeKind::Gaussian: update_gaussian(id); break;
    case NodeKind::RectifiedGaussian: update_rectified(id); break;
    case NodeKind::MixtureOfGaussians: update_mixture(id); break;
    case NodeKind::Dirichlet: update_dirichlet(id); break;
    default: break;
  }
}

void Engine::update_gaussian(NodeId id) {
  Node& n = graph_.node(id);
  const NodeId mp = *parent_with(id, RoleKind::Mean);
  const NodeId vp = *parent_with(id, RoleKind::Variance);
  const std::size_t slots = n.mean.size();
  const std::size_t ncolors = colors_[id.value];
  std::vector<NonlinCoefs> nl;
  for (std::size_t col = 0; col < ncolors && col < slots; ++col) {
    const auto pot = output_potential(id, &nl);
    for (std::size_t t = col; t < slots; t += ncolors) {
      const double ev = exp_stat(stats(vp, t));
      const double a = 0.5 * ev + pot[t].quad;
      const double b = -ev * stats(mp, t).mean + pot[t].lin;
      const auto r = solve_gaussian(a, b, pot[t].exp_coef, nl[t], {n.mean[t], n.var[t]});
      n.mean[t] = r.mean;
      n.var[t] = std::max(r.variance, numeric::kVarianceFloor);
    }
    propagate(id);
  }
}

void Engine::update_rectified(NodeId id) {
  Node& n = graph_.node(id);
  const NodeId vp = *parent_with(id, RoleKind::Variance);
  const std::size_t slots = n.mean.size();
  const std::size_t ncolors = colors_[id.value];
  for (std::size_t col = 0; col < ncolors && col < slots; ++col) {
    const auto pot = output_potential(id);
    for (std::size_t t = col; t < slots; t += ncolors) {
      const double a = 0.5 * exp_stat(stats(vp, t)) + pot[t].quad;
      if (!(a > 0.0)) throw Error(ErrorCode::NonPositiveQuad, "rectified node '" + n.label + "'");
      n.mean[t] = -pot[t].lin / (2.0 * a);
      n.var[t] = std::max(1.0 / (2.0 * a), numeric::kVarianceFloor);
    }
    propagate(id);
  }
}

void Engine::update_mixture(NodeId id) {
  Node& n = graph_.node(id);
  const std::size_t K = n.components;
  const std::size_t slots = n.mean.size();
  const std::size_t ncolors = colors_[id.value];
  std::vector<NodeId> mp(K), vp(K);
  for (std::size_t k = 0; k < K; ++k) {
    mp[k] = *parent_with(id, RoleKind::ComponentMean, k);
    vp[k] = *parent_with(id, RoleKind::ComponentVariance, k);
  }
  const auto elog = expected_log_weights(id);
  std::vector<double> logits(K);
  for (std::size_t col = 0; col < ncolors && col < slots; ++col) {
    const auto pot = output_potential(id);
    for (std::size_t t = col; t < slots; t += ncolors) {
      double a = pot[t].quad, b = pot[t].lin;
      for (std::size_t k = 0; k < K; ++k) {
        const double r = n.resp[t * K + k];
        const double ev = exp_stat(stats(vp[k], t));
        a += 0.5 * r * ev;
        b -= r * ev * stats(mp[k], t).mean;
      }
      if (!(a > 0.0)) throw Error(ErrorCode::NonPositiveQuad, "mixture node '" + n.label + "'");
      n.mean[t] = -b / (2.0 * a);
      n.var[t] = std::max(1.0 / (2.0 * a), numeric::kVarianceFloor);
    }
    propagate(id);
    for (std::size_t t = col; t < slots; t += ncolors) {
      double top = -kInf;
      for (std::size_t k = 0; k < K; ++k) {
        const auto& m = stats(mp[k], t);
        const auto& v = stats(vp[k], t);
        const double d = n.mean[t] - m.mean;
        const double e = 0.5 * exp_stat(v) * (d * d + n.var[t] + m.variance) - 0.5 * v.mean;
        logits[k] = elog[k] - e;
        top = std::max(top, logits[k]);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        logits[k] = std::exp(logits[k] - top);
        z += logits[k];
      }
      for (std::size_t k = 0; k < K; ++k) n.resp[t * K + k] = logits[k] / z;
    }
  }
}

void Engine::update_dirichlet(NodeId id) {
  Node& n = graph_.node(id);
  auto counts = dirichlet_prior(n);
  for (const auto& ref : topo_.children[id.value]) {
    if (topo_.parents[ref.child.value][ref.edge].role.kind != RoleKind::Selector) continue;
    const Node& mix = graph_.node(ref.child);
    const std::size_t K = mix.components;
    for (std::size_t t = 0; t < mix.mean.size(); ++t)
      for (std::size_t k = 0; k < K && k < counts.size(); ++k) counts[k] += mix.resp[t * K + k];
  }
  n.counts = std::move(counts);
}

CostBreakdown Engine::sweep() {
  for (NodeId id : order_) update(id);
  auto c = cost();
  graph_.set_evidence_clock(graph_.evidence_clock() + 1);
  return c;
}

}  // namespace vbb
