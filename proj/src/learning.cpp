#include "vbblocks/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "vbblocks/error.hpp"

namespace vbb {

namespace {

constexpr int kPatienceSweeps = 5;
constexpr int kMaxDoublings = 12;

}  // namespace

ParamVector ParamVector::encode(const ModelGraph& graph) {
  ParamVector p;
  auto push = [&](double v, bool log_domain) {
    p.values_.push_back(log_domain ? std::log(v) : v);
    p.log_domain_.push_back(log_domain ? 1 : 0);
  };
  for (const auto& n : graph.nodes()) {
    if (!n.alive || !n.is_latent()) continue;
    switch (n.kind) {
      case NodeKind::Gaussian:
      case NodeKind::RectifiedGaussian:
        for (std::size_t t = 0; t < n.mean.size(); ++t) {
          push(n.mean[t], false);
          push(n.var[t], true);
        }
        break;
      case NodeKind::MixtureOfGaussians:
        for (std::size_t t = 0; t < n.mean.size(); ++t) {
          push(n.mean[t], false);
          push(n.var[t], true);
          for (std::size_t k = 0; k < n.components; ++k)
            push(std::max(n.resp[t * n.components + k], std::numeric_limits<double>::min()), true);
        }
        break;
      case NodeKind::Dirichlet:
        for (double c : n.counts) push(c, true);
        break;
      default:
        break;
    }
  }
  return p;
}

bool ParamVector::decode(ModelGraph& graph) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) return false;
    if (log_domain_[i] && std::abs(values_[i]) > kLogLimit) return false;
  }
  std::size_t i = 0;
  for (const auto& cn : graph.nodes()) {
    if (!cn.alive || !cn.is_latent()) continue;
    Node& n = graph.node(cn.id);
    switch (n.kind) {
      case NodeKind::Gaussian:
      case NodeKind::RectifiedGaussian:
        for (std::size_t t = 0; t < n.mean.size(); ++t) {
          n.mean[t] = values_.at(i++);
          n.var[t] = std::exp(values_.at(i++));
        }
        break;
      case NodeKind::MixtureOfGaussians: {
        const std::size_t K = n.components;
        for (std::size_t t = 0; t < n.mean.size(); ++t) {
          n.mean[t] = values_.at(i++);
          n.var[t] = std::exp(values_.at(i++));
          double top = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < K; ++k) top = std::max(top, values_.at(i + k));
          double z = 0.0;
          for (std::size_t k = 0; k < K; ++k) z += std::exp(values_[i + k] - top);
          for (std::size_t k = 0; k < K; ++k) n.resp[t * K + k] = std::exp(values_[i + k] - top) / z;
          i += K;
        }
        break;
      }
      case NodeKind::Dirichlet:
        for (double& c : n.counts) c = std::exp(values_.at(i++));
        break;
      default:
        break;
    }
  }
  if (i != values_.size()) throw Error(ErrorCode::DimensionMismatch, "parameter vector does not match graph");
  return true;
}

CostBreakdown pattern_search(Engine& engine, const ParamVector& before, const ParamVector& after) {
  CostBreakdown at_one = engine.cost();
  if (before.size() != after.size())
    throw Error(ErrorCode::DimensionMismatch, "pattern search endpoints differ in size");
  std::vector<double> delta(after.size());
  bool moved = false;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = after.values()[i] - before.values()[i];
    moved = moved || delta[i] != 0.0;
  }
  if (!moved) return at_one;

  ModelGraph& graph = engine.graph();
  auto point = [&](double gamma) {
    ParamVector p = after;
    for (std::size_t i = 0; i < delta.size(); ++i) p.values()[i] = before.values()[i] + gamma * delta[i];
    return p;
  };
  auto eval = [&](double gamma) {
    if (!point(gamma).decode(graph)) return std::numeric_limits<double>::infinity();
    engine.refresh();
    double c;
    try {
      c = engine.cost().total;
    } catch (const Error&) {
      c = std::numeric_limits<double>::infinity();
    }
    return std::isnan(c) ? std::numeric_limits<double>::infinity() : c;
  };

  double g0 = 0.0, c0 = std::numeric_limits<double>::quiet_NaN();
  double g1 = 1.0, c1 = at_one.total;
  double g2 = 2.0, c2 = eval(g2);
  double best_g = 1.0, best_c = c1;
  int doublings = 0;
  while (c2 < c1 && doublings < kMaxDoublings) {
    best_g = g2;
    best_c = c2;
    g0 = g1;
    c0 = c1;
    g1 = g2;
    c1 = c2;
    g2 *= 2.0;
    c2 = eval(g2);
    ++doublings;
  }
  if (best_g > 1.0 && std::isfinite(c2) && std::isfinite(c0)) {
    // Vertex of the parabola through the last three points.
    const double num = (g1 - g0) * (g1 - g0) * (c1 - c2) - (g1 - g2) * (g1 - g2) * (c1 - c0);
    const double den = (g1 - g0) * (c1 - c2) - (g1 - g2) * (c1 - c0);
    if (den != 0.0) {
      const double gv = g1 - 0.5 * num / den;
      if (gv > g0 && gv < g2 && gv != g1) {
        const double cv = eval(gv);
        if (cv < best_c) {
          best_c = cv;
          best_g = gv;
        }
      }
    }
  }
  if (best_g == 1.0) {
    after.decode(graph);
    engine.refresh();
    return at_one;
  }
  point(best_g).decode(graph);
  engine.refresh();
  return engine.cost();
}

void randomize(ModelGraph& graph, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& cn : graph.nodes()) {
    if (!cn.alive || !cn.is_latent() || cn.kind == NodeKind::Dirichlet) continue;
    Node& n = graph.node(cn.id);
    for (double& m : n.mean) m = scale * normal(rng);
  }
}

std::vector<TraceEntry> train(Engine& engine, const TrainConfig& config, const SweepHook& hook) {
  if (!(config.rel_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rel_tol must be non-negative");
  std::vector<TraceEntry> trace;
  trace.push_back({0, engine.cost(), false, engine.graph().live_count()});
  double previous = trace.back().cost.total;
  int quiet = 0;
  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    const bool pattern_due = config.pattern_search_every > 0 && sweep % config.pattern_search_every == 0;
    ParamVector before;
    if (pattern_due) before = ParamVector::encode(engine.graph());
    CostBreakdown c = engine.sweep();
    trace.push_back({sweep, c, false, engine.graph().live_count()});
    if (pattern_due) {
      const ParamVector after = ParamVector::encode(engine.graph());
      const double plain = engine.cost().total;
      CostBreakdown p = pattern_search(engine, before, after);
      if (p.total < plain) {
        c = p;
        trace.push_back({sweep, p, true, engine.graph().live_count()});
      }
    }
    if (hook && hook(sweep, engine)) {
      engine.rebuild();
      c = engine.cost();
    }
    const double rel = (previous - c.total) / std::abs(c.total);
    quiet = rel < config.rel_tol ? quiet + 1 : 0;
    previous = c.total;
    if (config.rel_tol > 0.0 && quiet >= kPatienceSweeps) break;
  }
  return trace;
}

}  // namespace vbb
