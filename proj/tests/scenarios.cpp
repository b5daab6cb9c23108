#include "scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "vbblocks/engine.hpp"
#include "vbblocks/error.hpp"
#include "vbblocks/learning.hpp"
#include "vbblocks/messages.hpp"
#include "vbblocks/structure.hpp"

namespace scenario {

using namespace vbb;

namespace {

double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

// Same density with the variance given as exp(-log_prec), stable for any log_prec.
double log_normal_pdf_logprec(double x, double mean, double log_prec) {
  return -0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * log_prec - 0.5 * (x - mean) * (x - mean) * std::exp(log_prec);
}

// log of the integral of exp(log_f) over the real line, shifted by the
// maximum found on a coarse grid around `center`.
double log_integral(const std::function<double(double)>& log_f, double center, double width) {
  double peak = -INFINITY, at = center;
  for (int i = -2000; i <= 2000; ++i) {
    const double s = center + width * i / 200.0;
    const double v = log_f(s);
    if (v > peak) peak = v, at = s;
  }
  const double mass = oracle::integrate([&](double s) { return std::exp(log_f(s) - peak); }, -INFINITY, at) +
                      oracle::integrate([&](double s) { return std::exp(log_f(s) - peak); }, at, INFINITY);
  return peak + std::log(mass);
}

}  // namespace

MonotonicityResult check_monotone(ModelGraph& graph, int sweeps, std::uint64_t seed) {
  randomize(graph, seed, 0.5);
  Engine engine(graph);
  MonotonicityResult r;
  auto rel = [](double before, double after) { return (after - before) / std::max(1.0, std::abs(before)); };
  double sweep_start = engine.cost().total;
  for (int k = 0; k < sweeps; ++k) {
    for (NodeId id : engine.order()) {
      const double before = engine.cost().total;
      engine.update(id);
      const double after = engine.cost().total;
      r.worst_update_increase = std::max(r.worst_update_increase, rel(before, after));
      ++r.updates;
    }
    graph.set_evidence_clock(graph.evidence_clock() + 1);
    const double end = engine.cost().total;
    r.worst_sweep_increase = std::max(r.worst_sweep_increase, rel(sweep_start, end));
    sweep_start = end;
    ++r.sweeps;
  }
  return r;
}

ConjugateResult conjugate_chain(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2, 2), lp(-1.5, 1.5);
  std::normal_distribution<double> normal;
  const std::size_t T = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
  const double mu = u(rng), v0 = lp(rng), vx = lp(rng);

  ModelGraph g(T);
  const NodeId cmu = g.add_constant("mu", mu);
  const NodeId cv0 = g.add_constant("v0", v0);
  const NodeId cvx = g.add_constant("vx", vx);
  const NodeId s = g.create_node(NodeKind::Gaussian, "s", Arity::Scalar);
  g.connect(s, cmu, RoleKind::Mean);
  g.connect(s, cv0, RoleKind::Variance);
  const NodeId x = g.create_node(NodeKind::Gaussian, "x", Arity::Vector);
  g.connect(x, s, RoleKind::Mean);
  g.connect(x, cvx, RoleKind::Variance);
  std::vector<double> data(T);
  for (auto& d : data) d = mu + 2.0 * normal(rng);
  g.observe(x, data);
  g.node(s).mean[0] = 5.0 * normal(rng);
  g.node(s).var[0] = 3.0;

  Engine e(g);
  const auto cost = e.sweep();

  // Exact posterior by conjugacy.
  const double prior_prec = std::exp(v0), lik_prec = std::exp(vx);
  double sum = 0.0;
  for (double d : data) sum += d;
  const double post_prec = prior_prec + T * lik_prec;
  const double post_mean = (prior_prec * mu + lik_prec * sum) / post_prec;

  ConjugateResult r;
  r.mean_error = std::abs(g.node(s).mean[0] - post_mean);
  r.var_error = std::abs(g.node(s).var[0] - 1.0 / post_prec);
  r.cost = cost.total;
  r.neg_log_evidence = -log_integral(
      [&](double sv) {
        double l = log_normal_pdf(sv, mu, 1.0 / prior_prec);
        for (double d : data) l += log_normal_pdf(d, sv, 1.0 / lik_prec);
        return l;
      },
      post_mean, 20.0 / std::sqrt(post_prec));
  return r;
}

BoundResult bound_case(std::mt19937_64& rng, bool variance_role) {
  std::uniform_real_distribution<double> u(-1.5, 1.5), lp(-1.0, 1.5);
  std::normal_distribution<double> normal;
  const std::size_t T = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
  const double mu = u(rng), v0 = lp(rng), other = u(rng);

  ModelGraph g(T);
  const NodeId cmu = g.add_constant("mu", mu);
  const NodeId cv0 = g.add_constant("v0", v0);
  const NodeId co = g.add_constant("other", other);
  const NodeId s = g.create_node(NodeKind::Gaussian, "s", Arity::Scalar);
  g.connect(s, cmu, RoleKind::Mean);
  g.connect(s, cv0, RoleKind::Variance);
  const NodeId x = g.create_node(NodeKind::Gaussian, "x", Arity::Vector);
  if (variance_role) {
    // x_t ~ N(other, e^{-s})
    g.connect(x, co, RoleKind::Mean);
    g.connect(x, s, RoleKind::Variance);
  } else {
    // x_t ~ N(s, e^{-other})
    g.connect(x, s, RoleKind::Mean);
    g.connect(x, co, RoleKind::Variance);
  }
  std::vector<double> data(T);
  for (auto& d : data) d = other * variance_role + mu * !variance_role + 1.5 * normal(rng);
  g.observe(x, data);

  randomize(g, rng());
  Engine e(g);
  TrainConfig cfg;
  cfg.max_sweeps = 300;
  cfg.rel_tol = 0.0;
  cfg.pattern_search_every = 0;
  const auto trace = train(e, cfg);

  BoundResult r;
  r.variance_role = variance_role;
  r.cost = trace.back().cost.total;
  const double prior_var = std::exp(-v0);
  r.log_evidence = log_integral(
      [&](double sv) {
        double l = log_normal_pdf(sv, mu, prior_var);
        for (double d : data)
          l += variance_role ? log_normal_pdf_logprec(d, other, sv) : log_normal_pdf_logprec(d, sv, other);
        return l;
      },
      g.node(s).mean[0], 12.0 * std::sqrt(prior_var) + 5.0);
  return r;
}

double removal_delta_oracle(const ModelGraph& graph, NodeId node) {
  ModelGraph copy = graph;
  Engine original(copy);
  const double before = original.cost().total;
  const NodeId zero = copy.add_constant("__oracle_zero", 0.0);
  for (const auto& n : graph.nodes()) {
    if (!n.alive) continue;
    for (std::size_t e = 0; e < n.parents.size(); ++e)
      if (n.parents[e].parent == node) copy.replace_parent(n.id, e, zero);
  }
  copy.remove_node(node);
  Engine after(copy);
  return after.cost().total - before;
}

FactorModel build_factor_model(const Matrix& data, const Mask& mask) {
  FactorModel m;
  m.graph = ModelGraph(data.rows);
  ModelGraph& g = m.graph;
  const std::size_t D = data.cols, K = mask.front().size();
  const NodeId c0 = g.add_constant("c0", 0.0);
  const NodeId broad = g.add_constant("broad", -5.0);
  auto hyper = [&](const std::string& label) {
    const NodeId h = g.create_node(NodeKind::Gaussian, label, Arity::Scalar);
    g.connect(h, c0, RoleKind::Mean);
    g.connect(h, broad, RoleKind::Variance);
    return h;
  };
  for (std::size_t j = 0; j < K; ++j) {
    const NodeId vs = hyper("vs" + std::to_string(j));
    const NodeId s = g.create_node(NodeKind::Gaussian, "s" + std::to_string(j), Arity::Vector);
    g.connect(s, c0, RoleKind::Mean);
    g.connect(s, vs, RoleKind::Variance);
    m.sources.push_back(s);
    m.source_hypers.push_back(vs);
  }
  const NodeId va = hyper("va");
  m.map = build_linmap(g, m.sources, D, mask, "a", c0, va);
  for (std::size_t i = 0; i < D; ++i) {
    const NodeId vx = hyper("vx" + std::to_string(i));
    const NodeId x = g.create_node(NodeKind::Gaussian, "x" + std::to_string(i), Arity::Vector);
    g.connect(x, m.map.outputs[i], RoleKind::Mean);
    g.connect(x, vx, RoleKind::Variance);
    g.observe(x, data.column(i));
    m.outputs.push_back(x);
  }
  return m;
}

void pca_init(FactorModel& model, const Matrix& data) {
  ModelGraph& g = model.graph;
  const std::size_t T = data.rows, D = data.cols, K = model.sources.size();
  Eigen::MatrixXd X(T, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < D; ++i) X(t, i) = data(t, i);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  const Eigen::MatrixXd S = svd.matrixU().leftCols(K) * std::sqrt(static_cast<double>(T));
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t t = 0; t < T; ++t) {
      g.node(model.sources[j]).mean[t] = S(t, j);
      g.node(model.sources[j]).var[t] = 0.01;
    }
    g.node(model.source_hypers[j]).mean[0] = 0.0;
    g.node(model.source_hypers[j]).var[0] = 0.01;
  }
  for (std::size_t i = 0; i < D; ++i) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < K; ++j)
      if (model.map.weights[i][j]) cols.push_back(j);
    Eigen::MatrixXd M(T, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) M.col(c) = S.col(cols[c]);
    const Eigen::MatrixXd gram =
        M.transpose() * M + 1e-6 * Eigen::MatrixXd::Identity(cols.size(), cols.size());
    const Eigen::VectorXd w = gram.ldlt().solve(M.transpose() * X.col(i));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      Node& a = g.node(*model.map.weights[i][cols[c]]);
      a.mean[0] = w(c);
      a.var[0] = 0.01;
    }
    const double resid = (X.col(i) - M * w).squaredNorm() / T;
    Node& vx = g.node(*g.find("vx" + std::to_string(i)));
    vx.mean[0] = -std::log(std::max(resid, 1e-6));
    vx.var[0] = 0.01;
  }
}

OccamResult occam_prune(std::uint64_t seed) {
  constexpr std::size_t T = 200, D = 6, K = 3;
  constexpr double noise = 0.1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);

  // Model mask: s0 on outputs 0-3 ... s2 on 1-4; the data use s0 on 0-2 and
  // s1 on 3-5 only, so s2 and its weights are spurious.
  Mask mask(D, std::vector<bool>(K, false));
  for (std::size_t i = 0; i < D; ++i) {
    mask[i][0] = i <= 2;
    mask[i][1] = i >= 3;
    mask[i][2] = i >= 1 && i <= 4;
  }
  Matrix A(D, K);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      if (mask[i][j]) A(i, j) = (normal(rng) > 0 ? 1.0 : -1.0) * magnitude(rng);
  Matrix data(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    const double s[2] = {normal(rng), normal(rng)};
    for (std::size_t i = 0; i < D; ++i) data(t, i) = A(i, 0) * s[0] + A(i, 1) * s[1] + noise * normal(rng);
  }

  FactorModel model = build_factor_model(data, mask);
  ModelGraph& g = model.graph;
  randomize(g, seed, 0.5);
  pca_init(model, data);
  Engine e(g);
  TrainConfig cfg;
  cfg.max_sweeps = 300;
  cfg.rel_tol = 0.0;
  cfg.pattern_search_every = 10;
  train(e, cfg);

  OccamResult r;
  r.cost_before = e.cost().total;
  for (NodeId c : prune_candidates(e)) {
    double delta;
    try {
      delta = removal_delta(e, c);
    } catch (const Error&) {
      continue;
    }
    r.max_delta_error = std::max(r.max_delta_error, std::abs(delta - removal_delta_oracle(g, c)));
    ++r.candidates_checked;
  }

  std::set<std::string> live_before;
  for (const auto& n : g.nodes())
    if (n.alive) live_before.insert(n.label);
  prune(e);
  r.cost_after = e.cost().total;
  for (const auto& label : live_before)
    if (!g.find(label)) r.removed.push_back(label);

  std::set<std::string> expected = {"s2", "vs2"};
  for (std::size_t i = 1; i <= 4; ++i) {
    expected.insert("a(" + std::to_string(i) + ",2)");
    expected.insert("aprod(" + std::to_string(i) + ",2)");
  }
  r.expected.assign(expected.begin(), expected.end());
  r.exact = r.removed == r.expected;
  return r;
}

DynComparison compare_dyn(std::uint64_t seed, int sweeps) {
  constexpr std::size_t side = 8, S = 4, T = 300, active_begin = 120, active_end = 200;
  SynthConfig sc;
  sc.xdim = side * side;
  sc.sdim = S;
  sc.tdim = T;
  sc.seed = seed;
  sc.mask = circular_masks(side, S);
  sc.profile.kind = MotionProfile::Kind::Window;
  sc.profile.calm = 3.0;
  sc.profile.active = -1.0;
  sc.profile.start = active_begin;
  sc.profile.end = active_end;
  const SynthData data = synth_sequence(sc);

  auto run = [&](ModelType type) {
    ModelGraph g(T);
    DynSpec spec;
    spec.xdim = sc.xdim;
    spec.sdim = S;
    spec.tdim = T;
    spec.mask = sc.mask;
    const DynModel m = type == ModelType::DynVar ? build_dynvar(g, spec) : build_dynsrc(g, spec);
    observe_data(g, m, data.data);
    init_from_data(g, m, data.data);
    Engine e(g);
    TrainConfig cfg;
    cfg.max_sweeps = sweeps;
    cfg.rel_tol = 0.0;
    cfg.pattern_search_every = 10;
    const auto trace = train(e, cfg);

    DynRun r;
    for (std::size_t k = 1; k < trace.size(); ++k) {
      const double prev = trace[k - 1].cost.total;
      if (trace[k].cost.total > prev + 1e-9 * std::max(1.0, std::abs(prev))) r.monotone = false;
    }
    r.bits_per_frame = trace.back().cost.bits_per_sample;
    std::vector<double> active(sc.xdim, 0.0), calm(sc.xdim, 0.0);
    double perplexity = 0;
    std::size_t n_active = 0, n_calm = 0;
    for (std::size_t t = 1; t < T; ++t) {
      const PredictiveGaussian p = predict_next(g, m, t);
      perplexity += predictive_perplexity(p, data.data.row(t));
      const bool in_window = t >= active_begin && t < active_end;
      for (std::size_t i = 0; i < sc.xdim; ++i) (in_window ? active : calm)[i] += p.variance[i];
      ++(in_window ? n_active : n_calm);
    }
    r.mean_perplexity = perplexity / static_cast<double>(T - 1);
    double ratio = 0;
    for (std::size_t i = 0; i < sc.xdim; ++i) ratio += (active[i] / n_active) / (calm[i] / n_calm);
    r.variance_ratio = ratio / static_cast<double>(sc.xdim);
    return r;
  };
  return {run(ModelType::DynVar), run(ModelType::DynSrc)};
}

std::vector<OracleCheck> moment_suite(std::uint64_t seed, int cases, std::size_t draws) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean_dist(-1.0, 1.0), var_dist(0.05, 1.5);
  std::vector<OracleCheck> out;
  std::uint64_t mc_seed = seed * 1000;
  auto mc = [&](const std::string& what, double value, const std::function<double(std::mt19937_64&)>& draw,
                bool variance) {
    const auto est = oracle::monte_carlo(draw, draws, ++mc_seed);
    if (variance)
      out.push_back({what + " variance (MC)", std::abs(value - est.variance), 3.0 * est.variance_se + 1e-12});
    else
      out.push_back({what + " mean (MC)", std::abs(value - est.mean), 3.0 * est.mean_se + 1e-12});
  };
  auto quad = [&](const std::string& what, double value, double reference) {
    out.push_back({what + " (quadrature)", std::abs(value - reference), 1e-8});
  };
  auto normal = [](double m, double v) {
    return [m, sd = std::sqrt(v)](std::mt19937_64& g) { return std::normal_distribution<double>(m, sd)(g); };
  };

  for (int c = 0; c < cases; ++c) {
    const std::string tag = "case " + std::to_string(c) + ": ";
    const double m1 = mean_dist(rng), v1 = var_dist(rng), m2 = mean_dist(rng), v2 = var_dist(rng);
    const auto n1 = normal(m1, v1), n2 = normal(m2, v2);

    const ForwardStats g = forward_gaussian({m1, v1});
    mc(tag + "gaussian exp", *g.exp_mean, [&](std::mt19937_64& r) { return std::exp(n1(r)); }, false);
    quad(tag + "gaussian exp", *g.exp_mean,
         oracle::normal_expectation([](double x) { return std::exp(x); }, m1, v1));

    const std::vector<ForwardStats> terms{forward_gaussian({m1, v1}), forward_gaussian({m2, v2})};
    const ForwardStats sum = forward_sum(terms);
    auto draw_sum = [&](std::mt19937_64& r) { return n1(r) + n2(r); };
    mc(tag + "sum", sum.mean, draw_sum, false);
    mc(tag + "sum", sum.variance, draw_sum, true);
    mc(tag + "sum exp", *sum.exp_mean, [&](std::mt19937_64& r) { return std::exp(draw_sum(r)); }, false);
    auto nested = [&](const std::function<double(double, double)>& f) {
      return oracle::normal_expectation(
          [&](double a) { return oracle::normal_expectation([&](double b) { return f(a, b); }, m2, v2); }, m1, v1);
    };
    const double sum1 = nested([](double a, double b) { return a + b; });
    quad(tag + "sum mean", sum.mean, sum1);
    quad(tag + "sum variance", sum.variance, nested([](double a, double b) { return (a + b) * (a + b); }) - sum1 * sum1);
    quad(tag + "sum exp", *sum.exp_mean, nested([](double a, double b) { return std::exp(a + b); }));

    const ForwardStats prod = forward_product({m1, v1}, {m2, v2});
    auto draw_prod = [&](std::mt19937_64& r) { return n1(r) * n2(r); };
    mc(tag + "product", prod.mean, draw_prod, false);
    mc(tag + "product", prod.variance, draw_prod, true);
    const double prod1 = nested([](double a, double b) { return a * b; });
    quad(tag + "product mean", prod.mean, prod1);
    quad(tag + "product variance", prod.variance,
         nested([](double a, double b) { return a * a * b * b; }) - prod1 * prod1);

    const ForwardStats es = forward_nonlin_expsquare({m1, v1});
    auto draw_es = [&](std::mt19937_64& r) {
      const double x = n1(r);
      return std::exp(-x * x);
    };
    mc(tag + "exp(-s^2)", es.mean, draw_es, false);
    mc(tag + "exp(-s^2)", es.variance, draw_es, true);
    const double es1 = oracle::normal_expectation([](double x) { return std::exp(-x * x); }, m1, v1);
    quad(tag + "exp(-s^2) mean", es.mean, es1);
    quad(tag + "exp(-s^2) variance", es.variance,
         oracle::normal_expectation([](double x) { return std::exp(-2 * x * x); }, m1, v1) - es1 * es1);

    const ForwardStats cut = forward_nonlin_cut({m1, v1});
    auto draw_cut = [&](std::mt19937_64& r) { return std::max(n1(r), 0.0); };
    mc(tag + "max(s,0)", cut.mean, draw_cut, false);
    mc(tag + "max(s,0)", cut.variance, draw_cut, true);
    const double cut1 =
        oracle::normal_expectation_adaptive([](double x) { return std::max(x, 0.0); }, m1, v1, {0.0});
    quad(tag + "max(s,0) mean", cut.mean, cut1);
    quad(tag + "max(s,0) variance", cut.variance,
         oracle::normal_expectation_adaptive([](double x) { return x > 0 ? x * x : 0.0; }, m1, v1, {0.0}) -
             cut1 * cut1);

    // Rectified posterior q(r) proportional to N(r | loc, scale2) on r >= 0, read back through the engine.
    // loc stays within one scale of the origin so that rejection sampling is cheap.
    const double scale2 = var_dist(rng), loc = mean_dist(rng) * std::sqrt(scale2);
    ModelGraph rg(1);
    const NodeId c0 = rg.add_constant("c0", 0.0);
    const NodeId rn = rg.create_node(NodeKind::RectifiedGaussian, "r", Arity::Scalar);
    rg.connect(rn, c0, RoleKind::Variance);
    rg.node(rn).mean[0] = loc;
    rg.node(rn).var[0] = scale2;
    Engine re(rg);
    const ForwardStats rs = re.stats(rn, 0);
    auto draw_rect = [&, nr = normal(loc, scale2)](std::mt19937_64& r) {
      double x;
      do x = nr(r);
      while (x < 0.0);
      return x;
    };
    mc(tag + "rectified", rs.mean, draw_rect, false);
    mc(tag + "rectified", rs.variance, draw_rect, true);
    auto density = [&](double x) { return std::exp(-0.5 * (x - loc) * (x - loc) / scale2); };
    const double z = oracle::integrate(density, 0.0, INFINITY);
    const double r1 = oracle::integrate([&](double x) { return x * density(x); }, 0.0, INFINITY) / z;
    const double r2 = oracle::integrate([&](double x) { return x * x * density(x); }, 0.0, INFINITY) / z;
    quad(tag + "rectified mean", rs.mean, r1);
    quad(tag + "rectified variance", rs.variance, r2 - r1 * r1);
  }
  return out;
}

PatternRace pattern_search_race(int every) {
  constexpr std::size_t T = 100, D = 8, K = 3;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  Matrix A(D, K);
  for (double& a : A.values) a = normal(rng);
  Matrix data(T, D);
  for (std::size_t t = 0; t < T; ++t) {
    double s[K];
    for (double& v : s) v = normal(rng);
    for (std::size_t i = 0; i < D; ++i) {
      double x = 0.1 * normal(rng);
      for (std::size_t j = 0; j < K; ++j) x += A(i, j) * s[j];
      data(t, i) = x;
    }
  }
  auto run = [&](int pattern_every) {
    FactorModel model = build_factor_model(data, full_mask(D, K));
    randomize(model.graph, 7, 0.5);
    Engine e(model.graph);
    TrainConfig cfg;
    cfg.max_sweeps = 100;
    cfg.rel_tol = 0.0;
    cfg.pattern_search_every = pattern_every;
    return train(e, cfg);
  };
  PatternRace r;
  const auto plain = run(0);
  r.plain_cost_at_100 = plain.back().cost.total;
  const auto fast = run(every);
  for (std::size_t k = 1; k < fast.size(); ++k) {
    const double prev = fast[k - 1].cost.total;
    if (fast[k].cost.total > prev + 1e-9 * std::max(1.0, std::abs(prev))) r.accelerated_monotone = false;
  }
  for (const auto& entry : fast)
    if (entry.cost.total <= r.plain_cost_at_100) {
      r.accelerated_sweeps = entry.sweep;
      break;
    }
  return r;
}

}  // namespace scenario
