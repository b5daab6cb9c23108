#include "vbblocks/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "vbblocks/error.hpp"
#include "vbblocks/numeric.hpp"

namespace vbb {

namespace {

std::string label(const std::string& name, std::size_t i) { return name + "(" + std::to_string(i) + ")"; }

std::string label(const std::string& name, std::size_t i, std::size_t j) {
  return name + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
}

// Posterior (mean, variance) of a Gaussian node at slot t.
struct Moment {
  double mean;
  double var;
};

Moment posterior(const ModelGraph& g, NodeId id, std::size_t t) {
  const Node& n = g.node(id);
  const std::size_t k = n.mean.size() == 1 ? 0 : t;
  return {n.mean[k], n.observed ? 0.0 : n.var[k]};
}

// <exp(-v)> for a Gaussian v.
double exp_neg(Moment m) { return std::exp(-m.mean + 0.5 * m.var); }

NodeId gaussian(ModelGraph& g, const std::string& name, Arity arity, NodeId mean, NodeId var) {
  const NodeId id = g.create_node(NodeKind::Gaussian, name, arity);
  g.connect(id, mean, RoleKind::Mean);
  g.connect(id, var, RoleKind::Variance);
  return id;
}

NodeId delay(ModelGraph& g, const std::string& name, NodeId init, NodeId input) {
  const NodeId id = g.create_node(NodeKind::Delay, name, Arity::Vector);
  g.connect(id, init, RoleKind::DelayInit);
  g.connect(id, input, RoleKind::DelayInput);
  return id;
}

struct Constants {
  NodeId c0, hyper, weight_var;
};

Constants make_constants(ModelGraph& g, const DynSpec& spec) {
  Constants c;
  c.c0 = g.add_constant("const0", 0.0);
  c.hyper = g.add_constant(spec.hyper_log_prec == -5.0 ? "constneg5" : "consthyper", spec.hyper_log_prec);
  c.weight_var = spec.weight_log_prec == 0.0 ? c.c0 : g.add_constant("constweight", spec.weight_log_prec);
  return c;
}

void check_spec(const DynSpec& spec) {
  if (spec.xdim == 0 || spec.sdim == 0 || spec.tdim == 0)
    throw Error(ErrorCode::InvalidArgument, "xdim, sdim and tdim must be positive");
}

std::vector<std::optional<NodeId>> find_all(const ModelGraph& g, const std::string& name, std::size_t n) {
  std::vector<std::optional<NodeId>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = g.find(label(name, i));
  return out;
}

LinmapHandle find_linmap(const ModelGraph& g, const std::string& name, std::size_t outdim, std::size_t indim) {
  LinmapHandle h;
  h.weights.assign(outdim, std::vector<std::optional<NodeId>>(indim));
  h.products = h.weights;
  h.mask.assign(outdim, std::vector<bool>(indim, false));
  for (std::size_t i = 0; i < outdim; ++i) {
    if (auto s = g.find(label(name + "sum", i))) h.outputs.push_back(*s);
    for (std::size_t j = 0; j < indim; ++j) {
      h.weights[i][j] = g.find(label(name, i, j));
      h.products[i][j] = g.find(label(name + "prod", i, j));
      h.mask[i][j] = h.weights[i][j].has_value();
    }
  }
  return h;
}

}  // namespace

Mask full_mask(std::size_t rows, std::size_t cols) { return Mask(rows, std::vector<bool>(cols, true)); }

LinmapHandle build_linmap(ModelGraph& graph, std::span<const NodeId> inputs, std::size_t outdim, const Mask& mask,
                          const std::string& name, NodeId weight_mean, NodeId weight_var) {
  LinmapHandle h;
  h.mask = mask.empty() ? full_mask(outdim, inputs.size()) : mask;
  if (h.mask.size() != outdim)
    throw Error(ErrorCode::DimensionMismatch, "mask has " + std::to_string(h.mask.size()) + " rows, expected " +
                                                  std::to_string(outdim));
  for (std::size_t i = 0; i < outdim; ++i) {
    if (h.mask[i].size() != inputs.size())
      throw Error(ErrorCode::DimensionMismatch, "mask row " + std::to_string(i) + " has " +
                                                    std::to_string(h.mask[i].size()) + " columns, expected " +
                                                    std::to_string(inputs.size()));
    if (std::none_of(h.mask[i].begin(), h.mask[i].end(), [](bool b) { return b; }))
      throw Error(ErrorCode::EmptyRow, "mask row " + std::to_string(i) + " of '" + name + "' selects no input");
  }
  h.weights.assign(outdim, std::vector<std::optional<NodeId>>(inputs.size()));
  h.products = h.weights;
  for (std::size_t i = 0; i < outdim; ++i) {
    const NodeId sum = graph.create_node(NodeKind::Sum, label(name + "sum", i), Arity::Vector);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      if (!h.mask[i][j]) continue;
      const NodeId a = gaussian(graph, label(name, i, j), Arity::Scalar, weight_mean, weight_var);
      const NodeId p = graph.create_node(NodeKind::Product, label(name + "prod", i, j), Arity::Vector);
      graph.connect(p, a, RoleKind::Factor);
      graph.connect(p, inputs[j], RoleKind::Factor);
      graph.connect(sum, p, RoleKind::Summand);
      h.weights[i][j] = a;
      h.products[i][j] = p;
    }
    h.outputs.push_back(sum);
  }
  return h;
}

std::string_view to_string(ModelType type) noexcept { return type == ModelType::DynVar ? "dynvar" : "dynsrc"; }

std::optional<ModelType> parse_model_type(std::string_view name) noexcept {
  if (name == "dynvar") return ModelType::DynVar;
  if (name == "dynsrc") return ModelType::DynSrc;
  return std::nullopt;
}

DynModel build_dynvar(ModelGraph& graph, const DynSpec& spec) {
  check_spec(spec);
  if (graph.sample_count() != spec.tdim)
    throw Error(ErrorCode::DimensionMismatch, "graph sample count differs from tdim");
  DynModel m;
  m.type = ModelType::DynVar;
  m.xdim = spec.xdim;
  m.sdim = spec.sdim;
  m.tdim = spec.tdim;
  const Constants c = make_constants(graph, spec);
  m.c0 = c.c0;
  m.cn5 = c.hyper;

  std::vector<NodeId> pu;
  for (std::size_t j = 0; j < spec.sdim; ++j) pu.push_back(graph.add_proxy(label("pu", j), label("u", j)));
  m.B = build_linmap(graph, pu, spec.sdim, {}, "B", c.c0, c.weight_var);

  std::vector<NodeId> s;
  for (std::size_t j = 0; j < spec.sdim; ++j) {
    const NodeId vu = gaussian(graph, label("vu", j), Arity::Scalar, c.c0, c.hyper);
    const NodeId du = delay(graph, label("du", j), c.c0, m.B.outputs[j]);
    const NodeId u = gaussian(graph, label("u", j), Arity::Vector, du, vu);
    const NodeId ps = graph.add_proxy(label("ps", j), label("s", j));
    const NodeId ds = delay(graph, label("ds", j), c.c0, ps);
    s.push_back(gaussian(graph, label("s", j), Arity::Vector, ds, u));
    m.vu.push_back(vu);
    m.u.push_back(u);
  }
  for (NodeId id : s) m.s.push_back(id);

  m.A = build_linmap(graph, s, spec.xdim, spec.mask, "A", c.c0, c.weight_var);
  for (std::size_t i = 0; i < spec.xdim; ++i) {
    const NodeId vx = gaussian(graph, label("vx", i), Arity::Scalar, c.c0, c.hyper);
    m.vx.push_back(vx);
    m.x.push_back(gaussian(graph, label("x", i), Arity::Vector, m.A.outputs[i], vx));
  }
  graph.connect_proxies();
  return m;
}

DynModel build_dynsrc(ModelGraph& graph, const DynSpec& spec) {
  check_spec(spec);
  if (graph.sample_count() != spec.tdim)
    throw Error(ErrorCode::DimensionMismatch, "graph sample count differs from tdim");
  DynModel m;
  m.type = ModelType::DynSrc;
  m.xdim = spec.xdim;
  m.sdim = spec.sdim;
  m.tdim = spec.tdim;
  const Constants c = make_constants(graph, spec);
  m.c0 = c.c0;
  m.cn5 = c.hyper;

  std::vector<NodeId> ps;
  for (std::size_t j = 0; j < spec.sdim; ++j) ps.push_back(graph.add_proxy(label("ps", j), label("s", j)));
  m.B = build_linmap(graph, ps, spec.sdim, {}, "B", c.c0, c.weight_var);

  std::vector<NodeId> s;
  for (std::size_t j = 0; j < spec.sdim; ++j) {
    const NodeId vu = gaussian(graph, label("vu", j), Arity::Scalar, c.c0, c.hyper);
    const NodeId mu = gaussian(graph, label("mu_u", j), Arity::Scalar, c.c0, c.hyper);
    const NodeId u = gaussian(graph, label("u", j), Arity::Vector, mu, vu);
    const NodeId ds = delay(graph, label("ds", j), c.c0, m.B.outputs[j]);
    s.push_back(gaussian(graph, label("s", j), Arity::Vector, ds, u));
    m.vu.push_back(vu);
    m.mu_u.push_back(mu);
    m.u.push_back(u);
  }
  for (NodeId id : s) m.s.push_back(id);

  m.A = build_linmap(graph, s, spec.xdim, spec.mask, "A", c.c0, c.weight_var);
  for (std::size_t i = 0; i < spec.xdim; ++i) {
    const NodeId vx = gaussian(graph, label("vx", i), Arity::Scalar, c.c0, c.hyper);
    m.vx.push_back(vx);
    m.x.push_back(gaussian(graph, label("x", i), Arity::Vector, m.A.outputs[i], vx));
  }
  graph.connect_proxies();
  return m;
}

DynModel attach_model(const ModelGraph& graph, ModelType type, std::size_t xdim, std::size_t sdim) {
  DynModel m;
  m.type = type;
  m.xdim = xdim;
  m.sdim = sdim;
  m.tdim = graph.sample_count();
  auto need = [&](const std::string& l) {
    const auto id = graph.find(l);
    if (!id) throw Error(ErrorCode::UnknownNode, "model graph lacks node '" + l + "'");
    return *id;
  };
  m.c0 = need("const0");
  if (auto h = graph.find("constneg5"))
    m.cn5 = *h;
  else
    m.cn5 = need("consthyper");
  for (std::size_t i = 0; i < xdim; ++i) {
    m.x.push_back(need(label("x", i)));
    m.vx.push_back(need(label("vx", i)));
  }
  m.s = find_all(graph, "s", sdim);
  m.u = find_all(graph, "u", sdim);
  m.vu = find_all(graph, "vu", sdim);
  if (type == ModelType::DynSrc) m.mu_u = find_all(graph, "mu_u", sdim);
  m.A = find_linmap(graph, "A", xdim, sdim);
  m.B = find_linmap(graph, "B", sdim, sdim);
  return m;
}

void observe_data(ModelGraph& graph, const DynModel& model, const Matrix& data) {
  if (data.cols != model.xdim)
    throw Error(ErrorCode::DimensionMismatch, "data has " + std::to_string(data.cols) + " columns, model xdim is " +
                                                  std::to_string(model.xdim));
  if (data.rows != graph.sample_count())
    throw Error(ErrorCode::DimensionMismatch, "data has " + std::to_string(data.rows) + " rows, model tdim is " +
                                                  std::to_string(graph.sample_count()));
  for (std::size_t i = 0; i < model.xdim; ++i) {
    const auto col = data.column(i);
    graph.observe(model.x[i], col);
  }
}

void init_from_data(ModelGraph& graph, const DynModel& model, const Matrix& data, const InitConfig& config) {
  if (data.cols != model.xdim || data.rows != graph.sample_count())
    throw Error(ErrorCode::DimensionMismatch, "data shape does not match the model");
  const auto T = static_cast<Eigen::Index>(data.rows);
  const auto D = static_cast<Eigen::Index>(data.cols);
  const auto K = static_cast<Eigen::Index>(model.sdim);
  Eigen::MatrixXd X(T, D);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < D; ++i) X(t, i) = data(t, i);

  auto present = [&](std::size_t i, std::size_t j) {
    return model.A.weights[i][j].has_value() && model.s[j].has_value() && graph.node(*model.s[j]).alive;
  };

  const double ridge = 1e-9 * (1.0 + X.squaredNorm() / static_cast<double>(T * D));
  // Alternating least squares for X ~ S A^T with A zero outside the mask.
  auto refine = [&](Eigen::MatrixXd S) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(D, K);
    for (int pass = 0; pass < config.refinements; ++pass) {
      for (Eigen::Index i = 0; i < D; ++i) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < K; ++j)
          if (present(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) cols.push_back(j);
        A.row(i).setZero();
        if (cols.empty()) continue;
        const auto n = static_cast<Eigen::Index>(cols.size());
        Eigen::MatrixXd Sj(T, n);
        for (Eigen::Index c = 0; c < n; ++c) Sj.col(c) = S.col(cols[c]);
        Eigen::MatrixXd G = Sj.transpose() * Sj;
        G.diagonal().array() += ridge;
        const Eigen::VectorXd w = G.ldlt().solve(Sj.transpose() * X.col(i));
        for (Eigen::Index c = 0; c < n; ++c) A(i, cols[c]) = w(c);
      }
      Eigen::MatrixXd G = A.transpose() * A;
      G.diagonal().array() += ridge;
      S = (X * A) * G.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    }
    return std::pair{S, A};
  };

  // Starts: the global principal components, per source the leading
  // component of the pixels it covers, and random mixtures of the former.
  Eigen::MatrixXd global = Eigen::MatrixXd::Zero(T, K);
  {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const Eigen::Index rank = std::min<Eigen::Index>(K, svd.matrixV().cols());
    global.leftCols(rank) = X * svd.matrixV().leftCols(rank);
  }
  Eigen::MatrixXd regional = Eigen::MatrixXd::Zero(T, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < D; ++i)
      if (present(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) rows.push_back(i);
    if (rows.empty()) continue;
    Eigen::MatrixXd Xj(T, static_cast<Eigen::Index>(rows.size()));
    for (Eigen::Index c = 0; c < Xj.cols(); ++c) Xj.col(c) = X.col(rows[c]);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Xj, Eigen::ComputeThinV);
    regional.col(j) = Xj * svd.matrixV().col(0);
  }
  std::vector<Eigen::MatrixXd> starts{global, regional};
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::MatrixXd M(K, K);
    for (Eigen::Index a = 0; a < K; ++a)
      for (Eigen::Index b = 0; b < K; ++b) M(a, b) = normal(rng);
    starts.push_back(global * M);
  }
  Eigen::MatrixXd S, A;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    auto [S2, A2] = refine(start);
    const double resid = (X - S2 * A2.transpose()).squaredNorm();
    if (resid < best) {
      best = resid;
      S = std::move(S2);
      A = std::move(A2);
    }
  }

  for (Eigen::Index j = 0; j < K; ++j) {
    double sq = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < D; ++i)
      if (A(i, j) != 0.0) {
        sq += A(i, j) * A(i, j);
        ++n;
      }
    if (n == 0 || sq == 0.0) continue;
    const double rms = std::sqrt(sq / n);
    A.col(j) /= rms;
    S.col(j) *= rms;
  }
  const Eigen::MatrixXd R = X - S * A.transpose();

  auto set = [&](std::optional<NodeId> id, std::size_t t, double mean, std::optional<double> var = {}) {
    if (!id || !graph.node(*id).alive) return;
    Node& n = graph.node(*id);
    const std::size_t k = n.mean.size() == 1 ? 0 : t;
    n.mean[k] = mean;
    if (var) n.var[k] = std::max(*var, numeric::kVarianceFloor);
  };
  constexpr double kFloor = 1e-8;
  const std::size_t half = config.window / 2;

  for (std::size_t i = 0; i < model.xdim; ++i) {
    const double noise = std::max(R.col(static_cast<Eigen::Index>(i)).squaredNorm() / T, kFloor);
    set(model.vx[i], 0, -std::log(noise));
    for (std::size_t j = 0; j < model.sdim; ++j) {
      const double energy = S.col(static_cast<Eigen::Index>(j)).squaredNorm();
      set(model.A.weights[i][j], 0, A(i, j), std::min(1.0, noise / std::max(energy, kFloor)));
    }
  }
  for (std::size_t j = 0; j < model.sdim; ++j) {
    if (!model.s[j] || !graph.node(*model.s[j]).alive) continue;
    const auto col = S.col(static_cast<Eigen::Index>(j));
    std::vector<double> innov(data.rows);
    for (std::size_t t = 0; t < data.rows; ++t) {
      const double d = col(t) - (t == 0 ? 0.0 : col(t - 1));
      innov[t] = d * d;
    }
    std::vector<double> u(data.rows);
    for (std::size_t t = 0; t < data.rows; ++t) {
      const std::size_t lo = t > half ? t - half : 0, hi = std::min(data.rows, t + half + 1);
      double v = 0.0;
      for (std::size_t k = lo; k < hi; ++k) v += innov[k];
      v = std::max(v / static_cast<double>(hi - lo), kFloor);
      u[t] = -std::log(v);
      set(model.s[j], t, col(t), config.source_var * v);
      set(model.u[j], t, u[t]);
    }
    double mean = 0.0, spread = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t) mean += u[t];
    mean /= static_cast<double>(u.size());
    for (std::size_t t = 0; t < u.size(); ++t) {
      const double d = model.type == ModelType::DynVar ? u[t] - (t == 0 ? 0.0 : u[t - 1]) : u[t] - mean;
      spread += d * d;
    }
    set(model.vu[j], 0, -std::log(std::max(spread / static_cast<double>(u.size()), kFloor)));
    if (model.type == ModelType::DynSrc) set(model.mu_u[j], 0, mean);
    for (std::size_t k = 0; k < model.sdim; ++k) set(model.B.weights[j][k], 0, j == k ? 1.0 : 0.0);
  }
}

PredictiveGaussian predict_next(const ModelGraph& graph, const DynModel& model, std::size_t t) {
  if (t < 1 || t >= graph.sample_count())
    throw Error(ErrorCode::OutOfRange, "prediction slot " + std::to_string(t) + " outside [1, " +
                                           std::to_string(graph.sample_count()) + ")");
  const std::size_t prev = t - 1;
  const std::size_t S = model.sdim;
  auto alive = [&](const std::optional<NodeId>& id) { return id && graph.node(*id).alive; };

  // Linear map of independent Gaussians: mean and variance of sum_k b_k z_k.
  auto linear = [&](const std::vector<std::optional<NodeId>>& row, const std::vector<Moment>& z) {
    Moment out{0.0, 0.0};
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!alive(row[k])) continue;
      const Moment b = posterior(graph, *row[k], 0);
      out.mean += b.mean * z[k].mean;
      out.var += b.mean * b.mean * z[k].var + b.var * (z[k].mean * z[k].mean + z[k].var);
    }
    return out;
  };

  std::vector<Moment> s_prev(S, {0.0, 0.0}), u_prev(S, {0.0, 0.0});
  for (std::size_t j = 0; j < S; ++j) {
    if (alive(model.s[j])) s_prev[j] = posterior(graph, *model.s[j], prev);
    if (alive(model.u[j])) u_prev[j] = posterior(graph, *model.u[j], prev);
  }

  std::vector<Moment> src(S, {0.0, 0.0});
  for (std::size_t j = 0; j < S; ++j) {
    if (!alive(model.s[j])) continue;
    Moment u_next{0.0, 0.0};
    if (alive(model.u[j])) {
      const double vu_term = alive(model.vu[j]) ? exp_neg(posterior(graph, *model.vu[j], 0)) : 1.0;
      if (model.type == ModelType::DynVar) {
        u_next = linear(model.B.weights[j], u_prev);
      } else if (alive(model.mu_u[j])) {
        u_next = posterior(graph, *model.mu_u[j], 0);
      }
      u_next.var += vu_term;
    }
    const double innovation = exp_neg(u_next);
    if (model.type == ModelType::DynVar) {
      src[j] = {s_prev[j].mean, s_prev[j].var + innovation};
    } else {
      src[j] = linear(model.B.weights[j], s_prev);
      src[j].var += innovation;
    }
  }

  PredictiveGaussian p;
  for (std::size_t i = 0; i < model.xdim; ++i) {
    Moment x = linear(model.A.weights[i], src);
    x.var += exp_neg(posterior(graph, model.vx[i], 0));
    p.mean.push_back(x.mean);
    p.variance.push_back(x.var);
  }
  return p;
}

double predictive_perplexity(const PredictiveGaussian& pred, std::span<const double> x) {
  if (pred.mean.size() != x.size())
    throw Error(ErrorCode::DimensionMismatch, "prediction and observation dimensions differ");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - pred.mean[i];
    total += -0.5 * std::log(2.0 * std::numbers::pi * pred.variance[i]) - 0.5 * d * d / pred.variance[i];
  }
  return std::exp(-total / static_cast<double>(x.size()));
}

SynthData synth_sequence(const SynthConfig& cfg) {
  if (cfg.xdim == 0 || cfg.sdim == 0 || cfg.tdim == 0)
    throw Error(ErrorCode::InvalidArgument, "xdim, sdim and tdim must be positive");
  SynthData out;
  out.mask = cfg.mask.empty() ? full_mask(cfg.xdim, cfg.sdim) : cfg.mask;
  if (out.mask.size() != cfg.xdim || out.mask[0].size() != cfg.sdim)
    throw Error(ErrorCode::DimensionMismatch, "mask must be xdim x sdim");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  out.weights = Matrix(cfg.xdim, cfg.sdim);
  for (std::size_t i = 0; i < cfg.xdim; ++i)
    for (std::size_t j = 0; j < cfg.sdim; ++j)
      if (out.mask[i][j]) out.weights(i, j) = cfg.weight_std * normal(rng);

  std::vector<bool> follows(cfg.sdim, cfg.profile.sources.empty());
  for (std::size_t j : cfg.profile.sources)
    if (j < cfg.sdim) follows[j] = true;

  auto profile = [&](std::size_t t, std::size_t j) {
    const auto& p = cfg.profile;
    if (!follows[j]) return p.calm;
    switch (p.kind) {
      case MotionProfile::Kind::Constant: return p.calm;
      case MotionProfile::Kind::Step: return t >= p.start ? p.active : p.calm;
      case MotionProfile::Kind::Window: return t >= p.start && t < p.end ? p.active : p.calm;
    }
    return p.calm;
  };

  out.data = Matrix(cfg.tdim, cfg.xdim);
  out.sources = Matrix(cfg.tdim, cfg.sdim);
  out.log_prec = Matrix(cfg.tdim, cfg.sdim);
  std::vector<double> s(cfg.sdim, 0.0);
  for (std::size_t t = 0; t < cfg.tdim; ++t) {
    for (std::size_t j = 0; j < cfg.sdim; ++j) {
      const double u = profile(t, j);
      out.log_prec(t, j) = u;
      s[j] += std::exp(-0.5 * u) * normal(rng);
      out.sources(t, j) = s[j];
    }
    for (std::size_t i = 0; i < cfg.xdim; ++i) {
      double x = cfg.noise_std * normal(rng);
      for (std::size_t j = 0; j < cfg.sdim; ++j) x += out.weights(i, j) * s[j];
      out.data(t, i) = x;
    }
  }
  return out;
}

Mask circular_masks(std::size_t side, std::size_t sdim, double radius) {
  if (side == 0 || sdim == 0) throw Error(ErrorCode::InvalidArgument, "side and sdim must be positive");
  if (radius <= 0.0) radius = 0.5 * static_cast<double>(side);
  const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(sdim))));
  const double cell = static_cast<double>(side) / static_cast<double>(grid);
  std::vector<std::pair<double, double>> centers;
  for (std::size_t k = 0; k < sdim; ++k)
    centers.emplace_back((static_cast<double>(k / grid) + 0.5) * cell - 0.5,
                         (static_cast<double>(k % grid) + 0.5) * cell - 0.5);
  Mask mask(side * side, std::vector<bool>(sdim, false));
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      auto& row = mask[r * side + c];
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sdim; ++k) {
        const double d = std::hypot(static_cast<double>(r) - centers[k].first, static_cast<double>(c) - centers[k].second);
        if (d <= radius) row[k] = true;
        if (d < best) {
          best = d;
          nearest = k;
        }
      }
      row[nearest] = true;
    }
  }
  return mask;
}

}  // namespace vbb
