#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <random>

#include "oracles.hpp"
#include "random_graphs.hpp"
#include "scenarios.hpp"
#include "vbblocks/engine.hpp"
#include "vbblocks/error.hpp"
#include "vbblocks/learning.hpp"

using namespace vbb;

namespace {

double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

}  // namespace

TEST(SolveGaussian, ClosedFormWithoutExp) {
  const auto r = solve_gaussian(1.0, -2.0, 0.0, {}, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.variance, 0.5);
}

TEST(SolveGaussian, RejectsNonPositiveQuad) {
  EXPECT_THROW(solve_gaussian(0.0, 1.0, 0.0, {}, {0.0, 1.0}), Error);
}

TEST(SolveGaussian, ExpTermMeetsStationarity) {
  const double a = 0.5, b = 0.0, c = 1.0;
  const auto r = solve_gaussian(a, b, c, {}, {0.0, 1.0});
  const double e = std::exp(r.mean + 0.5 * r.variance);
  EXPECT_NEAR(2 * a * r.mean + b + c * e, 0.0, 1e-10);
  EXPECT_NEAR(1.0 / (2.0 * r.variance), a + 0.5 * c * e, 1e-10);

  // Grid refinement oracle on the node-local cost.
  auto f = [&](double m, double v) { return a * (m * m + v) + b * m + c * std::exp(m + v / 2) - 0.5 * std::log(v); };
  double bm = 0, bv = 1, best = f(bm, bv), span = 2.0;
  for (int level = 0; level < 40; ++level) {
    const double cm = bm, cv = bv;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        const double m = cm + span * i / 10, v = cv + span * j / 10;
        if (v <= 0) continue;
        if (f(m, v) < best) best = f(m, v), bm = m, bv = v;
      }
    span *= 0.5;
  }
  EXPECT_NEAR(r.mean, bm, 1e-8);
  EXPECT_NEAR(r.variance, bv, 1e-8);
}

TEST(Engine, ConjugatePairMatchesMarginal) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto s = g.create_node(NodeKind::Gaussian, "s", Arity::Scalar);
  g.connect(s, c0, RoleKind::Mean);
  g.connect(s, c0, RoleKind::Variance);
  const auto x = g.create_node(NodeKind::Gaussian, "x", Arity::Scalar);
  g.connect(x, s, RoleKind::Mean);
  g.connect(x, c0, RoleKind::Variance);
  const double data = 2.0;
  g.observe(x, std::span(&data, 1));
  Engine e(g);
  const auto c = e.sweep();
  EXPECT_NEAR(g.node(s).mean[0], 1.0, 1e-12);
  EXPECT_NEAR(g.node(s).var[0], 0.5, 1e-12);
  EXPECT_NEAR(c.total, -log_normal_pdf(2.0, 0.0, 2.0), 1e-12);
  EXPECT_NEAR(c.total, 2.26551, 1e-5);
}

TEST(SolveGaussian, StationaryUnderFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(0.05, 3.0), u(-3.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double a = pos(rng), b = u(rng), c = rep % 3 == 0 ? 0.0 : pos(rng);
    NonlinCoefs nl;
    if (rep % 2 == 1) {
      nl.quad[0] = pos(rng);
      nl.lin[0] = u(rng);
      nl.quad[1] = pos(rng);
      nl.lin[1] = u(rng);
    }
    const auto r = solve_gaussian(a, b, c, nl, {u(rng), pos(rng)});
    const double h = 1e-6 * std::min(1.0, r.variance);
    const double gm = oracle::derivative([&](double m) { return gaussian_local_cost(a, b, c, nl, m, r.variance); }, r.mean, h);
    const double gv = oracle::derivative([&](double v) { return gaussian_local_cost(a, b, c, nl, r.mean, v); }, r.variance, h);
    // Scale the variance gradient by v so both components are in log-variance units.
    EXPECT_LT(std::max(std::abs(gm), std::abs(gv * r.variance)), 1e-6) << "a=" << a << " b=" << b << " c=" << c;
  }
}

TEST(SolveGaussian, NeverWorseThanCurrentPosterior) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.01, 5.0), u(-5.0, 5.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double a = pos(rng), b = u(rng), c = pos(rng) * (rep % 2);
    NonlinCoefs nl;
    nl.quad[rep % 2] = pos(rng);
    nl.lin[rep % 2] = u(rng);
    const GaussianPosterior cur{u(rng), pos(rng)};
    const auto r = solve_gaussian(a, b, c, nl, cur);
    EXPECT_LE(gaussian_local_cost(a, b, c, nl, r.mean, r.variance),
              gaussian_local_cost(a, b, c, nl, cur.mean, cur.variance) + 1e-12);
  }
}

TEST(Engine, ObservedCostAtOrigin) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto x = g.create_node(NodeKind::Gaussian, "x", Arity::Scalar);
  g.connect(x, c0, RoleKind::Mean);
  g.connect(x, c0, RoleKind::Variance);
  const double zero = 0.0;
  g.observe(x, std::span(&zero, 1));
  Engine e(g);
  EXPECT_NEAR(e.cost().total, 0.5 * std::log(2 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(e.cost().bits_per_sample, e.cost().total / std::numbers::ln2, 1e-14);
}

TEST(Engine, ConjugateExactnessInOneSweep) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto r = scenario::conjugate_chain(rng);
    EXPECT_LT(r.mean_error, 1e-10);
    EXPECT_LT(r.var_error, 1e-10);
    EXPECT_NEAR(r.cost, r.neg_log_evidence, 1e-8);
  }
}

TEST(Engine, CostBoundsTheNegativeLogEvidence) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    for (bool var_role : {false, true}) {
      const auto r = scenario::bound_case(rng, var_role);
      EXPECT_GE(r.cost + r.log_evidence, -1e-9) << "variance role " << var_role;
      if (!var_role) EXPECT_NEAR(r.cost, -r.log_evidence, 1e-7);
    }
  }
}

TEST(Engine, UpdatesNeverIncreaseCostOnRandomGraphs) {
  std::mt19937_64 rng(123);
  for (int i = 0; i < 25; ++i) {
    ModelGraph g = testgraphs::random_graph(rng);
    const auto r = scenario::check_monotone(g, 6, 1000 + i);
    EXPECT_LE(r.worst_update_increase, 1e-9) << "graph " << i;
    EXPECT_LE(r.worst_sweep_increase, 1e-9) << "graph " << i;
  }
}

TEST(Rectified, ForwardStatsOfUnitPosterior) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto r = g.create_node(NodeKind::RectifiedGaussian, "r", Arity::Scalar);
  g.connect(r, c0, RoleKind::Variance);
  g.node(r).mean[0] = 0.0;
  g.node(r).var[0] = 1.0;
  Engine e(g);
  const auto& s = e.stats(r, 0);
  EXPECT_NEAR(s.mean, 0.79788, 1e-5);
  EXPECT_NEAR(s.variance, 0.36338, 1e-5);
  const double q1 = oracle::integrate([](double x) { return x * std::exp(-0.5 * x * x); }, 0, INFINITY) /
                    oracle::integrate([](double x) { return std::exp(-0.5 * x * x); }, 0, INFINITY);
  EXPECT_NEAR(s.mean, q1, 1e-8);
  EXPECT_FALSE(s.exp_mean.has_value());
}

TEST(Rectified, PriorOnlyConvergesToPrior) {
  ModelGraph g(1);
  const auto cv = g.add_constant("v", 0.7);
  const auto r = g.create_node(NodeKind::RectifiedGaussian, "r", Arity::Scalar);
  g.connect(r, cv, RoleKind::Variance);
  g.node(r).mean[0] = 2.0;
  g.node(r).var[0] = 0.1;
  Engine e(g);
  for (int k = 0; k < 50; ++k) e.sweep();
  EXPECT_NEAR(g.node(r).mean[0], 0.0, 1e-6);
  EXPECT_NEAR(g.node(r).var[0], std::exp(-0.7), 1e-6);
  EXPECT_NEAR(e.cost().total, 0.0, 1e-9);
}

TEST(Rectified, NegativePullKeepsMeanPositive) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto cp = g.add_constant("prec", 6.0);
  const auto r = g.create_node(NodeKind::RectifiedGaussian, "r", Arity::Scalar);
  g.connect(r, c0, RoleKind::Variance);
  const auto x = g.create_node(NodeKind::Gaussian, "x", Arity::Scalar);
  g.connect(x, r, RoleKind::Mean);
  g.connect(x, cp, RoleKind::Variance);
  const double d = -50.0;
  g.observe(x, std::span(&d, 1));
  Engine e(g);
  double prev = e.cost().total;
  for (int k = 0; k < 30; ++k) {
    const double c = e.sweep().total;
    EXPECT_LE(c, prev + 1e-9 * std::abs(prev));
    prev = c;
  }
  const auto& s = e.stats(r, 0);
  EXPECT_GT(s.mean, 0.0);
  EXPECT_LT(s.mean, 1e-2);
  EXPECT_GE(s.variance, 0.0);
}

namespace {

// Latent node `m` (Gaussian or K-component mixture with shared parents)
// observed through x_t ~ N(m_t, e^{-3}).
struct MixtureFixture {
  ModelGraph g;
  NodeId m, x, dir;
  MixtureFixture(std::vector<double> centers, std::vector<double> data, bool as_gaussian = false)
      : g(data.size()) {
    const auto cv = g.add_constant("cv", 0.0);
    const auto cx = g.add_constant("cx", 3.0);
    if (as_gaussian) {
      const auto c = g.add_constant("center0", centers[0]);
      m = g.create_node(NodeKind::Gaussian, "m", Arity::Vector);
      g.connect(m, c, RoleKind::Mean);
      g.connect(m, cv, RoleKind::Variance);
    } else {
      dir = g.add_dirichlet("w", centers.size());
      m = g.add_mixture("m", Arity::Vector, centers.size());
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const auto c = g.add_constant("center" + std::to_string(k), centers[k]);
        g.connect(m, c, ParentRole::component_mean(k));
        g.connect(m, cv, ParentRole::component_variance(k));
      }
      g.connect(m, dir, RoleKind::Selector);
    }
    x = g.create_node(NodeKind::Gaussian, "x", Arity::Vector);
    g.connect(x, m, RoleKind::Mean);
    g.connect(x, cx, RoleKind::Variance);
    g.observe(x, data);
  }
};

}  // namespace

TEST(Mixture, SingleComponentMatchesGaussian) {
  const std::vector<double> data{0.3, -1.2, 2.5, 0.0};
  MixtureFixture mix({0.4}, data), gauss({0.4}, data, true);
  Engine em(mix.g), eg(gauss.g);
  for (int k = 0; k < 20; ++k) {
    const double cm = em.sweep().total;
    const double cg = eg.sweep().total;
    EXPECT_NEAR(cm, cg, 1e-12 * (1 + std::abs(cg)));
  }
  for (std::size_t t = 0; t < data.size(); ++t) {
    EXPECT_EQ(mix.g.node(mix.m).resp[t], 1.0);
    EXPECT_NEAR(mix.g.node(mix.m).mean[t], gauss.g.node(gauss.m).mean[t], 1e-12);
  }
}

TEST(Mixture, ResponsibilityFollowsTheDatum) {
  MixtureFixture f({-4.0, 4.0}, {4.0});
  Engine e(f.g);
  for (int k = 0; k < 20; ++k) e.sweep();
  const auto& resp = f.g.node(f.m).resp;
  EXPECT_GT(resp[1], 0.99);
  // Direct normalization oracle at the final q(s) and q(pi).
  const auto& n = f.g.node(f.m);
  const auto& w = f.g.node(f.dir).counts;
  auto score = [&](double center) {
    return boost::math::digamma(w[center > 0]) - boost::math::digamma(w[0] + w[1]) -
           0.5 * ((n.mean[0] - center) * (n.mean[0] - center) + n.var[0]);
  };
  const double l0 = score(-4.0), l1 = score(4.0);
  EXPECT_NEAR(resp[1], 1.0 / (1.0 + std::exp(l0 - l1)), 1e-9);
}

TEST(Mixture, SymmetricSetupSplitsEvenly) {
  MixtureFixture f({-2.0, 2.0}, {0.0});
  f.g.node(f.m).mean[0] = 0.0;
  Engine e(f.g);
  for (int k = 0; k < 10; ++k) e.sweep();
  EXPECT_NEAR(f.g.node(f.m).resp[0], 0.5, 1e-12);
  EXPECT_NEAR(f.g.node(f.m).resp[1], 0.5, 1e-12);
}

TEST(Mixture, StateStaysOnTheSimplexAndCostDecreases) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  std::vector<double> data(40);
  for (auto& d : data) d = (normal(rng) > 0 ? 3.0 : -1.0) + 0.3 * normal(rng);
  MixtureFixture f({-1.5, 0.5, 2.0}, data);
  randomize(f.g, 3, 1.0);
  Engine e(f.g);
  double prev = e.cost().total;
  for (int k = 0; k < 30; ++k) {
    for (NodeId id : e.order()) {
      e.update(id);
      const double c = e.cost().total;
      EXPECT_LE(c, prev + 1e-9 * std::max(1.0, std::abs(prev)));
      prev = c;
    }
    const auto& n = f.g.node(f.m);
    for (std::size_t t = 0; t < data.size(); ++t) {
      double total = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_GE(n.resp[t * 3 + j], 0.0);
        total += n.resp[t * 3 + j];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
    for (double w : f.g.node(f.dir).counts) EXPECT_GT(w, 0.0);
  }
}

TEST(Evidence, FadingPotentialAndCost) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto p = g.create_node(NodeKind::Gaussian, "p", Arity::Scalar);
  g.connect(p, c0, RoleKind::Mean);
  g.connect(p, c0, RoleKind::Variance);
  const double zero = 0.0;
  g.observe(p, std::span(&zero, 1));
  const auto ev = g.add_evidence("ev", p, {2.0}, 1.0, 4);
  Engine e(g);
  EXPECT_NEAR(e.node_cost(ev), 2.0, 1e-15);
  auto pot = e.output_potential(p);
  ASSERT_EQ(pot.size(), 1u);
  EXPECT_DOUBLE_EQ(pot[0].quad, 0.5);
  EXPECT_DOUBLE_EQ(pot[0].lin, -2.0);

  g.set_evidence_clock(2);
  EXPECT_DOUBLE_EQ(g.evidence_weight(g.node(ev)), 0.5);
  EXPECT_NEAR(e.node_cost(ev), 1.0, 1e-15);
  pot = e.output_potential(p);
  EXPECT_DOUBLE_EQ(pot[0].quad, 0.25);
  EXPECT_DOUBLE_EQ(pot[0].lin, -1.0);

  g.set_evidence_clock(4);
  EXPECT_EQ(g.evidence_weight(g.node(ev)), 0.0);
  EXPECT_EQ(e.node_cost(ev), 0.0);
  pot = e.output_potential(p);
  EXPECT_EQ(pot[0].quad, 0.0);
  EXPECT_EQ(pot[0].lin, 0.0);
}

TEST(Evidence, PullsLatentTowardTargetThenFades) {
  ModelGraph g(1);
  const auto c0 = g.add_constant("c0", 0.0);
  const auto s = g.create_node(NodeKind::Gaussian, "s", Arity::Scalar);
  g.connect(s, c0, RoleKind::Mean);
  g.connect(s, c0, RoleKind::Variance);
  g.add_evidence("ev", s, {3.0}, 100.0, 3);
  Engine e(g);
  e.sweep();
  EXPECT_GT(g.node(s).mean[0], 2.9);
  for (int k = 0; k < 5; ++k) e.sweep();
  EXPECT_NEAR(g.node(s).mean[0], 0.0, 1e-12);
  EXPECT_NEAR(g.node(s).var[0], 1.0, 1e-12);
}
