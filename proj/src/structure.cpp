#include "vbblocks/structure.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include "json.hpp"

#include "vbblocks/error.hpp"

namespace vbb {

namespace {

bool is_nonlinearity(NodeKind k) { return k == NodeKind::NonlinExpSquare || k == NodeKind::NonlinCut; }

// Restores a stats override even if cost evaluation throws.
class OverrideGuard {
 public:
  OverrideGuard(Engine& e, NodeId id) : engine_(e), id_(id) { engine_.override_stats(id_, ForwardStats::zero()); }
  ~OverrideGuard() { engine_.override_stats(id_, std::nullopt); }
  OverrideGuard(const OverrideGuard&) = delete;
  OverrideGuard& operator=(const OverrideGuard&) = delete;

 private:
  Engine& engine_;
  NodeId id_;
};

bool has_live_children(const ModelGraph& g, NodeId id) {
  const auto topo = g.topology();
  return !topo.children[id.value].empty();
}

// True if no node other than `id` itself reads its value, directly or
// through computational nodes.
bool orphaned(const ModelGraph& g, NodeId id) {
  const auto topo = g.topology();
  std::vector<char> seen(g.size(), 0);
  std::vector<std::size_t> stack{id.value};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (const auto& c : topo.children[v]) {
      const std::size_t w = c.child.value;
      if (is_computational(g.node(c.child).kind)) {
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      } else if (w != id.value) {
        return false;
      }
    }
  }
  return true;
}

NodeId zero_constant(ModelGraph& g) {
  for (const auto& n : g.nodes())
    if (n.alive && n.kind == NodeKind::Constant && n.arity == Arity::Scalar && n.value == 0.0) return n.id;
  std::string label = "zero";
  for (int i = 1; g.find(label); ++i) label = "zero_" + std::to_string(i);
  return g.add_constant(label, 0.0);
}

}  // namespace

std::string to_json_line(const PruneReport& report) {
  nlohmann::json j;
  j["candidate"] = report.label;
  j["delta"] = report.delta_cost;
  j["removed"] = report.removed_labels;
  return j.dump();
}

double removal_delta(Engine& engine, NodeId node) {
  const ModelGraph& g = engine.graph();
  node = g.resolve(node);
  const Node& n = g.node(node);
  if (!n.alive || !n.is_latent() || n.kind == NodeKind::Dirichlet)
    throw Error(ErrorCode::InvalidArgument, "'" + n.label + "' is not a removable variable");
  for (NodeId d : engine.downstream(node))
    if (is_nonlinearity(g.node(d).kind))
      throw Error(ErrorCode::NotLinearPath, "'" + n.label + "' reaches a nonlinearity ('" + g.node(d).label + "')");

  auto ends = engine.endpoints(node);
  ends.erase(std::remove(ends.begin(), ends.end(), node), ends.end());
  double before = engine.node_cost(node);
  for (NodeId e : ends) before += engine.node_cost(e);
  double after = 0.0;
  {
    OverrideGuard guard(engine, node);
    for (NodeId e : ends) after += engine.node_cost(e);
  }
  return after - before;
}

std::vector<NodeId> remove_with_cascade(ModelGraph& g, NodeId root, const CascadePolicy& policy) {
  std::vector<NodeId> removed;
  std::deque<NodeId> queue{g.resolve(root)};
  while (!queue.empty()) {
    const NodeId d = queue.front();
    queue.pop_front();
    {
      const Node& dn = g.node(d);
      if (!dn.alive || dn.observed || dn.kind == NodeKind::Constant) continue;
    }

    std::vector<NodeId> former;
    for (const auto& e : g.node(d).parents) former.push_back(g.resolve(e.parent));

    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i == d.value) continue;
      const NodeId cid{i};
      if (!g.node(cid).alive || g.node(cid).kind == NodeKind::Proxy) continue;
      const NodeKind kind = g.node(cid).kind;
      const auto it = policy.on_parent_removed.find(kind);
      const OnParentRemoved action = it == policy.on_parent_removed.end() ? OnParentRemoved::ZeroParent : it->second;
      for (std::size_t e = g.node(cid).parents.size(); e-- > 0;) {
        if (g.resolve(g.node(cid).parents[e].parent) != d) continue;
        if (action == OnParentRemoved::RemoveChild) {
          queue.push_back(cid);
          break;
        }
        if (action == OnParentRemoved::DropEdge) {
          g.remove_edge(cid, e);
          if (g.node(cid).parents.empty()) queue.push_back(cid);
        } else {
          g.replace_parent(cid, e, zero_constant(g));
        }
      }
    }

    g.remove_node(d);
    removed.push_back(d);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Node& p = g.node(NodeId{i});
      if (p.alive && p.kind == NodeKind::Proxy && p.alias && *p.alias == d) {
        g.remove_node(p.id);
        removed.push_back(p.id);
      }
    }

    for (NodeId p : former) {
      const Node& pn = g.node(p);
      if (!pn.alive || pn.observed || pn.kind == NodeKind::Constant || pn.kind == NodeKind::Proxy) continue;
      if (is_computational(pn.kind)) {
        if (!has_live_children(g, p)) queue.push_back(p);
      } else if (policy.remove_orphans && pn.is_latent() && orphaned(g, p)) {
        queue.push_back(p);
      }
    }
  }
  return removed;
}

std::vector<NodeId> prune_candidates(const Engine& engine) {
  std::vector<NodeId> out;
  for (const auto& n : engine.graph().nodes()) {
    if (!n.alive || !n.is_latent() || n.kind == NodeKind::Dirichlet) continue;
    const auto& children = engine.topology().children[n.id.value];
    // Variables used only as variance parents are priced by removal_delta but
    // not pruned: substituting zero there fixes a prior scale rather than
    // removing structure.
    const bool mean_use = std::any_of(children.begin(), children.end(), [&](const ChildRef& c) {
      return !role_needs_exp(engine.topology().parents[c.child.value][c.edge].role.kind);
    });
    if (!mean_use) continue;
    out.push_back(n.id);
  }
  return out;
}

std::vector<PruneReport> prune(Engine& engine, double threshold, const CascadePolicy& policy) {
  if (threshold > 0.0) throw Error(ErrorCode::InvalidArgument, "prune threshold must be <= 0");
  std::vector<PruneReport> reports;
  for (;;) {
    std::optional<NodeId> best;
    double best_delta = threshold;
    for (NodeId c : prune_candidates(engine)) {
      double d;
      try {
        d = removal_delta(engine, c);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NotLinearPath) continue;
        throw;
      }
      if (d < best_delta) {
        best_delta = d;
        best = c;
      }
    }
    if (!best) break;
    ModelGraph& g = engine.graph();
    PruneReport r;
    r.candidate = *best;
    r.label = g.node(*best).label;
    r.delta_cost = best_delta;
    r.removed = remove_with_cascade(g, *best, policy);
    for (NodeId id : r.removed) r.removed_labels.push_back(g.node(id).label);
    engine.rebuild();
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<NodeId> add_component(ModelGraph& graph, const ComponentSpec& spec) {
  const ModelGraph backup = graph;
  try {
    std::vector<NodeId> added;
    bool proxies = false;
    for (const auto& ns : spec.nodes) {
      NodeId id;
      switch (ns.kind) {
        case NodeKind::Constant: id = graph.add_constant(ns.label, ns.value, ns.arity); break;
        case NodeKind::Proxy:
          id = graph.add_proxy(ns.label, ns.proxy_target);
          proxies = true;
          break;
        case NodeKind::MixtureOfGaussians: id = graph.add_mixture(ns.label, ns.arity, ns.components); break;
        case NodeKind::Dirichlet: id = graph.add_dirichlet(ns.label, ns.components); break;
        case NodeKind::Evidence:
          throw Error(ErrorCode::InvalidArgument, "evidence nodes are added through the evidence list");
        default: id = graph.create_node(ns.kind, ns.label, ns.arity); break;
      }
      added.push_back(id);
    }
    auto lookup = [&](const std::string& label) {
      const auto id = graph.find(label);
      if (!id) throw Error(ErrorCode::UnknownNode, "no node labelled '" + label + "'");
      return *id;
    };
    for (const auto& es : spec.edges) graph.connect(lookup(es.child), lookup(es.parent), es.role);
    if (proxies) graph.connect_proxies();
    for (const auto& ev : spec.evidence) {
      std::string label = ev.node + ".evidence";
      for (int i = 1; graph.find(label); ++i) label = ev.node + ".evidence" + std::to_string(i);
      added.push_back(graph.add_evidence(label, lookup(ev.node), ev.target, ev.precision, ev.fade_sweeps));
    }
    const auto report = graph.validate();
    if (!report.ok()) throw Error(ErrorCode::InvalidGraph, report.to_string());
    return added;
  } catch (...) {
    graph = backup;
    throw;
  }
}

}  // namespace vbb
