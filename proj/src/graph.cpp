#include "vbblocks/graph.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "vbblocks/error.hpp"

namespace vbb {

namespace {

constexpr std::array<std::string_view, 12> kKindNames = {
    "Constant", "Gaussian", "RectifiedGaussian", "MixtureOfGaussians", "Dirichlet", "Evidence",
    "Sum",      "Product",  "NonlinExpSquare",   "NonlinCut",          "Delay",     "Proxy",
};

constexpr std::array<std::string_view, 11> kRoleNames = {
    "Mean",       "Variance",   "Summand",       "Factor",            "NonlinInput", "DelayInput",
    "DelayInit",  "ComponentMean", "ComponentVariance", "Selector", "Concentration",
};

bool any_output(NodeKind k) {
  switch (k) {
    case NodeKind::Constant:
    case NodeKind::Gaussian:
    case NodeKind::RectifiedGaussian:
    case NodeKind::MixtureOfGaussians:
    case NodeKind::Sum:
    case NodeKind::Product:
    case NodeKind::NonlinExpSquare:
    case NodeKind::NonlinCut:
      return true;
    default:
      return false;
  }
}

bool variance_output(NodeKind k) {
  return k == NodeKind::Constant || k == NodeKind::Gaussian || k == NodeKind::Sum;
}

std::string describe(const Node& n) { return "'" + n.label + "' (" + std::string(to_string(n.kind)) + ")"; }

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateLabel: return "DuplicateLabel";
    case ErrorCode::IllegalRole: return "IllegalRole";
    case ErrorCode::ScalarChildVectorParent: return "ScalarChildVectorParent";
    case ErrorCode::UnresolvedProxy: return "UnresolvedProxy";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::GraphFrozen: return "GraphFrozen";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::MissingExpStat: return "MissingExpStat";
    case ErrorCode::NonPositiveQuad: return "NonPositiveQuad";
    case ErrorCode::NotLinearPath: return "NotLinearPath";
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(NodeKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<NodeKind> parse_node_kind(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<NodeKind>(i);
  return std::nullopt;
}

std::string_view to_string(RoleKind role) noexcept { return kRoleNames[static_cast<std::size_t>(role)]; }

std::optional<RoleKind> parse_role_kind(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i)
    if (kRoleNames[i] == name) return static_cast<RoleKind>(i);
  return std::nullopt;
}

std::string_view to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::UnresolvedProxy: return "UnresolvedProxy";
    case ViolationKind::Cycle: return "Cycle";
    case ViolationKind::ComputationalCycle: return "ComputationalCycle";
    case ViolationKind::MultiplePaths: return "MultiplePaths";
    case ViolationKind::IllegalRole: return "IllegalRole";
    case ViolationKind::ProductArity: return "ProductArity";
    case ViolationKind::ParentCount: return "ParentCount";
    case ViolationKind::Arity: return "Arity";
  }
  return "Unknown";
}

bool is_variable(NodeKind kind) noexcept {
  return kind == NodeKind::Gaussian || kind == NodeKind::RectifiedGaussian ||
         kind == NodeKind::MixtureOfGaussians || kind == NodeKind::Dirichlet;
}

bool is_computational(NodeKind kind) noexcept {
  return kind == NodeKind::Sum || kind == NodeKind::Product || kind == NodeKind::NonlinExpSquare ||
         kind == NodeKind::NonlinCut || kind == NodeKind::Delay;
}

bool role_needs_exp(RoleKind role) noexcept {
  return role == RoleKind::Variance || role == RoleKind::ComponentVariance;
}

bool role_allowed(NodeKind child, RoleKind role, NodeKind parent) noexcept {
  switch (child) {
    case NodeKind::Gaussian:
      if (role == RoleKind::Mean) return any_output(parent);
      if (role == RoleKind::Variance) return variance_output(parent);
      return false;
    case NodeKind::RectifiedGaussian:
      return role == RoleKind::Variance && variance_output(parent);
    case NodeKind::MixtureOfGaussians:
      if (role == RoleKind::ComponentMean) return any_output(parent);
      if (role == RoleKind::ComponentVariance) return variance_output(parent);
      if (role == RoleKind::Selector) return parent == NodeKind::Dirichlet;
      return false;
    case NodeKind::Dirichlet:
      return role == RoleKind::Concentration && parent == NodeKind::Constant;
    case NodeKind::Evidence:
      return role == RoleKind::Mean && any_output(parent);
    case NodeKind::Sum:
      return role == RoleKind::Summand && any_output(parent);
    case NodeKind::Product:
      return role == RoleKind::Factor && any_output(parent);
    case NodeKind::NonlinExpSquare:
    case NodeKind::NonlinCut:
      return role == RoleKind::NonlinInput && parent == NodeKind::Gaussian;
    case NodeKind::Delay:
      return (role == RoleKind::DelayInput || role == RoleKind::DelayInit) && any_output(parent);
    case NodeKind::Constant:
    case NodeKind::Proxy:
      return false;
  }
  return false;
}

bool ValidationReport::has(ViolationKind kind) const noexcept {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) os << vbb::to_string(v.kind) << ": " << v.message << '\n';
  return os.str();
}

ModelGraph::ModelGraph(std::size_t sample_count) : sample_count_(sample_count) {
  if (sample_count == 0) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
}

std::size_t ModelGraph::live_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.alive; }));
}

void ModelGraph::require_mutable() const {
  if (frozen_) throw Error(ErrorCode::GraphFrozen, "graph is frozen");
}

void ModelGraph::check_id(NodeId id) const {
  if (id.value >= nodes_.size()) throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(id.value));
}

void ModelGraph::allocate_state(Node& n) const {
  const std::size_t slots = n.arity == Arity::Vector ? sample_count_ : 1;
  switch (n.kind) {
    case NodeKind::Gaussian:
    case NodeKind::RectifiedGaussian:
      n.mean.assign(slots, 0.0);
      n.var.assign(slots, 1.0);
      break;
    case NodeKind::MixtureOfGaussians:
      n.mean.assign(slots, 0.0);
      n.var.assign(slots, 1.0);
      n.resp.assign(slots * n.components, 1.0 / static_cast<double>(n.components));
      break;
    case NodeKind::Dirichlet:
      n.prior_counts.assign(n.components, 1.0);
      n.counts = n.prior_counts;
      break;
    default:
      break;
  }
}

NodeId ModelGraph::create_node(NodeKind kind, std::string label, Arity arity, std::size_t components) {
  require_mutable();
  if (label.empty()) throw Error(ErrorCode::InvalidArgument, "node label must be nonempty");
  auto [lo, hi] = labels_.equal_range(label);
  for (auto it = lo; it != hi; ++it) {
    if (nodes_[it->second].kind != NodeKind::Proxy)
      throw Error(ErrorCode::DuplicateLabel, "label '" + label + "' already in use");
  }
  if (kind == NodeKind::MixtureOfGaussians || kind == NodeKind::Dirichlet) {
    if (components == 0) components = 1;
  } else {
    components = 0;
  }
  if (kind == NodeKind::Dirichlet) arity = Arity::Scalar;

  Node n;
  n.id = NodeId{nodes_.size()};
  n.kind = kind;
  n.label = std::move(label);
  n.arity = arity;
  n.components = components;
  allocate_state(n);
  labels_.emplace(n.label, n.id.value);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

NodeId ModelGraph::add_constant(std::string label, double value, Arity arity) {
  const NodeId id = create_node(NodeKind::Constant, std::move(label), arity);
  nodes_[id.value].value = value;
  return id;
}

NodeId ModelGraph::add_proxy(std::string label, std::string target_label) {
  const NodeId id = create_node(NodeKind::Proxy, std::move(label), Arity::Scalar);
  nodes_[id.value].proxy_target = std::move(target_label);
  return id;
}

NodeId ModelGraph::add_mixture(std::string label, Arity arity, std::size_t components) {
  if (components == 0) throw Error(ErrorCode::InvalidArgument, "mixture needs at least one component");
  return create_node(NodeKind::MixtureOfGaussians, std::move(label), arity, components);
}

NodeId ModelGraph::add_dirichlet(std::string label, std::size_t components) {
  if (components == 0) throw Error(ErrorCode::InvalidArgument, "Dirichlet needs at least one component");
  return create_node(NodeKind::Dirichlet, std::move(label), Arity::Scalar, components);
}

NodeId ModelGraph::add_evidence(std::string label, NodeId parent, std::vector<double> target, double precision,
                                int fade_sweeps) {
  if (!(precision > 0.0)) throw Error(ErrorCode::InvalidArgument, "evidence precision must be positive");
  if (fade_sweeps <= 0) throw Error(ErrorCode::InvalidArgument, "fade_sweeps must be positive");
  check_id(parent);
  const Arity arity = target.size() > 1 ? Arity::Vector : Arity::Scalar;
  if (arity == Arity::Vector && target.size() != sample_count_)
    throw Error(ErrorCode::DimensionMismatch, "evidence target length must be 1 or the sample count");
  if (target.empty()) throw Error(ErrorCode::InvalidArgument, "evidence target is empty");
  const NodeId id = create_node(NodeKind::Evidence, std::move(label), arity);
  Node& n = nodes_[id.value];
  n.target = std::move(target);
  n.precision = precision;
  n.fade_sweeps = fade_sweeps;
  n.start_clock = evidence_clock_;
  connect(id, parent, RoleKind::Mean);
  return id;
}

void ModelGraph::connect(NodeId child, NodeId parent, ParentRole role) {
  require_mutable();
  check_id(child);
  check_id(parent);
  Node& c = nodes_[child.value];
  const Node& p = nodes_[parent.value];
  if (!c.alive || !p.alive) throw Error(ErrorCode::UnknownNode, "cannot connect removed nodes");

  if (role.kind == RoleKind::ComponentMean || role.kind == RoleKind::ComponentVariance) {
    if (c.kind != NodeKind::MixtureOfGaussians || role.component >= c.components)
      throw Error(ErrorCode::IllegalRole, "component index out of range for " + describe(c));
  }

  // Wrappers are checked against what they wrap once proxies are resolved;
  // a Delay is transparent everywhere except directly before a nonlinearity.
  const bool is_wrapper = p.kind == NodeKind::Proxy || p.kind == NodeKind::Delay;
  bool legal = role_allowed(c.kind, role.kind, p.kind);
  if (is_wrapper) {
    const bool wrapper_role_exists = role_allowed(c.kind, role.kind, NodeKind::Gaussian) ||
                                     role_allowed(c.kind, role.kind, NodeKind::Dirichlet) ||
                                     role_allowed(c.kind, role.kind, NodeKind::Constant);
    legal = wrapper_role_exists;
    if (p.kind == NodeKind::Delay && role.kind == RoleKind::NonlinInput) legal = false;
    if (p.kind == NodeKind::Delay && (role.kind == RoleKind::Selector || role.kind == RoleKind::Concentration))
      legal = false;
  }
  if (!legal) {
    throw Error(ErrorCode::IllegalRole, describe(p) + " cannot be the " + std::string(to_string(role.kind)) +
                                            " parent of " + describe(c) + " (allowed connectivity table)");
  }
  if (p.kind != NodeKind::Proxy && c.arity == Arity::Scalar && p.arity == Arity::Vector &&
      c.kind != NodeKind::Proxy) {
    throw Error(ErrorCode::ScalarChildVectorParent,
                "scalar node " + describe(c) + " cannot have vector parent " + describe(p));
  }
  c.parents.push_back({parent, role});
}

void ModelGraph::connect_proxies() {
  std::vector<std::string> dangling;
  for (auto& n : nodes_) {
    if (!n.alive || n.kind != NodeKind::Proxy) continue;
    n.alias.reset();
    std::optional<NodeId> target;
    auto [lo, hi] = labels_.equal_range(n.proxy_target);
    for (auto it = lo; it != hi; ++it) {
      const Node& cand = nodes_[it->second];
      if (cand.alive && cand.kind != NodeKind::Proxy) target = cand.id;
    }
    if (target) {
      n.alias = target;
      n.arity = nodes_[target->value].arity;
    } else {
      dangling.push_back(n.label + "->" + n.proxy_target);
    }
  }
  if (!dangling.empty()) {
    std::string msg = "dangling proxy labels:";
    for (const auto& d : dangling) msg += " " + d;
    throw Error(ErrorCode::UnresolvedProxy, msg);
  }
}

void ModelGraph::observe(NodeId id, std::span<const double> data) {
  check_id(id);
  Node& n = nodes_[id.value];
  if (n.kind != NodeKind::Gaussian) throw Error(ErrorCode::InvalidArgument, "only Gaussian nodes can be observed");
  if (data.size() != n.mean.size())
    throw Error(ErrorCode::DimensionMismatch, "data length for '" + n.label + "' is " +
                                                  std::to_string(data.size()) + ", expected " +
                                                  std::to_string(n.mean.size()));
  n.observed = true;
  n.mean.assign(data.begin(), data.end());
  n.var.assign(data.size(), 0.0);
}

NodeId ModelGraph::resolve(NodeId id) const {
  check_id(id);
  for (std::size_t guard = 0; guard <= nodes_.size(); ++guard) {
    const Node& n = nodes_[id.value];
    if (n.kind != NodeKind::Proxy || !n.alias) return id;
    id = *n.alias;
  }
  return id;
}

std::size_t ModelGraph::slots(NodeId id) const { return is_vector(id) ? sample_count_ : 1; }

bool ModelGraph::is_vector(NodeId id) const { return nodes_[resolve(id).value].arity == Arity::Vector; }

bool ModelGraph::provides_exp(NodeId id) const {
  std::set<std::size_t> visiting;
  std::function<bool(NodeId)> rec = [&](NodeId raw) -> bool {
    const NodeId r = resolve(raw);
    const Node& n = nodes_[r.value];
    if (!n.alive || n.kind == NodeKind::Proxy) return false;
    if (!visiting.insert(r.value).second) return false;
    bool result = false;
    switch (n.kind) {
      case NodeKind::Constant:
      case NodeKind::Gaussian:
        result = true;
        break;
      case NodeKind::Sum:
        result = !n.parents.empty() &&
                 std::all_of(n.parents.begin(), n.parents.end(), [&](const Edge& e) { return rec(e.parent); });
        break;
      case NodeKind::Delay:
        result = n.parents.size() == 2 &&
                 std::all_of(n.parents.begin(), n.parents.end(), [&](const Edge& e) { return rec(e.parent); });
        break;
      default:
        result = false;
    }
    visiting.erase(r.value);
    return result;
  };
  return rec(id);
}

Node& ModelGraph::node(NodeId id) {
  check_id(id);
  return nodes_[id.value];
}

const Node& ModelGraph::node(NodeId id) const {
  check_id(id);
  return nodes_[id.value];
}

std::optional<NodeId> ModelGraph::find(std::string_view label) const {
  std::optional<NodeId> proxy;
  auto [lo, hi] = labels_.equal_range(std::string(label));
  for (auto it = lo; it != hi; ++it) {
    const Node& n = nodes_[it->second];
    if (!n.alive) continue;
    if (n.kind != NodeKind::Proxy) return n.id;
    proxy = n.id;
  }
  return proxy;
}

Topology ModelGraph::topology() const {
  Topology t;
  t.parents.resize(nodes_.size());
  t.children.resize(nodes_.size());
  for (const auto& n : nodes_) {
    if (!n.alive || n.kind == NodeKind::Proxy) continue;
    for (std::size_t e = 0; e < n.parents.size(); ++e) {
      const NodeId p = resolve(n.parents[e].parent);
      const Node& pn = nodes_[p.value];
      if (!pn.alive || pn.kind == NodeKind::Proxy) continue;
      t.parents[n.id.value].push_back({p, n.parents[e].role});
      t.children[p.value].push_back({n.id, t.parents[n.id.value].size() - 1});
    }
  }
  return t;
}

double ModelGraph::evidence_weight(const Node& evidence) const noexcept {
  if (evidence.fade_sweeps <= 0) return 0.0;
  const int elapsed = std::max(0, evidence_clock_ - evidence.start_clock);
  return std::max(0.0, 1.0 - static_cast<double>(elapsed) / evidence.fade_sweeps);
}

ValidationReport ModelGraph::validate() const {
  ValidationReport report;
  auto add = [&](ViolationKind k, std::vector<NodeId> ids, std::string msg) {
    report.violations.push_back({k, std::move(ids), std::move(msg)});
  };

  for (const auto& n : nodes_) {
    if (!n.alive || n.kind != NodeKind::Proxy) continue;
    if (!n.alias || !nodes_[n.alias->value].alive)
      add(ViolationKind::UnresolvedProxy, {n.id}, "proxy '" + n.label + "' -> '" + n.proxy_target + "' unresolved");
  }

  const Topology topo = topology();

  // Kinds seen through Delay wrappers.
  std::function<void(NodeId, std::set<NodeKind>&, std::set<std::size_t>&)> wrapped;
  wrapped = [&](NodeId id, std::set<NodeKind>& kinds, std::set<std::size_t>& seen) {
    if (!seen.insert(id.value).second) return;
    const Node& n = nodes_[id.value];
    if (n.kind != NodeKind::Delay) {
      kinds.insert(n.kind);
      return;
    }
    for (const auto& e : topo.parents[id.value]) wrapped(e.parent, kinds, seen);
  };

  for (const auto& n : nodes_) {
    if (!n.alive || n.kind == NodeKind::Proxy) continue;
    const auto& parents = topo.parents[n.id.value];
    std::map<std::pair<RoleKind, std::size_t>, int> role_count;

    for (const auto& e : parents) {
      const Node& p = nodes_[e.parent.value];
      role_count[{e.role.kind, e.role.component}]++;

      bool legal;
      if (p.kind == NodeKind::Delay) {
        std::set<NodeKind> kinds;
        std::set<std::size_t> seen;
        wrapped(e.parent, kinds, seen);
        legal = e.role.kind != RoleKind::NonlinInput && !kinds.empty() &&
                std::all_of(kinds.begin(), kinds.end(),
                            [&](NodeKind k) { return role_allowed(n.kind, e.role.kind, k); });
      } else {
        legal = role_allowed(n.kind, e.role.kind, p.kind);
      }
      if (legal && role_needs_exp(e.role.kind) && !provides_exp(e.parent)) legal = false;
      if (!legal) {
        add(ViolationKind::IllegalRole, {n.id, p.id},
            describe(p) + " cannot be the " + std::string(to_string(e.role.kind)) + " parent of " + describe(n) +
                (role_needs_exp(e.role.kind)
                     ? " (allowed connectivity table: variance parents must be Gaussian, constant, or sums of such)"
                     : " (allowed connectivity table)"));
      }
      if (n.arity == Arity::Scalar && p.arity == Arity::Vector) {
        add(ViolationKind::Arity, {n.id, p.id}, "scalar node " + describe(n) + " has vector parent " + describe(p));
      }
      if (e.role.kind == RoleKind::DelayInit && p.arity == Arity::Vector) {
        add(ViolationKind::Arity, {n.id, p.id}, "delay initial value " + describe(p) + " must be scalar");
      }
      if (e.role.kind == RoleKind::Selector && p.kind == NodeKind::Dirichlet && p.components != n.components) {
        add(ViolationKind::ParentCount, {n.id, p.id}, "Dirichlet " + describe(p) + " has " +
                                                          std::to_string(p.components) + " components, mixture " +
                                                          describe(n) + " has " + std::to_string(n.components));
      }
    }

    auto count = [&](RoleKind r, std::size_t c = 0) {
      auto it = role_count.find({r, c});
      return it == role_count.end() ? 0 : it->second;
    };
    auto expect = [&](RoleKind r, int want, std::size_t c = 0) {
      const int got = count(r, c);
      if (got != want) {
        add(n.kind == NodeKind::Product ? ViolationKind::ProductArity : ViolationKind::ParentCount, {n.id},
            describe(n) + " has " + std::to_string(got) + " " + std::string(to_string(r)) + " parents, expected " +
                std::to_string(want));
      }
    };
    switch (n.kind) {
      case NodeKind::Gaussian:
        expect(RoleKind::Mean, 1);
        expect(RoleKind::Variance, 1);
        break;
      case NodeKind::RectifiedGaussian:
        expect(RoleKind::Variance, 1);
        break;
      case NodeKind::MixtureOfGaussians:
        for (std::size_t i = 0; i < n.components; ++i) {
          expect(RoleKind::ComponentMean, 1, i);
          expect(RoleKind::ComponentVariance, 1, i);
        }
        expect(RoleKind::Selector, 1);
        break;
      case NodeKind::Dirichlet:
        if (count(RoleKind::Concentration) > 1) expect(RoleKind::Concentration, 1);
        break;
      case NodeKind::Evidence:
        expect(RoleKind::Mean, 1);
        break;
      case NodeKind::Sum:
        if (count(RoleKind::Summand) < 1)
          add(ViolationKind::ParentCount, {n.id}, describe(n) + " has no summands");
        break;
      case NodeKind::Product:
        expect(RoleKind::Factor, 2);
        break;
      case NodeKind::NonlinExpSquare:
      case NodeKind::NonlinCut:
        expect(RoleKind::NonlinInput, 1);
        break;
      case NodeKind::Delay:
        expect(RoleKind::DelayInput, 1);
        expect(RoleKind::DelayInit, 1);
        break;
      default:
        break;
    }
  }

  // Cycles, with Delay input edges removed.
  {
    std::vector<int> color(nodes_.size(), 0);
    std::vector<NodeId> stack;
    std::function<void(std::size_t)> dfs = [&](std::size_t v) {
      color[v] = 1;
      stack.push_back(NodeId{v});
      for (const auto& e : topo.parents[v]) {
        if (nodes_[v].kind == NodeKind::Delay && e.role.kind == RoleKind::DelayInput) continue;
        const std::size_t u = e.parent.value;
        if (color[u] == 1) {
          auto it = std::find(stack.begin(), stack.end(), e.parent);
          std::vector<NodeId> cyc(it, stack.end());
          std::string msg = "cycle without a delay:";
          for (auto id : cyc) msg += " '" + nodes_[id.value].label + "'";
          add(ViolationKind::Cycle, std::move(cyc), msg);
        } else if (color[u] == 0) {
          dfs(u);
        }
      }
      stack.pop_back();
      color[v] = 2;
    };
    for (const auto& n : nodes_)
      if (n.alive && n.kind != NodeKind::Proxy && color[n.id.value] == 0) dfs(n.id.value);
  }

  // Computational order (Kahn over computational nodes only).
  std::vector<std::size_t> comp_order;
  std::vector<std::size_t> comp_rank(nodes_.size(), 0);
  {
    std::vector<int> indeg(nodes_.size(), 0);
    std::size_t n_comp = 0;
    for (const auto& n : nodes_) {
      if (!n.alive || !is_computational(n.kind)) continue;
      ++n_comp;
      for (const auto& e : topo.parents[n.id.value])
        if (is_computational(nodes_[e.parent.value].kind)) indeg[n.id.value]++;
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (const auto& n : nodes_)
      if (n.alive && is_computational(n.kind) && indeg[n.id.value] == 0) ready.push(n.id.value);
    while (!ready.empty()) {
      const std::size_t v = ready.top();
      ready.pop();
      comp_rank[v] = comp_order.size();
      comp_order.push_back(v);
      for (const auto& c : topo.children[v]) {
        if (!is_computational(nodes_[c.child.value].kind)) continue;
        if (--indeg[c.child.value] == 0) ready.push(c.child.value);
      }
    }
    if (comp_order.size() != n_comp) {
      std::vector<NodeId> stuck;
      std::string msg = "cycle through computational nodes only:";
      for (const auto& n : nodes_) {
        if (n.alive && is_computational(n.kind) && indeg[n.id.value] > 0) {
          stuck.push_back(n.id);
          msg += " '" + n.label + "'";
        }
      }
      add(ViolationKind::ComputationalCycle, std::move(stuck), msg);
      return report;
    }
  }

  // At most one computational path from a latent variable to any node,
  // counted separately per number of delays crossed (different time slots).
  for (const auto& src : nodes_) {
    if (!src.alive || !src.is_latent() || src.kind == NodeKind::Dirichlet) continue;
    const bool vec = src.arity == Arity::Vector;
    std::map<std::pair<std::size_t, int>, long> paths;
    std::priority_queue<std::pair<std::size_t, std::size_t>, std::vector<std::pair<std::size_t, std::size_t>>,
                        std::greater<>>
        queue;
    std::set<std::size_t> queued;
    auto push = [&](std::size_t from_node, const ChildRef& c, int k, long mult) {
      const Node& child = nodes_[c.child.value];
      const auto& edge = topo.parents[c.child.value][c.edge];
      const int k2 = k + ((vec && child.kind == NodeKind::Delay && edge.role.kind == RoleKind::DelayInput) ? 1 : 0);
      (void)from_node;
      paths[{c.child.value, k2}] += mult;
      if (is_computational(child.kind) && queued.insert(c.child.value).second)
        queue.push({comp_rank[c.child.value], c.child.value});
    };
    for (const auto& c : topo.children[src.id.value]) push(src.id.value, c, 0, 1);
    while (!queue.empty()) {
      const std::size_t v = queue.top().second;
      queue.pop();
      for (auto it = paths.lower_bound({v, std::numeric_limits<int>::min()}); it != paths.end() && it->first.first == v;
           ++it) {
        for (const auto& c : topo.children[v]) push(v, c, it->first.second, it->second);
      }
    }
    std::set<std::size_t> reported;
    for (const auto& [key, cnt] : paths) {
      if (cnt > 1 && reported.insert(key.first).second) {
        add(ViolationKind::MultiplePaths, {src.id, NodeId{key.first}},
            "latent " + describe(src) + " reaches " + describe(nodes_[key.first]) + " through " +
                std::to_string(cnt) + " computational paths; inputs of a node must be independent");
      }
    }
  }

  return report;
}

std::vector<NodeId> ModelGraph::update_order() const {
  const Topology topo = topology();
  auto delay_input = [&](std::size_t child, std::size_t edge) {
    return nodes_[child].kind == NodeKind::Delay && topo.parents[child][edge].role.kind == RoleKind::DelayInput;
  };
  std::vector<int> pending(nodes_.size(), 0);
  for (const auto& n : nodes_) {
    if (!n.alive || n.kind == NodeKind::Proxy) continue;
    for (const auto& c : topo.children[n.id.value])
      if (!delay_input(c.child.value, c.edge)) pending[n.id.value]++;
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (const auto& n : nodes_)
    if (n.alive && n.kind != NodeKind::Proxy && pending[n.id.value] == 0) ready.push(n.id.value);
  std::vector<NodeId> order;
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    if (nodes_[v].is_latent()) order.push_back(NodeId{v});
    const auto& parents = topo.parents[v];
    for (std::size_t e = 0; e < parents.size(); ++e) {
      if (delay_input(v, e)) continue;
      if (--pending[parents[e].parent.value] == 0) ready.push(parents[e].parent.value);
    }
  }
  return order;
}

void ModelGraph::remove_node(NodeId id) {
  require_mutable();
  check_id(id);
  Node& n = nodes_[id.value];
  if (!n.alive) return;
  n.alive = false;
  n.parents.clear();
  auto [lo, hi] = labels_.equal_range(n.label);
  for (auto it = lo; it != hi; ++it) {
    if (it->second == id.value) {
      labels_.erase(it);
      break;
    }
  }
}

void ModelGraph::remove_edge(NodeId child, std::size_t edge_index) {
  require_mutable();
  check_id(child);
  auto& parents = nodes_[child.value].parents;
  if (edge_index >= parents.size()) throw Error(ErrorCode::OutOfRange, "edge index");
  parents.erase(parents.begin() + static_cast<std::ptrdiff_t>(edge_index));
}

void ModelGraph::replace_parent(NodeId child, std::size_t edge_index, NodeId new_parent) {
  require_mutable();
  check_id(child);
  check_id(new_parent);
  auto& parents = nodes_[child.value].parents;
  if (edge_index >= parents.size()) throw Error(ErrorCode::OutOfRange, "edge index");
  parents[edge_index].parent = new_parent;
}

}  // namespace vbb
