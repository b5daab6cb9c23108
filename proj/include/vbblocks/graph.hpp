#ifndef VBBLOCKS_GRAPH_HPP
#define VBBLOCKS_GRAPH_HPP

// Model graph: typed nodes, typed parent edges, proxy aliases and the
// structural rules a graph must satisfy before it can be learned.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vbb {

enum class NodeKind {
  Constant,
  Gaussian,
  RectifiedGaussian,
  MixtureOfGaussians,
  Dirichlet,
  Evidence,
  Sum,
  Product,
  NonlinExpSquare,
  NonlinCut,
  Delay,
  Proxy,
};

inline constexpr std::array<NodeKind, 12> kAllNodeKinds = {
    NodeKind::Constant,        NodeKind::Gaussian,  NodeKind::RectifiedGaussian,
    NodeKind::MixtureOfGaussians, NodeKind::Dirichlet, NodeKind::Evidence,
    NodeKind::Sum,             NodeKind::Product,   NodeKind::NonlinExpSquare,
    NodeKind::NonlinCut,       NodeKind::Delay,     NodeKind::Proxy,
};

std::string_view to_string(NodeKind kind) noexcept;
std::optional<NodeKind> parse_node_kind(std::string_view name) noexcept;

/// Nodes with a posterior that the learning sweep updates.
bool is_variable(NodeKind kind) noexcept;
/// Deterministic functions of their parents.
bool is_computational(NodeKind kind) noexcept;

enum class Arity { Scalar, Vector };

enum class RoleKind {
  Mean,
  Variance,
  Summand,
  Factor,
  NonlinInput,
  DelayInput,
  DelayInit,
  ComponentMean,
  ComponentVariance,
  Selector,
  Concentration,
};

inline constexpr std::array<RoleKind, 11> kAllRoleKinds = {
    RoleKind::Mean,          RoleKind::Variance,      RoleKind::Summand,
    RoleKind::Factor,        RoleKind::NonlinInput,   RoleKind::DelayInput,
    RoleKind::DelayInit,     RoleKind::ComponentMean, RoleKind::ComponentVariance,
    RoleKind::Selector,      RoleKind::Concentration,
};

std::string_view to_string(RoleKind role) noexcept;
std::optional<RoleKind> parse_role_kind(std::string_view name) noexcept;

struct ParentRole {
  RoleKind kind = RoleKind::Mean;
  /// Mixture component index for ComponentMean / ComponentVariance.
  std::size_t component = 0;

  ParentRole() = default;
  ParentRole(RoleKind k, std::size_t c = 0) : kind(k), component(c) {}  // NOLINT(implicit)

  static ParentRole component_mean(std::size_t i) { return {RoleKind::ComponentMean, i}; }
  static ParentRole component_variance(std::size_t i) { return {RoleKind::ComponentVariance, i}; }

  bool operator==(const ParentRole&) const = default;
};

/// Roles whose parent must supply the expected exponential.
bool role_needs_exp(RoleKind role) noexcept;

/// The allowed-connectivity relation for concrete (non-wrapper) parent kinds.
/// Proxy and Delay parents are wrappers; they are checked against the kinds
/// they wrap during validation.
bool role_allowed(NodeKind child, RoleKind role, NodeKind parent) noexcept;

struct NodeId {
  std::size_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct Edge {
  NodeId parent;
  ParentRole role;
};

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Constant;
  std::string label;
  Arity arity = Arity::Scalar;
  bool alive = true;
  std::vector<Edge> parents;

  double value = 0.0;                  // Constant
  std::string proxy_target;            // Proxy
  std::optional<NodeId> alias;         // Proxy, set by connect_proxies
  std::size_t components = 0;          // MixtureOfGaussians, Dirichlet

  // Posterior state, one slot per sample for vector nodes.
  // Gaussian and mixture value: mean / var.  Rectified: location / scale^2
  // of the truncated Gaussian q.
  bool observed = false;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> resp;            // mixture, slot-major, K per slot
  std::vector<double> prior_counts;    // Dirichlet
  std::vector<double> counts;          // Dirichlet

  // Evidence: fading virtual likelihood on the parent.
  std::vector<double> target;          // one entry, or one per sample
  double precision = 1.0;
  int fade_sweeps = 1;
  int start_clock = 0;                 // evidence clock value when added

  bool is_latent() const noexcept { return is_variable(kind) && !observed; }
};

enum class ViolationKind {
  UnresolvedProxy,
  Cycle,
  ComputationalCycle,
  MultiplePaths,
  IllegalRole,
  ProductArity,
  ParentCount,
  Arity,
};

std::string_view to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::vector<NodeId> nodes;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(ViolationKind kind) const noexcept;
  std::string to_string() const;
};

struct ResolvedEdge {
  NodeId parent;
  ParentRole role;
};

struct ChildRef {
  NodeId child;
  std::size_t edge;  // index into the child's parent list
};

/// Adjacency with proxies replaced by their targets.  Proxy and dead nodes
/// have empty lists.
struct Topology {
  std::vector<std::vector<ResolvedEdge>> parents;
  std::vector<std::vector<ChildRef>> children;
};

class ModelGraph {
 public:
  explicit ModelGraph(std::size_t sample_count);

  std::size_t sample_count() const noexcept { return sample_count_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t live_count() const noexcept;

  NodeId create_node(NodeKind kind, std::string label, Arity arity, std::size_t components = 0);
  NodeId add_constant(std::string label, double value, Arity arity = Arity::Scalar);
  NodeId add_proxy(std::string label, std::string target_label);
  NodeId add_mixture(std::string label, Arity arity, std::size_t components);
  NodeId add_dirichlet(std::string label, std::size_t components);
  NodeId add_evidence(std::string label, NodeId parent, std::vector<double> target, double precision,
                      int fade_sweeps);

  void connect(NodeId child, NodeId parent, ParentRole role);
  void connect_proxies();

  /// Clamp a Gaussian node to data: one value per slot.
  void observe(NodeId id, std::span<const double> data);

  ValidationReport validate() const;
  /// Unobserved variable nodes, every node after all of its variable
  /// descendants (Delay inputs excluded).  Requires a valid graph.
  std::vector<NodeId> update_order() const;

  Topology topology() const;
  NodeId resolve(NodeId id) const;
  std::size_t slots(NodeId id) const;
  bool is_vector(NodeId id) const;
  /// True for nodes whose output carries <exp s>.
  bool provides_exp(NodeId id) const;

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::optional<NodeId> find(std::string_view label) const;

  // Structural editing; used by the structure module.
  void remove_node(NodeId id);
  void remove_edge(NodeId child, std::size_t edge_index);
  void replace_parent(NodeId child, std::size_t edge_index, NodeId new_parent);

  void freeze() noexcept { frozen_ = true; }
  void thaw() noexcept { frozen_ = false; }
  bool frozen() const noexcept { return frozen_; }

  /// Number of completed sweeps; drives evidence fading.
  int evidence_clock() const noexcept { return evidence_clock_; }
  void set_evidence_clock(int clock) noexcept { evidence_clock_ = clock; }
  double evidence_weight(const Node& evidence) const noexcept;

 private:
  void require_mutable() const;
  void allocate_state(Node& n) const;
  void check_id(NodeId id) const;

  std::size_t sample_count_;
  std::vector<Node> nodes_;
  std::unordered_multimap<std::string, std::size_t> labels_;
  bool frozen_ = false;
  int evidence_clock_ = 0;
};

}  // namespace vbb

#endif  // VBBLOCKS_GRAPH_HPP
