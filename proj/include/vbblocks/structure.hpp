#ifndef VBBLOCKS_STRUCTURE_HPP
#define VBBLOCKS_STRUCTURE_HPP

// Cost-driven structural learning: zero-substitution removal deltas, greedy
// pruning with cascade cleanup, and adding new parts to a live graph.

#include <map>
#include <string>
#include <vector>

#include "vbblocks/engine.hpp"

namespace vbb {

struct PruneReport {
  NodeId candidate;
  std::string label;
  double delta_cost = 0.0;
  std::vector<NodeId> removed;
  std::vector<std::string> removed_labels;
};

/// One JSON object per line: {"candidate", "delta", "removed"}.
std::string to_json_line(const PruneReport& report);

/// Cost change if the node's output were replaced by the constant 0 and its
/// own cost term dropped.  Negative means removal lowers the cost.  Throws
/// Error(NotLinearPath) if a nonlinearity lies between the node and a child.
double removal_delta(Engine& engine, NodeId node);

/// What happens to a child when one of its parents is removed.
enum class OnParentRemoved {
  RemoveChild,   // the child's output is meaningless without the parent
  DropEdge,      // drop the edge; remove the child once it has no parents
  ZeroParent,    // repoint the edge at a constant 0
};

/// Per-kind cascade behaviour; the extension point for custom node policies.
struct CascadePolicy {
  std::map<NodeKind, OnParentRemoved> on_parent_removed = {
      {NodeKind::Product, OnParentRemoved::RemoveChild},
      {NodeKind::Sum, OnParentRemoved::DropEdge},
      {NodeKind::NonlinExpSquare, OnParentRemoved::RemoveChild},
      {NodeKind::NonlinCut, OnParentRemoved::RemoveChild},
      {NodeKind::Evidence, OnParentRemoved::RemoveChild},
      {NodeKind::Delay, OnParentRemoved::ZeroParent},
      {NodeKind::Gaussian, OnParentRemoved::ZeroParent},
      {NodeKind::RectifiedGaussian, OnParentRemoved::ZeroParent},
      {NodeKind::MixtureOfGaussians, OnParentRemoved::ZeroParent},
  };
  /// Remove latent variables left without any use other than themselves.
  bool remove_orphans = true;
};

/// Removes `node` and everything its removal makes dead.  Observed nodes and
/// constants are never removed.  Returns the removed nodes.  The caller must
/// rebuild any engine over the graph.
std::vector<NodeId> remove_with_cascade(ModelGraph& graph, NodeId node, const CascadePolicy& policy = {});

/// Unobserved Gaussian-type variables with at least one mean-type use.
/// Variables feeding only variance roles are left out.
std::vector<NodeId> prune_candidates(const Engine& engine);

/// Greedy best-first pruning: repeatedly removes the candidate with the most
/// negative delta below `threshold`, re-evaluating after each removal.
std::vector<PruneReport> prune(Engine& engine, double threshold = 0.0, const CascadePolicy& policy = {});

struct ComponentSpec {
  struct NodeSpec {
    NodeKind kind = NodeKind::Gaussian;
    std::string label;
    Arity arity = Arity::Scalar;
    double value = 0.0;           // Constant
    std::size_t components = 0;   // Mixture, Dirichlet
    std::string proxy_target;     // Proxy
  };
  struct EdgeSpec {
    std::string child;
    std::string parent;
    ParentRole role;
  };
  struct EvidenceSpec {
    std::string node;
    std::vector<double> target;
    double precision = 1.0;
    int fade_sweeps = 10;
  };
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;  // endpoints may be new or existing labels
  std::vector<EvidenceSpec> evidence;
};

/// Adds the nodes, edges and fading evidence of `spec`.  On any error the
/// graph is restored and the error rethrown (InvalidGraph with the report
/// for validation failures).  Existing posteriors are untouched.
std::vector<NodeId> add_component(ModelGraph& graph, const ComponentSpec& spec);

}  // namespace vbb

#endif  // VBBLOCKS_STRUCTURE_HPP
