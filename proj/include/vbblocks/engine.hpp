#ifndef VBBLOCKS_ENGINE_HPP
#define VBBLOCKS_ENGINE_HPP

// Cost evaluation and per-node coordinate updates over a validated graph.
// The engine caches forward statistics of every node and keeps the cache
// consistent after each update.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "vbblocks/graph.hpp"
#include "vbblocks/messages.hpp"

namespace vbb {

struct CostBreakdown {
  double total = 0.0;
  std::vector<double> per_node;  // indexed by NodeId::value
  double bits_per_sample = 0.0;  // total / (T ln 2)
};

/// Coefficients (quad, lin) of <f^2> and <f> for the two nonlinearities fed
/// by one slot of a Gaussian node.
struct NonlinCoefs {
  std::array<double, 2> quad{};  // [0] exp(-s^2), [1] max(s, 0)
  std::array<double, 2> lin{};
  bool any() const noexcept { return quad[0] != 0 || lin[0] != 0 || quad[1] != 0 || lin[1] != 0; }
};

/// Result of minimizing a(m^2+v) + b m + c exp(m+v/2) + nonlinear terms - ln(v)/2.
struct GaussianSolve {
  double mean = 0.0;
  double variance = 1.0;
  int iterations = 0;
};

/// Node-local cost in the coordinates of one Gaussian slot (without constants).
double gaussian_local_cost(double a, double b, double c, const NonlinCoefs& nl, double mean, double var);

/// Minimizer of gaussian_local_cost.  `current` is the present posterior; the
/// returned point never has a higher local cost than it.  Throws
/// Error(NonPositiveQuad) when a <= 0.
GaussianSolve solve_gaussian(double a, double b, double c, const NonlinCoefs& nl, GaussianPosterior current);

class Engine {
 public:
  /// Throws Error(InvalidGraph) if the graph does not validate.
  explicit Engine(ModelGraph& graph);

  /// Re-derive topology after structural edits, then refresh().
  void rebuild();
  /// Recompute every forward statistic from the posteriors.
  void refresh();

  ModelGraph& graph() noexcept { return graph_; }
  const ModelGraph& graph() const noexcept { return graph_; }
  const Topology& topology() const noexcept { return topo_; }
  const std::vector<NodeId>& order() const noexcept { return order_; }

  /// Forward statistics of a node (proxies resolved); scalar nodes broadcast.
  const ForwardStats& stats(NodeId id, std::size_t t) const;
  std::span<const ForwardStats> stats(NodeId id) const;

  double node_cost(NodeId id) const;
  CostBreakdown cost() const;

  /// Backward potential on each output slot of a node from all its children.
  /// Nonlinear children contribute to `nonlin` (one entry per slot) when given.
  std::vector<Potential> output_potential(NodeId id, std::vector<NonlinCoefs>* nonlin = nullptr) const;

  /// Coordinate update of one unobserved variable node.
  void update(NodeId id);
  /// One pass over order(); advances the evidence clock afterwards.
  CostBreakdown sweep();

  /// Number of slot color classes used when updating a vector variable.
  std::size_t colors(NodeId id) const;

  /// Computational nodes whose forward statistics depend on `id`, in
  /// evaluation order.
  const std::vector<NodeId>& downstream(NodeId id) const;
  /// Non-computational nodes whose cost reads the output of `id` directly or
  /// through computational nodes.
  std::vector<NodeId> endpoints(NodeId id) const;

  /// Temporarily replace a node's output statistics in every slot (used for
  /// zero-substitution).  Pass std::nullopt to restore.
  void override_stats(NodeId id, std::optional<ForwardStats> replacement);

  /// Recompute a node's own forward statistics and those downstream.
  void propagate(NodeId id);

 private:
  std::optional<NodeId> parent_with(NodeId child, RoleKind role, std::size_t component = 0) const;
  void compute_forward(NodeId id);
  void contribute(NodeId parent, const ChildRef& ref, std::vector<Potential>& out,
                  std::vector<NonlinCoefs>* nonlin) const;

  void update_gaussian(NodeId id);
  void update_rectified(NodeId id);
  void update_mixture(NodeId id);
  void update_dirichlet(NodeId id);

  double cost_gaussian(const Node& n) const;
  double cost_rectified(const Node& n) const;
  double cost_mixture(const Node& n) const;
  double cost_dirichlet(const Node& n) const;
  double cost_evidence(const Node& n) const;

  std::vector<double> dirichlet_prior(const Node& n) const;
  std::vector<double> expected_log_weights(NodeId mixture) const;

  ModelGraph& graph_;
  Topology topo_;
  std::vector<NodeId> order_;
  std::vector<std::size_t> comp_rank_;
  std::vector<std::vector<NodeId>> downstream_;
  std::vector<std::size_t> colors_;
  std::vector<std::vector<ForwardStats>> fwd_;
  std::vector<std::optional<ForwardStats>> overrides_;
};

}  // namespace vbb

#endif  // VBBLOCKS_ENGINE_HPP
