#ifndef VBBLOCKS_LEARNING_HPP
#define VBBLOCKS_LEARNING_HPP

// Training loop: sweeps, convergence test and pattern-search acceleration.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vbblocks/engine.hpp"

namespace vbb {

struct TrainConfig {
  int max_sweeps = 100;
  double rel_tol = 1e-6;
  int pattern_search_every = 10;  // 0 = off
  std::uint64_t seed = 0;
};

struct TraceEntry {
  int sweep = 0;
  CostBreakdown cost;
  bool pattern = false;  // produced by an accepted pattern search
  std::size_t n_nodes = 0;
};

/// Flat posterior parameters of all unobserved variable nodes, in node order:
/// Gaussian (mean, log var), rectified (location, log scale^2), mixture
/// (mean, log var, log r_1..r_K), Dirichlet (log counts).
class ParamVector {
 public:
  static constexpr double kLogLimit = 690.0;

  static ParamVector encode(const ModelGraph& graph);
  /// Writes the parameters back.  Returns false (leaving the graph untouched)
  /// if a log-domain entry is outside [-kLogLimit, kLogLimit] or not finite.
  bool decode(ModelGraph& graph) const;

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
  std::vector<char> log_domain_;
};

/// Line search along after - before.  The engine state must equal `after`.
/// Commits the best point found and returns its cost, never above the cost
/// at `after`.
CostBreakdown pattern_search(Engine& engine, const ParamVector& before, const ParamVector& after);

/// Random initial means for unobserved variables (scale * N(0, 1)).
void randomize(ModelGraph& graph, std::uint64_t seed, double scale = 0.1);

/// Called after every sweep; return true if the graph structure changed (the
/// engine is then rebuilt).
using SweepHook = std::function<bool(int sweep, Engine& engine)>;

/// Runs sweeps until max_sweeps or until the relative decrease stays below
/// rel_tol for 5 consecutive sweeps.  The first trace entry (sweep 0) is the
/// initial cost.
std::vector<TraceEntry> train(Engine& engine, const TrainConfig& config, const SweepHook& hook = {});

}  // namespace vbb

#endif  // VBBLOCKS_LEARNING_HPP
