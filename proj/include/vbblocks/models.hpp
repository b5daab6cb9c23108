#ifndef VBBLOCKS_MODELS_HPP
#define VBBLOCKS_MODELS_HPP

// Model builders (masked linear maps, DynVar, DynSrc), one-step prediction
// and the synthetic sequence generator.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbblocks/engine.hpp"
#include "vbblocks/matrix.hpp"

namespace vbb {

/// mask[i][j]: output i reads input j.  An empty mask means "all true".
using Mask = std::vector<std::vector<bool>>;

Mask full_mask(std::size_t rows, std::size_t cols);

struct LinmapHandle {
  std::vector<NodeId> outputs;                              // one Sum per output
  std::vector<std::vector<std::optional<NodeId>>> weights;  // [out][in]
  std::vector<std::vector<std::optional<NodeId>>> products;
  Mask mask;
};

/// Builds outputs[i] = sum_j a(i,j) * inputs[j] over the mask, with scalar
/// Gaussian weights a(i,j) ~ N(weight_mean, exp(-weight_var)).  Labels are
/// "<name>(i,j)", "<name>prod(i,j)" and "<name>sum(i)".  Throws
/// Error(EmptyRow) if a mask row is all false.
LinmapHandle build_linmap(ModelGraph& graph, std::span<const NodeId> inputs, std::size_t outdim, const Mask& mask,
                          const std::string& name, NodeId weight_mean, NodeId weight_var);

enum class ModelType { DynVar, DynSrc };

std::string_view to_string(ModelType type) noexcept;
std::optional<ModelType> parse_model_type(std::string_view name) noexcept;

struct DynSpec {
  std::size_t xdim = 1;
  std::size_t sdim = 1;
  std::size_t tdim = 1;
  Mask mask;  // xdim x sdim; empty = full
  double weight_log_prec = 0.0;   // log-precision of the zero-mean weight priors
  double hyper_log_prec = -5.0;   // log-precision of the v_x, v_u (and mu_u) priors
};

struct DynModel {
  ModelType type = ModelType::DynVar;
  std::size_t xdim = 0, sdim = 0, tdim = 0;
  NodeId c0, cn5;
  std::vector<NodeId> x, vx;
  std::vector<std::optional<NodeId>> s, u, vu, mu_u;  // mu_u only for DynSrc
  LinmapHandle A, B;
};

/// x(t) ~ N(A s(t), exp(-v_x)), s(t) ~ N(s(t-1), exp(-u(t))),
/// u(t) ~ N(B u(t-1), exp(-v_u)).  Node count:
/// 2 + sdim + (sdim + 2 sdim^2) + 6 sdim + (xdim + 2 nnz(mask)) + 2 xdim.
DynModel build_dynvar(ModelGraph& graph, const DynSpec& spec);

/// x(t) ~ N(A s(t), exp(-v_x)), s(t) ~ N(B s(t-1), exp(-u(t))),
/// u(t) ~ N(mu_u, exp(-v_u)) with mu_u a scalar Gaussian per source.
DynModel build_dynsrc(ModelGraph& graph, const DynSpec& spec);

/// Re-derives the handles of a DynVar/DynSrc graph from its labels; nodes
/// removed by pruning come back as std::nullopt.
DynModel attach_model(const ModelGraph& graph, ModelType type, std::size_t xdim, std::size_t sdim);

/// Clamps x(i) to column i of `data` (rows = time).
void observe_data(ModelGraph& graph, const DynModel& model, const Matrix& data);

struct InitConfig {
  int refinements = 30;       // alternating least-squares passes under the mask
  int restarts = 8;           // extra random starts; the lowest residual wins
  std::uint64_t seed = 0;
  std::size_t window = 15;    // width of the moving window for innovation variances
  double source_var = 1e-2;   // posterior variance given to s, relative to its innovation variance
};

/// Initializes the posterior means of s, A, u, v_x, v_u, B (identity) and
/// mu_u from a masked principal-component fit of `data`.  Source scales are
/// chosen so that the nonzero weights of each column have unit RMS.
void init_from_data(ModelGraph& graph, const DynModel& model, const Matrix& data, const InitConfig& config = {});

struct PredictiveGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// Moment-matched Gaussian for x at slot t given the posterior at slot t-1,
/// for 1 <= t < tdim (0-based slots).
PredictiveGaussian predict_next(const ModelGraph& graph, const DynModel& model, std::size_t t);

/// exp(-mean_i log N(x_i | mean_i, variance_i)).
double predictive_perplexity(const PredictiveGaussian& pred, std::span<const double> x);

struct MotionProfile {
  enum class Kind { Constant, Step, Window };
  Kind kind = Kind::Constant;
  double calm = 2.0;     // log-precision of source innovations outside the active period
  double active = -1.0;  // log-precision inside it
  std::size_t start = 0, end = 0;  // Step: active from start on; Window: active on [start, end)
  std::vector<std::size_t> sources;  // sources following the profile; empty = all
};

struct SynthConfig {
  std::size_t xdim = 4, sdim = 2, tdim = 100;
  std::uint64_t seed = 0;
  MotionProfile profile;
  Mask mask;                 // empty = full
  double noise_std = 0.1;    // observation noise
  double weight_std = 1.0;   // A entries ~ N(0, weight_std^2) inside the mask
};

struct SynthData {
  Matrix data;        // tdim x xdim
  Matrix sources;     // tdim x sdim
  Matrix log_prec;    // tdim x sdim, true u(t)
  Matrix weights;     // xdim x sdim
  Mask mask;
};

/// Samples from the DynVar generative equations with u(t) given by the
/// motion profile: s(t) = s(t-1) + N(0, exp(-u(t))), x(t) = A s(t) + noise.
SynthData synth_sequence(const SynthConfig& config);

/// Circular receptive fields on a side x side patch: source j covers pixels
/// within `radius` of the j-th point of a regular grid of centers.  Every
/// pixel is assigned to at least its nearest center.  radius <= 0 picks half
/// the side.
Mask circular_masks(std::size_t side, std::size_t sdim, double radius = 0.0);

}  // namespace vbb

#endif  // VBBLOCKS_MODELS_HPP
