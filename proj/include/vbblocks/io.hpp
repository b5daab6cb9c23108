#ifndef VBBLOCKS_IO_HPP
#define VBBLOCKS_IO_HPP

// File formats: data matrices (CSV and raw binary), the graph JSON document,
// model builder specs and posterior exports.  The formats are described in
// README.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vbblocks/graph.hpp"
#include "vbblocks/matrix.hpp"
#include "vbblocks/models.hpp"

namespace vbb::io {

using Json = nlohmann::json;

enum class DataFormat { Csv, Binary };

std::optional<DataFormat> parse_data_format(std::string_view name) noexcept;

/// Third header word of the binary matrix format ("BBM1" read as a number).
inline constexpr std::uint64_t kBinaryMagic = 0x42424D31;

Matrix parse_csv(std::istream& in);
std::string format_csv(const Matrix& m);
Matrix parse_binary(std::string_view bytes);
std::string format_binary(const Matrix& m);

/// Throws Error(Io) if the file cannot be read, Error(Parse) if malformed.
Matrix read_matrix(const std::filesystem::path& path, DataFormat format);
void write_matrix(const std::filesystem::path& path, const Matrix& m, DataFormat format);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

struct ModelInfo {
  ModelType type = ModelType::DynVar;
  std::size_t xdim = 0;
  std::size_t sdim = 0;
};

/// Graph document with every live node, its edges and posterior state.
Json graph_to_json(const ModelGraph& graph, const std::optional<ModelInfo>& model = std::nullopt);

struct LoadedGraph {
  ModelGraph graph;
  std::optional<ModelInfo> model;
  std::vector<std::string> observed_labels;  // "observe" field, may be empty
};

/// Rebuilds a graph document.  Node ids are renumbered densely in document
/// order.  Throws Error(Parse) naming the offending field, and propagates
/// connection errors (IllegalRole, ScalarChildVectorParent, ...).
LoadedGraph graph_from_json(const Json& doc);

struct BuilderSpec {
  ModelType type = ModelType::DynVar;
  DynSpec spec;  // tdim is left at 1; the caller sets it from the data
};

/// {"builder": "dynvar"|"dynsrc", "xdim", "sdim", optional "mask",
/// "weight_log_prec", "hyper_log_prec"}.  "mask" is either an xdim x sdim
/// array of 0/1 or {"circular": {"side": n, "radius": r}}.
BuilderSpec builder_from_json(const Json& doc);
bool is_builder_spec(const Json& doc);

/// node_label, sample_index, mean, variance, r0..r(K-1) for every latent
/// variable node.  Rectified rows report the moments of the truncated
/// posterior, not its location and scale.  Dirichlet rows use sample_index
/// for the component and report the mean and variance of that weight.
std::string posteriors_csv(const ModelGraph& graph);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

}  // namespace vbb::io

#endif  // VBBLOCKS_IO_HPP
