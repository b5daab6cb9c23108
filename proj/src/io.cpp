#include "vbblocks/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>
#include <system_error>

#include "vbblocks/error.hpp"
#include "vbblocks/numeric.hpp"

namespace vbb::io {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::Parse, what); }

const Json& field(const Json& obj, const char* name, const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) parse_error(where + ": missing field '" + name + "'");
  return obj.at(name);
}

std::size_t get_size(const Json& obj, const char* name, const std::string& where) {
  const Json& v = field(obj, name, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    parse_error(where + ": field '" + name + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_double(const Json& obj, const char* name, const std::string& where) {
  const Json& v = field(obj, name, where);
  if (!v.is_number()) parse_error(where + ": field '" + name + "' must be a number");
  return v.get<double>();
}

std::string get_string(const Json& obj, const char* name, const std::string& where) {
  const Json& v = field(obj, name, where);
  if (!v.is_string()) parse_error(where + ": field '" + name + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> get_doubles(const Json& obj, const char* name, const std::string& where, std::size_t expected) {
  const Json& v = field(obj, name, where);
  if (!v.is_array()) parse_error(where + ": field '" + name + "' must be an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) parse_error(where + ": field '" + name + "' must contain numbers");
    out.push_back(x.get<double>());
  }
  if (expected != 0 && out.size() != expected)
    parse_error(where + ": field '" + name + "' has " + std::to_string(out.size()) + " entries, expected " +
                std::to_string(expected));
  return out;
}

bool has_posterior(NodeKind kind) {
  return kind == NodeKind::Gaussian || kind == NodeKind::RectifiedGaussian || kind == NodeKind::MixtureOfGaussians;
}

}  // namespace

std::optional<DataFormat> parse_data_format(std::string_view name) noexcept {
  if (name == "csv") return DataFormat::Csv;
  if (name == "bin") return DataFormat::Binary;
  return std::nullopt;
}

Matrix parse_csv(std::istream& in) {
  Matrix m;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line, ',');
    std::vector<double> row;
    bool numeric = true;
    for (auto c : cells) {
      const auto v = parse_double(c);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      parse_error("line " + std::to_string(line_no) + ": non-numeric cell");
    }
    first = false;
    if (m.rows == 0) m.cols = row.size();
    if (row.size() != m.cols)
      parse_error("line " + std::to_string(line_no) + ": " + std::to_string(row.size()) + " columns, expected " +
                  std::to_string(m.cols));
    m.values.insert(m.values.end(), row.begin(), row.end());
    ++m.rows;
  }
  if (m.rows == 0) parse_error("no data rows");
  return m;
}

std::string format_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out.push_back(',');
      out += format_double(m(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

Matrix parse_binary(std::string_view bytes) {
  if (bytes.size() < 24) parse_error("binary matrix shorter than its 24-byte header");
  const std::uint64_t rows = get_u64(bytes, 0), cols = get_u64(bytes, 8), magic = get_u64(bytes, 16);
  if (magic != kBinaryMagic) parse_error("binary matrix has wrong magic number");
  if (rows == 0 || cols == 0) parse_error("binary matrix has zero rows or columns");
  if (rows > (bytes.size() - 24) / 8 / cols || (bytes.size() - 24) != rows * cols * 8)
    parse_error("binary matrix payload size does not match rows x cols");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = std::bit_cast<double>(get_u64(bytes, 24 + 8 * i));
  return m;
}

std::string format_binary(const Matrix& m) {
  std::string out;
  out.reserve(24 + 8 * m.values.size());
  put_u64(out, m.rows);
  put_u64(out, m.cols);
  put_u64(out, kBinaryMagic);
  for (double v : m.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename '" + tmp.string() + "': " + ec.message());
}

Matrix read_matrix(const std::filesystem::path& path, DataFormat format) {
  const std::string bytes = read_file(path);
  try {
    if (format == DataFormat::Binary) return parse_binary(bytes);
    std::istringstream in(bytes);
    return parse_csv(in);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Parse) throw;
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_matrix(const std::filesystem::path& path, const Matrix& m, DataFormat format) {
  write_atomic(path, format == DataFormat::Binary ? format_binary(m) : format_csv(m));
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) out[i] = digits[value & 0xF];
  return out;
}

Json graph_to_json(const ModelGraph& graph, const std::optional<ModelInfo>& model) {
  Json doc;
  doc["format"] = "vbblocks-graph";
  doc["version"] = 1;
  doc["sample_count"] = graph.sample_count();
  doc["evidence_clock"] = graph.evidence_clock();
  Json nodes = Json::array(), edges = Json::array();
  for (const Node& n : graph.nodes()) {
    if (!n.alive) continue;
    Json j;
    j["id"] = n.id.value;
    j["kind"] = std::string(to_string(n.kind));
    j["label"] = n.label;
    j["arity"] = n.arity == Arity::Vector ? "vector" : "scalar";
    switch (n.kind) {
      case NodeKind::Constant:
        j["value"] = n.value;
        break;
      case NodeKind::Proxy:
        j["target"] = n.proxy_target;
        break;
      case NodeKind::Dirichlet:
        j["components"] = n.components;
        j["prior_counts"] = n.prior_counts;
        j["counts"] = n.counts;
        break;
      case NodeKind::Evidence:
        j["target_values"] = n.target;
        j["precision"] = n.precision;
        j["fade_sweeps"] = n.fade_sweeps;
        j["start_clock"] = n.start_clock;
        break;
      default:
        break;
    }
    if (has_posterior(n.kind)) {
      if (n.kind == NodeKind::MixtureOfGaussians) {
        j["components"] = n.components;
        j["resp"] = n.resp;
      }
      j["observed"] = n.observed;
      j["mean"] = n.mean;
      j["var"] = n.var;
    }
    nodes.push_back(std::move(j));
    for (const Edge& e : n.parents) {
      Json ej;
      ej["child"] = n.id.value;
      ej["parent"] = e.parent.value;
      ej["role"] = std::string(to_string(e.role.kind));
      if (e.role.kind == RoleKind::ComponentMean || e.role.kind == RoleKind::ComponentVariance)
        ej["component"] = e.role.component;
      edges.push_back(std::move(ej));
    }
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  if (model) {
    doc["model"] = {{"type", std::string(to_string(model->type))}, {"xdim", model->xdim}, {"sdim", model->sdim}};
  }
  return doc;
}

LoadedGraph graph_from_json(const Json& doc) {
  if (!doc.is_object()) parse_error("graph document must be a JSON object");
  const std::size_t T = get_size(doc, "sample_count", "graph");
  if (T == 0) parse_error("graph: field 'sample_count' must be positive");
  LoadedGraph out{ModelGraph(T), std::nullopt, {}};
  ModelGraph& g = out.graph;

  const Json& nodes = field(doc, "nodes", "graph");
  if (!nodes.is_array()) parse_error("graph: field 'nodes' must be an array");
  std::unordered_map<std::size_t, NodeId> ids;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Json& j = nodes[k];
    const std::string where = "nodes[" + std::to_string(k) + "]";
    const std::size_t id = get_size(j, "id", where);
    const std::string kind_name = get_string(j, "kind", where);
    const auto kind = parse_node_kind(kind_name);
    if (!kind) parse_error(where + ": unknown kind '" + kind_name + "'");
    const std::string label = get_string(j, "label", where);
    const std::string arity_name = get_string(j, "arity", where);
    if (arity_name != "scalar" && arity_name != "vector")
      parse_error(where + ": field 'arity' must be \"scalar\" or \"vector\"");
    const Arity arity = arity_name == "vector" ? Arity::Vector : Arity::Scalar;
    if (ids.count(id)) parse_error(where + ": duplicate id " + std::to_string(id));

    NodeId nid;
    switch (*kind) {
      case NodeKind::Constant:
        nid = g.add_constant(label, get_double(j, "value", where), arity);
        break;
      case NodeKind::Proxy:
        nid = g.add_proxy(label, get_string(j, "target", where));
        break;
      case NodeKind::Dirichlet:
      case NodeKind::MixtureOfGaussians:
        nid = g.create_node(*kind, label, arity, get_size(j, "components", where));
        break;
      default:
        nid = g.create_node(*kind, label, arity);
        break;
    }
    ids.emplace(id, nid);

    Node& n = g.node(nid);
    const std::size_t slots = arity == Arity::Vector ? T : 1;
    if (has_posterior(*kind)) {
      if (j.contains("mean")) n.mean = get_doubles(j, "mean", where, slots);
      if (j.contains("var")) {
        n.var = get_doubles(j, "var", where, slots);
        for (double v : n.var)
          if (!(v >= 0.0)) parse_error(where + ": field 'var' must be non-negative");
      }
      if (j.contains("observed")) {
        if (!j["observed"].is_boolean()) parse_error(where + ": field 'observed' must be a boolean");
        n.observed = j["observed"].get<bool>();
      }
      if (*kind == NodeKind::MixtureOfGaussians && j.contains("resp"))
        n.resp = get_doubles(j, "resp", where, slots * n.components);
    } else if (*kind == NodeKind::Dirichlet) {
      if (j.contains("prior_counts")) n.prior_counts = get_doubles(j, "prior_counts", where, n.components);
      if (j.contains("counts")) n.counts = get_doubles(j, "counts", where, n.components);
    } else if (*kind == NodeKind::Evidence) {
      n.target = get_doubles(j, "target_values", where, slots);
      n.precision = get_double(j, "precision", where);
      if (!(n.precision > 0.0)) parse_error(where + ": field 'precision' must be positive");
      n.fade_sweeps = static_cast<int>(get_size(j, "fade_sweeps", where));
      if (n.fade_sweeps <= 0) parse_error(where + ": field 'fade_sweeps' must be positive");
      if (j.contains("start_clock")) n.start_clock = static_cast<int>(get_size(j, "start_clock", where));
    }
  }

  const Json& edges = field(doc, "edges", "graph");
  if (!edges.is_array()) parse_error("graph: field 'edges' must be an array");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Json& e = edges[k];
    const std::string where = "edges[" + std::to_string(k) + "]";
    const std::size_t child = get_size(e, "child", where), parent = get_size(e, "parent", where);
    if (!ids.count(child)) parse_error(where + ": unknown child id " + std::to_string(child));
    if (!ids.count(parent)) parse_error(where + ": unknown parent id " + std::to_string(parent));
    const std::string role_name = get_string(e, "role", where);
    const auto role = parse_role_kind(role_name);
    if (!role) parse_error(where + ": unknown role '" + role_name + "'");
    const std::size_t component = e.contains("component") ? get_size(e, "component", where) : 0;
    g.connect(ids.at(child), ids.at(parent), ParentRole(*role, component));
  }
  if (std::any_of(g.nodes().begin(), g.nodes().end(), [](const Node& n) { return n.kind == NodeKind::Proxy; }))
    g.connect_proxies();

  if (doc.contains("evidence_clock")) g.set_evidence_clock(static_cast<int>(get_size(doc, "evidence_clock", "graph")));
  if (doc.contains("model")) {
    const Json& m = doc["model"];
    const std::string type_name = get_string(m, "type", "model");
    const auto type = parse_model_type(type_name);
    if (!type) parse_error("model: unknown type '" + type_name + "'");
    out.model = ModelInfo{*type, get_size(m, "xdim", "model"), get_size(m, "sdim", "model")};
  }
  if (doc.contains("observe")) {
    const Json& obs = doc["observe"];
    if (!obs.is_array()) parse_error("graph: field 'observe' must be an array of labels");
    for (const auto& l : obs) {
      if (!l.is_string()) parse_error("graph: field 'observe' must be an array of labels");
      out.observed_labels.push_back(l.get<std::string>());
    }
  }
  return out;
}

bool is_builder_spec(const Json& doc) { return doc.is_object() && doc.contains("builder"); }

BuilderSpec builder_from_json(const Json& doc) {
  BuilderSpec b;
  const std::string name = get_string(doc, "builder", "spec");
  const auto type = parse_model_type(name);
  if (!type) parse_error("spec: field 'builder' must be \"dynvar\" or \"dynsrc\"");
  b.type = *type;
  b.spec.xdim = get_size(doc, "xdim", "spec");
  b.spec.sdim = get_size(doc, "sdim", "spec");
  if (b.spec.xdim == 0) parse_error("spec: field 'xdim' must be positive");
  if (b.spec.sdim == 0) parse_error("spec: field 'sdim' must be positive");
  if (doc.contains("weight_log_prec")) b.spec.weight_log_prec = get_double(doc, "weight_log_prec", "spec");
  if (doc.contains("hyper_log_prec")) b.spec.hyper_log_prec = get_double(doc, "hyper_log_prec", "spec");
  if (doc.contains("mask")) {
    const Json& m = doc["mask"];
    if (m.is_object() && m.contains("circular")) {
      const Json& c = m["circular"];
      const std::size_t side = get_size(c, "side", "mask.circular");
      if (side * side != b.spec.xdim) parse_error("mask.circular: field 'side' squared must equal xdim");
      const double radius = c.contains("radius") ? get_double(c, "radius", "mask.circular") : 0.0;
      b.spec.mask = circular_masks(side, b.spec.sdim, radius);
    } else if (m.is_array()) {
      if (m.size() != b.spec.xdim) parse_error("spec: field 'mask' must have xdim rows");
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i].is_array() || m[i].size() != b.spec.sdim)
          parse_error("spec: field 'mask' row " + std::to_string(i) + " must have sdim entries");
        std::vector<bool> row;
        for (const auto& x : m[i]) {
          if (x.is_boolean()) row.push_back(x.get<bool>());
          else if (x.is_number()) row.push_back(x.get<double>() != 0.0);
          else parse_error("spec: field 'mask' entries must be 0/1 or booleans");
        }
        b.spec.mask.push_back(std::move(row));
      }
    } else {
      parse_error("spec: field 'mask' must be an array or {\"circular\": ...}");
    }
  }
  return b;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string posteriors_csv(const ModelGraph& graph) {
  std::size_t kmax = 0;
  for (const Node& n : graph.nodes())
    if (n.alive && n.kind == NodeKind::MixtureOfGaussians) kmax = std::max(kmax, n.components);
  std::string out = "node_label,sample_index,mean,variance";
  for (std::size_t k = 0; k < kmax; ++k) out += ",r" + std::to_string(k);
  out.push_back('\n');
  auto row = [&](const std::string& label, std::size_t t, double mean, double var, const double* resp,
                 std::size_t K) {
    out += csv_field(label) + "," + std::to_string(t) + "," + format_double(mean) + "," + format_double(var);
    for (std::size_t k = 0; k < kmax; ++k) out += "," + (resp && k < K ? format_double(resp[k]) : std::string());
    out.push_back('\n');
  };
  for (const Node& n : graph.nodes()) {
    if (!n.alive || !n.is_latent()) continue;
    if (n.kind == NodeKind::Dirichlet) {
      double total = 0.0;
      for (double c : n.counts) total += c;
      for (std::size_t k = 0; k < n.counts.size(); ++k)
        row(n.label, k, n.counts[k] / total, n.counts[k] * (total - n.counts[k]) / (total * total * (total + 1.0)),
            nullptr, 0);
      continue;
    }
    for (std::size_t t = 0; t < n.mean.size(); ++t) {
      const double* resp = n.kind == NodeKind::MixtureOfGaussians ? n.resp.data() + t * n.components : nullptr;
      if (n.kind == NodeKind::RectifiedGaussian) {
        const auto m = numeric::truncated_normal_moments(n.mean[t], n.var[t]);
        row(n.label, t, m.mean, m.variance, nullptr, 0);
      } else {
        row(n.label, t, n.mean[t], n.var[t], resp, n.components);
      }
    }
  }
  return out;
}

}  // namespace vbb::io
