// Command-line front end: train, predict, gen.
//
// Exit codes: 0 success, 2 input/parse/dimension errors, 3 graphs that fail
// the structural rules.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "vbblocks/engine.hpp"
#include "vbblocks/error.hpp"
#include "vbblocks/io.hpp"
#include "vbblocks/learning.hpp"
#include "vbblocks/models.hpp"
#include "vbblocks/structure.hpp"

namespace fs = std::filesystem;
using vbb::io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInvalidGraph = 3;

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(vbb::ErrorCode code) {
  switch (code) {
    case vbb::ErrorCode::IllegalRole:
    case vbb::ErrorCode::ScalarChildVectorParent:
    case vbb::ErrorCode::UnresolvedProxy:
    case vbb::ErrorCode::InvalidGraph:
    case vbb::ErrorCode::MissingExpStat:
      return kExitInvalidGraph;
    default:
      return kExitInput;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json file_entry(const fs::path& path, std::string_view content) {
  return {{"path", path.string()}, {"fnv1a64", vbb::io::hex64(vbb::io::fnv1a64(content))}};
}

struct TrainOptions {
  std::string spec, data, out;
  int sweeps = 100;
  double tol = 1e-6;
  int pattern_every = 10;
  std::uint64_t seed = 0;
  int prune_every = 0;
  std::string format = "csv";
};

struct PredictOptions {
  std::string graph, data, out;
  std::string format = "csv";
};

struct GenOptions {
  std::string out;
  std::size_t xdim = 64, sdim = 4, tdim = 300;
  std::uint64_t seed = 0;
  std::string profile = "window";
  double calm = 3.0, active = -1.0;
  std::size_t start = 120, end = 200;
  std::vector<std::size_t> sources;
  double noise = 0.1;
  double radius = 0.0;
  std::string format = "csv";
};

vbb::io::DataFormat data_format(const std::string& name) {
  const auto f = vbb::io::parse_data_format(name);
  if (!f) throw Failure{kExitInput, "--format must be csv or bin"};
  return *f;
}

int run_train(const TrainOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto format = data_format(opt.format);
  if (opt.sweeps < 0) throw Failure{kExitInput, "--sweeps must be non-negative"};
  if (!(opt.tol >= 0.0)) throw Failure{kExitInput, "--tol must be non-negative"};

  const std::string spec_text = vbb::io::read_file(opt.spec);
  const std::string data_text = vbb::io::read_file(opt.data);
  Json spec_doc;
  try {
    spec_doc = Json::parse(spec_text);
  } catch (const Json::exception& e) {
    throw Failure{kExitInput, opt.spec + ": " + e.what()};
  }
  const vbb::Matrix data = vbb::io::read_matrix(opt.data, format);

  std::optional<vbb::ModelGraph> graph;
  std::optional<vbb::DynModel> model;
  std::optional<vbb::io::ModelInfo> info;
  if (vbb::io::is_builder_spec(spec_doc)) {
    vbb::io::BuilderSpec b = vbb::io::builder_from_json(spec_doc);
    if (data.cols != b.spec.xdim)
      throw Failure{kExitInput, "field 'xdim' is " + std::to_string(b.spec.xdim) + " but the data has " +
                                    std::to_string(data.cols) + " columns"};
    b.spec.tdim = data.rows;
    graph.emplace(data.rows);
    model = b.type == vbb::ModelType::DynVar ? vbb::build_dynvar(*graph, b.spec) : vbb::build_dynsrc(*graph, b.spec);
    info = vbb::io::ModelInfo{b.type, b.spec.xdim, b.spec.sdim};
    vbb::observe_data(*graph, *model, data);
    vbb::InitConfig ic;
    ic.seed = opt.seed;
    vbb::init_from_data(*graph, *model, data, ic);
  } else {
    vbb::io::LoadedGraph loaded = vbb::io::graph_from_json(spec_doc);
    if (loaded.graph.sample_count() != data.rows)
      throw Failure{kExitInput, "field 'sample_count' is " + std::to_string(loaded.graph.sample_count()) +
                                    " but the data has " + std::to_string(data.rows) + " rows"};
    std::vector<std::string> labels = loaded.observed_labels;
    if (labels.empty() && loaded.model)
      for (std::size_t i = 0; i < loaded.model->xdim; ++i) labels.push_back("x(" + std::to_string(i) + ")");
    if (labels.size() != data.cols)
      throw Failure{kExitInput, "field 'observe' lists " + std::to_string(labels.size()) +
                                    " nodes but the data has " + std::to_string(data.cols) + " columns"};
    graph.emplace(std::move(loaded.graph));
    info = loaded.model;
    const vbb::ValidationReport report = graph->validate();
    if (!report.ok()) throw Failure{kExitInvalidGraph, "graph violates the structural rules:\n" + report.to_string()};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto id = graph->find(labels[i]);
      if (!id) throw Failure{kExitInput, "field 'observe': no node labelled '" + labels[i] + "'"};
      graph->observe(*id, data.column(i));
    }
    vbb::randomize(*graph, opt.seed);
  }

  const vbb::ValidationReport report = graph->validate();
  if (!report.ok()) throw Failure{kExitInvalidGraph, "graph violates the structural rules:\n" + report.to_string()};

  vbb::Engine engine(*graph);
  vbb::TrainConfig config;
  config.max_sweeps = opt.sweeps;
  config.rel_tol = opt.tol;
  config.pattern_search_every = opt.pattern_every;
  config.seed = opt.seed;
  std::string prune_log;
  vbb::SweepHook hook;
  if (opt.prune_every > 0) {
    hook = [&](int sweep, vbb::Engine& e) {
      if (sweep % opt.prune_every != 0) return false;
      const auto reports = vbb::prune(e);
      for (const auto& r : reports) prune_log += vbb::to_json_line(r) + "\n";
      return !reports.empty();
    };
  }
  const auto trace = vbb::train(engine, config, hook);

  fs::create_directories(opt.out);
  const fs::path out(opt.out);
  std::string cost_csv = "sweep,total_nats,bits_per_sample,n_nodes\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (k + 1 < trace.size() && trace[k + 1].sweep == trace[k].sweep) continue;  // keep the post-pattern value
    const auto& e = trace[k];
    cost_csv += std::to_string(e.sweep) + "," + fmt(e.cost.total) + "," + fmt(e.cost.bits_per_sample) + "," +
                std::to_string(e.n_nodes) + "\n";
  }
  const std::string posteriors = vbb::io::posteriors_csv(*graph);
  const std::string graph_json = vbb::io::graph_to_json(*graph, info).dump(1) + "\n";

  Json outputs = Json::object();
  auto emit = [&](const std::string& name, const std::string& content) {
    vbb::io::write_atomic(out / name, content);
    outputs[name] = file_entry(out / name, content);
  };
  emit("cost_trace.csv", cost_csv);
  emit("posteriors.csv", posteriors);
  emit("graph.json", graph_json);
  if (opt.prune_every > 0) emit("prune_log.jsonl", prune_log);

  const auto& last = trace.back().cost;
  Json manifest;
  manifest["command"] = "train";
  manifest["config"] = {{"sweeps", opt.sweeps},       {"tol", opt.tol},
                        {"pattern_every", opt.pattern_every}, {"seed", opt.seed},
                        {"prune_every", opt.prune_every}, {"format", opt.format}};
  manifest["seed"] = opt.seed;
  manifest["inputs"] = {{"spec", file_entry(opt.spec, spec_text)}, {"data", file_entry(opt.data, data_text)}};
  manifest["outputs"] = outputs;
  manifest["sweeps_run"] = trace.back().sweep;
  manifest["final_cost"] = {{"nats", last.total}, {"bits_per_sample", last.bits_per_sample}};
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  vbb::io::write_atomic(out / "manifest.json", manifest.dump(1) + "\n");
  std::cout << "final cost " << fmt(last.total) << " nats (" << fmt(last.bits_per_sample) << " bits/sample) after "
            << trace.back().sweep << " sweeps\n";
  return kExitOk;
}

int run_predict(const PredictOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto format = data_format(opt.format);
  const std::string graph_text = vbb::io::read_file(opt.graph);
  const std::string data_text = vbb::io::read_file(opt.data);
  Json doc;
  try {
    doc = Json::parse(graph_text);
  } catch (const Json::exception& e) {
    throw Failure{kExitInput, opt.graph + ": " + e.what()};
  }
  vbb::io::LoadedGraph loaded = vbb::io::graph_from_json(doc);
  if (!loaded.model) throw Failure{kExitInput, "field 'model' is missing; predict needs a DynVar or DynSrc graph"};
  const vbb::Matrix data = vbb::io::read_matrix(opt.data, format);
  if (data.rows != loaded.graph.sample_count() || data.cols != loaded.model->xdim)
    throw Failure{kExitInput, "data is " + std::to_string(data.rows) + "x" + std::to_string(data.cols) +
                                  ", graph expects " + std::to_string(loaded.graph.sample_count()) + "x" +
                                  std::to_string(loaded.model->xdim)};
  const vbb::DynModel model = vbb::attach_model(loaded.graph, loaded.model->type, loaded.model->xdim,
                                                loaded.model->sdim);

  std::string predictions = "t,dim,mean,variance\n";
  std::string perplexity = "t,perplexity\n";
  for (std::size_t t = 1; t < data.rows; ++t) {
    const auto pred = vbb::predict_next(loaded.graph, model, t);
    for (std::size_t i = 0; i < pred.mean.size(); ++i)
      predictions += std::to_string(t) + "," + std::to_string(i) + "," + fmt(pred.mean[i]) + "," +
                     fmt(pred.variance[i]) + "\n";
    const auto row = std::span<const double>(data.values).subspan(t * data.cols, data.cols);
    perplexity += std::to_string(t) + "," + fmt(vbb::predictive_perplexity(pred, row)) + "\n";
  }

  fs::create_directories(opt.out);
  const fs::path out(opt.out);
  vbb::io::write_atomic(out / "predictions.csv", predictions);
  vbb::io::write_atomic(out / "perplexity.csv", perplexity);
  Json manifest;
  manifest["command"] = "predict";
  manifest["config"] = {{"format", opt.format}};
  manifest["inputs"] = {{"graph", file_entry(opt.graph, graph_text)}, {"data", file_entry(opt.data, data_text)}};
  manifest["outputs"] = {{"predictions.csv", file_entry(out / "predictions.csv", predictions)},
                         {"perplexity.csv", file_entry(out / "perplexity.csv", perplexity)}};
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  vbb::io::write_atomic(out / "manifest.json", manifest.dump(1) + "\n");
  return kExitOk;
}

int run_gen(const GenOptions& opt) {
  const auto format = data_format(opt.format);
  if (opt.xdim == 0 || opt.sdim == 0 || opt.tdim == 0)
    throw Failure{kExitInput, "--xdim, --sdim and --tdim must be positive"};
  vbb::SynthConfig sc;
  sc.xdim = opt.xdim;
  sc.sdim = opt.sdim;
  sc.tdim = opt.tdim;
  sc.seed = opt.seed;
  sc.noise_std = opt.noise;
  if (opt.profile == "constant") sc.profile.kind = vbb::MotionProfile::Kind::Constant;
  else if (opt.profile == "step") sc.profile.kind = vbb::MotionProfile::Kind::Step;
  else if (opt.profile == "window") sc.profile.kind = vbb::MotionProfile::Kind::Window;
  else throw Failure{kExitInput, "--profile must be constant, step or window"};
  sc.profile.calm = opt.calm;
  sc.profile.active = opt.active;
  sc.profile.start = opt.start;
  sc.profile.end = opt.end;
  sc.profile.sources = opt.sources;

  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(opt.xdim))));
  Json mask_json;
  if (side * side == opt.xdim) {
    sc.mask = vbb::circular_masks(side, opt.sdim, opt.radius);
    mask_json = {{"circular", {{"side", side}, {"radius", opt.radius}}}};
  }
  const vbb::SynthData d = vbb::synth_sequence(sc);

  fs::create_directories(opt.out);
  const fs::path out(opt.out);
  const std::string ext = format == vbb::io::DataFormat::Binary ? ".bin" : ".csv";
  vbb::io::write_matrix(out / ("data" + ext), d.data, format);
  vbb::io::write_matrix(out / "sources.csv", d.sources, vbb::io::DataFormat::Csv);
  vbb::io::write_matrix(out / "log_prec.csv", d.log_prec, vbb::io::DataFormat::Csv);
  vbb::io::write_matrix(out / "weights.csv", d.weights, vbb::io::DataFormat::Csv);
  vbb::Matrix mask(d.mask.size(), opt.sdim);
  for (std::size_t i = 0; i < d.mask.size(); ++i)
    for (std::size_t j = 0; j < opt.sdim; ++j) mask(i, j) = d.mask[i][j] ? 1.0 : 0.0;
  vbb::io::write_matrix(out / "mask.csv", mask, vbb::io::DataFormat::Csv);
  for (const char* builder : {"dynvar", "dynsrc"}) {
    Json spec = {{"builder", builder}, {"xdim", opt.xdim}, {"sdim", opt.sdim}};
    if (!mask_json.is_null()) spec["mask"] = mask_json;
    vbb::io::write_atomic(out / (std::string(builder) + ".json"), spec.dump(1) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Bayesian learning with building-block graphs"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* tr = app.add_subcommand("train", "Build or load a model, train it and export the results");
  tr->add_option("spec", train.spec, "Builder spec or graph JSON")->required();
  tr->add_option("data", train.data, "Data matrix (rows = time)")->required();
  tr->add_option("out", train.out, "Output directory")->required();
  tr->add_option("--sweeps", train.sweeps, "Maximum number of sweeps");
  tr->add_option("--tol", train.tol, "Relative cost decrease that counts as converged (0 = run all sweeps)");
  tr->add_option("--pattern-every", train.pattern_every, "Pattern search every N sweeps (0 = off)");
  tr->add_option("--seed", train.seed, "Seed for initialization");
  tr->add_option("--prune-every", train.prune_every, "Prune every N sweeps (0 = off)");
  tr->add_option("--format", train.format, "Data format: csv or bin");

  PredictOptions predict;
  auto* pr = app.add_subcommand("predict", "One-step-ahead predictive distributions of a trained model");
  pr->add_option("graph", predict.graph, "graph.json written by train")->required();
  pr->add_option("data", predict.data, "Data matrix used for training")->required();
  pr->add_option("out", predict.out, "Output directory")->required();
  pr->add_option("--format", predict.format, "Data format: csv or bin");

  GenOptions gen;
  auto* gn = app.add_subcommand("gen", "Generate synthetic data with a variance regime switch");
  gn->add_option("out", gen.out, "Output directory")->required();
  gn->add_option("--xdim", gen.xdim, "Data dimension (a square gives circular masks)");
  gn->add_option("--sdim", gen.sdim, "Number of sources");
  gn->add_option("--tdim", gen.tdim, "Number of time steps");
  gn->add_option("--seed", gen.seed, "Random seed");
  gn->add_option("--profile", gen.profile, "constant, step or window");
  gn->add_option("--calm", gen.calm, "Innovation log-precision outside the active period");
  gn->add_option("--active", gen.active, "Innovation log-precision inside the active period");
  gn->add_option("--start", gen.start, "First active time step");
  gn->add_option("--end", gen.end, "End of the active window (exclusive)");
  gn->add_option("--sources", gen.sources, "Sources following the profile (default: all)");
  gn->add_option("--noise", gen.noise, "Observation noise standard deviation");
  gn->add_option("--radius", gen.radius, "Mask radius (0 = half the side)");
  gn->add_option("--format", gen.format, "Data format: csv or bin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (tr->parsed()) return run_train(train);
    if (pr->parsed()) return run_predict(predict);
    if (gn->parsed()) return run_gen(gen);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const vbb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
