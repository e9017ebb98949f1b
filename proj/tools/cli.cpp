#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11/CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "ecnu/checkpoint.hpp"
#include "ecnu/data.hpp"
#include "ecnu/error.hpp"
#include "ecnu/explain.hpp"
#include "ecnu/graph.hpp"
#include "ecnu/pipeline.hpp"
#include "ecnu/synth.hpp"

namespace ecnu::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

RunConfig resolve(const Globals& g) {
  std::optional<std::string> text;
  if (!g.config_path.empty()) {
    if (!fs::is_regular_file(g.config_path)) {
      throw ContractError("config file " + g.config_path + " does not exist");
    }
    text = read_file(g.config_path);
  }
  RunConfig c = resolve_run_config(text, g.profile);
  if (g.seed) c.train.seed = *g.seed;
  return c;
}

/// Adds this command's entry to `dir/manifest.json`, keeping other commands' entries.
void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, const std::vector<std::pair<std::string, fs::path>>& inputs,
                    const std::vector<std::string>& outputs) {
  const fs::path path = dir / "manifest.json";
  Json manifest = Json::object();
  if (fs::exists(path)) {
    try {
      manifest = Json::parse(read_file(path));
    } catch (const nlohmann::json::exception&) {
      manifest = Json::object();
    }
  }
  Json entry;
  entry["config_hash"] = "sha256:" + sha256_hex(config_text);
  entry["seed"] = seed;
  entry["versions"] = {{"ecnu", kVersion},
                       {"checkpoint_format", 1},
                       {"compiler", __VERSION__},
                       {"cxx_standard", static_cast<long>(__cplusplus)}};
  Json in = Json::object();
  for (const auto& [name, p] : inputs) {
    in[name] = {{"path", p.string()}, {"sha256", sha256_hex(read_file(p))}};
  }
  entry["inputs"] = std::move(in);
  entry["outputs"] = outputs;
  entry["config"] = Json::parse(config_text);
  manifest["tool"] = "ecnu";
  manifest["commands"][command] = std::move(entry);
  write_file(path, manifest.dump(2) + "\n");
}

int cmd_preprocess(const Globals& g, const std::string& input, const std::string& out_dir,
                   const std::string& name, const std::string& stats_from,
                   std::optional<std::size_t> trim, std::optional<std::size_t> downsample,
                   std::optional<bool> normalize, bool no_impute) {
  RunConfig c = resolve(g);
  if (trim) c.preprocess.trim_head = *trim;
  if (downsample) c.preprocess.downsample = *downsample;
  if (normalize) c.preprocess.normalize = *normalize;
  if (no_impute) c.preprocess.impute = false;
  if (c.preprocess.downsample == 0) throw ContractError("--downsample must be >= 1");

  const RawSeries raw = load_csv(input);
  std::optional<NormStats> stats;
  if (!stats_from.empty()) {
    stats = read_stats_from_metadata(stats_from);
    if (!stats) throw DataError(stats_from + " carries no normalization statistics");
  }
  const RawSeries processed = preprocess(raw, c.preprocess, stats);

  ensure_dir(out_dir);
  const fs::path csv = fs::path(out_dir) / (name + ".csv");
  const fs::path meta = fs::path(out_dir) / (name + ".meta.json");
  save_csv(csv, processed);
  write_preprocess_metadata(meta, c.preprocess, stats, input);
  std::vector<std::pair<std::string, fs::path>> inputs{{"input", input}};
  if (!stats_from.empty()) inputs.emplace_back("stats_from", stats_from);
  write_manifest(out_dir, "preprocess", run_config_to_json(c), c.train.seed, inputs,
                 {csv.filename().string(), meta.filename().string()});
  std::cout << "preprocessed " << processed.n_sensors() << " sensors x " << processed.length
            << " ticks -> " << csv.string() << '\n';
  return kOk;
}

struct TrainFlags {
  std::optional<std::size_t> epochs, patience, batch_size, window, topk;
  std::optional<double> lr, val_fraction;
  bool freeze_graph = false;

  void apply(RunConfig& c) const {
    if (epochs) c.train.max_epochs = *epochs;
    if (patience) c.train.patience = *patience;
    if (batch_size) c.train.batch_size = *batch_size;
    if (window) c.model.window = *window;
    if (topk) c.model.top_k = *topk;
    if (lr) c.train.learning_rate = *lr;
    if (val_fraction) c.train.val_fraction = *val_fraction;
    if (freeze_graph) c.train.freeze_graph_per_epoch = true;
  }
};

int cmd_train(const Globals& g, const std::string& train_path, const std::string& out_dir,
              const TrainFlags& flags) {
  RunConfig c = resolve(g);
  flags.apply(c);
  c.train.validate();
  const RawSeries raw = load_csv(train_path);
  c.validate(raw.n_sensors());

  ensure_dir(out_dir);
  const fs::path log_path = fs::path(out_dir) / "metrics.jsonl";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw IoError("cannot write " + log_path.string());
  const TrainOutcome outcome = train_model(raw, c, [&](const EpochRecord& r) {
    Json line;
    line["epoch"] = r.epoch;
    line["train_loss"] = r.train_loss;
    line["val_loss"] = r.val_loss;
    line["seconds"] = r.seconds;
    log << line.dump() << '\n' << std::flush;
    std::cout << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
              << '\n';
  });
  if (outcome.aborted) throw TrainingError("training aborted: " + outcome.abort_reason);

  const Checkpoint& ck = outcome.checkpoint;
  const fs::path ck_path = fs::path(out_dir) / "checkpoint.json";
  save_checkpoint(ck_path, ck);
  const std::string config_text = run_config_to_json(c);
  write_file(fs::path(out_dir) / "config.json", config_text);
  write_adjacency(fs::path(out_dir) / "graph.txt", extract_graph(ck.params.embeddings, c.model.top_k),
                  cosine_matrix(ck.params.embeddings));
  write_manifest(out_dir, "train", config_text, c.train.seed, {{"train", train_path}},
                 {"checkpoint.json", "metrics.jsonl", "config.json", "graph.txt"});
  std::cout << "best epoch " << ck.best_epoch << " val_loss " << ck.best_val_loss << " -> "
            << ck_path.string() << '\n';
  return kOk;
}

struct ScoreFlags {
  std::optional<double> threshold;
  std::optional<std::size_t> sma, grid;
  bool per_sensor = false;

  void apply(RunConfig& c) const {
    if (threshold) c.score.threshold = *threshold;
    if (sma) c.score.sma_window = *sma;
    if (grid) c.score.grid_size = *grid;
    if (per_sensor) c.score.per_sensor = true;
  }
};

int cmd_detect(const Globals& g, const std::string& ck_path, const std::string& test_path,
               const std::string& out_dir, const ScoreFlags& flags) {
  RunConfig c = resolve(g);
  flags.apply(c);
  if (c.score.sma_window == 0) throw ContractError("--sma must be >= 1");
  if (c.score.grid_size < 2) throw ContractError("--grid must be >= 2");
  const Checkpoint ck = load_checkpoint(ck_path);
  const RawSeries test = load_csv(test_path);
  if (!test.labels && !c.score.threshold) {
    throw ContractError("test data has no label column; pass --threshold");
  }
  const Detection d = detect(ck, test, c.score);

  ensure_dir(out_dir);
  write_scores_csv(fs::path(out_dir) / "scores.csv", d.scores, d.times, ck.sensor_names, c.score.per_sensor);
  write_report(fs::path(out_dir) / "report.json", d.report, c.score.sma_window,
               c.score.threshold ? std::nullopt : std::optional<std::size_t>(c.score.grid_size));
  write_manifest(out_dir, "detect", run_config_to_json(c), ck.train.seed,
                 {{"checkpoint", ck_path}, {"test", test_path}}, {"scores.csv", "report.json"});
  std::cout << "threshold " << d.report.threshold;
  if (d.report.has_labels) {
    std::cout << " precision " << d.report.metrics.precision << " recall " << d.report.metrics.recall
              << " f1 " << d.report.metrics.f1;
  }
  std::cout << '\n';
  if (!d.report.warning.empty()) std::cerr << "warning: " << d.report.warning << '\n';
  return kOk;
}

std::size_t resolve_sensor(const std::string& sensor, const std::vector<std::string>& names) {
  const auto it = std::find(names.begin(), names.end(), sensor);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  std::size_t id = 0;
  const auto [end, ec] = std::from_chars(sensor.data(), sensor.data() + sensor.size(), id);
  if (ec != std::errc() || end != sensor.data() + sensor.size() || id >= names.size()) {
    throw ContractError("unknown sensor '" + sensor + "' (expected a name or an id below " +
                        std::to_string(names.size()) + ")");
  }
  return id;
}

int cmd_explain(const Globals& g, const std::string& ck_path, const std::string& test_path,
                std::size_t time, const std::string& sensor, const std::string& out_dir) {
  const RunConfig c = resolve(g);
  const Checkpoint ck = load_checkpoint(ck_path);
  const std::size_t target = resolve_sensor(sensor, ck.sensor_names);
  const RawSeries test = load_csv(test_path);
  if (test.sensor_names != ck.sensor_names) throw DataError("test sensors do not match the checkpoint's sensors");
  const RawSeries series = prepare_test_series(test, ck.preprocess, ck.norm);
  const std::size_t w = ck.params.config.window;
  if (time < w || time >= series.length) {
    throw ContractError("--time must lie in [" + std::to_string(w) + ", " + std::to_string(series.length) +
                        ") so a full window precedes it");
  }
  const WindowedDataset windows = make_windows(series, w);
  const std::vector<double> window = windows.input(time - w);

  const Adjacency adjacency = extract_graph(ck.params.embeddings, ck.params.config.top_k);
  RelevanceMap map = explain_sensor(ck.params, adjacency, window, target);
  map.time = time;

  ensure_dir(out_dir);
  const std::string file = "relevance_t" + std::to_string(time) + "_s" + std::to_string(target) + ".txt";
  export_relevance_graph(fs::path(out_dir) / file, map, adjacency, ck.sensor_names);
  write_manifest(out_dir, "explain", run_config_to_json(c), ck.train.seed,
                 {{"checkpoint", ck_path}, {"test", test_path}}, {file});

  std::vector<std::size_t> order(map.node.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(map.node[a]) > std::abs(map.node[b]); });
  std::cout << "relevance for " << ck.sensor_names[target] << " at t=" << time << ':';
  for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
    std::cout << ' ' << ck.sensor_names[order[r]] << '=' << map.node[order[r]];
  }
  std::cout << '\n';
  if (map.fallback_used) std::cerr << "warning: uniform relevance fallback was used\n";
  return kOk;
}

int cmd_sweep(const Globals& g, const std::string& train_path, const std::string& test_path,
              const std::string& param, const std::vector<std::size_t>& values, std::size_t repeats,
              const std::string& out_dir, const TrainFlags& flags) {
  RunConfig c = resolve(g);
  flags.apply(c);
  c.train.validate();
  if (param != "window" && param != "topk") throw ContractError("--param must be 'window' or 'topk'");
  const RawSeries train = load_csv(train_path);
  const RawSeries test = load_csv(test_path);
  const auto rows = sweep(train, test, c, param, values, repeats);

  ensure_dir(out_dir);
  std::ostringstream csv;
  csv << "parameter,value,mean_f1,std_f1,n\n";
  for (const auto& r : rows) {
    csv << param << ',' << format_double(r.value) << ',' << format_double(r.mean_f1) << ','
        << format_double(r.std_f1) << ',' << r.n << '\n';
  }
  write_file(fs::path(out_dir) / "sweep.csv", csv.str());
  write_manifest(out_dir, "sweep", run_config_to_json(c), c.train.seed,
                 {{"train", train_path}, {"test", test_path}}, {"sweep.csv"});
  std::cout << csv.str();
  return kOk;
}

int cmd_synth(const Globals& g, const std::string& spec_path, const std::string& out_dir) {
  SynthSpec spec = spec_path.empty() ? SynthSpec::acceptance_default() : load_synth_spec(spec_path);
  if (g.seed) spec.seed = *g.seed;
  const SynthDataset data = generate(spec);
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  save_csv(dir / "train.csv", data.train);
  save_csv(dir / "test.csv", data.test);
  write_ground_truth_edges(dir / "edges.txt", data.edges);
  save_synth_spec(dir / "spec.json", spec);
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (!spec_path.empty()) inputs.emplace_back("spec", spec_path);
  write_manifest(out_dir, "synth", synth_spec_to_json(spec), spec.seed, inputs,
                 {"train.csv", "test.csv", "edges.txt", "spec.json"});
  std::cout << "synthetic dataset: " << spec.n_sensors << " sensors, " << spec.t_train << " train / "
            << spec.t_test << " test ticks -> " << out_dir << '\n';
  return kOk;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::kContract: return kUsage;
    case Error::Kind::kParse:
    case Error::Kind::kData:
    case Error::Kind::kIo:
    case Error::Kind::kLoad: return kData;
    case Error::Kind::kDimension:
    case Error::Kind::kIndex:
    case Error::Kind::kTraining: return kRuntime;
  }
  return kRuntime;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Error::Kind::kIo, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Edge-conditional graph neural network for multivariate sensor anomaly detection"};
  app.name("ecnu");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  std::string profile;
  app.add_option("--config", g.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  auto* profile_opt = app.add_option("--profile", profile, "Hyperparameter profile")
                          ->check(CLI::IsMember({"swat", "wadi", "psm", "synth"}));

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Trim, downsample, impute and normalize a raw CSV");
  std::string pre_input, pre_out, pre_name = "processed", pre_stats;
  std::optional<std::size_t> pre_trim, pre_down;
  bool pre_norm = false, pre_no_norm = false, pre_no_impute = false;
  pre->add_option("--input", pre_input, "Raw CSV")->required();
  pre->add_option("--out", pre_out, "Output directory")->required();
  pre->add_option("--name", pre_name, "Output file stem");
  pre->add_option("--stats-from", pre_stats, "Metadata sidecar whose min-max statistics to reuse");
  pre->add_option("--trim", pre_trim, "Ticks to drop from the head");
  pre->add_option("--downsample", pre_down, "Median downsampling factor");
  pre->add_flag("--normalize", pre_norm, "Apply min-max normalization");
  pre->add_flag("--no-normalize", pre_no_norm, "Skip min-max normalization");
  pre->add_flag("--no-impute", pre_no_impute, "Keep missing values");

  // train
  auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
  std::string train_csv, train_out;
  TrainFlags tf;
  train->add_option("--train", train_csv, "Training CSV")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  const auto add_train_flags = [](CLI::App* sub, TrainFlags& f) {
    sub->add_option("--epochs", f.epochs, "Maximum epochs");
    sub->add_option("--patience", f.patience, "Early-stopping patience");
    sub->add_option("--batch-size", f.batch_size, "Mini-batch size");
    sub->add_option("--window", f.window, "Sliding window length");
    sub->add_option("--topk", f.topk, "Neighbors per sensor");
    sub->add_option("--lr", f.lr, "Adam learning rate");
    sub->add_option("--val-fraction", f.val_fraction, "Validation fraction");
    sub->add_flag("--freeze-graph", f.freeze_graph, "Extract the graph once per epoch");
  };
  add_train_flags(train, tf);

  // detect
  auto* det = app.add_subcommand("detect", "Score a test CSV with a checkpoint");
  std::string det_ck, det_test, det_out;
  ScoreFlags sf;
  det->add_option("--checkpoint", det_ck, "Checkpoint JSON")->required();
  det->add_option("--test", det_test, "Test CSV")->required();
  det->add_option("--out", det_out, "Run directory")->required();
  det->add_option("--threshold", sf.threshold, "Fixed threshold on the smoothed score");
  det->add_option("--sma", sf.sma, "Moving-average window");
  det->add_option("--grid", sf.grid, "Threshold grid size");
  det->add_flag("--per-sensor", sf.per_sensor, "Add per-sensor score columns");

  // explain
  auto* exp = app.add_subcommand("explain", "Relevance of each sensor for one prediction");
  std::string exp_ck, exp_test, exp_sensor, exp_out;
  std::size_t exp_time = 0;
  exp->add_option("--checkpoint", exp_ck, "Checkpoint JSON")->required();
  exp->add_option("--test", exp_test, "Test CSV")->required();
  exp->add_option("--time", exp_time, "Predicted tick of the test series")->required();
  exp->add_option("--sensor", exp_sensor, "Sensor name or id")->required();
  exp->add_option("--out", exp_out, "Output directory")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sensitivity of F1 to window length or top-k");
  std::string sw_train, sw_test, sw_param, sw_out;
  std::vector<std::size_t> sw_values;
  std::size_t sw_repeats = 1;
  TrainFlags swf;
  sw->add_option("--train", sw_train, "Training CSV")->required();
  sw->add_option("--test", sw_test, "Labeled test CSV")->required();
  sw->add_option("--param", sw_param, "window or topk")->required()->check(CLI::IsMember({"window", "topk"}));
  sw->add_option("--values", sw_values, "Comma-separated values")->required()->delimiter(',');
  sw->add_option("--repeats", sw_repeats, "Repetitions per value");
  sw->add_option("--out", sw_out, "Output directory")->required();
  add_train_flags(sw, swf);

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string syn_spec, syn_out;
  syn->add_option("--spec", syn_spec, "Synthetic spec JSON (default: built-in 10-sensor spec)");
  syn->add_option("--out", syn_out, "Output directory")->required();

  std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  if (profile_opt->count() > 0) g.profile = profile;

  try {
    if (pre->parsed()) {
      if (pre_norm && pre_no_norm) throw ContractError("--normalize and --no-normalize conflict");
      std::optional<bool> norm;
      if (pre_norm) norm = true;
      if (pre_no_norm) norm = false;
      return cmd_preprocess(g, pre_input, pre_out, pre_name, pre_stats, pre_trim, pre_down, norm, pre_no_impute);
    }
    if (train->parsed()) return cmd_train(g, train_csv, train_out, tf);
    if (det->parsed()) return cmd_detect(g, det_ck, det_test, det_out, sf);
    if (exp->parsed()) return cmd_explain(g, exp_ck, exp_test, exp_time, exp_sensor, exp_out);
    if (sw->parsed()) return cmd_sweep(g, sw_train, sw_test, sw_param, sw_values, sw_repeats, sw_out, swf);
    if (syn->parsed()) return cmd_synth(g, syn_spec, syn_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace ecnu::cli
