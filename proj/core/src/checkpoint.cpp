#include "ecnu/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ecnu/error.hpp"
#include "json_io.hpp"

namespace ecnu {
namespace {

constexpr const char* kFormat = "ecnu-checkpoint";
constexpr int kVersion = 1;

using json_io::Json;

/// Runs `read` and rethrows JSON failures as a LoadError naming `field`.
template <typename F>
auto field(const char* name, F&& read) {
  try {
    return read();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint field '") + name + "': " + e.what());
  } catch (const ContractError& e) {
    throw LoadError(std::string("checkpoint field '") + name + "': " + e.what());
  }
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["model_config"] = json_io::model_config(c.params.config);
  j["train_config"] = json_io::train_config(c.train);
  j["preprocess"] = json_io::preprocess_options(c.preprocess);
  j["n_nodes"] = c.params.n_nodes;
  j["sensor_names"] = c.sensor_names;
  j["norm_stats"] = c.norm ? json_io::norm_stats(*c.norm) : Json(nullptr);
  j["robust_stats"] = json_io::robust_stats(c.robust);
  j["best_epoch"] = c.best_epoch;
  j["best_val_loss"] = std::isfinite(c.best_val_loss) ? Json(c.best_val_loss) : Json(nullptr);
  Json tensors = Json::array();
  for (const auto& [name, t] : c.params.named_parameters()) {
    Json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["data"] = std::vector<double>(t.data().begin(), t.data().end());
    tensors.push_back(std::move(entry));
  }
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string text = checkpoint_to_json(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << text;
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(std::string("checkpoint is not valid JSON (truncated?): ") + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != kFormat) {
    throw LoadError("checkpoint field 'format': expected \"ecnu-checkpoint\"");
  }
  const int version = field("version", [&] { return j.at("version").get<int>(); });
  if (version != kVersion) {
    throw LoadError("checkpoint field 'version': unsupported version " + std::to_string(version));
  }

  Checkpoint c;
  ModelConfig config;
  field("model_config", [&] {
    json_io::read(j.at("model_config"), config);
    return 0;
  });
  field("train_config", [&] {
    json_io::read(j.at("train_config"), c.train);
    return 0;
  });
  field("preprocess", [&] {
    json_io::read(j.at("preprocess"), c.preprocess);
    return 0;
  });
  const auto n_nodes = field("n_nodes", [&] { return j.at("n_nodes").get<std::size_t>(); });
  c.sensor_names = field("sensor_names", [&] { return j.at("sensor_names").get<std::vector<std::string>>(); });
  if (c.sensor_names.size() != n_nodes) {
    throw LoadError("checkpoint field 'sensor_names': " + std::to_string(c.sensor_names.size()) +
                    " names for " + std::to_string(n_nodes) + " nodes");
  }
  if (!j.at("norm_stats").is_null()) {
    c.norm = field("norm_stats", [&] { return json_io::read_norm_stats(j.at("norm_stats")); });
    if (c.norm->min.size() != n_nodes || c.norm->max.size() != n_nodes) {
      throw LoadError("checkpoint field 'norm_stats': expected " + std::to_string(n_nodes) + " sensors");
    }
  }
  c.robust = field("robust_stats", [&] { return json_io::read_robust_stats(j.at("robust_stats")); });
  if (c.robust.median.size() != n_nodes || c.robust.iqr.size() != n_nodes) {
    throw LoadError("checkpoint field 'robust_stats': expected " + std::to_string(n_nodes) + " sensors");
  }
  c.best_epoch = field("best_epoch", [&] { return j.at("best_epoch").get<std::size_t>(); });
  const Json& best = j.at("best_val_loss");
  if (!best.is_null()) c.best_val_loss = field("best_val_loss", [&] { return best.get<double>(); });

  c.params = field("model_config", [&] { return ModelParams::init(config, n_nodes, 0); });
  const auto expected = parameter_shapes(config, n_nodes);
  const Json& tensors = field("tensors", [&] { return std::cref(j.at("tensors")); }).get();
  if (!tensors.is_array() || tensors.size() != expected.size()) {
    throw LoadError("checkpoint field 'tensors': expected " + std::to_string(expected.size()) + " tensors");
  }
  const auto params = c.params.named_parameters();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, shape] = expected[i];
    const std::string where = "tensors." + name;
    const Json& entry = tensors[i];
    const auto stored_name = field(where.c_str(), [&] { return entry.at("name").get<std::string>(); });
    if (stored_name != name) {
      throw LoadError("checkpoint field '" + where + "': found '" + stored_name + "' in its place");
    }
    const auto stored_shape = field(where.c_str(), [&] { return entry.at("shape").get<Shape>(); });
    if (stored_shape != shape) {
      throw LoadError("checkpoint field '" + where + "': shape " + to_string(stored_shape) +
                      " does not match configured " + to_string(shape));
    }
    const auto data = field(where.c_str(), [&] { return entry.at("data").get<std::vector<double>>(); });
    if (data.size() != element_count(shape)) {
      throw LoadError("checkpoint field '" + where + "': " + std::to_string(data.size()) +
                      " values for shape " + to_string(shape));
    }
    auto dst = params[i].second.mutable_data();
    std::copy(data.begin(), data.end(), dst.begin());
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

}  // namespace ecnu
