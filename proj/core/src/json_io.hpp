#pragma once

// JSON mapping of the configuration structs shared by checkpoints and run
// configs. Readers take defaults from `into` for absent keys.

#include <nlohmann/json.hpp>

#include "ecnu/data.hpp"
#include "ecnu/model.hpp"
#include "ecnu/score.hpp"
#include "ecnu/train.hpp"

namespace ecnu::json_io {

using Json = nlohmann::ordered_json;

inline Json model_config(const ModelConfig& c) {
  Json j;
  j["window"] = c.window;
  j["top_k"] = c.top_k;
  j["embed_dim"] = c.embed_dim;
  j["feature_dim"] = c.feature_dim;
  j["ecnum_layers"] = c.ecnum_layers;
  j["ncrm_layers"] = c.ncrm_layers;
  j["aggregate_activation"] = std::string(to_string(c.aggregate_activation));
  j["hidden_activation"] = std::string(to_string(c.hidden_activation));
  j["embed_init_scale"] = c.embed_init_scale;
  return j;
}

inline void read(const Json& j, ModelConfig& into) {
  into.window = j.value("window", into.window);
  into.top_k = j.value("top_k", into.top_k);
  into.embed_dim = j.value("embed_dim", into.embed_dim);
  into.feature_dim = j.value("feature_dim", into.feature_dim);
  into.ecnum_layers = j.value("ecnum_layers", into.ecnum_layers);
  into.ncrm_layers = j.value("ncrm_layers", into.ncrm_layers);
  into.embed_init_scale = j.value("embed_init_scale", into.embed_init_scale);
  if (j.contains("aggregate_activation")) {
    into.aggregate_activation = activation_from_string(j["aggregate_activation"].get<std::string>());
  }
  if (j.contains("hidden_activation")) {
    into.hidden_activation = activation_from_string(j["hidden_activation"].get<std::string>());
  }
}

inline Json train_config(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["val_fraction"] = c.val_fraction;
  j["freeze_graph_per_epoch"] = c.freeze_graph_per_epoch;
  return j;
}

inline void read(const Json& j, TrainConfig& into) {
  into.learning_rate = j.value("learning_rate", into.learning_rate);
  into.beta1 = j.value("beta1", into.beta1);
  into.beta2 = j.value("beta2", into.beta2);
  into.epsilon = j.value("epsilon", into.epsilon);
  into.max_epochs = j.value("max_epochs", into.max_epochs);
  into.patience = j.value("patience", into.patience);
  into.batch_size = j.value("batch_size", into.batch_size);
  into.seed = j.value("seed", into.seed);
  into.val_fraction = j.value("val_fraction", into.val_fraction);
  into.freeze_graph_per_epoch = j.value("freeze_graph_per_epoch", into.freeze_graph_per_epoch);
}

inline Json preprocess_options(const PreprocessOptions& o) {
  Json j;
  j["trim_head"] = o.trim_head;
  j["downsample"] = o.downsample;
  j["impute"] = o.impute;
  j["normalize"] = o.normalize;
  return j;
}

inline void read(const Json& j, PreprocessOptions& into) {
  into.trim_head = j.value("trim_head", into.trim_head);
  into.downsample = j.value("downsample", into.downsample);
  into.impute = j.value("impute", into.impute);
  into.normalize = j.value("normalize", into.normalize);
}

inline Json norm_stats(const NormStats& s) { return Json{{"min", s.min}, {"max", s.max}}; }

inline NormStats read_norm_stats(const Json& j) {
  return {j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
}

inline Json robust_stats(const RobustStats& s) {
  return Json{{"median", s.median}, {"iqr", s.iqr}, {"floor", s.floor}};
}

inline RobustStats read_robust_stats(const Json& j) {
  RobustStats s;
  s.median = j.at("median").get<std::vector<double>>();
  s.iqr = j.at("iqr").get<std::vector<double>>();
  s.floor = j.at("floor").get<double>();
  return s;
}

}  // namespace ecnu::json_io
