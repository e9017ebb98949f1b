#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ecnu/data.hpp"
#include "ecnu/model.hpp"
#include "ecnu/score.hpp"
#include "ecnu/train.hpp"

namespace ecnu {

/// Everything detection and explanation need from a training run. Robust
/// statistics are fitted on the validation-period errors of the saved model.
struct Checkpoint {
  ModelParams params;
  TrainConfig train;
  PreprocessOptions preprocess;
  std::vector<std::string> sensor_names;
  std::optional<NormStats> norm;
  RobustStats robust;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

/// JSON document tagged "ecnu-checkpoint" version 1. Output depends only on
/// the contents, so equal checkpoints serialize to identical bytes.
std::string checkpoint_to_json(const Checkpoint& checkpoint);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws LoadError naming the offending field for truncated files, unknown
/// versions and tensors whose shape disagrees with the stored configuration.
Checkpoint checkpoint_from_json(const std::string& text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecnu
