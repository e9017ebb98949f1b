#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ecnu/data.hpp"
#include "ecnu/model.hpp"

namespace ecnu {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  /// Extract the graph once per epoch instead of on every forward pass.
  bool freeze_graph_per_epoch = false;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;

  static AdamState for_parameters(std::span<const Tensor> params);
};

/// Bias-corrected Adam update using the grads held by `params`.
/// Throws TrainingError, before touching anything, if a grad is not finite.
void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config);

/// Patience rule over a sequence of validation losses.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `val_loss` is a new best.
  bool observe(double val_loss);
  bool should_stop() const { return stale_epochs_ >= patience_; }
  double best() const { return best_; }
  /// 1-based epoch of the best loss; 0 before any observation.
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t stale_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  ModelParams params;  // snapshot with the lowest validation loss
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool aborted = false;
  std::string abort_reason;
};

/// Mean squared error per element over every window of `data`.
double evaluate_loss(const ModelParams& params, const WindowedDataset& data,
                     std::size_t batch_size = 64);

/// Trains from `initial` with mini-batch Adam and early stopping.
FitResult fit(ModelParams initial, const WindowedDataset& train, const WindowedDataset& val,
              const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Initializes parameters from `config.seed` and trains.
FitResult fit(const WindowedDataset& train, const WindowedDataset& val,
              const ModelConfig& model_config, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace ecnu
