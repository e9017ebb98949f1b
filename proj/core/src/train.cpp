#include "ecnu/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "ecnu/error.hpp"

namespace ecnu {

void TrainConfig::validate() const {
  const auto open_unit = [](double x) { return x > 0.0 && x < 1.0; };
  if (!open_unit(learning_rate)) throw ContractError("learning_rate must lie in (0, 1)");
  if (!open_unit(beta1) || !open_unit(beta2)) throw ContractError("Adam betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractError("Adam epsilon must be positive");
  if (patience < 1) throw ContractError("patience must be >= 1");
  if (max_epochs < 1) throw ContractError("max_epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (!open_unit(val_fraction)) throw ContractError("val_fraction must lie in (0, 1)");
}

AdamState AdamState::for_parameters(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config) {
  if (state.first_moment.size() != params.size()) {
    throw ContractError("Adam state tracks " + std::to_string(state.first_moment.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto g = params[p].grad();
    if (g.size() != params[p].size()) throw ContractError("parameter without a gradient buffer");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw TrainingError("non-finite gradient in parameter tensor " + std::to_string(p) +
                            " at element " + std::to_string(i) + " (step " +
                            std::to_string(state.step + 1) + ")");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto data = params[p].mutable_data();
    const auto g = params[p].grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

bool EarlyStopping::observe(double val_loss) {
  ++epochs_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epochs_;
    stale_epochs_ = 0;
    return true;
  }
  ++stale_epochs_;
  return false;
}

double evaluate_loss(const ModelParams& params, const WindowedDataset& data, std::size_t batch_size) {
  if (data.empty()) throw ContractError("cannot evaluate loss on an empty dataset");
  const auto preds = predict_all(params, data, batch_size);
  double acc = 0.0;
  std::vector<double> truth(data.n_sensors());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data.copy_target(i, truth);
    for (std::size_t s = 0; s < truth.size(); ++s) {
      const double d = preds[i][s] - truth[s];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(data.size() * data.n_sensors());
}

FitResult fit(ModelParams initial, const WindowedDataset& train, const WindowedDataset& val,
              const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train.empty() || val.empty()) throw ContractError("training and validation sets must be non-empty");
  if (train.n_sensors() != initial.n_nodes || train.window() != initial.config.window) {
    throw DimensionError("training data does not match the model configuration");
  }
  using Clock = std::chrono::steady_clock;

  ModelParams params = std::move(initial);
  std::vector<Tensor> tensors = params.parameters();
  AdamState adam = AdamState::for_parameters(tensors);
  EarlyStopping stopping(config.patience);
  std::mt19937_64 rng(config.seed ^ 0xD1B54A32D192ED03ULL);

  FitResult result;
  result.params = params.clone();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    Adjacency frozen;
    if (config.freeze_graph_per_epoch) frozen = extract_graph(params.embeddings, params.config.top_k);

    double loss_sum = 0.0;
    try {
      for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, order.size() - first);
        batch.assign(order.begin() + static_cast<std::ptrdiff_t>(first),
                     order.begin() + static_cast<std::ptrdiff_t>(first + count));
        const Adjacency adjacency = config.freeze_graph_per_epoch
                                        ? frozen
                                        : extract_graph(params.embeddings, params.config.top_k);
        Tape tape;
        const Tensor pred = forward(tape, params, stack_inputs(train, batch), adjacency);
        const Tensor loss = ops::mse(tape, pred, stack_targets(train, batch));
        if (!std::isfinite(loss.item())) {
          throw TrainingError("non-finite training loss in epoch " + std::to_string(epoch));
        }
        params.zero_grad();
        tape.backward(loss);
        adam_step(tensors, adam, config);
        loss_sum += loss.item() * static_cast<double>(count);
      }
    } catch (const TrainingError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.val_loss = evaluate_loss(params, val);
    record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (!std::isfinite(record.val_loss)) {
      result.aborted = true;
      result.abort_reason = "non-finite validation loss in epoch " + std::to_string(epoch);
      break;
    }
    if (stopping.observe(record.val_loss)) {
      result.params = params.clone();
      result.best_epoch = epoch;
      result.best_val_loss = record.val_loss;
    }
    if (stopping.should_stop()) break;
  }
  return result;
}

FitResult fit(const WindowedDataset& train, const WindowedDataset& val,
              const ModelConfig& model_config, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  return fit(ModelParams::init(model_config, train.n_sensors(), config.seed), train, val, config,
             on_epoch);
}

}  // namespace ecnu
