#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "causalcast/error.hpp"
#include "causalcast/nn.hpp"
#include "causalcast/seed.hpp"

namespace causalcast::nn {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradients) {
  if (params.size() != gradients.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeError, "Adam state, parameters and gradients must have equal sizes");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = gradients[k];
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::ConfigError, "batch_size must be >= 1");
  if (patience < 1) throw Error(ErrorCode::ConfigError, "patience must be >= 1");
  if (max_epochs < 1) throw Error(ErrorCode::ConfigError, "max_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::ConfigError, "learning_rate must be > 0");
}

Tensor gather_batch(const LagWindowSet& windows, std::span<const std::size_t> indices) {
  const std::size_t per = windows.lookback * windows.feature_count();
  std::vector<double> data;
  data.reserve(indices.size() * per);
  for (const auto i : indices) {
    const auto w = windows.window(i);
    data.insert(data.end(), w.begin(), w.end());
  }
  return {{indices.size(), windows.lookback, windows.feature_count()}, std::move(data)};
}

std::vector<double> predict(const RecurrentModel& model, const LagWindowSet& windows, std::size_t batch_size) {
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  std::vector<double> out;
  out.reserve(windows.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto y = model_forward(model, gather_batch(windows, idx), ForwardMode::eval());
    out.insert(out.end(), y.data(), y.data() + y.size());
  }
  return out;
}

namespace {

double mse(const RecurrentModel& model, const LagWindowSet& set) {
  const auto pred = predict(model, set);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - set.targets[i]) * (pred[i] - set.targets[i]);
  return s / double(pred.size());
}

void check_windows(const RecurrentModel& model, const LagWindowSet& set, const char* name) {
  if (set.size() == 0) throw Error(ErrorCode::EmptySplit, std::string(name) + " set is empty");
  if (set.feature_count() != model.shape().features || set.lookback != model.shape().lookback) {
    throw Error(ErrorCode::ShapeError, std::string(name) + " windows do not match the model shape");
  }
}

}  // namespace

TrainHistory train(RecurrentModel& model, const LagWindowSet& train_set, const LagWindowSet& validation_set,
                   const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  check_windows(model, train_set, "training");
  check_windows(model, validation_set, "validation");

  TrainHistory history;
  history.train_loss.push_back(mse(model, train_set));
  double initial = mse(model, validation_set);
  if (hooks.validation_override) initial = hooks.validation_override(0, initial);
  history.validation_loss.push_back(initial);
  double best = history.validation_loss[0];
  std::vector<double> best_params(model.params().values().begin(), model.params().values().end());

  AdamState adam(model.parameter_count(), config.learning_rate);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle"));
  const std::uint64_t dropout_root = derive_seed(config.seed, "dropout");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> targets;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    try {
      std::size_t batch_index = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + begin, end - begin);
        targets.clear();
        for (const auto i : idx) targets.push_back(train_set.targets[i]);
        const auto mode = ForwardMode::training(derive_seed(dropout_root, (epoch << 32) + batch_index));
        const auto result = backward(model, gather_batch(train_set, idx), targets, mode);
        loss_sum += result.loss * double(idx.size());
        adam_step(adam, model.params().values(), result.gradients.values());
      }
    } catch (const Error& e) {
      throw Error(e.code(), "epoch " + std::to_string(epoch) + ": " + e.detail());
    }
    history.train_loss.push_back(loss_sum / double(order.size()));

    double val = mse(model, validation_set);
    if (hooks.validation_override) val = hooks.validation_override(epoch, val);
    if (!std::isfinite(val)) {
      throw Error(ErrorCode::NumericalError, "epoch " + std::to_string(epoch) + ": validation loss is not finite");
    }
    history.validation_loss.push_back(val);
    history.epochs_run = epoch;
    if (val < best) {
      best = val;
      history.best_epoch = epoch;
      std::copy(model.params().values().begin(), model.params().values().end(), best_params.begin());
      stale = 0;
    } else {
      ++stale;
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, model);
    if (stale >= config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  std::copy(best_params.begin(), best_params.end(), model.params().values().begin());
  return history;
}

}  // namespace causalcast::nn
