#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "causalcast/dataset.hpp"

namespace causalcast::nn {

/// Dense row-major array. Used for B x lookback x F input batches.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  std::size_t size() const { return data.size(); }
  /// Throws NumericalError on NaN/Inf.
  void check_finite() const;
};

/// Layer sizes for features -> GRU -> LSTM -> dense -> 1.
struct NetworkShape {
  std::size_t features = 1;
  std::size_t gru_hidden = 64;
  std::size_t lstm_hidden = 128;
  std::size_t dense = 64;
  std::size_t lookback = 21;
  double dropout = 0.2;

  std::size_t parameter_count() const;
  void validate() const;
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Gate blocks are stacked row-wise: GRU rows are [z; r; h], LSTM rows are
/// [i; f; o; g]. The GRU carries an input-side bias GruB and a
/// recurrent-side bias GruBU; both add to the gate pre-activations.
enum class Block { GruW, GruU, GruB, GruBU, LstmW, LstmU, LstmB, DenseW, DenseB, HeadW, HeadB };
inline constexpr std::size_t kBlockCount = 11;

/// Flat parameter (or gradient) vector with typed views into each block.
/// Storage is allocated on Eigen's alignment boundary so that vectorized
/// kernels see the same block addresses modulo the packet size in every
/// run, which keeps their summation order, and hence results, bit-stable.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(const NetworkShape& shape);

  const NetworkShape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Eigen::Map<Eigen::MatrixXd> block(Block b);
  Eigen::Map<const Eigen::MatrixXd> block(Block b) const;
  std::size_t rows(Block b) const;
  std::size_t cols(Block b) const;
  std::size_t offset(Block b) const;

 private:
  NetworkShape shape_;
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

class RecurrentModel {
 public:
  RecurrentModel() = default;
  /// All parameters zero.
  explicit RecurrentModel(const NetworkShape& shape);
  /// Glorot-uniform weights per gate block; biases zero except the LSTM
  /// forget bias, which starts at 1.
  static RecurrentModel initialized(const NetworkShape& shape, std::uint64_t seed);

  const NetworkShape& shape() const { return params_.shape(); }
  std::size_t parameter_count() const { return params_.size(); }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
};

struct ForwardMode {
  bool train = false;
  std::uint64_t seed = 0;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(std::uint64_t seed) { return {true, seed}; }
};

/// h_t = (1 - z) * h_{t-1} + z * h~, with h~ = tanh(W_h x + U_h (r * h_{t-1}) + b_h).
/// `b` is the total gate bias. x is lookback x F; returns lookback x H.
Eigen::MatrixXd gru_forward(const Eigen::Ref<const Eigen::MatrixXd>& W,
                            const Eigen::Ref<const Eigen::MatrixXd>& U,
                            const Eigen::Ref<const Eigen::VectorXd>& b,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& h0);

struct LstmOutput {
  Eigen::MatrixXd hidden;  // lookback x H
  Eigen::VectorXd cell;    // final cell state
};

LstmOutput lstm_forward(const Eigen::Ref<const Eigen::MatrixXd>& W,
                        const Eigen::Ref<const Eigen::MatrixXd>& U,
                        const Eigen::Ref<const Eigen::VectorXd>& b,
                        const Eigen::Ref<const Eigen::MatrixXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& h0,
                        const Eigen::Ref<const Eigen::VectorXd>& c0);

/// batch has shape {B, lookback, F}; returns B predictions.
Eigen::VectorXd model_forward(const RecurrentModel& model, const Tensor& batch, ForwardMode mode);

struct BackwardResult {
  ParameterSet gradients;
  double loss = 0.0;
  Eigen::VectorXd predictions;
};

/// Mean-squared-error loss and its gradient by backpropagation through time,
/// reusing the dropout masks drawn for `mode`.
BackwardResult backward(const RecurrentModel& model, const Tensor& batch,
                        std::span<const double> targets, ForwardMode mode);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double lr = 1e-3) : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradients);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  /// Index 0 holds the losses of the untrained model; index e is epoch e.
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  /// Replaces the measured validation loss for an epoch (epoch, measured).
  std::function<double(std::size_t, double)> validation_override;
  /// Called after each epoch's update and validation.
  std::function<void(std::size_t, const RecurrentModel&)> on_epoch;
};

/// Seeded shuffle, minibatch Adam, early stopping on validation MSE and
/// restoration of the best epoch's weights.
TrainHistory train(RecurrentModel& model, const LagWindowSet& train_set,
                   const LagWindowSet& validation_set, const TrainConfig& config,
                   const TrainHooks& hooks = {});

/// Eval-mode predictions for every window, evaluated in batches.
std::vector<double> predict(const RecurrentModel& model, const LagWindowSet& windows,
                            std::size_t batch_size = 256);

/// Copies windows[indices] into a {B, lookback, F} tensor.
Tensor gather_batch(const LagWindowSet& windows, std::span<const std::size_t> indices);

}  // namespace causalcast::nn
