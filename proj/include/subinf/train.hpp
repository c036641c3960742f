#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "subinf/net.hpp"

namespace subinf {

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int num_steps = 1000;        // T_steps
  int capture_frequency = 1;   // c: SWA moment update every c steps
  int max_deviation_cols = 20; // M
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate(Eigen::Index num_rows) const {
    if (!(learning_rate >= 0.0)) throw config_error("train: learning_rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw config_error("train: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw config_error("train: weight_decay must be >= 0");
    if (num_steps < 0) throw config_error("train: num_steps must be >= 0");
    if (capture_frequency < 1) throw config_error("train: capture_frequency must be >= 1");
    if (max_deviation_cols < 1) throw config_error("train: max_deviation_cols must be >= 1");
    if (batch_size < 1 || batch_size > num_rows)
      throw config_error("train: batch_size must be in [1, N=" + std::to_string(num_rows) + "]");
  }
};

struct TraceEntry {
  int step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

// Most recent SGD-iterate deviations from the running average, oldest
// evicted first once max_cols is reached.
class DeviationBuffer {
 public:
  DeviationBuffer() = default;
  explicit DeviationBuffer(int max_cols) : max_cols_(max_cols) {
    if (max_cols < 1) throw config_error("deviation buffer needs max_cols >= 1");
  }

  void push(Eigen::VectorXd deviation) {
    if (static_cast<int>(columns_.size()) == max_cols_) columns_.erase(columns_.begin());
    columns_.push_back(std::move(deviation));
    ++n_captured_;
  }

  int size() const { return static_cast<int>(columns_.size()); }
  long n_captured() const { return n_captured_; }
  int max_cols() const { return max_cols_; }
  const std::vector<Eigen::VectorXd>& columns() const { return columns_; }

  // Deviations as rows (size x d), oldest first.
  Eigen::MatrixXd matrix() const {
    if (columns_.empty()) throw data_error("deviation buffer is empty");
    Eigen::MatrixXd A(columns_.size(), columns_.front().size());
    for (std::size_t i = 0; i < columns_.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = columns_[i];
    return A;
  }

 private:
  std::vector<Eigen::VectorXd> columns_;
  int max_cols_ = 20;
  long n_captured_ = 0;
};

struct TrainResult {
  ParamVector params;
  std::vector<TraceEntry> trace;
};

struct SwaResult {
  ParamVector w_swa;
  DeviationBuffer buffer;
  ParamVector pretrained_start;
  std::vector<TraceEntry> trace;
};

namespace detail {

// Sequential passes over a reshuffled index order each epoch.
class BatchScheduler {
 public:
  BatchScheduler(Eigen::Index n, int batch_size) : batch_size_(batch_size) {
    order_ = full_subset(n);
    pos_ = order_.size();  // trigger a shuffle on first use
  }

  std::vector<Eigen::Index> next(Rng& rng) {
    if (pos_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng);
      pos_ = 0;
    }
    const std::size_t take = std::min<std::size_t>(batch_size_, order_.size() - pos_);
    std::vector<Eigen::Index> batch(order_.begin() + pos_, order_.begin() + pos_ + take);
    pos_ += take;
    return batch;
  }

 private:
  std::vector<Eigen::Index> order_;
  std::size_t pos_ = 0;
  std::size_t batch_size_;
};

struct SgdState {
  Eigen::VectorXd velocity_w;
  double velocity_raw = 0.0;
};

// Mini-batch loss: mean negative log-likelihood plus L2 penalty on the
// network weights (the global-noise parameter is not decayed).
inline double sgd_step(const Architecture& arch, ParamVector& params, const Dataset& data,
                       const std::vector<Eigen::Index>& batch, const TrainConfig& cfg,
                       SgdState& state) {
  const auto vg = log_likelihood_with_grad(arch, params, data, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double loss = -vg.value * inv_b + 0.5 * cfg.weight_decay * params.weights.squaredNorm();

  Eigen::VectorXd grad_w = -inv_b * vg.grad.weights + cfg.weight_decay * params.weights;
  const double grad_raw = -inv_b * vg.grad.raw_global_noise;

  state.velocity_w = cfg.momentum * state.velocity_w - cfg.learning_rate * grad_w;
  state.velocity_raw = cfg.momentum * state.velocity_raw - cfg.learning_rate * grad_raw;
  params.weights += state.velocity_w;
  params.raw_global_noise += state.velocity_raw;
  return loss;
}

}  // namespace detail

// Plain SGD with heavy-ball momentum. Deterministic given the seed.
inline TrainResult train_sgd(const Architecture& arch, const ParamVector& params0,
                             const Dataset& data, const TrainConfig& cfg) {
  arch.validate();
  cfg.validate(data.size());
  detail::check_params(arch, params0);

  TrainResult result;
  result.params = params0;
  Rng rng(cfg.seed);
  detail::BatchScheduler scheduler(data.size(), cfg.batch_size);
  detail::SgdState state;
  state.velocity_w = Eigen::VectorXd::Zero(params0.weights.size());

  result.trace.reserve(cfg.num_steps);
  for (int step = 1; step <= cfg.num_steps; ++step) {
    const auto batch = scheduler.next(rng);
    double loss;
    try {
      loss = detail::sgd_step(arch, result.params, data, batch, cfg, state);
    } catch (const numerical_error& e) {
      throw numerical_error("training failed at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss))
      throw numerical_error("non-finite training loss at step " + std::to_string(step));
    result.trace.push_back({step, loss, cfg.learning_rate});
  }
  return result;
}

// Constant-learning-rate averaging phase. Every capture_frequency steps the
// running average is updated as (n*avg + w_i) / (n+1) and the deviation of
// the iterate from the just-updated average is appended to the buffer.
inline SwaResult run_swa(const Architecture& arch, const ParamVector& pretrained,
                         const Dataset& data, const TrainConfig& cfg,
                         const std::function<void(int, const ParamVector&)>& on_capture = {}) {
  arch.validate();
  cfg.validate(data.size());
  detail::check_params(arch, pretrained);

  SwaResult result;
  result.pretrained_start = pretrained;
  result.buffer = DeviationBuffer(cfg.max_deviation_cols);

  ParamVector params = pretrained;
  Eigen::VectorXd swa_flat = pretrained.to_flat();

  Rng rng(cfg.seed);
  detail::BatchScheduler scheduler(data.size(), cfg.batch_size);
  detail::SgdState state;
  state.velocity_w = Eigen::VectorXd::Zero(pretrained.weights.size());

  result.trace.reserve(cfg.num_steps);
  for (int step = 1; step <= cfg.num_steps; ++step) {
    const auto batch = scheduler.next(rng);
    double loss;
    try {
      loss = detail::sgd_step(arch, params, data, batch, cfg, state);
    } catch (const numerical_error& e) {
      throw numerical_error("training failed at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss))
      throw numerical_error("non-finite training loss at step " + std::to_string(step));
    result.trace.push_back({step, loss, cfg.learning_rate});

    if (step % cfg.capture_frequency == 0) {
      const double n = static_cast<double>(step / cfg.capture_frequency);
      swa_flat = (n * swa_flat + params.to_flat()) / (n + 1.0);
      result.buffer.push(params.weights - swa_flat.head(params.weights.size()));
      if (on_capture) on_capture(step, params);
    }
  }
  result.w_swa = ParamVector::from_flat(swa_flat);
  return result;
}

}  // namespace subinf
