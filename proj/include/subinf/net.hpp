#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subinf/errors.hpp"
#include "subinf/mathutil.hpp"
#include "subinf/rng.hpp"

namespace subinf {

enum class Activation { relu, tanh };
enum class Head { gaussian, categorical };

// Fully-connected network shape. The gaussian head emits (mean, raw variance)
// and is combined with a learned global noise parameter; the categorical head
// emits one logit per class.
struct Architecture {
  int input_dim = 1;
  std::vector<int> hidden_sizes;
  Head head = Head::gaussian;
  int num_classes = 0;  // categorical head only
  Activation activation = Activation::relu;
  bool augment_square_input = false;  // feed [x, x^2] instead of x

  int effective_input_dim() const { return augment_square_input ? 2 * input_dim : input_dim; }

  int output_dim() const { return head == Head::gaussian ? 2 : num_classes; }

  // Layer widths including input and output: [in, h_1, ..., h_L, out].
  std::vector<int> widths() const {
    std::vector<int> w;
    w.reserve(hidden_sizes.size() + 2);
    w.push_back(effective_input_dim());
    w.insert(w.end(), hidden_sizes.begin(), hidden_sizes.end());
    w.push_back(output_dim());
    return w;
  }

  int num_layers() const { return static_cast<int>(hidden_sizes.size()) + 1; }

  // Total flattened weight count d (weights + biases, all layers).
  Eigen::Index param_count() const {
    const auto w = widths();
    Eigen::Index d = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      d += static_cast<Eigen::Index>(w[l + 1]) * (w[l] + 1);
    return d;
  }

  void validate() const {
    if (input_dim < 1) throw config_error("architecture: input_dim must be >= 1");
    for (int h : hidden_sizes)
      if (h < 1) throw config_error("architecture: hidden sizes must be >= 1");
    if (head == Head::categorical && num_classes < 2)
      throw config_error("architecture: categorical head needs num_classes >= 2");
  }
};

// Flattened network weights plus the auxiliary global-noise parameter.
// Layout per layer: row-major weight matrix (out x in), then bias (out).
struct ParamVector {
  Eigen::VectorXd weights;
  double raw_global_noise = 0.0;

  double global_noise_std() const { return softplus(raw_global_noise); }

  bool all_finite() const { return weights.allFinite() && std::isfinite(raw_global_noise); }

  Eigen::VectorXd to_flat() const {
    Eigen::VectorXd v(weights.size() + 1);
    v.head(weights.size()) = weights;
    v[weights.size()] = raw_global_noise;
    return v;
  }

  static ParamVector from_flat(const Eigen::VectorXd& v) {
    ParamVector p;
    p.weights = v.head(v.size() - 1);
    p.raw_global_noise = v[v.size() - 1];
    return p;
  }
};

// Per-column statistics used to undo standardization in metric reporting.
struct Standardization {
  Eigen::VectorXd input_mean, input_std;
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct Dataset {
  Eigen::MatrixXd inputs;   // N x D
  Eigen::VectorXd targets;  // regression targets
  std::vector<int> labels;  // classification labels
  Standardization standardization;

  Eigen::Index size() const { return inputs.rows(); }
};

struct NetOutput {
  Head head = Head::gaussian;
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd logits;
};

namespace detail {

inline void check_params(const Architecture& arch, const ParamVector& params) {
  const Eigen::Index d = arch.param_count();
  if (params.weights.size() != d)
    throw dimension_error("parameter vector has " + std::to_string(params.weights.size()) +
                          " weights, architecture expects " + std::to_string(d));
  if (!params.all_finite()) throw numerical_error("parameter vector contains non-finite entries");
}

inline Eigen::MatrixXd augment(const Architecture& arch, const Eigen::MatrixXd& X) {
  if (!arch.augment_square_input) return X;
  Eigen::MatrixXd A(X.rows(), 2 * X.cols());
  A.leftCols(X.cols()) = X;
  A.rightCols(X.cols()) = X.array().square();
  return A;
}

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutableRowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Activations after every layer: acts[0] is the (augmented) input,
// acts[l] the output of layer l-1, acts.back() the raw network output.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

inline void forward_into(const Architecture& arch, const ParamVector& params,
                         const Eigen::MatrixXd& X_raw, ForwardCache& cache) {
  const auto w = arch.widths();
  if (X_raw.cols() != arch.input_dim)
    throw dimension_error("input has " + std::to_string(X_raw.cols()) +
                          " columns, architecture expects " + std::to_string(arch.input_dim));
  cache.acts.assign(1, augment(arch, X_raw));
  const double* base = params.weights.data();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l], out = w[l + 1];
    RowMajorMap W(base + offset, out, in);
    offset += static_cast<Eigen::Index>(out) * in;
    Eigen::Map<const Eigen::VectorXd> b(base + offset, out);
    offset += out;
    Eigen::MatrixXd Z = cache.acts.back() * W.transpose();
    Z.rowwise() += b.transpose();
    const bool is_output = (l + 2 == w.size());
    if (!is_output) {
      if (arch.activation == Activation::relu)
        Z = Z.array().max(0.0).matrix();
      else
        Z = Z.array().tanh().matrix();
    }
    cache.acts.push_back(std::move(Z));
  }
}

inline double activation_derivative(Activation act, double a) {
  // Derivative expressed through the activation value itself.
  return act == Activation::relu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Backpropagates d(objective)/d(raw outputs) into the flat weight gradient.
inline void backward_into(const Architecture& arch, const ParamVector& params,
                          const ForwardCache& cache, Eigen::MatrixXd delta,
                          Eigen::VectorXd& grad) {
  const auto w = arch.widths();
  grad.setZero(params.weights.size());
  const double* base = params.weights.data();
  double* gbase = grad.data();

  std::vector<Eigen::Index> offsets(w.size() - 1);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    offsets[l] = offset;
    offset += static_cast<Eigen::Index>(w[l + 1]) * (w[l] + 1);
  }

  for (int l = static_cast<int>(w.size()) - 2; l >= 0; --l) {
    const int in = w[l], out = w[l + 1];
    const Eigen::MatrixXd& H = cache.acts[l];
    MutableRowMajorMap Wg(gbase + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> bg(gbase + offsets[l] + static_cast<Eigen::Index>(out) * in, out);
    Wg = delta.transpose() * H;
    bg = delta.colwise().sum().transpose();
    if (l > 0) {
      RowMajorMap W(base + offsets[l], out, in);
      Eigen::MatrixXd prev = delta * W;
      const Eigen::MatrixXd& A = cache.acts[l];
      for (Eigen::Index r = 0; r < prev.rows(); ++r)
        for (Eigen::Index c = 0; c < prev.cols(); ++c)
          prev(r, c) *= activation_derivative(arch.activation, A(r, c));
      delta = std::move(prev);
    }
  }
}

inline std::vector<Eigen::Index> full_subset(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

// Sorted copy; fixes the summation order regardless of how the caller
// ordered the batch.
inline std::vector<Eigen::Index> sorted_subset(const std::vector<Eigen::Index>& subset,
                                               Eigen::Index n) {
  std::vector<Eigen::Index> idx = subset;
  std::sort(idx.begin(), idx.end());
  if (!idx.empty() && (idx.front() < 0 || idx.back() >= n))
    throw dimension_error("subset index out of range [0, " + std::to_string(n) + ")");
  return idx;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  return out;
}

}  // namespace detail

// Raw network outputs for a batch of inputs (N x output_dim). The gaussian
// head's second column is the raw (pre-softplus) variance output.
inline Eigen::MatrixXd forward_batch(const Architecture& arch, const ParamVector& params,
                                     const Eigen::MatrixXd& X) {
  detail::check_params(arch, params);
  detail::ForwardCache cache;
  detail::forward_into(arch, params, X, cache);
  return cache.acts.back();
}

// Predictive mean and total variance sigma^2(x, w, s) = s^2 + softplus(raw)^2
// for the gaussian head, evaluated over a batch.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gaussian_moments(const Architecture& arch,
                                                                    const ParamVector& params,
                                                                    const Eigen::MatrixXd& X) {
  if (arch.head != Head::gaussian) throw dimension_error("gaussian_moments requires a gaussian head");
  const Eigen::MatrixXd out = forward_batch(arch, params, X);
  const double s = params.global_noise_std();
  Eigen::VectorXd mean(out.rows()), var(out.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    mean[i] = out(i, 0);
    const double sw = softplus(out(i, 1));
    var[i] = s * s + sw * sw;
  }
  return {std::move(mean), std::move(var)};
}

inline NetOutput forward(const Architecture& arch, const ParamVector& params,
                         const Eigen::VectorXd& x) {
  if (x.size() != arch.input_dim)
    throw dimension_error("input has " + std::to_string(x.size()) +
                          " entries, architecture expects " + std::to_string(arch.input_dim));
  const Eigen::MatrixXd out = forward_batch(arch, params, x.transpose());
  NetOutput r;
  r.head = arch.head;
  if (arch.head == Head::gaussian) {
    r.mean = out(0, 0);
    const double s = params.global_noise_std();
    const double sw = softplus(out(0, 1));
    r.variance = s * s + sw * sw;
  } else {
    r.logits = out.row(0).transpose();
    if (!r.logits.allFinite()) throw numerical_error("non-finite logits");
  }
  return r;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

namespace detail {

// Per-point log densities for the rows picked out by `idx` (already sorted).
inline Eigen::VectorXd pointwise_log_likelihood(const Architecture& arch, const ParamVector& params,
                                                const Dataset& data,
                                                const std::vector<Eigen::Index>& idx) {
  const Eigen::MatrixXd X = gather_rows(data.inputs, idx);
  const Eigen::MatrixXd out = forward_batch(arch, params, X);
  Eigen::VectorXd ll(out.rows());
  if (arch.head == Head::gaussian) {
    if (data.targets.size() != data.inputs.rows())
      throw dimension_error("dataset targets/input row mismatch");
    const double s = params.global_noise_std();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double sw = softplus(out(i, 1));
      const double var = s * s + sw * sw;
      ll[i] = log_normal_density(data.targets[idx[static_cast<std::size_t>(i)]], out(i, 0), var);
    }
  } else {
    if (static_cast<Eigen::Index>(data.labels.size()) != data.inputs.rows())
      throw dimension_error("dataset labels/input row mismatch");
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const int y = data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      if (y < 0 || y >= arch.num_classes)
        throw data_error("class label " + std::to_string(y) + " outside [0, " +
                         std::to_string(arch.num_classes) + ")");
      // log softmax_y = logit_y - logsumexp(logits)
      const double m = out.row(i).maxCoeff();
      const double lse = m + std::log((out.row(i).array() - m).exp().sum());
      ll[i] = out(i, y) - lse;
    }
  }
  return ll;
}

inline double sum_checked(const Eigen::VectorXd& ll, const std::vector<Eigen::Index>& idx) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < ll.size(); ++i) {
    if (!std::isfinite(ll[i]))
      throw numerical_error("non-finite log-likelihood at data row " +
                            std::to_string(idx[static_cast<std::size_t>(i)]));
    total += ll[i];
  }
  return total;
}

}  // namespace detail

// Sum of per-point log densities over `subset` (ascending index order).
inline double log_likelihood(const Architecture& arch, const ParamVector& params,
                             const Dataset& data, const std::vector<Eigen::Index>& subset) {
  detail::check_params(arch, params);
  const auto idx = detail::sorted_subset(subset, data.size());
  const Eigen::VectorXd ll = detail::pointwise_log_likelihood(arch, params, data, idx);
  return detail::sum_checked(ll, idx);
}

inline double log_likelihood(const Architecture& arch, const ParamVector& params,
                             const Dataset& data) {
  return log_likelihood(arch, params, data, detail::full_subset(data.size()));
}

struct LikelihoodValueGrad {
  double value = 0.0;
  ParamVector grad;
};

// Log-likelihood and its exact gradient (weights and raw global noise) in a
// single forward/backward pass.
inline LikelihoodValueGrad log_likelihood_with_grad(const Architecture& arch,
                                                    const ParamVector& params, const Dataset& data,
                                                    const std::vector<Eigen::Index>& subset) {
  detail::check_params(arch, params);
  const auto idx = detail::sorted_subset(subset, data.size());
  const Eigen::MatrixXd X = detail::gather_rows(data.inputs, idx);

  detail::ForwardCache cache;
  detail::forward_into(arch, params, X, cache);
  const Eigen::MatrixXd& out = cache.acts.back();

  Eigen::MatrixXd delta(out.rows(), out.cols());
  LikelihoodValueGrad result;
  result.grad.raw_global_noise = 0.0;

  if (arch.head == Head::gaussian) {
    const double s = params.global_noise_std();
    const double ds_draw = sigmoid(params.raw_global_noise);  // d s / d raw
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double y = data.targets[idx[static_cast<std::size_t>(i)]];
      const double mean = out(i, 0);
      const double sw = softplus(out(i, 1));
      const double var = s * s + sw * sw;
      const double ll = log_normal_density(y, mean, var);
      if (!std::isfinite(ll))
        throw numerical_error("non-finite log-likelihood at data row " +
                              std::to_string(idx[static_cast<std::size_t>(i)]));
      result.value += ll;
      const double r = y - mean;
      const double dll_dvar = 0.5 * (r * r / (var * var) - 1.0 / var);
      delta(i, 0) = r / var;
      delta(i, 1) = dll_dvar * 2.0 * sw * sigmoid(out(i, 1));
      result.grad.raw_global_noise += dll_dvar * 2.0 * s * ds_draw;
    }
  } else {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const int y = data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      if (y < 0 || y >= arch.num_classes)
        throw data_error("class label " + std::to_string(y) + " outside [0, " +
                         std::to_string(arch.num_classes) + ")");
      const double m = out.row(i).maxCoeff();
      const double lse = m + std::log((out.row(i).array() - m).exp().sum());
      const double ll = out(i, y) - lse;
      if (!std::isfinite(ll))
        throw numerical_error("non-finite log-likelihood at data row " +
                              std::to_string(idx[static_cast<std::size_t>(i)]));
      result.value += ll;
      delta.row(i) = -(out.row(i).array() - lse).exp();
      delta(i, y) += 1.0;
    }
  }

  detail::backward_into(arch, params, cache, std::move(delta), result.grad.weights);
  return result;
}

inline ParamVector grad_log_likelihood(const Architecture& arch, const ParamVector& params,
                                       const Dataset& data,
                                       const std::vector<Eigen::Index>& subset) {
  return log_likelihood_with_grad(arch, params, data, subset).grad;
}

inline ParamVector grad_log_likelihood(const Architecture& arch, const ParamVector& params,
                                       const Dataset& data) {
  return grad_log_likelihood(arch, params, data, detail::full_subset(data.size()));
}

namespace detail {

// Raw value whose softplus rounds to exactly 1.0, so the initial global
// noise variance s^2 is exactly the unit target.
inline double unit_noise_raw() {
  double r = softplus_inverse(1.0);
  for (int i = 0; i < 8 && softplus(r) != 1.0; ++i)
    r = std::nextafter(r, softplus(r) < 1.0 ? 2.0 : 0.0);
  return r;
}

}  // namespace detail

// Scaled-uniform init (Glorot & Bengio, 2010): weights uniform within
// +-sqrt(6 / (fan_in + fan_out)), biases zero, global noise std 1.
inline ParamVector init_weights(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector p;
  p.weights.resize(arch.param_count());
  Rng rng(seed);
  const auto w = arch.widths();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l], out = w[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(out) * in; ++k)
      p.weights[offset + k] = uniform(rng);
    offset += static_cast<Eigen::Index>(out) * in;
    p.weights.segment(offset, out).setZero();
    offset += out;
  }
  p.raw_global_noise = detail::unit_noise_raw();
  return p;
}

}  // namespace subinf
