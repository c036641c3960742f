#pragma once

#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "subinf/inference.hpp"

namespace subinf {

// Moment-matched predictive summary of the posterior sample mixture.
struct PredictiveSummary {
  Head head = Head::gaussian;
  Eigen::VectorXd mean;           // regression: mixture mean per test point
  Eigen::VectorXd variance;       // regression: mixture variance per test point
  Eigen::MatrixXd sample_means;   // regression: N x J per-sample mean functions
  Eigen::MatrixXd probabilities;  // classification: N x C averaged class probabilities
  int clamped = 0;                // variance-floor applications
};

namespace detail {

// Mixture moments from per-sample means and variances (N x J each):
// mean = avg_j mu_j, variance = avg_j var_j + Var_j(mu_j). The variance
// decomposition keeps a single-sample mixture exact and isolates the
// cancellation-prone term, which is clamped at zero.
inline void mixture_moments(const Eigen::MatrixXd& mus, const Eigen::MatrixXd& vars,
                            double var_floor, Eigen::VectorXd& mean, Eigen::VectorXd& variance,
                            int& clamped) {
  const Eigen::Index n = mus.rows(), J = mus.cols();
  mean.resize(n);
  variance.resize(n);
  clamped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = mus.row(i).mean();
    const double mean_var = vars.row(i).mean();
    const double mean_sq = mus.row(i).array().square().sum() / static_cast<double>(J);
    const double var_of_means = std::max(0.0, mean_sq - m * m);
    double v = mean_var + var_of_means;
    if (v <= 0.0) {
      v = var_floor;
      ++clamped;
    }
    mean[i] = m;
    variance[i] = v;
  }
}

}  // namespace detail

// Monte Carlo model average over the posterior samples: a gaussian mixture
// summarized by its first two moments for regression, averaged class
// probabilities for classification.
inline PredictiveSummary bma_predict(const SubspacePosterior& p, const SampleSet& samples,
                                     const Eigen::MatrixXd& test_inputs) {
  if (samples.num_samples() < 1) throw dimension_error("bma_predict needs at least one sample");
  if (samples.K() != p.subspace.basis.cols())
    throw dimension_error("sample coordinates have K = " + std::to_string(samples.K()) +
                          ", subspace has K = " + std::to_string(p.subspace.basis.cols()));

  const int J = samples.num_samples();
  const Eigen::Index n = test_inputs.rows();
  PredictiveSummary out;
  out.head = p.arch.head;

  if (p.arch.head == Head::gaussian) {
    Eigen::MatrixXd mus(n, J), vars(n, J);
    for (int j = 0; j < J; ++j) {
      const ParamVector w = embed(p.subspace, samples.samples.row(j).transpose());
      auto [mu, var] = gaussian_moments(p.arch, w, test_inputs);
      mus.col(j) = mu;
      vars.col(j) = var;
    }
    const double s = p.subspace.shift_noise_std();
    detail::mixture_moments(mus, vars, s * s * 1e-6, out.mean, out.variance, out.clamped);
    out.sample_means = std::move(mus);
    if (out.clamped > 0)
      std::cerr << "warning: clamped " << out.clamped
                << " non-positive mixture variances to the noise floor\n";
  } else {
    out.probabilities = Eigen::MatrixXd::Zero(n, p.arch.num_classes);
    for (int j = 0; j < J; ++j) {
      const ParamVector w = embed(p.subspace, samples.samples.row(j).transpose());
      const Eigen::MatrixXd logits = forward_batch(p.arch, w, test_inputs);
      for (Eigen::Index i = 0; i < n; ++i)
        out.probabilities.row(i) += softmax(logits.row(i).transpose()).transpose();
    }
    out.probabilities /= static_cast<double>(J);
  }
  return out;
}

struct Metrics {
  double nll_norm = std::numeric_limits<double>::quiet_NaN();
  double nll_unnorm = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double coverage95 = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double z_95 = 1.959964;  // two-sided 95% normal quantile

// Regression metrics under the gaussian estimator N(y | mean, variance).
// nll_norm is in standardized target units; nll_unnorm undoes the target
// standardization (each log-density shifted by -log target_std); rmse is in
// original target units.
inline Metrics evaluate(const PredictiveSummary& summary, const Eigen::VectorXd& targets,
                        const Standardization& standardization) {
  if (summary.head != Head::gaussian)
    throw dimension_error("regression evaluate requires a gaussian-head summary");
  if (summary.mean.size() != targets.size())
    throw dimension_error("summary has " + std::to_string(summary.mean.size()) +
                          " points, targets have " + std::to_string(targets.size()));
  const Eigen::Index n = targets.size();
  Metrics m;
  double ll = 0.0, sq = 0.0;
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ll += log_normal_density(targets[i], summary.mean[i], summary.variance[i]);
    const double r = targets[i] - summary.mean[i];
    sq += r * r;
    if (std::abs(r) <= z_95 * std::sqrt(summary.variance[i])) ++covered;
  }
  m.nll_norm = -ll / static_cast<double>(n);
  m.nll_unnorm = m.nll_norm + std::log(standardization.target_std);
  m.rmse = std::sqrt(sq / static_cast<double>(n)) * standardization.target_std;
  m.coverage95 = static_cast<double>(covered) / static_cast<double>(n);
  return m;
}

inline Metrics evaluate(const PredictiveSummary& summary, const std::vector<int>& labels) {
  if (summary.head != Head::categorical)
    throw dimension_error("classification evaluate requires a categorical-head summary");
  if (summary.probabilities.rows() != static_cast<Eigen::Index>(labels.size()))
    throw dimension_error("summary/label length mismatch");
  Metrics m;
  double ll = 0.0;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < summary.probabilities.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= summary.probabilities.cols()) throw data_error("label out of range");
    ll += std::log(summary.probabilities(i, y));
    Eigen::Index argmax;
    summary.probabilities.row(i).maxCoeff(&argmax);
    if (argmax == y) ++correct;
  }
  m.nll_norm = -ll / static_cast<double>(summary.probabilities.rows());
  m.nll_unnorm = m.nll_norm;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(summary.probabilities.rows());
  return m;
}

}  // namespace subinf
