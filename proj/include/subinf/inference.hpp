#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "subinf/posterior.hpp"

namespace subinf {

struct ChainConfig {
  int num_samples = 30;  // J, kept samples
  int burn_in = 500;
  int thinning = 1;
  std::uint64_t seed = 0;
  int max_shrink_iters = 1000;

  void validate() const {
    if (num_samples < 1) throw config_error("chain: num_samples must be >= 1");
    if (burn_in < 0) throw config_error("chain: burn_in must be >= 0");
    if (thinning < 1) throw config_error("chain: thinning must be >= 1");
    if (max_shrink_iters < 1) throw config_error("chain: max_shrink_iters must be >= 1");
  }
};

enum class SampleProvenance { ess, vi };

struct SampleSet {
  Eigen::MatrixXd samples;         // J x K
  Eigen::VectorXd log_posteriors;  // J entries; empty when not evaluated
  SampleProvenance provenance = SampleProvenance::ess;

  int num_samples() const { return static_cast<int>(samples.rows()); }
  int K() const { return static_cast<int>(samples.cols()); }
};

struct EssStepResult {
  Eigen::VectorXd z;
  double loglik = 0.0;  // loglik at the accepted state
  int n_shrinks = 0;
};

// One elliptical slice update for a zero-mean gaussian prior with std
// prior_std (Murray, Adams & MacKay, AISTATS 2010). `loglik` must be the
// tempered log-likelihood term only: the prior enters through the ellipse.
// `loglik_z` is the current state's cached value.
template <class LogLik>
EssStepResult ess_step(const Eigen::VectorXd& z, double loglik_z, LogLik&& loglik,
                       double prior_std, Rng& rng, int max_shrink_iters = 1000) {
  constexpr double tau = 6.283185307179586477;
  const Eigen::VectorXd nu = normal_vector(rng, z.size(), prior_std);
  const double log_y = loglik_z + std::log(uniform_real(rng));
  double theta = uniform_real(rng, 0.0, tau);
  double theta_min = theta - tau;
  double theta_max = theta;

  EssStepResult result;
  result.n_shrinks = 0;
  while (true) {
    result.z = std::cos(theta) * z + std::sin(theta) * nu;
    result.loglik = loglik(result.z);
    if (result.loglik > log_y) return result;
    if (result.n_shrinks >= max_shrink_iters)
      throw numerical_error("elliptical slice bracket failed to shrink after " +
                            std::to_string(max_shrink_iters) +
                            " rejections; log-likelihood is likely NaN");
    if (theta < 0.0)
      theta_min = theta;
    else
      theta_max = theta;
    theta = uniform_real(rng, theta_min, theta_max);
    ++result.n_shrinks;
  }
}

template <class LogLik>
EssStepResult ess_step(const Eigen::VectorXd& z, LogLik&& loglik, double prior_std, Rng& rng,
                       int max_shrink_iters = 1000) {
  const double loglik_z = loglik(z);
  return ess_step(z, loglik_z, loglik, prior_std, rng, max_shrink_iters);
}

// Generic chain driver: burn-in, then keep every thinning-th state.
template <class LogLik>
std::pair<Eigen::MatrixXd, Eigen::VectorXd> run_ess_chain(LogLik&& loglik,
                                                          const Eigen::VectorXd& z0,
                                                          double prior_std,
                                                          const ChainConfig& cfg) {
  cfg.validate();
  if (!z0.allFinite()) throw numerical_error("chain start is not finite");
  Rng rng(cfg.seed);
  Eigen::VectorXd z = z0;
  double cur = loglik(z);

  for (int i = 0; i < cfg.burn_in; ++i) {
    EssStepResult r = ess_step(z, cur, loglik, prior_std, rng, cfg.max_shrink_iters);
    z = std::move(r.z);
    cur = r.loglik;
  }

  Eigen::MatrixXd samples(cfg.num_samples, z0.size());
  Eigen::VectorXd logliks(cfg.num_samples);
  for (int j = 0; j < cfg.num_samples; ++j) {
    for (int t = 0; t < cfg.thinning; ++t) {
      EssStepResult r = ess_step(z, cur, loglik, prior_std, rng, cfg.max_shrink_iters);
      z = std::move(r.z);
      cur = r.loglik;
    }
    samples.row(j) = z;
    logliks[j] = cur;
  }
  return {std::move(samples), std::move(logliks)};
}

// Elliptical slice sampling over the subspace posterior, started at z0
// (the subspace origin, i.e. the averaged solution, unless stated).
inline SampleSet run_ess(const SubspacePosterior& p, const Eigen::VectorXd& z0,
                         const ChainConfig& cfg) {
  p.validate();
  check_coords(p, z0);
  auto loglik = [&p](const Eigen::VectorXd& z) { return tempered_log_likelihood(p, z); };
  auto [samples, logliks] = run_ess_chain(loglik, z0, p.prior_std, cfg);

  SampleSet set;
  set.provenance = SampleProvenance::ess;
  set.samples = std::move(samples);
  set.log_posteriors.resize(cfg.num_samples);
  for (int j = 0; j < cfg.num_samples; ++j)
    set.log_posteriors[j] = logliks[j] + log_prior(p, set.samples.row(j).transpose());
  return set;
}

inline SampleSet run_ess(const SubspacePosterior& p, const ChainConfig& cfg) {
  return run_ess(p, Eigen::VectorXd::Zero(p.subspace.basis.cols()), cfg);
}

struct VIConfig {
  int num_steps = 5000;
  double learning_rate = 0.01;
  int mc_samples = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_steps < 0) throw config_error("vi: num_steps must be >= 0");
    if (!(learning_rate > 0.0)) throw config_error("vi: learning_rate must be > 0");
    if (mc_samples < 1) throw config_error("vi: mc_samples must be >= 1");
  }
};

// Fully-factorized gaussian variational family, std = softplus(raw_std).
struct VIPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd raw_std;

  Eigen::VectorXd stds() const {
    Eigen::VectorXd s(raw_std.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = softplus(raw_std[i]);
    return s;
  }
};

struct VIResult {
  VIPosterior q;
  std::vector<double> elbo_trace;
};

// KL( N(mean, diag stds^2) || N(0, prior_std^2 I) ), closed form.
inline double gaussian_kl(const Eigen::VectorXd& mean, const Eigen::VectorXd& stds,
                          double prior_std) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    kl += std::log(prior_std / stds[i]) +
          (stds[i] * stds[i] + mean[i] * mean[i]) / (2.0 * prior_std * prior_std) - 0.5;
  return kl;
}

struct VIObjective {
  double elbo = 0.0;
  Eigen::VectorXd grad_mean;
  Eigen::VectorXd grad_raw_std;
};

// Reparameterized ELBO estimate and its exact gradient for a fixed epsilon
// batch (rows are standard-normal draws): z_k = mean + stds .* eps_k.
template <class LogLikGrad>
VIObjective vi_objective(const VIPosterior& q, const Eigen::MatrixXd& eps, LogLikGrad&& loglik_grad,
                         double prior_std) {
  const Eigen::Index K = q.mean.size();
  const Eigen::VectorXd stds = q.stds();
  VIObjective obj;
  obj.grad_mean = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd grad_std = Eigen::VectorXd::Zero(K);
  double value = 0.0;

  for (Eigen::Index k = 0; k < eps.rows(); ++k) {
    const Eigen::VectorXd z = q.mean + stds.cwiseProduct(eps.row(k).transpose());
    auto [ll, g] = loglik_grad(z);
    value += ll;
    obj.grad_mean += g;
    grad_std += g.cwiseProduct(eps.row(k).transpose());
  }
  const double inv = 1.0 / static_cast<double>(eps.rows());
  value *= inv;
  obj.grad_mean *= inv;
  grad_std *= inv;

  obj.elbo = value - gaussian_kl(q.mean, stds, prior_std);
  const double p2 = prior_std * prior_std;
  obj.grad_raw_std.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) {
    obj.grad_mean[i] -= q.mean[i] / p2;                          // d KL / d mean
    const double dkl_dstd = -1.0 / stds[i] + stds[i] / p2;       // d KL / d std
    obj.grad_raw_std[i] = (grad_std[i] - dkl_dstd) * sigmoid(q.raw_std[i]);
  }
  return obj;
}

// Stochastic gradient ascent on the ELBO with per-coordinate adaptive steps
// (first/second moment estimates with decay 0.9/0.999). The step size is
// held constant for the first half of the run and decayed linearly to zero
// afterwards; the returned parameters are the tail average over the final
// fifth of the steps, which removes the stationary optimizer wander.
template <class LogLikGrad>
VIResult fit_vi_core(LogLikGrad&& loglik_grad, int K, double prior_std, const VIConfig& cfg) {
  cfg.validate();
  VIResult result;
  result.q.mean = Eigen::VectorXd::Zero(K);
  // start narrow inside the prior to keep early ELBO estimates stable
  result.q.raw_std = Eigen::VectorXd::Constant(K, softplus_inverse(0.1 * prior_std));

  const double beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2 * K), v = Eigen::VectorXd::Zero(2 * K);
  Rng rng(cfg.seed);

  const int tail_start = cfg.num_steps - std::max(1, cfg.num_steps / 5) + 1;
  Eigen::VectorXd tail_mean = Eigen::VectorXd::Zero(K), tail_raw = Eigen::VectorXd::Zero(K);
  long tail_count = 0;

  result.elbo_trace.reserve(cfg.num_steps);
  for (int step = 1; step <= cfg.num_steps; ++step) {
    Eigen::MatrixXd eps(cfg.mc_samples, K);
    for (Eigen::Index i = 0; i < eps.rows(); ++i) eps.row(i) = normal_vector(rng, K);
    const VIObjective obj = vi_objective(result.q, eps, loglik_grad, prior_std);
    if (!std::isfinite(obj.elbo))
      throw numerical_error("non-finite ELBO at step " + std::to_string(step));
    result.elbo_trace.push_back(obj.elbo);

    const double progress = static_cast<double>(step) / cfg.num_steps;
    const double lr = cfg.learning_rate * (progress <= 0.5 ? 1.0 : 2.0 * (1.0 - progress));

    Eigen::VectorXd g(2 * K);
    g.head(K) = obj.grad_mean;
    g.tail(K) = obj.grad_raw_std;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (Eigen::Index i = 0; i < K; ++i) {
      result.q.mean[i] += lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_hat);
      result.q.raw_std[i] += lr * (m[K + i] / bc1) / (std::sqrt(v[K + i] / bc2) + eps_hat);
    }
    if (step >= tail_start) {
      tail_mean += result.q.mean;
      tail_raw += result.q.raw_std;
      ++tail_count;
    }
  }
  if (tail_count > 0) {
    result.q.mean = tail_mean / static_cast<double>(tail_count);
    result.q.raw_std = tail_raw / static_cast<double>(tail_count);
  }
  return result;
}

// Variational fit of the tempered subspace posterior.
inline VIResult fit_vi(const SubspacePosterior& p, const VIConfig& cfg) {
  p.validate();
  auto loglik_grad = [&p](const Eigen::VectorXd& z) {
    return std::pair<double, Eigen::VectorXd>(tempered_log_likelihood(p, z),
                                              grad_tempered_log_likelihood(p, z));
  };
  return fit_vi_core(loglik_grad, static_cast<int>(p.subspace.basis.cols()), p.prior_std, cfg);
}

// J i.i.d. reparameterized draws from the fitted family.
inline SampleSet sample_vi(const VIPosterior& q, int num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw config_error("sample_vi: num_samples must be >= 1");
  const Eigen::Index K = q.mean.size();
  const Eigen::VectorXd stds = q.stds();
  Rng rng(seed);
  SampleSet set;
  set.provenance = SampleProvenance::vi;
  set.samples.resize(num_samples, K);
  for (int j = 0; j < num_samples; ++j)
    set.samples.row(j) = q.mean + stds.cwiseProduct(normal_vector(rng, K));
  return set;
}

inline SampleSet sample_vi(const VIPosterior& q, int num_samples, std::uint64_t seed,
                           const SubspacePosterior& p) {
  SampleSet set = sample_vi(q, num_samples, seed);
  set.log_posteriors.resize(num_samples);
  for (int j = 0; j < num_samples; ++j)
    set.log_posteriors[j] = log_posterior(p, set.samples.row(j).transpose());
  return set;
}

}  // namespace subinf
