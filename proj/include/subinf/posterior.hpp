#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "subinf/subspace.hpp"

namespace subinf {

// Tempered log-posterior over subspace coordinates z: the likelihood term is
// scaled by 1/temperature and combined with an isotropic gaussian prior
// N(0, prior_std^2 I). Unnormalized.
struct SubspacePosterior {
  Subspace subspace;
  Architecture arch;
  Dataset data;
  double temperature = 1.0;
  double prior_std = 1.0;
  // Rows per likelihood chunk when summing the full batch; affects memory
  // only, not the result (to rounding).
  Eigen::Index likelihood_batch_rows = 512;

  void validate() const {
    if (!(temperature > 0.0)) throw config_error("posterior: temperature must be > 0");
    if (!(prior_std > 0.0)) throw config_error("posterior: prior_std must be > 0");
    if (data.size() < 1) throw config_error("posterior: dataset is empty");
    if (likelihood_batch_rows < 1) throw config_error("posterior: batch rows must be >= 1");
  }
};

inline void check_coords(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  if (z.size() != p.subspace.basis.cols())
    throw dimension_error("coordinate vector has " + std::to_string(z.size()) +
                          " entries, subspace has K = " + std::to_string(p.subspace.basis.cols()));
}

inline double log_prior(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  check_coords(p, z);
  const double k = static_cast<double>(z.size());
  return -0.5 * k * ln_2pi - k * std::log(p.prior_std) -
         0.5 * z.squaredNorm() / (p.prior_std * p.prior_std);
}

inline Eigen::VectorXd grad_log_prior(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  check_coords(p, z);
  return -z / (p.prior_std * p.prior_std);
}

// (1/T) * log p(D | z), the full-batch likelihood summed over row chunks.
inline double tempered_log_likelihood(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  check_coords(p, z);
  const ParamVector w = embed(p.subspace, z);
  const Eigen::Index n = p.data.size();
  double total = 0.0;
  for (Eigen::Index start = 0; start < n; start += p.likelihood_batch_rows) {
    const Eigen::Index stop = std::min(n, start + p.likelihood_batch_rows);
    std::vector<Eigen::Index> chunk;
    chunk.reserve(static_cast<std::size_t>(stop - start));
    for (Eigen::Index i = start; i < stop; ++i) chunk.push_back(i);
    total += log_likelihood(p.arch, w, p.data, chunk);
  }
  return total / p.temperature;
}

inline Eigen::VectorXd grad_tempered_log_likelihood(const SubspacePosterior& p,
                                                    const Eigen::VectorXd& z) {
  check_coords(p, z);
  const ParamVector w = embed(p.subspace, z);
  const Eigen::Index n = p.data.size();
  const Eigen::Index d = w.weights.size();
  Eigen::VectorXd grad_flat = Eigen::VectorXd::Zero(d + 1);
  for (Eigen::Index start = 0; start < n; start += p.likelihood_batch_rows) {
    const Eigen::Index stop = std::min(n, start + p.likelihood_batch_rows);
    std::vector<Eigen::Index> chunk;
    chunk.reserve(static_cast<std::size_t>(stop - start));
    for (Eigen::Index i = start; i < stop; ++i) chunk.push_back(i);
    const ParamVector g = grad_log_likelihood(p.arch, w, p.data, chunk);
    grad_flat.head(d) += g.weights;
    grad_flat[d] += g.raw_global_noise;
  }
  // chain rule through w = shift + P z, then temper
  return p.subspace.basis.transpose() * grad_flat / p.temperature;
}

inline double log_posterior(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  return tempered_log_likelihood(p, z) + log_prior(p, z);
}

inline Eigen::VectorXd grad_log_posterior(const SubspacePosterior& p, const Eigen::VectorXd& z) {
  return grad_tempered_log_likelihood(p, z) + grad_log_prior(p, z);
}

}  // namespace subinf
