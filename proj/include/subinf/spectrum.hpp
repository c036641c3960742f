#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "subinf/subspace.hpp"

namespace subinf {

struct SpectrumReport {
  Eigen::VectorXd eigenvalue_estimates;  // descending Ritz values
  Eigen::VectorXd explained_variance;    // descending fractions
};

// Hessian-vector product of the full-batch mean negative log-likelihood via
// central differences of the exact gradient; linear in v by rescaling the
// normalized direction.
inline Eigen::VectorXd hvp(const Architecture& arch, const ParamVector& params,
                           const Dataset& data, const Eigen::VectorXd& v, double eps = 1e-4) {
  if (!(eps > 0.0)) throw config_error("hvp: eps must be > 0");
  if (v.size() != params.weights.size())
    throw dimension_error("hvp direction has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(params.weights.size()));
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw dimension_error("hvp direction must have positive finite norm");

  const Eigen::VectorXd unit = v / norm;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  ParamVector shifted = params;

  shifted.weights = params.weights + eps * unit;
  const Eigen::VectorXd g_up = -inv_n * grad_log_likelihood(arch, shifted, data).weights;
  shifted.weights = params.weights - eps * unit;
  const Eigen::VectorXd g_dn = -inv_n * grad_log_likelihood(arch, shifted, data).weights;

  return (g_up - g_dn) * (norm / (2.0 * eps));
}

// Lanczos tridiagonalization with full reorthogonalization; returns the
// Ritz values (descending). On breakdown the invariant subspace found so
// far determines the estimates.
template <class MatVec>
Eigen::VectorXd lanczos(MatVec&& matvec, Eigen::Index dim, int k_iters, std::uint64_t seed) {
  if (k_iters < 1 || k_iters > dim)
    throw config_error("lanczos: need 1 <= k_iters <= dim, got k = " + std::to_string(k_iters) +
                       ", dim = " + std::to_string(dim));
  Rng rng(seed);
  Eigen::MatrixXd Q(dim, k_iters);
  {
    Eigen::VectorXd q0 = normal_vector(rng, dim);
    Q.col(0) = q0 / q0.norm();
  }

  std::vector<double> alphas, betas;
  int steps = 0;
  for (int j = 0; j < k_iters; ++j) {
    Eigen::VectorXd w = matvec(Q.col(j));
    if (!w.allFinite()) throw numerical_error("lanczos: matvec produced non-finite entries");
    const double alpha = Q.col(j).dot(w);
    alphas.push_back(alpha);
    ++steps;
    if (j + 1 == k_iters) break;

    w -= alpha * Q.col(j);
    if (j > 0) w -= betas.back() * Q.col(j - 1);
    // full reorthogonalization, twice for numerical safety
    for (int pass = 0; pass < 2; ++pass)
      w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);

    const double beta = w.norm();
    double scale = std::abs(alpha);
    for (double b : betas) scale = std::max(scale, std::abs(b));
    if (beta <= 1e-12 * (1.0 + scale)) break;  // exact invariant subspace
    betas.push_back(beta);
    Q.col(j + 1) = w / beta;
  }

  Eigen::VectorXd diag(steps), subdiag(std::max(0, steps - 1));
  for (int i = 0; i < steps; ++i) diag[i] = alphas[static_cast<std::size_t>(i)];
  for (int i = 0; i + 1 < steps; ++i) subdiag[i] = betas[static_cast<std::size_t>(i)];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, subdiag, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw numerical_error("lanczos: tridiagonal solve failed");
  return eig.eigenvalues().reverse();
}

// Explained-variance fractions s_i^2 / sum_j s_j^2 of the deviation matrix,
// descending.
inline Eigen::VectorXd trajectory_spectrum(const DeviationBuffer& buffer) {
  const Eigen::MatrixXd rows = buffer.matrix();
  detail::GramSvd svd = detail::gram_svd(rows);
  const double total = svd.singular_values.array().square().sum();
  if (!(total > 0.0)) throw data_error("trajectory spectrum of an all-zero deviation buffer");
  return svd.singular_values.array().square() / total;
}

}  // namespace subinf
