#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "subinf/net.hpp"
#include "subinf/train.hpp"

namespace subinf {

enum class SubspaceKind { random, pca, curve };

// Affine subspace of weight space, w = shift + basis * z. The stored vectors
// have one extra trailing slot for the raw global-noise parameter; unless a
// noise coordinate was requested at construction the basis rows for that
// slot are zero, which pins the noise at the shift's trained value.
struct Subspace {
  SubspaceKind kind = SubspaceKind::random;
  Eigen::VectorXd shift;  // weight_dim + 1 entries
  Eigen::MatrixXd basis;  // (weight_dim + 1) x K
  Eigen::Index weight_dim = 0;
  bool noise_coordinate = false;

  int K() const { return static_cast<int>(basis.cols()); }
  double shift_noise_std() const { return softplus(shift[weight_dim]); }
};

inline ParamVector embed(const Subspace& s, const Eigen::VectorXd& z) {
  if (z.size() != s.basis.cols())
    throw dimension_error("coordinate vector has " + std::to_string(z.size()) +
                          " entries, subspace has K = " + std::to_string(s.basis.cols()));
  return ParamVector::from_flat(s.shift + s.basis * z);
}

namespace detail {

inline Eigen::VectorXd with_noise_slot(const ParamVector& p) { return p.to_flat(); }

inline void append_noise_column(Subspace& s) {
  const Eigen::Index rows = s.shift.size();
  s.basis.conservativeResize(rows, s.basis.cols() + 1);
  s.basis.col(s.basis.cols() - 1).setZero();
  s.basis(rows - 1, s.basis.cols() - 1) = 1.0;
  s.noise_coordinate = true;
}

struct GramSvd {
  Eigen::VectorXd singular_values;  // all values, descending
  Eigen::MatrixXd left_vectors;     // M x M, columns aligned with values
};

// Singular values and left singular vectors of the M x d row matrix via the
// M x M Gram matrix; exact and O(M^2 d) for M << d.
inline GramSvd gram_svd(const Eigen::MatrixXd& rows) {
  const Eigen::Index m = rows.rows();
  Eigen::MatrixXd gram = rows * rows.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw numerical_error("Gram eigendecomposition failed");
  GramSvd out;
  out.singular_values.resize(m);
  out.left_vectors.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = m - 1 - i;  // ascending -> descending
    out.singular_values[i] = std::sqrt(std::max(eig.eigenvalues()[src], 0.0));
    out.left_vectors.col(i) = eig.eigenvectors().col(src);
  }
  return out;
}

// Largest-|entry| coefficient made positive, so serialized bases are
// reproducible across runs.
inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best) {
      best = a;
      imax = i;
    }
  }
  if (v[imax] < 0) v = -v;
}

}  // namespace detail

// K i.i.d. unit-norm gaussian directions around the given shift point.
inline Subspace random_subspace(Eigen::Index weight_dim, int K, const ParamVector& shift,
                                std::uint64_t seed, bool noise_coordinate = false) {
  if (shift.weights.size() != weight_dim)
    throw dimension_error("shift has " + std::to_string(shift.weights.size()) +
                          " weights, expected " + std::to_string(weight_dim));
  if (K < 1 || K > weight_dim)
    throw dimension_error("random subspace needs 1 <= K <= d, got K = " + std::to_string(K) +
                          ", d = " + std::to_string(weight_dim));
  Subspace s;
  s.kind = SubspaceKind::random;
  s.weight_dim = weight_dim;
  s.shift = detail::with_noise_slot(shift);
  s.basis = Eigen::MatrixXd::Zero(weight_dim + 1, K);
  Rng rng(seed);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd v = normal_vector(rng, weight_dim);
    s.basis.col(k).head(weight_dim) = v / v.norm();
  }
  if (noise_coordinate) detail::append_noise_column(s);
  return s;
}

struct PcaSubspace {
  Subspace subspace;
  Eigen::VectorXd singular_values;  // all captured values, descending
};

// Basis from the top-K principal directions of the deviation matrix. Column
// i is scaled by s_i / sqrt(M - 1), so unit-gaussian coordinates reproduce
// the empirical covariance of the captured trajectory.
inline PcaSubspace pca_subspace(const DeviationBuffer& buffer, const ParamVector& w_swa, int K,
                                bool noise_coordinate = false) {
  const int m = buffer.size();
  if (m < 2) throw dimension_error("PCA subspace needs at least 2 captured deviations");
  if (K < 1 || K > m)
    throw dimension_error("PCA subspace needs 1 <= K <= M, got K = " + std::to_string(K) +
                          ", M = " + std::to_string(m));
  const Eigen::MatrixXd rows = buffer.matrix();
  if (rows.cols() != w_swa.weights.size())
    throw dimension_error("deviation length " + std::to_string(rows.cols()) +
                          " does not match shift weight count " +
                          std::to_string(w_swa.weights.size()));

  detail::GramSvd svd = detail::gram_svd(rows);
  // The Gram route floors numerically-zero singular values near
  // s_max * sqrt(eps); components below s_max * 1e-6 are indistinguishable
  // from that noise and count as rank deficiency.
  const double tol = svd.singular_values[0] * 1e-6;
  int effective_rank = 0;
  for (Eigen::Index i = 0; i < svd.singular_values.size(); ++i)
    if (svd.singular_values[i] > tol && svd.singular_values[i] > 0.0) ++effective_rank;
  if (effective_rank < K)
    throw data_error("deviation matrix has effective rank " + std::to_string(effective_rank) +
                     ", cannot extract K = " + std::to_string(K) + " components");

  PcaSubspace out;
  out.singular_values = svd.singular_values;
  Subspace& s = out.subspace;
  s.kind = SubspaceKind::pca;
  s.weight_dim = rows.cols();
  s.shift = detail::with_noise_slot(w_swa);
  s.basis = Eigen::MatrixXd::Zero(rows.cols() + 1, K);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m - 1));
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd v = rows.transpose() * svd.left_vectors.col(k) / svd.singular_values[k];
    v /= v.norm();
    detail::fix_sign(v);
    s.basis.col(k).head(rows.cols()) = svd.singular_values[k] * scale * v;
  }
  if (noise_coordinate) detail::append_noise_column(s);
  return out;
}

struct CurveEndpoints {
  ParamVector w0;
  ParamVector w1;
  ParamVector w_half;  // midpoint of the low-loss curve
};

// Two-dimensional plane through the curve endpoints and midpoint:
// shift = (w0 + w1)/2, v1 toward w0, v2 toward the curve midpoint.
inline Subspace curve_subspace(const CurveEndpoints& e) {
  if (e.w0.weights.size() != e.w1.weights.size() ||
      e.w0.weights.size() != e.w_half.weights.size())
    throw dimension_error("curve endpoints have mismatched lengths");

  const Eigen::Index d = e.w0.weights.size();
  Eigen::VectorXd shift_w = 0.5 * (e.w0.weights + e.w1.weights);

  Eigen::VectorXd v1 = e.w0.weights - shift_w;
  const double n0 = v1.norm();
  if (n0 <= 1e-12 * (1.0 + shift_w.norm()))
    throw data_error("degenerate curve geometry: |w0 - shift| = " + std::to_string(n0));
  v1 /= n0;

  Eigen::VectorXd v2 = e.w_half.weights - shift_w;
  const double nh = v2.norm();
  if (nh <= 1e-12 * (1.0 + shift_w.norm()))
    throw data_error("degenerate curve geometry: |w_half - shift| = " + std::to_string(nh));
  const double orth = (v2 - v1.dot(v2) * v1).norm();
  if (orth <= 1e-10 * nh)
    throw data_error("degenerate curve geometry: midpoint collinear with endpoints, "
                     "orthogonal component " + std::to_string(orth));
  v2 /= nh;

  Subspace s;
  s.kind = SubspaceKind::curve;
  s.weight_dim = d;
  s.shift.resize(d + 1);
  s.shift.head(d) = shift_w;
  s.shift[d] = 0.5 * (e.w0.raw_global_noise + e.w1.raw_global_noise);
  s.basis = Eigen::MatrixXd::Zero(d + 1, 2);
  s.basis.col(0).head(d) = v1;
  s.basis.col(1).head(d) = v2;
  return s;
}

struct CurveConfig {
  int num_steps = 2000;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct CurveResult {
  ParamVector theta;   // trained bend point
  ParamVector w_half;  // curve value at t = 1/2
  std::vector<TraceEntry> trace;
};

// Quadratic Bezier point (1-t)^2 w0 + 2t(1-t) theta + t^2 w1.
inline ParamVector bezier_point(const ParamVector& w0, const ParamVector& w1,
                                const ParamVector& theta, double t) {
  const double a = (1 - t) * (1 - t), b = 2 * t * (1 - t), c = t * t;
  ParamVector p;
  p.weights = a * w0.weights + b * theta.weights + c * w1.weights;
  p.raw_global_noise = a * w0.raw_global_noise + b * theta.raw_global_noise + c * w1.raw_global_noise;
  return p;
}

// Trains the bend point of a quadratic Bezier between two solutions to
// minimize the expected mini-batch loss at a uniformly sampled t, one t per
// step. The bend starts at the straight midpoint.
inline CurveResult find_curve(const Architecture& arch, const ParamVector& w0,
                              const ParamVector& w1, const Dataset& data,
                              const CurveConfig& cfg) {
  arch.validate();
  detail::check_params(arch, w0);
  detail::check_params(arch, w1);
  if (cfg.batch_size < 1 || cfg.batch_size > data.size())
    throw config_error("curve: batch_size must be in [1, N]");
  if (cfg.num_steps < 0) throw config_error("curve: num_steps must be >= 0");

  CurveResult result;
  result.theta.weights = 0.5 * (w0.weights + w1.weights);
  result.theta.raw_global_noise = 0.5 * (w0.raw_global_noise + w1.raw_global_noise);

  Rng rng(cfg.seed);
  detail::BatchScheduler scheduler(data.size(), cfg.batch_size);
  Eigen::VectorXd velocity_w = Eigen::VectorXd::Zero(w0.weights.size());
  double velocity_raw = 0.0;

  result.trace.reserve(cfg.num_steps);
  for (int step = 1; step <= cfg.num_steps; ++step) {
    const double t = uniform_real(rng);
    const auto batch = scheduler.next(rng);
    const ParamVector point = bezier_point(w0, w1, result.theta, t);

    LikelihoodValueGrad vg;
    try {
      vg = log_likelihood_with_grad(arch, point, data, batch);
    } catch (const numerical_error& e) {
      throw numerical_error("curve training failed at step " + std::to_string(step) + ": " +
                            e.what());
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double loss =
        -vg.value * inv_b + 0.5 * cfg.weight_decay * point.weights.squaredNorm();
    if (!std::isfinite(loss))
      throw numerical_error("non-finite curve loss at step " + std::to_string(step));

    // d phi / d theta = 2 t (1 - t) * I
    const double chain = 2.0 * t * (1.0 - t);
    Eigen::VectorXd grad_w =
        chain * (-inv_b * vg.grad.weights + cfg.weight_decay * point.weights);
    const double grad_raw = chain * (-inv_b * vg.grad.raw_global_noise);

    velocity_w = cfg.momentum * velocity_w - cfg.learning_rate * grad_w;
    velocity_raw = cfg.momentum * velocity_raw - cfg.learning_rate * grad_raw;
    result.theta.weights += velocity_w;
    result.theta.raw_global_noise += velocity_raw;
    result.trace.push_back({step, loss, cfg.learning_rate});
  }

  result.w_half = bezier_point(w0, w1, result.theta, 0.5);
  return result;
}

}  // namespace subinf
