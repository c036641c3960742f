#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "subinf/spectrum.hpp"
#include "testutil.hpp"

using namespace subinf;

namespace {

Eigen::MatrixXd random_symmetric(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) A(i, j) = A(j, i) = normal(rng);
  return A;
}

Eigen::VectorXd dense_eigs_desc(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  return eig.eigenvalues().reverse();
}

struct HvpProblem {
  Architecture arch;
  ParamVector params;
  Dataset data;
};

HvpProblem hvp_problem(std::uint64_t seed) {
  HvpProblem p;
  p.arch.input_dim = 2;
  p.arch.hidden_sizes = {3};
  p.arch.activation = Activation::tanh;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  p.data.inputs.resize(10, 2);
  p.data.targets.resize(10);
  for (int i = 0; i < 10; ++i) {
    p.data.inputs(i, 0) = normal(rng);
    p.data.inputs(i, 1) = normal(rng);
    p.data.targets[i] = normal(rng);
  }
  p.params = init_weights(p.arch, seed + 1);
  for (Eigen::Index i = 0; i < p.params.weights.size(); ++i)
    p.params.weights[i] += 0.2 * normal(rng);
  return p;
}

// Explicit dense Hessian of the full-batch mean negative log-likelihood by
// central differences of the exact gradient, column by column.
Eigen::MatrixXd dense_hessian(const HvpProblem& p, double h = 1e-5) {
  const Eigen::Index d = p.params.weights.size();
  const double inv_n = 1.0 / static_cast<double>(p.data.size());
  Eigen::MatrixXd H(d, d);
  ParamVector shifted = p.params;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double orig = shifted.weights[i];
    shifted.weights[i] = orig + h;
    Eigen::VectorXd up = -inv_n * grad_log_likelihood(p.arch, shifted, p.data).weights;
    shifted.weights[i] = orig - h;
    Eigen::VectorXd dn = -inv_n * grad_log_likelihood(p.arch, shifted, p.data).weights;
    shifted.weights[i] = orig;
    H.col(i) = (up - dn) / (2 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

TEST_CASE("hvp matches the explicit dense Hessian") {
  HvpProblem p = hvp_problem(3);
  const Eigen::MatrixXd H = dense_hessian(p);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd v(p.params.weights.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    const Eigen::VectorXd got = hvp(p.arch, p.params, p.data, v);
    const Eigen::VectorXd expect = H * v;
    CHECK((got - expect).lpNorm<Eigen::Infinity>() <=
          1e-6 * (1.0 + expect.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("hvp is linear in the direction") {
  HvpProblem p = hvp_problem(4);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(p.params.weights.size(), -1.0, 1.0);
  const Eigen::VectorXd one = hvp(p.arch, p.params, p.data, v);
  const Eigen::VectorXd two = hvp(p.arch, p.params, p.data, 2.0 * v);
  CHECK((two - 2.0 * one).lpNorm<Eigen::Infinity>() <=
        1e-4 * (1.0 + two.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("hvp validates its inputs") {
  HvpProblem p = hvp_problem(5);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(p.params.weights.size());
  CHECK_THROWS_AS(hvp(p.arch, p.params, p.data, zero), dimension_error);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(p.params.weights.size());
  CHECK_THROWS_AS(hvp(p.arch, p.params, p.data, v, 0.0), config_error);
  CHECK_THROWS_AS(hvp(p.arch, p.params, p.data, v, -1.0), config_error);
}

TEST_CASE("lanczos reproduces a small diagonal spectrum exactly") {
  Eigen::MatrixXd D = Eigen::VectorXd::LinSpaced(5, 5.0, 1.0).asDiagonal();
  auto matvec = [&D](const Eigen::VectorXd& x) { return Eigen::VectorXd(D * x); };
  Eigen::VectorXd ritz = lanczos(matvec, 5, 5, 11);
  REQUIRE(ritz.size() == 5);
  for (int i = 0; i < 5; ++i)
    CHECK_THAT(ritz[i], Catch::Matchers::WithinAbs(5.0 - i, 1e-10));
}

TEST_CASE("the identity operator breaks down after one step") {
  auto matvec = [](const Eigen::VectorXd& x) { return x; };
  Eigen::VectorXd ritz = lanczos(matvec, 20, 5, 2);
  REQUIRE(ritz.size() == 1);
  CHECK_THAT(ritz[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("full-depth lanczos agrees with a dense eigensolver") {
  const Eigen::MatrixXd A = random_symmetric(50, 21);
  auto matvec = [&A](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); };
  Eigen::VectorXd ritz = lanczos(matvec, 50, 50, 7);
  Eigen::VectorXd dense = dense_eigs_desc(A);
  REQUIRE(ritz.size() == 50);
  for (int i = 0; i < 50; ++i)
    CHECK(std::abs(ritz[i] - dense[i]) <= 1e-8 * (1.0 + std::abs(dense[i])));
}

TEST_CASE("lanczos matches dense spectra across sizes") {
  for (Eigen::Index n : {5, 20, 60, 100}) {
    const Eigen::MatrixXd A = random_symmetric(n, 100 + static_cast<std::uint64_t>(n));
    auto matvec = [&A](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); };
    Eigen::VectorXd ritz = lanczos(matvec, n, static_cast<int>(n), 9);
    Eigen::VectorXd dense = dense_eigs_desc(A);
    for (Eigen::Index i = 0; i < n; ++i)
      CHECK(std::abs(ritz[i] - dense[i]) <= 1e-8 * (1.0 + std::abs(dense[i])));
  }
}

TEST_CASE("ritz values of successive depths interlace") {
  const Eigen::MatrixXd A = random_symmetric(30, 77);
  auto matvec = [&A](const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x); };
  for (int k = 2; k <= 12; ++k) {
    Eigen::VectorXd small = lanczos(matvec, 30, k, 13);
    Eigen::VectorXd big = lanczos(matvec, 30, k + 1, 13);
    const double lo = big.minCoeff() - 1e-10, hi = big.maxCoeff() + 1e-10;
    for (Eigen::Index i = 0; i < small.size(); ++i) {
      CHECK(small[i] >= lo);
      CHECK(small[i] <= hi);
    }
  }
}

TEST_CASE("trajectory spectrum of a rank-one buffer is a single unit fraction") {
  DeviationBuffer buffer(4);
  Eigen::VectorXd a(6);
  a << 1, -1, 2, 0, 0.5, 1;
  buffer.push(a);
  buffer.push(2.0 * a);
  Eigen::VectorXd frac = trajectory_spectrum(buffer);
  CHECK_THAT(frac[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(frac.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("trajectory spectrum matches a dense SVD oracle and is normalized") {
  Eigen::MatrixXd rows(3, 5);
  rows << 1, 0, 2, -1, 0.5,
          0, 1, 1, 0.5, -2,
          2, 1, 0, 1, 1;
  DeviationBuffer buffer(3);
  for (int i = 0; i < 3; ++i) buffer.push(rows.row(i).transpose());
  Eigen::VectorXd frac = trajectory_spectrum(buffer);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
  Eigen::VectorXd expect = svd.singularValues().array().square();
  expect /= expect.sum();
  for (int i = 0; i < 3; ++i) CHECK_THAT(frac[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
  CHECK_THAT(frac.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  for (int i = 1; i < 3; ++i) CHECK(frac[i] <= frac[i - 1] + 1e-15);
}

TEST_CASE("an all-zero buffer has no spectrum") {
  DeviationBuffer buffer(3);
  buffer.push(Eigen::VectorXd::Zero(4));
  buffer.push(Eigen::VectorXd::Zero(4));
  CHECK_THROWS_AS(trajectory_spectrum(buffer), data_error);
}
