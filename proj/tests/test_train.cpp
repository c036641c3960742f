#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "subinf/train.hpp"
#include "testutil.hpp"

using namespace subinf;

namespace {

// y = 2x + 1, exactly fittable by the linear mean path.
Dataset line_data(int n = 40) {
  Dataset d;
  d.inputs.resize(n, 1);
  d.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * i / (n - 1);
    d.inputs(i, 0) = x;
    d.targets[i] = 2.0 * x + 1.0;
  }
  return d;
}

Architecture linear_arch() {
  Architecture a;
  a.input_dim = 1;
  a.head = Head::gaussian;
  return a;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  auto prob = testutil::random_problem(31);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.num_steps = 25;
  cfg.batch_size = static_cast<int>(prob.data.size());
  cfg.seed = 5;
  TrainResult r = train_sgd(prob.arch, prob.params, prob.data, cfg);
  CHECK(r.params.weights == prob.params.weights);
  CHECK(r.params.raw_global_noise == prob.params.raw_global_noise);
}

TEST_CASE("SGD recovers the least-squares line on noiseless data") {
  Dataset data = line_data();
  Architecture arch = linear_arch();
  ParamVector p0 = init_weights(arch, 3);

  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.num_steps = 4000;
  cfg.batch_size = static_cast<int>(data.size());
  cfg.seed = 11;
  TrainResult r = train_sgd(arch, p0, data, cfg);

  // Closed-form least squares: slope = Sxy/Sxx, intercept = ybar - slope*xbar.
  const double xbar = data.inputs.col(0).mean();
  const double ybar = data.targets.mean();
  const double sxx = (data.inputs.col(0).array() - xbar).square().sum();
  const double sxy = ((data.inputs.col(0).array() - xbar) * (data.targets.array() - ybar)).sum();
  const double slope = sxy / sxx, intercept = ybar - slope * xbar;

  // Mean-path parameters: weight row 0 of the single layer and its bias.
  CHECK_THAT(r.params.weights[0], Catch::Matchers::WithinAbs(slope, 0.02));
  CHECK_THAT(r.params.weights[2], Catch::Matchers::WithinAbs(intercept, 0.02));

  auto [mean, var] = gaussian_moments(arch, r.params, data.inputs);
  const double rmse = std::sqrt((mean - data.targets).squaredNorm() / data.size());
  CHECK(rmse < 0.02);
  CHECK(r.trace.front().loss > r.trace.back().loss);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  auto prob = testutil::random_problem(47);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.num_steps = 60;
  cfg.batch_size = std::max<int>(1, static_cast<int>(prob.data.size()) / 2);
  cfg.seed = 1234;
  TrainResult a = train_sgd(prob.arch, prob.params, prob.data, cfg);
  TrainResult b = train_sgd(prob.arch, prob.params, prob.data, cfg);
  CHECK(a.params.weights == b.params.weights);
  CHECK(a.params.raw_global_noise == b.params.raw_global_noise);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].loss == b.trace[i].loss);
}

TEST_CASE("full-batch descent on a smooth convex problem is monotone") {
  Dataset data = line_data();
  Architecture arch = linear_arch();
  ParamVector p0 = init_weights(arch, 8);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.num_steps = 300;
  cfg.batch_size = static_cast<int>(data.size());
  TrainResult r = train_sgd(arch, p0, data, cfg);
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    CHECK(r.trace[i].loss <= r.trace[i - 1].loss + 1e-12);
}

TEST_CASE("non-finite loss reports the failing step") {
  Dataset data = line_data(8);
  Architecture arch = linear_arch();
  ParamVector p0 = init_weights(arch, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e150;  // guaranteed blow-up
  cfg.momentum = 0.0;
  cfg.num_steps = 10;
  cfg.batch_size = 8;
  CHECK_THROWS_AS(train_sgd(arch, p0, data, cfg), numerical_error);
  CHECK_THROWS_WITH(train_sgd(arch, p0, data, cfg),
                    Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("single-capture SWA averages the start and the first capture") {
  Dataset data = line_data();
  Architecture arch = linear_arch();
  ParamVector pretrained = init_weights(arch, 21);

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.0;
  cfg.num_steps = 4;
  cfg.capture_frequency = 4;  // exactly one capture
  cfg.max_deviation_cols = 5;
  cfg.batch_size = static_cast<int>(data.size());
  cfg.seed = 77;

  std::vector<ParamVector> captured;
  SwaResult r = run_swa(arch, pretrained, data, cfg,
                        [&](int, const ParamVector& p) { captured.push_back(p); });
  REQUIRE(captured.size() == 1);
  CHECK(r.buffer.size() == 1);
  Eigen::VectorXd expected = 0.5 * (pretrained.to_flat() + captured[0].to_flat());
  CHECK((r.w_swa.to_flat() - expected).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("frozen trajectory leaves the average at the start") {
  Dataset data = line_data(10);
  Architecture arch = linear_arch();
  ParamVector pretrained = init_weights(arch, 33);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.momentum = 0.0;
  cfg.num_steps = 3;
  cfg.capture_frequency = 1;
  cfg.max_deviation_cols = 3;
  cfg.batch_size = 10;
  SwaResult r = run_swa(arch, pretrained, data, cfg);

  const double scale = 1.0 + pretrained.weights.lpNorm<Eigen::Infinity>();
  CHECK((r.w_swa.weights - pretrained.weights).lpNorm<Eigen::Infinity>() <= 1e-13 * scale);
  REQUIRE(r.buffer.size() == 3);
  for (const auto& col : r.buffer.columns())
    CHECK(col.lpNorm<Eigen::Infinity>() <= 1e-13 * scale);
}

TEST_CASE("running mean matches brute-force recomputation from the iterate log") {
  Dataset data = line_data();
  Architecture arch = linear_arch();
  ParamVector pretrained = init_weights(arch, 5);

  TrainConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.momentum = 0.9;
  cfg.num_steps = 60;
  cfg.capture_frequency = 5;
  cfg.max_deviation_cols = 4;
  cfg.batch_size = 10;
  cfg.seed = 2;

  std::vector<Eigen::VectorXd> iterates{pretrained.to_flat()};
  SwaResult r = run_swa(arch, pretrained, data, cfg,
                        [&](int, const ParamVector& p) { iterates.push_back(p.to_flat()); });

  REQUIRE(iterates.size() == 13);  // start + 12 captures
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(iterates.front().size());
  for (const auto& w : iterates) mean += w;
  mean /= static_cast<double>(iterates.size());
  CHECK((r.w_swa.to_flat() - mean).lpNorm<Eigen::Infinity>() <=
        1e-12 * (1.0 + mean.lpNorm<Eigen::Infinity>()));

  // Eviction: buffer holds exactly the last max_deviation_cols deviations,
  // each taken against the running mean at its capture time.
  REQUIRE(r.buffer.size() == 4);
  Eigen::VectorXd running = iterates[0];
  std::vector<Eigen::VectorXd> expected_devs;
  for (std::size_t k = 1; k < iterates.size(); ++k) {
    const double n = static_cast<double>(k);
    running = (n * running + iterates[k]) / (n + 1.0);
    expected_devs.push_back(iterates[k].head(pretrained.weights.size()) -
                            running.head(pretrained.weights.size()));
  }
  for (int i = 0; i < 4; ++i) {
    const auto& expect = expected_devs[expected_devs.size() - 4 + i];
    CHECK(r.buffer.columns()[static_cast<std::size_t>(i)] == expect);
  }
}
