#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "onoff/rng.hpp"
#include "onoff/svm.hpp"
#include "oracles.hpp"

using namespace onoff;

namespace {

// two seeded Gaussian blobs in 2-D
void make_blobs(Rng& rng, int n_per_class, Eigen::MatrixXd& x,
                std::vector<int>& y) {
  x.resize(2 * n_per_class, 2);
  y.clear();
  for (int i = 0; i < n_per_class; ++i) {
    x(i, 0) = 1.0 + 0.7 * rng.normal();
    x(i, 1) = 0.5 + 0.7 * rng.normal();
    y.push_back(1);
  }
  for (int i = 0; i < n_per_class; ++i) {
    x(n_per_class + i, 0) = -1.0 + 0.7 * rng.normal();
    x(n_per_class + i, 1) = -0.5 + 0.7 * rng.normal();
    y.push_back(-1);
  }
}

}  // namespace

TEST_CASE("1-D hard-margin problem recovers w=1, b=0") {
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  const std::vector<int> y = {-1, 1};
  const double c = 1e6;
  const auto result = train_svm(x, y, c);
  CHECK(result.converged);
  CHECK(result.model.weights(0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(result.model.bias) < 1e-3);

  // analytic optimum of 0.5 w^2 + 2c (1-w)^2 is w* = 4c/(1+4c)
  const double w_star = 4.0 * c / (1.0 + 4.0 * c);
  const double p_star = oracle::svm_objective_naive(
      x, y, c, Eigen::VectorXd::Constant(1, w_star), 0.0);
  CHECK(result.objective <= p_star + 1e-4 * (1.0 + std::abs(p_star)));
  CHECK(result.objective >= p_star - 1e-4 * (1.0 + std::abs(p_star)));
}

TEST_CASE("single-class data rejected") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  CHECK_THROWS_AS(train_svm(x, {1, 1, 1}, 1.0), SingleClassError);
  CHECK_THROWS_AS(train_svm(x, {-1, -1, -1}, 1.0), SingleClassError);
}

TEST_CASE("2-D blobs objective matches the grid-refinement oracle") {
  Rng rng(13);
  Eigen::MatrixXd x;
  std::vector<int> y;
  make_blobs(rng, 20, x, y);

  for (double c : {0.1, 1.0}) {
    const auto result = train_svm(x, y, c);
    const double oracle_obj = oracle::svm_grid_minimum(x, y, c, 12.0, 40);
    const double tol = 1e-4 * (1.0 + std::abs(oracle_obj));
    CHECK(result.objective <= oracle_obj + tol);
    CHECK(result.objective >= oracle_obj - tol);
  }
}

TEST_CASE("objective trace is non-increasing") {
  Rng rng(17);
  Eigen::MatrixXd x;
  std::vector<int> y;
  make_blobs(rng, 15, x, y);
  const auto result = train_svm(x, y, 10.0);
  REQUIRE(result.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < result.objective_trace.size(); ++i) {
    CHECK(result.objective_trace[i] <= result.objective_trace[i - 1] + 1e-12);
  }
  CHECK(result.objective == result.objective_trace.back());
}

TEST_CASE("doubling the training points halves the weight") {
  const std::vector<int> y = {-1, 1};
  Eigen::MatrixXd x(2, 1);
  x << -2, 2;
  const auto result = train_svm(x, y, 1e6);
  CHECK(result.model.weights(0) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(std::abs(result.model.bias) < 1e-3);
}

TEST_CASE("row permutation changes the objective by at most tol") {
  Rng rng(19);
  Eigen::MatrixXd x;
  std::vector<int> y;
  make_blobs(rng, 12, x, y);
  const auto a = train_svm(x, y, 1.0);

  std::vector<long> perm = {5, 17, 3, 21, 8, 0, 14, 23, 11, 2, 19, 7,
                            22, 1, 10, 16, 4, 20, 9, 13, 6, 18, 15, 12};
  Eigen::MatrixXd xp(x.rows(), 2);
  std::vector<int> yp(y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    xp.row(static_cast<long>(i)) = x.row(perm[i]);
    yp[i] = y[static_cast<std::size_t>(perm[i])];
  }
  const auto b = train_svm(xp, yp, 1.0);
  CHECK(std::abs(a.objective - b.objective) <=
        1e-6 * (1.0 + std::abs(a.objective)));
}

TEST_CASE("decision values") {
  SvmModel m;
  m.weights = Eigen::Vector2d(1, 0);
  m.bias = 0.0;
  CHECK(svm_decision(m, Eigen::Vector2d(3, 7)) == 3.0);
  CHECK(svm_decision(m, Eigen::Vector2d(0, 42)) == 0.0);

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    SvmModel r;
    r.weights.resize(5);
    Eigen::VectorXd x(5);
    for (long i = 0; i < 5; ++i) {
      r.weights(i) = rng.normal();
      x(i) = rng.normal();
    }
    r.bias = rng.normal();
    const double expected = oracle::dot_naive(r.weights, x) + r.bias;
    CHECK(svm_decision(r, x) == doctest::Approx(expected).epsilon(1e-12));
  }

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(svm_decision(m, wrong), DimensionMismatchError);
}

TEST_CASE("prediction sign convention and scale invariance") {
  SvmModel m;
  m.weights = Eigen::Vector2d(1, -1);
  m.bias = 0.5;
  const Eigen::Vector2d pos(2, 0);   // decision 2.5
  const Eigen::Vector2d neg(0, 0.6); // decision -0.1
  CHECK(svm_predict(m, pos) == State::ON);
  CHECK(svm_predict(m, neg) == State::OFF);

  SvmModel tie;
  tie.weights = Eigen::Vector2d(1, 0);
  tie.bias = 0.0;
  CHECK(svm_predict(tie, Eigen::Vector2d(0, 9)) == State::ON);  // exact tie

  // positive rescaling of (w, b) leaves predictions unchanged
  Rng rng(29);
  for (double lambda : {0.01, 3.0, 1e4}) {
    SvmModel scaled = m;
    scaled.weights *= lambda;
    scaled.bias *= lambda;
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::Vector2d x(rng.uniform(-4, 4), rng.uniform(-4, 4));
      CHECK(svm_predict(scaled, x) == svm_predict(m, x));
    }
  }
}

TEST_CASE("input validation") {
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  CHECK_THROWS_AS(train_svm(x, {-1, 1}, 0.0), InvalidArgumentError);
  CHECK_THROWS_AS(train_svm(x, {-1, 1, 1}, 1.0), DimensionMismatchError);
  CHECK_THROWS_AS(train_svm(x, {-1, 2}, 1.0), InvalidArgumentError);
  Eigen::MatrixXd one(1, 1);
  one << 1;
  CHECK_THROWS_AS(train_svm(one, {1}, 1.0), TooFewItemsError);
}

TEST_CASE("iteration cap returns the best iterate with a warning flag") {
  Rng rng(31);
  Eigen::MatrixXd x;
  std::vector<int> y;
  make_blobs(rng, 20, x, y);
  SvmTrainOptions opts;
  opts.max_iter = 1;
  opts.tol = 0.0;
  const auto result = train_svm(x, y, 1e5, opts);
  CHECK_FALSE(result.converged);
  CHECK(result.iterations == 1);
  CHECK(result.model.weights.allFinite());
  // still strictly better than the zero start
  CHECK(result.objective < result.objective_trace.front());
}

TEST_CASE("model file roundtrip") {
  const auto dir = std::filesystem::temp_directory_path() / "onoff_svm_test";
  std::filesystem::create_directories(dir);
  SvmModel m;
  m.weights = Eigen::Vector3d(0.25, -1.75, 3.5);
  m.bias = -0.125;
  m.c = 10.0;
  save_svm(dir / "m.svmm", m);
  const SvmModel back = load_svm(dir / "m.svmm");
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.c == m.c);

  CHECK_THROWS_AS(load_svm(dir / "missing.svmm"), IoError);
}
