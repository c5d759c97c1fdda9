#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "onoff/corpus.hpp"

namespace onoff {

// L2-regularized linear classifier. The decision value is w.x + b.
struct SvmModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double c = 1.0;  // regularization trade-off used at fit time
};

struct SvmTrainOptions {
  double tol = 1e-6;    // relative objective change per pass
  int max_iter = 10000; // passes over the data
};

struct SvmTrainResult {
  SvmModel model;
  bool converged = true;  // false: max_iter hit, best iterate returned
  int iterations = 0;
  double objective = 0.0;
  // objective after each pass; [0] is the value at the zero start
  std::vector<double> objective_trace;
};

// Minimizes P(w, b) = 0.5 |w|^2 + c * sum_i max(0, 1 - y_i (w.x_i + b))^2
// (squared hinge; the intercept b is not regularized). y entries are -1
// (OFF) or +1 (ON). Deterministic damped Newton descent with a backtracking
// line search, so the objective trace is non-increasing.
SvmTrainResult train_svm(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         double c, const SvmTrainOptions& opts = {});

double svm_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                     double c, const Eigen::VectorXd& w, double b);

double svm_decision(const SvmModel& m, const Eigen::VectorXd& x);

// ON when the decision value is positive, OFF when negative, ON on a tie.
State svm_predict(const SvmModel& m, const Eigen::VectorXd& x);

// Binary model file: magic "SVMM", u32 version=1, u32 k, k f64 weights,
// f64 bias, f64 c (all little-endian).
void save_svm(const std::filesystem::path& path, const SvmModel& m);
SvmModel load_svm(const std::filesystem::path& path);

}  // namespace onoff
