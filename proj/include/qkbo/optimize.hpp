#pragma once

#include <functional>

#include <Eigen/Dense>

namespace qkbo {

/// Returns f(x); fills *grad when non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 200;
  /// Stop when the projected gradient infinity norm drops below this.
  double pgtol = 1e-8;
  /// Stop when the relative decrease of f drops below this.
  double ftol = 1e-12;
  int max_linesearch = 30;
};

struct BoxResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Projected L-BFGS for min f subject to lower <= x <= upper. Infinite bounds are allowed.
BoxResult minimize_box(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const LbfgsOptions& opts = {});

}  // namespace qkbo
