#pragma once

// Unconstrained local minimizers used by the likelihood fit.

#include <Eigen/Dense>
#include <functional>

namespace glamsa::optim {

/// Returns f(x); fills *grad when grad is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct Options {
  int max_iterations = 3000;
  /// Converged when two consecutive iterations each improve f by less than f_tol * (1 + |f|).
  double f_tol = 1e-10;
  double g_tol = 1e-7;
  int history = 12;
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a backtracking Armijo line search.
Result lbfgs(const Objective& objective, const Eigen::VectorXd& x0, const Options& options = {});

/// Adaptive Nelder-Mead simplex (dimension-dependent coefficients). `step` sets the initial simplex size.
Result nelder_mead(const Objective& objective, const Eigen::VectorXd& x0, double step, const Options& options = {});

}  // namespace glamsa::optim
