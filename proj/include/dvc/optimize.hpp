#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace dvc {

struct ScalarMinimum {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
};

/// Brent's derivative-free minimizer on [lo, hi] (golden section with
/// parabolic steps). Non-finite objective values are treated as +inf.
ScalarMinimum brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-6,
                             int max_iter = 200);

struct LbfgsOptions {
    int max_iter = 80;
    int memory = 6;
    double box = 30.0;       ///< every coordinate clipped to [-box, box]
    double grad_tol = 1e-6;  ///< stop when the projected gradient inf-norm falls below
    double f_rel_tol = 1e-10;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  ///< objective after every accepted step (starts with f(x0))
};

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using ObjectiveWithGradient = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS with Armijo backtracking and projection onto a box.
/// Only steps that decrease the objective are accepted, so `history` is
/// monotone non-increasing.
LbfgsResult lbfgs_minimize(const ObjectiveWithGradient& f, Eigen::VectorXd x0, const LbfgsOptions& opts = {});

}  // namespace dvc
