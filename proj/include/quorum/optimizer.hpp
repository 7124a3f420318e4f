#pragma once

#include <functional>
#include <vector>

namespace quorum {

/// Returns f(x); when `grad` is non-null it is resized and filled with ∇f(x).
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>* grad)>;

struct BfgsOptions {
    int max_iter = 200;
    double grad_tol = 1e-8;  // on ||∇f||∞ / (1 + |f|)
    double f_tol = 1e-14;    // relative decrease below which we stop
    double armijo_c1 = 1e-4;
    int max_backtracks = 60;
};

struct OptimizeResult {
    std::vector<double> x;
    double value = 0.0;
    /// Objective at the start point and after every accepted step.
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;  // non-finite objective or parameters
};

/// Quasi-Newton minimization with the BFGS inverse-Hessian update and
/// Armijo backtracking. Accepted steps never increase the objective.
OptimizeResult minimize_bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& options = {});

}  // namespace quorum
