#pragma once

#include "oed/linalg.hpp"

#include <functional>
#include <string>

namespace oed {

/// f(x), writing the gradient into the second argument.
using Objective = std::function<double(const Vector&, Vector&)>;

struct LbfgsOptions {
    int memory = 10;
    int max_iter = 100;
    double grad_tol = 1e-8;  // relative to max(1, ||g(x0)||)
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_evals = 40;
};

struct MinimizeResult {
    Vector x;
    double value = 0.0;
    double grad_norm = 0.0;
    double initial_grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + cubic zoom).
/// Never throws on non-convergence; returns the best iterate with converged = false.
MinimizeResult lbfgs_minimize(const Objective& f, Vector x0, const LbfgsOptions& opts = {});

/// Plain Adam descent for a fixed number of iterations, used as a warm start.
MinimizeResult adam_minimize(const Objective& f, Vector x0, int iterations, double lr);

}  // namespace oed
