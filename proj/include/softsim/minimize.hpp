#pragma once

#include <functional>

#include "softsim/array.hpp"

namespace softsim {

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double final_gradient_inf_norm = 0.0;
  double final_objective = 0.0;
  int line_search_failures = 0;
  // Objective at the start point followed by every accepted iterate.
  std::vector<double> accepted_objectives;
};

struct CGReport {
  int iterations = 0;
  double final_relative_residual = 0.0;
  bool breakdown = false;  // non-positive curvature encountered
};

struct MinimizeOptions {
  double tol_grad_inf = 1e-6;
  int max_iters = 2000;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
  // Optional positive per-component scaling: the step direction becomes
  // grad/diag_precond componentwise (plain gradient when empty). Convergence
  // is still measured on the unscaled gradient.
  std::vector<double> diag_precond;
};

/// Objective: value at x; fills *grad (same shape as x) when grad != nullptr.
using Objective = std::function<double(const Array&, Array*)>;

/// Gradient descent with backtracking line search. Accepted iterates never
/// increase the objective. A line search that bottoms out at machine
/// precision returns converged=false rather than throwing.
struct MinimizeResult {
  Array x;
  SolveReport report;
};
MinimizeResult minimize(const Objective& objective, Array x_init, const MinimizeOptions& opts);

/// Matrix-free CG for SPD operators. On a non-positive curvature direction
/// the solve restarts once with H + delta*I; a second failure reports
/// breakdown.
using LinearOperator = std::function<Array(const Array&)>;

struct CGResult {
  Array z;
  CGReport report;
};
CGResult cg_solve(const LinearOperator& apply_h, const Array& b, double tol_rel, int max_iters);

}  // namespace softsim
