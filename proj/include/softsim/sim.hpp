#pragma once

#include "softsim/energy.hpp"
#include "softsim/minimize.hpp"
#include "softsim/scene.hpp"

namespace softsim {

struct SolveError : std::runtime_error {
  SolveReport report;
  SolveError(const std::string& msg, SolveReport r) : std::runtime_error(msg), report(r) {}
};

struct CGError : std::runtime_error {
  CGReport report;
  CGError(const std::string& msg, CGReport r) : std::runtime_error(msg), report(r) {}
};

struct SolverOptions {
  double forward_tol = -1.0;  // <0: 1e-6 * max(1, mean free lumped mass)
  int max_iters = 2000;
  double cg_tol = 1e-10;
  int cg_max_iters = -1;      // <0: 10 * free DOF count
};

/// Saved inputs and the converged minimizer of one step; enough to run the
/// backward pass without re-solving.
struct StepContext {
  Array x1;  // (n,2) converged positions
  Array x0, v0, a;
  SolveReport report;
  bool dynamic = false;
};

double default_forward_tol(const SceneRuntime& rt);

struct QuasistaticResult {
  Array x1;
  StepContext ctx;
};

/// x1 = argmin of the total potential over free DOFs (friction excluded).
/// Refuses scenes with no pinned vertices: the translation null space makes
/// the Hessian singular at the minimum.
QuasistaticResult quasistatic_forward(const SceneRuntime& rt, const Array& a,
                                      const Array& x_init_full, const SolverOptions& opts = {});

/// Adjoint solve H z = dL/dx1 followed by z^T (df/da).
Array quasistatic_backward(const SceneRuntime& rt, const StepContext& ctx,
                           const Array& dl_dx1, const SolverOptions& opts = {});

struct DynamicResult {
  State state1;
  StepContext ctx;
};

/// Backward-Euler step: x1 minimizes the incremental potential (warm start
/// x0 + h v0), then v1 = (x1 - x0)/h. Pinned rows stay at rest with zero
/// velocity.
DynamicResult dynamic_forward(const SceneRuntime& rt, const State& state0, const Array& a,
                              const SolverOptions& opts = {});

struct DynamicGrads {
  Array dx0, dv0, da;
};

/// Implicit differentiation of one dynamic step for all upstream inputs.
DynamicGrads dynamic_backward(const SceneRuntime& rt, const StepContext& ctx,
                              const Array& dl_dx1, const Array& dl_dv1,
                              const SolverOptions& opts = {});

}  // namespace softsim
