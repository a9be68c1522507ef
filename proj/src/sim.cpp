#include "softsim/sim.hpp"

#include <cmath>

namespace softsim {

namespace {

int free_dof_count(const SceneRuntime& rt) { return 2 * static_cast<int>(rt.free_idx.size()); }

int cg_budget(const SceneRuntime& rt, const SolverOptions& opts) {
  return opts.cg_max_iters > 0 ? opts.cg_max_iters : 10 * std::max(free_dof_count(rt), 1);
}

void zero_pinned_rows(const SceneRuntime& rt, Array& g) {
  for (int p : rt.pinned_idx) {
    g.at(p, 0) = 0.0;
    g.at(p, 1) = 0.0;
  }
}

/// Keeps one graph alive across CG iterations so the energy forward pass and
/// the first-order backward pass are built only once.
class HvpOperator {
 public:
  template <class BuildEnergy>
  HvpOperator(const Array& x_free, BuildEnergy&& build) {
    xf_ = graph_.input(x_free);
    Var e = build(graph_, xf_);
    grad_ = graph_.gradient(e, {xf_}, true)[0];
  }

  Array apply(const Array& v) {
    Var s = graph_.dot(grad_, graph_.constant(v));
    return graph_.gradient(s, {xf_}, false)[0].value();
  }

 private:
  Graph graph_;
  Var xf_;
  Var grad_;
};

}  // namespace

double default_forward_tol(const SceneRuntime& rt) {
  return 1e-6 * std::max(1.0, rt.mean_free_mass);
}

QuasistaticResult quasistatic_forward(const SceneRuntime& rt, const Array& a,
                                      const Array& x_init_full, const SolverOptions& opts) {
  if (rt.pinned_idx.empty())
    throw SceneError("quasistatic mode requires at least one pinned vertex");
  MinimizeOptions mopts;
  mopts.tol_grad_inf = opts.forward_tol > 0.0 ? opts.forward_tol : default_forward_tol(rt);
  mopts.max_iters = opts.max_iters;

  Objective obj = [&](const Array& xf, Array* grad) {
    Graph g;
    Var xfv = grad ? g.input(xf) : g.constant(xf);
    Var xfull = full_positions(g, rt, xfv);
    Var e = total_potential(g, rt, xfull, g.constant(a), std::nullopt);
    if (grad) *grad = g.gradient(e, {xfv}, false)[0].value();
    return e.value().data[0];
  };

  // No mass term here, so estimate the Hessian diagonal once at the start
  // point and use it to scale the descent direction.
  Array x_init_free = restrict_rows(x_init_full, rt.free_idx);
  {
    HvpOperator hop(x_init_free, [&](Graph& g, Var xf) {
      return total_potential(g, rt, full_positions(g, rt, xf), g.constant(a), std::nullopt);
    });
    int dofs = static_cast<int>(x_init_free.size());
    mopts.diag_precond.assign(dofs, 0.0);
    Array e = Array::zeros(x_init_free.shape);
    double dmax = 0.0;
    for (int i = 0; i < dofs; ++i) {
      e.data[i] = 1.0;
      mopts.diag_precond[i] = std::abs(hop.apply(e).data[i]);
      dmax = std::max(dmax, mopts.diag_precond[i]);
      e.data[i] = 0.0;
    }
    double floor = std::max(1e-3 * dmax, 1e-12);
    for (double& d : mopts.diag_precond) d = std::max(d, floor);
  }

  MinimizeResult mr = minimize(obj, std::move(x_init_free), mopts);
  if (!mr.report.converged)
    throw SolveError("quasistatic forward did not converge (grad inf norm " +
                         std::to_string(mr.report.final_gradient_inf_norm) + ")",
                     mr.report);

  QuasistaticResult res;
  res.x1 = scatter_free(rt, mr.x);
  res.ctx.x1 = res.x1;
  res.ctx.a = a;
  res.ctx.report = mr.report;
  res.ctx.dynamic = false;
  return res;
}

Array quasistatic_backward(const SceneRuntime& rt, const StepContext& ctx,
                           const Array& dl_dx1, const SolverOptions& opts) {
  Array x1_free = restrict_rows(ctx.x1, rt.free_idx);
  HvpOperator hop(x1_free, [&](Graph& g, Var xf) {
    return total_potential(g, rt, full_positions(g, rt, xf), g.constant(ctx.a), std::nullopt);
  });
  Array b = restrict_rows(dl_dx1, rt.free_idx);
  CGResult cg = cg_solve([&](const Array& v) { return hop.apply(v); }, b, opts.cg_tol,
                         cg_budget(rt, opts));
  if (cg.report.breakdown)
    throw CGError("adjoint CG broke down (non-positive curvature)", cg.report);

  // dL/da = z^T (df/da) = -d/da <grad_x E, z>
  Graph g;
  Var xf = g.input(x1_free);
  Var av = g.input(ctx.a);
  Var e = total_potential(g, rt, full_positions(g, rt, xf), av, std::nullopt);
  Var grad = g.gradient(e, {xf}, true)[0];
  Var s = g.dot(grad, g.constant(cg.z));
  Array da = g.gradient(s, {av}, false)[0].value();
  for (double& v : da.data) v = -v;
  return da;
}

DynamicResult dynamic_forward(const SceneRuntime& rt, const State& state0, const Array& a,
                              const SolverOptions& opts) {
  for (std::size_t i = 0; i < rt.free_idx.size(); ++i)
    if (rt.rest.mass[rt.free_idx[i]] <= 0.0)
      throw SceneError("dynamic mode requires positive lumped mass on every free vertex");

  double h = rt.scene.dt;
  MinimizeOptions mopts;
  mopts.tol_grad_inf = opts.forward_tol > 0.0 ? opts.forward_tol : default_forward_tol(rt);
  mopts.max_iters = opts.max_iters;
  // The objective is mass-dominated; scaling the descent direction by the
  // inverse lumped mass makes its conditioning nearly h^2-small.
  mopts.diag_precond.reserve(2 * rt.free_idx.size());
  for (int i : rt.free_idx) {
    mopts.diag_precond.push_back(rt.rest.mass[i]);
    mopts.diag_precond.push_back(rt.rest.mass[i]);
  }

  Objective obj = [&](const Array& xf, Array* grad) {
    Graph g;
    Var xfv = grad ? g.input(xf) : g.constant(xf);
    Var xfull = full_positions(g, rt, xfv);
    Var e = incremental_potential(g, rt, xfull, g.constant(state0.x), g.constant(state0.v),
                                  g.constant(a));
    if (grad) *grad = g.gradient(e, {xfv}, false)[0].value();
    return e.value().data[0];
  };

  // Warm start at the momentum target x0 + h v0.
  Array warm = axpy(h, state0.v, state0.x);
  MinimizeResult mr = minimize(obj, restrict_rows(warm, rt.free_idx), mopts);
  if (!mr.report.converged)
    throw SolveError("dynamic forward did not converge (grad inf norm " +
                         std::to_string(mr.report.final_gradient_inf_norm) + ")",
                     mr.report);

  DynamicResult res;
  res.state1.x = scatter_free(rt, mr.x);
  res.state1.v = Array::zeros(res.state1.x.shape);
  for (int i : rt.free_idx) {
    res.state1.v.at(i, 0) = (res.state1.x.at(i, 0) - state0.x.at(i, 0)) / h;
    res.state1.v.at(i, 1) = (res.state1.x.at(i, 1) - state0.x.at(i, 1)) / h;
  }
  res.ctx.x1 = res.state1.x;
  res.ctx.x0 = state0.x;
  res.ctx.v0 = state0.v;
  res.ctx.a = a;
  res.ctx.report = mr.report;
  res.ctx.dynamic = true;
  return res;
}

DynamicGrads dynamic_backward(const SceneRuntime& rt, const StepContext& ctx,
                              const Array& dl_dx1, const Array& dl_dv1,
                              const SolverOptions& opts) {
  double h = rt.scene.dt;
  // Fold the explicit rule v1 = (x1 - x0)/h first.
  Array u = dl_dx1;
  for (std::size_t i = 0; i < u.size(); ++i) u.data[i] += dl_dv1.data[i] / h;

  Array x1_free = restrict_rows(ctx.x1, rt.free_idx);
  HvpOperator hop(x1_free, [&](Graph& g, Var xf) {
    return incremental_potential(g, rt, full_positions(g, rt, xf), g.constant(ctx.x0),
                                 g.constant(ctx.v0), g.constant(ctx.a));
  });
  Array b = restrict_rows(u, rt.free_idx);
  CGResult cg = cg_solve([&](const Array& v) { return hop.apply(v); }, b, opts.cg_tol,
                         cg_budget(rt, opts));
  if (cg.report.breakdown)
    throw CGError("adjoint CG broke down (non-positive curvature)", cg.report);
  // dL/dp += z^T (df_g/dp) = -d/dp <grad_x g, z> for p in {x0, v0, a}.
  Graph g;
  Var xf = g.input(x1_free);
  Var x0v = g.input(ctx.x0);
  Var v0v = g.input(ctx.v0);
  Var av = g.input(ctx.a);
  Var e = incremental_potential(g, rt, full_positions(g, rt, xf), x0v, v0v, av);
  Var grad = g.gradient(e, {xf}, true)[0];
  Var s = g.dot(grad, g.constant(cg.z));
  auto grads = g.gradient(s, {x0v, v0v, av}, false);

  DynamicGrads out;
  out.dx0 = grads[0].value();
  out.dv0 = grads[1].value();
  out.da = grads[2].value();
  for (double& v : out.dx0.data) v = -v;
  for (double& v : out.dv0.data) v = -v;
  for (double& v : out.da.data) v = -v;
  // Direct term from the explicit velocity rule: dL/dx0 -= dL/dv1 / h.
  for (std::size_t i = 0; i < out.dx0.size(); ++i) out.dx0.data[i] -= dl_dv1.data[i] / h;
  zero_pinned_rows(rt, out.dx0);
  zero_pinned_rows(rt, out.dv0);
  return out;
}

}  // namespace softsim
