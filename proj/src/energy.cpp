#include "softsim/energy.hpp"

#include <cmath>

namespace softsim {

namespace {

std::shared_ptr<std::vector<int>> fiber_endpoints(const SceneRuntime& rt, bool second) {
  auto idx = std::make_shared<std::vector<int>>();
  idx->reserve(rt.scene.fibers.size());
  for (const Fiber& f : rt.scene.fibers) idx->push_back(second ? f.j : f.i);
  return idx;
}

std::shared_ptr<std::vector<int>> triangle_corner(const SceneRuntime& rt, int corner) {
  auto idx = std::make_shared<std::vector<int>>();
  idx->reserve(rt.scene.triangles.size());
  for (const auto& t : rt.scene.triangles) idx->push_back(t[corner]);
  return idx;
}

}  // namespace

Var spring_energy(Graph& g, const SceneRuntime& rt, Var x, Var a) {
  int f = rt.scene.num_fibers();
  if (f == 0) return g.constant(Array::scalar(0.0));
  for (double av : a.value().data)
    if (av <= 0.0) throw std::domain_error("spring_energy: action values must be positive");
  Var xi = g.gather_rows(x, fiber_endpoints(rt, false));
  Var xj = g.gather_rows(x, fiber_endpoints(rt, true));
  Var d = xj - xi;
  Var len = g.sqrt(g.sum_axis(d * d, 1));
  Array l0({f}, rt.rest.rest_length);
  Array half_k = Array::zeros({f});
  for (int i = 0; i < f; ++i) half_k.data[i] = 0.5 * rt.scene.fibers[i].stiffness;
  Var ratio = g.div(len, a * g.constant(std::move(l0)));
  Var r = g.add_const(ratio, -1.0);
  return g.sum(g.constant(std::move(half_k)) * r * r);
}

Var neo_hookean_energy(Graph& g, const SceneRuntime& rt, Var x) {
  int m = rt.scene.num_triangles();
  if (m == 0) return g.constant(Array::scalar(0.0));
  Var x0 = g.gather_rows(x, triangle_corner(rt, 0));
  Var x1 = g.gather_rows(x, triangle_corner(rt, 1));
  Var x2 = g.gather_rows(x, triangle_corner(rt, 2));
  Var e1 = x1 - x0;
  Var e2 = x2 - x0;
  // Ds = [e1 e2] as columns, stored row-major per triangle.
  Var ds = g.col_scatter(g.col(e1, 0), 0, 4) + g.col_scatter(g.col(e2, 0), 1, 4) +
           g.col_scatter(g.col(e1, 1), 2, 4) + g.col_scatter(g.col(e2, 1), 3, 4);
  Var f = g.mat22_mul(ds, g.constant(rt.rest.dm_inv));
  Var i1 = g.sum_axis(f * f, 1);
  Var j = g.det22(f);
  // log(J) replaced by its 2nd-order expansion at J=1, total over all J.
  Var jm1 = g.add_const(j, -1.0);
  Var lj = jm1 - 0.5 * (jm1 * jm1);
  double mu = rt.scene.material.mu;
  double lam = rt.scene.material.lambda;
  Var psi = 0.5 * mu * g.add_const(i1, -2.0) - mu * lj + 0.5 * lam * (lj * lj);
  Array area({m}, rt.rest.area);
  return g.sum(g.constant(std::move(area)) * psi);
}

Var collision_energy(Graph& g, const SceneRuntime& rt, Var x) {
  double k = rt.scene.contact.k_collision;
  if (k == 0.0) return g.constant(Array::scalar(0.0));
  Var pen = g.relu(-g.col(x, 1));
  return k * g.sum(pen * pen);
}

Var friction_energy(Graph& g, const SceneRuntime& rt, Var x, Var x0) {
  double k = rt.scene.contact.k_friction;
  if (k == 0.0) return g.constant(Array::scalar(0.0));
  double h = rt.scene.dt;
  Var vx = (1.0 / h) * (g.col(x, 0) - g.col(x0, 0));
  Var gate = g.relu(g.add_const(-g.col(x0, 1), rt.scene.contact.eps));
  return k * g.sum(vx * vx * gate);
}

Var gravity_energy(Graph& g, const SceneRuntime& rt, Var x) {
  double gx = rt.scene.gravity[0], gy = rt.scene.gravity[1];
  if (gx == 0.0 && gy == 0.0) return g.constant(Array::scalar(0.0));
  int n = rt.scene.num_vertices();
  Array wx = Array::zeros({n}), wy = Array::zeros({n});
  for (int i = 0; i < n; ++i) {
    wx.data[i] = -rt.rest.mass[i] * gx;
    wy.data[i] = -rt.rest.mass[i] * gy;
  }
  return g.sum(g.constant(std::move(wx)) * g.col(x, 0)) +
         g.sum(g.constant(std::move(wy)) * g.col(x, 1));
}

Var total_potential(Graph& g, const SceneRuntime& rt, Var x, Var a, std::optional<Var> x0) {
  Var e = spring_energy(g, rt, x, a) + neo_hookean_energy(g, rt, x) +
          collision_energy(g, rt, x) + gravity_energy(g, rt, x);
  if (x0) e = e + friction_energy(g, rt, x, *x0);
  return e;
}

Var incremental_potential(Graph& g, const SceneRuntime& rt, Var x, Var x0, Var v0, Var a) {
  double h = rt.scene.dt;
  int n = rt.scene.num_vertices();
  Array half_m = Array::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    half_m.at(i, 0) = 0.5 * rt.rest.mass[i];
    half_m.at(i, 1) = 0.5 * rt.rest.mass[i];
  }
  Var d = x - (x0 + h * v0);
  Var momentum = g.sum(g.constant(std::move(half_m)) * d * d);
  return momentum + (h * h) * total_potential(g, rt, x, a, x0);
}

Var full_positions(Graph& g, const SceneRuntime& rt, Var x_free) {
  if (rt.pinned_idx.empty()) return x_free;
  int n = rt.scene.num_vertices();
  Array pinned_full = Array::zeros({n, 2});
  for (int p : rt.pinned_idx) {
    pinned_full.at(p, 0) = rt.scene.vertices.at(p, 0);
    pinned_full.at(p, 1) = rt.scene.vertices.at(p, 1);
  }
  auto idx = std::make_shared<std::vector<int>>(rt.free_idx);
  return g.scatter_rows(x_free, std::move(idx), n) + g.constant(std::move(pinned_full));
}

Array restrict_rows(const Array& full, const std::vector<int>& idx) {
  int k = full.shape[1];
  Array out = Array::zeros({static_cast<int>(idx.size()), k});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < k; ++c) out.at(static_cast<int>(r), c) = full.at(idx[r], c);
  return out;
}

Array scatter_free(const SceneRuntime& rt, const Array& free_rows) {
  int n = rt.scene.num_vertices();
  Array out = Array::zeros({n, 2});
  for (int p : rt.pinned_idx) {
    out.at(p, 0) = rt.scene.vertices.at(p, 0);
    out.at(p, 1) = rt.scene.vertices.at(p, 1);
  }
  for (std::size_t r = 0; r < rt.free_idx.size(); ++r) {
    out.at(rt.free_idx[r], 0) = free_rows.at(static_cast<int>(r), 0);
    out.at(rt.free_idx[r], 1) = free_rows.at(static_cast<int>(r), 1);
  }
  return out;
}

}  // namespace softsim
