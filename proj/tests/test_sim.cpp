#include <cmath>
#include <random>

#include "doctest.h"
#include "softsim/sim.hpp"
#include "test_util.hpp"

using namespace softsim;
using namespace softsim::testing;

namespace {

SceneRuntime pinned_fiber_scene(double k) {
  Scene s = load_scene(R"({
    "vertices": [[0,0],[1,0]],
    "fibers": [{"i":0,"j":1,"stiffness":)" + std::to_string(k) + R"(}],
    "material": {"mu": 1.0, "lambda": 0.0, "density": 1.0},
    "pinned": [0],
    "gravity": [0,0]
  })");
  return make_runtime(std::move(s));
}

SceneRuntime ballistic_scene() {
  Scene s = load_scene(R"({
    "vertices": [[0,0],[1,0],[0,1]],
    "triangles": [[0,1,2]],
    "material": {"mu": 1.0, "lambda": 1.0, "density": 6.0},
    "dt": 0.1
  })");
  return make_runtime(std::move(s));
}

SceneRuntime grounded_scene() {
  // Triangulated quad resting just above the floor, one actuated fiber.
  Scene s = load_scene(R"({
    "vertices": [[0,0.005],[1,0.005],[1,1],[0,1]],
    "triangles": [[0,1,2],[0,2,3]],
    "fibers": [{"i":0,"j":2,"stiffness":4.0}],
    "material": {"mu": 200.0, "lambda": 100.0, "density": 1.0},
    "contact": {"k_collision": 1000.0, "k_friction": 5.0, "eps": 0.01},
    "dt": 0.01
  })");
  return make_runtime(std::move(s));
}

SolverOptions tight_opts() {
  SolverOptions o;
  o.forward_tol = 1e-10;
  o.cg_tol = 1e-12;
  o.max_iters = 20000;
  return o;
}

}  // namespace

TEST_CASE("quasistatic: fiber contracts to the actuated rest length") {
  SceneRuntime rt = pinned_fiber_scene(2.0);
  SolverOptions opts = tight_opts();
  Array a = Array::vec({0.5});
  QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices, opts);
  CHECK(r.x1.at(0, 0) == 0.0);  // pinned row untouched
  CHECK(r.x1.at(0, 1) == 0.0);
  CHECK(r.x1.at(1, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(r.x1.at(1, 1)) < 1e-8);

  // a = 1 leaves the rest pose alone
  QuasistaticResult rest = quasistatic_forward(rt, Array::vec({1.0}), rt.scene.vertices, opts);
  CHECK(rest.x1.at(1, 0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("quasistatic: stronger contraction pulls the endpoint closer") {
  SceneRuntime rt = pinned_fiber_scene(3.0);
  SolverOptions opts = tight_opts();
  double prev = 2.0;
  for (double a : {1.0, 0.8, 0.6, 0.4}) {
    QuasistaticResult r = quasistatic_forward(rt, Array::vec({a}), rt.scene.vertices, opts);
    double len = std::hypot(r.x1.at(1, 0), r.x1.at(1, 1));
    CHECK(len == doctest::Approx(a).epsilon(1e-6));
    CHECK(len < prev);
    prev = len;
  }
}

TEST_CASE("quasistatic backward: endpoint position per unit action is the rest length") {
  SceneRuntime rt = pinned_fiber_scene(2.0);
  SolverOptions opts = tight_opts();
  Array a = Array::vec({0.5});
  QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices, opts);
  Array dl_dx1 = Array::zeros({2, 2});
  dl_dx1.at(1, 0) = 1.0;  // L = x-coordinate of the free endpoint
  Array da = quasistatic_backward(rt, r.ctx, dl_dx1, opts);
  REQUIRE(da.size() == 1);
  CHECK(da.data[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("quasistatic refuses fully unpinned scenes") {
  Scene s = load_scene(R"({
    "vertices": [[0,0],[1,0],[0,1]],
    "triangles": [[0,1,2]],
    "material": {"mu": 1.0, "lambda": 1.0, "density": 1.0},
    "gravity": [0,0]
  })");
  SceneRuntime rt = make_runtime(std::move(s));
  CHECK_THROWS_AS(quasistatic_forward(rt, Array::vec({1.0}), rt.scene.vertices), SceneError);
}

TEST_CASE("forward solve failure raises with the report attached") {
  SceneRuntime rt = grounded_scene();
  SolverOptions opts;
  opts.forward_tol = 1e-10;
  opts.max_iters = 1;
  try {
    dynamic_forward(rt, initial_state(rt.scene), Array::vec({0.5}), opts);
    FAIL("expected SolveError");
  } catch (const SolveError& e) {
    CHECK(!e.report.converged);
    CHECK(e.report.iterations == 1);
  }
}

TEST_CASE("dynamic: free fall under gravity only") {
  SceneRuntime rt = ballistic_scene();
  SolverOptions opts = tight_opts();
  State s0 = initial_state(rt.scene);
  for (int i = 0; i < 3; ++i) s0.v.at(i, 0) = 1.0;
  DynamicResult r = dynamic_forward(rt, s0, Array::vec({1.0}), opts);
  // backward Euler: x1 = x0 + h v0 + h^2 g, v1 = v0 + h g
  for (int i = 0; i < 3; ++i) {
    CHECK(r.state1.x.at(i, 0) == doctest::Approx(s0.x.at(i, 0) + 0.1).epsilon(1e-8));
    CHECK(r.state1.x.at(i, 1) == doctest::Approx(s0.x.at(i, 1) - 0.098).epsilon(1e-8));
    CHECK(r.state1.v.at(i, 0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.state1.v.at(i, 1) == doctest::Approx(-0.98).epsilon(1e-8));
  }
}

TEST_CASE("dynamic backward: zero-potential step reduces to the chain rule") {
  // Built directly: mu = 0 turns the elastic term off entirely, leaving only
  // the momentum term, so x1 = x0 + h v0 and v1 = v0 hold exactly.
  Scene s;
  s.vertices = Array({3, 2}, {0, 0, 1, 0, 0, 1});
  s.triangles = {{{0, 1, 2}}};
  s.material = {0.0, 0.0, 6.0};
  s.gravity[0] = s.gravity[1] = 0.0;
  s.dt = 0.05;
  SceneRuntime rt = make_runtime(std::move(s));
  SolverOptions opts = tight_opts();
  State s0 = initial_state(rt.scene);
  for (int i = 0; i < 3; ++i) {
    s0.v.at(i, 0) = 0.3;
    s0.v.at(i, 1) = -0.2;
  }
  DynamicResult r = dynamic_forward(rt, s0, Array::vec({1.0}), opts);
  std::mt19937_64 rng(7);
  Array dl_dx1 = random_array({3, 2}, rng);
  Array dl_dv1 = random_array({3, 2}, rng);
  DynamicGrads g = dynamic_backward(rt, r.ctx, dl_dx1, dl_dv1, opts);
  // x1 = x0 + h v0 and v1 = v0 exactly, so dL/dx0 = dL/dx1 and
  // dL/dv0 = h dL/dx1 + dL/dv1.
  double h = rt.scene.dt;
  for (std::size_t i = 0; i < dl_dx1.size(); ++i) {
    CHECK(g.dx0.data[i] == doctest::Approx(dl_dx1.data[i]).epsilon(1e-12));
    CHECK(g.dv0.data[i] ==
          doctest::Approx(h * dl_dx1.data[i] + dl_dv1.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("dynamic backward matches finite differences of a re-solved step") {
  SceneRuntime rt = grounded_scene();
  SolverOptions opts = tight_opts();
  std::mt19937_64 rng(11);
  State s0 = initial_state(rt.scene);
  Array vnoise = random_array({4, 2}, rng, -0.2, 0.2);
  for (std::size_t i = 0; i < s0.v.size(); ++i) s0.v.data[i] = vnoise.data[i];
  Array a = Array::vec({0.85});
  Array w_x = random_array({4, 2}, rng);
  Array w_v = random_array({4, 2}, rng);

  auto loss = [&](const State& s0q, const Array& aq) {
    DynamicResult r = dynamic_forward(rt, s0q, aq, opts);
    return dot_val(w_x, r.state1.x) + dot_val(w_v, r.state1.v);
  };

  DynamicResult r = dynamic_forward(rt, s0, a, opts);
  DynamicGrads g = dynamic_backward(rt, r.ctx, w_x, w_v, opts);

  const double eps = 1e-5;
  Array fd_a = fd_gradient([&](const Array& aq) { return loss(s0, aq); }, a, eps);
  CHECK(max_rel_err(g.da, fd_a) < 1e-4);

  Array fd_x0 = fd_gradient(
      [&](const Array& xq) {
        State sq = s0;
        sq.x = xq;
        return loss(sq, a);
      },
      s0.x, eps);
  CHECK(max_rel_err(g.dx0, fd_x0) < 1e-4);

  Array fd_v0 = fd_gradient(
      [&](const Array& vq) {
        State sq = s0;
        sq.v = vq;
        return loss(sq, a);
      },
      s0.v, eps);
  CHECK(max_rel_err(g.dv0, fd_v0) < 1e-4);
}

TEST_CASE("quasistatic backward matches finite differences of a re-solve") {
  Scene s = load_scene(R"({
    "vertices": [[0,0],[1,0],[1,1],[0,1]],
    "triangles": [[0,1,2],[0,2,3]],
    "fibers": [{"i":0,"j":2,"stiffness":3.0},{"i":1,"j":3,"stiffness":2.0}],
    "material": {"mu": 2.0, "lambda": 1.0, "density": 1.0},
    "pinned": [0,1],
    "gravity": [0,-1.0]
  })");
  SceneRuntime rt = make_runtime(std::move(s));
  SolverOptions opts = tight_opts();
  std::mt19937_64 rng(19);
  Array a = Array::vec({0.8, 0.9});
  Array w = random_array({4, 2}, rng);
  for (int p : rt.pinned_idx)
    for (int c = 0; c < 2; ++c) w.at(p, c) = 0.0;

  QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices, opts);
  Array da = quasistatic_backward(rt, r.ctx, w, opts);
  Array fd = fd_gradient(
      [&](const Array& aq) {
        QuasistaticResult rq = quasistatic_forward(rt, aq, rt.scene.vertices, opts);
        return dot_val(w, rq.x1);
      },
      a, 1e-5);
  CHECK(max_rel_err(da, fd) < 1e-4);
}

TEST_CASE("resting contact settles without drifting through the floor") {
  SceneRuntime rt = grounded_scene();
  SolverOptions opts;
  State s = initial_state(rt.scene);
  Array a = Array::vec({1.0});
  for (int step = 0; step < 80; ++step) s = dynamic_forward(rt, s, a, opts).state1;
  double min_y = 1e9;
  for (int i = 0; i < 4; ++i) min_y = std::min(min_y, s.x.at(i, 1));
  CHECK(min_y > -0.05);
  CHECK(inf_norm(s.v) < 0.05);
}
