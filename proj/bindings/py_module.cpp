#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "softsim/training.hpp"

namespace py = pybind11;
using namespace softsim;

namespace {

Array to_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Array out;
  out.shape.assign(a.shape(), a.shape() + a.ndim());
  out.data.assign(a.data(), a.data() + a.size());
  return out;
}

py::array_t<double> to_numpy(const Array& a) {
  std::vector<py::ssize_t> shape(a.shape.begin(), a.shape.end());
  py::array_t<double> out(shape);
  std::copy(a.data.begin(), a.data.end(), out.mutable_data());
  return out;
}

SolverOptions solver_options(double forward_tol, int max_iters, double cg_tol) {
  SolverOptions o;
  o.forward_tol = forward_tol;
  o.max_iters = max_iters;
  o.cg_tol = cg_tol;
  return o;
}

struct PySim {
  std::shared_ptr<SceneRuntime> rt_ptr;
  SceneRuntime& rt;
  SolverOptions opts;

  explicit PySim(const std::string& path, double forward_tol, int max_iters, double cg_tol)
      : rt_ptr(std::make_shared<SceneRuntime>(make_runtime(load_scene_file(path)))),
        rt(*rt_ptr),
        opts(solver_options(forward_tol, max_iters, cg_tol)) {}
};

// Steps share ownership of the runtime so they stay valid after the Sim dies.
struct PyStep {
  std::shared_ptr<SceneRuntime> rt;
  SolverOptions opts;
  StepContext ctx;
};

TrainOptions train_options(const PySim& sim, int iterations, int horizon, std::uint64_t seed,
                           double lr, int batch, double init_std, int eval_horizon) {
  TrainOptions o;
  o.iterations = iterations;
  o.horizon = horizon;
  o.eval_horizon = eval_horizon > 0 ? eval_horizon : horizon;
  o.seed = seed;
  o.adam.lr = lr;
  o.batch_size = batch;
  o.init_log_std = std::log(init_std);
  return o;
}

py::list log_to_list(const TrainLog& log) {
  py::list out;
  for (const TrainRecord& r : log.records)
    out.append(py::make_tuple(r.iter, r.reward, r.env_steps, r.wall_ms));
  return out;
}

}  // namespace

PYBIND11_MODULE(softsim, m) {
  m.doc() = "differentiable 2d soft-body simulator";

  py::register_exception<SceneError>(m, "SceneError");
  py::register_exception<SolveError>(m, "SolveError");
  py::register_exception<CGError>(m, "CGError");

  py::class_<PolicyParams>(m, "Policy")
      .def_property_readonly("w1", [](const PolicyParams& p) { return to_numpy(p.w1); })
      .def_property_readonly("b1", [](const PolicyParams& p) { return to_numpy(p.b1); })
      .def_property_readonly("w2", [](const PolicyParams& p) { return to_numpy(p.w2); })
      .def_property_readonly("b2", [](const PolicyParams& p) { return to_numpy(p.b2); })
      .def_property_readonly("log_std", [](const PolicyParams& p) { return to_numpy(p.log_std); })
      .def("serialize", [](const PolicyParams& p) { return serialize_policy(p); })
      .def_static("parse", [](const std::string& text) { return parse_policy(text); });

  py::class_<PyStep>(m, "Step")
      .def_property_readonly("x1", [](const PyStep& s) { return to_numpy(s.ctx.x1); })
      .def("backward",
           [](const PyStep& s, py::array_t<double> dl_dx1, py::array_t<double> dl_dv1) {
             if (!s.ctx.dynamic) throw std::invalid_argument("not a dynamic step");
             DynamicGrads g =
                 dynamic_backward(*s.rt, s.ctx, to_array(dl_dx1), to_array(dl_dv1), s.opts);
             return py::make_tuple(to_numpy(g.dx0), to_numpy(g.dv0), to_numpy(g.da));
           },
           py::arg("dl_dx1"), py::arg("dl_dv1"))
      .def("backward_quasistatic", [](const PyStep& s, py::array_t<double> dl_dx1) {
        if (s.ctx.dynamic) throw std::invalid_argument("not a quasistatic step");
        return to_numpy(quasistatic_backward(*s.rt, s.ctx, to_array(dl_dx1), s.opts));
      }, py::arg("dl_dx1"));

  py::class_<PySim>(m, "Sim")
      .def(py::init<const std::string&, double, int, double>(), py::arg("scene_path"),
           py::arg("forward_tol") = -1.0, py::arg("max_iters") = 10000, py::arg("cg_tol") = 1e-10)
      .def_property_readonly("num_vertices",
                             [](const PySim& s) { return s.rt.scene.num_vertices(); })
      .def_property_readonly("num_fibers", [](const PySim& s) { return s.rt.scene.num_fibers(); })
      .def_property_readonly("dt", [](const PySim& s) { return s.rt.scene.dt; })
      .def_property_readonly("vertices", [](const PySim& s) { return to_numpy(s.rt.scene.vertices); })
      .def_property_readonly("pinned", [](const PySim& s) { return s.rt.scene.pinned; })
      .def("dynamic_step",
           [](PySim& s, py::array_t<double> x, py::array_t<double> v, py::array_t<double> a) {
             State s0{to_array(x), to_array(v)};
             DynamicResult r = dynamic_forward(s.rt, s0, to_array(a), s.opts);
             PyStep step{s.rt_ptr, s.opts, r.ctx};
             return py::make_tuple(to_numpy(r.state1.x), to_numpy(r.state1.v), step);
           },
           py::arg("x"), py::arg("v"), py::arg("a"))
      .def("quasistatic",
           [](PySim& s, py::array_t<double> a) {
             QuasistaticResult r = quasistatic_forward(s.rt, to_array(a), s.rt.scene.vertices,
                                                       s.opts);
             PyStep step{s.rt_ptr, s.opts, r.ctx};
             return py::make_tuple(to_numpy(r.x1), step);
           },
           py::arg("a"))
      .def("init_policy",
           [](const PySim& s, std::uint64_t seed, double init_std) {
             return init_policy(s.rt, seed, std::log(init_std));
           },
           py::arg("seed") = 0, py::arg("init_std") = 0.1)
      .def("policy_actions",
           [](const PySim& s, const PolicyParams& p, py::array_t<double> x,
              py::array_t<double> v) {
             State st{to_array(x), to_array(v)};
             return to_numpy(policy_forward(s.rt, p, st));
           },
           py::arg("policy"), py::arg("x"), py::arg("v"))
      .def("rollout",
           [](PySim& s, const PolicyParams& p, int horizon, bool deterministic,
              std::uint64_t seed) {
             RolloutOptions ropts;
             ropts.solver = s.opts;
             auto rng = rng_for(seed, 0);
             Trajectory traj = rollout(s.rt, p, horizon, deterministic,
                                       deterministic ? nullptr : &rng, ropts);
             py::list xs, vs, as;
             for (const State& st : traj.states) {
               xs.append(to_numpy(st.x));
               vs.append(to_numpy(st.v));
             }
             for (const Array& a : traj.actions) as.append(to_numpy(a));
             return py::dict(py::arg("reward") = traj.reward, py::arg("x") = xs,
                             py::arg("v") = vs, py::arg("a") = as);
           },
           py::arg("policy"), py::arg("horizon"), py::arg("deterministic") = true,
           py::arg("seed") = 0)
      .def("bptt_gradient",
           [](PySim& s, const PolicyParams& p, int horizon) {
             RolloutOptions ropts;
             ropts.solver = s.opts;
             BpttResult r = bptt_gradient(s.rt, p, horizon, ropts);
             return py::make_tuple(
                 r.reward, py::make_tuple(to_numpy(r.grads.w1), to_numpy(r.grads.b1),
                                          to_numpy(r.grads.w2), to_numpy(r.grads.b2)));
           },
           py::arg("policy"), py::arg("horizon"))
      .def("train_bptt",
           [](PySim& s, int iterations, int horizon, std::uint64_t seed, double lr,
              int eval_horizon) {
             auto [params, log] = train_bptt(
                 s.rt, train_options(s, iterations, horizon, seed, lr, 4, 0.1, eval_horizon));
             return py::make_tuple(params, log_to_list(log));
           },
           py::arg("iterations") = 30, py::arg("horizon") = 100, py::arg("seed") = 0,
           py::arg("lr") = 1e-3, py::arg("eval_horizon") = -1)
      .def("train_ppo",
           [](PySim& s, int iterations, int horizon, std::uint64_t seed, double lr, int batch,
              double init_std, int eval_horizon) {
             auto [params, log] = train_ppo(
                 s.rt,
                 train_options(s, iterations, horizon, seed, lr, batch, init_std, eval_horizon));
             return py::make_tuple(params, log_to_list(log));
           },
           py::arg("iterations") = 30, py::arg("horizon") = 100, py::arg("seed") = 0,
           py::arg("lr") = 1e-3, py::arg("batch") = 4, py::arg("init_std") = 0.1,
           py::arg("eval_horizon") = -1);
}
