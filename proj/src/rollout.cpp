#include "softsim/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace softsim {

double trajectory_reward(const Trajectory& traj) {
  const Array& x0 = traj.states.front().x;
  const Array& xh = traj.states.back().x;
  int n = x0.shape[0];
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += xh.at(i, 0) - x0.at(i, 0);
  return s / static_cast<double>(n);
}

Trajectory rollout(const SceneRuntime& rt, const PolicyParams& params, int horizon,
                   bool deterministic, std::mt19937_64* rng, const RolloutOptions& opts) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  Trajectory traj;
  traj.states.push_back(initial_state(rt.scene));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int t = 0; t < horizon; ++t) {
    Array a = policy_forward(rt, params, traj.states.back(), opts.range);
    if (!deterministic) {
      Array u = a;
      for (std::size_t i = 0; i < u.size(); ++i)
        u.data[i] += std::exp(params.log_std.data[i]) * dist(*rng);
      traj.samples.push_back(u);
      for (std::size_t i = 0; i < u.size(); ++i)
        u.data[i] = std::clamp(u.data[i], opts.range.min, opts.range.max);
      a = std::move(u);
    }
    DynamicResult step;
    try {
      step = dynamic_forward(rt, traj.states.back(), a, opts.solver);
    } catch (const SolveError& e) {
      throw SolveError("rollout step " + std::to_string(t) + ": " + e.what(), e.report);
    }
    traj.actions.push_back(std::move(a));
    traj.states.push_back(std::move(step.state1));
    if (opts.contexts) opts.contexts->push_back(std::move(step.ctx));
  }
  traj.reward = trajectory_reward(traj);
  return traj;
}

BpttResult bptt_gradient(const SceneRuntime& rt, const PolicyParams& params, int horizon,
                         const RolloutOptions& opts) {
  std::vector<StepContext> contexts;
  RolloutOptions ropts = opts;
  ropts.contexts = &contexts;
  Trajectory traj = rollout(rt, params, horizon, true, nullptr, ropts);

  BpttResult res;
  res.reward = traj.reward;
  res.grads.w1 = Array::zeros(params.w1.shape);
  res.grads.b1 = Array::zeros(params.b1.shape);
  res.grads.w2 = Array::zeros(params.w2.shape);
  res.grads.b2 = Array::zeros(params.b2.shape);
  res.grads.log_std = Array::zeros(params.log_std.shape);

  int n = rt.scene.num_vertices();
  // L = -reward; reward = mean over vertices of terminal x displacement.
  Array dldx = Array::zeros({n, 2});
  for (int i = 0; i < n; ++i) dldx.at(i, 0) = -1.0 / static_cast<double>(n);
  Array dldv = Array::zeros({n, 2});

  for (int t = horizon - 1; t >= 0; --t) {
    DynamicGrads dg = dynamic_backward(rt, contexts[t], dldx, dldv, opts.solver);

    Graph g;
    Var xv = g.input(traj.states[t].x);
    Var vv = g.input(traj.states[t].v);
    PolicyVars pv = policy_inputs(g, params);
    Var feat = state_features(g, rt, xv, vv);
    Var a = policy_actions(g, pv, feat, opts.range);
    Var s = g.dot(a, g.constant(dg.da));
    auto grads = g.gradient(s, {pv.w1, pv.b1, pv.w2, pv.b2, xv, vv}, false);
    auto acc = [](Array& dst, const Array& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
    };
    acc(res.grads.w1, grads[0].value());
    acc(res.grads.b1, grads[1].value());
    acc(res.grads.w2, grads[2].value());
    acc(res.grads.b2, grads[3].value());
    dldx = dg.dx0;
    dldv = dg.dv0;
    acc(dldx, grads[4].value());
    acc(dldv, grads[5].value());
  }
  return res;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  using nlohmann::json;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const State& s = traj.states[t];
    json rec;
    rec["t"] = t;
    json jx = json::array(), jv = json::array();
    int n = s.x.shape[0];
    for (int i = 0; i < n; ++i) {
      jx.push_back({s.x.at(i, 0), s.x.at(i, 1)});
      jv.push_back({s.v.at(i, 0), s.v.at(i, 1)});
    }
    rec["x"] = std::move(jx);
    rec["v"] = std::move(jv);
    if (t < traj.actions.size()) rec["a"] = traj.actions[t].data;
    out << rec.dump() << "\n";
  }
}

}  // namespace softsim
