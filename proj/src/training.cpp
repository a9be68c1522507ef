#include "softsim/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace softsim {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

double eval_reward(const SceneRuntime& rt, const PolicyParams& params, const TrainOptions& opts) {
  RolloutOptions ropts;
  ropts.solver = opts.solver;
  ropts.range = opts.range;
  return rollout(rt, params, opts.eval_horizon, true, nullptr, ropts).reward;
}

double log_prob(const PolicyParams& params, const Array& mean, const Array& u) {
  // Gaussian log density up to the additive constant; matches the graph
  // version in the surrogate so the ratio at unchanged params is exactly 1.
  double lp = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double std = std::exp(params.log_std.data[i]);
    double d = (u.data[i] - mean.data[i]) / std;
    lp += -0.5 * d * d - params.log_std.data[i];
  }
  return lp;
}

}  // namespace

AdamState make_adam(const std::vector<Array*>& params, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const Array* p : params) {
    s.m.push_back(Array::zeros(p->shape));
    s.v.push_back(Array::zeros(p->shape));
  }
  return s;
}

void adam_step(AdamState& state, const std::vector<Array*>& params,
               const std::vector<const Array*>& grads) {
  ++state.step;
  double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Array& p = *params[k];
    const Array& g = *grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g.data[i];
      state.m[k].data[i] = b1 * state.m[k].data[i] + (1.0 - b1) * gi;
      state.v[k].data[i] = b2 * state.v[k].data[i] + (1.0 - b2) * gi * gi;
      double mhat = state.m[k].data[i] / bc1;
      double vhat = state.v[k].data[i] / bc2;
      p.data[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

std::pair<PolicyParams, TrainLog> train_bptt(const SceneRuntime& rt, const TrainOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  PolicyParams params = init_policy(rt, opts.seed, opts.init_log_std);
  AdamState adam = make_adam(params.mean_params(), opts.adam);
  TrainLog log;
  long env_steps = 0;
  log.records.push_back({0, eval_reward(rt, params, opts), env_steps, ms_since(t0)});

  RolloutOptions ropts;
  ropts.solver = opts.solver;
  ropts.range = opts.range;
  for (int it = 1; it <= opts.iterations; ++it) {
    BpttResult res = bptt_gradient(rt, params, opts.horizon, ropts);
    std::vector<const Array*> grads{&res.grads.w1, &res.grads.b1, &res.grads.w2, &res.grads.b2};
    adam_step(adam, params.mean_params(), grads);
    env_steps += opts.horizon;
    log.records.push_back({it, eval_reward(rt, params, opts), env_steps, ms_since(t0)});
  }
  return {std::move(params), std::move(log)};
}

std::pair<PolicyParams, TrainLog> train_ppo(const SceneRuntime& rt, const TrainOptions& opts) {
  if (opts.batch_size < 1) throw std::invalid_argument("train_ppo: batch_size must be >= 1");
  auto t0 = std::chrono::steady_clock::now();
  PolicyParams params = init_policy(rt, opts.seed, opts.init_log_std);
  std::vector<Array*> all_params = params.mean_params();
  all_params.push_back(&params.log_std);
  AdamState adam = make_adam(all_params, opts.adam);
  TrainLog log;
  long env_steps = 0;
  log.records.push_back({0, eval_reward(rt, params, opts), env_steps, ms_since(t0)});

  RolloutOptions ropts;
  ropts.solver = opts.solver;
  ropts.range = opts.range;
  int h = opts.horizon;
  for (int it = 1; it <= opts.iterations; ++it) {
    // Sample the batch with per-trajectory rng streams split from the seed.
    std::vector<Trajectory> batch;
    for (int b = 0; b < opts.batch_size; ++b) {
      auto rng = rng_for(opts.seed, 1 + static_cast<std::uint64_t>(it - 1) * opts.batch_size + b);
      batch.push_back(rollout(rt, params, h, false, &rng, ropts));
    }

    // Old log-probabilities and batch-normalized terminal-reward advantages.
    std::vector<double> logp_old(batch.size() * static_cast<std::size_t>(h));
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (int t = 0; t < h; ++t) {
        Array mean = policy_forward(rt, params, batch[b].states[t], ropts.range);
        logp_old[b * h + t] = log_prob(params, mean, batch[b].samples[t]);
      }
    double rmean = 0.0;
    for (const Trajectory& tr : batch) rmean += tr.reward;
    rmean /= static_cast<double>(batch.size());
    double rvar = 0.0;
    for (const Trajectory& tr : batch) rvar += (tr.reward - rmean) * (tr.reward - rmean);
    double rstd = std::sqrt(rvar / static_cast<double>(batch.size()));
    std::vector<double> adv(batch.size() * static_cast<std::size_t>(h), 0.0);
    if (rstd > 1e-12)
      for (std::size_t b = 0; b < batch.size(); ++b)
        for (int t = 0; t < h; ++t) adv[b * h + t] = (batch[b].reward - rmean) / rstd;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
      Graph g;
      PolicyVars pv = policy_inputs(g, params);
      Var ls = g.input(params.log_std);
      Var sum_ls = g.sum(ls);
      Var std_v = g.exp(ls);
      std::vector<Var> logps;
      logps.reserve(adv.size());
      for (std::size_t b = 0; b < batch.size(); ++b)
        for (int t = 0; t < h; ++t) {
          Var feat = state_features(g, rt, g.constant(batch[b].states[t].x),
                                    g.constant(batch[b].states[t].v));
          Var mean = policy_actions(g, pv, feat, ropts.range);
          Var diff = g.div(g.constant(batch[b].samples[t]) - mean, std_v);
          Var lp = (-0.5) * g.sum(diff * diff) - sum_ls;
          logps.push_back(g.reshape(lp, {1}));
        }
      Var logp_new = g.concat(logps);
      Var ratio = g.exp(logp_new - g.constant(Array::vec(logp_old)));
      double lo = 1.0 - opts.clip_eps, hi = 1.0 + opts.clip_eps;
      Var clipped = g.add_const(g.relu(g.add_const(ratio, -lo)), lo) -
                    g.relu(g.add_const(ratio, -hi));
      Var a_const = g.constant(Array::vec(adv));
      Var s1 = ratio * a_const;
      Var s2 = clipped * a_const;
      Var surrogate = g.mean(s2 - g.relu(s2 - s1));  // min(s1, s2) per sample
      Var loss = -surrogate;
      auto grads = g.gradient(loss, {pv.w1, pv.b1, pv.w2, pv.b2, ls}, false);
      std::vector<const Array*> gptrs;
      std::vector<Array> gvals;
      gvals.reserve(grads.size());
      for (Var gv : grads) gvals.push_back(gv.value());
      for (const Array& ga : gvals) gptrs.push_back(&ga);
      adam_step(adam, all_params, gptrs);
    }

    env_steps += static_cast<long>(opts.batch_size) * h;
    log.records.push_back({it, eval_reward(rt, params, opts), env_steps, ms_since(t0)});
  }
  return {std::move(params), std::move(log)};
}

void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << "iter,reward,env_steps,wall_ms\n";
  char buf[160];
  for (const TrainRecord& r : log.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%ld,%.3f\n", r.iter, r.reward, r.env_steps,
                  r.wall_ms);
    out << buf;
  }
}

}  // namespace softsim
