#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "softsim/training.hpp"

using namespace softsim;

namespace {

// exit codes: 0 ok (gradcheck: all below threshold), 1 gradcheck above
// threshold, 2 bad flags, 3 scene/file errors, 4 solver non-convergence
constexpr int kExitFlags = 2;
constexpr int kExitScene = 3;
constexpr int kExitSolver = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SceneError("cannot write " + path);
  out << text;
}

struct BadFlags : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// "const:V" -> one action value V for every fiber.
double parse_const_actions(const std::string& spec) {
  if (spec.rfind("const:", 0) != 0)
    throw BadFlags("--actions must look like const:VALUE, got '" + spec + "'");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(spec.substr(6), &used);
  } catch (const std::exception&) {
    throw BadFlags("--actions: cannot parse '" + spec + "'");
  }
  if (used != spec.size() - 6) throw BadFlags("--actions: trailing junk in '" + spec + "'");
  return v;
}

struct SimulateArgs {
  std::string scene, out, policy, actions = "const:1.0";
  int steps = 1;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& args) {
  SceneRuntime rt = make_runtime(load_scene_file(args.scene));
  std::optional<PolicyParams> policy;
  if (!args.policy.empty()) policy = parse_policy(read_file(args.policy));
  double const_a = parse_const_actions(args.actions);

  Trajectory traj;
  traj.states.push_back(initial_state(rt.scene));
  for (int t = 0; t < args.steps; ++t) {
    Array a = policy ? policy_forward(rt, *policy, traj.states.back())
                     : Array::full({rt.scene.num_fibers()}, const_a);
    DynamicResult step;
    try {
      step = dynamic_forward(rt, traj.states.back(), a);
    } catch (const SolveError& e) {
      throw SolveError("step " + std::to_string(t) + ": " + e.what(), e.report);
    }
    traj.actions.push_back(std::move(a));
    traj.states.push_back(std::move(step.state1));
  }
  traj.reward = trajectory_reward(traj);

  std::ostringstream out;
  write_trajectory(out, traj);
  write_file(args.out, out.str());
  std::cerr << "wrote " << traj.states.size() << " records to " << args.out << "\n";
  return 0;
}

struct QuasistaticArgs {
  std::string scene, out, actions = "const:1.0";
};

int run_quasistatic(const QuasistaticArgs& args) {
  SceneRuntime rt = make_runtime(load_scene_file(args.scene));
  double const_a = parse_const_actions(args.actions);
  Array a = Array::full({rt.scene.num_fibers()}, const_a);

  QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices);
  Trajectory traj;
  traj.states.push_back(initial_state(rt.scene));
  traj.actions.push_back(a);
  State solved;
  solved.x = r.x1;
  solved.v = Array::zeros(r.x1.shape);
  traj.states.push_back(std::move(solved));
  traj.reward = trajectory_reward(traj);

  std::ostringstream out;
  write_trajectory(out, traj);
  write_file(args.out, out.str());
  std::cerr << "converged in " << r.ctx.report.iterations << " iterations\n";
  return 0;
}

struct GradcheckArgs {
  std::string scene, mode = "dynamic";
  std::uint64_t seed = 0;
  double fd_step = 1e-5;
  double threshold = 1e-4;
};

Array random_in(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a = Array::zeros(std::move(shape));
  for (double& v : a.data) v = dist(rng);
  return a;
}

double fd_scalar(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

double report_error(const std::string& label, const Array& got, const Array& want) {
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double denom = std::max(1.0, std::abs(want.data[i]));
    err = std::max(err, std::abs(got.data[i] - want.data[i]) / denom);
  }
  std::printf("%s: max rel err %.3e\n", label.c_str(), err);
  return err;
}

SolverOptions tight_solver() {
  SolverOptions o;
  o.forward_tol = 1e-10;
  o.cg_tol = 1e-12;
  o.max_iters = 20000;
  return o;
}

int run_gradcheck(const GradcheckArgs& args) {
  SceneRuntime rt = make_runtime(load_scene_file(args.scene));
  SolverOptions opts = tight_solver();
  auto rng = rng_for(args.seed, 0);
  int n = rt.scene.num_vertices();
  int f = rt.scene.num_fibers();
  double worst = 0.0;

  if (args.mode == "quasistatic") {
    Array a = random_in({f}, rng, 0.5, 0.95);
    Array w = random_in({n, 2}, rng, -1.0, 1.0);
    for (int p : rt.pinned_idx) w.at(p, 0) = w.at(p, 1) = 0.0;
    QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices, opts);
    Array da = quasistatic_backward(rt, r.ctx, w, opts);
    Array fd = Array::zeros({f});
    for (int k = 0; k < f; ++k) {
      Array aq = a;
      fd.data[k] = fd_scalar(
          [&](double v) {
            aq.data[k] = v;
            return dot_val(w, quasistatic_forward(rt, aq, rt.scene.vertices, opts).x1);
          },
          a.data[k], args.fd_step);
    }
    worst = report_error("a", da, fd);
  } else if (args.mode == "dynamic") {
    State s0 = initial_state(rt.scene);
    s0.v = random_in({n, 2}, rng, -0.2, 0.2);
    for (int p : rt.pinned_idx) s0.v.at(p, 0) = s0.v.at(p, 1) = 0.0;
    Array a = random_in({f}, rng, 0.5, 0.95);
    Array wx = random_in({n, 2}, rng, -1.0, 1.0);
    Array wv = random_in({n, 2}, rng, -1.0, 1.0);
    auto loss = [&](const State& s, const Array& aq) {
      DynamicResult r = dynamic_forward(rt, s, aq, opts);
      return dot_val(wx, r.state1.x) + dot_val(wv, r.state1.v);
    };
    DynamicResult r = dynamic_forward(rt, s0, a, opts);
    DynamicGrads g = dynamic_backward(rt, r.ctx, wx, wv, opts);
    auto fd_over = [&](Array& target) {
      Array fd = Array::zeros(target.shape);
      for (std::size_t i = 0; i < target.size(); ++i) {
        double saved = target.data[i];
        fd.data[i] = fd_scalar(
            [&](double v) {
              target.data[i] = v;
              double out = loss(s0, a);
              target.data[i] = saved;
              return out;
            },
            saved, args.fd_step);
      }
      return fd;
    };
    if (f > 0) worst = std::max(worst, report_error("a", g.da, fd_over(a)));
    Array fd_x0 = fd_over(s0.x);
    for (int p : rt.pinned_idx) fd_x0.at(p, 0) = fd_x0.at(p, 1) = 0.0;
    worst = std::max(worst, report_error("x0", g.dx0, fd_x0));
    Array fd_v0 = fd_over(s0.v);
    for (int p : rt.pinned_idx) fd_v0.at(p, 0) = fd_v0.at(p, 1) = 0.0;
    worst = std::max(worst, report_error("v0", g.dv0, fd_v0));
  } else if (args.mode == "bptt") {
    const int horizon = 5;
    PolicyParams p = init_policy(rt, args.seed, std::log(0.1));
    RolloutOptions ropts;
    ropts.solver = opts;
    BpttResult res = bptt_gradient(rt, p, horizon, ropts);
    auto loss_at = [&](const PolicyParams& q) {
      return -rollout(rt, q, horizon, true, nullptr, ropts).reward;
    };
    auto probe_block = [&](const std::string& label, Array PolicyParams::* field,
                           const Array& grads, int max_probes) {
      const Array& base = p.*field;
      int count = static_cast<int>(base.size());
      std::vector<std::size_t> idx;
      if (count <= max_probes)
        for (int i = 0; i < count; ++i) idx.push_back(i);
      else
        for (int i = 0; i < max_probes; ++i) idx.push_back(rng() % count);
      Array got = Array::zeros({static_cast<int>(idx.size())});
      Array want = got;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        PolicyParams q = p;
        double saved = base.data[idx[k]];
        (q.*field).data[idx[k]] = saved + args.fd_step;
        double fp = loss_at(q);
        (q.*field).data[idx[k]] = saved - args.fd_step;
        double fm = loss_at(q);
        want.data[k] = (fp - fm) / (2.0 * args.fd_step);
        got.data[k] = grads.data[idx[k]];
      }
      return report_error(label, got, want);
    };
    worst = std::max(worst, probe_block("b2", &PolicyParams::b2, res.grads.b2, 8));
    worst = std::max(worst, probe_block("w2", &PolicyParams::w2, res.grads.w2, 8));
    worst = std::max(worst, probe_block("b1", &PolicyParams::b1, res.grads.b1, 8));
    worst = std::max(worst, probe_block("w1", &PolicyParams::w1, res.grads.w1, 8));
  } else {
    throw BadFlags("--mode must be quasistatic, dynamic, or bptt");
  }

  std::printf("threshold %.3e: %s\n", args.threshold, worst < args.threshold ? "pass" : "FAIL");
  return worst < args.threshold ? 0 : 1;
}

struct TrainArgs {
  std::string scene, log, policy_out;
  int iters = 30;
  int horizon = 100;
  int eval_horizon = -1;
  std::uint64_t seed = 0;
  int batch = 4;
  double init_std = 0.1;
  double lr = 1e-3;
};

int run_train(const TrainArgs& args, bool ppo) {
  SceneRuntime rt = make_runtime(load_scene_file(args.scene));
  TrainOptions opts;
  opts.iterations = args.iters;
  opts.horizon = args.horizon;
  opts.eval_horizon = args.eval_horizon > 0 ? args.eval_horizon : args.horizon;
  opts.seed = args.seed;
  opts.batch_size = args.batch;
  opts.init_log_std = std::log(args.init_std);
  opts.adam.lr = args.lr;
  auto [params, log] = ppo ? train_ppo(rt, opts) : train_bptt(rt, opts);

  if (!args.log.empty()) {
    std::ostringstream out;
    write_train_log_csv(out, log);
    write_file(args.log, out.str());
  }
  if (!args.policy_out.empty()) write_file(args.policy_out, serialize_policy(params));
  std::printf("%.17g\n", log.records.back().reward);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable 2d soft-body simulator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "run dynamic steps and write a trajectory");
  c_sim->add_option("--scene", sim.scene, "scene json file")->required();
  c_sim->add_option("--steps", sim.steps, "number of dynamic steps")->check(CLI::PositiveNumber);
  c_sim->add_option("--out", sim.out, "output trajectory path")->required();
  c_sim->add_option("--policy", sim.policy, "policy json file (mean policy actions)");
  c_sim->add_option("--actions", sim.actions, "constant actions, const:VALUE");
  c_sim->add_option("--seed", sim.seed, "seed (reserved for stochastic variants)");

  QuasistaticArgs qs;
  CLI::App* c_qs = app.add_subcommand("quasistatic", "solve one quasistatic equilibrium");
  c_qs->add_option("--scene", qs.scene, "scene json file")->required();
  c_qs->add_option("--out", qs.out, "output trajectory path")->required();
  c_qs->add_option("--actions", qs.actions, "constant actions, const:VALUE");

  GradcheckArgs gc;
  CLI::App* c_gc = app.add_subcommand("gradcheck", "compare backward pass to finite differences");
  c_gc->add_option("--scene", gc.scene, "scene json file")->required();
  c_gc->add_option("--mode", gc.mode, "quasistatic | dynamic | bptt");
  c_gc->add_option("--seed", gc.seed, "seed for probe directions");
  c_gc->add_option("--fd-step", gc.fd_step, "central difference step");
  c_gc->add_option("--threshold", gc.threshold, "max acceptable relative error");

  TrainArgs tr_bptt, tr_ppo;
  CLI::App* c_bptt = app.add_subcommand("train-bptt", "train the policy by backprop through time");
  CLI::App* c_ppo = app.add_subcommand("train-ppo", "train the policy with the ppo baseline");
  for (auto [cmd, args] : {std::pair{c_bptt, &tr_bptt}, std::pair{c_ppo, &tr_ppo}}) {
    cmd->add_option("--scene", args->scene, "scene json file")->required();
    cmd->add_option("--iters", args->iters, "training iterations");
    cmd->add_option("--horizon", args->horizon, "steps per training episode");
    cmd->add_option("--eval-horizon", args->eval_horizon, "steps per evaluation episode");
    cmd->add_option("--seed", args->seed, "seed for init and sampling");
    cmd->add_option("--log", args->log, "training log csv path");
    cmd->add_option("--policy-out", args->policy_out, "write the trained policy json here");
    cmd->add_option("--lr", args->lr, "adam learning rate");
  }
  c_ppo->add_option("--batch", tr_ppo.batch, "trajectories per iteration");
  c_ppo->add_option("--init-std", tr_ppo.init_std, "initial exploration std");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitFlags;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_qs->parsed()) return run_quasistatic(qs);
    if (c_gc->parsed()) return run_gradcheck(gc);
    if (c_bptt->parsed()) return run_train(tr_bptt, false);
    if (c_ppo->parsed()) return run_train(tr_ppo, true);
  } catch (const BadFlags& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFlags;
  } catch (const SolveError& e) {
    std::cerr << "solver error: " << e.what() << " (iterations " << e.report.iterations
              << ", grad inf norm " << e.report.final_gradient_inf_norm << ", line search failures "
              << e.report.line_search_failures << ")\n";
    return kExitSolver;
  } catch (const CGError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const SceneError& e) {
    std::cerr << "scene error: " << e.what() << "\n";
    return kExitScene;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitScene;
  }
  return 0;
}
