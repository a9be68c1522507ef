// End-to-end acceptance checks; one pass/fail line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "softsim/energy.hpp"
#include "softsim/training.hpp"

using namespace softsim;

namespace {

int failures = 0;

void criterion(int n, const std::string& name, bool ok) {
  std::printf("criterion %d (%s): %s\n", n, name.c_str(), ok ? "PASS" : "FAIL");
  if (!ok) ++failures;
}

std::string fixture(const std::string& name) { return std::string(SOFTSIM_FIXTURE_DIR "/") + name; }

double max_rel_err(const Array& got, const Array& want) {
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    err = std::max(err,
                   std::abs(got.data[i] - want.data[i]) / std::max(1.0, std::abs(want.data[i])));
  return err;
}

SolverOptions tight_solver() {
  SolverOptions o;
  o.forward_tol = 1e-10;
  o.cg_tol = 1e-12;
  o.max_iters = 20000;
  return o;
}

Array random_array(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a = Array::zeros(std::move(shape));
  for (double& v : a.data) v = dist(rng);
  return a;
}

// Jittered 3x2 grid (8 free DOFs after pinning), moderate stiffness and
// dt, masses well above the solver tolerance so re-solve finite differences
// stay clean.
Scene random_scene(std::mt19937_64& rng, bool contact) {
  std::uniform_real_distribution<double> jit(-0.04, 0.04);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Scene s;
  double y0 = contact ? 0.015 : 0.3;
  s.vertices = Array::zeros({6, 2});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      s.vertices.at(r * 3 + c, 0) = 0.5 * c + jit(rng);
      s.vertices.at(r * 3 + c, 1) = y0 + 0.5 * r + jit(rng);
    }
  for (int c = 0; c < 2; ++c) {
    s.triangles.push_back({c, c + 1, c + 4});
    s.triangles.push_back({c, c + 4, c + 3});
  }
  for (int c = 0; c < 2; ++c) {
    s.fibers.push_back({c, c + 4, 2.0 + 6.0 * uni(rng), std::nullopt});
    s.fibers.push_back({c + 1, c + 3, 2.0 + 6.0 * uni(rng), std::nullopt});
  }
  s.material = {5.0 + 15.0 * uni(rng), 5.0 + 10.0 * uni(rng), 2.0 + 2.0 * uni(rng)};
  s.pinned = {3 + static_cast<int>(uni(rng) * 2.999)};
  s.gravity[0] = 0.0;
  s.gravity[1] = -9.8 * (0.3 + 0.7 * uni(rng));
  s.dt = 0.04 + 0.04 * uni(rng);
  if (contact) s.contact = {200.0, 2.0, 0.02};
  return s;
}

bool gradient_suite() {
  SolverOptions opts = tight_solver();
  const double fd_step = 1e-5;
  double worst = 0.0;
  for (int scene_id = 0; scene_id < 5; ++scene_id) {
    auto rng = rng_for(1000 + scene_id, 0);
    SceneRuntime rt = make_runtime(random_scene(rng, scene_id % 2 == 0));
    int n = rt.scene.num_vertices();
    int f = rt.scene.num_fibers();
    auto fd = [&](const std::function<double()>& loss, double& slot) {
      double saved = slot;
      slot = saved + fd_step;
      double fp = loss();
      slot = saved - fd_step;
      double fm = loss();
      slot = saved;
      return (fp - fm) / (2.0 * fd_step);
    };

    Array a = random_array({f}, rng, 0.5, 0.95);
    Array w = random_array({n, 2}, rng, -1.0, 1.0);
    for (int p : rt.pinned_idx) w.at(p, 0) = w.at(p, 1) = 0.0;
    {
      QuasistaticResult r = quasistatic_forward(rt, a, rt.scene.vertices, opts);
      Array da = quasistatic_backward(rt, r.ctx, w, opts);
      Array want = Array::zeros({f});
      for (int k = 0; k < f; ++k)
        want.data[k] = fd(
            [&] { return dot_val(w, quasistatic_forward(rt, a, rt.scene.vertices, opts).x1); },
            a.data[k]);
      worst = std::max(worst, max_rel_err(da, want));
    }

    State s0 = initial_state(rt.scene);
    s0.v = random_array({n, 2}, rng, -0.1, 0.1);
    for (int p : rt.pinned_idx) s0.v.at(p, 0) = s0.v.at(p, 1) = 0.0;
    Array wv = random_array({n, 2}, rng, -1.0, 1.0);
    auto loss = [&] {
      DynamicResult r = dynamic_forward(rt, s0, a, opts);
      return dot_val(w, r.state1.x) + dot_val(wv, r.state1.v);
    };
    DynamicResult r = dynamic_forward(rt, s0, a, opts);
    DynamicGrads g = dynamic_backward(rt, r.ctx, w, wv, opts);
    Array want_a = Array::zeros({f});
    for (int k = 0; k < f; ++k) want_a.data[k] = fd(loss, a.data[k]);
    worst = std::max(worst, max_rel_err(g.da, want_a));
    for (Array State::* field : {&State::x, &State::v}) {
      Array want = Array::zeros({n, 2});
      for (std::size_t i = 0; i < want.size(); ++i) want.data[i] = fd(loss, (s0.*field).data[i]);
      for (int p : rt.pinned_idx) want.at(p, 0) = want.at(p, 1) = 0.0;
      worst = std::max(worst, max_rel_err(field == &State::x ? g.dx0 : g.dv0, want));
    }
  }
  std::printf("  backward vs re-solve fd, worst rel err %.3e\n", worst);
  return worst < 1e-4;
}

void matvec_dense(const std::vector<double>& m, const Array& x, Array& out) {
  int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += m[i * n + j] * x.data[j];
    out.data[i] = s;
  }
}

Array solve_dense(std::vector<double> m, Array b) {
  int n = static_cast<int>(b.size());
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(m[i * n + k]) > std::abs(m[piv * n + k])) piv = i;
    for (int j = 0; j < n; ++j) std::swap(m[k * n + j], m[piv * n + j]);
    std::swap(b.data[k], b.data[piv]);
    for (int i = k + 1; i < n; ++i) {
      double c = m[i * n + k] / m[k * n + k];
      for (int j = k; j < n; ++j) m[i * n + j] -= c * m[k * n + j];
      b.data[i] -= c * b.data[k];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b.data[i];
    for (int j = i + 1; j < n; ++j) s -= m[i * n + j] * b.data[j];
    b.data[i] = s / m[i * n + i];
  }
  return b;
}

bool matrix_free_machinery() {
  auto rng = rng_for(7, 0);
  Scene sc = random_scene(rng, true);
  // Push the bottom row into the ground so collision and friction are active.
  for (int c = 0; c < 3; ++c) sc.vertices.at(c, 1) = -0.01 - 0.01 * c;
  SceneRuntime rt = make_runtime(std::move(sc));
  int n = rt.scene.num_vertices();
  int f = rt.scene.num_fibers();
  Array x = rt.scene.vertices;
  Array x0 = x;
  for (double& v : x0.data) v += 1e-3;
  Array a = random_array({f}, rng, 0.5, 0.95);

  using Term = std::function<Var(Graph&, Var)>;
  std::vector<std::pair<std::string, Term>> terms = {
      {"spring", [&](Graph& g, Var xv) { return spring_energy(g, rt, xv, g.constant(a)); }},
      {"neo_hookean", [&](Graph& g, Var xv) { return neo_hookean_energy(g, rt, xv); }},
      {"collision", [&](Graph& g, Var xv) { return collision_energy(g, rt, xv); }},
      {"friction", [&](Graph& g, Var xv) { return friction_energy(g, rt, xv, g.constant(x0)); }},
      {"gravity", [&](Graph& g, Var xv) { return gravity_energy(g, rt, xv); }},
      {"total", [&](Graph& g, Var xv) {
         return total_potential(g, rt, xv, g.constant(a), g.constant(x0));
       }}};

  double worst_sym = 0.0, worst_fd = 0.0;
  for (auto& [name, term] : terms) {
    Array u = random_array({n, 2}, rng, -1.0, 1.0);
    Array v = random_array({n, 2}, rng, -1.0, 1.0);
    double uhv = dot_val(u, hvp(term, x, v));
    double vhu = dot_val(v, hvp(term, x, u));
    worst_sym = std::max(worst_sym, std::abs(uhv - vhu) / std::max(1.0, std::abs(uhv)));

    auto grad_at = [&](const Array& xq) {
      Graph g;
      Var xv = g.input(xq);
      return g.gradient(term(g, xv), {xv}, false)[0].value();
    };
    const double eps = 1e-6;
    Array xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp.data[i] += eps * v.data[i];
      xm.data[i] -= eps * v.data[i];
    }
    Array gp = grad_at(xp), gm = grad_at(xm);
    Array want = Array::zeros({n, 2});
    for (std::size_t i = 0; i < want.size(); ++i)
      want.data[i] = (gp.data[i] - gm.data[i]) / (2.0 * eps);
    worst_fd = std::max(worst_fd, max_rel_err(hvp(term, x, v), want));
  }
  std::printf("  hvp symmetry %.3e, hvp vs fd %.3e\n", worst_sym, worst_fd);

  double worst_cg = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    int dim = 8 + 2 * trial;  // up to 16
    std::vector<double> raw(dim * dim), m(dim * dim, 0.0);
    std::normal_distribution<double> dist;
    for (double& v : raw) v = dist(rng);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        for (int k = 0; k < dim; ++k) m[i * dim + j] += raw[k * dim + i] * raw[k * dim + j];
        if (i == j) m[i * dim + j] += 0.5;
      }
    Array b = random_array({dim}, rng, -1.0, 1.0);
    auto apply = [&](const Array& p) {
      Array out = Array::zeros({dim});
      matvec_dense(m, p, out);
      return out;
    };
    Array z = cg_solve(apply, b, 1e-14, 10 * dim).z;
    worst_cg = std::max(worst_cg, max_rel_err(z, solve_dense(m, b)));
  }
  std::printf("  cg vs dense direct %.3e\n", worst_cg);
  return worst_sym < 1e-10 && worst_fd < 1e-5 && worst_cg < 1e-8;
}

bool analytic_fixtures() {
  bool ok = true;

  SceneRuntime ball = make_runtime(load_scene_file(fixture("ballistic.json")));
  double h = ball.scene.dt, gy = ball.scene.gravity[1];
  DynamicResult r = dynamic_forward(ball, initial_state(ball.scene), Array::vec({}), tight_solver());
  double worst = 0.0;
  for (int i = 0; i < ball.scene.num_vertices(); ++i) {
    worst = std::max(worst, std::abs(r.state1.x.at(i, 0) - ball.scene.vertices.at(i, 0)));
    worst = std::max(worst,
                     std::abs(r.state1.x.at(i, 1) - (ball.scene.vertices.at(i, 1) + h * h * gy)));
    worst = std::max(worst, std::abs(r.state1.v.at(i, 0)));
    worst = std::max(worst, std::abs(r.state1.v.at(i, 1) - h * gy));
  }
  std::printf("  ballistic err %.3e\n", worst);
  ok = ok && worst < 1e-10;

  SceneRuntime fib = make_runtime(load_scene_file(fixture("single_fiber.json")));
  double l0 = fib.rest.rest_length[0];
  Array act = Array::vec({0.6});
  QuasistaticResult q = quasistatic_forward(fib, act, fib.scene.vertices, tight_solver());
  Array w = Array::zeros({2, 2});
  w.at(1, 0) = 1.0;  // L = x coordinate of the free endpoint, argmin at a*l0
  double da = quasistatic_backward(fib, q.ctx, w, tight_solver()).data[0];
  std::printf("  single fiber dL/da %.12f (l0 %.1f)\n", da, l0);
  ok = ok && std::abs(da - l0) < 1e-5;

  Scene zp;
  zp.vertices = Array::zeros({3, 2});
  zp.vertices.at(1, 0) = 1.0;
  zp.vertices.at(2, 1) = 1.0;
  zp.triangles.push_back({0, 1, 2});
  zp.material = {0.0, 0.0, 3.0};
  zp.gravity[0] = zp.gravity[1] = 0.0;
  zp.dt = 0.05;
  SceneRuntime zrt = make_runtime(std::move(zp));
  State s0 = initial_state(zrt.scene);
  auto rng = rng_for(11, 0);
  s0.v = random_array({3, 2}, rng, -1.0, 1.0);
  Array wx = random_array({3, 2}, rng, -1.0, 1.0);
  Array wv = random_array({3, 2}, rng, -1.0, 1.0);
  DynamicResult zr = dynamic_forward(zrt, s0, Array::vec({}), tight_solver());
  DynamicGrads zg = dynamic_backward(zrt, zr.ctx, wx, wv, tight_solver());
  double chain = 0.0;
  for (std::size_t i = 0; i < wx.size(); ++i) {
    chain = std::max(chain, std::abs(zg.dx0.data[i] - wx.data[i]));
    chain = std::max(chain,
                     std::abs(zg.dv0.data[i] - (zrt.scene.dt * wx.data[i] + wv.data[i])));
  }
  std::printf("  zero-potential chain rule err %.3e\n", chain);
  return ok && chain < 1e-12;
}

long steps_to_target(const TrainLog& log, double target) {
  for (const TrainRecord& rec : log.records)
    if (rec.reward >= target) return rec.env_steps;
  return -1;
}

bool bptt_training(const SceneRuntime& crawler, TrainLog& log_out) {
  TrainOptions opts;
  opts.horizon = 100;
  opts.eval_horizon = 100;
  opts.iterations = 30;
  opts.adam.lr = 1e-3;
  opts.seed = 0;
  auto [params, log] = train_bptt(crawler, opts);
  double first = log.records.front().reward;
  double last = log.records.back().reward;
  std::printf("  eval reward %.6f -> %.6f\n", first, last);
  log_out = log;
  return last > 0.0 && last > first;
}

bool sample_efficiency(const SceneRuntime& crawler, const TrainLog& bptt_seed0) {
  int wins = 0;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    TrainOptions opts;
    opts.horizon = 100;
    opts.eval_horizon = 100;
    opts.iterations = 30;
    opts.adam.lr = 1e-3;
    opts.seed = seed;
    TrainLog blog = seed == 0 ? bptt_seed0 : train_bptt(crawler, opts).second;
    double target = 0.5 * blog.records.back().reward;
    long bsteps = steps_to_target(blog, target);
    if (bsteps < 0) continue;

    bool seed_ok = true;
    for (double std0 : {0.05, 0.1, 0.2}) {
      TrainOptions popts = opts;
      popts.batch_size = 4;
      popts.init_log_std = std::log(std0);
      long per_iter = static_cast<long>(popts.batch_size) * popts.horizon;
      popts.iterations = static_cast<int>(bsteps / per_iter) + 1;
      TrainLog plog = train_ppo(crawler, popts).second;
      long psteps = steps_to_target(plog, target);
      bool ppo_slower = psteps < 0 || psteps > bsteps;
      std::printf("  seed %llu std %.2f: bptt %ld steps, ppo %s -> %s\n",
                  static_cast<unsigned long long>(seed), std0, bsteps,
                  psteps < 0 ? "never" : std::to_string(psteps).c_str(),
                  ppo_slower ? "ok" : "ppo faster");
      seed_ok = seed_ok && ppo_slower;
    }
    if (seed_ok) ++wins;
  }
  std::printf("  bptt more sample-efficient in %d of 3 seeds\n", wins);
  return wins >= 2;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_wall_ms(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << "\n";
  return out.str();
}

bool run_cli(const std::string& args) {
  std::string cmd = std::string(SOFTSIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

bool determinism() {
  std::string scene = fixture("crawler.json");
  for (int rep = 0; rep < 2; ++rep) {
    std::string tag = "/tmp/softsim_det_" + std::to_string(rep);
    if (!run_cli("simulate --scene " + scene + " --steps 20 --actions const:0.5 --out " + tag +
                 ".ndjson"))
      return false;
    if (!run_cli("train-ppo --scene " + scene + " --iters 2 --horizon 20 --seed 5 --batch 4 "
                 "--log " + tag + ".csv --policy-out " + tag + ".policy.json"))
      return false;
  }
  bool traj = slurp("/tmp/softsim_det_0.ndjson") == slurp("/tmp/softsim_det_1.ndjson");
  // wall_ms is a timing measurement; everything else must match bytewise.
  bool log = strip_wall_ms(slurp("/tmp/softsim_det_0.csv")) ==
             strip_wall_ms(slurp("/tmp/softsim_det_1.csv"));
  bool pol = slurp("/tmp/softsim_det_0.policy.json") == slurp("/tmp/softsim_det_1.policy.json");
  std::printf("  trajectory %s, log %s, policy %s\n", traj ? "identical" : "DIFFERS",
              log ? "identical" : "DIFFERS", pol ? "identical" : "DIFFERS");
  return traj && log && pol;
}

bool check_report(const SolveReport& report, double tol) {
  const std::vector<double>& vals = report.accepted_objectives;
  for (std::size_t i = 1; i < vals.size(); ++i)
    if (vals[i] > vals[i - 1] + 1e-14 * (1.0 + std::abs(vals[i - 1]))) return false;
  return !report.converged || report.final_gradient_inf_norm <= tol;
}

bool solver_contracts(const SceneRuntime& crawler) {
  bool ok = true;

  MinimizeOptions mopts;
  mopts.tol_grad_inf = 1e-8;
  mopts.max_iters = 50000;
  Objective rosenbrock = [](const Array& x, Array* grad) {
    double a = x.data[0], b = x.data[1];
    if (grad)
      *grad = Array::vec({-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)});
    return (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
  };
  MinimizeResult mr = minimize(rosenbrock, Array::vec({-1.2, 1.0}), mopts);
  ok = ok && mr.report.converged && check_report(mr.report, mopts.tol_grad_inf);

  auto rng = rng_for(21, 0);
  SolverOptions opts = tight_solver();
  State s = initial_state(crawler.scene);
  int f = crawler.scene.num_fibers();
  for (int step = 0; step < 10; ++step) {
    Array a = random_array({f}, rng, 0.4, 1.0);
    DynamicResult r = dynamic_forward(crawler, s, a, opts);
    ok = ok && check_report(r.ctx.report, opts.forward_tol);
    s = r.state1;
  }
  std::printf("  monotone accepted objectives and stationarity at tol: %s\n", ok ? "yes" : "no");
  return ok;
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  try {
    double mark = elapsed();
    bool c1 = gradient_suite();
    criterion(1, "implicit gradients vs finite differences", c1 && elapsed() - mark < 120.0);
    criterion(2, "matrix-free hvp and cg", matrix_free_machinery());
    criterion(3, "analytic fixtures", analytic_fixtures());

    SceneRuntime crawler = make_runtime(load_scene_file(fixture("crawler.json")));
    TrainLog bptt_log;
    mark = elapsed();
    bool c4 = bptt_training(crawler, bptt_log);
    criterion(4, "bptt training improves the crawler", c4 && elapsed() - mark < 900.0);
    criterion(5, "bptt beats ppo on env steps", sample_efficiency(crawler, bptt_log));
    criterion(6, "seeded runs are byte-identical", determinism());
    criterion(7, "solver contracts", solver_contracts(crawler));
  } catch (const std::exception& e) {
    std::printf("unexpected exception: %s\n", e.what());
    return 1;
  }

  std::printf("%s (%.1fs)\n", failures == 0 ? "all criteria passed" : "some criteria FAILED",
              elapsed());
  return failures == 0 ? 0 : 1;
}
