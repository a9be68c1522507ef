#pragma once

#include <cmath>
#include <iosfwd>
#include <utility>

#include "softsim/rollout.hpp"

namespace softsim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<Array> m, v;
  long step = 0;
};

AdamState make_adam(const std::vector<Array*>& params, AdamConfig cfg = {});

/// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, const std::vector<Array*>& params,
               const std::vector<const Array*>& grads);

struct TrainRecord {
  int iter = 0;
  double reward = 0.0;      // deterministic evaluation
  long env_steps = 0;       // cumulative simulation steps consumed by training
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
};

struct TrainOptions {
  int horizon = 100;
  int iterations = 30;
  std::uint64_t seed = 0;
  int eval_horizon = 100;
  AdamConfig adam;
  ActionRange range;
  // Exploration can hit configurations where first-order descent stalls just
  // above the tight interactive tolerance; training does not need it.
  SolverOptions solver = {.forward_tol = 1e-5, .max_iters = 10000};
  // PPO only:
  int batch_size = 4;
  double init_log_std = std::log(0.1);
  double clip_eps = 0.2;
  int epochs = 10;
};

/// One deterministic rollout, one BPTT gradient, one Adam step per iteration
/// (reward is maximized). Row 0 of the log is the pre-training evaluation.
std::pair<PolicyParams, TrainLog> train_bptt(const SceneRuntime& rt, const TrainOptions& opts);

/// Clipped-surrogate PPO baseline with a Gaussian policy around the same MLP
/// mean, advantage = batch-normalized terminal reward, no value network.
std::pair<PolicyParams, TrainLog> train_ppo(const SceneRuntime& rt, const TrainOptions& opts);

/// CSV: header `iter,reward,env_steps,wall_ms`, LF line endings.
void write_train_log_csv(std::ostream& out, const TrainLog& log);

}  // namespace softsim
