#pragma once

#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "softsim/policy.hpp"
#include "softsim/sim.hpp"

namespace softsim {

struct Trajectory {
  std::vector<State> states;      // H+1
  std::vector<Array> actions;     // H, executed (clamped) actions
  std::vector<Array> samples;     // H, pre-clamp Gaussian samples (stochastic only)
  double reward = 0.0;
};

/// Centroid horizontal displacement over the episode.
double trajectory_reward(const Trajectory& traj);

struct RolloutOptions {
  SolverOptions solver;
  ActionRange range;
  std::vector<StepContext>* contexts = nullptr;  // retained for BPTT when set
};

/// Policy-in-the-loop episode. Deterministic rollouts ignore the rng;
/// stochastic ones sample Gaussian actions around the policy mean and clamp
/// the executed action into the valid range.
Trajectory rollout(const SceneRuntime& rt, const PolicyParams& params, int horizon,
                   bool deterministic, std::mt19937_64* rng, const RolloutOptions& opts = {});

struct BpttResult {
  PolicyParams grads;  // d(-reward)/d(mean params); log_std entry stays zero
  double reward = 0.0;
};

/// Reverse sweep across all steps: implicit backward through each physics
/// step, standard backprop through each policy evaluation.
BpttResult bptt_gradient(const SceneRuntime& rt, const PolicyParams& params, int horizon,
                         const RolloutOptions& opts = {});

/// Newline-delimited records {"t":..,"x":..,"v":..,"a":..}; the final record
/// has no "a".
void write_trajectory(std::ostream& out, const Trajectory& traj);

}  // namespace softsim
