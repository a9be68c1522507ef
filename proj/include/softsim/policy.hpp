#pragma once

#include <cstdint>
#include <random>

#include "softsim/autodiff.hpp"
#include "softsim/scene.hpp"

namespace softsim {

/// Action squash range; keeps a away from the 1/(a l0) singularity.
struct ActionRange {
  double min = 0.3;
  double max = 1.0;
};

/// Single hidden layer MLP (32 ReLU units) plus a per-fiber log standard
/// deviation for the stochastic variant.
struct PolicyParams {
  Array w1, b1;      // (hidden, d), (hidden)
  Array w2, b2;      // (f, hidden), (f)
  Array log_std;     // (f)

  std::vector<Array*> mean_params() { return {&w1, &b1, &w2, &b2}; }
  std::vector<const Array*> mean_params() const { return {&w1, &b1, &w2, &b2}; }
};

/// Deterministic stream splitting: every consumer of randomness derives its
/// own generator from (seed, stream).
std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t stream);

int feature_dim(const SceneRuntime& rt);

PolicyParams init_policy(const SceneRuntime& rt, std::uint64_t seed, double init_log_std,
                         int hidden = 32);

/// Policy input: x-coordinates (optionally centered on the centroid's x so the
/// policy is translation-invariant along the locomotion axis), raw
/// y-coordinates, then both velocity columns, concatenated.
Var state_features(Graph& g, const SceneRuntime& rt, Var x, Var v);

struct PolicyVars {
  Var w1, b1, w2, b2;
};

PolicyVars policy_inputs(Graph& g, const PolicyParams& p);

/// a = min + sigmoid(W2 relu(W1 f + b1) + b2) * (max - min)
Var policy_actions(Graph& g, const PolicyVars& pv, Var feat, ActionRange range);

/// Plain evaluation of the deterministic (mean) policy.
Array policy_forward(const SceneRuntime& rt, const PolicyParams& p, const State& state,
                     ActionRange range = {});

std::string serialize_policy(const PolicyParams& p);
PolicyParams parse_policy(const std::string& text);

}  // namespace softsim
