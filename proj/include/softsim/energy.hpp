#pragma once

#include <memory>
#include <optional>

#include "softsim/autodiff.hpp"
#include "softsim/scene.hpp"

namespace softsim {

/// Energy terms are built from autodiff primitives on full (n,2) position
/// Vars; forces and Hessian-vector products come out of the graph for free.

Var spring_energy(Graph& g, const SceneRuntime& rt, Var x, Var a);
Var neo_hookean_energy(Graph& g, const SceneRuntime& rt, Var x);
Var collision_energy(Graph& g, const SceneRuntime& rt, Var x);
Var friction_energy(Graph& g, const SceneRuntime& rt, Var x, Var x0);
Var gravity_energy(Graph& g, const SceneRuntime& rt, Var x);

/// spring + neo-hookean + collision + gravity, plus friction when x0 is given
/// (quasistatic mode has no previous step and drops the friction term).
Var total_potential(Graph& g, const SceneRuntime& rt, Var x, Var a, std::optional<Var> x0);

/// Backward-Euler objective: 0.5*||x - (x0 + h v0)||_M^2 + h^2 * E(x, a; x0).
Var incremental_potential(Graph& g, const SceneRuntime& rt, Var x, Var x0, Var v0, Var a);

/// Embed free-vertex rows into full (n,2) positions, pinned rows fixed at
/// their rest coordinates. Identity when nothing is pinned.
Var full_positions(Graph& g, const SceneRuntime& rt, Var x_free);

/// Plain-array row selection/embedding helpers matching full_positions.
Array restrict_rows(const Array& full, const std::vector<int>& idx);
Array scatter_free(const SceneRuntime& rt, const Array& free_rows);

}  // namespace softsim
