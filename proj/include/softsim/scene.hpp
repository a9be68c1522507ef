#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softsim/array.hpp"

namespace softsim {

struct SceneError : std::runtime_error {
  explicit SceneError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Fiber {
  int i = 0, j = 0;
  double stiffness = 0.0;
  std::optional<double> rest_length;  // default: rest distance of endpoints
};

struct MaterialParams {
  double mu = 0.0;
  double lambda = 0.0;
  double density = 1.0;
};

struct ContactParams {
  double k_collision = 0.0;
  double k_friction = 0.0;
  double eps = 1e-2;
};

struct PolicyIOConfig {
  bool center_x = true;
};

struct Scene {
  Array vertices;                     // (n,2) rest positions
  std::vector<std::array<int, 3>> triangles;
  std::vector<Fiber> fibers;
  MaterialParams material;
  std::vector<int> pinned;
  double gravity[2] = {0.0, -9.8};
  double dt = 0.01;
  ContactParams contact;
  PolicyIOConfig policy_io;

  int num_vertices() const { return vertices.shape.empty() ? 0 : vertices.shape[0]; }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_fibers() const { return static_cast<int>(fibers.size()); }
};

/// Rest-state precomputation: per-triangle areas and inverse rest-shape
/// matrices (row-major 2x2 per triangle), resolved fiber rest lengths, and
/// the diagonal lumped mass (one third of each incident triangle's mass).
struct RestData {
  std::vector<double> area;          // per triangle
  Array dm_inv;                      // (m,4) row-major [b00,b01,b10,b11]
  std::vector<double> rest_length;   // per fiber
  std::vector<double> mass;          // per vertex
  double total_area = 0.0;
};

struct State {
  Array x;  // (n,2)
  Array v;  // (n,2)
};

Scene load_scene(const std::string& text);
Scene load_scene_file(const std::string& path);
std::string serialize_scene(const Scene& scene);

RestData compute_rest_data(const Scene& scene);
State initial_state(const Scene& scene);

/// Scene plus everything derived from it that the solvers need.
struct SceneRuntime {
  Scene scene;
  RestData rest;
  std::vector<int> free_idx;    // vertices not pinned
  std::vector<int> pinned_idx;
  double mean_free_mass = 1.0;  // over free vertices (0 treated as 1)
};

SceneRuntime make_runtime(Scene scene);

}  // namespace softsim
