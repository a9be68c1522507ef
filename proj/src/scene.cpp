#include "softsim/scene.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace softsim {

namespace {

using nlohmann::json;

void check_known_keys(const json& obj, const std::set<std::string>& known,
                      const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw SceneError("unknown field '" + it.key() + "' in " + where);
}

double triangle_signed_area(const Array& verts, const std::array<int, 3>& tri) {
  double x0 = verts.at(tri[0], 0), y0 = verts.at(tri[0], 1);
  double x1 = verts.at(tri[1], 0), y1 = verts.at(tri[1], 1);
  double x2 = verts.at(tri[2], 0), y2 = verts.at(tri[2], 1);
  return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
}

void validate(const Scene& s) {
  int n = s.num_vertices();
  if (n < 1) throw SceneError("scene has no vertices");
  if (s.dt <= 0.0) throw SceneError("dt must be positive");
  if (s.material.mu <= 0.0 && s.num_triangles() > 0)
    throw SceneError("material.mu must be positive");
  if (s.material.lambda < 0.0) throw SceneError("material.lambda must be non-negative");
  if (s.material.density <= 0.0) throw SceneError("material.density must be positive");
  if (s.contact.k_collision < 0.0 || s.contact.k_friction < 0.0 || s.contact.eps < 0.0)
    throw SceneError("contact parameters must be non-negative");
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    for (int v : s.triangles[t])
      if (v < 0 || v >= n)
        throw SceneError("triangle " + std::to_string(t) + ": vertex index " +
                         std::to_string(v) + " out of range [0," + std::to_string(n) + ")");
    double area = triangle_signed_area(s.vertices, s.triangles[t]);
    if (std::abs(area) < 1e-12)
      throw SceneError("triangle " + std::to_string(t) + " is degenerate (|area| < 1e-12)");
    if (area < 0.0)
      throw SceneError("triangle " + std::to_string(t) +
                       " has negative signed area; fix winding order");
  }
  for (std::size_t f = 0; f < s.fibers.size(); ++f) {
    const Fiber& fb = s.fibers[f];
    if (fb.i < 0 || fb.i >= n || fb.j < 0 || fb.j >= n)
      throw SceneError("fiber " + std::to_string(f) + ": endpoint index out of range");
    if (fb.i == fb.j) throw SceneError("fiber " + std::to_string(f) + ": endpoints coincide");
    if (fb.stiffness < 0.0)
      throw SceneError("fiber " + std::to_string(f) + ": stiffness must be non-negative");
    if (fb.rest_length && *fb.rest_length <= 0.0)
      throw SceneError("fiber " + std::to_string(f) + ": rest_length must be positive");
  }
  for (int p : s.pinned)
    if (p < 0 || p >= n) throw SceneError("pinned vertex index out of range");
}

}  // namespace

Scene load_scene(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("scene parse error: ") + e.what());
  }
  if (!doc.is_object()) throw SceneError("scene document must be an object");
  check_known_keys(doc,
                   {"vertices", "triangles", "fibers", "material", "pinned", "gravity", "dt",
                    "contact", "policy_io"},
                   "scene");

  Scene s;
  try {
    if (!doc.contains("vertices")) throw SceneError("missing field 'vertices'");
    auto verts = doc.at("vertices");
    int n = static_cast<int>(verts.size());
    s.vertices = Array::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
      if (verts[i].size() != 2) throw SceneError("vertices must be [x,y] pairs");
      s.vertices.at(i, 0) = verts[i][0].get<double>();
      s.vertices.at(i, 1) = verts[i][1].get<double>();
    }
    if (doc.contains("triangles"))
      for (const auto& t : doc.at("triangles")) {
        if (t.size() != 3) throw SceneError("triangles must be [i,j,k] index triples");
        s.triangles.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
      }
    if (doc.contains("fibers"))
      for (const auto& f : doc.at("fibers")) {
        check_known_keys(f, {"i", "j", "stiffness", "rest_length"}, "fiber");
        Fiber fb;
        fb.i = f.at("i").get<int>();
        fb.j = f.at("j").get<int>();
        fb.stiffness = f.at("stiffness").get<double>();
        if (f.contains("rest_length")) fb.rest_length = f.at("rest_length").get<double>();
        s.fibers.push_back(fb);
      }
    if (!doc.contains("material")) throw SceneError("missing field 'material'");
    {
      const auto& m = doc.at("material");
      check_known_keys(m, {"mu", "lambda", "density"}, "material");
      s.material.mu = m.at("mu").get<double>();
      s.material.lambda = m.at("lambda").get<double>();
      s.material.density = m.at("density").get<double>();
    }
    if (doc.contains("pinned"))
      for (const auto& p : doc.at("pinned")) s.pinned.push_back(p.get<int>());
    if (doc.contains("gravity")) {
      const auto& g = doc.at("gravity");
      if (g.size() != 2) throw SceneError("gravity must be [gx,gy]");
      s.gravity[0] = g[0].get<double>();
      s.gravity[1] = g[1].get<double>();
    }
    if (doc.contains("dt")) s.dt = doc.at("dt").get<double>();
    if (doc.contains("contact")) {
      const auto& c = doc.at("contact");
      check_known_keys(c, {"k_collision", "k_friction", "eps"}, "contact");
      if (c.contains("k_collision")) s.contact.k_collision = c.at("k_collision").get<double>();
      if (c.contains("k_friction")) s.contact.k_friction = c.at("k_friction").get<double>();
      if (c.contains("eps")) s.contact.eps = c.at("eps").get<double>();
    }
    if (doc.contains("policy_io")) {
      const auto& p = doc.at("policy_io");
      check_known_keys(p, {"center_x"}, "policy_io");
      if (p.contains("center_x")) s.policy_io.center_x = p.at("center_x").get<bool>();
    }
  } catch (const json::exception& e) {
    throw SceneError(std::string("scene field error: ") + e.what());
  }

  validate(s);
  return s;
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scene(ss.str());
}

std::string serialize_scene(const Scene& s) {
  json doc;
  doc["vertices"] = json::array();
  for (int i = 0; i < s.num_vertices(); ++i)
    doc["vertices"].push_back({s.vertices.at(i, 0), s.vertices.at(i, 1)});
  doc["triangles"] = json::array();
  for (const auto& t : s.triangles) doc["triangles"].push_back({t[0], t[1], t[2]});
  doc["fibers"] = json::array();
  for (const Fiber& f : s.fibers) {
    json jf = {{"i", f.i}, {"j", f.j}, {"stiffness", f.stiffness}};
    if (f.rest_length) jf["rest_length"] = *f.rest_length;
    doc["fibers"].push_back(jf);
  }
  doc["material"] = {{"mu", s.material.mu},
                     {"lambda", s.material.lambda},
                     {"density", s.material.density}};
  doc["pinned"] = s.pinned;
  doc["gravity"] = {s.gravity[0], s.gravity[1]};
  doc["dt"] = s.dt;
  doc["contact"] = {{"k_collision", s.contact.k_collision},
                    {"k_friction", s.contact.k_friction},
                    {"eps", s.contact.eps}};
  doc["policy_io"] = {{"center_x", s.policy_io.center_x}};
  return doc.dump(2);
}

RestData compute_rest_data(const Scene& scene) {
  RestData r;
  int m = scene.num_triangles();
  int n = scene.num_vertices();
  r.area.resize(m);
  r.dm_inv = Array::zeros({m, 4});
  r.mass.assign(n, 0.0);
  for (int t = 0; t < m; ++t) {
    const auto& tri = scene.triangles[t];
    double e1x = scene.vertices.at(tri[1], 0) - scene.vertices.at(tri[0], 0);
    double e1y = scene.vertices.at(tri[1], 1) - scene.vertices.at(tri[0], 1);
    double e2x = scene.vertices.at(tri[2], 0) - scene.vertices.at(tri[0], 0);
    double e2y = scene.vertices.at(tri[2], 1) - scene.vertices.at(tri[0], 1);
    // Dm = [e1 e2] as columns
    double det = e1x * e2y - e2x * e1y;
    if (std::abs(det) < 1e-12)
      throw SceneError("triangle " + std::to_string(t) + " has singular rest shape");
    r.area[t] = 0.5 * det;
    r.total_area += r.area[t];
    r.dm_inv.at(t, 0) = e2y / det;
    r.dm_inv.at(t, 1) = -e2x / det;
    r.dm_inv.at(t, 2) = -e1y / det;
    r.dm_inv.at(t, 3) = e1x / det;
    double tri_mass = scene.material.density * r.area[t] / 3.0;
    for (int v : tri) r.mass[v] += tri_mass;
  }
  r.rest_length.resize(scene.fibers.size());
  for (std::size_t f = 0; f < scene.fibers.size(); ++f) {
    const Fiber& fb = scene.fibers[f];
    if (fb.rest_length) {
      r.rest_length[f] = *fb.rest_length;
    } else {
      double dx = scene.vertices.at(fb.j, 0) - scene.vertices.at(fb.i, 0);
      double dy = scene.vertices.at(fb.j, 1) - scene.vertices.at(fb.i, 1);
      double l0 = std::sqrt(dx * dx + dy * dy);
      if (l0 <= 0.0)
        throw SceneError("fiber " + std::to_string(f) + " has zero rest length");
      r.rest_length[f] = l0;
    }
  }
  return r;
}

State initial_state(const Scene& scene) {
  State s;
  s.x = scene.vertices;
  s.v = Array::zeros(scene.vertices.shape);
  return s;
}

SceneRuntime make_runtime(Scene scene) {
  SceneRuntime rt;
  rt.rest = compute_rest_data(scene);
  std::vector<char> pinned(scene.num_vertices(), 0);
  for (int p : scene.pinned) pinned[p] = 1;
  double mass_sum = 0.0;
  for (int i = 0; i < scene.num_vertices(); ++i) {
    if (pinned[i]) {
      rt.pinned_idx.push_back(i);
    } else {
      rt.free_idx.push_back(i);
      mass_sum += rt.rest.mass[i];
    }
  }
  if (!rt.free_idx.empty() && mass_sum > 0.0)
    rt.mean_free_mass = mass_sum / static_cast<double>(rt.free_idx.size());
  rt.scene = std::move(scene);
  return rt;
}

}  // namespace softsim
