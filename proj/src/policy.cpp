#include "softsim/policy.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace softsim {

std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

int feature_dim(const SceneRuntime& rt) { return 4 * rt.scene.num_vertices(); }

PolicyParams init_policy(const SceneRuntime& rt, std::uint64_t seed, double init_log_std,
                         int hidden) {
  int d = feature_dim(rt);
  int f = rt.scene.num_fibers();
  PolicyParams p;
  p.w1 = Array::zeros({hidden, d});
  p.b1 = Array::zeros({hidden});
  p.w2 = Array::zeros({f, hidden});
  p.b2 = Array::zeros({f});
  p.log_std = Array::full({f}, init_log_std);
  auto rng = rng_for(seed, 0);
  std::normal_distribution<double> dist(0.0, 1.0);
  double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& w : p.w1.data) w = s1 * dist(rng);
  double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& w : p.w2.data) w = s2 * dist(rng);
  return p;
}

Var state_features(Graph& g, const SceneRuntime& rt, Var x, Var v) {
  Var xs = g.col(x, 0);
  if (rt.scene.policy_io.center_x) xs = xs - g.mean(xs);
  return g.concat({xs, g.col(x, 1), g.col(v, 0), g.col(v, 1)});
}

PolicyVars policy_inputs(Graph& g, const PolicyParams& p) {
  return PolicyVars{g.input(p.w1), g.input(p.b1), g.input(p.w2), g.input(p.b2)};
}

Var policy_actions(Graph& g, const PolicyVars& pv, Var feat, ActionRange range) {
  Var h = g.relu(g.affine(pv.w1, feat, pv.b1));
  Var raw = g.affine(pv.w2, h, pv.b2);
  return g.add_const((range.max - range.min) * g.sigmoid(raw), range.min);
}

Array policy_forward(const SceneRuntime& rt, const PolicyParams& p, const State& state,
                     ActionRange range) {
  Graph g;
  PolicyVars pv{g.constant(p.w1), g.constant(p.b1), g.constant(p.w2), g.constant(p.b2)};
  Var feat = state_features(g, rt, g.constant(state.x), g.constant(state.v));
  return policy_actions(g, pv, feat, range).value();
}

namespace {

nlohmann::json array_to_json(const Array& a) {
  return {{"shape", a.shape}, {"data", a.data}};
}

Array array_from_json(const nlohmann::json& j) {
  Array a;
  a.shape = j.at("shape").get<std::vector<int>>();
  a.data = j.at("data").get<std::vector<double>>();
  if (a.data.size() != Array::numel_of(a.shape))
    throw std::runtime_error("policy file: array data does not match its shape");
  return a;
}

}  // namespace

std::string serialize_policy(const PolicyParams& p) {
  nlohmann::json doc = {{"w1", array_to_json(p.w1)},
                        {"b1", array_to_json(p.b1)},
                        {"w2", array_to_json(p.w2)},
                        {"b2", array_to_json(p.b2)},
                        {"log_std", array_to_json(p.log_std)}};
  return doc.dump(2) + "\n";
}

PolicyParams parse_policy(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw std::runtime_error("policy file: not a json object");
  PolicyParams p;
  p.w1 = array_from_json(doc.at("w1"));
  p.b1 = array_from_json(doc.at("b1"));
  p.w2 = array_from_json(doc.at("w2"));
  p.b2 = array_from_json(doc.at("b2"));
  p.log_std = array_from_json(doc.at("log_std"));
  return p;
}

}  // namespace softsim
