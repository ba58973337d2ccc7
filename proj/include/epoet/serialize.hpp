#pragma once

// JSON forms of the value types that make up engine state. Reals go through
// nlohmann's shortest round-trip formatting, so every conversion is lossless.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "epoet/adam.hpp"
#include "epoet/cppn.hpp"
#include "epoet/error.hpp"
#include "epoet/es.hpp"
#include "epoet/mlp.hpp"
#include "epoet/sac.hpp"
#include "epoet/terrain.hpp"

namespace epoet::io {

using json = nlohmann::json;

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const MlpShape& s) {
  return {{"sizes", s.sizes}, {"hidden", std::string(to_string(s.hidden))}, {"output", std::string(to_string(s.output))}};
}

inline MlpShape shape_from_json(const json& j) {
  MlpShape s;
  s.sizes = j.at("sizes").get<std::vector<int>>();
  s.hidden = parse_activation(j.at("hidden").get<std::string>());
  s.output = parse_activation(j.at("output").get<std::string>());
  return s;
}

inline json to_json(const MlpParams& p) { return {{"shape", to_json(p.shape)}, {"flat", to_json(p.flat)}}; }

inline MlpParams mlp_from_json(const json& j) {
  MlpParams p{shape_from_json(j.at("shape")), vector_from_json(j.at("flat"))};
  require(p.flat.size() == p.shape.num_params(), ErrorKind::structural, "parameter count does not match shape");
  return p;
}

inline json to_json(const AdamState& a) { return {{"m", to_json(a.m)}, {"v", to_json(a.v)}, {"t", a.t}}; }

inline AdamState adam_from_json(const json& j) {
  return {vector_from_json(j.at("m")), vector_from_json(j.at("v")), j.at("t").get<std::int64_t>()};
}

inline json to_json(const es::EsState& s) {
  return {{"theta", to_json(s.theta)}, {"lr", s.lr},   {"noise_std", s.noise_std},
          {"adam", to_json(s.adam)},   {"steps", s.steps}};
}

inline es::EsState es_state_from_json(const json& j) {
  es::EsState s;
  s.theta = mlp_from_json(j.at("theta"));
  s.lr = j.at("lr").get<double>();
  s.noise_std = j.at("noise_std").get<double>();
  s.adam = adam_from_json(j.at("adam"));
  s.steps = j.at("steps").get<std::int64_t>();
  return s;
}

/// Settings are not stored: they come from the run configuration.
inline json to_json(const terrain::TerrainSpec& s) {
  return {{"genome", cppn::genome_to_string(s.genome)}, {"terrain_seed", s.terrain_seed}, {"iteration", s.iteration}};
}

inline terrain::TerrainSpec spec_from_json(const json& j, const terrain::TerrainSettings& settings) {
  terrain::TerrainSpec s;
  s.genome = cppn::genome_from_string(j.at("genome").get<std::string>());
  s.terrain_seed = j.at("terrain_seed").get<std::uint64_t>();
  s.iteration = j.at("iteration").get<std::int64_t>();
  s.settings = settings;
  return s;
}

inline json to_json(const sac::SacState& s) {
  return {{"policy", to_json(s.nets.policy)},
          {"value", to_json(s.nets.value)},
          {"value_target1", to_json(s.nets.value_target1)},
          {"value_target2", to_json(s.nets.value_target2)},
          {"q1", to_json(s.nets.q1)},
          {"q2", to_json(s.nets.q2)},
          {"log_alpha", s.nets.log_alpha},
          {"policy_opt", to_json(s.policy_opt)},
          {"value_opt", to_json(s.value_opt)},
          {"q1_opt", to_json(s.q1_opt)},
          {"q2_opt", to_json(s.q2_opt)},
          {"alpha_opt", to_json(s.alpha_opt)},
          {"updates", s.updates},
          {"env_steps", s.env_steps},
          {"train_calls", s.train_calls}};
}

inline sac::SacState sac_state_from_json(const json& j) {
  sac::SacState s;
  s.nets.policy = mlp_from_json(j.at("policy"));
  s.nets.value = mlp_from_json(j.at("value"));
  s.nets.value_target1 = mlp_from_json(j.at("value_target1"));
  s.nets.value_target2 = mlp_from_json(j.at("value_target2"));
  s.nets.q1 = mlp_from_json(j.at("q1"));
  s.nets.q2 = mlp_from_json(j.at("q2"));
  s.nets.log_alpha = j.at("log_alpha").get<double>();
  s.policy_opt = adam_from_json(j.at("policy_opt"));
  s.value_opt = adam_from_json(j.at("value_opt"));
  s.q1_opt = adam_from_json(j.at("q1_opt"));
  s.q2_opt = adam_from_json(j.at("q2_opt"));
  s.alpha_opt = adam_from_json(j.at("alpha_opt"));
  s.updates = j.at("updates").get<std::int64_t>();
  s.env_steps = j.at("env_steps").get<std::int64_t>();
  s.train_calls = j.at("train_calls").get<std::int64_t>();
  return s;
}

}  // namespace epoet::io
