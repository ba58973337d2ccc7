#pragma once

// Run configuration: one flat JSON object. Every key is registered below with
// its default; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epoet/error.hpp"
#include "epoet/es.hpp"
#include "epoet/neat.hpp"
#include "epoet/sac.hpp"
#include "epoet/terrain.hpp"
#include "epoet/walker.hpp"

namespace epoet {

using json = nlohmann::json;

enum class RunMode { epoet, epoet_sac, sac_only };

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::epoet: return "epoet";
    case RunMode::epoet_sac: return "epoet-sac";
    case RunMode::sac_only: return "sac-only";
  }
  return "?";
}

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "epoet") return RunMode::epoet;
  if (s == "epoet-sac") return RunMode::epoet_sac;
  if (s == "sac-only") return RunMode::sac_only;
  fail(ErrorKind::config, "unknown mode '" + s + "' (expected epoet, epoet-sac or sac-only)");
}

struct PoetConfig {
  int max_num_envs = 40;
  int mutation_interval = 75;
  int iterations_before_transfer = 15;
  int adjust_interval = 5;  // inert: PATA-EC vectors are recomputed at each reproduction event
  double mc_lower = 500.0;
  double mc_upper = 3000.0;
  double repro_threshold = 2000.0;
  int num_proposals = 8;
  int num_admitted = 1;
  int pata_ec_k = 5;
  int eval_episodes = 1;
  int sac_pretrain_iterations = 500;
  int sac_steps_per_iteration = 2000;

  void validate() const {
    require(max_num_envs >= 1, ErrorKind::config, "poet_max_num_envs must be >= 1");
    require(mutation_interval >= 1 && iterations_before_transfer >= 1 && adjust_interval >= 1, ErrorKind::config,
            "schedule intervals must be positive");
    require(mc_lower < mc_upper, ErrorKind::config, "poet_mc_lower must be below poet_mc_upper");
    require(num_proposals >= 1 && num_admitted >= 1 && num_admitted <= num_proposals, ErrorKind::config,
            "poet_num_admitted must lie in [1, poet_num_proposals]");
    require(pata_ec_k >= 1, ErrorKind::config, "poet_pata_ec_k must be >= 1");
    require(eval_episodes >= 1, ErrorKind::config, "poet_eval_episodes must be >= 1");
    require(sac_pretrain_iterations >= 0 && sac_steps_per_iteration >= 1, ErrorKind::config,
            "sac pretraining / step budget must be non-negative / positive");
  }
};

struct RunConfig {
  RunMode mode = RunMode::epoet_sac;
  std::uint64_t seed = 0;
  int iterations = 1000;
  int num_workers = 10;
  int checkpoint_interval = 15;
  bool checkpoint_replay_buffer = false;
  std::string output_dir = "runs/default";

  PoetConfig poet;
  es::EsConfig es;
  sac::SacConfig sac;
  neat::NeatConfig neat;
  terrain::TerrainSettings terrain;
  walker::WalkerConfig walker;

  void validate() const {
    require(iterations >= 0, ErrorKind::config, "iterations must be >= 0");
    require(num_workers >= 1, ErrorKind::config, "num_workers must be >= 1");
    require(checkpoint_interval >= 0, ErrorKind::config, "checkpoint_interval must be >= 0");
    poet.validate();
    es.validate();
    sac.validate();
    neat.validate();
    terrain.validate();
    walker.validate();
  }
};

namespace config_detail {

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T, typename Access>
Field plain(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, const json& v) {
            if constexpr (std::is_same_v<T, bool>) {
              if (!v.is_boolean()) fail(ErrorKind::config, key + " must be a boolean");
            } else if constexpr (std::is_integral_v<T>) {
              if (!v.is_number_integer() && !v.is_number_unsigned())
                fail(ErrorKind::config, key + " must be an integer");
            } else if constexpr (std::is_floating_point_v<T>) {
              if (!v.is_number()) fail(ErrorKind::config, key + " must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
              if (!v.is_string()) fail(ErrorKind::config, key + " must be a string");
            } else {
              if (!v.is_array()) fail(ErrorKind::config, key + " must be a list");
            }
            try {
              access(c) = v.get<T>();
            } catch (const json::exception& e) {
              fail(ErrorKind::config, key + ": " + e.what());
            }
          }};
}

template <typename Access>
Field activation(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return json(std::string(to_string(access(const_cast<RunConfig&>(c))))); },
          [access, key](RunConfig& c, const json& v) {
            if (!v.is_string()) fail(ErrorKind::config, key + " must be a string");
            access(c) = parse_activation(v.get<std::string>());
          }};
}

#define EPOET_FIELD(T, key, member) plain<T>(key, [](RunConfig& c) -> T& { return c.member; })

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"mode", [](const RunConfig& c) { return json(to_string(c.mode)); },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_string()) fail(ErrorKind::config, "mode must be a string");
                   c.mode = parse_run_mode(v.get<std::string>());
                 }});
    f.push_back(EPOET_FIELD(std::uint64_t, "seed", seed));
    f.push_back(EPOET_FIELD(int, "iterations", iterations));
    f.push_back(EPOET_FIELD(int, "num_workers", num_workers));
    f.push_back(EPOET_FIELD(int, "checkpoint_interval", checkpoint_interval));
    f.push_back(EPOET_FIELD(bool, "checkpoint_replay_buffer", checkpoint_replay_buffer));
    f.push_back(EPOET_FIELD(std::string, "output_dir", output_dir));

    f.push_back(EPOET_FIELD(int, "poet_max_num_envs", poet.max_num_envs));
    f.push_back(EPOET_FIELD(int, "poet_mutation_interval", poet.mutation_interval));
    f.push_back(EPOET_FIELD(int, "poet_iterations_before_transfer", poet.iterations_before_transfer));
    f.push_back(EPOET_FIELD(int, "poet_adjust_interval", poet.adjust_interval));
    f.push_back(EPOET_FIELD(double, "poet_mc_lower", poet.mc_lower));
    f.push_back(EPOET_FIELD(double, "poet_mc_upper", poet.mc_upper));
    f.push_back(EPOET_FIELD(double, "poet_repro_threshold", poet.repro_threshold));
    f.push_back(EPOET_FIELD(int, "poet_num_proposals", poet.num_proposals));
    f.push_back(EPOET_FIELD(int, "poet_num_admitted", poet.num_admitted));
    f.push_back(EPOET_FIELD(int, "poet_pata_ec_k", poet.pata_ec_k));
    f.push_back(EPOET_FIELD(int, "poet_eval_episodes", poet.eval_episodes));
    f.push_back(EPOET_FIELD(int, "poet_sac_pretrain_iterations", poet.sac_pretrain_iterations));
    f.push_back(EPOET_FIELD(int, "poet_sac_steps_per_iteration", poet.sac_steps_per_iteration));

    f.push_back(EPOET_FIELD(int, "es_num_samples", es.num_samples));
    f.push_back(EPOET_FIELD(std::vector<int>, "es_hidden_shape", es.hidden));
    f.push_back(activation("es_activation", [](RunConfig& c) -> Activation& { return c.es.activation; }));
    f.push_back(EPOET_FIELD(double, "es_lr_init", es.lr_init));
    f.push_back(EPOET_FIELD(double, "es_lr_limit", es.lr_limit));
    f.push_back(EPOET_FIELD(double, "es_lr_decay", es.lr_decay));
    f.push_back(EPOET_FIELD(double, "es_noise_std_init", es.noise_std_init));
    f.push_back(EPOET_FIELD(double, "es_noise_std_limit", es.noise_std_limit));
    f.push_back(EPOET_FIELD(double, "es_noise_std_decay", es.noise_std_decay));
    f.push_back(EPOET_FIELD(int, "es_batch_size", es.batch_size));
    f.push_back(EPOET_FIELD(int, "es_batches_per_chunk", es.batches_per_chunk));
    f.push_back(EPOET_FIELD(std::int64_t, "es_noise_table_size", es.noise_table_size));
    f.push_back(EPOET_FIELD(std::uint64_t, "es_noise_table_seed", es.noise_table_seed));

    f.push_back(EPOET_FIELD(std::vector<int>, "sac_hidden_shape", sac.hidden));
    f.push_back(activation("sac_activation", [](RunConfig& c) -> Activation& { return c.sac.activation; }));
    f.push_back(EPOET_FIELD(int, "sac_batch_size", sac.batch_size));
    f.push_back(EPOET_FIELD(double, "sac_policy_net_learning_rate", sac.policy_lr));
    f.push_back(EPOET_FIELD(double, "sac_value_net_learning_rate", sac.value_lr));
    f.push_back(EPOET_FIELD(double, "sac_alpha_learning_rate", sac.alpha_lr));
    f.push_back(EPOET_FIELD(double, "sac_tau", sac.tau));
    f.push_back(EPOET_FIELD(double, "sac_discount", sac.discount));
    f.push_back(EPOET_FIELD(double, "sac_reward_scale", sac.reward_scale));
    f.push_back(EPOET_FIELD(std::int64_t, "sac_replay_buffer_size", sac.replay_buffer_size));
    f.push_back(EPOET_FIELD(double, "sac_log_std_min", sac.log_std_min));
    f.push_back(EPOET_FIELD(double, "sac_log_std_max", sac.log_std_max));
    f.push_back(EPOET_FIELD(double, "sac_initial_log_alpha", sac.initial_log_alpha));
    f.push_back({"sac_target_entropy",
                 [](const RunConfig& c) { return std::isnan(c.sac.target_entropy) ? json(nullptr) : json(c.sac.target_entropy); },
                 [](RunConfig& c, const json& v) {
                   if (v.is_null()) c.sac.target_entropy = std::nan("");
                   else if (v.is_number()) c.sac.target_entropy = v.get<double>();
                   else fail(ErrorKind::config, "sac_target_entropy must be a number or null");
                 }});
    f.push_back(EPOET_FIELD(bool, "sac_automatic_entropy_tuning", sac.automatic_entropy_tuning));
    f.push_back(EPOET_FIELD(bool, "sac_reparameterization", sac.reparameterization));
    f.push_back(EPOET_FIELD(bool, "sac_use_soft_update", sac.use_soft_update));
    f.push_back(EPOET_FIELD(int, "sac_trajectory_length", sac.trajectory_length));
    f.push_back(EPOET_FIELD(int, "sac_eval_episodes", sac.eval_episodes));
    f.push_back(EPOET_FIELD(int, "sac_pretrain_epoch", sac.pretrain_epoch));
    f.push_back(EPOET_FIELD(int, "sac_opt_epochs", sac.opt_epochs));
    f.push_back(EPOET_FIELD(int, "sac_target_hard_update_period", sac.target_hard_update_period));

    f.push_back(EPOET_FIELD(std::string, "neat_initial_connection", neat.initial_connection));
    f.push_back(EPOET_FIELD(std::string, "neat_activation_default", neat.activation_default));
    f.push_back(EPOET_FIELD(double, "neat_activation_mutate_rate", neat.activation_mutate_rate));
    f.push_back({"neat_activation_options",
                 [](const RunConfig& c) {
                   json a = json::array();
                   for (auto act : c.neat.activation_options) a.push_back(std::string(cppn::to_string(act)));
                   return a;
                 },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_array()) fail(ErrorKind::config, "neat_activation_options must be a list");
                   c.neat.activation_options.clear();
                   for (const json& e : v) {
                     if (!e.is_string()) fail(ErrorKind::config, "neat_activation_options entries must be strings");
                     c.neat.activation_options.push_back(cppn::parse_cppn_activation(e.get<std::string>()));
                   }
                 }});
    f.push_back(EPOET_FIELD(std::string, "neat_aggregation_default", neat.aggregation_default));
    f.push_back(EPOET_FIELD(double, "neat_aggregation_mutate_rate", neat.aggregation_mutate_rate));
    f.push_back(EPOET_FIELD(std::vector<std::string>, "neat_aggregation_options", neat.aggregation_options));
    f.push_back(EPOET_FIELD(double, "neat_bias_init_mean", neat.bias_init_mean));
    f.push_back(EPOET_FIELD(double, "neat_bias_init_stdev", neat.bias_init_stdev));
    f.push_back(EPOET_FIELD(std::string, "neat_bias_init_type", neat.bias_init_type));
    f.push_back(EPOET_FIELD(double, "neat_bias_max_value", neat.bias_max_value));
    f.push_back(EPOET_FIELD(double, "neat_bias_min_value", neat.bias_min_value));
    f.push_back(EPOET_FIELD(double, "neat_bias_mutate_power", neat.bias_mutate_power));
    f.push_back(EPOET_FIELD(double, "neat_bias_mutate_rate", neat.bias_mutate_rate));
    f.push_back(EPOET_FIELD(double, "neat_compatibility_disjoint_coefficient", neat.compatibility_disjoint_coefficient));
    f.push_back(EPOET_FIELD(double, "neat_compatibility_weight_coefficient", neat.compatibility_weight_coefficient));
    f.push_back(EPOET_FIELD(bool, "neat_enabled_default", neat.enabled_default));
    f.push_back(EPOET_FIELD(bool, "neat_feed_forward", neat.feed_forward));
    f.push_back(EPOET_FIELD(double, "neat_node_add_prob", neat.node_add_prob));
    f.push_back(EPOET_FIELD(double, "neat_node_delete_prob", neat.node_delete_prob));
    f.push_back(EPOET_FIELD(int, "neat_num_inputs", neat.num_inputs));
    f.push_back(EPOET_FIELD(int, "neat_num_hidden", neat.num_hidden));
    f.push_back(EPOET_FIELD(int, "neat_num_outputs", neat.num_outputs));
    f.push_back(EPOET_FIELD(double, "neat_response_init_mean", neat.response_init_mean));
    f.push_back(EPOET_FIELD(double, "neat_response_init_stdev", neat.response_init_stdev));
    f.push_back(EPOET_FIELD(std::string, "neat_response_init_type", neat.response_init_type));
    f.push_back(EPOET_FIELD(double, "neat_response_max_value", neat.response_max_value));
    f.push_back(EPOET_FIELD(double, "neat_response_min_value", neat.response_min_value));
    f.push_back(EPOET_FIELD(double, "neat_response_mutate_power", neat.response_mutate_power));
    f.push_back(EPOET_FIELD(double, "neat_response_mutate_rate", neat.response_mutate_rate));
    f.push_back(EPOET_FIELD(bool, "neat_single_structural_mutation", neat.single_structural_mutation));
    f.push_back(EPOET_FIELD(std::string, "neat_structural_mutation_surer", neat.structural_mutation_surer));
    f.push_back(EPOET_FIELD(double, "neat_weight_init_mean", neat.weight_init_mean));
    f.push_back(EPOET_FIELD(double, "neat_weight_init_stdev", neat.weight_init_stdev));
    f.push_back(EPOET_FIELD(std::string, "neat_weight_init_type", neat.weight_init_type));
    f.push_back(EPOET_FIELD(double, "neat_weight_max_value", neat.weight_max_value));
    f.push_back(EPOET_FIELD(double, "neat_weight_min_value", neat.weight_min_value));
    f.push_back(EPOET_FIELD(double, "neat_weight_mutate_power", neat.weight_mutate_power));
    f.push_back(EPOET_FIELD(double, "neat_weight_mutate_rate", neat.weight_mutate_rate));

    f.push_back(EPOET_FIELD(int, "terrain_resolution", terrain.resolution));
    f.push_back(EPOET_FIELD(int, "terrain_bowl_coarse_resolution", terrain.bowl_coarse_resolution));
    f.push_back(EPOET_FIELD(double, "terrain_elevation_initial", terrain.elevation_initial));
    f.push_back(EPOET_FIELD(double, "terrain_elevation_step", terrain.elevation_step));
    f.push_back(EPOET_FIELD(double, "terrain_bowl_threshold_rate", terrain.bowl_threshold_rate));
    f.push_back(EPOET_FIELD(double, "terrain_bowl_threshold_max", terrain.bowl_threshold_max));
    f.push_back(EPOET_FIELD(double, "terrain_bowl_weight", terrain.bowl_weight));
    f.push_back(EPOET_FIELD(double, "terrain_cppn_weight", terrain.cppn_weight));
    f.push_back(EPOET_FIELD(double, "terrain_world_size", terrain.world_size));

    f.push_back(EPOET_FIELD(double, "walker_dt", walker.dt));
    f.push_back(EPOET_FIELD(double, "walker_servo_gain", walker.servo_gain));
    f.push_back(EPOET_FIELD(double, "walker_target_velocity", walker.target_velocity));
    f.push_back(EPOET_FIELD(double, "walker_velocity_weight", walker.velocity_weight));
    f.push_back(EPOET_FIELD(double, "walker_heading_weight", walker.heading_weight));
    f.push_back(EPOET_FIELD(double, "walker_torso_angle_penalty", walker.torso_angle_penalty));
    f.push_back(EPOET_FIELD(double, "walker_acceleration_penalty", walker.acceleration_penalty));
    f.push_back(EPOET_FIELD(double, "walker_y_axis_penalty", walker.y_axis_penalty));
    f.push_back(EPOET_FIELD(double, "walker_z_velocity_penalty", walker.z_velocity_penalty));
    f.push_back(EPOET_FIELD(double, "walker_control_penalty", walker.control_penalty));
    f.push_back(EPOET_FIELD(double, "walker_finish_bonus", walker.finish_bonus));
    f.push_back(EPOET_FIELD(int, "walker_trajectory_length", walker.trajectory_length));
    f.push_back(EPOET_FIELD(int, "walker_backward_step_limit", walker.backward_step_limit));
    f.push_back(EPOET_FIELD(double, "walker_initial_heading_noise", walker.initial_heading_noise));
    f.push_back(EPOET_FIELD(double, "walker_hip_radius", walker.hip_radius));
    f.push_back(EPOET_FIELD(double, "walker_leg_reach", walker.leg_reach));
    f.push_back(EPOET_FIELD(double, "walker_reach_range", walker.reach_range));
    f.push_back(EPOET_FIELD(double, "walker_standing_depth", walker.standing_depth));
    f.push_back(EPOET_FIELD(double, "walker_lift_range", walker.lift_range));
    f.push_back({"walker_joint_range",
                 [](const RunConfig& c) { return json(std::vector<double>(c.walker.joint_range.begin(), c.walker.joint_range.end())); },
                 [](RunConfig& c, const json& v) {
                   if (!v.is_array() || v.size() != 3) fail(ErrorKind::config, "walker_joint_range must be 3 numbers");
                   for (int i = 0; i < 3; ++i) {
                     if (!v[i].is_number()) fail(ErrorKind::config, "walker_joint_range must be 3 numbers");
                     c.walker.joint_range[i] = v[i].get<double>();
                   }
                 }});
    f.push_back(EPOET_FIELD(double, "walker_contact_tolerance", walker.contact_tolerance));
    f.push_back(EPOET_FIELD(double, "walker_slip_coefficient", walker.slip_coefficient));
    f.push_back(EPOET_FIELD(double, "walker_height_sample_radius", walker.height_sample_radius));
    return f;
  }();
  return table;
}

#undef EPOET_FIELD

}  // namespace config_detail

/// Every key with its current value.
inline json config_to_json(const RunConfig& c) {
  json j = json::object();
  for (const auto& f : config_detail::fields()) j[f.key] = f.get(c);
  return j;
}

inline void set_config_value(RunConfig& c, const std::string& key, const json& value) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  fail(ErrorKind::config, "unknown configuration key '" + key + "'");
}

/// Applies the keys present in `j` on top of `base`, then validates.
inline RunConfig config_from_json(const json& j, RunConfig base = {}) {
  if (!j.is_object()) fail(ErrorKind::config, "configuration must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) set_config_value(base, it.key(), it.value());
  base.validate();
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot read configuration '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "malformed configuration '" + path + "': " + e.what());
  }
  return config_from_json(j, std::move(base));
}

/// "key=value"; the value is read as JSON when it parses, else as a string.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::config, "override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  set_config_value(c, key, value);
}

}  // namespace epoet
