#pragma once

// Simplified deterministic hexapod on a heightmap.
//
// Each of the six legs has three servoed joints (coxa swing, femur lift, tibia
// reach). Feet that touch the terrain are pinned: moving a stance leg moves the
// torso instead of the foot. The torso rests on the most extended feet, so its
// height follows the terrain under them, and its roll/pitch follow the local
// terrain slope. Uphill motion slips in proportion to the slope.
//
// Observation layout (53 values):
//   [0, 18)  joint angles       [18, 36) joint velocities (rad/s)
//   [36, 42) leg contacts       [42, 46) torso quaternion (w, x, y, z)
//   [46, 53) terrain heights relative to the torso: centre + under each hip

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epoet/environment.hpp"
#include "epoet/error.hpp"
#include "epoet/mlp.hpp"
#include "epoet/random.hpp"
#include "epoet/terrain.hpp"

namespace epoet::walker {

inline constexpr int kLegs = 6;
inline constexpr int kJoints = 18;
inline constexpr int kHeightSamples = 7;
inline constexpr int kObservationDim = 2 * kJoints + kLegs + 4 + kHeightSamples;  // 53
inline constexpr int kActionDim = kJoints;

namespace obs_index {
inline constexpr int angles = 0;
inline constexpr int velocities = 18;
inline constexpr int contacts = 36;
inline constexpr int quaternion = 42;
inline constexpr int heights = 46;
}  // namespace obs_index

struct WalkerConfig {
  double dt = 0.02;
  double servo_gain = 40.0;
  double target_velocity = 0.4;
  double velocity_weight = 6.0;
  double heading_weight = 10.0;
  double torso_angle_penalty = 0.01;
  double acceleration_penalty = 0.01;
  double y_axis_penalty = 0.01;
  double z_velocity_penalty = 0.01;
  double control_penalty = 0.001;
  double finish_bonus = 100.0;
  int trajectory_length = 2000;
  int backward_step_limit = 500;
  double initial_heading_noise = 0.05;

  // Body geometry (world units / radians).
  double hip_radius = 0.12;
  double leg_reach = 0.22;
  double reach_range = 0.10;
  double standing_depth = 0.14;
  double lift_range = 0.08;
  std::array<double, 3> joint_range = {0.6, 0.8, 0.8};
  double contact_tolerance = 0.02;
  double slip_coefficient = 2.0;
  double height_sample_radius = 0.3;

  void validate() const {
    require(dt > 0 && servo_gain > 0, ErrorKind::config, "walker dt and servo gain must be positive");
    require(trajectory_length >= 1, ErrorKind::config, "trajectory_length must be >= 1");
    require(backward_step_limit >= 0, ErrorKind::config, "walker_backward_step_limit must be >= 0");
    require(target_velocity > 0, ErrorKind::config, "walker_target_velocity must be positive");
    require(torso_angle_penalty >= 0 && acceleration_penalty >= 0 && y_axis_penalty >= 0 &&
                z_velocity_penalty >= 0 && control_penalty >= 0,
            ErrorKind::config, "walker penalty weights must be non-negative");
  }
};

struct WalkerState {
  double x = 0.0, y = 0.0, z = 0.0;
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  std::array<double, 4> quaternion = {1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  std::array<double, kJoints> joints{};
  std::array<double, kJoints> joint_velocities{};
  std::array<bool, kLegs> contacts{};
  std::array<double, 3> velocity{};  // world units per second
  int step = 0;
  int backward_steps = 0;
  double prev_heading_deviation = 0.0;
  double prev_y_deviation = 0.0;
};

struct StepInfo {
  bool finished = false;
  bool truncated = false;  // ended by the step budget only
  double x_velocity = 0.0;
  double y_velocity = 0.0;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct PenaltyInputs {
  double torso_roll = 0.0;
  double torso_pitch = 0.0;
  std::array<double, 3> velocity_change{};
  double y_velocity = 0.0;
  double z_velocity = 0.0;
  double control_sq_norm = 0.0;
};

// ---------------------------------------------------------------------------
// Reward

inline double velocity_reward(double x_vel, double y_vel, double target = 0.4) {
  return (1.0 / (std::abs(x_vel - target) + 1.0) - 1.0 / (target + 1.0)) * (1.0 / (1.0 + 30.0 * y_vel * y_vel));
}

/// Reward for reducing heading and lateral deviation; devs are (heading, y).
inline double heading_reward(std::array<double, 2> prev_dev, std::array<double, 2> cur_dev) {
  return (std::abs(prev_dev[0]) - std::abs(cur_dev[0])) + (std::abs(prev_dev[1]) - std::abs(cur_dev[1]));
}

inline double penalty_cost(const PenaltyInputs& p, const WalkerConfig& c) {
  const auto& dv = p.velocity_change;
  return c.torso_angle_penalty * (p.torso_roll * p.torso_roll + p.torso_pitch * p.torso_pitch) +
         c.acceleration_penalty * (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]) +
         c.y_axis_penalty * p.y_velocity * p.y_velocity + c.z_velocity_penalty * p.z_velocity * p.z_velocity +
         c.control_penalty * p.control_sq_norm;
}

/// R = w_v * R^v + w_theta * R^theta - R^c.
inline double reward_fn(double x_vel, double y_vel, std::array<double, 2> prev_dev, std::array<double, 2> cur_dev,
                        const PenaltyInputs& penalties, const WalkerConfig& c = {}) {
  return c.velocity_weight * velocity_reward(x_vel, y_vel, c.target_velocity) +
         c.heading_weight * heading_reward(prev_dev, cur_dev) - penalty_cost(penalties, c);
}

// ---------------------------------------------------------------------------
// Kinematics

namespace detail {

inline double hip_angle(int leg) { return std::numbers::pi / 6.0 + leg * std::numbers::pi / 3.0; }

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

struct Vec2 {
  double x = 0.0, y = 0.0;
};

/// Foot position in the torso frame (horizontal only).
inline Vec2 foot_offset(const WalkerConfig& c, const std::array<double, kJoints>& j, int leg) {
  const double phi = hip_angle(leg);
  const double psi = phi + j[3 * leg];
  const double reach = c.leg_reach + c.reach_range * std::sin(j[3 * leg + 2]);
  return {c.hip_radius * std::cos(phi) + reach * std::cos(psi), c.hip_radius * std::sin(phi) + reach * std::sin(psi)};
}

/// Vertical distance from torso to foot; raising the femur shortens it.
inline double foot_depth(const WalkerConfig& c, const std::array<double, kJoints>& j, int leg) {
  return c.standing_depth - c.lift_range * std::sin(j[3 * leg + 1]);
}

inline Vec2 rotate(Vec2 v, double yaw) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  return {cy * v.x - sy * v.y, sy * v.x + cy * v.y};
}

inline Vec2 terrain_gradient(const terrain::Heightmap& map, double x, double y) {
  constexpr double h = 0.05;
  return {(map.sample(x + h, y) - map.sample(x - h, y)) / (2 * h),
          (map.sample(x, y + h) - map.sample(x, y - h)) / (2 * h)};
}

/// Torso height and leg contacts for a pose.
inline void settle(WalkerState& s, const terrain::Heightmap& map, const WalkerConfig& c) {
  std::array<double, kLegs> support{};
  double top = -1e300;
  for (int k = 0; k < kLegs; ++k) {
    const Vec2 off = rotate(foot_offset(c, s.joints, k), s.yaw);
    support[k] = map.sample(s.x + off.x, s.y + off.y) + foot_depth(c, s.joints, k);
    top = std::max(top, support[k]);
  }
  s.z = top;
  for (int k = 0; k < kLegs; ++k) s.contacts[k] = top - support[k] <= c.contact_tolerance;
}

inline void orient(WalkerState& s, const terrain::Heightmap& map) {
  const Vec2 g = terrain_gradient(map, s.x, s.y);
  const double fwd = g.x * std::cos(s.yaw) + g.y * std::sin(s.yaw);
  const double lat = -g.x * std::sin(s.yaw) + g.y * std::cos(s.yaw);
  s.pitch = -std::atan(fwd);
  s.roll = std::atan(lat);
  // ZYX Euler -> quaternion.
  const double cy = std::cos(s.yaw / 2), sy = std::sin(s.yaw / 2);
  const double cp = std::cos(s.pitch / 2), sp = std::sin(s.pitch / 2);
  const double cr = std::cos(s.roll / 2), sr = std::sin(s.roll / 2);
  std::array<double, 4> q = {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
                             cr * cp * sy - sr * sp * cy};
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= n;
  s.quaternion = q;
}

}  // namespace detail

inline Eigen::VectorXd observe(const WalkerState& s, const terrain::Heightmap& map, const WalkerConfig& c) {
  Eigen::VectorXd o(kObservationDim);
  for (int i = 0; i < kJoints; ++i) {
    o[obs_index::angles + i] = s.joints[i];
    o[obs_index::velocities + i] = s.joint_velocities[i];
  }
  for (int k = 0; k < kLegs; ++k) o[obs_index::contacts + k] = s.contacts[k] ? 1.0 : 0.0;
  for (int q = 0; q < 4; ++q) o[obs_index::quaternion + q] = s.quaternion[q];
  o[obs_index::heights] = map.sample(s.x, s.y) - s.z;
  for (int k = 0; k < kLegs; ++k) {
    const double a = s.yaw + detail::hip_angle(k);
    o[obs_index::heights + 1 + k] =
        map.sample(s.x + c.height_sample_radius * std::cos(a), s.y + c.height_sample_radius * std::sin(a)) - s.z;
  }
  return o;
}

/// Start pose: torso at the x = 0 edge on the centre line, neutral joints, zero
/// velocities. The seed only perturbs the initial heading.
inline WalkerState reset_state(const terrain::Heightmap& map, std::uint64_t rng_seed, const WalkerConfig& c) {
  WalkerState s;
  Rng rng(rng_seed);
  s.yaw = c.initial_heading_noise > 0
              ? std::uniform_real_distribution<double>(-c.initial_heading_noise, c.initial_heading_noise)(rng)
              : 0.0;
  detail::settle(s, map, c);
  detail::orient(s, map);
  s.prev_heading_deviation = s.yaw;
  s.prev_y_deviation = s.y;
  return s;
}

inline Eigen::VectorXd reset(const terrain::Heightmap& map, std::uint64_t rng_seed, const WalkerConfig& c,
                             WalkerState* state_out = nullptr) {
  WalkerState s = reset_state(map, rng_seed, c);
  if (state_out) *state_out = s;
  return observe(s, map, c);
}

/// Advances one control step. Returns the successor state via `state`.
inline StepResult step(WalkerState& state, const Eigen::VectorXd& action, const terrain::Heightmap& map,
                       const WalkerConfig& c) {
  require(action.size() == kActionDim, ErrorKind::structural, "action must have 18 entries");
  for (Eigen::Index i = 0; i < action.size(); ++i)
    if (!std::isfinite(action[i])) fail(ErrorKind::numeric, "non-finite action entry");

  WalkerState next = state;
  std::array<double, kJoints> targets{};
  double control_sq = 0.0;
  for (int i = 0; i < kJoints; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    control_sq += a * a;
    targets[i] = a * c.joint_range[i % 3];
  }
  const double blend = 1.0 - std::exp(-c.servo_gain * c.dt);
  for (int i = 0; i < kJoints; ++i) {
    next.joints[i] = state.joints[i] + blend * (targets[i] - state.joints[i]);
    next.joint_velocities[i] = (next.joints[i] - state.joints[i]) / c.dt;
  }

  // Pinned stance feet push the torso.
  detail::Vec2 shift{};
  double turn = 0.0;
  int stance = 0;
  for (int k = 0; k < kLegs; ++k) {
    if (!state.contacts[k]) continue;
    const detail::Vec2 before = detail::foot_offset(c, state.joints, k);
    const detail::Vec2 after = detail::foot_offset(c, next.joints, k);
    const detail::Vec2 d{after.x - before.x, after.y - before.y};
    shift.x -= d.x;
    shift.y -= d.y;
    turn -= (before.x * d.y - before.y * d.x) / (before.x * before.x + before.y * before.y);
    ++stance;
  }
  if (stance > 0) {
    const double support = std::min(1.0, stance / 3.0);
    shift.x *= support / stance;
    shift.y *= support / stance;
    turn *= support / stance;
    detail::Vec2 world = detail::rotate(shift, state.yaw);
    const double len = std::hypot(world.x, world.y);
    if (len > 0.0) {
      const detail::Vec2 g = detail::terrain_gradient(map, state.x, state.y);
      const double slope = (g.x * world.x + g.y * world.y) / len;
      const double slip = 1.0 / (1.0 + c.slip_coefficient * std::max(0.0, slope));
      world.x *= slip;
      world.y *= slip;
    }
    next.x += world.x;
    next.y += world.y;
    next.yaw = detail::wrap_angle(state.yaw + turn);
  }
  detail::settle(next, map, c);
  detail::orient(next, map);

  const std::array<double, 3> vel = {(next.x - state.x) / c.dt, (next.y - state.y) / c.dt, (next.z - state.z) / c.dt};
  next.velocity = vel;

  PenaltyInputs pen;
  pen.torso_roll = next.roll;
  pen.torso_pitch = next.pitch;
  pen.velocity_change = {vel[0] - state.velocity[0], vel[1] - state.velocity[1], vel[2] - state.velocity[2]};
  pen.y_velocity = vel[1];
  pen.z_velocity = vel[2];
  pen.control_sq_norm = control_sq;
  const std::array<double, 2> prev_dev = {state.prev_heading_deviation, state.prev_y_deviation};
  const std::array<double, 2> cur_dev = {next.yaw, next.y};
  double reward = reward_fn(vel[0], vel[1], prev_dev, cur_dev, pen, c);
  next.prev_heading_deviation = next.yaw;
  next.prev_y_deviation = next.y;

  next.step = state.step + 1;
  next.backward_steps = vel[0] < 0.0 ? state.backward_steps + 1 : 0;

  StepResult r;
  r.info.x_velocity = vel[0];
  r.info.y_velocity = vel[1];
  if (next.x >= map.world_size) {
    r.info.finished = true;
    r.done = true;
    reward += c.finish_bonus;
  } else if (next.backward_steps > c.backward_step_limit) {
    r.done = true;
  } else if (next.step >= c.trajectory_length) {
    r.done = true;
    r.info.truncated = true;
  }
  r.reward = reward;
  r.observation = observe(next, map, c);
  state = next;
  return r;
}

/// Stateful wrapper over a fixed heightmap.
class WalkerEnv final : public Environment {
 public:
  WalkerEnv(terrain::Heightmap map, WalkerConfig config) : map_(std::move(map)), config_(config) {}

  int observation_dim() const override { return kObservationDim; }
  int action_dim() const override { return kActionDim; }

  Eigen::VectorXd reset(std::uint64_t seed) override { return walker::reset(map_, seed, config_, &state_); }

  StepOutcome step(const Eigen::VectorXd& action) override {
    StepResult r = walker::step(state_, action, map_, config_);
    last_info_ = r.info;
    return {std::move(r.observation), r.reward, r.done, r.info.finished, r.info.truncated};
  }

  const WalkerState& state() const { return state_; }
  const StepInfo& last_info() const { return last_info_; }
  const terrain::Heightmap& map() const { return map_; }

 private:
  terrain::Heightmap map_;
  WalkerConfig config_;
  WalkerState state_;
  StepInfo last_info_;
};

// ---------------------------------------------------------------------------
// Rollouts

struct TrajectoryRow {
  int step = 0;
  double x = 0.0, y = 0.0, z = 0.0;
  double reward = 0.0;
  std::array<double, kActionDim> action{};
};

struct RolloutOptions {
  bool record_transitions = false;
  bool record_trajectory = false;
};

struct RolloutResult {
  double total_return = 0.0;
  int steps = 0;
  bool finished = false;
  std::vector<Transition> transitions;
  std::vector<TrajectoryRow> trajectory;
};

/// Runs one episode of the deterministic MLP policy to termination.
inline RolloutResult rollout(const PolicyParams& params, const terrain::Heightmap& map, std::uint64_t rng_seed,
                             const WalkerConfig& c, RolloutOptions opts = {}) {
  require(params.shape.input_dim() == kObservationDim && params.shape.output_dim() == kActionDim,
          ErrorKind::structural, "policy shape must map 53 observations to 18 actions");
  WalkerState state;
  Eigen::VectorXd obs = reset(map, rng_seed, c, &state);
  MlpWorkspace ws;
  RolloutResult out;
  for (;;) {
    Eigen::VectorXd action = forward(params, obs, ws).cwiseMax(-1.0).cwiseMin(1.0);
    StepResult r = step(state, action, map, c);
    out.total_return += r.reward;
    ++out.steps;
    if (opts.record_trajectory) {
      TrajectoryRow row{state.step, state.x, state.y, state.z, r.reward, {}};
      for (int i = 0; i < kActionDim; ++i) row.action[i] = action[i];
      out.trajectory.push_back(row);
    }
    if (opts.record_transitions)
      out.transitions.push_back({obs, action, r.reward, r.observation, r.done && !r.info.truncated});
    obs = std::move(r.observation);
    if (r.done) {
      out.finished = r.info.finished;
      break;
    }
  }
  return out;
}

inline RolloutResult rollout(const PolicyParams& params, const terrain::TerrainSpec& spec, std::uint64_t rng_seed,
                             const WalkerConfig& c, RolloutOptions opts = {}) {
  return rollout(params, terrain::compose_heightmap(spec), rng_seed, c, opts);
}

/// "solved": reached the finish line with at least the threshold return.
inline bool is_solved(const RolloutResult& r, double threshold = 2000.0) {
  return r.finished && r.total_return >= threshold;
}

/// CSV with columns step,x,y,z,reward,a0..a17.
inline void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  out << "step,x,y,z,reward";
  for (int i = 0; i < kActionDim; ++i) out << ",a" << i;
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << ',' << buf;
  };
  for (const TrajectoryRow& r : rows) {
    out << r.step;
    put(r.x);
    put(r.y);
    put(r.z);
    put(r.reward);
    for (double a : r.action) put(a);
    out << '\n';
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

/// Open-loop alternating-tripod gait. direction +1 walks toward +x, -1 backs up.
/// Used by tests and demos to drive the body without a trained policy.
inline Eigen::VectorXd tripod_gait(int step, double direction = 1.0, int period = 40, double amplitude = 0.9) {
  Eigen::VectorXd a(kActionDim);
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(step % period) / period;
  for (int k = 0; k < kLegs; ++k) {
    const double leg_phase = phase + (k % 2 == 0 ? 0.0 : std::numbers::pi);
    const bool left = k < 3;
    // Stance while the coxa sweeps toward the rear (sin increasing).
    const double sweep = std::sin(leg_phase);
    const bool in_stance = std::cos(leg_phase) > 0.0;
    a[3 * k] = (left ? 1.0 : -1.0) * direction * amplitude * sweep;
    a[3 * k + 1] = in_stance ? -0.5 : 0.5;
    a[3 * k + 2] = 0.0;
  }
  return a;
}

}  // namespace epoet::walker
