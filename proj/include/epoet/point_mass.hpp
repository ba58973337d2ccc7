#pragma once

#include <cmath>
#include <cstdint>

#include "epoet/environment.hpp"
#include "epoet/random.hpp"

namespace epoet {

/// 1-D point mass: x += step_size * clip(a), reward -|x - goal|, fixed horizon.
/// Start positions are uniform on [-1, 1].
class PointMassEnv final : public Environment {
 public:
  explicit PointMassEnv(int horizon = 20, double step_size = 0.25, double goal = 0.0)
      : horizon_(horizon), step_size_(step_size), goal_(goal) {}

  int observation_dim() const override { return 1; }
  int action_dim() const override { return 1; }

  Eigen::VectorXd reset(std::uint64_t seed) override {
    Rng rng(seed);
    x_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    t_ = 0;
    return Eigen::VectorXd::Constant(1, x_);
  }

  StepOutcome step(const Eigen::VectorXd& action) override {
    const double a = std::fmax(-1.0, std::fmin(1.0, action[0]));
    x_ += step_size_ * a;
    ++t_;
    StepOutcome o;
    o.observation = Eigen::VectorXd::Constant(1, x_);
    o.reward = -std::abs(x_ - goal_);
    o.done = t_ >= horizon_;
    o.truncated = o.done;
    return o;
  }

  double position() const { return x_; }

 private:
  int horizon_;
  double step_size_;
  double goal_;
  double x_ = 0.0;
  int t_ = 0;
};

}  // namespace epoet
