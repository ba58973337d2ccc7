#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace epoet {

/// One (s, a, r, s', d) record. d marks true terminals, not step-budget cutoffs.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;
};

struct StepOutcome {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
  bool finished = false;
  bool truncated = false;
};

/// Episodic continuous-control task. Instances are not shared between threads.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Eigen::VectorXd reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(const Eigen::VectorXd& action) = 0;
};

}  // namespace epoet
