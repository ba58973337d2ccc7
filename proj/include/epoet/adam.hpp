#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace epoet {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  static AdamState zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam step. `descent` minimizes; pass false for ascent.
inline void adam_step(AdamState& st, Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad,
                      double lr, bool descent = true, const AdamHyper& h = {}) {
  st.t += 1;
  st.m = h.beta1 * st.m + (1.0 - h.beta1) * grad;
  st.v = h.beta2 * st.v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.t));
  const double sign = descent ? -1.0 : 1.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] += sign * lr * mhat / (std::sqrt(vhat) + h.epsilon);
  }
}

}  // namespace epoet
