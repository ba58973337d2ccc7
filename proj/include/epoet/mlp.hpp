#pragma once

// Fully connected networks stored as one flat parameter vector.
//
// Layout, layer by layer: weight matrix (out x in, row-major, so row i holds
// the incoming weights of unit i) followed by the bias vector (out).

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "epoet/error.hpp"
#include "epoet/random.hpp"

namespace epoet {

enum class Activation { tanh, relu, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu" || s == "ReLU") return Activation::relu;
  if (s == "identity") return Activation::identity;
  fail(ErrorKind::config, "unknown network activation '" + std::string(s) + "'");
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MlpShape {
  std::vector<int> sizes;  // input, hidden..., output
  Activation hidden = Activation::tanh;
  Activation output = Activation::tanh;

  int num_layers() const { return static_cast<int>(sizes.size()) - 1; }
  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }

  Eigen::Index weight_offset(int layer) const {
    Eigen::Index off = 0;
    for (int l = 0; l < layer; ++l) off += Eigen::Index(sizes[l + 1]) * (sizes[l] + 1);
    return off;
  }
  Eigen::Index bias_offset(int layer) const {
    return weight_offset(layer) + Eigen::Index(sizes[layer + 1]) * sizes[layer];
  }
  Eigen::Index num_params() const { return weight_offset(num_layers()); }

  Activation activation(int layer) const { return layer + 1 == num_layers() ? output : hidden; }

  bool operator==(const MlpShape&) const = default;
};

/// Builds input -> hidden... -> output.
inline MlpShape make_shape(int input, const std::vector<int>& hidden, int output, Activation hidden_act,
                           Activation output_act) {
  MlpShape s;
  s.sizes.push_back(input);
  s.sizes.insert(s.sizes.end(), hidden.begin(), hidden.end());
  s.sizes.push_back(output);
  s.hidden = hidden_act;
  s.output = output_act;
  return s;
}

struct MlpParams {
  MlpShape shape;
  Eigen::VectorXd flat;

  Eigen::Map<const RowMatrix> weights(int l) const {
    return {flat.data() + shape.weight_offset(l), shape.sizes[l + 1], shape.sizes[l]};
  }
  Eigen::Map<RowMatrix> weights(int l) {
    return {flat.data() + shape.weight_offset(l), shape.sizes[l + 1], shape.sizes[l]};
  }
  Eigen::Map<const Eigen::VectorXd> biases(int l) const {
    return {flat.data() + shape.bias_offset(l), shape.sizes[l + 1]};
  }
  Eigen::Map<Eigen::VectorXd> biases(int l) { return {flat.data() + shape.bias_offset(l), shape.sizes[l + 1]}; }

  bool operator==(const MlpParams& o) const { return shape == o.shape && flat == o.flat; }
};

/// Policy parameters for the ES agents share the MLP representation.
using PolicyParams = MlpParams;

inline MlpParams zero_mlp(const MlpShape& shape) { return {shape, Eigen::VectorXd::Zero(shape.num_params())}; }

/// Gaussian weights with stdev output_scale/sqrt(fan_in) on the last layer and
/// 1/sqrt(fan_in) elsewhere; zero biases.
inline MlpParams init_mlp(const MlpShape& shape, Rng& rng, double output_scale = 1.0) {
  MlpParams p = zero_mlp(shape);
  for (int l = 0; l < shape.num_layers(); ++l) {
    const double scale = (l + 1 == shape.num_layers() ? output_scale : 1.0) / std::sqrt(double(shape.sizes[l]));
    auto w = p.weights(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gaussian(rng, 0.0, scale);
  }
  return p;
}

namespace detail {

template <typename Derived>
void apply_activation(Activation a, Eigen::MatrixBase<Derived>& z) {
  switch (a) {
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::identity: break;
  }
}

// Derivative expressed through the activation output y.
inline Eigen::MatrixXd activation_grad_from_output(Activation a, const Eigen::MatrixXd& y) {
  switch (a) {
    case Activation::tanh: return (1.0 - y.array().square()).matrix();
    case Activation::relu: return (y.array() > 0.0).cast<double>().matrix();
    case Activation::identity: return Eigen::MatrixXd::Ones(y.rows(), y.cols());
  }
  return Eigen::MatrixXd::Ones(y.rows(), y.cols());
}

}  // namespace detail

/// Reusable buffers for single-sample evaluation inside rollouts.
struct MlpWorkspace {
  std::vector<Eigen::VectorXd> layers;
};

inline const Eigen::VectorXd& forward(const MlpParams& p, const Eigen::VectorXd& x, MlpWorkspace& ws) {
  const int n = p.shape.num_layers();
  require(x.size() == p.shape.input_dim(), ErrorKind::structural, "network input size mismatch");
  ws.layers.resize(static_cast<std::size_t>(n));
  const Eigen::VectorXd* in = &x;
  for (int l = 0; l < n; ++l) {
    Eigen::VectorXd& out = ws.layers[static_cast<std::size_t>(l)];
    out.noalias() = p.weights(l) * (*in);
    out += p.biases(l);
    detail::apply_activation(p.shape.activation(l), out);
    in = &out;
  }
  return ws.layers.back();
}

inline Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x) {
  MlpWorkspace ws;
  return forward(p, x, ws);
}

/// Activations recorded by forward_batch for backward_batch. Columns are samples.
struct MlpTape {
  std::vector<Eigen::MatrixXd> values;  // values[0] = input, values[l+1] = output of layer l
};

inline Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::MatrixXd& x, MlpTape* tape = nullptr) {
  const int n = p.shape.num_layers();
  require(x.rows() == p.shape.input_dim(), ErrorKind::structural, "network input size mismatch");
  Eigen::MatrixXd cur = x;
  if (tape) {
    tape->values.clear();
    tape->values.push_back(x);
  }
  for (int l = 0; l < n; ++l) {
    Eigen::MatrixXd z = p.weights(l) * cur;
    z.colwise() += p.biases(l);
    detail::apply_activation(p.shape.activation(l), z);
    cur = std::move(z);
    if (tape) tape->values.push_back(cur);
  }
  return cur;
}

/// Reverse pass. Adds dL/dparams into `grad` and returns dL/dinput.
inline Eigen::MatrixXd backward_batch(const MlpParams& p, const MlpTape& tape, const Eigen::MatrixXd& d_out,
                                      Eigen::Ref<Eigen::VectorXd> grad) {
  const int n = p.shape.num_layers();
  Eigen::MatrixXd delta = d_out;
  for (int l = n - 1; l >= 0; --l) {
    const Eigen::MatrixXd& y = tape.values[static_cast<std::size_t>(l + 1)];
    const Eigen::MatrixXd& x = tape.values[static_cast<std::size_t>(l)];
    delta = delta.cwiseProduct(detail::activation_grad_from_output(p.shape.activation(l), y));
    Eigen::Map<RowMatrix> gw(grad.data() + p.shape.weight_offset(l), p.shape.sizes[l + 1], p.shape.sizes[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + p.shape.bias_offset(l), p.shape.sizes[l + 1]);
    gw.noalias() += delta * x.transpose();
    gb += delta.rowwise().sum();
    delta = p.weights(l).transpose() * delta;
  }
  return delta;
}

}  // namespace epoet
