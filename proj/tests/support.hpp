#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "epoet/epoet.hpp"

namespace testing_support {

using namespace epoet;

// ---------------------------------------------------------------------------
// CPPN: recursive evaluation straight from the gene lists.

inline double naive_activation(cppn::CppnActivation a, double z) {
  switch (a) {
    case cppn::CppnActivation::identity: return z;
    case cppn::CppnActivation::sin: return std::sin(z);
    case cppn::CppnActivation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case cppn::CppnActivation::square: return z * z;
    case cppn::CppnActivation::tanh: return std::tanh(z);
    case cppn::CppnActivation::gauss: return std::exp(-z * z);
  }
  return z;
}

inline double naive_node(const cppn::CppnGenome& g, int id, double x, double y, std::map<int, double>& memo) {
  if (auto it = memo.find(id); it != memo.end()) return it->second;
  if (id == cppn::kInputX) return x;
  if (id == cppn::kInputY) return y;
  const cppn::NodeGene* node = nullptr;
  for (const auto& n : g.nodes)
    if (n.id == id) node = &n;
  double sum = 0.0;
  for (const auto& c : g.connections)
    if (c.enabled && c.to == id) sum += c.weight * naive_node(g, c.from, x, y, memo);
  const double v = naive_activation(node->activation, node->bias + node->response * sum);
  memo[id] = v;
  return v;
}

inline double naive_cppn(const cppn::CppnGenome& g, double x, double y) {
  std::map<int, double> memo;
  return naive_node(g, cppn::kOutput, x, y, memo);
}

// ---------------------------------------------------------------------------
// Bowl: scalar restatement of the recipe.

inline std::vector<std::vector<double>> scalar_bowl(std::uint64_t seed, int coarse, int res, double threshold) {
  Rng rng(seed);
  std::vector<std::vector<double>> u(coarse, std::vector<double>(coarse));
  for (int i = 0; i < coarse; ++i)
    for (int j = 0; j < coarse; ++j) u[i][j] = uniform01(rng);
  std::vector<std::vector<double>> b(res, std::vector<double>(res));
  double lo = INFINITY, hi = -INFINITY;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const double gx = i * double(coarse - 1) / (res - 1), gy = j * double(coarse - 1) / (res - 1);
      const int i0 = std::min(int(gx), coarse - 2), j0 = std::min(int(gy), coarse - 2);
      const double fx = gx - i0, fy = gy - j0;
      const double s = u[i0][j0] * (1 - fx) * (1 - fy) + u[i0 + 1][j0] * fx * (1 - fy) + u[i0][j0 + 1] * (1 - fx) * fy +
                       u[i0 + 1][j0 + 1] * fx * fy;
      b[i][j] = std::max(0.0, std::cos(2 * std::numbers::pi * s) - threshold);
      lo = std::min(lo, b[i][j]);
      hi = std::max(hi, b[i][j]);
    }
  for (auto& row : b)
    for (double& v : row) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return b;
}

// ---------------------------------------------------------------------------
// Central finite differences.

inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Genomes for hand-checkable cases.

inline cppn::CppnGenome bare_genome(cppn::CppnActivation out_act = cppn::CppnActivation::identity, double bias = 0.0) {
  cppn::CppnGenome g;
  g.nodes = {{cppn::kInputY, cppn::NodeKind::input, cppn::CppnActivation::identity, 0.0, 1.0},
             {cppn::kInputX, cppn::NodeKind::input, cppn::CppnActivation::identity, 0.0, 1.0},
             {cppn::kOutput, cppn::NodeKind::output, out_act, bias, 1.0}};
  return g;
}

inline cppn::CppnGenome identity_x_genome(cppn::CppnActivation out_act = cppn::CppnActivation::identity) {
  cppn::CppnGenome g = bare_genome(out_act);
  g.connections.push_back({cppn::kInputX, cppn::kOutput, 1.0, true});
  return g;
}

inline terrain::Heightmap flat_map(int res = 16, double world = 12.0) {
  terrain::Heightmap m;
  m.grid = Eigen::MatrixXd::Zero(res, res);
  m.resolution = res;
  m.world_size = world;
  return m;
}

// ---------------------------------------------------------------------------
// Orchestrator stubs.

/// Return is a cheap deterministic function of (params, map, seed); no physics.
class StubBackend final : public poet::RolloutBackend {
 public:
  explicit StubBackend(double scale = 1.0, double offset = 0.0) : scale_(scale), offset_(offset) {}

  poet::RolloutOutcome rollout(const PolicyParams& params, const terrain::Heightmap& map, std::uint64_t seed,
                               bool record) const override {
    Rng rng(seed);
    const double r = offset_ + scale_ * (params.flat.sum() - 10.0 * map.grid.mean() + 0.1 * gaussian(rng));
    poet::RolloutOutcome o;
    o.total_return = r;
    o.steps = 1;
    if (record) {
      Transition t;
      t.state = Eigen::VectorXd::Zero(params.shape.input_dim());
      t.next_state = t.state;
      t.action = Eigen::VectorXd::Zero(params.shape.output_dim());
      t.reward = r;
      o.transitions.push_back(t);
    }
    return o;
  }

 private:
  double scale_;
  double offset_;
};

/// Learner that records calls and reports itself as fully pretrained.
class StubLearner final : public poet::SacLearner {
 public:
  explicit StubLearner(MlpShape es_shape, std::int64_t start_iterations = 1000)
      : shape_(std::move(es_shape)), iterations_(start_iterations) {}

  void push(const std::vector<Transition>& t, std::int64_t) override { pushed_ += static_cast<std::int64_t>(t.size()); }
  void train_iteration(const std::vector<const terrain::Heightmap*>&, std::uint64_t) override { ++iterations_; }
  std::int64_t iterations() const override { return iterations_; }
  PolicyParams reshaped_actor() const override { return actor_ ? *actor_ : zero_mlp(shape_); }
  PolicyParams actor_policy() const override { return reshaped_actor(); }
  void load_from_es(const PolicyParams& theta) override {
    actor_ = theta;
    ++loads_;
  }
  json to_json() const override {
    return {{"iterations", iterations_}, {"pushed", pushed_}, {"actor", actor_ ? io::to_json(*actor_) : json(nullptr)}};
  }
  void from_json(const json& j) override {
    iterations_ = j.at("iterations").get<std::int64_t>();
    pushed_ = j.at("pushed").get<std::int64_t>();
    actor_.reset();
    if (!j.at("actor").is_null()) actor_ = io::mlp_from_json(j.at("actor"));
  }

  std::int64_t pushed() const { return pushed_; }
  int loads() const { return loads_; }

 private:
  MlpShape shape_;
  std::int64_t iterations_;
  std::int64_t pushed_ = 0;
  int loads_ = 0;
  std::optional<PolicyParams> actor_;
};

/// Small engine config for stubbed runs.
inline RunConfig stub_config(RunMode mode = RunMode::epoet_sac) {
  RunConfig c;
  c.mode = mode;
  c.seed = 3;
  c.iterations = 200;
  c.num_workers = 1;
  c.es.num_samples = 4;
  c.es.hidden = {3};
  c.es.noise_table_size = 1 << 14;
  c.terrain.resolution = 8;
  c.terrain.bowl_coarse_resolution = 4;
  c.poet.sac_pretrain_iterations = 0;
  c.poet.repro_threshold = -1e9;
  c.poet.mc_lower = -1e9;
  c.poet.mc_upper = 1e9;
  c.poet.num_proposals = 2;
  return c;
}

}  // namespace testing_support
