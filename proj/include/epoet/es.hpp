#pragma once

// Evolution strategies with mirrored sampling, centered ranks and Adam ascent.
// The objective is any callable `double(const PolicyParams&, std::uint64_t seed)`,
// which lets walker rollouts and closed-form test objectives share one path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "epoet/adam.hpp"
#include "epoet/error.hpp"
#include "epoet/mlp.hpp"
#include "epoet/numeric.hpp"
#include "epoet/random.hpp"
#include "epoet/walker.hpp"
#include "epoet/worker_pool.hpp"

namespace epoet::es {

struct EsConfig {
  int num_samples = 500;
  std::vector<int> hidden = {40, 40};
  Activation activation = Activation::tanh;
  double lr_init = 0.01;
  double lr_limit = 0.001;
  double lr_decay = 0.9999;
  double noise_std_init = 0.02;
  double noise_std_limit = 0.01;
  double noise_std_decay = 0.999;
  // Distributed chunking knobs of the original cluster setup; carried, inert.
  int batch_size = 1;
  int batches_per_chunk = 256;
  std::int64_t noise_table_size = std::int64_t{1} << 23;
  std::uint64_t noise_table_seed = 42;

  void validate() const {
    require(num_samples >= 2 && num_samples % 2 == 0, ErrorKind::config, "es_num_samples must be even and >= 2");
    require(!hidden.empty(), ErrorKind::config, "es_hidden_shape must be non-empty");
    for (int h : hidden) require(h >= 1, ErrorKind::config, "es_hidden_shape entries must be >= 1");
    require(lr_init > 0 && lr_limit > 0 && lr_limit <= lr_init, ErrorKind::config,
            "es learning rate must satisfy 0 < lower bound <= initial");
    require(noise_std_init > 0 && noise_std_limit > 0 && noise_std_limit <= noise_std_init, ErrorKind::config,
            "es noise stdev must satisfy 0 < lower bound <= initial");
    require(lr_decay > 0 && lr_decay <= 1 && noise_std_decay > 0 && noise_std_decay <= 1, ErrorKind::config,
            "es decay factors must lie in (0, 1]");
    require(noise_table_size >= 16, ErrorKind::config, "es_noise_table_size too small");
  }
};

inline MlpShape policy_shape(const EsConfig& c, int obs_dim = walker::kObservationDim,
                             int act_dim = walker::kActionDim) {
  return make_shape(obs_dim, c.hidden, act_dim, c.activation, c.activation);
}

struct EsState {
  PolicyParams theta;
  double lr = 0.01;
  double noise_std = 0.02;
  AdamState adam;
  std::int64_t steps = 0;

  bool operator==(const EsState& o) const {
    return theta == o.theta && lr == o.lr && noise_std == o.noise_std && adam.m == o.adam.m && adam.v == o.adam.v &&
           adam.t == o.adam.t && steps == o.steps;
  }
};

inline EsState make_state(PolicyParams theta, const EsConfig& c) {
  EsState s;
  s.adam = AdamState::zeros(theta.flat.size());
  s.theta = std::move(theta);
  s.lr = c.lr_init;
  s.noise_std = c.noise_std_init;
  return s;
}

/// Fresh optimizer around existing parameters (same schedules as a new pair).
inline EsState reset_optimizer(const EsState& s, const EsConfig& c) { return make_state(s.theta, c); }

inline EsState initial_state(std::uint64_t rng_seed, const EsConfig& c, int obs_dim = walker::kObservationDim,
                             int act_dim = walker::kActionDim) {
  Rng rng(derive_seed(rng_seed, Stream::policy_init));
  return make_state(init_mlp(policy_shape(c, obs_dim, act_dim), rng), c);
}

/// Shared block of standard normal samples. A perturbation is identified by
/// its offset alone, so workers only ever exchange integers.
class NoiseTable {
 public:
  NoiseTable(std::int64_t size, std::uint64_t seed) : seed_(seed) {
    require(size >= 1, ErrorKind::argument, "noise table size must be positive");
    data_.resize(static_cast<std::size_t>(size));
    Rng rng(seed);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    for (float& v : data_) v = nd(rng);
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::uint64_t seed() const { return seed_; }

  Eigen::VectorXd get(std::int64_t offset, Eigen::Index length) const {
    require(offset >= 0 && offset + length <= size(), ErrorKind::argument, "noise slice out of range");
    Eigen::VectorXd out(length);
    for (Eigen::Index i = 0; i < length; ++i) out[i] = data_[static_cast<std::size_t>(offset + i)];
    return out;
  }

  std::int64_t sample_offset(Rng& rng, Eigen::Index length) const {
    require(length <= size(), ErrorKind::argument, "noise table smaller than parameter vector");
    return std::uniform_int_distribution<std::int64_t>(0, size() - length)(rng);
  }

 private:
  std::uint64_t seed_;
  std::vector<float> data_;
};

struct EsStepReport {
  double mean_return = 0.0;
  double max_return = 0.0;
  int discarded = 0;
  double lr = 0.0;         // after decay
  double noise_std = 0.0;  // after decay
};

/// g = 1/(n*sigma) * sum_j (rank(r+_j) - rank(r-_j)) * eps_j, over the n kept samples.
inline Eigen::VectorXd mirrored_gradient(const std::vector<Eigen::VectorXd>& eps,
                                         const std::vector<double>& returns_pos,
                                         const std::vector<double>& returns_neg, double sigma) {
  const std::size_t m = eps.size();
  std::vector<double> all;
  all.reserve(2 * m);
  for (std::size_t j = 0; j < m; ++j) {
    all.push_back(returns_pos[j]);
    all.push_back(returns_neg[j]);
  }
  const std::vector<double> ranks = centered_ranks(all);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m == 0 ? 0 : eps.front().size());
  for (std::size_t j = 0; j < m; ++j) g += (ranks[2 * j] - ranks[2 * j + 1]) * eps[j];
  if (m > 0) g /= static_cast<double>(2 * m) * sigma;
  return g;
}

/// One ES update of `state`. `step_seed` pins the noise offsets and rollout
/// seeds; results are reduced in sample-index order.
template <typename Objective>
EsStepReport es_step(EsState& state, const NoiseTable& noise, Objective&& objective, std::uint64_t step_seed,
                     const EsConfig& c, WorkerPool* pool = nullptr) {
  require(c.num_samples >= 2 && c.num_samples % 2 == 0, ErrorKind::argument, "num_samples must be even");
  const int half = c.num_samples / 2;
  const Eigen::Index dim = state.theta.flat.size();
  const double sigma = state.noise_std;

  std::vector<std::int64_t> offsets(static_cast<std::size_t>(half));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(half));
  for (int j = 0; j < half; ++j) {
    Rng rng(derive_seed(step_seed, Stream::es_noise, {static_cast<std::uint64_t>(j)}));
    offsets[j] = noise.sample_offset(rng, dim);
    seeds[j] = derive_seed(step_seed, Stream::es_rollout, {static_cast<std::uint64_t>(j)});
  }

  auto job = [&](std::size_t i) {
    const std::size_t j = i / 2;
    const double sign = i % 2 == 0 ? 1.0 : -1.0;
    PolicyParams p = state.theta;
    p.flat += sign * sigma * noise.get(offsets[j], dim);
    return static_cast<double>(objective(p, seeds[j]));
  };
  std::vector<double> returns;
  if (pool) {
    returns = pool->map(static_cast<std::size_t>(c.num_samples), job);
  } else {
    returns.resize(static_cast<std::size_t>(c.num_samples));
    for (std::size_t i = 0; i < returns.size(); ++i) returns[i] = job(i);
  }

  std::vector<Eigen::VectorXd> eps;
  std::vector<double> pos, neg;
  EsStepReport rep;
  double sum = 0.0, best = -INFINITY;
  for (int j = 0; j < half; ++j) {
    const double rp = returns[2 * j], rn = returns[2 * j + 1];
    if (!std::isfinite(rp) || !std::isfinite(rn)) {
      rep.discarded += 2;
      continue;
    }
    eps.push_back(noise.get(offsets[j], dim));
    pos.push_back(rp);
    neg.push_back(rn);
    sum += rp + rn;
    best = std::max({best, rp, rn});
  }
  if (eps.empty()) fail(ErrorKind::optimizer, "every ES sample returned a non-finite value");

  const Eigen::VectorXd g = mirrored_gradient(eps, pos, neg, sigma);
  adam_step(state.adam, state.theta.flat, g, state.lr, /*descent=*/false);
  state.lr = std::max(c.lr_limit, state.lr * c.lr_decay);
  state.noise_std = std::max(c.noise_std_limit, state.noise_std * c.noise_std_decay);
  ++state.steps;

  rep.mean_return = sum / static_cast<double>(2 * eps.size());
  rep.max_return = best;
  rep.lr = state.lr;
  rep.noise_std = state.noise_std;
  return rep;
}

/// Mean return over n_eval seeded episodes; episode i uses derive_seed(seed, evaluation, {i}).
template <typename Objective>
double evaluate(const PolicyParams& theta, Objective&& objective, int n_eval, std::uint64_t seed) {
  require(n_eval >= 1, ErrorKind::argument, "n_eval must be >= 1");
  double total = 0.0;
  for (int i = 0; i < n_eval; ++i)
    total += objective(theta, derive_seed(seed, Stream::evaluation, {static_cast<std::uint64_t>(i)}));
  return total / n_eval;
}

/// Walker objective over a fixed heightmap.
struct WalkerObjective {
  const terrain::Heightmap* map;
  const walker::WalkerConfig* config;

  double operator()(const PolicyParams& p, std::uint64_t seed) const {
    return walker::rollout(p, *map, seed, *config).total_return;
  }
};

inline double evaluate(const PolicyParams& theta, const terrain::TerrainSpec& env, int n_eval, std::uint64_t seed,
                       const walker::WalkerConfig& wc) {
  const terrain::Heightmap map = terrain::compose_heightmap(env);
  return evaluate(theta, WalkerObjective{&map, &wc}, n_eval, seed);
}

}  // namespace epoet::es
