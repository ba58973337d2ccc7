#pragma once

// Soft actor-critic with a state-value network and two target value networks.
//
//   V loss   : 1/2 (V(s) - [min_i Q_i(s, a~) - alpha log pi(a~|s)])^2
//   Q_i loss : 1/2 (Q_i(s, a) - [k r + gamma (1 - d) Vbar_i(s')])^2
//   pi loss  : alpha log pi(a~|s) - min_i Q_i(s, a~)
//   alpha    : optimized as log alpha, loss -log alpha (log pi + target entropy)
//
// a~ = tanh(mu + exp(log_std) * zeta) with zeta ~ N(0, I). Bracketed targets are
// constants for differentiation. All losses are means over the batch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epoet/adam.hpp"
#include "epoet/environment.hpp"
#include "epoet/error.hpp"
#include "epoet/mlp.hpp"
#include "epoet/random.hpp"

namespace epoet::sac {

struct SacConfig {
  std::vector<int> hidden = {256, 256};
  Activation activation = Activation::relu;
  int batch_size = 256;
  double policy_lr = 3e-4;
  double value_lr = 3e-4;  // value and Q networks
  double alpha_lr = 3e-4;
  double tau = 0.95;
  double discount = 0.99;
  double reward_scale = 5.0;
  std::int64_t replay_buffer_size = 1000000;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  double initial_log_alpha = 0.0;
  // NaN selects -action_dim.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  bool automatic_entropy_tuning = true;
  bool reparameterization = true;
  bool use_soft_update = true;
  int trajectory_length = 2000;
  int eval_episodes = 1;
  // Carried for fidelity with the original configuration; inert here.
  int pretrain_epoch = 1;
  int opt_epochs = 10;
  int target_hard_update_period = 1000;

  double effective_target_entropy(int act_dim) const {
    return std::isnan(target_entropy) ? -static_cast<double>(act_dim) : target_entropy;
  }

  void validate() const {
    require(!hidden.empty(), ErrorKind::config, "sac_hidden_shape must be non-empty");
    for (int h : hidden) require(h >= 1, ErrorKind::config, "sac_hidden_shape entries must be >= 1");
    require(batch_size >= 1, ErrorKind::config, "sac_batch_size must be >= 1");
    require(policy_lr >= 0 && value_lr >= 0 && alpha_lr >= 0, ErrorKind::config, "sac learning rates must be >= 0");
    require(tau > 0 && tau <= 1, ErrorKind::config, "sac_tau must lie in (0, 1]");
    require(discount >= 0 && discount <= 1, ErrorKind::config, "sac_discount must lie in [0, 1]");
    require(replay_buffer_size >= batch_size, ErrorKind::config, "sac_replay_buffer_size must be >= batch size");
    require(log_std_min < log_std_max, ErrorKind::config, "log-std bounds are inverted");
    require(reparameterization, ErrorKind::config, "only the reparameterized policy gradient is implemented");
    require(use_soft_update, ErrorKind::config, "only soft target updates are implemented");
  }
};

// ---------------------------------------------------------------------------
// Replay buffer

/// Provenance tag for transitions the SAC learner collected itself.
inline constexpr std::int64_t kSacSource = -1;

struct Batch {
  Eigen::MatrixXd states;       // obs x B
  Eigen::MatrixXd actions;      // act x B
  Eigen::VectorXd rewards;      // B
  Eigen::MatrixXd next_states;  // obs x B
  Eigen::VectorXd dones;        // B, 0 or 1
  std::vector<std::int64_t> sources;

  Eigen::Index size() const { return rewards.size(); }
};

/// FIFO ring of transitions. Storage grows on demand up to `capacity`.
class ReplayBuffer {
 public:
  ReplayBuffer(std::int64_t capacity, int obs_dim, int act_dim)
      : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
    require(capacity >= 1, ErrorKind::config, "replay buffer capacity must be >= 1");
  }

  std::int64_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }

  std::int64_t size() const {
    std::lock_guard lock(mu_);
    return size_;
  }
  std::int64_t total_pushed() const {
    std::lock_guard lock(mu_);
    return pushed_;
  }

  void push(const Transition& t, std::int64_t source) {
    require(t.state.size() == obs_dim_ && t.next_state.size() == obs_dim_ && t.action.size() == act_dim_,
            ErrorKind::structural, "transition dimensions do not match the buffer");
    require(t.state.allFinite() && t.next_state.allFinite() && t.action.allFinite() && std::isfinite(t.reward),
            ErrorKind::numeric, "non-finite transition rejected");
    std::lock_guard lock(mu_);
    const std::size_t stride = record_size();
    const std::size_t slot = static_cast<std::size_t>(cursor_);
    if (static_cast<std::int64_t>(sources_.size()) < capacity_ && slot == sources_.size()) {
      data_.resize(data_.size() + stride);
      sources_.push_back(0);
    }
    double* rec = data_.data() + slot * stride;
    std::copy(t.state.data(), t.state.data() + obs_dim_, rec);
    std::copy(t.action.data(), t.action.data() + act_dim_, rec + obs_dim_);
    rec[obs_dim_ + act_dim_] = t.reward;
    std::copy(t.next_state.data(), t.next_state.data() + obs_dim_, rec + obs_dim_ + act_dim_ + 1);
    rec[stride - 1] = t.done ? 1.0 : 0.0;
    sources_[slot] = source;
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    ++pushed_;
  }

  /// i-th oldest stored transition.
  Transition at(std::int64_t i, std::int64_t* source = nullptr) const {
    std::lock_guard lock(mu_);
    require(i >= 0 && i < size_, ErrorKind::argument, "replay index out of range");
    const std::int64_t slot = (size_ < capacity_ ? i : (cursor_ + i) % capacity_);
    if (source) *source = sources_[static_cast<std::size_t>(slot)];
    return unpack(slot);
  }

  /// Uniform sample with replacement, taken under the lock as one snapshot.
  Batch sample(Rng& rng, int batch_size) const {
    std::lock_guard lock(mu_);
    if (size_ < batch_size) fail(ErrorKind::precondition, "replay buffer holds fewer transitions than the batch");
    Batch b;
    b.states.resize(obs_dim_, batch_size);
    b.actions.resize(act_dim_, batch_size);
    b.rewards.resize(batch_size);
    b.next_states.resize(obs_dim_, batch_size);
    b.dones.resize(batch_size);
    b.sources.resize(static_cast<std::size_t>(batch_size));
    std::uniform_int_distribution<std::int64_t> pick(0, size_ - 1);
    const std::size_t stride = record_size();
    for (int k = 0; k < batch_size; ++k) {
      const std::int64_t slot = pick(rng);
      const double* rec = data_.data() + static_cast<std::size_t>(slot) * stride;
      b.states.col(k) = Eigen::Map<const Eigen::VectorXd>(rec, obs_dim_);
      b.actions.col(k) = Eigen::Map<const Eigen::VectorXd>(rec + obs_dim_, act_dim_);
      b.rewards[k] = rec[obs_dim_ + act_dim_];
      b.next_states.col(k) = Eigen::Map<const Eigen::VectorXd>(rec + obs_dim_ + act_dim_ + 1, obs_dim_);
      b.dones[k] = rec[stride - 1];
      b.sources[static_cast<std::size_t>(k)] = sources_[static_cast<std::size_t>(slot)];
    }
    return b;
  }

  std::vector<std::int64_t> distinct_sources() const {
    std::lock_guard lock(mu_);
    std::vector<std::int64_t> s(sources_.begin(), sources_.begin() + size_);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }

  // Raw binary image: header then records in slot order.
  void save(const std::string& path) const {
    std::lock_guard lock(mu_);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    const std::int64_t header[7] = {kMagic, capacity_, obs_dim_, act_dim_, size_, cursor_, pushed_};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(data_.data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(size_) * record_size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(sources_.data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(size_) * sizeof(std::int64_t)));
    if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
  }

  static ReplayBuffer load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
    std::int64_t h[7];
    in.read(reinterpret_cast<char*>(h), sizeof(h));
    if (!in || h[0] != kMagic) fail(ErrorKind::version, "not a replay buffer image: '" + path + "'");
    ReplayBuffer b(h[1], static_cast<int>(h[2]), static_cast<int>(h[3]));
    b.size_ = h[4];
    b.cursor_ = h[5];
    b.pushed_ = h[6];
    require(b.size_ >= 0 && b.size_ <= b.capacity_ && b.cursor_ >= 0 && b.cursor_ < b.capacity_, ErrorKind::io,
            "corrupt replay buffer header");
    b.data_.resize(static_cast<std::size_t>(b.size_) * b.record_size());
    b.sources_.resize(static_cast<std::size_t>(b.size_));
    in.read(reinterpret_cast<char*>(b.data_.data()),
            static_cast<std::streamsize>(b.data_.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(b.sources_.data()),
            static_cast<std::streamsize>(b.sources_.size() * sizeof(std::int64_t)));
    if (!in) fail(ErrorKind::io, "truncated replay buffer image: '" + path + "'");
    return b;
  }

  ReplayBuffer(ReplayBuffer&& o) noexcept
      : capacity_(o.capacity_), obs_dim_(o.obs_dim_), act_dim_(o.act_dim_), size_(o.size_), cursor_(o.cursor_),
        pushed_(o.pushed_), data_(std::move(o.data_)), sources_(std::move(o.sources_)) {}

  ReplayBuffer& operator=(ReplayBuffer&& o) noexcept {
    if (this == &o) return *this;
    std::scoped_lock lock(mu_, o.mu_);
    capacity_ = o.capacity_;
    obs_dim_ = o.obs_dim_;
    act_dim_ = o.act_dim_;
    size_ = o.size_;
    cursor_ = o.cursor_;
    pushed_ = o.pushed_;
    data_ = std::move(o.data_);
    sources_ = std::move(o.sources_);
    return *this;
  }

 private:
  static constexpr std::int64_t kMagic = 0x3142555052504552LL;  // "REPRPUB1"

  std::size_t record_size() const { return static_cast<std::size_t>(2 * obs_dim_ + act_dim_ + 2); }

  Transition unpack(std::int64_t slot) const {
    const double* rec = data_.data() + static_cast<std::size_t>(slot) * record_size();
    Transition t;
    t.state = Eigen::Map<const Eigen::VectorXd>(rec, obs_dim_);
    t.action = Eigen::Map<const Eigen::VectorXd>(rec + obs_dim_, act_dim_);
    t.reward = rec[obs_dim_ + act_dim_];
    t.next_state = Eigen::Map<const Eigen::VectorXd>(rec + obs_dim_ + act_dim_ + 1, obs_dim_);
    t.done = rec[record_size() - 1] != 0.0;
    return t;
  }

  std::int64_t capacity_;
  int obs_dim_;
  int act_dim_;
  std::int64_t size_ = 0;
  std::int64_t cursor_ = 0;
  std::int64_t pushed_ = 0;
  std::vector<double> data_;
  std::vector<std::int64_t> sources_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Networks and state

struct SacNets {
  MlpParams policy;  // obs -> 2 * act (mean, log-std)
  MlpParams value;   // obs -> 1
  MlpParams value_target1;
  MlpParams value_target2;
  MlpParams q1;  // obs + act -> 1
  MlpParams q2;
  double log_alpha = 0.0;

  int obs_dim() const { return policy.shape.input_dim(); }
  int act_dim() const { return policy.shape.output_dim() / 2; }

  bool operator==(const SacNets&) const = default;
};

struct SacState {
  SacNets nets;
  AdamState policy_opt, value_opt, q1_opt, q2_opt, alpha_opt;
  std::int64_t updates = 0;
  std::int64_t env_steps = 0;
  std::int64_t train_calls = 0;

  double alpha() const { return std::exp(nets.log_alpha); }

  bool operator==(const SacState& o) const {
    auto same = [](const AdamState& a, const AdamState& b) { return a.m == b.m && a.v == b.v && a.t == b.t; };
    return nets == o.nets && same(policy_opt, o.policy_opt) && same(value_opt, o.value_opt) &&
           same(q1_opt, o.q1_opt) && same(q2_opt, o.q2_opt) && same(alpha_opt, o.alpha_opt) &&
           updates == o.updates && env_steps == o.env_steps && train_calls == o.train_calls;
  }
};

inline MlpShape policy_net_shape(int obs_dim, int act_dim, const SacConfig& c) {
  return make_shape(obs_dim, c.hidden, 2 * act_dim, c.activation, Activation::identity);
}

/// Targets start as copies of the value network.
inline SacState make_sac_state(int obs_dim, int act_dim, const SacConfig& c, std::uint64_t rng_seed) {
  Rng rng(derive_seed(rng_seed, Stream::sac_init));
  SacState s;
  s.nets.policy = init_mlp(policy_net_shape(obs_dim, act_dim, c), rng, 0.1);
  s.nets.value = init_mlp(make_shape(obs_dim, c.hidden, 1, c.activation, Activation::identity), rng);
  s.nets.q1 = init_mlp(make_shape(obs_dim + act_dim, c.hidden, 1, c.activation, Activation::identity), rng);
  s.nets.q2 = init_mlp(make_shape(obs_dim + act_dim, c.hidden, 1, c.activation, Activation::identity), rng);
  s.nets.value_target1 = s.nets.value;
  s.nets.value_target2 = s.nets.value;
  s.nets.log_alpha = c.initial_log_alpha;
  s.policy_opt = AdamState::zeros(s.nets.policy.flat.size());
  s.value_opt = AdamState::zeros(s.nets.value.flat.size());
  s.q1_opt = AdamState::zeros(s.nets.q1.flat.size());
  s.q2_opt = AdamState::zeros(s.nets.q2.flat.size());
  s.alpha_opt = AdamState::zeros(1);
  return s;
}

/// psibar <- tau * psi + (1 - tau) * psibar.
inline void soft_update(Eigen::Ref<Eigen::VectorXd> target, const Eigen::VectorXd& source, double tau) {
  target = tau * source + (1.0 - tau) * target;
}

// ---------------------------------------------------------------------------
// Policy distribution

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// log(1 - tanh(u)^2), stable for large |u|.
inline double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

struct PolicySample {
  Eigen::MatrixXd mean;     // act x B
  Eigen::MatrixXd log_std;  // clamped
  Eigen::MatrixXd raw_log_std;
  Eigen::MatrixXd pre_tanh;
  Eigen::MatrixXd action;
  Eigen::VectorXd log_prob;  // B
};

inline PolicySample sample_policy(const MlpParams& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& zeta,
                                  const SacConfig& c, MlpTape* tape = nullptr) {
  const Eigen::MatrixXd out = forward_batch(policy, states, tape);
  const Eigen::Index a = out.rows() / 2, n = out.cols();
  PolicySample p;
  p.mean = out.topRows(a);
  p.raw_log_std = out.bottomRows(a);
  p.log_std = p.raw_log_std.cwiseMax(c.log_std_min).cwiseMin(c.log_std_max);
  p.pre_tanh = p.mean + (p.log_std.array().exp() * zeta.array()).matrix();
  p.action = p.pre_tanh.array().tanh().matrix();
  p.log_prob.resize(n);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index b = 0; b < n; ++b) {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < a; ++k)
      lp += -0.5 * zeta(k, b) * zeta(k, b) - p.log_std(k, b) - half_log_2pi - log_one_minus_tanh_sq(p.pre_tanh(k, b));
    p.log_prob[b] = lp;
  }
  return p;
}

inline Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = gaussian(rng);
  return z;
}

/// Stochastic: tanh(mu + sigma * zeta); deterministic: tanh(mu).
inline Eigen::VectorXd select_action(const SacNets& nets, const Eigen::VectorXd& obs, bool deterministic, Rng& rng,
                                     const SacConfig& c) {
  require(obs.allFinite(), ErrorKind::numeric, "non-finite observation");
  const Eigen::VectorXd out = forward(nets.policy, obs);
  const Eigen::Index a = out.size() / 2;
  Eigen::VectorXd u = out.head(a);
  if (!deterministic) {
    const Eigen::VectorXd ls = out.tail(a).cwiseMax(c.log_std_min).cwiseMin(c.log_std_max);
    for (Eigen::Index k = 0; k < a; ++k) u[k] += std::exp(ls[k]) * gaussian(rng);
  }
  return u.array().tanh().matrix();
}

// ---------------------------------------------------------------------------
// Losses and gradients

struct Losses {
  double value = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
  double policy = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
};

struct Gradients {
  Eigen::VectorXd policy, value, q1, q2;
  double log_alpha = 0.0;
};

namespace detail {

inline Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

}  // namespace detail

/// All five losses on one batch with fixed policy noise `zeta` (act x B).
/// Gradients are filled when `grads` is non-null.
inline Losses compute_losses(const SacNets& n, const Batch& batch, const Eigen::MatrixXd& zeta, const SacConfig& c,
                             Gradients* grads = nullptr) {
  const Eigen::Index B = batch.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  const int act = n.act_dim();
  const double alpha = std::exp(n.log_alpha);
  Losses L;

  MlpTape pol_tape;
  const PolicySample ps = sample_policy(n.policy, batch.states, zeta, c, &pol_tape);
  L.mean_log_prob = ps.log_prob.mean();

  const Eigen::MatrixXd sa_new = detail::stack(batch.states, ps.action);
  MlpTape q1n_tape, q2n_tape;
  const Eigen::RowVectorXd q1_new = forward_batch(n.q1, sa_new, &q1n_tape);
  const Eigen::RowVectorXd q2_new = forward_batch(n.q2, sa_new, &q2n_tape);
  const Eigen::RowVectorXd q_min = q1_new.cwiseMin(q2_new);

  // Value.
  MlpTape v_tape;
  const Eigen::RowVectorXd v = forward_batch(n.value, batch.states, &v_tape);
  const Eigen::RowVectorXd v_err = v - (q_min - alpha * ps.log_prob.transpose());
  L.value = 0.5 * v_err.squaredNorm() * inv_b;

  // Q networks, each against its own target value network.
  const Eigen::MatrixXd sa = detail::stack(batch.states, batch.actions);
  const Eigen::RowVectorXd not_done = (1.0 - batch.dones.array()).matrix().transpose();
  const Eigen::RowVectorXd scaled_r = c.reward_scale * batch.rewards.transpose();
  const Eigen::RowVectorXd y1 =
      scaled_r + c.discount * not_done.cwiseProduct(forward_batch(n.value_target1, batch.next_states));
  const Eigen::RowVectorXd y2 =
      scaled_r + c.discount * not_done.cwiseProduct(forward_batch(n.value_target2, batch.next_states));
  MlpTape q1_tape, q2_tape;
  const Eigen::RowVectorXd q1_err = forward_batch(n.q1, sa, &q1_tape) - y1;
  const Eigen::RowVectorXd q2_err = forward_batch(n.q2, sa, &q2_tape) - y2;
  L.q1 = 0.5 * q1_err.squaredNorm() * inv_b;
  L.q2 = 0.5 * q2_err.squaredNorm() * inv_b;

  L.policy = (alpha * ps.log_prob.transpose() - q_min).sum() * inv_b;

  const double target_entropy = c.effective_target_entropy(act);
  L.alpha = -n.log_alpha * (ps.log_prob.array() + target_entropy).mean();

  if (!grads) return L;

  grads->value = Eigen::VectorXd::Zero(n.value.flat.size());
  backward_batch(n.value, v_tape, v_err * inv_b, grads->value);
  grads->q1 = Eigen::VectorXd::Zero(n.q1.flat.size());
  backward_batch(n.q1, q1_tape, q1_err * inv_b, grads->q1);
  grads->q2 = Eigen::VectorXd::Zero(n.q2.flat.size());
  backward_batch(n.q2, q2_tape, q2_err * inv_b, grads->q2);

  // Policy: d/da of -min Q through whichever critic is smaller per sample.
  Eigen::RowVectorXd d1(B), d2(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const bool first = q1_new[b] <= q2_new[b];
    d1[b] = first ? -inv_b : 0.0;
    d2[b] = first ? 0.0 : -inv_b;
  }
  Eigen::VectorXd scratch1 = Eigen::VectorXd::Zero(n.q1.flat.size());
  Eigen::VectorXd scratch2 = Eigen::VectorXd::Zero(n.q2.flat.size());
  const Eigen::MatrixXd dx1 = backward_batch(n.q1, q1n_tape, d1, scratch1);
  const Eigen::MatrixXd dx2 = backward_batch(n.q2, q2n_tape, d2, scratch2);
  const Eigen::MatrixXd d_action = dx1.bottomRows(act) + dx2.bottomRows(act);

  const Eigen::ArrayXXd a = ps.action.array();
  const Eigen::ArrayXXd sigma = ps.log_std.array().exp();
  // d log pi / du = 2a (tanh correction); d log pi / d log_std = -1 directly.
  const Eigen::ArrayXXd d_pre = alpha * inv_b * 2.0 * a + d_action.array() * (1.0 - a.square());
  Eigen::ArrayXXd d_ls = -alpha * inv_b + d_pre * sigma * zeta.array();
  const Eigen::ArrayXXd raw = ps.raw_log_std.array();
  d_ls = ((raw >= c.log_std_min) && (raw <= c.log_std_max)).select(d_ls, 0.0);
  Eigen::MatrixXd d_out(2 * act, B);
  d_out.topRows(act) = d_pre.matrix();
  d_out.bottomRows(act) = d_ls.matrix();
  grads->policy = Eigen::VectorXd::Zero(n.policy.flat.size());
  backward_batch(n.policy, pol_tape, d_out, grads->policy);

  grads->log_alpha = -(ps.log_prob.array() + target_entropy).mean();
  return L;
}

/// One gradient step on every network, then the target and temperature updates.
inline Losses sac_update(SacState& s, const ReplayBuffer& buffer, const SacConfig& c, std::uint64_t rng_seed) {
  if (buffer.size() < c.batch_size) fail(ErrorKind::precondition, "replay buffer underfull for a SAC update");
  Rng rng(rng_seed);
  const Batch batch = buffer.sample(rng, c.batch_size);
  const Eigen::MatrixXd zeta = standard_normal(rng, s.nets.act_dim(), c.batch_size);
  Gradients g;
  const Losses L = compute_losses(s.nets, batch, zeta, c, &g);
  for (const Eigen::VectorXd* v : {&g.value, &g.q1, &g.q2, &g.policy})
    if (!v->allFinite()) fail(ErrorKind::numeric, "non-finite SAC gradient");

  adam_step(s.value_opt, s.nets.value.flat, g.value, c.value_lr);
  adam_step(s.q1_opt, s.nets.q1.flat, g.q1, c.value_lr);
  adam_step(s.q2_opt, s.nets.q2.flat, g.q2, c.value_lr);
  adam_step(s.policy_opt, s.nets.policy.flat, g.policy, c.policy_lr);
  soft_update(s.nets.value_target1.flat, s.nets.value.flat, c.tau);
  soft_update(s.nets.value_target2.flat, s.nets.value.flat, c.tau);
  if (c.automatic_entropy_tuning) {
    Eigen::VectorXd la(1);
    la[0] = s.nets.log_alpha;
    adam_step(s.alpha_opt, la, Eigen::VectorXd::Constant(1, g.log_alpha), c.alpha_lr);
    s.nets.log_alpha = la[0];
  }
  ++s.updates;
  return L;
}

// ---------------------------------------------------------------------------
// Environment interaction

struct TrainReport {
  int env_steps = 0;
  int updates = 0;
  int episodes = 0;
  std::size_t env_index = 0;
  double episode_return = 0.0;  // first episode of the call
};

/// n_env_steps of interaction on one environment drawn uniformly from `envs`,
/// with one update per step once the buffer holds a batch. Each call starts a
/// fresh episode. Seeds derive from `seed` and the state's counters.
inline TrainReport train_sac(SacState& s, std::span<Environment* const> envs, ReplayBuffer& buffer, int n_env_steps,
                             const SacConfig& c, std::uint64_t seed) {
  require(!envs.empty(), ErrorKind::argument, "train_sac needs at least one environment");
  require(n_env_steps >= 0, ErrorKind::argument, "n_env_steps must be >= 0");
  TrainReport rep;
  Rng pick(derive_seed(seed, Stream::sac_env, {static_cast<std::uint64_t>(s.train_calls)}));
  rep.env_index = uniform_index(pick, envs.size());
  Environment& env = *envs[rep.env_index];
  ++s.train_calls;

  auto start = [&] {
    ++rep.episodes;
    return env.reset(derive_seed(seed, Stream::sac_env, {static_cast<std::uint64_t>(s.env_steps), 1}));
  };
  Eigen::VectorXd obs = start();
  double ret = 0.0;
  bool first_done = false;
  for (int i = 0; i < n_env_steps; ++i) {
    Rng arng(derive_seed(seed, Stream::sac_action, {static_cast<std::uint64_t>(s.env_steps)}));
    const Eigen::VectorXd action = select_action(s.nets, obs, false, arng, c);
    StepOutcome o = env.step(action);
    buffer.push({obs, action, o.reward, o.observation, o.done && !o.truncated}, kSacSource);
    ++s.env_steps;
    ++rep.env_steps;
    ret += o.reward;
    if (buffer.size() >= c.batch_size) {
      sac_update(s, buffer, c, derive_seed(seed, Stream::sac_update, {static_cast<std::uint64_t>(s.updates)}));
      ++rep.updates;
    }
    if (o.done) {
      if (!first_done) rep.episode_return = ret;
      first_done = true;
      if (i + 1 < n_env_steps) obs = start();
    } else {
      obs = std::move(o.observation);
    }
  }
  if (!first_done) rep.episode_return = ret;
  return rep;
}

/// Mean return of the deterministic policy over seeded episodes.
inline double evaluate_policy(const SacNets& nets, Environment& env, int episodes, std::uint64_t seed,
                              const SacConfig& c, int max_steps) {
  double total = 0.0;
  Rng unused(0);
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd obs = env.reset(derive_seed(seed, Stream::evaluation, {static_cast<std::uint64_t>(e)}));
    for (int t = 0; t < max_steps; ++t) {
      StepOutcome o = env.step(select_action(nets, obs, true, unused, c));
      total += o.reward;
      if (o.done) break;
      obs = std::move(o.observation);
    }
  }
  return total / episodes;
}

}  // namespace epoet::sac
