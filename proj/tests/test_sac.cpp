#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace epoet;
using namespace epoet::sac;
using testing_support::max_relative_error;
using testing_support::numeric_gradient;

namespace {

SacConfig tiny_config() {
  SacConfig c;
  c.hidden = {4};
  c.activation = Activation::tanh;  // smooth, so central differences are exact enough
  c.batch_size = 8;
  c.replay_buffer_size = 64;
  return c;
}

Batch random_batch(Rng& rng, int obs, int act, int n) {
  Batch b;
  b.states = standard_normal(rng, obs, n);
  b.actions = standard_normal(rng, act, n).array().tanh().matrix();
  b.next_states = standard_normal(rng, obs, n);
  b.rewards = standard_normal(rng, n, 1);
  b.dones = Eigen::VectorXd::Zero(n);
  b.dones[2] = 1.0;
  b.sources.assign(static_cast<std::size_t>(n), 0);
  return b;
}

Transition make_transition(double v, int obs = 3, int act = 2) {
  return {Eigen::VectorXd::Constant(obs, v), Eigen::VectorXd::Constant(act, v / 10), v,
          Eigen::VectorXd::Constant(obs, v + 1), false};
}

struct GradFixture {
  SacConfig c = tiny_config();
  SacNets nets;
  Batch batch;
  Eigen::MatrixXd zeta;
  Gradients g;

  GradFixture() {
    c.reward_scale = 1.0;
    SacState s = make_sac_state(3, 2, c, 21);
    nets = s.nets;
    Rng rng(4);
    // Distinct targets exercise both target networks.
    nets.value_target2.flat += 0.1 * standard_normal(rng, nets.value.flat.size(), 1);
    nets.policy = init_mlp(nets.policy.shape, rng, 1.0);
    nets.log_alpha = -0.7;
    batch = random_batch(rng, 3, 2, 8);
    zeta = standard_normal(rng, 2, 8);
    compute_losses(nets, batch, zeta, c, &g);
  }

  template <typename Pick>
  double fd_error(MlpParams SacNets::*member, const Eigen::VectorXd& analytic, Pick pick) const {
    auto f = [&](const Eigen::VectorXd& x) {
      SacNets n = nets;
      (n.*member).flat = x;
      return pick(compute_losses(n, batch, zeta, c));
    };
    return max_relative_error(analytic, numeric_gradient(f, (nets.*member).flat));
  }
};

}  // namespace

TEST(SacConfigDefaults, TableValues) {
  SacConfig c;
  EXPECT_EQ(c.hidden, (std::vector<int>{256, 256}));
  EXPECT_EQ(c.batch_size, 256);
  EXPECT_EQ(c.policy_lr, 3e-4);
  EXPECT_EQ(c.value_lr, 3e-4);
  EXPECT_EQ(c.tau, 0.95);
  EXPECT_EQ(c.discount, 0.99);
  EXPECT_EQ(c.reward_scale, 5.0);
  EXPECT_EQ(c.replay_buffer_size, 1000000);
  EXPECT_EQ(c.effective_target_entropy(18), -18.0);
}

TEST(Mlp, BackpropMatchesFiniteDifferences) {
  Rng rng(1);
  for (Activation a : {Activation::tanh, Activation::identity}) {
    const MlpParams p = init_mlp(make_shape(3, {5, 4}, 2, a, Activation::tanh), rng);
    const Eigen::MatrixXd x = standard_normal(rng, 3, 6);
    const Eigen::MatrixXd w = standard_normal(rng, 2, 6);
    MlpTape tape;
    forward_batch(p, x, &tape);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.flat.size());
    const Eigen::MatrixXd dx = backward_batch(p, tape, w, grad);
    auto f = [&](const Eigen::VectorXd& theta) {
      MlpParams q = p;
      q.flat = theta;
      return forward_batch(q, x).cwiseProduct(w).sum();
    };
    EXPECT_LT(max_relative_error(grad, numeric_gradient(f, p.flat)), 1e-6);
    Eigen::VectorXd xf = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    auto fx = [&](const Eigen::VectorXd& v) {
      return forward_batch(p, Eigen::Map<const Eigen::MatrixXd>(v.data(), 3, 6)).cwiseProduct(w).sum();
    };
    const Eigen::VectorXd dxf = Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size());
    EXPECT_LT(max_relative_error(dxf, numeric_gradient(fx, xf)), 1e-6);
  }
}

TEST(Mlp, SingleAndBatchForwardAgree) {
  Rng rng(2);
  const MlpParams p = init_mlp(make_shape(4, {6}, 3, Activation::relu, Activation::tanh), rng);
  const Eigen::MatrixXd x = standard_normal(rng, 4, 5);
  const Eigen::MatrixXd y = forward_batch(p, x);
  for (int b = 0; b < 5; ++b) EXPECT_LT((forward(p, x.col(b)) - y.col(b)).norm(), 1e-12);
}

TEST(SacGradients, ValueLoss) {
  GradFixture f;
  EXPECT_LT(f.fd_error(&SacNets::value, f.g.value, [](const Losses& l) { return l.value; }), 1e-4);
}

TEST(SacGradients, Q1Loss) {
  GradFixture f;
  EXPECT_LT(f.fd_error(&SacNets::q1, f.g.q1, [](const Losses& l) { return l.q1; }), 1e-4);
}

TEST(SacGradients, Q2Loss) {
  GradFixture f;
  EXPECT_LT(f.fd_error(&SacNets::q2, f.g.q2, [](const Losses& l) { return l.q2; }), 1e-4);
}

TEST(SacGradients, PolicyLoss) {
  GradFixture f;
  EXPECT_LT(f.fd_error(&SacNets::policy, f.g.policy, [](const Losses& l) { return l.policy; }), 1e-4);
}

TEST(SacGradients, TemperatureLoss) {
  GradFixture f;
  auto loss = [&](const Eigen::VectorXd& x) {
    SacNets n = f.nets;
    n.log_alpha = x[0];
    return compute_losses(n, f.batch, f.zeta, f.c).alpha;
  };
  const Eigen::VectorXd num = numeric_gradient(loss, Eigen::VectorXd::Constant(1, f.nets.log_alpha));
  EXPECT_LT(max_relative_error(Eigen::VectorXd::Constant(1, f.g.log_alpha), num), 1e-4);
}

TEST(SacGradients, LogProbMatchesDirectDensity) {
  GradFixture f;
  const PolicySample ps = sample_policy(f.nets.policy, f.batch.states, f.zeta, f.c);
  for (Eigen::Index b = 0; b < f.zeta.cols(); ++b) {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < f.zeta.rows(); ++k) {
      const double sd = std::exp(ps.log_std(k, b));
      const double u = ps.pre_tanh(k, b);
      const double z = (u - ps.mean(k, b)) / sd;
      lp += -0.5 * z * z - std::log(sd * std::sqrt(2 * std::numbers::pi)) - std::log(1 - std::tanh(u) * std::tanh(u));
    }
    EXPECT_NEAR(ps.log_prob[b], lp, 1e-9);
  }
}

TEST(SacUpdate, SoftTargetArithmetic) {
  Eigen::VectorXd target(3), source(3);
  target << 1.0, -2.0, 0.5;
  source << 3.0, 4.0, -1.0;
  soft_update(target, source, 0.95);
  EXPECT_DOUBLE_EQ(target[0], 0.95 * 3.0 + 0.05 * 1.0);
  EXPECT_DOUBLE_EQ(target[1], 0.95 * 4.0 + 0.05 * -2.0);
  EXPECT_DOUBLE_EQ(target[2], 0.95 * -1.0 + 0.05 * 0.5);
}

TEST(SacUpdate, TargetsFollowValueNetwork) {
  SacConfig c = tiny_config();
  SacState s = make_sac_state(3, 2, c, 1);
  ReplayBuffer buf(64, 3, 2);
  for (int i = 0; i < 10; ++i) buf.push(make_transition(0.1 * i), 0);
  const Eigen::VectorXd old_target = s.nets.value_target1.flat;
  sac_update(s, buf, c, 5);
  EXPECT_TRUE(s.nets.value_target1.flat == (0.95 * s.nets.value.flat + (1.0 - 0.95) * old_target).eval());
  EXPECT_TRUE(s.nets.value_target1 == s.nets.value_target2);
  EXPECT_EQ(s.updates, 1);
}

TEST(SacUpdate, ZeroLearningRatesFreezeNetworks) {
  SacConfig c = tiny_config();
  c.policy_lr = c.value_lr = c.alpha_lr = 0.0;
  SacState s = make_sac_state(3, 2, c, 1);
  ReplayBuffer buf(64, 3, 2);
  for (int i = 0; i < 10; ++i) buf.push(make_transition(0.1 * i), 0);
  const SacNets before = s.nets;
  sac_update(s, buf, c, 5);
  EXPECT_TRUE(s.nets.policy == before.policy);
  EXPECT_TRUE(s.nets.q1 == before.q1);
  EXPECT_TRUE(s.nets.value == before.value);
  EXPECT_EQ(s.nets.log_alpha, before.log_alpha);
}

TEST(SacUpdate, UnderfullBufferIsPrecondition) {
  SacConfig c = tiny_config();
  SacState s = make_sac_state(3, 2, c, 1);
  ReplayBuffer buf(64, 3, 2);
  buf.push(make_transition(1), 0);
  try {
    sac_update(s, buf, c, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
}

TEST(Replay, RingEvictsOldest) {
  ReplayBuffer buf(4, 3, 2);
  for (int i = 0; i < 6; ++i) buf.push(make_transition(i), i);
  EXPECT_EQ(buf.size(), 4);
  EXPECT_EQ(buf.total_pushed(), 6);
  for (int i = 0; i < 4; ++i) {
    std::int64_t src = 0;
    EXPECT_EQ(buf.at(i, &src).reward, i + 2.0);
    EXPECT_EQ(src, i + 2);
  }
  EXPECT_EQ(buf.distinct_sources(), (std::vector<std::int64_t>{2, 3, 4, 5}));
}

TEST(Replay, SampleDrawsStoredRecords) {
  ReplayBuffer buf(16, 3, 2);
  for (int i = 0; i < 5; ++i) buf.push(make_transition(i), kSacSource);
  Rng rng(1);
  const Batch b = buf.sample(rng, 5);
  EXPECT_EQ(b.size(), 5);
  for (int k = 0; k < 5; ++k) {
    const double r = b.rewards[k];
    EXPECT_EQ(b.states(0, k), r);
    EXPECT_EQ(b.next_states(0, k), r + 1);
    EXPECT_EQ(b.sources[static_cast<std::size_t>(k)], kSacSource);
  }
  EXPECT_THROW(buf.sample(rng, 6), Error);
}

TEST(Replay, RejectsBadTransitions) {
  ReplayBuffer buf(4, 3, 2);
  Transition t = make_transition(1);
  t.reward = std::nan("");
  try {
    buf.push(t, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
  try {
    buf.push(make_transition(1, 4, 2), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::structural);
  }
  EXPECT_EQ(buf.size(), 0);
}

TEST(Replay, SaveLoadRoundTrip) {
  ReplayBuffer buf(5, 3, 2);
  for (int i = 0; i < 7; ++i) buf.push(make_transition(i), i % 3);
  const std::string path = (std::filesystem::temp_directory_path() / "epoet_replay.bin").string();
  buf.save(path);
  ReplayBuffer back = ReplayBuffer::load(path);
  ASSERT_EQ(back.size(), buf.size());
  EXPECT_EQ(back.total_pushed(), 7);
  for (int i = 0; i < 5; ++i) {
    std::int64_t a = 0, b = 0;
    EXPECT_TRUE(back.at(i, &a).state == buf.at(i, &b).state);
    EXPECT_EQ(a, b);
  }
  back.push(make_transition(9), 0);
  buf.push(make_transition(9), 0);
  EXPECT_EQ(back.at(0).reward, buf.at(0).reward);
}

TEST(SelectAction, BoundsAndDeterminism) {
  SacConfig c = tiny_config();
  SacState s = make_sac_state(3, 2, c, 1);
  Rng rng(3), r1(8), r2(8);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd obs = standard_normal(rng, 3, 1) * 5;
    const Eigen::VectorXd a = select_action(s.nets, obs, false, rng, c);
    EXPECT_TRUE((a.array().abs() < 1.0).all());
    EXPECT_TRUE(select_action(s.nets, obs, true, rng, c) == select_action(s.nets, obs, true, rng, c));
    EXPECT_TRUE(select_action(s.nets, obs, false, r1, c) == select_action(s.nets, obs, false, r2, c));
  }
  s.nets.policy.flat.setZero();
  EXPECT_TRUE(select_action(s.nets, Eigen::VectorXd::Ones(3), true, rng, c).isZero(0));
}

TEST(TrainSac, WarmupCollectsBeforeUpdating) {
  SacConfig c = tiny_config();
  c.batch_size = 200;
  c.replay_buffer_size = 1000;
  SacState s = make_sac_state(1, 1, c, 1);
  PointMassEnv env;
  Environment* envs[] = {&env};
  ReplayBuffer buf(1000, 1, 1);
  const TrainReport rep = train_sac(s, envs, buf, 100, c, 3);
  EXPECT_EQ(rep.updates, 0);
  EXPECT_EQ(buf.size(), 100);
  EXPECT_EQ(rep.env_steps, 100);
  EXPECT_EQ(rep.episodes, 5);
  EXPECT_EQ(buf.distinct_sources(), (std::vector<std::int64_t>{kSacSource}));
}

TEST(TrainSac, DeterministicGivenSeed) {
  SacConfig c = tiny_config();
  auto run = [&] {
    SacState s = make_sac_state(1, 1, c, 1);
    PointMassEnv e1, e2;
    Environment* envs[] = {&e1, &e2};
    ReplayBuffer buf(64, 1, 1);
    for (int k = 0; k < 5; ++k) train_sac(s, envs, buf, 20, c, 3);
    return s;
  };
  EXPECT_TRUE(run() == run());
}

TEST(TrainSac, PointMassToy) {
  SacConfig c;
  c.hidden = {32, 32};
  c.batch_size = 64;
  c.replay_buffer_size = 100000;
  SacState s = make_sac_state(1, 1, c, 7);
  PointMassEnv env;
  Environment* envs[] = {&env};
  ReplayBuffer buf(c.replay_buffer_size, 1, 1);
  for (int k = 0; k < 1000; ++k) train_sac(s, envs, buf, 20, c, 11);
  EXPECT_EQ(s.env_steps, 20000);
  PointMassEnv eval_env;
  EXPECT_GT(evaluate_policy(s.nets, eval_env, 10, 3, c, 20), -5.0);
}
