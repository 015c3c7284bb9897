#include "acrl/harness.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace acrl;
using oracle::v2;

namespace {

const TwoLinkReacher &reacher() {
  static const TwoLinkReacher env;
  return env;
}

InstancePtr share(ConstraintInstance inst) { return std::make_shared<const ConstraintInstance>(with_center(std::move(inst))); }

InstancePtr box2() { return share({ActionSpace::unit(2), {}, {}, {}}); }

// box with a1 <= 0.5, a2 <= 0.5: anything beyond both bounds projects onto the corner
InstancePtr corner2() {
  return share({ActionSpace::unit(2), make_linear(Mat::Identity(2, 2), Vec::Constant(2, 0.5)), {}, {}});
}

Transition make_transition(const Vec &pre, const Vec &executed, double reward, bool terminal, InstancePtr inst,
                           std::uint64_t seed = 1) {
  const Vec s = reacher().reset(seed);
  const auto r = reacher().step(s, executed);
  return {reacher().observe(s), pre, executed, reward, reacher().observe(r.next), terminal, inst, inst};
}

std::vector<const Transition *> pointers(const std::vector<Transition> &ts) {
  std::vector<const Transition *> out;
  for (const auto &t : ts) out.push_back(&t);
  return out;
}

Mlp constant_net(const Mlp &like, double value) {
  Mlp m = like;
  m.params.setZero();
  m.params[m.params.size() - 1] = value;
  return m;
}

bool same_bits(const Vec &a, const Vec &b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST(Variants, NamesRoundTripAndRosterHasThirteen) {
  EXPECT_EQ(kAllVariants.size(), 13u);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("DPost"), std::invalid_argument);
  EXPECT_EQ(variant_name(Variant::DPreP), "DPre+");
}

TEST(Variants, CriticInputsFollowTheRoster) {
  for (auto v : kAllVariants) {
    const auto t = traits(v, Family::L2);
    const bool pre = v == Variant::DPre || v == Variant::DPreP || v == Variant::SPre || v == Variant::SPreP;
    EXPECT_EQ(t.critic_input == CriticInput::PreMap, pre) << variant_name(v);
    const auto name = std::string(variant_name(v));
    EXPECT_EQ(t.penalty, name.back() == '+') << name;
    EXPECT_EQ(t.algo == BaseAlgo::SAC, name.front() == 'S') << name;
  }
}

TEST(Critic, TdTargetArithmetic) {
  TrainerConfig cfg;
  cfg.gamma = 0.99;
  Trainer tr(reacher(), Variant::DPro, Family::N, cfg, 3);
  auto ck = tr.checkpoint();
  ck["critic_target"][0] = to_json(constant_net(tr.critic(0), 1.5));
  ck["critic_target"][1] = to_json(constant_net(tr.critic(1), 4.0));
  tr.restore(ck);
  const std::vector<Transition> ts{make_transition(v2(0.1, 0.2), v2(0.1, 0.2), 1.0, false, box2()),
                                   make_transition(v2(0.1, 0.2), v2(0.1, 0.2), 1.0, true, box2())};
  const Vec y = tr.td_targets(pointers(ts));
  EXPECT_NEAR(y[0], 2.485, 1e-12);
  EXPECT_EQ(y[1], 1.0);
}

TEST(Critic, ClippedDoubleQMatchesHandRolledTarget) {
  TrainerConfig cfg;
  cfg.target_noise = 0.0;
  for (auto v : {Variant::DPro, Variant::DPre, Variant::DAlpha}) {
    Trainer tr(reacher(), v, Family::L2, cfg, 5);
    const auto ball = share(instantiate({Family::L2, {}}, ActionSpace::unit(2), {}));
    std::vector<Transition> ts;
    for (std::uint64_t k = 0; k < 16; ++k) ts.push_back(make_transition(v2(0.9, -0.9), v2(0.1, -0.1), -0.3, false, ball, k));
    const Vec y = tr.td_targets(pointers(ts));
    for (std::size_t i = 0; i < ts.size(); ++i) {
      Vec a = squash_box(Vec(forward(tr.actor_target(), ts[i].next_obs)), ActionSpace::unit(2));
      if (tr.variant_traits().critic_input == CriticInput::Executed) a = tr.map_action(a, *ball, false).action;
      Vec x(10);
      x << ts[i].next_obs, a;
      const double q1 = forward(tr.critic_target(0), x)[0], q2 = forward(tr.critic_target(1), x)[0];
      EXPECT_NEAR(y[static_cast<Eigen::Index>(i)], -0.3 + 0.98 * std::min(q1, q2), 1e-12);
      EXPECT_LE(y[static_cast<Eigen::Index>(i)], -0.3 + 0.98 * std::max(q1, q2) + 1e-12);
    }
  }
}

TEST(Critic, PreAndProSeeDifferentActionsForInfeasibleSuggestions) {
  const auto ball = share(instantiate({Family::L2, {}}, ActionSpace::unit(2), {}));
  const Vec pre = v2(0.8, 0.6);
  const Vec exec = project(pre, *ball).point;
  const auto t = make_transition(pre, exec, 0.0, false, ball);
  const Trainer dpre(reacher(), Variant::DPre, Family::L2, {}, 1), dpro(reacher(), Variant::DPro, Family::L2, {}, 1);
  EXPECT_EQ(dpre.critic_action(t), pre);
  EXPECT_EQ(dpro.critic_action(t), exec);
  EXPECT_GT((pre - exec).norm(), 0.5);
  const auto feasible = make_transition(v2(0.1, 0.1), v2(0.1, 0.1), 0.0, false, ball);
  EXPECT_EQ(dpre.critic_action(feasible), dpro.critic_action(feasible));
}

TEST(Actor, AlphaOnUnconstrainedBatchEqualsPre) {
  std::vector<Transition> ts;
  for (std::uint64_t k = 0; k < 8; ++k) ts.push_back(make_transition(v2(0, 0), v2(0, 0), 0.0, false, box2(), k));
  Trainer pre(reacher(), Variant::DPre, Family::L2, {}, 9), alpha(reacher(), Variant::DAlpha, Family::L2, {}, 9);
  Mat Z(2, 8);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0.0, 1.0);
  for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = N(rng);
  const auto a = pre.actor_upstream(pointers(ts), Z), b = alpha.actor_upstream(pointers(ts), Z);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.upstream, b.upstream);
}

TEST(Actor, OptimizationLayerGradientVanishesAtCorners) {
  std::vector<Transition> ts;
  for (std::uint64_t k = 0; k < 4; ++k) ts.push_back(make_transition(v2(0, 0), v2(0, 0), 0.0, false, corner2(), k));
  Mat Z(2, 4);
  Z.col(0) << std::atanh(0.99), std::atanh(0.6); // projects onto the corner
  Z.col(1) << std::atanh(0.9), std::atanh(0.95); // corner too
  Z.col(2) << std::atanh(0.1), std::atanh(-0.2); // feasible
  Z.col(3) << std::atanh(0.2), std::atanh(0.9);  // one facet active
  Trainer opt(reacher(), Variant::DOpt, Family::O, {}, 4);
  const auto st = opt.actor_upstream(pointers(ts), Z);
  EXPECT_LT(st.upstream.col(0).norm(), 1e-12);
  EXPECT_LT(st.upstream.col(1).norm(), 1e-12);
  EXPECT_GT(st.upstream.col(2).norm(), 0.0);
  EXPECT_GT(st.upstream.col(3).norm(), 0.0);
  EXPECT_EQ(opt.degenerate_jacobians(), 0);
  for (auto v : {Variant::DAlpha, Variant::DRad}) {
    Trainer tr(reacher(), v, Family::O, {}, 4);
    const auto s = tr.actor_upstream(pointers(ts), Z);
    EXPECT_GT(s.upstream.col(0).norm(), 1e-8) << variant_name(v);
    EXPECT_GT(s.upstream.col(1).norm(), 1e-8) << variant_name(v);
  }
}

TEST(Actor, PolicyDelayHalvesActorUpdates) {
  TrainerConfig cfg;
  cfg.batch_size = 8;
  Trainer td3(reacher(), Variant::DPro, Family::N, cfg, 2), sac(reacher(), Variant::SPre, Family::N, cfg, 2);
  ReplayBuffer buf(100, 3);
  for (std::uint64_t k = 0; k < 50; ++k) buf.add(make_transition(v2(0.1, 0.2), v2(0.1, 0.2), -0.1, false, box2(), k));
  for (int i = 0; i < 20; ++i) {
    td3.train_step(buf);
    sac.train_step(buf);
  }
  EXPECT_EQ(td3.critic_updates(), 20);
  EXPECT_EQ(td3.actor_updates(), 10);
  EXPECT_EQ(sac.actor_updates(), 20);
}

TEST(Actor, PolyakTargetsTrackOnlineNetworks) {
  TrainerConfig cfg;
  cfg.batch_size = 8;
  cfg.td3_tau = 1.0;
  Trainer tr(reacher(), Variant::DPre, Family::N, cfg, 2);
  ReplayBuffer buf(100, 3);
  for (std::uint64_t k = 0; k < 50; ++k) buf.add(make_transition(v2(0.1, 0.2), v2(0.1, 0.2), -0.1, false, box2(), k));
  tr.train_step(buf); // critic_updates 1: no actor step
  tr.train_step(buf); // actor step and full copy
  EXPECT_EQ(tr.actor_target().params, tr.actor().params);
  EXPECT_EQ(tr.critic_target(1).params, tr.critic(1).params);
}

TEST(Sac, EntropyTermIsAffineInCoefficient) {
  TrainerConfig cfg;
  cfg.auto_entropy = false;
  std::vector<Transition> ts;
  for (std::uint64_t k = 0; k < 16; ++k) ts.push_back(make_transition(v2(0, 0), v2(0, 0), 0.0, false, corner2(), k));
  Mat O = Mat::Zero(4, 16);
  O.bottomRows(2).setConstant(-1.0);
  for (auto v : {Variant::SPre, Variant::SAlpha, Variant::SRad}) {
    std::array<double, 3> loss{};
    for (int k = 0; k < 3; ++k) {
      Trainer tr(reacher(), v, Family::O, cfg, 6);
      tr.set_entropy_coef(0.5 * (k + 1));
      loss[static_cast<std::size_t>(k)] = tr.actor_upstream(pointers(ts), O).loss;
    }
    // same draws: loss(alpha) = alpha * mean log_prob - mean min Q
    EXPECT_NEAR(loss[2] - loss[1], loss[1] - loss[0], 1e-9) << variant_name(v);
  }
}

TEST(Sac, EntropyCoefficientMovesTowardTarget) {
  std::vector<Transition> ts;
  for (std::uint64_t k = 0; k < 16; ++k) ts.push_back(make_transition(v2(0, 0), v2(0, 0), 0.0, false, box2(), k));
  Mat O = Mat::Zero(4, 16);
  for (double target : {-100.0, 100.0}) {
    TrainerConfig cfg;
    cfg.target_entropy = target;
    Trainer tr(reacher(), Variant::SPre, Family::N, cfg, 1);
    tr.actor_upstream(pointers(ts), O);
    // a demanding entropy target raises the coefficient, a lax one lowers it
    if (target > 0) EXPECT_GT(tr.entropy_coef(), 1.0);
    else EXPECT_LT(tr.entropy_coef(), 1.0);
  }
}

TEST(Sac, LogStdClampStopsGradient) {
  const Trainer tr(reacher(), Variant::SPre, Family::N, {}, 1);
  VecT<Jet> mean(2), ls(2);
  mean << Jet(0.1, JetDerivatives::Unit(4, 0)), Jet(-0.2, JetDerivatives::Unit(4, 1));
  ls << Jet(-25.0, JetDerivatives::Unit(4, 2)), Jet(0.5, JetDerivatives::Unit(4, 3));
  const auto s = tr.sac_sample<Jet>(mean, ls, v2(0.3, -0.4), *box2());
  EXPECT_EQ(s.log_prob.derivatives()[2], 0.0);
  EXPECT_NE(s.log_prob.derivatives()[3], 0.0);
}

TEST(FrankWolfe, BoxWorkedExample) {
  TrainerConfig cfg;
  cfg.fw_lr = 0.05;
  const Trainer tr(reacher(), Variant::NFW, Family::O, cfg, 1);
  const auto box = box2();
  EXPECT_EQ(tr.fw_vertex(v2(0.5, -2.0), v2(1, 1), *box), v2(1, -1));
  EXPECT_LE((tr.fw_reference(v2(1, 1), v2(0.5, -2.0), *box) - v2(1, 0.9)).norm(), 1e-12);
}

TEST(FrankWolfe, ZeroRateAndZeroGradient) {
  TrainerConfig cfg;
  cfg.fw_lr = 0.0;
  const auto inst = corner2();
  const Vec p = project(v2(0.9, 0.3), *inst).point;
  const Trainer still(reacher(), Variant::NFW, Family::O, cfg, 1);
  EXPECT_EQ(still.fw_reference(p, v2(1.0, 1.0), *inst), p);

  const Trainer tr(reacher(), Variant::NFW, Family::O, {}, 1);
  const Vec tie = solve_lp(Vec::Zero(2), *inst).x;
  const Vec expect = project(Vec(p + 0.05 * (tie - p)), *inst).point;
  EXPECT_LE((tr.fw_reference(p, Vec::Zero(2), *inst) - expect).norm(), 1e-12);
}

TEST(FrankWolfe, ReferenceClimbsTheCriticLocally) {
  const auto inst = corner2();
  const Trainer tr(reacher(), Variant::NFW, Family::O, {}, 8);
  const Vec obs = reacher().observe(reacher().reset(4));
  const Vec mu = squash_box(Vec(forward(tr.actor(), obs)), ActionSpace::unit(2));
  const Vec p = project(mu, *inst).point;
  const Vec g = tr.critic_action_gradient(0, Mat(obs), Mat(p)).col(0);
  const Vec as = tr.nfwpo_reference(obs, *inst);
  EXPECT_TRUE(contains(*inst, as, 1e-9));
  EXPECT_GE(g.dot(as - p), -1e-12);
}

TEST(FrankWolfe, LossVanishesAtReference) {
  TrainerConfig cfg;
  cfg.fw_lr = 0.0;
  Trainer tr(reacher(), Variant::NFW, Family::O, cfg, 1);
  std::vector<Transition> ts{make_transition(v2(0, 0), v2(0, 0), 0.0, false, corner2())};
  Mat Z(2, 1);
  Z << std::atanh(0.1), std::atanh(-0.3); // feasible, so P(mu) = mu = a_s
  const auto st = tr.actor_upstream(pointers(ts), Z);
  EXPECT_EQ(st.loss, 0.0);
  EXPECT_EQ(st.upstream.norm(), 0.0);
}

TEST(Penalty, PlusVariantsSubtractViolation) {
  const auto half = share({ActionSpace::unit(2), make_linear((Mat(1, 2) << 1, 1).finished(), Vec::Ones(1)), {}, {}});
  const Trainer plus(reacher(), Variant::DPreP, Family::O, {}, 1), plain(reacher(), Variant::DPro, Family::O, {}, 1);
  EXPECT_NEAR(plus.apply_penalty(1.0, v2(1, 1), *half), 1.0 - 0.70711, 1e-5);
  EXPECT_EQ(plain.apply_penalty(1.0, v2(1, 1), *half), 1.0);
  EXPECT_EQ(plus.apply_penalty(1.0, v2(0.2, 0.2), *half), 1.0);
}

TEST(Penalty, ActorLossModeAddsViolationGradient) {
  TrainerConfig cfg;
  cfg.penalty_mode = PenaltyMode::ActorLoss;
  const auto half = share({ActionSpace::unit(2), make_linear((Mat(1, 2) << 1, 1).finished(), Vec::Ones(1)), {}, {}});
  std::vector<Transition> ts{make_transition(v2(0, 0), v2(0, 0), 0.0, false, half)};
  Mat Z(2, 1);
  Z << std::atanh(0.9), std::atanh(0.8);
  Trainer plus(reacher(), Variant::DPreP, Family::O, cfg, 1), base(reacher(), Variant::DPre, Family::O, cfg, 1);
  EXPECT_EQ(plus.apply_penalty(1.0, v2(0.9, 0.8), *half), 1.0);
  const auto a = plus.actor_upstream(pointers(ts), Z), b = base.actor_upstream(pointers(ts), Z);
  EXPECT_NEAR(a.loss - b.loss, 0.7 / std::sqrt(2.0), 1e-9);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(a.upstream(0, 0) - b.upstream(0, 0), s * (1 - 0.81), 1e-6);
  EXPECT_NEAR(a.upstream(1, 0) - b.upstream(1, 0), s * (1 - 0.64), 1e-6);
}

TEST(Acting, ExecutedActionsAlwaysFeasible) {
  TrainerConfig cfg;
  cfg.warmup = 300;
  cfg.batch_size = 16;
  ExperimentConfig ec;
  ec.total_steps = 700;
  ec.eval_interval = 700;
  ec.eval_episodes = 1;
  ec.final_eval_episodes = 1;
  ec.hyper = cfg;
  for (Family f : {Family::L2, Family::OS, Family::MA})
    for (auto v : kAllVariants) {
      const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {f, {}});
      long steps = 0;
      const auto rec = run_single(ec, v, f, 1, [&](long, const Vec &s, const Vec &, const Vec &a, double) {
        ++steps;
        ASSERT_TRUE(contains(ce.instance(s), a, 1e-6)) << variant_name(v) << " " << family_name(f);
      });
      EXPECT_EQ(steps, 700);
      EXPECT_EQ(rec.env_clips, 0);
      EXPECT_EQ(rec.violations, 0);
    }
}

TEST(Acting, DeterministicActionIsSquashedMeanUnderIdentity) {
  const Trainer tr(reacher(), Variant::DPre, Family::N, {}, 2);
  const Vec obs = reacher().observe(reacher().reset(1));
  const auto a = tr.act_deterministic(obs, *box2());
  EXPECT_EQ(a.executed, squash_box(Vec(forward(tr.actor(), obs)), ActionSpace::unit(2)));
  EXPECT_EQ(a.pre_map, a.executed);
}

TEST(Acting, UnconstrainedVariantsCoincideBitwise) {
  ExperimentConfig ec;
  ec.total_steps = 1500;
  ec.eval_interval = 500;
  ec.eval_episodes = 1;
  ec.final_eval_episodes = 2;
  ec.hyper.warmup = 300;
  ec.hyper.batch_size = 16;
  std::vector<std::vector<Vec>> traj;
  std::vector<RunRecord> recs;
  for (auto v : {Variant::DPro, Variant::DPre, Variant::DOpt, Variant::DAlpha, Variant::DRad}) {
    traj.emplace_back();
    recs.push_back(run_single(ec, v, Family::N, 3, [&](long, const Vec &, const Vec &, const Vec &a, double) {
      traj.back().push_back(a);
    }));
  }
  for (std::size_t k = 1; k < traj.size(); ++k) {
    ASSERT_EQ(traj[k].size(), traj[0].size());
    for (std::size_t t = 0; t < traj[0].size(); ++t) ASSERT_TRUE(same_bits(traj[k][t], traj[0][t])) << k << " " << t;
    EXPECT_EQ(recs[k].eval_returns, recs[0].eval_returns);
    EXPECT_EQ(recs[k].final_mean, recs[0].final_mean);
  }
}

TEST(Checkpoint, RoundTripRestoresBehaviour) {
  TrainerConfig cfg;
  cfg.batch_size = 8;
  Trainer tr(reacher(), Variant::SAlpha, Family::O, cfg, 2);
  ReplayBuffer buf(100, 3);
  for (std::uint64_t k = 0; k < 50; ++k) buf.add(make_transition(v2(0.1, 0.2), v2(0.1, 0.2), -0.1, false, corner2(), k));
  for (int i = 0; i < 5; ++i) tr.train_step(buf);
  const auto ck = nlohmann::json::parse(tr.checkpoint().dump());
  Trainer back(reacher(), Variant::SAlpha, Family::O, cfg, 99);
  back.restore(ck);
  EXPECT_EQ(back.actor().params, tr.actor().params);
  EXPECT_EQ(back.critic_target(1).params, tr.critic_target(1).params);
  EXPECT_EQ(back.entropy_coef(), tr.entropy_coef());
  EXPECT_EQ(back.critic_updates(), 5);
  Trainer other(reacher(), Variant::DPro, Family::O, cfg, 2);
  EXPECT_THROW(other.restore(ck), std::invalid_argument);
}

TEST(Replay, RingOverwritesOldest) {
  ReplayBuffer buf(3, 1);
  for (int k = 0; k < 5; ++k) buf.add(make_transition(v2(0, 0), v2(0, 0), k, false, box2()));
  EXPECT_EQ(buf.size(), 3u);
  std::vector<double> r;
  for (std::size_t i = 0; i < 3; ++i) r.push_back(buf[i].reward);
  std::sort(r.begin(), r.end());
  EXPECT_EQ(r, (std::vector<double>{2, 3, 4}));
  EXPECT_THROW(ReplayBuffer(0, 1), std::invalid_argument);
}

TEST(Replay, SamplingIsUniform) {
  ReplayBuffer buf(10, 7);
  for (int k = 0; k < 10; ++k) buf.add(make_transition(v2(0, 0), v2(0, 0), k, false, box2()));
  std::array<int, 10> hist{};
  const int n = 200000;
  for (auto i : buf.sample(n)) ++hist[i];
  // chi-square with 9 dof; 27.9 is the 0.999 quantile
  double chi2 = 0.0;
  for (int h : hist) chi2 += (h - n / 10.0) * (h - n / 10.0) / (n / 10.0);
  EXPECT_LT(chi2, 27.9);
}

TEST(Config, HyperparametersRoundTripAndRejectUnknownKeys) {
  TrainerConfig c;
  c.action_noise = 0.3;
  c.target_entropy = -1.5;
  c.penalty_mode = PenaltyMode::ActorLoss;
  const auto back = trainer_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(trainer_config_from_json({{"learning_rate", 1e-3}}), std::invalid_argument);
  EXPECT_THROW(trainer_config_from_json({{"gamma", 1.5}}), std::invalid_argument);
}
