#include "acrl/envs.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace acrl;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

bool bitwise_equal(const Vec &a, const Vec &b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST(Reacher, ZeroActionKeepsAngles) {
  const TwoLinkReacher env;
  Vec s = env.reset(3);
  s.segment(2, 2).setZero();
  const auto r = env.step(s, Vec::Zero(2));
  EXPECT_EQ(r.next.head(4), s.head(4));
  EXPECT_DOUBLE_EQ(r.reward, -(env.fingertip(s) - s.segment(4, 2)).norm());
}

TEST(Reacher, HandEvaluatedUpdate) {
  ReacherParams p;
  p.damping = 0.0;
  const TwoLinkReacher env(p);
  Vec s = Vec::Zero(7);
  s[4] = 0.1;
  const auto r = env.step(s, v2(1, 0));
  EXPECT_NEAR(r.next[2], 0.05, 1e-15);
  EXPECT_NEAR(r.next[3], 0.0, 1e-15);
  EXPECT_NEAR(r.next[0], 0.0025, 1e-15);
  EXPECT_EQ(r.next[6], 1.0);
}

TEST(Reacher, FingertipFormula) {
  const TwoLinkReacher env;
  Vec s = Vec::Zero(7);
  s[0] = 0.3;
  s[1] = -1.1;
  const Vec tip = env.fingertip(s);
  EXPECT_NEAR(tip[0], 0.1 * std::cos(0.3) + 0.1 * std::cos(-0.8), 1e-15);
  EXPECT_NEAR(tip[1], 0.1 * std::sin(0.3) + 0.1 * std::sin(-0.8), 1e-15);
}

TEST(Reacher, MirrorSymmetry) {
  const TwoLinkReacher env;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec s = env.reset(5), m = s;
  m.head(4) *= -1.0;
  m[5] *= -1.0;
  for (int t = 0; t < 100; ++t) {
    const Vec a = v2(U(rng), U(rng));
    const auto rs = env.step(s, a), rm = env.step(m, -a);
    EXPECT_NEAR(rs.reward, rm.reward, 1e-12);
    Vec mirrored = rs.next;
    mirrored.head(4) *= -1.0;
    mirrored[5] *= -1.0;
    EXPECT_LE((mirrored - rm.next).norm(), 1e-12);
    s = rs.next;
    m = rm.next;
  }
}

TEST(Reacher, EpisodeEndsAfterConfiguredLength) {
  const TwoLinkReacher env;
  Vec s = env.reset(1);
  int steps = 0;
  for (bool done = false; !done; ++steps) {
    const auto r = env.step(s, Vec::Zero(2));
    done = r.done;
    s = r.next;
  }
  EXPECT_EQ(steps, 150);
}

TEST(Reacher, RewardNeverPositive) {
  const TwoLinkReacher env;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec s = env.reset(7);
  for (int t = 0; t < 10000; ++t) {
    const Vec a = v2(U(rng), U(rng));
    const auto r = env.step(s, a);
    EXPECT_LE(r.reward, -0.01 * a.squaredNorm() + 1e-15);
    s = r.done ? env.reset(static_cast<std::uint64_t>(t)) : r.next;
  }
  Vec on = Vec::Zero(7);
  on.segment(4, 2) = v2(0.2, 0.0); // both links straight out along x, after the step
  EXPECT_NEAR(env.step(on, Vec::Zero(2)).reward, 0.0, 1e-15);
}

TEST(Reacher, TargetsInAnnulus) {
  const TwoLinkReacher env;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Vec s = env.reset(seed);
    const double r = s.segment(4, 2).norm();
    EXPECT_GE(r, 0.05 - 1e-12);
    EXPECT_LE(r, 0.18 + 1e-12);
  }
}

TEST(Envs, Determinism) {
  for (std::shared_ptr<Env> env : {std::shared_ptr<Env>(new TwoLinkReacher()), std::shared_ptr<Env>(new PointMass())}) {
    auto run = [&] {
      std::mt19937_64 rng(8);
      std::uniform_real_distribution<double> U(-1.0, 1.0);
      Vec s = env->reset(9);
      for (int t = 0; t < 10000; ++t) {
        Vec a(env->action_dim());
        for (int i = 0; i < a.size(); ++i) a[i] = U(rng);
        const auto r = env->step(s, a);
        s = r.done ? env->reset(static_cast<std::uint64_t>(t)) : r.next;
      }
      return s;
    };
    EXPECT_TRUE(bitwise_equal(run(), run())) << env->name();
  }
}

TEST(Envs, DefensiveClipIsCountedAndNaNRejected) {
  const TwoLinkReacher env;
  const Vec s = env.reset(1);
  env.step(s, v2(1.0 + 5e-7, -1.0));
  EXPECT_EQ(env.clip_count(), 0);
  const auto r = env.step(s, v2(3.0, 0.0));
  EXPECT_EQ(env.clip_count(), 1);
  EXPECT_EQ(r.next, env.step(s, v2(1.0, 0.0)).next);
  EXPECT_THROW(env.step(s, v2(std::nan(""), 0.0)), std::invalid_argument);
  EXPECT_THROW(env.step(s, Vec::Zero(3)), std::invalid_argument);
}

TEST(PointMass, Stationary) {
  const PointMass env;
  Vec s = env.reset(2);
  const Vec s0 = s;
  for (int t = 0; t < 10; ++t) s = env.step(s, Vec::Zero(2)).next;
  EXPECT_EQ(s.head(6), s0.head(6));
}

TEST(PointMass, ConstantAccelerationClosedForm) {
  PointMassParams p;
  p.dim = 3;
  const PointMass env(p);
  Vec s = env.reset(3);
  s.segment(3, 3) << 0.2, -0.1, 0.0;
  const Vec p0 = s.head(3), v0 = s.segment(3, 3);
  const Vec a = (Vec(3) << 0.5, -1.0, 0.25).finished();
  const int k = 37;
  for (int t = 0; t < k; ++t) s = env.step(s, a).next;
  const double dt = 0.05;
  const Vec expect = p0 + k * dt * v0 + dt * dt * (k * (k + 1) / 2.0) * a;
  EXPECT_LE((s.head(3) - expect).norm(), 1e-12);
  EXPECT_LE((s.segment(3, 3) - (v0 + k * dt * a)).norm(), 1e-12);
}

TEST(PointMass, GoalAtStartGivesZeroReward) {
  const PointMass env;
  Vec s = env.reset(4);
  s.segment(4, 2) = s.head(2);
  for (int t = 0; t < 5; ++t) {
    const auto r = env.step(s, Vec::Zero(2));
    EXPECT_EQ(r.reward, 0.0);
    s = r.next;
  }
}

TEST(ConstrainedEnv, BallIsStateIndependent) {
  const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {Family::L2, {}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = ce.instance(ce.env().reset(seed));
    ASSERT_TRUE(inst.ellipse);
    EXPECT_FALSE(inst.linear);
    EXPECT_EQ(inst.ellipse->Q, Mat::Identity(2, 2));
    EXPECT_DOUBLE_EQ(inst.ellipse->bound, 0.05);
  }
}

TEST(ConstrainedEnv, ZeroVelocityGivesBoxOnly) {
  const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {Family::O, {}});
  Vec s = ce.env().reset(1);
  s.segment(2, 2).setZero();
  EXPECT_TRUE(ce.instance(s).box_only());
}

TEST(ConstrainedEnv, PositiveBudgetFacetsAtUnitVelocity) {
  const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {Family::M, {}});
  Vec s = ce.env().reset(1);
  s.segment(2, 2) << 1.0, 1.0;
  const auto inst = ce.instance(s);
  ASSERT_TRUE(inst.linear);
  EXPECT_EQ(inst.linear->rows(), 3);
  // sampled cross-check against the nonlinear form
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < 20000; ++t) {
    const Vec a = v2(U(rng), U(rng));
    const double lhs = std::max(a[0], 0.0) + std::max(a[1], 0.0);
    if (std::abs(lhs - 1.0) < 1e-9) continue;
    EXPECT_EQ(contains(inst, a, 0.0), lhs <= 1.0);
  }
}

TEST(ConstrainedEnv, CentersStrictlyFeasibleAlongRandomRollouts) {
  for (Family f : {Family::L2, Family::O, Family::M, Family::T, Family::OS, Family::MA}) {
    const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {f, {}});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec s = ce.env().reset(12);
    int bad = 0;
    for (int t = 0; t < 10000; ++t) {
      const auto inst = ce.instance(s);
      bad += min_slack(inst, *inst.center) <= 0.0;
      const auto r = ce.env().step(s, v2(U(rng), U(rng)));
      s = r.done ? ce.env().reset(static_cast<std::uint64_t>(t)) : r.next;
    }
    EXPECT_EQ(bad, 0) << family_name(f);
  }
}

TEST(ConstrainedEnv, ProjectedStepReportsBothActions) {
  const ConstrainedEnv ce(std::make_shared<TwoLinkReacher>(), {Family::L2, {}});
  const Vec s = ce.env().reset(1);
  const auto inst = ce.instance(s);
  const auto ps = ce.step_projected(s, v2(1, 0), inst);
  EXPECT_EQ(ps.pre_action, v2(1, 0));
  EXPECT_NEAR((ps.executed - v2(std::sqrt(0.05), 0)).norm(), 0.0, 1e-10);
  EXPECT_EQ(ps.result.next, ce.env().step(s, ps.executed).next);
}

TEST(ConstrainedEnv, RejectsJointCountMismatch) {
  PointMassParams p;
  p.dim = 3;
  EXPECT_THROW(ConstrainedEnv(std::make_shared<PointMass>(p), {Family::T, {}}), std::invalid_argument);
}

TEST(Envs, ParamsRoundTrip) {
  ReacherParams rp;
  rp.damping = 0.3;
  const TwoLinkReacher r(rp);
  const auto back = make_env(r.params());
  EXPECT_EQ(back->params(), r.params());
  PointMassParams pp;
  pp.dim = 6;
  const PointMass pm(pp);
  EXPECT_EQ(make_env(pm.params())->params(), pm.params());
  EXPECT_THROW(make_env({{"name", "hopper"}}), std::invalid_argument);
}
