#pragma once

#include "acrl/mappings.hpp"

#include <json.hpp>

#include <memory>
#include <numbers>
#include <random>

namespace acrl {

struct StepResult {
  Vec next;
  double reward = 0.0;
  bool done = false;
};

/// Deterministic environment. State vectors are opaque to the trainer; step
/// is a pure function of (state, action) apart from the clip counter.
class Env {
public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int episode_length() const = 0;
  virtual Vec reset(std::uint64_t seed) const = 0;
  virtual Vec observe(const Vec &state) const = 0;
  virtual JointState joints(const Vec &state) const = 0;
  virtual nlohmann::json params() const = 0;

  const ActionSpace &space() const { return space_; }
  long clip_count() const { return clips_; }

  StepResult step(const Vec &state, const Vec &action) const {
    if (action.size() != action_dim()) throw std::invalid_argument(name() + ": action dimension mismatch");
    if (action.hasNaN()) throw std::invalid_argument(name() + ": NaN action");
    Vec a = action;
    if ((a.cwiseAbs() - space_.a_max).maxCoeff() > 1e-6) {
      ++clips_;
      a = a.cwiseMax(-space_.a_max).cwiseMin(space_.a_max);
    }
    return transition(state, a);
  }

protected:
  explicit Env(ActionSpace space) : space_(std::move(space)) {}
  virtual StepResult transition(const Vec &state, const Vec &a) const = 0;

private:
  ActionSpace space_;
  mutable long clips_ = 0;
};

// ---------------------------------------------------------------------------

struct ReacherParams {
  double l1 = 0.1;
  double l2 = 0.1;
  double dt = 0.05;
  double gain = 1.0;
  double damping = 0.1;
  int episode_length = 150;
  double target_r_min = 0.05;
  double target_r_max = 0.18;
};

/// Planar two-link arm. State: [theta1, theta2, w1, w2, target_x, target_y, t].
class TwoLinkReacher final : public Env {
public:
  explicit TwoLinkReacher(ReacherParams p = {}) : Env(ActionSpace::unit(2)), p_(p) {
    if (!(p.dt > 0) || !(p.l1 > 0) || !(p.l2 > 0) || p.episode_length <= 0)
      throw std::invalid_argument("reacher: invalid parameters");
  }

  const ReacherParams &config() const { return p_; }
  std::string name() const override { return "reacher"; }
  int obs_dim() const override { return 8; }
  int action_dim() const override { return 2; }
  int episode_length() const override { return p_.episode_length; }

  Vec fingertip(const Vec &s) const {
    return (Vec(2) << p_.l1 * std::cos(s[0]) + p_.l2 * std::cos(s[0] + s[1]),
            p_.l1 * std::sin(s[0]) + p_.l2 * std::sin(s[0] + s[1]))
        .finished();
  }

  Vec reset(std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> vel(-0.1, 0.1);
    std::uniform_real_distribution<double> r2(p_.target_r_min * p_.target_r_min, p_.target_r_max * p_.target_r_max);
    Vec s(7);
    s[0] = ang(rng);
    s[1] = ang(rng);
    s[2] = vel(rng);
    s[3] = vel(rng);
    const double r = std::sqrt(r2(rng)), phi = ang(rng);
    s[4] = r * std::cos(phi);
    s[5] = r * std::sin(phi);
    s[6] = 0.0;
    return s;
  }

  Vec observe(const Vec &s) const override {
    Vec o(8);
    o << std::cos(s[0]), std::sin(s[0]), std::cos(s[1]), std::sin(s[1]), s[2], s[3], fingertip(s) - s.segment(4, 2);
    return o;
  }

  JointState joints(const Vec &s) const override { return {s.head(2), s.segment(2, 2)}; }

  nlohmann::json params() const override {
    return {{"name", name()},           {"l1", p_.l1},
            {"l2", p_.l2},              {"dt", p_.dt},
            {"gain", p_.gain},          {"damping", p_.damping},
            {"episode_length", p_.episode_length}, {"target_r_min", p_.target_r_min},
            {"target_r_max", p_.target_r_max}};
  }

private:
  StepResult transition(const Vec &s, const Vec &a) const override {
    Vec n = s;
    for (int i = 0; i < 2; ++i) {
      n[2 + i] = (1.0 - p_.damping * p_.dt) * s[2 + i] + p_.dt * p_.gain * a[i];
      n[i] = s[i] + p_.dt * n[2 + i];
    }
    n[6] = s[6] + 1.0;
    const double reward = -(fingertip(n) - n.segment(4, 2)).norm() - 0.01 * a.squaredNorm();
    return {n, reward, n[6] >= p_.episode_length};
  }

  ReacherParams p_;
};

// ---------------------------------------------------------------------------

struct PointMassParams {
  int dim = 2;
  double dt = 0.05;
  int episode_length = 100;
  double start_range = 1.0;
};

/// Double integrator. State: [pos (d), vel (d), goal (d), t]; the joint
/// readout is (pos, vel).
class PointMass final : public Env {
public:
  explicit PointMass(PointMassParams p = {}) : Env(ActionSpace::unit(p.dim)), p_(p) {
    if (!(p.dt > 0) || p.episode_length <= 0) throw std::invalid_argument("pointmass: invalid parameters");
  }

  const PointMassParams &config() const { return p_; }
  std::string name() const override { return "pointmass"; }
  int obs_dim() const override { return 3 * p_.dim; }
  int action_dim() const override { return p_.dim; }
  int episode_length() const override { return p_.episode_length; }

  Vec reset(std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-p_.start_range, p_.start_range);
    const int d = p_.dim;
    Vec s = Vec::Zero(3 * d + 1);
    for (int i = 0; i < d; ++i) s[i] = U(rng);
    for (int i = 0; i < d; ++i) s[2 * d + i] = U(rng);
    return s;
  }

  Vec observe(const Vec &s) const override {
    const int d = p_.dim;
    Vec o(3 * d);
    o << s.head(d), s.segment(d, d), s.segment(2 * d, d) - s.head(d);
    return o;
  }

  JointState joints(const Vec &s) const override { return {s.head(p_.dim), s.segment(p_.dim, p_.dim)}; }

  nlohmann::json params() const override {
    return {{"name", name()}, {"dim", p_.dim}, {"dt", p_.dt}, {"episode_length", p_.episode_length},
            {"start_range", p_.start_range}};
  }

private:
  StepResult transition(const Vec &s, const Vec &a) const override {
    const int d = p_.dim;
    Vec n = s;
    n.segment(d, d) = s.segment(d, d) + p_.dt * a;
    n.head(d) = s.head(d) + p_.dt * n.segment(d, d);
    n[3 * d] = s[3 * d] + 1.0;
    const double reward = -(n.head(d) - n.segment(2 * d, d)).norm() - 0.01 * a.squaredNorm();
    return {n, reward, n[3 * d] >= p_.episode_length};
  }

  PointMassParams p_;
};

/// Builds an environment from its serialized parameters.
inline std::shared_ptr<Env> make_env(const nlohmann::json &j) {
  const auto name = j.value("name", std::string("reacher"));
  if (name == "reacher") {
    ReacherParams p;
    p.l1 = j.value("l1", p.l1);
    p.l2 = j.value("l2", p.l2);
    p.dt = j.value("dt", p.dt);
    p.gain = j.value("gain", p.gain);
    p.damping = j.value("damping", p.damping);
    p.episode_length = j.value("episode_length", p.episode_length);
    p.target_r_min = j.value("target_r_min", p.target_r_min);
    p.target_r_max = j.value("target_r_max", p.target_r_max);
    return std::make_shared<TwoLinkReacher>(p);
  }
  if (name == "pointmass") {
    PointMassParams p;
    p.dim = j.value("dim", p.dim);
    p.dt = j.value("dt", p.dt);
    p.episode_length = j.value("episode_length", p.episode_length);
    p.start_range = j.value("start_range", p.start_range);
    return std::make_shared<PointMass>(p);
  }
  throw std::invalid_argument("unknown environment: " + name);
}

// ---------------------------------------------------------------------------

/// Action before and after the in-transition projection.
struct ProjectedStep {
  StepResult result;
  Vec pre_action;
  Vec executed;
};

/// An environment with a constraint family bound to its joint readout.
class ConstrainedEnv {
public:
  ConstrainedEnv(std::shared_ptr<const Env> env, ConstraintSpec spec) : env_(std::move(env)), spec_(std::move(spec)) {
    if (!env_) throw std::invalid_argument("ConstrainedEnv: null environment");
    instance(env_->reset(0)); // surfaces joint-count mismatches early
  }

  const Env &env() const { return *env_; }
  const ConstraintSpec &spec() const { return spec_; }

  /// Feasible set at a state, with its interior anchor filled in.
  ConstraintInstance instance(const Vec &state) const {
    return with_center(instantiate(spec_, env_->space(), env_->joints(state)));
  }

  /// Projects the proposed action onto the feasible set inside the transition.
  ProjectedStep step_projected(const Vec &state, const Vec &action, const ConstraintInstance &inst) const {
    const Vec executed = project(action, inst).point;
    return {env_->step(state, executed), action, executed};
  }

private:
  std::shared_ptr<const Env> env_;
  ConstraintSpec spec_;
};

} // namespace acrl
