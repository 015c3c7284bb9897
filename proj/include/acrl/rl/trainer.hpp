#pragma once

#include "acrl/density.hpp"
#include "acrl/envs.hpp"
#include "acrl/lp.hpp"
#include "acrl/nn.hpp"
#include "acrl/rl/replay.hpp"
#include "acrl/rl/variants.hpp"

#include <json.hpp>

#include <array>
#include <random>
#include <sstream>

namespace acrl {

enum class PenaltyMode { Reward, ActorLoss };

struct TrainerConfig {
  std::vector<int> hidden{64, 64};
  double gamma = 0.98;
  int batch_size = 64;
  std::size_t buffer_size = 200000;
  int warmup = 1000;
  double max_grad_norm = 0.0; // 0 disables clipping

  double td3_lr = 1e-3;
  double td3_tau = 0.005;
  double action_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int policy_delay = 2;
  double fw_lr = 0.05;

  double sac_lr = 7.3e-4;
  double sac_tau = 0.02;
  bool auto_entropy = true;
  double init_entropy_coef = 1.0;
  std::optional<double> target_entropy; // defaults to -d

  DensityOptions density;
  PenaltyMode penalty_mode = PenaltyMode::Reward;
  double penalty_scale = 1.0;   // weight of the penalty in actor-loss mode
  bool map_target_action = true; // executed-action critics also map a'
};

inline nlohmann::json to_json(const TrainerConfig &c) {
  nlohmann::json j{{"hidden", c.hidden},
                   {"gamma", c.gamma},
                   {"batch_size", c.batch_size},
                   {"buffer_size", c.buffer_size},
                   {"warmup", c.warmup},
                   {"max_grad_norm", c.max_grad_norm},
                   {"td3_lr", c.td3_lr},
                   {"td3_tau", c.td3_tau},
                   {"action_noise", c.action_noise},
                   {"target_noise", c.target_noise},
                   {"target_noise_clip", c.target_noise_clip},
                   {"policy_delay", c.policy_delay},
                   {"fw_lr", c.fw_lr},
                   {"sac_lr", c.sac_lr},
                   {"sac_tau", c.sac_tau},
                   {"auto_entropy", c.auto_entropy},
                   {"init_entropy_coef", c.init_entropy_coef},
                   {"solid_angle_exponent", c.density.solid_angle_exponent},
                   {"boundary_weight", c.density.boundary_weight},
                   {"penalty_mode", c.penalty_mode == PenaltyMode::Reward ? "reward" : "actor_loss"},
                   {"penalty_scale", c.penalty_scale},
                   {"map_target_action", c.map_target_action}};
  j["target_entropy"] = c.target_entropy ? nlohmann::json(*c.target_entropy) : nlohmann::json(nullptr);
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainerConfig trainer_config_from_json(const nlohmann::json &j) {
  TrainerConfig c;
  const auto known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw std::invalid_argument("unknown hyperparameter: " + it.key());
  c.hidden = j.value("hidden", c.hidden);
  c.gamma = j.value("gamma", c.gamma);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.buffer_size = j.value("buffer_size", c.buffer_size);
  c.warmup = j.value("warmup", c.warmup);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.td3_lr = j.value("td3_lr", c.td3_lr);
  c.td3_tau = j.value("td3_tau", c.td3_tau);
  c.action_noise = j.value("action_noise", c.action_noise);
  c.target_noise = j.value("target_noise", c.target_noise);
  c.target_noise_clip = j.value("target_noise_clip", c.target_noise_clip);
  c.policy_delay = j.value("policy_delay", c.policy_delay);
  c.fw_lr = j.value("fw_lr", c.fw_lr);
  c.sac_lr = j.value("sac_lr", c.sac_lr);
  c.sac_tau = j.value("sac_tau", c.sac_tau);
  c.auto_entropy = j.value("auto_entropy", c.auto_entropy);
  c.init_entropy_coef = j.value("init_entropy_coef", c.init_entropy_coef);
  if (j.contains("target_entropy") && !j["target_entropy"].is_null()) c.target_entropy = j["target_entropy"].get<double>();
  c.density.solid_angle_exponent = j.value("solid_angle_exponent", c.density.solid_angle_exponent);
  c.density.boundary_weight = j.value("boundary_weight", c.density.boundary_weight);
  const auto pm = j.value("penalty_mode", std::string("reward"));
  if (pm == "reward") c.penalty_mode = PenaltyMode::Reward;
  else if (pm == "actor_loss") c.penalty_mode = PenaltyMode::ActorLoss;
  else throw std::invalid_argument("penalty_mode must be 'reward' or 'actor_loss'");
  c.penalty_scale = j.value("penalty_scale", c.penalty_scale);
  c.map_target_action = j.value("map_target_action", c.map_target_action);
  if (c.batch_size <= 0 || c.policy_delay <= 0 || c.buffer_size == 0 || c.warmup < 0)
    throw std::invalid_argument("batch_size, policy_delay and buffer_size must be positive");
  if (!(c.gamma >= 0 && c.gamma <= 1)) throw std::invalid_argument("gamma must lie in [0, 1]");
  return c;
}

/// Result of choosing an action at a state.
struct ActResult {
  Vec pre_map;
  Vec executed;
  std::optional<double> log_prob;
};

/// A stochastic SAC action and its log-density, in either scalar type.
template <class T> struct SacSample {
  VecT<T> pre_map;  // action before the constraint mapping
  VecT<T> executed; // feasible action
  T log_prob;
};

namespace detail {

/// Gradient of the violation penalty by central differences.
inline Vec penalty_gradient(const ConstraintInstance &inst, const Vec &a) {
  Vec g(a.size());
  const double h = 1e-7;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    Vec ap = a, am = a;
    ap[i] += h;
    am[i] -= h;
    g[i] = (violation_penalty(inst, ap) - violation_penalty(inst, am)) / (2 * h);
  }
  return g;
}

inline Mat column_stack(const std::vector<Vec> &cols) {
  Mat M(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) M.col(static_cast<Eigen::Index>(i)) = cols[i];
  return M;
}

inline Mat stack_rows(const Mat &top, const Mat &bottom) {
  Mat M(top.rows() + bottom.rows(), top.cols());
  M << top, bottom;
  return M;
}

} // namespace detail

/// Actor, twin critics, their targets and optimizers for one variant.
class Trainer {
public:
  Trainer(const Env &env, Variant variant, Family family, TrainerConfig cfg, std::uint64_t seed)
      : space_(env.space()), d_(env.action_dim()), obs_dim_(env.obs_dim()), variant_(variant), family_(family),
        traits_(traits(variant, family)), cfg_(std::move(cfg)), rng_init_(derive_seed(seed, 0)),
        rng_explore_(derive_seed(seed, 1)), rng_train_(derive_seed(seed, 3)) {
    if (d_ > kMaxActionDim) throw std::invalid_argument("Trainer: at most 8 action dimensions");
    const int out = sac() ? 2 * d_ : d_;
    actor_ = Mlp::make(obs_dim_, cfg_.hidden, out, Activation::ReLU, Activation::Identity);
    actor_.init(rng_init_);
    for (auto &q : critic_) {
      q = Mlp::make(obs_dim_ + d_, cfg_.hidden, 1, Activation::ReLU, Activation::Identity);
      q.init(rng_init_);
    }
    actor_target_ = actor_;
    critic_target_ = critic_;
    const double lr = sac() ? cfg_.sac_lr : cfg_.td3_lr;
    actor_opt_ = AdamState(actor_.num_params(), lr);
    for (int j = 0; j < 2; ++j) critic_opt_[j] = AdamState(critic_[j].num_params(), lr);
    log_alpha_ = Vec::Constant(1, std::log(cfg_.init_entropy_coef));
    alpha_opt_ = AdamState(1, lr);
  }

  Variant variant() const { return variant_; }
  Family family() const { return family_; }
  const VariantTraits &variant_traits() const { return traits_; }
  const TrainerConfig &config() const { return cfg_; }
  bool sac() const { return traits_.algo == BaseAlgo::SAC; }
  int action_dim() const { return d_; }
  const Mlp &actor() const { return actor_; }
  Mlp &actor() { return actor_; }
  const Mlp &critic(int j) const { return critic_[static_cast<std::size_t>(j)]; }
  Mlp &critic(int j) { return critic_[static_cast<std::size_t>(j)]; }
  const Mlp &actor_target() const { return actor_target_; }
  const Mlp &critic_target(int j) const { return critic_target_[static_cast<std::size_t>(j)]; }
  double entropy_coef() const { return std::exp(log_alpha_[0]); }
  void set_entropy_coef(double a) { log_alpha_[0] = std::log(a); }
  long critic_updates() const { return critic_updates_; }
  long actor_updates() const { return actor_updates_; }
  long degenerate_jacobians() const { return degenerate_jacobians_; }

  // -------------------------------------------------------------------------
  // Acting.

  MappingOutput map_action(const Vec &a, const ConstraintInstance &inst, bool want_jacobian) const {
    return apply_mapping(traits_.mapping, a, inst, want_jacobian);
  }

  /// Policy action at a state. Exploration draws from the exploration stream.
  ActResult act(const Vec &obs, const ConstraintInstance &inst, bool explore) {
    if (!explore) return act_deterministic(obs, inst);
    ActResult r;
    if (sac()) {
      const Vec o = forward(actor_, obs);
      const Vec eps = gaussian(rng_explore_, d_);
      auto s = sac_sample<double>(o.head(d_), o.tail(d_), eps, inst);
      r = {s.pre_map, s.executed, s.log_prob};
    } else {
      Vec a = squash_box(Vec(forward(actor_, obs)), space_);
      std::normal_distribution<double> N(0.0, 1.0);
      for (int i = 0; i < d_; ++i) a[i] += cfg_.action_noise * space_.a_max[i] * N(rng_explore_);
      r.pre_map = a.cwiseMax(-space_.a_max).cwiseMin(space_.a_max);
      r.executed = map_action(r.pre_map, inst, false).action;
    }
    check_feasible(r.executed, inst);
    return r;
  }

  /// Noise-free action (TD3 mu(s), SAC mean); touches no random stream.
  ActResult act_deterministic(const Vec &obs, const ConstraintInstance &inst) const {
    ActResult r;
    const Vec o = forward(actor_, obs);
    if (sac()) {
      const Vec mean = o.head(d_);
      r.pre_map = traits_.squash_before_mapping ? squash_box(mean, space_) : mean;
    } else {
      r.pre_map = squash_box(o, space_);
    }
    r.executed = map_action(r.pre_map, inst, false).action;
    check_feasible(r.executed, inst);
    return r;
  }

  /// Warmup action: a uniform box sample sent through the variant's mapping.
  ActResult random_action(const ConstraintInstance &inst) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec a(d_);
    for (int i = 0; i < d_; ++i) a[i] = U(rng_explore_) * space_.a_max[i];
    ActResult r{a, map_action(a, inst, false).action, std::nullopt};
    check_feasible(r.executed, inst);
    return r;
  }

  void check_feasible(const Vec &a, const ConstraintInstance &inst) const {
    if (!contains(inst, a, 1e-6)) {
      std::ostringstream os;
      os << variant_name(variant_) << " on " << family_name(family_) << ": infeasible action ["
         << a.transpose() << "], min slack " << min_slack(inst, a);
      throw FeasibilityViolation(os.str());
    }
  }

  /// Training reward: "+" variants subtract the violation of the suggestion.
  double apply_penalty(double reward, const Vec &pre_map, const ConstraintInstance &inst) const {
    if (!traits_.penalty || cfg_.penalty_mode != PenaltyMode::Reward) return reward;
    return reward - violation_penalty(inst, pre_map);
  }

  // -------------------------------------------------------------------------
  // SAC sampling.

  /// Reparametrized sample u = mean + exp(log_std) * eps pushed through the
  /// variant's pipeline, with its log-density after the mapping.
  template <class T>
  SacSample<T> sac_sample(const VecT<T> &mean, const VecT<T> &raw_log_std, const Vec &eps,
                          const ConstraintInstance &inst) const {
    GaussianHeadT<T> h{mean, raw_log_std};
    for (int i = 0; i < d_; ++i) {
      const double v = scalar::value(raw_log_std[i]);
      if (v > kLogStdMax) h.log_std[i] = scalar::constant<T>(kLogStdMax, mean[0]);
      if (v < kLogStdMin) h.log_std[i] = scalar::constant<T>(kLogStdMin, mean[0]);
    }
    VecT<T> u(d_);
    for (int i = 0; i < d_; ++i) {
      using std::exp;
      u[i] = h.mean[i] + exp(h.log_std[i]) * eps[i];
    }
    SacSample<T> s;
    const Vec c = inst.center ? *inst.center : Vec::Zero(d_);
    if (!traits_.squash_before_mapping) {
      // raw Gaussian through the alpha-projection
      s.pre_map = u;
      s.executed = alpha_value<T>(u, inst, c).action;
      s.log_prob = alpha_logprob<T>(h, u, inst, c, cfg_.density).log_prob;
      return s;
    }
    s.pre_map = squash_box<T>(u, space_);
    s.log_prob = squashed_gaussian_logprob<T>(h, u, space_);
    switch (traits_.mapping) {
    case MappingKind::Identity: s.executed = s.pre_map; break;
    case MappingKind::RadialSquashing:
      s.executed = radial_value<T>(s.pre_map, inst, c).action;
      s.log_prob = radial_logprob<T>(s.log_prob, s.pre_map, inst, c);
      break;
    case MappingKind::AlphaProjection: s.executed = alpha_value<T>(s.pre_map, inst, c).action; break;
    case MappingKind::ClosestPoint: {
      Vec pv = s.pre_map.unaryExpr([](const T &x) { return scalar::value(x); });
      const Vec p = project(pv, inst).point;
      s.executed = VecT<T>(d_);
      for (int i = 0; i < d_; ++i) s.executed[i] = scalar::constant<T>(p[i], mean[0]);
      break;
    }
    }
    return s;
  }

  // -------------------------------------------------------------------------
  // Updates.

  struct CriticStats {
    double loss = 0.0;
    Vec targets;
  };

  /// Clipped double-Q regression toward r + gamma (1 - terminal) min_j Q'_j(s', a').
  CriticStats critic_update(const std::vector<const Transition *> &batch) {
    if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    const Vec y = td_targets(batch);
    Mat X(obs_dim_ + d_, B);
    for (Eigen::Index i = 0; i < B; ++i) X.col(i) << batch[i]->obs, critic_action(*batch[i]);
    CriticStats st;
    st.targets = y;
    for (int j = 0; j < 2; ++j) {
      Tape tape;
      const Mat q = forward(critic_[j], X, &tape);
      const Vec err = q.row(0).transpose() - y;
      st.loss += 0.5 * err.squaredNorm() / static_cast<double>(B);
      Vec g = Vec::Zero(critic_[j].num_params());
      backward(critic_[j], tape, Mat(err.transpose() / static_cast<double>(B)), g);
      adam_step(critic_[j].params, g, critic_opt_[j], cfg_.max_grad_norm);
    }
    ++critic_updates_;
    return st;
  }

  /// TD targets for a batch; draws target-smoothing or SAC noise from the
  /// training stream.
  Vec td_targets(const std::vector<const Transition *> &batch) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    Mat Xn(obs_dim_, B);
    for (Eigen::Index i = 0; i < B; ++i) Xn.col(i) = batch[i]->next_obs;
    Mat A(d_, B);
    Vec logp = Vec::Zero(B);
    if (sac()) {
      const Mat O = forward(actor_, Xn);
      for (Eigen::Index i = 0; i < B; ++i) {
        const Vec eps = gaussian(rng_train_, d_);
        const auto s = sac_sample<double>(O.col(i).head(d_), O.col(i).tail(d_), eps, *batch[i]->next_inst);
        A.col(i) = traits_.critic_input == CriticInput::PreMap ? s.pre_map : s.executed;
        logp[i] = s.log_prob;
      }
    } else {
      const Mat Z = forward(actor_target_, Xn);
      std::normal_distribution<double> N(0.0, cfg_.target_noise);
      for (Eigen::Index i = 0; i < B; ++i) {
        Vec z = Z.col(i);
        for (int k = 0; k < d_; ++k) z[k] += std::clamp(N(rng_train_), -cfg_.target_noise_clip, cfg_.target_noise_clip);
        Vec a = squash_box(z, space_);
        if (traits_.critic_input == CriticInput::Executed && cfg_.map_target_action)
          a = map_action(a, *batch[i]->next_inst, false).action;
        A.col(i) = a;
      }
    }
    const Mat Xa = detail::stack_rows(Xn, A);
    const Mat q1 = forward(critic_target_[0], Xa), q2 = forward(critic_target_[1], Xa);
    Vec y(B);
    const double alpha = entropy_coef();
    for (Eigen::Index i = 0; i < B; ++i) {
      double next = std::min(q1(0, i), q2(0, i));
      if (sac()) next -= alpha * logp[i];
      y[i] = batch[i]->reward + cfg_.gamma * (batch[i]->terminal ? 0.0 : 1.0) * next;
    }
    return y;
  }

  /// The stored action the critic consumes for this variant.
  const Vec &critic_action(const Transition &t) const {
    return traits_.critic_input == CriticInput::PreMap ? t.pre_map_action : t.executed_action;
  }

  struct ActorStats {
    double loss = 0.0;
    Mat upstream; // dLoss/d(actor output), one column per sample
  };

  /// Adjoint of the actor loss at the actor's output layer, before the
  /// network backward pass. `Z` is the actor output on the batch.
  ActorStats actor_upstream(const std::vector<const Transition *> &batch, const Mat &Z) {
    if (sac()) return sac_actor_upstream(batch, Z);
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double invB = 1.0 / static_cast<double>(B);
    Mat pre(d_, B);
    for (Eigen::Index i = 0; i < B; ++i) pre.col(i) = squash_box(Vec(Z.col(i)), space_);
    Mat Mx(obs_dim_, B);
    for (Eigen::Index i = 0; i < B; ++i) Mx.col(i) = batch[i]->obs;

    ActorStats st;
    Mat up_pre(d_, B);
    if (traits_.gradient == ActorGradient::FrankWolfe) {
      Mat P(d_, B);
      for (Eigen::Index i = 0; i < B; ++i) P.col(i) = project(Vec(pre.col(i)), *batch[i]->inst).point;
      const Mat G = critic_action_gradient(0, Mx, P);
      for (Eigen::Index i = 0; i < B; ++i) {
        const Vec as = fw_reference(P.col(i), G.col(i), *batch[i]->inst);
        const Vec diff = pre.col(i) - as;
        st.loss += diff.squaredNorm() * invB;
        up_pre.col(i) = 2.0 * diff * invB;
      }
    } else {
      Mat A(d_, B);
      std::vector<Mat> J;
      const bool inject = traits_.gradient == ActorGradient::InjectJacobian;
      for (Eigen::Index i = 0; i < B; ++i) {
        if (!inject) {
          A.col(i) = pre.col(i);
          continue;
        }
        const auto m = map_action(pre.col(i), *batch[i]->inst, true);
        A.col(i) = m.action;
        if (m.jacobian) {
          J.push_back(*m.jacobian);
        } else {
          ++degenerate_jacobians_;
          J.push_back(Mat::Zero(d_, d_));
        }
      }
      Tape tape;
      const Mat q = forward(critic_[0], detail::stack_rows(Mx, A), &tape);
      st.loss = -q.sum() * invB;
      Vec scratch = Vec::Zero(critic_[0].num_params());
      Mat gin;
      backward(critic_[0], tape, Mat::Constant(1, B, -invB), scratch, &gin);
      const Mat gA = gin.bottomRows(d_);
      up_pre = inject ? inject_jacobians(gA, J) : gA;
    }
    if (traits_.penalty && cfg_.penalty_mode == PenaltyMode::ActorLoss) {
      for (Eigen::Index i = 0; i < B; ++i) {
        st.loss += cfg_.penalty_scale * violation_penalty(*batch[i]->inst, pre.col(i)) * invB;
        up_pre.col(i) += cfg_.penalty_scale * detail::penalty_gradient(*batch[i]->inst, pre.col(i)) * invB;
      }
    }
    // through a_max * tanh(z)
    st.upstream = Mat(d_, B);
    for (Eigen::Index i = 0; i < B; ++i)
      for (int k = 0; k < d_; ++k) {
        const double t = std::tanh(Z(k, i));
        st.upstream(k, i) = up_pre(k, i) * space_.a_max[k] * (1.0 - t * t);
      }
    return st;
  }

  /// One actor step (TD3: deterministic policy gradient, mapped per variant;
  /// SAC: entropy-regularized reparametrized objective).
  double actor_update(const std::vector<const Transition *> &batch) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    Mat X(obs_dim_, B);
    for (Eigen::Index i = 0; i < B; ++i) X.col(i) = batch[i]->obs;
    Tape tape;
    const Mat Z = forward(actor_, X, &tape);
    auto st = actor_upstream(batch, Z);
    Vec g = Vec::Zero(actor_.num_params());
    backward(actor_, tape, st.upstream, g);
    adam_step(actor_.params, g, actor_opt_, cfg_.max_grad_norm);
    ++actor_updates_;
    return st.loss;
  }

  /// One gradient step with the variant's schedule: critics every step, the
  /// TD3 actor and targets every policy_delay steps, SAC actor, entropy
  /// coefficient and critic targets every step.
  void train_step(ReplayBuffer &buffer) {
    auto idx = buffer.sample(static_cast<std::size_t>(cfg_.batch_size));
    std::vector<const Transition *> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(&buffer[i]);
    critic_update(batch);
    if (sac()) {
      actor_update(batch);
      for (int j = 0; j < 2; ++j) polyak_update(critic_target_[j], critic_[j], cfg_.sac_tau);
    } else if (critic_updates_ % cfg_.policy_delay == 0) {
      actor_update(batch);
      polyak_update(actor_target_, actor_, cfg_.td3_tau);
      for (int j = 0; j < 2; ++j) polyak_update(critic_target_[j], critic_[j], cfg_.td3_tau);
    }
  }

  // -------------------------------------------------------------------------
  // Frank-Wolfe reference actions.

  /// Linear maximizer of g over the feasible set. Sets with an ellipse use
  /// the projection of a far point along g.
  Vec fw_vertex(const Vec &g, const Vec &p, const ConstraintInstance &inst) const {
    if (!inst.ellipse) return solve_lp(g, inst).x;
    const double gn = g.norm();
    if (gn == 0.0) return p;
    return project(Vec(p + 1e3 * space_.a_max.norm() * g / gn), inst).point;
  }

  /// a_s = P(p + fw_lr (c_hat - p)) with p = P(mu) and c_hat maximizing g.
  Vec fw_reference(const Vec &p, const Vec &g, const ConstraintInstance &inst) const {
    const Vec c_hat = fw_vertex(g, p, inst);
    return project(Vec(p + cfg_.fw_lr * (c_hat - p)), inst).point;
  }

  /// Reference action at a state with the current actor and first critic.
  Vec nfwpo_reference(const Vec &obs, const ConstraintInstance &inst) const {
    const Vec mu = squash_box(Vec(forward(actor_, obs)), space_);
    const Vec p = project(mu, inst).point;
    const Mat g = critic_action_gradient(0, Mat(obs), Mat(p));
    return fw_reference(p, g.col(0), inst);
  }

  /// dQ_j/da at each (obs, action) column pair.
  Mat critic_action_gradient(int j, const Mat &obs, const Mat &actions) const {
    Tape tape;
    forward(critic_[static_cast<std::size_t>(j)], detail::stack_rows(obs, actions), &tape);
    Vec scratch = Vec::Zero(critic_[static_cast<std::size_t>(j)].num_params());
    Mat gin;
    backward(critic_[static_cast<std::size_t>(j)], tape, Mat::Ones(1, obs.cols()), scratch, &gin);
    return gin.bottomRows(d_);
  }

  // -------------------------------------------------------------------------
  // Checkpoints.

  nlohmann::json checkpoint() const {
    nlohmann::json j;
    j["variant"] = std::string(variant_name(variant_));
    j["family"] = std::string(family_name(family_));
    j["actor"] = to_json(actor_);
    j["actor_target"] = to_json(actor_target_);
    for (int k = 0; k < 2; ++k) {
      j["critic"].push_back(to_json(critic_[k]));
      j["critic_target"].push_back(to_json(critic_target_[k]));
      j["critic_opt"].push_back(to_json(critic_opt_[k]));
    }
    j["actor_opt"] = to_json(actor_opt_);
    j["log_alpha"] = log_alpha_[0];
    j["alpha_opt"] = to_json(alpha_opt_);
    j["critic_updates"] = critic_updates_;
    j["actor_updates"] = actor_updates_;
    return j;
  }

  void restore(const nlohmann::json &j) {
    if (j.at("variant").get<std::string>() != variant_name(variant_))
      throw std::invalid_argument("restore: checkpoint is for another variant");
    auto load = [](Mlp &dst, const nlohmann::json &src) {
      Mlp m = mlp_from_json(src);
      if (m.widths != dst.widths) throw std::invalid_argument("restore: network shape mismatch");
      dst = std::move(m);
    };
    load(actor_, j.at("actor"));
    load(actor_target_, j.at("actor_target"));
    for (int k = 0; k < 2; ++k) {
      load(critic_[k], j.at("critic").at(k));
      load(critic_target_[k], j.at("critic_target").at(k));
      critic_opt_[k] = adam_from_json(j.at("critic_opt").at(k));
    }
    actor_opt_ = adam_from_json(j.at("actor_opt"));
    log_alpha_[0] = j.at("log_alpha").get<double>();
    alpha_opt_ = adam_from_json(j.at("alpha_opt"));
    critic_updates_ = j.at("critic_updates").get<long>();
    actor_updates_ = j.at("actor_updates").get<long>();
  }

private:
  static Vec gaussian(std::mt19937_64 &rng, int n) {
    std::normal_distribution<double> N(0.0, 1.0);
    Vec e(n);
    for (int i = 0; i < n; ++i) e[i] = N(rng);
    return e;
  }

  double target_entropy() const { return cfg_.target_entropy ? *cfg_.target_entropy : -static_cast<double>(d_); }

  ActorStats sac_actor_upstream(const std::vector<const Transition *> &batch, const Mat &O) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double invB = 1.0 / static_cast<double>(B);
    const int n = 2 * d_;
    const double alpha = entropy_coef();

    std::vector<SacSample<Jet>> samples;
    samples.reserve(static_cast<std::size_t>(B));
    Mat Mx(obs_dim_, B), A(d_, B);
    Vec logp(B);
    for (Eigen::Index i = 0; i < B; ++i) {
      VecT<Jet> mean(d_), ls(d_);
      for (int k = 0; k < d_; ++k) {
        mean[k] = Jet(O(k, i), JetDerivatives::Unit(n, k));
        ls[k] = Jet(O(d_ + k, i), JetDerivatives::Unit(n, d_ + k));
      }
      const Vec eps = gaussian(rng_train_, d_);
      samples.push_back(sac_sample<Jet>(mean, ls, eps, *batch[i]->inst));
      const auto &s = samples.back();
      const VecT<Jet> &a = traits_.critic_input == CriticInput::PreMap ? s.pre_map : s.executed;
      for (int k = 0; k < d_; ++k) A(k, i) = a[k].value();
      Mx.col(i) = batch[i]->obs;
      logp[i] = s.log_prob.value();
    }

    // gradient of min_j Q_j with respect to the critic action
    const Mat X = detail::stack_rows(Mx, A);
    Tape t1, t2;
    const Mat q1 = forward(critic_[0], X, &t1), q2 = forward(critic_[1], X, &t2);
    Mat m1 = Mat::Zero(1, B), m2 = Mat::Zero(1, B);
    ActorStats st;
    for (Eigen::Index i = 0; i < B; ++i) {
      const bool first = q1(0, i) <= q2(0, i);
      (first ? m1 : m2)(0, i) = 1.0;
      st.loss += (alpha * logp[i] - std::min(q1(0, i), q2(0, i))) * invB;
    }
    Vec s1 = Vec::Zero(critic_[0].num_params()), s2 = Vec::Zero(critic_[1].num_params());
    Mat g1, g2;
    backward(critic_[0], t1, m1, s1, &g1);
    backward(critic_[1], t2, m2, s2, &g2);
    const Mat dQ = g1.bottomRows(d_) + g2.bottomRows(d_);

    st.upstream = Mat::Zero(n, B);
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto &s = samples[static_cast<std::size_t>(i)];
      const VecT<Jet> &a = traits_.critic_input == CriticInput::PreMap ? s.pre_map : s.executed;
      Vec g = alpha * s.log_prob.derivatives();
      for (int k = 0; k < d_; ++k)
        if (a[k].derivatives().size() == n) g -= dQ(k, i) * a[k].derivatives();
      st.upstream.col(i) = g * invB;
    }

    if (cfg_.auto_entropy) {
      // d/d log_alpha of -log_alpha * (log_prob + target)
      Vec ga(1);
      ga[0] = -(logp.array() + target_entropy()).mean();
      adam_step(log_alpha_, ga, alpha_opt_);
    }
    return st;
  }

  ActionSpace space_;
  int d_;
  int obs_dim_;
  Variant variant_;
  Family family_;
  VariantTraits traits_;
  TrainerConfig cfg_;
  std::mt19937_64 rng_init_;
  std::mt19937_64 rng_explore_;
  std::mt19937_64 rng_train_;

  Mlp actor_, actor_target_;
  std::array<Mlp, 2> critic_, critic_target_;
  AdamState actor_opt_;
  std::array<AdamState, 2> critic_opt_;
  Vec log_alpha_;
  AdamState alpha_opt_;
  long critic_updates_ = 0;
  long actor_updates_ = 0;
  long degenerate_jacobians_ = 0;
};

} // namespace acrl
