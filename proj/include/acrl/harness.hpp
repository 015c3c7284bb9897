#pragma once

#include "acrl/rl/trainer.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

namespace acrl {

inline constexpr const char *kVersion = "0.1.0";

struct RuntimeConfig {
  nlohmann::json env = {{"name", "pointmass"}, {"dim", 6}};
  Family family = Family::O;
  std::map<std::string, double> constraint_params;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<int> batch_sizes{1, 16, 100};
  int n_steps = 1000;
  int trials = 10;
  int warm_transitions = 5000;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  nlohmann::json env = {{"name", "reacher"}};
  std::vector<Family> families{Family::L2};
  std::map<std::string, double> constraint_params;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::uint64_t> seeds{0};
  long total_steps = 30000;
  long eval_interval = 5000;
  int eval_episodes = 5;
  int final_eval_episodes = 50;
  TrainerConfig hyper;
  RuntimeConfig runtime;
};

// ---------------------------------------------------------------------------
// Config (de)serialization.

inline nlohmann::json to_json(const RuntimeConfig &r) {
  std::vector<std::string> vs;
  for (auto v : r.variants) vs.emplace_back(variant_name(v));
  return {{"env", make_env(r.env)->params()},
          {"family", std::string(family_name(r.family))},
          {"constraint_params", r.constraint_params},
          {"variants", vs},
          {"batch_sizes", r.batch_sizes},
          {"n_steps", r.n_steps},
          {"trials", r.trials},
          {"warm_transitions", r.warm_transitions},
          {"seed", r.seed}};
}

/// Canonical form: every field present, defaults filled in.
inline nlohmann::json to_json(const ExperimentConfig &c) {
  std::vector<std::string> fs, vs;
  for (auto f : c.families) fs.emplace_back(family_name(f));
  for (auto v : c.variants) vs.emplace_back(variant_name(v));
  return {{"env", make_env(c.env)->params()},
          {"families", fs},
          {"constraint_params", c.constraint_params},
          {"variants", vs},
          {"seeds", c.seeds},
          {"total_steps", c.total_steps},
          {"eval_interval", c.eval_interval},
          {"eval_episodes", c.eval_episodes},
          {"final_eval_episodes", c.final_eval_episodes},
          {"hyperparameters", to_json(c.hyper)},
          {"runtime", to_json(c.runtime)}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json &j, std::initializer_list<const char *> keys, const char *where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char *k : keys) ok |= it.key() == k;
    if (!ok) throw std::invalid_argument(std::string("unknown key in ") + where + ": " + it.key());
  }
}

inline std::vector<Variant> parse_variants(const nlohmann::json &j) {
  std::vector<Variant> out;
  for (const auto &s : j) out.push_back(parse_variant(s.get<std::string>()));
  if (out.empty()) throw std::invalid_argument("config: variant list is empty");
  return out;
}

} // namespace detail

inline RuntimeConfig runtime_config_from_json(const nlohmann::json &j) {
  detail::reject_unknown(j, {"env", "family", "constraint_params", "variants", "batch_sizes", "n_steps", "trials",
                             "warm_transitions", "seed"},
                         "runtime");
  RuntimeConfig r;
  if (j.contains("env")) r.env = j["env"];
  make_env(r.env);
  if (j.contains("family")) r.family = parse_family(j["family"].get<std::string>());
  r.constraint_params = j.value("constraint_params", r.constraint_params);
  if (j.contains("variants")) r.variants = detail::parse_variants(j["variants"]);
  r.batch_sizes = j.value("batch_sizes", r.batch_sizes);
  r.n_steps = j.value("n_steps", r.n_steps);
  r.trials = j.value("trials", r.trials);
  r.warm_transitions = j.value("warm_transitions", r.warm_transitions);
  r.seed = j.value("seed", r.seed);
  if (r.n_steps <= 0 || r.trials <= 0 || r.batch_sizes.empty())
    throw std::invalid_argument("runtime: n_steps, trials and batch_sizes must be positive");
  return r;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json &j) {
  detail::reject_unknown(j, {"env", "families", "family", "constraint_params", "variants", "seeds", "total_steps",
                             "eval_interval", "eval_episodes", "final_eval_episodes", "hyperparameters", "runtime"},
                         "config");
  ExperimentConfig c;
  if (j.contains("env")) c.env = j["env"];
  make_env(c.env);
  if (j.contains("family")) c.families = {parse_family(j["family"].get<std::string>())};
  if (j.contains("families")) {
    c.families.clear();
    for (const auto &s : j["families"]) c.families.push_back(parse_family(s.get<std::string>()));
  }
  c.constraint_params = j.value("constraint_params", c.constraint_params);
  if (j.contains("variants")) c.variants = detail::parse_variants(j["variants"]);
  c.seeds = j.value("seeds", c.seeds);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.final_eval_episodes = j.value("final_eval_episodes", c.final_eval_episodes);
  if (j.contains("hyperparameters")) c.hyper = trainer_config_from_json(j["hyperparameters"]);
  if (j.contains("runtime")) c.runtime = runtime_config_from_json(j["runtime"]);

  if (c.families.empty() || c.seeds.empty()) throw std::invalid_argument("config: families and seeds must be nonempty");
  auto sorted = c.seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("config: seeds must be distinct");
  if (c.total_steps <= 0 || c.eval_interval <= 0 || c.eval_episodes <= 0 || c.final_eval_episodes <= 0)
    throw std::invalid_argument("config: step and episode counts must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path);
  return experiment_config_from_json(nlohmann::json::parse(f, nullptr, true, true));
}

/// FNV-1a over the canonical serialization.
inline std::string config_hash(const ExperimentConfig &c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Runs.

struct RunRecord {
  Family family{};
  Variant variant{};
  std::uint64_t seed = 0;
  std::vector<long> eval_steps;
  std::vector<double> eval_returns;
  long best_step = 0;
  double best_eval = 0.0;
  double final_mean = 0.0;
  double final_stderr = 0.0;
  long violations = 0;
  long env_clips = 0;
  long degenerate_jacobians = 0;
  long gradient_steps = 0;
  double seconds_per_gradient_step = 0.0;
};

inline double mean_of(const std::vector<double> &x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Sample standard error; zero for fewer than two values.
inline double stderr_of(const std::vector<double> &x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1)) / std::sqrt(static_cast<double>(x.size()));
}

/// Seed of the k-th evaluation episode; shared by every eval point of a run.
inline std::uint64_t eval_episode_seed(std::uint64_t seed, int k) {
  return derive_seed(derive_seed(seed, 5), static_cast<std::uint64_t>(k));
}

/// Undiscounted, unpenalized returns of the deterministic policy.
inline std::vector<double> evaluate(const Trainer &trainer, const ConstrainedEnv &ce, std::uint64_t seed,
                                    int episodes) {
  std::vector<double> out;
  for (int k = 0; k < episodes; ++k) {
    Vec s = ce.env().reset(eval_episode_seed(seed, k));
    double ret = 0.0;
    for (bool done = false; !done;) {
      const auto inst = ce.instance(s);
      const auto a = trainer.act_deterministic(ce.env().observe(s), inst);
      const auto r = ce.env().step(s, a.executed);
      ret += r.reward;
      done = r.done;
      s = r.next;
    }
    out.push_back(ret);
  }
  return out;
}

/// Returns of uniform box actions projected onto the feasible set.
inline std::vector<double> evaluate_random_policy(const ConstrainedEnv &ce, std::uint64_t seed, int episodes) {
  std::mt19937_64 rng(derive_seed(seed, 6));
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto &space = ce.env().space();
  std::vector<double> out;
  for (int k = 0; k < episodes; ++k) {
    Vec s = ce.env().reset(eval_episode_seed(seed, k));
    double ret = 0.0;
    for (bool done = false; !done;) {
      const auto inst = ce.instance(s);
      Vec a(space.dim());
      for (int i = 0; i < a.size(); ++i) a[i] = U(rng) * space.a_max[i];
      const auto r = ce.step_projected(s, a, inst).result;
      ret += r.reward;
      done = r.done;
      s = r.next;
    }
    out.push_back(ret);
  }
  return out;
}

/// Optional per-step trajectory sink: (step, state, pre-map action, executed action, reward).
using TrajectorySink = std::function<void(long, const Vec &, const Vec &, const Vec &, double)>;

/// Trains one (variant, family, seed) and applies the evaluation protocol:
/// periodic deterministic evaluation, best-checkpoint selection and a final
/// re-evaluation of the best actor.
inline RunRecord run_single(const ExperimentConfig &cfg, Variant variant, Family family, std::uint64_t seed,
                            const TrajectorySink &sink = {}) {
  const auto env = make_env(cfg.env);
  const ConstrainedEnv ce(env, {family, cfg.constraint_params});
  Trainer trainer(*env, variant, family, cfg.hyper, seed);
  ReplayBuffer buffer(cfg.hyper.buffer_size, derive_seed(seed, 2));

  RunRecord rec;
  rec.family = family;
  rec.variant = variant;
  rec.seed = seed;
  rec.best_eval = -std::numeric_limits<double>::infinity();
  Vec best_actor = trainer.actor().params;

  std::uint64_t episode = 0;
  auto reset_seed = [&] { return derive_seed(derive_seed(seed, 4), episode++); };
  Vec state = env->reset(reset_seed());
  auto inst = std::make_shared<const ConstraintInstance>(ce.instance(state));
  double grad_seconds = 0.0;

  for (long t = 1; t <= cfg.total_steps; ++t) {
    const Vec obs = env->observe(state);
    const auto a = t <= cfg.hyper.warmup ? trainer.random_action(*inst) : trainer.act(obs, *inst, true);
    const auto r = env->step(state, a.executed);
    if (sink) sink(t, state, a.pre_map, a.executed, r.reward);
    auto next_inst = std::make_shared<const ConstraintInstance>(ce.instance(r.next));
    buffer.add({obs, a.pre_map, a.executed, trainer.apply_penalty(r.reward, a.pre_map, *inst), env->observe(r.next),
                false, inst, next_inst});
    if (r.done) {
      state = env->reset(reset_seed());
      inst = std::make_shared<const ConstraintInstance>(ce.instance(state));
    } else {
      state = r.next;
      inst = std::move(next_inst);
    }

    if (t > cfg.hyper.warmup) {
      const auto t0 = std::chrono::steady_clock::now();
      trainer.train_step(buffer);
      grad_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ++rec.gradient_steps;
    }

    if (t % cfg.eval_interval == 0) {
      const double m = mean_of(evaluate(trainer, ce, seed, cfg.eval_episodes));
      rec.eval_steps.push_back(t);
      rec.eval_returns.push_back(m);
      if (m > rec.best_eval) {
        rec.best_eval = m;
        rec.best_step = t;
        best_actor = trainer.actor().params;
      }
    }
  }
  if (rec.eval_steps.empty()) best_actor = trainer.actor().params;

  const Vec last = trainer.actor().params;
  trainer.actor().params = best_actor;
  const auto final_returns = evaluate(trainer, ce, derive_seed(seed, 7), cfg.final_eval_episodes);
  trainer.actor().params = last;
  rec.final_mean = mean_of(final_returns);
  rec.final_stderr = stderr_of(final_returns);
  rec.env_clips = env->clip_count();
  rec.degenerate_jacobians = trainer.degenerate_jacobians();
  rec.seconds_per_gradient_step = rec.gradient_steps ? grad_seconds / static_cast<double>(rec.gradient_steps) : 0.0;
  return rec;
}

/// Runs every (family, variant, seed) with at most `jobs` concurrent runs.
/// Records come back in config order regardless of scheduling. The first
/// failure (a feasibility violation included) is rethrown after all workers stop.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig &cfg, int jobs = 1) {
  struct Task {
    Family family;
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto f : cfg.families)
    for (auto v : cfg.variants)
      for (auto s : cfg.seeds) tasks.push_back({f, v, s});
  std::vector<RunRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= tasks.size() || failed) return;
      try {
        out[i] = run_single(cfg, tasks[i].variant, tasks[i].family, tasks[i].seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto &th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------------------
// Runtime.

struct RuntimeRecord {
  Variant variant{};
  int batch_size = 0;
  double seconds_mean = 0.0; // wall time of n_steps gradient steps
  double seconds_std = 0.0;
  std::vector<double> trials;
};

/// Times n_steps gradient steps on a pre-filled buffer, excluding
/// environment stepping, over `trials` seeded trainers.
inline RuntimeRecord measure_runtime(const RuntimeConfig &rc, const TrainerConfig &hyper, Variant variant,
                                     int batch_size) {
  const auto env = make_env(rc.env);
  const ConstrainedEnv ce(env, {rc.family, rc.constraint_params});
  TrainerConfig h = hyper;
  h.batch_size = batch_size;
  RuntimeRecord rec;
  rec.variant = variant;
  rec.batch_size = batch_size;
  for (int k = 0; k < rc.trials; ++k) {
    const std::uint64_t seed = derive_seed(rc.seed, static_cast<std::uint64_t>(k));
    Trainer trainer(*env, variant, rc.family, h, seed);
    ReplayBuffer buffer(static_cast<std::size_t>(rc.warm_transitions), derive_seed(seed, 2));
    std::uint64_t episode = 0;
    Vec s = env->reset(derive_seed(seed, 100 + episode++));
    auto inst = std::make_shared<const ConstraintInstance>(ce.instance(s));
    for (int t = 0; t < rc.warm_transitions; ++t) {
      const auto a = trainer.random_action(*inst);
      const auto r = env->step(s, a.executed);
      auto next_inst = std::make_shared<const ConstraintInstance>(ce.instance(r.next));
      buffer.add({env->observe(s), a.pre_map, a.executed, r.reward, env->observe(r.next), false, inst, next_inst});
      if (r.done) {
        s = env->reset(derive_seed(seed, 100 + episode++));
        inst = std::make_shared<const ConstraintInstance>(ce.instance(s));
      } else {
        s = r.next;
        inst = std::move(next_inst);
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < rc.n_steps; ++i) trainer.train_step(buffer);
    rec.trials.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  rec.seconds_mean = mean_of(rec.trials);
  rec.seconds_std = stderr_of(rec.trials) * std::sqrt(static_cast<double>(rec.trials.size()));
  return rec;
}

inline std::vector<RuntimeRecord> run_runtime_bench(const ExperimentConfig &cfg) {
  std::vector<RuntimeRecord> out;
  for (auto v : cfg.runtime.variants)
    for (int b : cfg.runtime.batch_sizes) out.push_back(measure_runtime(cfg.runtime, cfg.hyper, v, b));
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string rewards_csv(const std::vector<RunRecord> &recs) {
  std::string s = "family,variant,seed,final_mean,stderr\n";
  std::vector<std::pair<Family, Variant>> groups;
  for (const auto &r : recs) {
    s += std::string(family_name(r.family)) + "," + std::string(variant_name(r.variant)) + "," +
         std::to_string(r.seed) + "," + fmt(r.final_mean) + "," + fmt(r.final_stderr) + "\n";
    if (std::find(groups.begin(), groups.end(), std::make_pair(r.family, r.variant)) == groups.end())
      groups.emplace_back(r.family, r.variant);
  }
  for (const auto &[f, v] : groups) {
    std::vector<double> means;
    for (const auto &r : recs)
      if (r.family == f && r.variant == v) means.push_back(r.final_mean);
    s += std::string(family_name(f)) + "," + std::string(variant_name(v)) + ",all," + fmt(mean_of(means)) + "," +
         fmt(stderr_of(means)) + "\n";
  }
  return s;
}

inline std::string learning_curves_csv(const std::vector<RunRecord> &recs) {
  std::string s = "family,variant,seed,step,mean_return\n";
  for (const auto &r : recs)
    for (std::size_t i = 0; i < r.eval_steps.size(); ++i)
      s += std::string(family_name(r.family)) + "," + std::string(variant_name(r.variant)) + "," +
           std::to_string(r.seed) + "," + std::to_string(r.eval_steps[i]) + "," + fmt(r.eval_returns[i]) + "\n";
  return s;
}

inline std::string runtime_csv(const std::vector<RuntimeRecord> &recs) {
  std::string s = "variant,batch_size,seconds_mean,seconds_std\n";
  for (const auto &r : recs)
    s += std::string(variant_name(r.variant)) + "," + std::to_string(r.batch_size) + "," + fmt(r.seconds_mean) + "," +
         fmt(r.seconds_std) + "\n";
  return s;
}

inline void write_file(const std::filesystem::path &p, const std::string &content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << content;
  if (!f) throw Error("write failed: " + p.string());
}

inline nlohmann::json manifest(const ExperimentConfig &cfg, const std::vector<RunRecord> &recs) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto &r : recs)
    runs.push_back({{"family", std::string(family_name(r.family))},
                    {"variant", std::string(variant_name(r.variant))},
                    {"seed", r.seed},
                    {"violations", r.violations},
                    {"env_clips", r.env_clips},
                    {"degenerate_jacobians", r.degenerate_jacobians},
                    {"best_step", r.best_step},
                    {"gradient_steps", r.gradient_steps},
                    {"seconds_per_gradient_step", r.seconds_per_gradient_step}});
  return {{"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"versions",
           {{"acrl", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}}},
          {"runs", runs}};
}

inline nlohmann::json to_json(const RunRecord &r) {
  return {{"family", std::string(family_name(r.family))},
          {"variant", std::string(variant_name(r.variant))},
          {"seed", r.seed},
          {"eval_steps", r.eval_steps},
          {"eval_returns", r.eval_returns},
          {"best_step", r.best_step},
          {"best_eval", r.best_eval},
          {"final_mean", r.final_mean},
          {"final_stderr", r.final_stderr},
          {"violations", r.violations},
          {"env_clips", r.env_clips},
          {"degenerate_jacobians", r.degenerate_jacobians},
          {"gradient_steps", r.gradient_steps},
          {"seconds_per_gradient_step", r.seconds_per_gradient_step}};
}

inline RunRecord run_record_from_json(const nlohmann::json &j) {
  RunRecord r;
  r.family = parse_family(j.at("family").get<std::string>());
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.eval_steps = j.at("eval_steps").get<std::vector<long>>();
  r.eval_returns = j.at("eval_returns").get<std::vector<double>>();
  r.best_step = j.at("best_step").get<long>();
  r.best_eval = j.at("best_eval").get<double>();
  r.final_mean = j.at("final_mean").get<double>();
  r.final_stderr = j.at("final_stderr").get<double>();
  r.violations = j.at("violations").get<long>();
  r.env_clips = j.at("env_clips").get<long>();
  r.degenerate_jacobians = j.at("degenerate_jacobians").get<long>();
  r.gradient_steps = j.at("gradient_steps").get<long>();
  r.seconds_per_gradient_step = j.at("seconds_per_gradient_step").get<double>();
  return r;
}

inline nlohmann::json to_json(const RuntimeRecord &r) {
  return {{"variant", std::string(variant_name(r.variant))},
          {"batch_size", r.batch_size},
          {"seconds_mean", r.seconds_mean},
          {"seconds_std", r.seconds_std},
          {"trials", r.trials}};
}

inline RuntimeRecord runtime_record_from_json(const nlohmann::json &j) {
  RuntimeRecord r;
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.batch_size = j.at("batch_size").get<int>();
  r.seconds_mean = j.at("seconds_mean").get<double>();
  r.seconds_std = j.at("seconds_std").get<double>();
  r.trials = j.at("trials").get<std::vector<double>>();
  return r;
}

/// Family x variant table of mean final returns with standard errors.
inline std::string summary_table(const std::vector<RunRecord> &recs) {
  std::vector<Family> fams;
  std::vector<Variant> vars;
  for (const auto &r : recs) {
    if (std::find(fams.begin(), fams.end(), r.family) == fams.end()) fams.push_back(r.family);
    if (std::find(vars.begin(), vars.end(), r.variant) == vars.end()) vars.push_back(r.variant);
  }
  std::string s;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s", "family");
  s += buf;
  for (auto v : vars) {
    std::snprintf(buf, sizeof buf, " %17s", std::string(variant_name(v)).c_str());
    s += buf;
  }
  s += "\n";
  for (auto f : fams) {
    std::snprintf(buf, sizeof buf, "%-8s", std::string(family_name(f)).c_str());
    s += buf;
    for (auto v : vars) {
      std::vector<double> m;
      for (const auto &r : recs)
        if (r.family == f && r.variant == v) m.push_back(r.final_mean);
      if (m.empty()) std::snprintf(buf, sizeof buf, " %17s", "-");
      else std::snprintf(buf, sizeof buf, " %9.3f+-%6.3f", mean_of(m), stderr_of(m));
      s += buf;
    }
    s += "\n";
  }
  return s;
}

/// Writes rewards.csv, learning_curves.csv, records.json and manifest.json
/// (runtime.csv and runtime_records.json when runtime records are given).
inline void emit_report(const std::filesystem::path &dir, const ExperimentConfig &cfg,
                        const std::vector<RunRecord> &recs, const std::vector<RuntimeRecord> &runtime = {}) {
  if (recs.empty() && runtime.empty()) throw std::invalid_argument("emit_report: no records");
  std::filesystem::create_directories(dir);
  if (!recs.empty()) {
    write_file(dir / "rewards.csv", rewards_csv(recs));
    write_file(dir / "learning_curves.csv", learning_curves_csv(recs));
    nlohmann::json all = nlohmann::json::array();
    for (const auto &r : recs) all.push_back(to_json(r));
    write_file(dir / "records.json", all.dump() + "\n");
  }
  if (!runtime.empty()) {
    write_file(dir / "runtime.csv", runtime_csv(runtime));
    nlohmann::json all = nlohmann::json::array();
    for (const auto &r : runtime) all.push_back(to_json(r));
    write_file(dir / "runtime_records.json", all.dump() + "\n");
  }
  write_file(dir / "manifest.json", manifest(cfg, recs).dump(2) + "\n");
}

} // namespace acrl
