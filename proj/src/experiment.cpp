#include "amtl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "amtl/error.hpp"
#include "amtl/eval.hpp"
#include "amtl/ingest.hpp"

namespace amtl {

using nlohmann::json;

std::string to_string(RunMode mode) {
  switch (mode) {
  case RunMode::Known:
    return "known";
  case RunMode::Active:
    return "active";
  case RunMode::Uniform:
    return "uniform";
  case RunMode::Sweep:
    return "sweep";
  case RunMode::RealSuite:
    return "real-suite";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string &s) {
  for (RunMode m : {RunMode::Known, RunMode::Active, RunMode::Uniform, RunMode::Sweep, RunMode::RealSuite})
    if (to_string(m) == s)
      return m;
  throw ConfigError("mode: unknown value '" + s + "'");
}

std::string to_string(EnvironmentKind kind) { return kind == EnvironmentKind::Sparse ? "sparse" : "random"; }

EnvironmentKind environment_from_string(const std::string &s) {
  if (s == "sparse")
    return EnvironmentKind::Sparse;
  if (s == "random")
    return EnvironmentKind::Random;
  throw ConfigError("environment: unknown value '" + s + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::set<std::string> &known_keys() {
  static const std::set<std::string> keys = {
      "mode", "sweep_algorithm", "environment", "d", "K", "M", "sigma", "head_scale", "n_target", "data_root",
      "targets", "max_rows_per_corruption", "max_test_rows", "schedule", "epsilon_base", "start_index",
      "num_epochs", "beta", "active_floor", "reuse", "sigma_lower", "target_accuracy", "delta", "hard_cap",
      "stop_at_excess_risk", "N_total", "budgets", "known_floor", "compare_uniform", "uniform_growth",
      "max_altmin_iters", "rel_objective_tol", "pinv_rcond", "init_mode", "solver_seed",
      "direct_bstep_max_params", "cg_max_iters", "cg_rel_tol", "seeds", "jobs", "out_dir"};
  return keys;
}

template <typename T> void read_field(const json &j, const char *key, T &out) {
  const auto it = j.find(key);
  if (it == j.end())
    return;
  try {
    out = it->get<T>();
  } catch (const json::exception &) {
    throw ConfigError(std::string("field '") + key + "': wrong type (" + it->dump() + ")");
  }
}

template <typename T> void read_optional(const json &j, const char *key, std::optional<T> &out) {
  const auto it = j.find(key);
  if (it == j.end())
    return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  T value{};
  read_field(j, key, value);
  out = value;
}

template <typename T> json optional_json(const std::optional<T> &v) { return v ? json(*v) : json(nullptr); }

std::string read_string(const json &j, const char *key, const std::string &fallback) {
  std::string s = fallback;
  read_field(j, key, s);
  return s;
}

double preset_epsilon_base(ScheduleMode mode) { return mode == ScheduleMode::Theory ? 2.0 : 1.5; }

} // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string &msg) { throw ConfigError(msg); };
  if (mode == RunMode::Sweep &&
      !(sweep_algorithm == RunMode::Known || sweep_algorithm == RunMode::Active || sweep_algorithm == RunMode::Uniform))
    fail("sweep_algorithm must be known, active or uniform");
  if (mode == RunMode::RealSuite) {
    if (data_root.empty())
      fail("data_root is required for real-suite mode");
    if (targets.empty())
      fail("targets must list at least one corruption:digit task");
    for (const auto &t : targets)
      TaskSpec::parse(t);
    if (K < 1 || K > kImagePixels)
      fail("K must lie in [1, 784] for real-suite mode (K=" + std::to_string(K) + ")");
  } else {
    ProblemDims{d, K, M}.validate();
    if (environment == EnvironmentKind::Sparse && K < 2)
      fail("K must be at least 2 for the sparse environment (K=" + std::to_string(K) + ")");
  }
  if (!(sigma >= 0.0))
    fail("sigma must be nonnegative");
  if (!(head_scale > 0.0))
    fail("head_scale must be positive");
  if (n_target < 1)
    fail("n_target must be positive");
  if (max_rows_per_corruption < 0 || max_test_rows < 0)
    fail("max_rows_per_corruption and max_test_rows must be nonnegative");
  if (schedule != ScheduleMode::Custom && epsilon_base != preset_epsilon_base(schedule))
    fail("epsilon_base: the " + to_string(schedule) + " preset fixes it to " +
         std::to_string(preset_epsilon_base(schedule)) + "; use schedule=custom to change it");
  if (!(epsilon_base > 1.0))
    fail("epsilon_base must exceed 1");
  if (start_index < 1)
    fail("start_index must be at least 1");
  if (num_epochs < 1)
    fail("num_epochs must be at least 1");
  if (beta && !(*beta > 0.0))
    fail("beta must be positive");
  if (active_floor && !(*active_floor >= 1.0))
    fail("active_floor must be at least 1");
  if (sigma_lower && !(*sigma_lower > 0.0 && *sigma_lower <= 1.0))
    fail("sigma_lower must lie in (0, 1]");
  if (!(target_accuracy > 0.0 && target_accuracy < 1.0))
    fail("target_accuracy must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0))
    fail("delta must lie in (0, 1)");
  if (hard_cap < 1)
    fail("hard_cap must be positive");
  if (N_total < 1)
    fail("N_total must be positive");
  for (auto b : budgets)
    if (b < 1)
      fail("budgets must be positive");
  if (known_floor && !(*known_floor >= 1.0))
    fail("known_floor must be at least 1");
  if (!(uniform_growth > 1.0))
    fail("uniform_growth must exceed 1");
  if (seeds.empty())
    fail("seeds must not be empty");
  if (jobs < 1)
    fail("jobs must be at least 1");
  if (out_dir.empty())
    fail("out_dir must not be empty");
  solver.validate();
}

ExperimentConfig config_from_json(const json &j) {
  if (!j.is_object())
    throw ConfigError("configuration must be a JSON object");
  for (const auto &item : j.items())
    if (!known_keys().contains(item.key()))
      throw ConfigError("unknown configuration key '" + item.key() + "'");

  ExperimentConfig c;
  c.mode = run_mode_from_string(read_string(j, "mode", to_string(c.mode)));
  // Real-data runs default to the image-suite protocol.
  if (c.mode == RunMode::RealSuite) {
    c.K = 50;
    c.n_target = 500;
  }
  c.sweep_algorithm = run_mode_from_string(read_string(j, "sweep_algorithm", to_string(c.sweep_algorithm)));
  c.environment = environment_from_string(read_string(j, "environment", to_string(c.environment)));
  read_field(j, "d", c.d);
  read_field(j, "K", c.K);
  read_field(j, "M", c.M);
  read_field(j, "sigma", c.sigma);
  read_field(j, "head_scale", c.head_scale);
  read_field(j, "n_target", c.n_target);
  read_field(j, "data_root", c.data_root);
  read_field(j, "targets", c.targets);
  read_field(j, "max_rows_per_corruption", c.max_rows_per_corruption);
  read_field(j, "max_test_rows", c.max_test_rows);
  c.schedule = schedule_mode_from_string(read_string(j, "schedule", to_string(c.schedule)));
  c.epsilon_base = preset_epsilon_base(c.schedule);
  read_field(j, "epsilon_base", c.epsilon_base);
  read_field(j, "start_index", c.start_index);
  read_field(j, "num_epochs", c.num_epochs);
  read_optional(j, "beta", c.beta);
  read_optional(j, "active_floor", c.active_floor);
  read_field(j, "reuse", c.reuse);
  read_optional(j, "sigma_lower", c.sigma_lower);
  read_field(j, "target_accuracy", c.target_accuracy);
  read_field(j, "delta", c.delta);
  read_field(j, "hard_cap", c.hard_cap);
  read_optional(j, "stop_at_excess_risk", c.stop_at_excess_risk);
  read_field(j, "N_total", c.N_total);
  read_field(j, "budgets", c.budgets);
  read_optional(j, "known_floor", c.known_floor);
  read_field(j, "compare_uniform", c.compare_uniform);
  read_field(j, "uniform_growth", c.uniform_growth);
  read_field(j, "max_altmin_iters", c.solver.max_altmin_iters);
  read_field(j, "rel_objective_tol", c.solver.rel_objective_tol);
  read_optional(j, "pinv_rcond", c.solver.pinv_rcond);
  c.solver.init_mode = init_mode_from_string(read_string(j, "init_mode", to_string(c.solver.init_mode)));
  read_field(j, "solver_seed", c.solver.seed);
  read_field(j, "direct_bstep_max_params", c.solver.direct_bstep_max_params);
  read_field(j, "cg_max_iters", c.solver.cg_max_iters);
  read_field(j, "cg_rel_tol", c.solver.cg_rel_tol);
  if (const auto it = j.find("seeds"); it != j.end() && it->is_number_integer()) {
    if (it->get<std::int64_t>() < 0 && !it->is_number_unsigned())
      throw ConfigError("field 'seeds': seeds must be nonnegative");
    c.seeds = {it->get<std::uint64_t>()};
  }
  else
    read_field(j, "seeds", c.seeds);
  read_field(j, "jobs", c.jobs);
  read_field(j, "out_dir", c.out_dir);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig &c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["sweep_algorithm"] = to_string(c.sweep_algorithm);
  j["environment"] = to_string(c.environment);
  j["d"] = c.d;
  j["K"] = c.K;
  j["M"] = c.M;
  j["sigma"] = c.sigma;
  j["head_scale"] = c.head_scale;
  j["n_target"] = c.n_target;
  j["data_root"] = c.data_root;
  j["targets"] = c.targets;
  j["max_rows_per_corruption"] = c.max_rows_per_corruption;
  j["max_test_rows"] = c.max_test_rows;
  j["schedule"] = to_string(c.schedule);
  j["epsilon_base"] = c.epsilon_base;
  j["start_index"] = c.start_index;
  j["num_epochs"] = c.num_epochs;
  j["beta"] = optional_json(c.beta);
  j["active_floor"] = optional_json(c.active_floor);
  j["reuse"] = c.reuse;
  j["sigma_lower"] = optional_json(c.sigma_lower);
  j["target_accuracy"] = c.target_accuracy;
  j["delta"] = c.delta;
  j["hard_cap"] = c.hard_cap;
  j["stop_at_excess_risk"] = optional_json(c.stop_at_excess_risk);
  j["N_total"] = c.N_total;
  j["budgets"] = c.budgets;
  j["known_floor"] = optional_json(c.known_floor);
  j["compare_uniform"] = c.compare_uniform;
  j["uniform_growth"] = c.uniform_growth;
  j["max_altmin_iters"] = c.solver.max_altmin_iters;
  j["rel_objective_tol"] = c.solver.rel_objective_tol;
  j["pinv_rcond"] = optional_json(c.solver.pinv_rcond);
  j["init_mode"] = to_string(c.solver.init_mode);
  j["solver_seed"] = c.solver.seed;
  j["direct_bstep_max_params"] = c.solver.direct_bstep_max_params;
  j["cg_max_iters"] = c.solver.cg_max_iters;
  j["cg_rel_tol"] = c.solver.cg_rel_tol;
  j["seeds"] = c.seeds;
  j["jobs"] = c.jobs;
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path &path, const ExperimentConfig &config) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << config_to_json(config).dump(2) << "\n";
}

void apply_environment_overrides(ExperimentConfig &config) {
  const char *raw = std::getenv("ACTIVE_MTRL_SEED");
  if (raw == nullptr || *raw == '\0')
    return;
  char *end = nullptr;
  const unsigned long long seed = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0')
    throw ConfigError("ACTIVE_MTRL_SEED must be an unsigned integer (got '" + std::string(raw) + "')");
  config.seeds = {static_cast<std::uint64_t>(seed)};
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

struct Job {
  std::uint64_t seed = 0;
  RunMode algorithm = RunMode::Active;
  std::optional<std::int64_t> budget;
  std::optional<TaskSpec> target;
};

std::vector<Job> plan_jobs(const ExperimentConfig &c) {
  std::vector<Job> jobs;
  for (auto seed : c.seeds) {
    switch (c.mode) {
    case RunMode::Known:
    case RunMode::Uniform:
      jobs.push_back({seed, c.mode, c.N_total, std::nullopt});
      break;
    case RunMode::Active:
      jobs.push_back({seed, RunMode::Active, std::nullopt, std::nullopt});
      break;
    case RunMode::Sweep:
      if (c.sweep_algorithm == RunMode::Active) {
        jobs.push_back({seed, RunMode::Active, std::nullopt, std::nullopt});
      } else {
        const std::vector<std::int64_t> budgets = c.budgets.empty() ? std::vector{c.N_total} : c.budgets;
        for (auto b : budgets)
          jobs.push_back({seed, c.sweep_algorithm, b, std::nullopt});
      }
      break;
    case RunMode::RealSuite:
      for (const auto &t : c.targets)
        jobs.push_back({seed, RunMode::RealSuite, std::nullopt, TaskSpec::parse(t)});
      break;
    }
  }
  return jobs;
}

GroundTruth make_environment(const ExperimentConfig &c, std::uint64_t seed) {
  const ProblemDims dims = ProblemDims::make(c.d, c.K, c.M);
  if (c.environment == EnvironmentKind::Sparse)
    return make_sparse_example(dims, c.sigma, seed);
  return make_random_environment(dims, c.sigma, c.head_scale, seed);
}

EpochSchedule make_schedule(const ExperimentConfig &c, const ProblemDims &dims, double R, double sigma_lower,
                            std::optional<double> &beta_resolved) {
  EpochSchedule s;
  s.mode = c.schedule;
  s.epsilon_base = c.epsilon_base;
  s.start_index = c.start_index;
  s.num_epochs = c.num_epochs;
  s.floor_override = c.active_floor;
  if (c.beta) {
    s.beta_rule = BetaRule::Constant;
    s.beta_value = *c.beta;
  } else if (c.schedule == ScheduleMode::Theory) {
    s.beta_rule = BetaRule::Constant;
    s.beta_value = beta_theory(dims.K, R, dims.M, dims.d, static_cast<double>(c.N_total), c.target_accuracy,
                               c.delta, sigma_lower);
  } else {
    s.beta_rule = BetaRule::InverseNuNorm;
  }
  if (s.beta_rule == BetaRule::Constant)
    beta_resolved = s.beta_value;
  return s;
}

ActiveOptions active_options(const ExperimentConfig &c, double sigma_lower) {
  ActiveOptions o;
  o.reuse = c.reuse;
  o.sigma_lower = sigma_lower;
  o.hard_cap = c.hard_cap;
  o.stop_at_excess_risk = c.stop_at_excess_risk;
  return o;
}

double median(std::vector<double> v) {
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::vector<RunOutput> run_synthetic_job(const ExperimentConfig &c, const Job &job) {
  const GroundTruth truth = make_environment(c, job.seed);
  const double sigma_lower = c.sigma_lower.value_or(std::min(truth.sigma_min_W(), 1.0));
  SyntheticOracle oracle(truth, job.seed, c.n_target);

  RunOutput out;
  out.seed = job.seed;
  out.algorithm = to_string(job.algorithm);
  out.budget = job.budget;
  out.sigma_lower = sigma_lower;

  switch (job.algorithm) {
  case RunMode::Known: {
    const RelevanceVector nu_star = min_norm_combination(truth.W_star(), truth.w_target(), c.solver.pinv_rcond);
    KnownOptions opts{c.known_floor, c.hard_cap};
    if (c.known_floor)
      std::clog << "warning: known-mode floor overridden to " << *c.known_floor
                << " (below the Kd + log(M/delta) requirement)\n";
    out.log = run_known(oracle, nu_star, static_cast<double>(*job.budget), c.delta, c.solver, opts).log;
    break;
  }
  case RunMode::Uniform:
    out.log = run_uniform(oracle, *job.budget, c.solver).log;
    break;
  case RunMode::Active: {
    const EpochSchedule schedule =
        make_schedule(c, truth.dims(), truth.head_norm_bound(), sigma_lower, out.beta_resolved);
    out.log = run_active(oracle, schedule, c.solver, active_options(c, sigma_lower)).log;
    if (c.compare_uniform) {
      const double threshold = c.stop_at_excess_risk.value_or(out.log.epochs.back().excess_risk);
      const auto active_samples = samples_to_reach(out.log, threshold);
      SyntheticOracle uniform_oracle(truth, job.seed, c.n_target);
      const BudgetSearch search =
          uniform_budget_to_reach(uniform_oracle, threshold, c.solver, c.M, c.uniform_growth, c.hard_cap);
      json cmp;
      cmp["threshold"] = threshold;
      cmp["active_samples"] = optional_json(active_samples);
      cmp["uniform_samples"] = search.reached ? json(search.budget) : json(nullptr);
      cmp["uniform_excess_risk"] = search.excess_risk;
      cmp["savings_ratio"] = (active_samples && search.reached)
                                 ? json(static_cast<double>(search.budget) / static_cast<double>(*active_samples))
                                 : json(nullptr);
      out.extra["comparison"] = cmp;
    }
    break;
  }
  default:
    throw ConfigError("unsupported algorithm");
  }
  return {std::move(out)};
}

std::vector<RunOutput> run_real_job(const ExperimentConfig &c, const Job &job,
                                    const std::vector<std::shared_ptr<const ImageArray>> &images) {
  RealSuiteOptions options;
  options.max_rows_per_corruption = c.max_rows_per_corruption;
  options.max_test_rows = c.max_test_rows;
  const double sigma_lower = c.sigma_lower.value_or(1.0);

  RealSuiteOracle active_oracle(make_real_suite(images, *job.target, c.n_target, job.seed, options), c.K);
  RunOutput active;
  active.seed = job.seed;
  active.algorithm = "active";
  active.target = job.target->name();
  active.sigma_lower = sigma_lower;
  const EpochSchedule schedule = make_schedule(c, active_oracle.dims(), 1.0, sigma_lower, active.beta_resolved);
  active.log = run_active(active_oracle, schedule, c.solver, active_options(c, sigma_lower)).log;

  RealSuiteOracle uniform_oracle(make_real_suite(images, *job.target, c.n_target, job.seed, options), c.K);
  RunOutput uniform;
  uniform.seed = job.seed;
  uniform.algorithm = "uniform";
  uniform.target = active.target;
  uniform.budget = active.log.N_used();
  uniform.sigma_lower = sigma_lower;
  uniform.log = run_uniform(uniform_oracle, active.log.N_used(), c.solver).log;
  return {std::move(active), std::move(uniform)};
}

// Runs f(i) for i in [0, n) on up to `jobs` threads. The exception of the
// lowest failing index is rethrown.
template <typename F> void parallel_for(std::size_t n, int jobs, F &&f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig &config) {
  config.validate();
  const std::vector<Job> jobs = plan_jobs(config);

  std::vector<std::shared_ptr<const ImageArray>> images;
  if (config.mode == RunMode::RealSuite)
    images = load_all_corruptions(config.data_root, config.max_rows_per_corruption);

  std::vector<std::vector<RunOutput>> per_job(jobs.size());
  parallel_for(jobs.size(), config.jobs, [&](std::size_t i) {
    per_job[i] = jobs[i].algorithm == RunMode::RealSuite ? run_real_job(config, jobs[i], images)
                                                         : run_synthetic_job(config, jobs[i]);
  });

  ExperimentResult result;
  for (auto &outs : per_job)
    for (auto &o : outs) {
      o.run_id = static_cast<int>(result.runs.size());
      result.runs.push_back(std::move(o));
    }

  if (config.compare_uniform) {
    json runs = json::array();
    std::vector<double> ratios, active_n, uniform_n;
    for (const auto &r : result.runs) {
      if (!r.extra.contains("comparison"))
        continue;
      json entry = r.extra["comparison"];
      entry["run_id"] = r.run_id;
      entry["seed"] = r.seed;
      runs.push_back(entry);
      if (!entry["savings_ratio"].is_null()) {
        ratios.push_back(entry["savings_ratio"].get<double>());
        active_n.push_back(entry["active_samples"].get<double>());
        uniform_n.push_back(entry["uniform_samples"].get<double>());
      }
    }
    if (!runs.empty()) {
      result.comparison["runs"] = runs;
      result.comparison["threshold_rule"] =
          config.stop_at_excess_risk ? "stop_at_excess_risk" : "final active excess risk";
      result.comparison["median_savings_ratio"] = ratios.empty() ? json(nullptr) : json(median(ratios));
      result.comparison["median_active_samples"] = active_n.empty() ? json(nullptr) : json(median(active_n));
      result.comparison["median_uniform_samples"] = uniform_n.empty() ? json(nullptr) : json(median(uniform_n));
    }
  }

  if (config.mode == RunMode::RealSuite) {
    json targets = json::array();
    int active_not_worse = 0;
    double delta_sum = 0.0;
    for (std::size_t i = 0; i + 1 < result.runs.size(); i += 2) {
      const auto &a = result.runs[i];
      const auto &u = result.runs[i + 1];
      const double ea = a.log.epochs.back().classification_error.value_or(0.0);
      const double eu = u.log.epochs.back().classification_error.value_or(0.0);
      active_not_worse += ea <= eu;
      delta_sum += eu - ea;
      targets.push_back({{"target", a.target},
                         {"seed", a.seed},
                         {"active_run_id", a.run_id},
                         {"uniform_run_id", u.run_id},
                         {"source_samples", a.log.N_used()},
                         {"active_error", ea},
                         {"uniform_error", eu},
                         {"accuracy_gain", eu - ea},
                         {"excess_loss_vs_uniform",
                          a.log.epochs.back().excess_risk - u.log.epochs.back().excess_risk}});
    }
    result.real_suite["targets"] = targets;
    result.real_suite["active_not_worse"] = active_not_worse;
    result.real_suite["pairs"] = targets.size();
    result.real_suite["mean_accuracy_gain"] = targets.empty() ? 0.0 : delta_sum / static_cast<double>(targets.size());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

namespace {

constexpr int kWideColumnLimit = 32;

std::string fmt(double v) {
  if (std::isnan(v))
    return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<bool> &v) {
  if (!v)
    return "na";
  return *v ? "1" : "0";
}

} // namespace

std::string runlog_header(int M) {
  std::ostringstream h;
  h << "run_id,seed,epoch,epsilon,beta";
  if (M <= kWideColumnLimit) {
    for (int m = 1; m <= M; ++m)
      h << ",n_" << m;
    h << ",N_used_cumulative,excess_risk,objective";
    for (int m = 1; m <= M; ++m)
      h << ",nu_hat_" << m;
    h << ",bracket_ok_fraction,sigma_min_ok";
  } else {
    h << ",N_used_cumulative,excess_risk,objective,bracket_ok_fraction,sigma_min_ok,task,n,nu_hat";
  }
  return h.str();
}

void write_runlog_csv(std::ostream &out, const std::vector<RunOutput> &runs, int M) {
  out << runlog_header(M) << "\n";
  for (const auto &run : runs) {
    for (const auto &rec : run.log.epochs) {
      const std::string prefix = std::to_string(run.run_id) + "," + std::to_string(run.seed) + "," +
                                 std::to_string(rec.epoch) + "," + fmt(rec.epsilon) + "," + fmt(rec.beta);
      if (M <= kWideColumnLimit) {
        out << prefix;
        for (auto n : rec.plan.n)
          out << "," << n;
        out << "," << rec.N_used << "," << fmt(rec.excess_risk) << "," << fmt(rec.objective);
        for (Index m = 0; m < rec.nu_hat.size(); ++m)
          out << "," << fmt(rec.nu_hat(m));
        out << "," << fmt(rec.bracket_ok_fraction) << "," << fmt(rec.sigma_min_ok) << "\n";
      } else {
        for (int m = 0; m < M; ++m) {
          out << prefix << "," << rec.N_used << "," << fmt(rec.excess_risk) << "," << fmt(rec.objective) << ","
              << fmt(rec.bracket_ok_fraction) << "," << fmt(rec.sigma_min_ok) << "," << (m + 1) << ","
              << rec.plan.n[static_cast<std::size_t>(m)] << "," << fmt(rec.nu_hat(m)) << "\n";
        }
      }
    }
  }
}

json summary_json(const ExperimentConfig &config, const ExperimentResult &result, double wall_seconds) {
  json s;
  s["config"] = config_to_json(config);
  s["versions"] = {{"amtl", AMTL_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  s["wall_time_seconds"] = wall_seconds;
  json runs = json::array();
  for (const auto &r : result.runs) {
    json run;
    run["run_id"] = r.run_id;
    run["seed"] = r.seed;
    run["algorithm"] = r.algorithm;
    if (!r.target.empty())
      run["target"] = r.target;
    run["budget"] = optional_json(r.budget);
    run["sigma_lower"] = r.sigma_lower;
    run["beta"] = r.beta_resolved ? json(*r.beta_resolved) : json("inverse-nu-norm");
    run["epochs"] = r.log.total_epochs();
    run["N_used"] = r.log.N_used();
    if (!r.log.epochs.empty()) {
      const auto &last = r.log.epochs.back();
      run["final_excess_risk"] = last.excess_risk;
      run["final_objective"] = last.objective;
      run["final_nu_hat"] = std::vector<double>(last.nu_hat.data(), last.nu_hat.data() + last.nu_hat.size());
      if (last.classification_error)
        run["final_classification_error"] = *last.classification_error;
    }
    json epochs = json::array();
    for (const auto &rec : r.log.epochs) {
      json e;
      e["epoch"] = rec.epoch;
      e["newly_drawn"] = rec.newly_drawn;
      e["altmin_iterations"] = rec.altmin_iterations;
      e["stop_reason"] = to_string(rec.stop_reason);
      e["target_precondition_ok"] = rec.target_precondition_ok;
      e["floored_tasks"] = std::count(rec.plan.floor_applied.begin(), rec.plan.floor_applied.end(), true);
      if (rec.classification_error)
        e["classification_error"] = *rec.classification_error;
      epochs.push_back(e);
    }
    run["epoch_details"] = epochs;
    runs.push_back(run);
  }
  s["runs"] = runs;
  if (!result.comparison.is_null())
    s["comparison"] = result.comparison;
  if (!result.real_suite.is_null())
    s["real_suite"] = result.real_suite;
  return s;
}

int run_and_write(const ExperimentConfig &config, std::ostream &log) {
  try {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(config);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
      throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    const int M = config.mode == RunMode::RealSuite
                      ? (result.runs.empty() ? 0 : static_cast<int>(result.runs.front().log.epochs.front().plan.n.size()))
                      : config.M;
    {
      std::ofstream csv(dir / "runlog.csv", std::ios::binary);
      if (!csv)
        throw IoError("cannot write " + (dir / "runlog.csv").string());
      write_runlog_csv(csv, result.runs, M);
      if (!csv)
        throw IoError("write failed for runlog.csv");
    }
    {
      std::ofstream js(dir / "summary.json");
      if (!js)
        throw IoError("cannot write " + (dir / "summary.json").string());
      js << summary_json(config, result, wall).dump(2) << "\n";
      if (!js)
        throw IoError("write failed for summary.json");
    }
    log << "wrote " << result.runs.size() << " run(s) to " << dir.string() << "\n";
    return 0;
  } catch (const ConfigError &e) {
    log << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const IoError &e) {
    log << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    log << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

} // namespace amtl
