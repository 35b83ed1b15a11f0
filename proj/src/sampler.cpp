#include "amtl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "amtl/error.hpp"

namespace amtl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Allocations beyond this are reported as-is and always trip the hard cap.
constexpr double kMaxCount = 4.0e18;

// Ceiling that ignores rounding noise a few ulps above an integer.
std::int64_t ceil_count(double x) {
  x = std::min(x, kMaxCount);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, nearest))
    return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::ceil(x));
}

void check_cap(const AllocationPlan &plan, std::int64_t hard_cap) {
  // Summed in double to avoid overflow on runaway allocations.
  double total = 0.0;
  for (auto v : plan.n)
    total += static_cast<double>(v);
  if (total > static_cast<double>(hard_cap))
    throw BudgetError("epoch allocation of " + std::to_string(static_cast<long double>(total)) +
                      " samples exceeds the hard cap of " + std::to_string(hard_cap));
}

std::vector<SampleBatch> empty_batches(const ProblemDims &dims) {
  std::vector<SampleBatch> out;
  out.reserve(static_cast<std::size_t>(dims.M));
  for (int m = 1; m <= dims.M; ++m)
    out.emplace_back(m, Matrix(0, dims.d), Vector(0));
  return out;
}

struct Fit {
  LinearModel model;
  RelevanceVector nu_hat;
};

Fit fit_round(const TaskOracle &oracle, const std::vector<SampleBatch> &batches, const SolverConfig &solver) {
  Fit fit;
  fit.model = fit_joint_erm(batches, oracle.dims(), solver);
  fit.model.w_target_hat = fit_target_head(fit.model.B_hat, oracle.target(), solver);
  fit.nu_hat = min_norm_combination(fit.model.W_hat, fit.model.w_target_hat, solver.pinv_rcond);
  return fit;
}

void fill_record(EpochRecord &rec, const TaskOracle &oracle, const Fit &fit) {
  const Evaluation eval = oracle.evaluate(fit.model);
  rec.excess_risk = eval.excess_risk;
  rec.classification_error = eval.classification_error;
  rec.nu_hat = fit.nu_hat.values();
  rec.objective = fit.model.objective();
  rec.altmin_iterations = fit.model.iterations;
  rec.stop_reason = fit.model.stop_reason;
  rec.bracket_ok_fraction = kNaN;
  if (const GroundTruth *truth = oracle.truth())
    rec.sigma_min_ok = check_sigma_min(fit.model.W_hat, fit.model.B_hat, truth->sigma_min_W());
}

} // namespace

std::int64_t AllocationPlan::total() const {
  std::int64_t t = 0;
  for (auto v : n)
    t += v;
  return t;
}

AllocationPlan allocate_known(const RelevanceVector &nu_star, double N_total, double N_floor) {
  const Index M = nu_star.size();
  if (M == 0 || nu_star.norm2() == 0.0)
    throw ConfigError("allocate_known: relevance vector must be nonzero");
  if (!(N_floor >= 1.0))
    throw ConfigError("allocate_known: floor must be at least 1");
  const double spare = N_total - static_cast<double>(M) * N_floor;
  if (!(spare > 0.0))
    throw BudgetError("allocate_known: budget " + std::to_string(N_total) + " does not exceed M * floor = " +
                      std::to_string(static_cast<double>(M) * N_floor));
  AllocationPlan plan;
  for (Index m = 0; m < M; ++m) {
    const double proportional = spare * nu_star(m) * nu_star(m) / nu_star.norm2();
    plan.floor_applied.push_back(proportional <= N_floor);
    plan.n.push_back(ceil_count(std::max(proportional, N_floor)));
  }
  return plan;
}

AllocationPlan allocate_active(const RelevanceVector &nu_hat, double beta, double epsilon,
                               std::optional<double> floor_override) {
  if (!(beta > 0.0))
    throw ConfigError("allocate_active: beta must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ConfigError("allocate_active: epsilon must lie in (0, 1)");
  const double floor = floor_override.value_or(beta / epsilon);
  AllocationPlan plan;
  for (Index m = 0; m < nu_hat.size(); ++m) {
    const double proportional = beta * nu_hat(m) * nu_hat(m) / (epsilon * epsilon);
    plan.floor_applied.push_back(proportional <= floor);
    plan.n.push_back(std::max<std::int64_t>(ceil_count(std::max(proportional, floor)), 1));
  }
  return plan;
}

AllocationPlan allocate_uniform(std::int64_t N_total, int M) {
  if (M < 1)
    throw ConfigError("allocate_uniform: M must be positive");
  if (N_total < M)
    throw BudgetError("allocate_uniform: budget " + std::to_string(N_total) + " is below M = " + std::to_string(M));
  AllocationPlan plan;
  const std::int64_t base = N_total / M;
  const std::int64_t extra = N_total % M;
  for (int m = 0; m < M; ++m) {
    plan.n.push_back(base + (m < extra ? 1 : 0));
    plan.floor_applied.push_back(false);
  }
  return plan;
}

double beta_theory(int K, double R, int M, int d, double N_total, double epsilon, double delta, double sigma_lower) {
  if (K < 1 || M < 1 || d < 1 || !(R > 0.0) || !(N_total > 0.0) || !(epsilon > 0.0) || !(delta > 0.0))
    throw ConfigError("beta_theory: all arguments must be positive");
  if (!(sigma_lower > 0.0 && sigma_lower <= 1.0))
    throw ConfigError("beta_theory: sigma_lower must lie in (0, 1]");
  const double e = std::numbers::e;
  const double dim_term = static_cast<double>(K) * M;
  const double budget_log = std::log(std::max(N_total / (epsilon * M), e));
  const double inner_log = std::log(std::max(1.0 / N_total, e));
  const double confidence_log = std::log(M * inner_log / (delta / 10.0));
  const double scale = 3000.0 * K * K * R * R;
  return scale * (dim_term + static_cast<double>(K) * d * budget_log + confidence_log) / std::pow(sigma_lower, 6);
}

int suggested_num_epochs(double N_total, double beta, double nu_norm2) {
  if (!(N_total > 0.0) || !(beta > 0.0) || !(nu_norm2 > 0.0))
    throw ConfigError("suggested_num_epochs: arguments must be positive");
  const double ratio = N_total / (beta * nu_norm2);
  return std::max(1, static_cast<int>(std::floor(std::log2(std::sqrt(ratio)))));
}

std::string to_string(ScheduleMode mode) {
  switch (mode) {
  case ScheduleMode::Theory:
    return "theory";
  case ScheduleMode::PaperExperiment:
    return "paper-experiment";
  case ScheduleMode::Custom:
    return "custom";
  }
  return "unknown";
}

ScheduleMode schedule_mode_from_string(const std::string &s) {
  if (s == "theory")
    return ScheduleMode::Theory;
  if (s == "paper-experiment")
    return ScheduleMode::PaperExperiment;
  if (s == "custom")
    return ScheduleMode::Custom;
  throw ConfigError("schedule: unknown preset '" + s + "'");
}

double EpochSchedule::epsilon(int i) const { return std::pow(epsilon_base, -static_cast<double>(i)); }

double EpochSchedule::beta(const RelevanceVector &nu_hat) const {
  if (beta_rule == BetaRule::Constant)
    return beta_value;
  return nu_hat.norm2() > 0.0 ? 1.0 / nu_hat.norm2() : 1.0;
}

void EpochSchedule::validate() const {
  if (!(epsilon_base > 1.0))
    throw ConfigError("epsilon_base must exceed 1 so epsilon strictly decreases");
  if (start_index < 1)
    throw ConfigError("start_index must be at least 1");
  if (num_epochs < 1)
    throw ConfigError("num_epochs must be at least 1");
  if (beta_rule == BetaRule::Constant && !(beta_value > 0.0))
    throw ConfigError("beta must be positive");
  if (floor_override && !(*floor_override >= 1.0))
    throw ConfigError("active_floor must be at least 1");
}

EpochSchedule EpochSchedule::paper_experiment(int num_epochs, int start_index) {
  EpochSchedule s;
  s.mode = ScheduleMode::PaperExperiment;
  s.epsilon_base = 1.5;
  s.beta_rule = BetaRule::InverseNuNorm;
  s.start_index = start_index;
  s.num_epochs = num_epochs;
  return s;
}

EpochSchedule EpochSchedule::theory(double beta, int num_epochs) {
  EpochSchedule s;
  s.mode = ScheduleMode::Theory;
  s.epsilon_base = 2.0;
  s.beta_rule = BetaRule::Constant;
  s.beta_value = beta;
  s.start_index = 1;
  s.num_epochs = num_epochs;
  return s;
}

SyntheticOracle::SyntheticOracle(GroundTruth truth, std::uint64_t seed, Index n_target)
    : truth_(std::move(truth)), seed_(seed), counts_(static_cast<std::size_t>(truth_.dims().M), 0) {
  if (n_target < 1)
    throw ConfigError("n_target must be positive");
  const int target_task = truth_.dims().M + 1;
  RngStream rng(seed_, {static_cast<std::uint64_t>(target_task), kTargetEpoch});
  target_ = sample_task(truth_, target_task, n_target, rng);
}

SampleBatch SyntheticOracle::draw(int task, Index n, std::uint64_t epoch) {
  if (task < 1 || task > truth_.dims().M)
    throw ConfigError("unknown source task " + std::to_string(task));
  RngStream rng(seed_, {static_cast<std::uint64_t>(task), epoch});
  SampleBatch batch = sample_task(truth_, task, n, rng);
  counts_[static_cast<std::size_t>(task - 1)] += n;
  return batch;
}

Evaluation SyntheticOracle::evaluate(const LinearModel &model) const {
  return {excess_risk_analytic(model, truth_), std::nullopt};
}

RealSuiteOracle::RealSuiteOracle(RealSuite suite, int K, double baseline_loss)
    : suite_(std::move(suite)), baseline_loss_(baseline_loss) {
  dims_ = ProblemDims::make(static_cast<int>(kImagePixels), K, suite_.M());
  if (suite_.test_batch.empty())
    throw ConfigError("real suite has no held-out rows for evaluation");
  counts_.assign(static_cast<std::size_t>(dims_.M), 0);
}

SampleBatch RealSuiteOracle::draw(int task, Index n, std::uint64_t) {
  if (task < 1 || task > dims_.M)
    throw ConfigError("unknown source task " + std::to_string(task));
  counts_[static_cast<std::size_t>(task - 1)] += n;
  return suite_.sources[static_cast<std::size_t>(task - 1)].draw(n, task);
}

Evaluation RealSuiteOracle::evaluate(const LinearModel &model) const {
  return {excess_risk_empirical(model, suite_.test_batch, baseline_loss_),
          classification_error(model, suite_.test_batch)};
}

RunResult run_known(TaskOracle &oracle, const RelevanceVector &nu_star, double N_total, double delta,
                    const SolverConfig &solver, const KnownOptions &options) {
  const ProblemDims dims = oracle.dims();
  if (nu_star.size() != dims.M)
    throw DimensionError("run_known: relevance vector length differs from M");
  if (!(delta > 0.0 && delta < 1.0))
    throw ConfigError("delta must lie in (0, 1)");
  const double floor =
      options.floor_override.value_or(std::ceil(static_cast<double>(dims.K) * dims.d + std::log(dims.M / delta)));

  EpochRecord rec;
  rec.epoch = 1;
  rec.epsilon = std::sqrt(nu_star.norm2() / N_total);
  rec.beta = kNaN;
  rec.plan = allocate_known(nu_star, N_total, floor);
  check_cap(rec.plan, options.hard_cap);

  std::vector<SampleBatch> batches;
  for (int m = 1; m <= dims.M; ++m) {
    batches.push_back(oracle.draw(m, rec.plan.n[static_cast<std::size_t>(m - 1)], 0));
    rec.newly_drawn += batches.back().size();
  }
  rec.N_used = rec.newly_drawn;

  Fit fit = fit_round(oracle, batches, solver);
  fill_record(rec, oracle, fit);

  RunResult result{std::move(fit.model), {}};
  result.log.algorithm = "known";
  result.log.epochs.push_back(std::move(rec));
  return result;
}

RunResult run_uniform(TaskOracle &oracle, std::int64_t N_total, const SolverConfig &solver) {
  const ProblemDims dims = oracle.dims();
  EpochRecord rec;
  rec.epoch = 1;
  rec.epsilon = kNaN;
  rec.beta = kNaN;
  rec.plan = allocate_uniform(N_total, dims.M);

  std::vector<SampleBatch> batches;
  for (int m = 1; m <= dims.M; ++m) {
    batches.push_back(oracle.draw(m, rec.plan.n[static_cast<std::size_t>(m - 1)], 0));
    rec.newly_drawn += batches.back().size();
  }
  rec.N_used = rec.newly_drawn;

  Fit fit = fit_round(oracle, batches, solver);
  fill_record(rec, oracle, fit);

  RunResult result{std::move(fit.model), {}};
  result.log.algorithm = "uniform";
  result.log.epochs.push_back(std::move(rec));
  return result;
}

RunResult run_active(TaskOracle &oracle, const EpochSchedule &schedule, const SolverConfig &solver,
                     const ActiveOptions &options) {
  schedule.validate();
  const ProblemDims dims = oracle.dims();
  const GroundTruth *truth = oracle.truth();

  std::optional<RelevanceVector> nu_star;
  if (truth)
    nu_star = min_norm_combination(truth->W_star(), truth->w_target(), solver.pinv_rcond);
  const double sigma_lower = options.sigma_lower.value_or(truth ? truth->sigma_min_W() : 1.0);
  if (!(sigma_lower > 0.0))
    throw ConfigError("sigma_lower must be positive");

  RunResult result;
  result.log.algorithm = "active";
  std::vector<SampleBatch> batches = empty_batches(dims);
  RelevanceVector nu = RelevanceVector::uniform(dims.M);
  std::int64_t used = 0;

  for (int e = 0; e < schedule.num_epochs; ++e) {
    const int i = schedule.start_index + e;
    EpochRecord rec;
    rec.epoch = i;
    rec.epsilon = schedule.epsilon(i);
    rec.beta = schedule.beta(nu);
    rec.plan = allocate_active(nu, rec.beta, rec.epsilon, schedule.floor_override);
    check_cap(rec.plan, options.hard_cap);

    for (int m = 1; m <= dims.M; ++m) {
      auto &batch = batches[static_cast<std::size_t>(m - 1)];
      const std::int64_t want = rec.plan.n[static_cast<std::size_t>(m - 1)];
      if (options.reuse) {
        const std::int64_t missing = want - batch.size();
        if (missing > 0) {
          batch = concat_batches(batch, oracle.draw(m, missing, static_cast<std::uint64_t>(i)));
          rec.newly_drawn += missing;
        }
      } else {
        batch = oracle.draw(m, want, static_cast<std::uint64_t>(i));
        rec.newly_drawn += want;
      }
    }
    used += rec.newly_drawn;
    rec.N_used = used;

    Fit fit = fit_round(oracle, batches, solver);
    fill_record(rec, oracle, fit);
    if (nu_star)
      rec.bracket_ok_fraction =
          check_nu_brackets(fit.nu_hat, *nu_star, rec.epsilon, truth->sigma(), i).fraction_in_bracket();
    rec.target_precondition_ok =
        static_cast<double>(oracle.target().size()) >= 2000.0 / rec.epsilon / std::pow(sigma_lower, 4);

    nu = fit.nu_hat;
    result.model = std::move(fit.model);
    const bool stop = options.stop_at_excess_risk && rec.excess_risk <= *options.stop_at_excess_risk;
    result.log.epochs.push_back(std::move(rec));
    if (stop)
      break;
  }
  return result;
}

std::optional<std::int64_t> samples_to_reach(const RunLog &log, double threshold) {
  for (const auto &rec : log.epochs)
    if (rec.excess_risk <= threshold)
      return rec.N_used;
  return std::nullopt;
}

BudgetSearch uniform_budget_to_reach(TaskOracle &oracle, double threshold, const SolverConfig &solver,
                                     std::int64_t start, double growth, std::int64_t max_budget) {
  if (!(growth > 1.0))
    throw ConfigError("uniform_budget_to_reach: growth must exceed 1");
  BudgetSearch out;
  std::int64_t budget = std::max<std::int64_t>(start, oracle.dims().M);
  while (budget <= max_budget) {
    const RunResult run = run_uniform(oracle, budget, solver);
    out.budget = budget;
    out.excess_risk = run.log.epochs.back().excess_risk;
    if (out.excess_risk <= threshold) {
      out.reached = true;
      return out;
    }
    budget = std::max(budget + 1, static_cast<std::int64_t>(std::ceil(static_cast<double>(budget) * growth)));
  }
  return out;
}

} // namespace amtl
