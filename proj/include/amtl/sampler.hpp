#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amtl/env.hpp"
#include "amtl/eval.hpp"
#include "amtl/ingest.hpp"
#include "amtl/solver.hpp"

namespace amtl {

// ---------------------------------------------------------------------------
// Allocation

/// Per-task sample counts for one round.
struct AllocationPlan {
  std::vector<std::int64_t> n;
  std::vector<bool> floor_applied;

  std::int64_t total() const;
};

/// n_m = ceil(max{(N_total - M N_floor) nu(m)^2 / ||nu||^2, N_floor}).
/// Throws BudgetError when N_total <= M * N_floor.
AllocationPlan allocate_known(const RelevanceVector &nu_star, double N_total, double N_floor);

/// n_m = ceil(max{beta nu(m)^2 / eps^2, floor}), floor = beta / eps unless
/// floor_override is given.
AllocationPlan allocate_active(const RelevanceVector &nu_hat, double beta, double epsilon,
                               std::optional<double> floor_override = {});

/// n_m = floor(N_total / M), the remainder going to the lowest-index tasks.
AllocationPlan allocate_uniform(std::int64_t N_total, int M);

/// Allocation multiplier used by the theory schedule:
///   3000 K^2 R^2 (KM + Kd log(N_total/(eps M)) + log(M log(1/N_total)/(delta/10))) / sigma_lower^6.
/// Both log arguments are clamped from below at e, since log(1/N_total) is
/// negative for any real budget.
double beta_theory(int K, double R, int M, int d, double N_total, double epsilon, double delta, double sigma_lower);

/// floor(log2 sqrt(N_total / (beta ||nu||^2))), at least 1: the number of
/// halving epochs before the budget is spent.
int suggested_num_epochs(double N_total, double beta, double nu_norm2);

// ---------------------------------------------------------------------------
// Schedules

enum class ScheduleMode { Theory, PaperExperiment, Custom };
enum class BetaRule { Constant, InverseNuNorm };

std::string to_string(ScheduleMode mode);
ScheduleMode schedule_mode_from_string(const std::string &s);

/// epsilon_i = epsilon_base^-i for i = start_index .. start_index + num_epochs - 1.
struct EpochSchedule {
  ScheduleMode mode = ScheduleMode::PaperExperiment;
  double epsilon_base = 1.5;
  BetaRule beta_rule = BetaRule::InverseNuNorm;
  double beta_value = 1.0;
  int start_index = 1;
  int num_epochs = 4;
  std::optional<double> floor_override;

  double epsilon(int i) const;
  /// beta_i; the inverse-norm rule falls back to 1 for a zero estimate.
  double beta(const RelevanceVector &nu_hat) const;
  void validate() const;

  /// epsilon_i = 1.5^-i, beta_i = 1 / ||nu_hat_i||^2.
  static EpochSchedule paper_experiment(int num_epochs = 4, int start_index = 1);
  /// epsilon_i = 2^-i from i = 1 with a constant beta.
  static EpochSchedule theory(double beta, int num_epochs);

  friend bool operator==(const EpochSchedule &, const EpochSchedule &) = default;
};

// ---------------------------------------------------------------------------
// Oracles

struct Evaluation {
  double excess_risk = 0.0;
  std::optional<double> classification_error;
};

/// Source of labeled samples for source tasks 1..M plus a fixed target batch.
class TaskOracle {
public:
  virtual ~TaskOracle() = default;

  virtual ProblemDims dims() const = 0;
  /// n fresh samples of source task in [1..M] for the given epoch.
  virtual SampleBatch draw(int task, Index n, std::uint64_t epoch) = 0;
  virtual const SampleBatch &target() const = 0;
  virtual Evaluation evaluate(const LinearModel &model) const = 0;
  /// Ground truth when known (synthetic environments), else nullptr.
  virtual const GroundTruth *truth() const { return nullptr; }
  /// Total rows handed out per source task (0-based index).
  virtual const std::vector<std::int64_t> &draw_counts() const = 0;
};

/// Draws from a synthetic environment with counter-based streams keyed by
/// (task, epoch). The target batch comes from its own reserved stream.
class SyntheticOracle : public TaskOracle {
public:
  SyntheticOracle(GroundTruth truth, std::uint64_t seed, Index n_target);

  ProblemDims dims() const override { return truth_.dims(); }
  SampleBatch draw(int task, Index n, std::uint64_t epoch) override;
  const SampleBatch &target() const override { return target_; }
  /// Analytic excess risk.
  Evaluation evaluate(const LinearModel &model) const override;
  const GroundTruth *truth() const override { return &truth_; }
  const std::vector<std::int64_t> &draw_counts() const override { return counts_; }

private:
  GroundTruth truth_;
  std::uint64_t seed_;
  SampleBatch target_;
  std::vector<std::int64_t> counts_;
};

/// Adapts a RealSuite. Excess risk is held-out mean squared error minus
/// baseline_loss, alongside thresholded classification error.
class RealSuiteOracle : public TaskOracle {
public:
  RealSuiteOracle(RealSuite suite, int K, double baseline_loss = 0.0);

  ProblemDims dims() const override { return dims_; }
  SampleBatch draw(int task, Index n, std::uint64_t epoch) override;
  const SampleBatch &target() const override { return suite_.target_batch; }
  Evaluation evaluate(const LinearModel &model) const override;
  const std::vector<std::int64_t> &draw_counts() const override { return counts_; }

  const RealSuite &suite() const { return suite_; }

private:
  RealSuite suite_;
  ProblemDims dims_;
  double baseline_loss_;
  std::vector<std::int64_t> counts_;
};

// ---------------------------------------------------------------------------
// Runs

/// One round of allocation, fitting and relevance estimation.
struct EpochRecord {
  int epoch = 0;
  double epsilon = 0.0; // NaN when not applicable
  double beta = 0.0;    // NaN when not applicable
  AllocationPlan plan;
  std::int64_t newly_drawn = 0;
  std::int64_t N_used = 0; // cumulative
  Vector nu_hat;           // relevance estimate produced by this epoch
  double excess_risk = 0.0;
  std::optional<double> classification_error;
  double objective = 0.0;
  int altmin_iterations = 0;
  StopReason stop_reason = StopReason::MaxIterations;
  double bracket_ok_fraction = 0.0; // NaN without ground truth
  std::optional<bool> sigma_min_ok;
  bool target_precondition_ok = true;
};

struct RunLog {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;

  int total_epochs() const { return static_cast<int>(epochs.size()); }
  std::int64_t N_used() const { return epochs.empty() ? 0 : epochs.back().N_used; }
};

struct RunResult {
  LinearModel model;
  RunLog log;
};

struct KnownOptions {
  std::optional<double> floor_override;
  std::int64_t hard_cap = 1'000'000;
};

struct ActiveOptions {
  bool reuse = true;
  /// Lower bound on sigma_min(W*); defaults to the true value when the
  /// oracle exposes ground truth, else 1.
  std::optional<double> sigma_lower;
  std::int64_t hard_cap = 1'000'000;
  /// Stop after the first epoch whose excess risk is at or below this.
  std::optional<double> stop_at_excess_risk;
};

/// Single round with known relevance; floor = ceil(Kd + log(M/delta)).
RunResult run_known(TaskOracle &oracle, const RelevanceVector &nu_star, double N_total, double delta,
                    const SolverConfig &solver, const KnownOptions &options = {});

/// Epochs of: allocate from the current relevance estimate, draw (topping up
/// earlier samples when reuse is on), fit, re-estimate relevance.
RunResult run_active(TaskOracle &oracle, const EpochSchedule &schedule, const SolverConfig &solver,
                     const ActiveOptions &options = {});

/// Single round with equal allocation.
RunResult run_uniform(TaskOracle &oracle, std::int64_t N_total, const SolverConfig &solver);

/// Cumulative source samples at the first epoch reaching the threshold.
std::optional<std::int64_t> samples_to_reach(const RunLog &log, double threshold);

struct BudgetSearch {
  std::int64_t budget = 0;
  double excess_risk = 0.0;
  bool reached = false;
};

/// Smallest budget on the ladder N_j = ceil(start * growth^j) at which a
/// uniform run reaches the threshold.
BudgetSearch uniform_budget_to_reach(TaskOracle &oracle, double threshold, const SolverConfig &solver,
                                     std::int64_t start, double growth, std::int64_t max_budget);

} // namespace amtl
