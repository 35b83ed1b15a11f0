#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "amtl/sampler.hpp"
#include "amtl/solver.hpp"

namespace amtl {

enum class RunMode { Known, Active, Uniform, Sweep, RealSuite };
enum class EnvironmentKind { Sparse, Random };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string &s);
std::string to_string(EnvironmentKind kind);
EnvironmentKind environment_from_string(const std::string &s);

/// Everything needed to reproduce a run. Serialized as a flat JSON object
/// whose keys are the field names below (solver fields included).
struct ExperimentConfig {
  RunMode mode = RunMode::Active;
  RunMode sweep_algorithm = RunMode::Active;

  EnvironmentKind environment = EnvironmentKind::Sparse;
  int d = 30;
  int K = 5;
  int M = 20;
  double sigma = 0.5;
  double head_scale = 1.0;
  std::int64_t n_target = 2000;

  std::string data_root;
  std::vector<std::string> targets;
  std::int64_t max_rows_per_corruption = 10000;
  std::int64_t max_test_rows = 2000;

  ScheduleMode schedule = ScheduleMode::PaperExperiment;
  double epsilon_base = 1.5;
  int start_index = 1;
  int num_epochs = 4;
  /// Constant beta; unset uses the preset rule (1/||nu_hat||^2, or the
  /// closed-form theory value).
  std::optional<double> beta;
  std::optional<double> active_floor;
  bool reuse = true;
  std::optional<double> sigma_lower;
  double target_accuracy = 0.1;
  double delta = 0.1;
  std::int64_t hard_cap = 1'000'000;
  std::optional<double> stop_at_excess_risk;

  std::int64_t N_total = 10000;
  std::vector<std::int64_t> budgets;
  std::optional<double> known_floor;
  bool compare_uniform = false;
  double uniform_growth = 1.1;

  SolverConfig solver;

  std::vector<std::uint64_t> seeds{0};
  int jobs = 1;
  std::string out_dir = "out";

  /// Throws ConfigError with field-level messages.
  void validate() const;

  friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) = default;
};

/// Rejects unknown keys. Missing keys take their defaults; preset-dependent
/// defaults (epsilon_base) are resolved from the schedule when absent.
ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json config_to_json(const ExperimentConfig &config);

ExperimentConfig load_config(const std::filesystem::path &path);
void save_config(const std::filesystem::path &path, const ExperimentConfig &config);

/// ACTIVE_MTRL_SEED, when set, replaces the seed list with that single seed.
void apply_environment_overrides(ExperimentConfig &config);

/// A finished run as written to the outputs.
struct RunOutput {
  int run_id = 0;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string target; // real-suite task name, empty otherwise
  std::optional<std::int64_t> budget;
  double sigma_lower = 0.0;
  std::optional<double> beta_resolved;
  RunLog log;
  nlohmann::json extra = nlohmann::json::object();
};

struct ExperimentResult {
  std::vector<RunOutput> runs;
  nlohmann::json comparison; // null unless a paired comparison ran
  nlohmann::json real_suite; // null unless mode is real-suite
};

/// Runs every configured run; independent runs may execute on up to
/// config.jobs threads, results ordered by run_id.
ExperimentResult run_experiment(const ExperimentConfig &config);

/// runlog.csv: wide columns for M <= 32, long (one row per task) otherwise.
void write_runlog_csv(std::ostream &out, const std::vector<RunOutput> &runs, int M);
std::string runlog_header(int M);

nlohmann::json summary_json(const ExperimentConfig &config, const ExperimentResult &result, double wall_seconds);

/// Runs, writes <out_dir>/runlog.csv and summary.json, and maps failures to
/// exit codes: 0 ok, 1 configuration error, 2 runtime or budget error,
/// 3 I/O error.
int run_and_write(const ExperimentConfig &config, std::ostream &log);

} // namespace amtl
