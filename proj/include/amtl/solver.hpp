#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amtl/env.hpp"
#include "amtl/linalg.hpp"

namespace amtl {

enum class InitMode { StackedEstimates, RandomOrthonormal };

enum class StopReason { Converged, MaxIterations, NoImprovement };

std::string to_string(InitMode mode);
std::string to_string(StopReason reason);
InitMode init_mode_from_string(const std::string &s);

struct SolverConfig {
  int max_altmin_iters = 100;
  double rel_objective_tol = 1e-9;
  /// Relative singular-value cutoff for pseudo-inverses; unset means
  /// max(rows, cols) * machine epsilon.
  std::optional<double> pinv_rcond;
  InitMode init_mode = InitMode::StackedEstimates;
  std::uint64_t seed = 0;
  /// The representation step forms the dK x dK normal equations when
  /// d * K is at most this; larger problems use conjugate gradients.
  int direct_bstep_max_params = 1500;
  int cg_max_iters = 500;
  double cg_rel_tol = 1e-12;

  void validate() const;
  friend bool operator==(const SolverConfig &, const SolverConfig &) = default;
};

/// Estimated representation, source heads and target head.
struct LinearModel {
  Matrix B_hat;          // d x K, orthonormal columns
  Matrix W_hat;          // K x M
  Vector w_target_hat;   // K
  std::vector<double> objective_trace;
  int iterations = 0;
  StopReason stop_reason = StopReason::MaxIterations;

  double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// Minimum-norm combination of source heads expressing the target head.
class RelevanceVector {
public:
  RelevanceVector() = default;
  explicit RelevanceVector(Vector values, bool degenerate = false);

  static RelevanceVector uniform(int M);

  const Vector &values() const { return values_; }
  double operator()(Index m) const { return values_(m); }
  Index size() const { return values_.size(); }
  double norm2() const { return norm2_; }
  bool degenerate() const { return degenerate_; }
  /// 0-based indices with |value| > threshold.
  std::vector<Index> support(double threshold = 0.0) const;

private:
  Vector values_;
  double norm2_ = 0.0;
  bool degenerate_ = false;
};

/// Joint least squares over source tasks,
///   min_{B, W} sum_m ||X_m B w_m - Y_m||^2,
/// by alternating exact least-squares half-steps. After every representation
/// step B is re-orthonormalized with the triangular factor absorbed into W.
/// batches[m] must hold task m+1.
LinearModel fit_joint_erm(std::span<const SampleBatch> batches, const ProblemDims &dims,
                          const SolverConfig &config = {});

/// Minimum-norm solution of min_w ||X B_hat w - Y||^2.
Vector fit_target_head(const Matrix &B_hat, const SampleBatch &target, const SolverConfig &config = {});

/// W^+ w via SVD, dropping singular values below rcond * sigma_max.
/// Equals the minimum-norm solution of W nu = w whenever that system is
/// consistent, and the minimum-norm least-squares solution otherwise.
RelevanceVector min_norm_combination(const Matrix &W, const Vector &w, std::optional<double> rcond = {});

struct Orthonormalized {
  Matrix Q;      // d x K, Q^T Q = I
  Matrix W;      // R W
};

/// Thin QR of B with positive diagonal R; returns (Q, R W) so Q (R W) == B W.
/// Throws NumericalError when B is numerically rank deficient.
Orthonormalized orthonormalize(const Matrix &B, const Matrix &W);

/// Sine of the largest principal angle between the column spaces of two
/// orthonormal d x K matrices.
double subspace_distance(const Matrix &B1, const Matrix &B2);

/// sum_m ||X_m B w_m - Y_m||^2.
double joint_objective(std::span<const SampleBatch> batches, const Matrix &B, const Matrix &W);

} // namespace amtl
