#pragma once

#include <vector>

#include "amtl/env.hpp"
#include "amtl/solver.hpp"

namespace amtl {

/// ||B_hat w_hat - B* w*_target||^2. Under identity input covariance this is
/// the population excess risk on the target task.
double excess_risk_analytic(const LinearModel &model, const GroundTruth &truth);

/// Mean squared prediction error on test minus baseline_loss (sigma^2 for
/// synthetic data). Returned unclipped, so it can be negative.
double excess_risk_empirical(const LinearModel &model, const SampleBatch &test, double baseline_loss);

/// Fraction of rows whose prediction, thresholded at `threshold`, disagrees
/// with the 0/1 label.
double classification_error(const LinearModel &model, const SampleBatch &test, double threshold = 0.5);

struct SparsityReport {
  double s_star = 0.0;
  double argmin_gamma = 0.0;
  int support_size_at_argmin = 0;
  bool degenerate = false;
};

/// Exact minimum over gamma in [0, 1] of (1 - gamma) * count(gamma) + gamma * M
/// where count(gamma) = |{m : |nu_m| > sqrt(gamma ||nu||^2 / N_total)}|.
/// The objective is piecewise linear with nonnegative slope between the
/// breakpoints gamma_m = nu_m^2 N_total / ||nu||^2, so the minimum is attained
/// at 0 or at a breakpoint inside [0, 1]. Ties go to the smaller gamma.
SparsityReport s_star(const RelevanceVector &nu_star, double N_total, int M);

/// (Kd + KM + log(1/delta)) sigma^2 s* ||nu*||^2 eps^-2 with unit constants and
/// no log factors: a scaling calculator, not a certified bound.
double source_bound_known(int K, int d, int M, double delta, double sigma, double s_star, double nu_norm2,
                          double epsilon);

/// The same expression with s* replaced by M (uniform sampling).
double source_bound_uniform(int K, int d, int M, double delta, double sigma, double nu_norm2, double epsilon);

enum class BracketClass { HighInBracket, LowInBracket, Violated };

struct BracketReport {
  std::vector<BracketClass> classes;
  int epoch = 0;
  double epsilon = 0.0;

  double fraction_in_bracket() const;
  int violations() const;
};

/// Classifies each |nu_hat(m)| against the relevance brackets: when
/// |nu*(m)| >= sigma sqrt(eps) it must lie in [|nu*(m)|/16, 4|nu*(m)|],
/// otherwise in [0, 4 sigma sqrt(eps)].
BracketReport check_nu_brackets(const RelevanceVector &nu_hat, const RelevanceVector &nu_star, double epsilon,
                                double sigma, int epoch = 0);

/// sigma_K(B_hat W_hat) >= sigma_min(W*) / 2.
bool check_sigma_min(const Matrix &W_hat, const Matrix &B_hat, double sigma_min_W_star);

/// ||B_hat W_hat - B* W*||_F.
double representation_error_norm(const LinearModel &model, const GroundTruth &truth);

} // namespace amtl
