#include "amtl/eval.hpp"

#include <algorithm>
#include <cmath>

#include "amtl/error.hpp"

namespace amtl {

namespace {

Vector predictor(const LinearModel &model) {
  if (model.B_hat.cols() != model.w_target_hat.size())
    throw DimensionError("model: B_hat and w_target_hat disagree on K");
  return model.B_hat * model.w_target_hat;
}

} // namespace

double excess_risk_analytic(const LinearModel &model, const GroundTruth &truth) {
  if (model.B_hat.rows() != truth.dims().d)
    throw DimensionError("excess_risk_analytic: model and truth disagree on d");
  return (predictor(model) - truth.B_star() * truth.w_target()).squaredNorm();
}

double excess_risk_empirical(const LinearModel &model, const SampleBatch &test, double baseline_loss) {
  if (test.empty())
    throw ConfigError("excess_risk_empirical: test batch is empty");
  if (test.X.cols() != model.B_hat.rows())
    throw DimensionError("excess_risk_empirical: test inputs do not match the model");
  const Vector residual = test.X * predictor(model) - test.Y;
  return residual.squaredNorm() / static_cast<double>(test.size()) - baseline_loss;
}

double classification_error(const LinearModel &model, const SampleBatch &test, double threshold) {
  if (test.empty())
    throw ConfigError("classification_error: test batch is empty");
  const Vector pred = test.X * predictor(model);
  Index wrong = 0;
  for (Index i = 0; i < test.size(); ++i) {
    const bool predicted = pred(i) > threshold;
    const bool actual = test.Y(i) > 0.5;
    wrong += predicted != actual;
  }
  return static_cast<double>(wrong) / static_cast<double>(test.size());
}

SparsityReport s_star(const RelevanceVector &nu_star, double N_total, int M) {
  if (!(N_total > 0.0))
    throw ConfigError("s_star: N_total must be positive");
  if (nu_star.size() != M)
    throw DimensionError("s_star: nu has the wrong length");
  SparsityReport report;
  const double norm2 = nu_star.norm2();
  if (norm2 == 0.0) {
    report.degenerate = true;
    return report;
  }

  std::vector<double> breaks(M);
  for (int m = 0; m < M; ++m)
    breaks[m] = nu_star(m) * nu_star(m) * N_total / norm2;

  auto count_at = [&](double gamma) {
    return static_cast<int>(std::count_if(breaks.begin(), breaks.end(), [&](double g) { return g > gamma; }));
  };

  std::vector<double> candidates{0.0};
  for (double g : breaks)
    if (g > 0.0 && g <= 1.0)
      candidates.push_back(g);
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());

  bool first = true;
  for (double gamma : candidates) {
    const int count = count_at(gamma);
    const double value = (1.0 - gamma) * count + gamma * M;
    if (first || value < report.s_star) {
      report.s_star = value;
      report.argmin_gamma = gamma;
      report.support_size_at_argmin = count;
      first = false;
    }
  }
  return report;
}

double source_bound_known(int K, int d, int M, double delta, double sigma, double s_star, double nu_norm2,
                          double epsilon) {
  if (!(delta > 0.0) || !(epsilon > 0.0))
    throw ConfigError("bounds: delta and epsilon must be positive");
  const double complexity = static_cast<double>(K) * d + static_cast<double>(K) * M + std::log(1.0 / delta);
  return complexity * sigma * sigma * s_star * nu_norm2 / (epsilon * epsilon);
}

double source_bound_uniform(int K, int d, int M, double delta, double sigma, double nu_norm2, double epsilon) {
  return source_bound_known(K, d, M, delta, sigma, static_cast<double>(M), nu_norm2, epsilon);
}

double BracketReport::fraction_in_bracket() const {
  if (classes.empty())
    return 1.0;
  return 1.0 - static_cast<double>(violations()) / static_cast<double>(classes.size());
}

int BracketReport::violations() const {
  return static_cast<int>(std::count(classes.begin(), classes.end(), BracketClass::Violated));
}

BracketReport check_nu_brackets(const RelevanceVector &nu_hat, const RelevanceVector &nu_star, double epsilon,
                                double sigma, int epoch) {
  if (nu_hat.size() != nu_star.size())
    throw DimensionError("check_nu_brackets: length mismatch");
  BracketReport report;
  report.epoch = epoch;
  report.epsilon = epsilon;
  const double threshold = sigma * std::sqrt(epsilon);
  report.classes.reserve(static_cast<std::size_t>(nu_hat.size()));
  for (Index m = 0; m < nu_hat.size(); ++m) {
    const double truth = std::abs(nu_star(m));
    const double estimate = std::abs(nu_hat(m));
    if (truth >= threshold) {
      const bool ok = estimate >= truth / 16.0 && estimate <= 4.0 * truth;
      report.classes.push_back(ok ? BracketClass::HighInBracket : BracketClass::Violated);
    } else {
      report.classes.push_back(estimate <= 4.0 * threshold ? BracketClass::LowInBracket : BracketClass::Violated);
    }
  }
  return report;
}

bool check_sigma_min(const Matrix &W_hat, const Matrix &B_hat, double sigma_min_W_star) {
  if (B_hat.cols() != W_hat.rows())
    throw DimensionError("check_sigma_min: B_hat and W_hat disagree on K");
  const Index K = W_hat.rows();
  Eigen::JacobiSVD<Matrix> svd(B_hat * W_hat);
  const Vector &s = svd.singularValues();
  const double sigma_K = K <= s.size() ? s(K - 1) : 0.0;
  return sigma_K >= sigma_min_W_star / 2.0;
}

double representation_error_norm(const LinearModel &model, const GroundTruth &truth) {
  if (model.B_hat.rows() != truth.dims().d || model.W_hat.cols() != truth.dims().M)
    throw DimensionError("representation_error_norm: model and truth disagree on dimensions");
  return (model.B_hat * model.W_hat - truth.B_star() * truth.W_star()).norm();
}

} // namespace amtl
