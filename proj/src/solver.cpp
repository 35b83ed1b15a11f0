#include "amtl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amtl/error.hpp"

namespace amtl {

std::string to_string(InitMode mode) {
  return mode == InitMode::StackedEstimates ? "svd-of-stacked-estimates" : "random-orthonormal";
}

std::string to_string(StopReason reason) {
  switch (reason) {
  case StopReason::Converged:
    return "converged";
  case StopReason::MaxIterations:
    return "max-iterations";
  case StopReason::NoImprovement:
    return "no-improvement";
  }
  return "unknown";
}

InitMode init_mode_from_string(const std::string &s) {
  if (s == "svd-of-stacked-estimates")
    return InitMode::StackedEstimates;
  if (s == "random-orthonormal")
    return InitMode::RandomOrthonormal;
  throw ConfigError("init_mode: unknown value '" + s + "'");
}

void SolverConfig::validate() const {
  if (max_altmin_iters < 1)
    throw ConfigError("max_altmin_iters must be at least 1");
  if (!(rel_objective_tol > 0.0))
    throw ConfigError("rel_objective_tol must be positive");
  if (pinv_rcond && !(*pinv_rcond > 0.0))
    throw ConfigError("pinv_rcond must be positive");
  if (direct_bstep_max_params < 0)
    throw ConfigError("direct_bstep_max_params must be nonnegative");
  if (cg_max_iters < 1)
    throw ConfigError("cg_max_iters must be at least 1");
  if (!(cg_rel_tol > 0.0))
    throw ConfigError("cg_rel_tol must be positive");
}

RelevanceVector::RelevanceVector(Vector values, bool degenerate)
    : values_(std::move(values)), norm2_(values_.squaredNorm()), degenerate_(degenerate) {}

RelevanceVector RelevanceVector::uniform(int M) { return RelevanceVector(Vector::Constant(M, 1.0 / M)); }

std::vector<Index> RelevanceVector::support(double threshold) const {
  std::vector<Index> out;
  for (Index m = 0; m < values_.size(); ++m)
    if (std::abs(values_(m)) > threshold)
      out.push_back(m);
  return out;
}

namespace {

void check_finite(const Matrix &a, const char *what) {
  if (!a.allFinite())
    throw NumericalError(std::string("non-finite values in ") + what);
}

// Per-task ridge estimate (X^T X + lambda I)^{-1} X^T Y, lambda = 1e-6 n.
Vector ridge_estimate(const SampleBatch &b) {
  const Index n = b.size();
  const Index d = b.X.cols();
  const double lambda = 1e-6 * static_cast<double>(n);
  if (n < d) {
    Matrix gram = b.X * b.X.transpose();
    gram.diagonal().array() += lambda;
    return b.X.transpose() * gram.ldlt().solve(b.Y);
  }
  Matrix gram = b.X.transpose() * b.X;
  gram.diagonal().array() += lambda;
  return gram.ldlt().solve(b.X.transpose() * b.Y);
}

Matrix initial_representation(std::span<const SampleBatch> batches, const ProblemDims &dims,
                              const SolverConfig &config) {
  if (config.init_mode == InitMode::RandomOrthonormal) {
    RngStream rng(config.seed, {0, kInitEpoch});
    return random_orthonormal(dims.d, dims.K, rng);
  }
  Matrix stacked(dims.d, dims.M);
  for (int m = 0; m < dims.M; ++m)
    stacked.col(m) = ridge_estimate(batches[m]);
  check_finite(stacked, "stacked ridge estimates");
  Eigen::BDCSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(dims.K);
}

Matrix head_step(std::span<const SampleBatch> batches, const Matrix &B) {
  Matrix W(B.cols(), static_cast<Index>(batches.size()));
  for (std::size_t m = 0; m < batches.size(); ++m) {
    const Matrix Z = batches[m].X * B;
    W.col(static_cast<Index>(m)) = Z.completeOrthogonalDecomposition().solve(batches[m].Y);
  }
  check_finite(W, "head step");
  return W;
}

// Normal equations in vec(B) (column-major): A = sum_m (w_m w_m^T) kron G_m.
// Solves for the update from the current B so directions the data does not
// determine keep their current values.
Matrix representation_step_direct(const std::vector<Matrix> &grams, const std::vector<Vector> &moments,
                                  const Matrix &B, const Matrix &W) {
  const Index d = B.rows();
  const Index K = B.cols();
  const Index p = d * K;
  Matrix A = Matrix::Zero(p, p);
  Vector b = Vector::Zero(p);
  for (std::size_t m = 0; m < grams.size(); ++m) {
    const auto w = W.col(static_cast<Index>(m));
    for (Index k = 0; k < K; ++k) {
      if (w(k) == 0.0)
        continue;
      b.segment(k * d, d).noalias() += w(k) * moments[m];
      for (Index l = k; l < K; ++l)
        if (w(l) != 0.0)
          A.block(k * d, l * d, d, d).noalias() += (w(k) * w(l)) * grams[m];
    }
  }
  A.triangularView<Eigen::StrictlyLower>() = A.transpose();

  const Eigen::Map<const Vector> x0(B.data(), p);
  const Vector rhs = b - A * x0;
  Vector delta;
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success) {
    delta = llt.solve(rhs);
  }
  if (delta.size() == 0 || !delta.allFinite())
    delta = A.ldlt().solve(rhs);
  if (!delta.allFinite())
    delta = A.completeOrthogonalDecomposition().solve(rhs);
  check_finite(delta, "representation step");
  Vector x = x0 + delta;
  return Eigen::Map<Matrix>(x.data(), d, K);
}

Matrix apply_normal_operator(std::span<const SampleBatch> batches, const Matrix &B, const Matrix &W) {
  Matrix out = Matrix::Zero(B.rows(), B.cols());
  for (std::size_t m = 0; m < batches.size(); ++m) {
    const auto w = W.col(static_cast<Index>(m));
    const Vector r = batches[m].X * (B * w);
    const Vector g = batches[m].X.transpose() * r;
    out.noalias() += g * w.transpose();
  }
  return out;
}

// Conjugate gradients on the same normal equations, started from the
// current B. Every CG iterate lowers the quadratic objective.
Matrix representation_step_cg(std::span<const SampleBatch> batches, const Matrix &B, const Matrix &W,
                              const SolverConfig &config) {
  Matrix rhs = Matrix::Zero(B.rows(), B.cols());
  for (std::size_t m = 0; m < batches.size(); ++m) {
    const auto w = W.col(static_cast<Index>(m));
    rhs.noalias() += (batches[m].X.transpose() * batches[m].Y) * w.transpose();
  }
  Matrix x = B;
  Matrix r = rhs - apply_normal_operator(batches, x, W);
  Matrix p = r;
  double rr = r.squaredNorm();
  const double stop = config.cg_rel_tol * config.cg_rel_tol * std::max(rhs.squaredNorm(), 1e-300);
  for (int it = 0; it < config.cg_max_iters && rr > stop; ++it) {
    const Matrix Ap = apply_normal_operator(batches, p, W);
    const double pAp = (p.array() * Ap.array()).sum();
    if (!(pAp > 0.0))
      break;
    const double alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  check_finite(x, "representation step");
  return x;
}

} // namespace

double joint_objective(std::span<const SampleBatch> batches, const Matrix &B, const Matrix &W) {
  double total = 0.0;
  for (std::size_t m = 0; m < batches.size(); ++m)
    total += (batches[m].X * (B * W.col(static_cast<Index>(m))) - batches[m].Y).squaredNorm();
  return total;
}

LinearModel fit_joint_erm(std::span<const SampleBatch> batches, const ProblemDims &dims, const SolverConfig &config) {
  dims.validate();
  config.validate();
  if (static_cast<int>(batches.size()) != dims.M)
    throw DimensionError("fit_joint_erm: expected " + std::to_string(dims.M) + " batches, got " +
                         std::to_string(batches.size()));
  for (int m = 0; m < dims.M; ++m) {
    const auto &b = batches[m];
    if (b.task != m + 1)
      throw ConfigError("fit_joint_erm: batch " + std::to_string(m) + " holds task " + std::to_string(b.task));
    if (b.size() < 1)
      throw ConfigError("fit_joint_erm: task " + std::to_string(m + 1) + " has no samples");
    if (b.X.cols() != dims.d)
      throw DimensionError("fit_joint_erm: task " + std::to_string(m + 1) + " inputs are not d-dimensional");
  }

  const bool direct = static_cast<long long>(dims.d) * dims.K <= config.direct_bstep_max_params;
  std::vector<Matrix> grams;
  std::vector<Vector> moments;
  if (direct) {
    grams.reserve(dims.M);
    moments.reserve(dims.M);
    for (const auto &b : batches) {
      grams.push_back(b.X.transpose() * b.X);
      moments.push_back(b.X.transpose() * b.Y);
    }
  }

  LinearModel model;
  model.B_hat = initial_representation(batches, dims, config);
  model.W_hat = head_step(batches, model.B_hat);
  double objective = joint_objective(batches, model.B_hat, model.W_hat);
  model.objective_trace.push_back(objective);
  model.stop_reason = StopReason::MaxIterations;

  for (int it = 1; it <= config.max_altmin_iters; ++it) {
    if (objective == 0.0) {
      model.stop_reason = StopReason::Converged;
      break;
    }
    const Matrix B_next = direct ? representation_step_direct(grams, moments, model.B_hat, model.W_hat)
                                 : representation_step_cg(batches, model.B_hat, model.W_hat, config);
    Orthonormalized ortho;
    try {
      ortho = orthonormalize(B_next, model.W_hat);
    } catch (const NumericalError &) {
      model.stop_reason = StopReason::NoImprovement;
      break;
    }
    Matrix W_next = head_step(batches, ortho.Q);
    const double next = joint_objective(batches, ortho.Q, W_next);
    if (!(next <= objective)) {
      model.stop_reason = StopReason::NoImprovement;
      break;
    }
    const double rel = (objective - next) / objective;
    model.B_hat = std::move(ortho.Q);
    model.W_hat = std::move(W_next);
    objective = next;
    model.objective_trace.push_back(objective);
    model.iterations = it;
    if (rel < config.rel_objective_tol) {
      model.stop_reason = StopReason::Converged;
      break;
    }
  }
  return model;
}

Vector fit_target_head(const Matrix &B_hat, const SampleBatch &target, const SolverConfig &config) {
  if (target.empty())
    throw ConfigError("fit_target_head: target batch is empty");
  if (target.X.cols() != B_hat.rows())
    throw DimensionError("fit_target_head: target inputs do not match the representation");
  const Matrix Z = target.X * B_hat;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  if (config.pinv_rcond)
    cod.setThreshold(*config.pinv_rcond);
  cod.compute(Z);
  Vector w = cod.solve(target.Y);
  check_finite(w, "target head");
  return w;
}

RelevanceVector min_norm_combination(const Matrix &W, const Vector &w, std::optional<double> rcond) {
  if (W.rows() != w.size())
    throw DimensionError("min_norm_combination: W has " + std::to_string(W.rows()) + " rows but w has length " +
                         std::to_string(w.size()));
  const Index M = W.cols();
  if (W.size() == 0 || W.cwiseAbs().maxCoeff() == 0.0)
    return RelevanceVector(Vector::Zero(M), true);

  Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector &s = svd.singularValues();
  const double relative =
      rcond.value_or(static_cast<double>(std::max(W.rows(), W.cols())) * std::numeric_limits<double>::epsilon());
  const double cutoff = relative * s(0);
  Vector coeffs = svd.matrixU().transpose() * w;
  for (Index i = 0; i < s.size(); ++i)
    coeffs(i) = s(i) > cutoff ? coeffs(i) / s(i) : 0.0;
  return RelevanceVector(svd.matrixV() * coeffs);
}

Orthonormalized orthonormalize(const Matrix &B, const Matrix &W) {
  if (B.cols() != W.rows())
    throw DimensionError("orthonormalize: B has " + std::to_string(B.cols()) + " columns but W has " +
                         std::to_string(W.rows()) + " rows");
  const Index d = B.rows();
  const Index K = B.cols();
  if (K > d)
    throw DimensionError("orthonormalize: B must be tall");
  Eigen::HouseholderQR<Matrix> qr(B);
  Matrix Q = qr.householderQ() * Matrix::Identity(d, K);
  Matrix R = qr.matrixQR().topRows(K).triangularView<Eigen::Upper>();
  const double scale = R.diagonal().cwiseAbs().maxCoeff();
  for (Index k = 0; k < K; ++k) {
    if (!(std::abs(R(k, k)) > 1e-12 * scale))
      throw NumericalError("orthonormalize: B is rank deficient; re-initialize the representation");
    if (R(k, k) < 0.0) {
      Q.col(k) *= -1.0;
      R.row(k) *= -1.0;
    }
  }
  return {std::move(Q), R * W};
}

double subspace_distance(const Matrix &B1, const Matrix &B2) {
  if (B1.rows() != B2.rows() || B1.cols() != B2.cols())
    throw DimensionError("subspace_distance: shape mismatch");
  if (orthonormality_defect(B1) > 1e-6 || orthonormality_defect(B2) > 1e-6)
    throw ConfigError("subspace_distance: inputs must have orthonormal columns");
  const Matrix residual = B2 - B1 * (B1.transpose() * B2);
  Eigen::JacobiSVD<Matrix> svd(residual);
  return std::clamp(svd.singularValues()(0), 0.0, 1.0);
}

} // namespace amtl
