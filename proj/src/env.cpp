#include "amtl/env.hpp"

#include <cmath>
#include <string>

#include "amtl/error.hpp"

namespace amtl {

void ProblemDims::validate() const {
  if (d <= 0)
    throw ConfigError("d must be positive (got " + std::to_string(d) + ")");
  if (K <= 0)
    throw ConfigError("K must be positive (got " + std::to_string(K) + ")");
  if (M <= 0)
    throw ConfigError("M must be positive (got " + std::to_string(M) + ")");
  if (K > d)
    throw ConfigError("K must not exceed d (K=" + std::to_string(K) + ", d=" + std::to_string(d) + ")");
  if (M < K)
    throw ConfigError("M must be at least K (M=" + std::to_string(M) + ", K=" + std::to_string(K) + ")");
}

ProblemDims ProblemDims::make(int d, int K, int M) {
  ProblemDims dims{d, K, M};
  dims.validate();
  return dims;
}

GroundTruth::GroundTruth(ProblemDims dims, Matrix B_star, Matrix W_star, Vector w_target, double sigma)
    : dims_(dims), B_star_(std::move(B_star)), W_star_(std::move(W_star)), w_target_(std::move(w_target)),
      sigma_(sigma) {
  dims_.validate();
  if (B_star_.rows() != dims_.d || B_star_.cols() != dims_.K)
    throw DimensionError("B_star must be d x K");
  if (W_star_.rows() != dims_.K || W_star_.cols() != dims_.M)
    throw DimensionError("W_star must be K x M");
  if (w_target_.size() != dims_.K)
    throw DimensionError("w_target must have length K");
  if (!(sigma_ >= 0.0) || !std::isfinite(sigma_))
    throw ConfigError("sigma must be a finite nonnegative number");
  if (orthonormality_defect(B_star_) > 1e-10)
    throw ConfigError("B_star must have orthonormal columns");
  sigma_min_W_ = smallest_singular_value(W_star_);
  if (!(sigma_min_W_ > 0.0))
    throw ConfigError("W_star must have full row rank (sigma_min > 0)");
  head_norm_bound_ = std::max(W_star_.colwise().norm().maxCoeff(), w_target_.norm());
}

Vector GroundTruth::head(int task) const {
  if (task < 1 || task > dims_.M + 1)
    throw ConfigError("unknown task id " + std::to_string(task));
  if (task == dims_.M + 1)
    return w_target_;
  return W_star_.col(task - 1);
}

Vector GroundTruth::regression_vector(int task) const { return B_star_ * head(task); }

bool identical(const GroundTruth &a, const GroundTruth &b) {
  return a.dims() == b.dims() && a.sigma() == b.sigma() && a.B_star() == b.B_star() &&
         a.W_star() == b.W_star() && a.w_target() == b.w_target();
}

SampleBatch::SampleBatch(int task_, Matrix X_, Vector Y_) : task(task_), X(std::move(X_)), Y(std::move(Y_)) {
  if (X.rows() != Y.size())
    throw DimensionError("SampleBatch: X has " + std::to_string(X.rows()) + " rows but Y has " +
                         std::to_string(Y.size()) + " entries");
}

Matrix random_orthonormal(Index d, Index K, RngStream &rng) {
  Matrix g(d, K);
  for (Index i = 0; i < d; ++i)
    for (Index k = 0; k < K; ++k)
      g(i, k) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, K);
  const Matrix r = qr.matrixQR().topRows(K).triangularView<Eigen::Upper>();
  for (Index k = 0; k < K; ++k)
    if (r(k, k) < 0.0)
      q.col(k) *= -1.0;
  return q;
}

GroundTruth make_sparse_example(const ProblemDims &dims, double sigma, std::uint64_t seed) {
  dims.validate();
  if (dims.K < 2)
    throw ConfigError("sparse example requires K >= 2 (got K=" + std::to_string(dims.K) + ")");

  RngStream rng(seed, {0, kEnvironmentEpoch});
  Matrix B = random_orthonormal(dims.d, dims.K, rng);

  Matrix W = Matrix::Zero(dims.K, dims.M);
  for (int m = 1; m <= dims.M - 1; ++m)
    W((m - 1) % (dims.K - 1), m - 1) = 1.0;
  W(dims.K - 1, dims.M - 1) = 1.0;
  Vector target = Vector::Unit(dims.K, dims.K - 1);
  return GroundTruth(dims, std::move(B), std::move(W), std::move(target), sigma);
}

GroundTruth make_random_environment(const ProblemDims &dims, double sigma, double head_scale, std::uint64_t seed) {
  dims.validate();
  if (!(head_scale > 0.0))
    throw ConfigError("head_scale must be positive");

  RngStream rng(seed, {0, kEnvironmentEpoch});
  Matrix B = random_orthonormal(dims.d, dims.K, rng);

  Matrix W(dims.K, dims.M);
  constexpr int kMaxRedraws = 100;
  bool accepted = false;
  for (int attempt = 0; attempt < kMaxRedraws && !accepted; ++attempt) {
    for (Index m = 0; m < dims.M; ++m) {
      Vector g(dims.K);
      do {
        for (Index k = 0; k < dims.K; ++k)
          g(k) = rng.normal();
      } while (g.norm() == 0.0);
      W.col(m) = head_scale * g / g.norm();
    }
    accepted = smallest_singular_value(W) >= 0.1 * head_scale;
  }
  if (!accepted)
    throw NumericalError("make_random_environment: sigma_min floor not met after 100 redraws");

  Vector c(dims.M);
  for (Index m = 0; m < dims.M; ++m)
    c(m) = rng.normal();
  c /= c.norm();
  Vector target = W * c;
  return GroundTruth(dims, std::move(B), std::move(W), std::move(target), sigma);
}

SampleBatch sample_task(const GroundTruth &env, int task, Index n, RngStream &rng) {
  if (task < 1 || task > env.dims().M + 1)
    throw ConfigError("unknown task id " + std::to_string(task));
  if (n < 0)
    throw ConfigError("sample count must be nonnegative");

  const Index d = env.dims().d;
  Matrix X(n, d);
  Vector Z(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j)
      X(i, j) = rng.normal();
    Z(i) = rng.normal();
  }
  const Vector v = env.regression_vector(task);
  Vector Y = X * v;
  if (env.sigma() != 0.0)
    Y += env.sigma() * Z;
  return SampleBatch(task, std::move(X), std::move(Y));
}

SampleBatch concat_batches(const SampleBatch &a, const SampleBatch &b) {
  if (a.task != b.task)
    throw ConfigError("concat_batches: task mismatch (" + std::to_string(a.task) + " vs " +
                      std::to_string(b.task) + ")");
  if (a.empty())
    return b;
  if (b.empty())
    return a;
  if (a.X.cols() != b.X.cols())
    throw DimensionError("concat_batches: column count mismatch");
  Matrix X(a.size() + b.size(), a.X.cols());
  X << a.X, b.X;
  Vector Y(a.size() + b.size());
  Y << a.Y, b.Y;
  return SampleBatch(a.task, std::move(X), std::move(Y));
}

} // namespace amtl
