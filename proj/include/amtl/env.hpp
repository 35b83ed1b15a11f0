#pragma once

#include <cstdint>

#include "amtl/linalg.hpp"
#include "amtl/rng.hpp"

namespace amtl {

/// Input dimension d, representation dimension K and source-task count M.
struct ProblemDims {
  int d = 0;
  int K = 0;
  int M = 0;

  /// Throws ConfigError naming the offending fields.
  void validate() const;
  static ProblemDims make(int d, int K, int M);

  friend bool operator==(const ProblemDims &, const ProblemDims &) = default;
};

/// Hidden parameters of a synthetic environment: y = x^T B* w*_m + z,
/// z ~ N(0, sigma^2), x ~ N(0, I_d). Tasks are 1-indexed; task M+1 is the target.
class GroundTruth {
public:
  /// Validates orthonormality of B*, a positive K-th singular value of W*
  /// and all shapes.
  GroundTruth(ProblemDims dims, Matrix B_star, Matrix W_star, Vector w_target, double sigma);

  const ProblemDims &dims() const { return dims_; }
  const Matrix &B_star() const { return B_star_; }
  const Matrix &W_star() const { return W_star_; }
  const Vector &w_target() const { return w_target_; }
  double sigma() const { return sigma_; }
  /// R: max_m ||w*_m||_2 over all M+1 heads.
  double head_norm_bound() const { return head_norm_bound_; }
  double sigma_min_W() const { return sigma_min_W_; }

  /// Head of task in [1..M+1].
  Vector head(int task) const;
  /// B* w*_task, the d-dimensional regression vector.
  Vector regression_vector(int task) const;

private:
  ProblemDims dims_;
  Matrix B_star_;
  Matrix W_star_;
  Vector w_target_;
  double sigma_ = 0.0;
  double head_norm_bound_ = 0.0;
  double sigma_min_W_ = 0.0;
};

/// Bitwise equality of every parameter.
bool identical(const GroundTruth &a, const GroundTruth &b);

/// Labeled examples for one task. X is n x d, Y has length n; n may be zero.
struct SampleBatch {
  int task = 0;
  Matrix X;
  Vector Y;

  SampleBatch() = default;
  SampleBatch(int task, Matrix X, Vector Y);

  Index size() const { return Y.size(); }
  bool empty() const { return Y.size() == 0; }
};

/// Random d x K matrix with orthonormal columns (thin QR of a Gaussian matrix,
/// signs fixed so R has a positive diagonal).
Matrix random_orthonormal(Index d, Index K, RngStream &rng);

/// Sparse-relevance environment: the first M-1 heads cycle through
/// e_1..e_{K-1}, and task M and the target share e_K.
GroundTruth make_sparse_example(const ProblemDims &dims, double sigma, std::uint64_t seed = 0);

/// Heads uniform on the sphere of radius head_scale, redrawn until
/// sigma_min(W*) >= 0.1 * head_scale; target head is W* c for a random unit c.
GroundTruth make_random_environment(const ProblemDims &dims, double sigma, double head_scale,
                                    std::uint64_t seed);

/// Draws n i.i.d. examples of task in [1..M+1]. Rows are generated in order
/// (x_i then z_i), and Y = X (B* w*_task) + sigma * Z.
SampleBatch sample_task(const GroundTruth &env, int task, Index n, RngStream &rng);

/// Row-stacks a then b. Both batches must belong to the same task.
SampleBatch concat_batches(const SampleBatch &a, const SampleBatch &b);

} // namespace amtl
