#include <doctest.h>

#include <cmath>

#include "amtl/env.hpp"
#include "amtl/error.hpp"
#include "amtl/solver.hpp"
#include "frozen_values.hpp"
#include "helpers.hpp"

using namespace amtl;

TEST_CASE("single task rank one fit equals ordinary least squares") {
  const auto dims = ProblemDims::make(6, 1, 1);
  const GroundTruth t = make_random_environment(dims, 0.3, 1.0, 2);
  const auto batches = testing::draw_sources(t, 40, 3);
  const LinearModel model = fit_joint_erm(batches, dims);
  const Matrix &X = batches[0].X;
  const Vector ols = (X.transpose() * X).ldlt().solve(X.transpose() * batches[0].Y);
  const Vector fitted = model.B_hat * model.W_hat.col(0);
  CHECK((fitted - ols).norm() <= 1e-8 * ols.norm());
}

TEST_CASE("noiseless data is fit exactly") {
  for (auto mode : {InitMode::StackedEstimates, InitMode::RandomOrthonormal}) {
    const auto dims = ProblemDims::make(12, 3, 6);
    const GroundTruth t = make_sparse_example(dims, 0.0, 4);
    const auto batches = testing::draw_sources(t, 24, 5);
    SolverConfig cfg;
    cfg.init_mode = mode;
    cfg.max_altmin_iters = 500;
    const LinearModel model = fit_joint_erm(batches, dims, cfg);
    double total = 0.0;
    for (const auto &b : batches)
      total += b.Y.squaredNorm();
    CHECK(model.objective() <= 1e-12 * total);
    CHECK(joint_objective(batches, model.B_hat, model.W_hat) == doctest::Approx(model.objective()).epsilon(1e-6));
    CHECK(orthonormality_defect(model.B_hat) <= 1e-8);
  }
}

TEST_CASE("noisy sparse example recovers the representation") {
  const auto dims = ProblemDims::make(20, 3, 6);
  const GroundTruth t = make_sparse_example(dims, 0.1, 1);
  const auto batches = testing::draw_sources(t, 500, 1);
  const LinearModel model = fit_joint_erm(batches, dims);
  CHECK(subspace_distance(model.B_hat, t.B_star()) <= 0.1);
  CHECK(orthonormality_defect(model.B_hat) <= 1e-8);
  for (std::size_t k = 1; k < model.objective_trace.size(); ++k)
    CHECK(model.objective_trace[k] <= model.objective_trace[k - 1]);
}

TEST_CASE("direct and conjugate-gradient representation steps agree") {
  const auto dims = ProblemDims::make(15, 3, 8);
  const GroundTruth t = make_random_environment(dims, 0.2, 1.0, 3);
  const auto batches = testing::draw_sources(t, 60, 3);
  SolverConfig direct, cg;
  cg.direct_bstep_max_params = 0;
  const LinearModel a = fit_joint_erm(batches, dims, direct);
  const LinearModel b = fit_joint_erm(batches, dims, cg);
  const Matrix pa = a.B_hat * a.W_hat;
  const Matrix pb = b.B_hat * b.W_hat;
  CHECK((pa - pb).norm() <= 1e-6 * pa.norm());
  CHECK(a.objective() == doctest::Approx(b.objective()).epsilon(1e-8));
}

TEST_CASE("fit is invariant under rotations of the representation") {
  const auto dims = ProblemDims::make(10, 3, 5);
  const GroundTruth t = make_random_environment(dims, 0.3, 1.0, 9);
  const auto batches = testing::draw_sources(t, 40, 9);
  const LinearModel model = fit_joint_erm(batches, dims);
  RngStream rng(1, {0, 0});
  const Matrix Q = random_orthonormal(3, 3, rng);
  const Matrix B = model.B_hat * Q;
  const Matrix W = Q.transpose() * model.W_hat;
  CHECK(joint_objective(batches, B, W) == doctest::Approx(joint_objective(batches, model.B_hat, model.W_hat)));
  CHECK(subspace_distance(B, model.B_hat) <= 1e-10);
}

TEST_CASE("fit rejects malformed batches") {
  const auto dims = ProblemDims::make(6, 2, 3);
  const GroundTruth t = make_sparse_example(dims, 0.1);
  auto batches = testing::draw_sources(t, 10, 0);
  batches.pop_back();
  CHECK_THROWS_AS(fit_joint_erm(batches, dims), DimensionError);
  batches = testing::draw_sources(t, 10, 0);
  batches[1] = SampleBatch(2, Matrix(0, 6), Vector(0));
  CHECK_THROWS_AS(fit_joint_erm(batches, dims), ConfigError);
  batches = testing::draw_sources(t, 10, 0);
  std::swap(batches[0], batches[1]);
  CHECK_THROWS_AS(fit_joint_erm(batches, dims), ConfigError);
}

TEST_CASE("target head") {
  const auto dims = ProblemDims::make(8, 3, 4);
  const GroundTruth t = make_random_environment(dims, 0.0, 1.0, 5);
  RngStream rng(0, {5, 0});
  const SampleBatch target = sample_task(t, 5, 10, rng);
  CHECK((fit_target_head(t.B_star(), target) - t.w_target()).norm() <= 1e-8);

  const SampleBatch zeros(5, target.X, Vector::Zero(10));
  CHECK(fit_target_head(t.B_star(), zeros).norm() == 0.0);

  SUBCASE("rank deficient design matches the pseudo-inverse residual") {
    Matrix X(2, 8);
    X.row(0) = target.X.row(0);
    X.row(1) = target.X.row(0);
    Vector Y(2);
    Y << 1.0, 3.0;
    const SampleBatch dup(5, X, Y);
    const Vector w = fit_target_head(t.B_star(), dup);
    const Matrix A = X * t.B_star();
    const Vector oracle = A.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(Y);
    CHECK(std::abs((A * w - Y).norm() - (A * oracle - Y).norm()) <= 1e-10);
    CHECK(w.norm() <= oracle.norm() + 1e-10);
  }
  CHECK_THROWS_AS(fit_target_head(t.B_star(), SampleBatch(5, Matrix(0, 8), Vector(0))), ConfigError);
}

TEST_CASE("minimum norm combination") {
  Matrix W(2, 3);
  W << 1, 0, 1, 0, 1, 1;
  const RelevanceVector nu = min_norm_combination(W, Vector::Unit(2, 0));
  CHECK(nu(0) == doctest::Approx(2.0 / 3.0));
  CHECK(nu(1) == doctest::Approx(-1.0 / 3.0));
  CHECK(nu(2) == doctest::Approx(1.0 / 3.0));
  for (Index m = 0; m < 3; ++m)
    CHECK(std::abs(nu(m) - frozen::kMinNormSmall[static_cast<std::size_t>(m)]) <= 1e-12);
  CHECK(std::abs(nu.norm2() - nu.values().squaredNorm()) <= 1e-12);
  CHECK_FALSE(nu.degenerate());

  Matrix W2(3, 4);
  W2 << 2, -1, 0.5, 3, 0, 1, 4, -2, 1, 1, 1, 1;
  Vector w2(3);
  w2 << 1, -2, 0.5;
  const RelevanceVector nu2 = min_norm_combination(W2, w2);
  for (Index m = 0; m < 4; ++m)
    CHECK(std::abs(nu2(m) - frozen::kMinNorm3x4[static_cast<std::size_t>(m)]) <= 1e-12);
  CHECK((W2 * nu2.values() - w2).norm() <= 1e-8 * w2.norm());

  Matrix W3(2, 3);
  W3 << 1, 2, -1, 2, 4, -2;
  const RelevanceVector nu3 = min_norm_combination(W3, Vector::Unit(2, 0));
  for (Index m = 0; m < 3; ++m)
    CHECK(std::abs(nu3(m) - frozen::kMinNormRankOne[static_cast<std::size_t>(m)]) <= 1e-12);

  Matrix padded = Matrix::Zero(3, 5);
  padded.leftCols(3) = Matrix::Identity(3, 3);
  CHECK((min_norm_combination(padded, Vector::Unit(3, 0)).values() - Vector::Unit(5, 0)).norm() <= 1e-14);

  const RelevanceVector zero = min_norm_combination(Matrix::Zero(3, 4), Vector::Ones(3));
  CHECK(zero.degenerate());
  CHECK(zero.values() == Vector::Zero(4));
  CHECK_THROWS_AS(min_norm_combination(W, Vector::Ones(3)), DimensionError);

  const RelevanceVector u = RelevanceVector::uniform(4);
  CHECK(u.values() == Vector::Constant(4, 0.25));
  CHECK(u.support(0.3).empty());
  CHECK(nu.support(0.5) == std::vector<Index>{0});
}

TEST_CASE("orthonormalize") {
  RngStream rng(3, {0, 0});
  const Matrix Q0 = random_orthonormal(7, 3, rng);
  const Matrix W = testing::gaussian(3, 5, rng);

  const Orthonormalized same = orthonormalize(Q0, W);
  CHECK((same.Q - Q0).norm() <= 1e-12);
  CHECK((same.W - W).norm() <= 1e-12);

  const Orthonormalized scaled = orthonormalize(2.0 * Q0, W);
  CHECK((scaled.W - 2.0 * W).norm() <= 1e-12);

  const Matrix B = testing::gaussian(7, 3, rng);
  const Orthonormalized r = orthonormalize(B, W);
  CHECK((r.Q * r.W - B * W).norm() <= 1e-10 * (B * W).norm());
  CHECK(orthonormality_defect(r.Q) <= 1e-12);

  Matrix deficient = B;
  deficient.col(2) = deficient.col(0);
  CHECK_THROWS_AS(orthonormalize(deficient, W), NumericalError);
}

TEST_CASE("subspace distance") {
  Matrix I = Matrix::Identity(6, 6);
  const Matrix B1 = I.leftCols(3);
  const Matrix B2 = I.rightCols(3);
  CHECK(subspace_distance(B1, B1) <= 1e-15);
  CHECK(subspace_distance(B1, B2) == doctest::Approx(1.0));
  RngStream rng(4, {0, 0});
  const Matrix R = random_orthonormal(3, 3, rng);
  CHECK(subspace_distance(B1, B1 * R) <= 1e-10);
  const Matrix C = random_orthonormal(6, 3, rng);
  const double dist = subspace_distance(B1, C);
  CHECK(dist >= 0.0);
  CHECK(dist <= 1.0);
  CHECK_THROWS_AS(subspace_distance(B1, 2.0 * B2), ConfigError);
}

TEST_CASE("solver config validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.rel_objective_tol = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.pinv_rcond = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(init_mode_from_string("random-orthonormal") == InitMode::RandomOrthonormal);
  CHECK(to_string(InitMode::StackedEstimates) == "svd-of-stacked-estimates");
  CHECK_THROWS_AS(init_mode_from_string("pca"), ConfigError);
}
