#include <doctest.h>

#include <cmath>
#include <string>

#include "amtl/env.hpp"
#include "amtl/error.hpp"
#include "amtl/solver.hpp"
#include "frozen_values.hpp"
#include "helpers.hpp"

using namespace amtl;

TEST_CASE("stream outputs match the reference SplitMix64 construction") {
  RngStream rng(42, {3, 7});
  for (auto expected : frozen::kStream_42_3_7)
    CHECK(rng() == expected);
}

TEST_CASE("streams are independent of each other and reproducible") {
  RngStream a(5, {1, 2}), b(5, {1, 2}), c(5, {2, 1});
  for (int i = 0; i < 100; ++i) {
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
  }
  RngStream u(1, {0, 0});
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("dimension validation names the fields") {
  try {
    ProblemDims{4, 5, 6}.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("K=5") != std::string::npos);
    CHECK(msg.find("d=4") != std::string::npos);
  }
  CHECK_THROWS_AS(ProblemDims::make(10, 3, 2), ConfigError);
  CHECK_THROWS_AS(ProblemDims::make(0, 0, 1), ConfigError);
  CHECK_NOTHROW(ProblemDims::make(10, 3, 3));
}

TEST_CASE("sparse example heads") {
  SUBCASE("d=10, K=3, M=5") {
    const GroundTruth t = make_sparse_example(ProblemDims::make(10, 3, 5), 0.0);
    Matrix expected = Matrix::Zero(3, 5);
    expected(0, 0) = expected(1, 1) = expected(0, 2) = expected(1, 3) = expected(2, 4) = 1.0;
    CHECK(t.W_star() == expected);
    CHECK(t.w_target() == Vector::Unit(3, 2));
  }
  SUBCASE("d=4, K=2, M=2") {
    const GroundTruth t = make_sparse_example(ProblemDims::make(4, 2, 2), 0.0);
    CHECK(t.W_star() == Matrix::Identity(2, 2));
  }
  SUBCASE("rejects K < 2 and M < K") {
    CHECK_THROWS_AS(make_sparse_example(ProblemDims::make(4, 1, 3), 0.0), ConfigError);
    CHECK_THROWS_AS(make_sparse_example(ProblemDims{4, 3, 2}, 0.0), ConfigError);
  }
}

TEST_CASE("sparse example relevance is the last basis vector") {
  for (auto dims : {ProblemDims::make(10, 3, 5), ProblemDims::make(30, 5, 20), ProblemDims::make(6, 2, 9),
                    ProblemDims::make(12, 4, 4)}) {
    const GroundTruth t = make_sparse_example(dims, 0.5, 3);
    const RelevanceVector nu = min_norm_combination(t.W_star(), t.w_target());
    CHECK((nu.values() - Vector::Unit(dims.M, dims.M - 1)).norm() <= 1e-10);
    CHECK(orthonormality_defect(t.B_star()) <= 1e-10);
    CHECK(t.sigma_min_W() > 0.0);
    CHECK(t.head_norm_bound() == doctest::Approx(1.0));
  }
}

TEST_CASE("random environment construction") {
  const auto dims = ProblemDims::make(15, 4, 9);
  const GroundTruth a = make_random_environment(dims, 0.2, 1.0, 7);
  for (int m = 1; m <= dims.M; ++m)
    CHECK(a.head(m).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(smallest_singular_value(a.W_star()) >= 0.1);
  CHECK(orthonormality_defect(a.B_star()) <= 1e-10);
  CHECK(identical(a, make_random_environment(dims, 0.2, 1.0, 7)));
  CHECK_FALSE(identical(a, make_random_environment(dims, 0.2, 1.0, 8)));

  const GroundTruth b = make_random_environment(dims, 0.2, 2.5, 7);
  for (int m = 1; m <= dims.M; ++m)
    CHECK(b.head(m).norm() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(smallest_singular_value(b.W_star()) >= 0.25);
  // The target head is realizable from the sources.
  const RelevanceVector nu = min_norm_combination(b.W_star(), b.w_target());
  CHECK((b.W_star() * nu.values() - b.w_target()).norm() <= 1e-10);
}

TEST_CASE("ground truth constructor rejects broken parameters") {
  const auto dims = ProblemDims::make(4, 2, 2);
  Matrix B = Matrix::Zero(4, 2);
  B(0, 0) = B(1, 1) = 1.0;
  CHECK_NOTHROW(GroundTruth(dims, B, Matrix::Identity(2, 2), Vector::Ones(2), 0.1));
  CHECK_THROWS_AS(GroundTruth(dims, 2.0 * B, Matrix::Identity(2, 2), Vector::Ones(2), 0.1), ConfigError);
  CHECK_THROWS_AS(GroundTruth(dims, B, Matrix::Ones(2, 2), Vector::Ones(2), 0.1), ConfigError);
  CHECK_THROWS_AS(GroundTruth(dims, B, Matrix::Identity(2, 2), Vector::Ones(3), 0.1), DimensionError);
  CHECK_THROWS_AS(GroundTruth(dims, B, Matrix::Identity(2, 2), Vector::Ones(2), -1.0), ConfigError);
}

TEST_CASE("sampling") {
  const GroundTruth noiseless = make_sparse_example(ProblemDims::make(8, 3, 4), 0.0, 2);
  RngStream rng(1, {2, 0});
  const SampleBatch b = sample_task(noiseless, 2, 50, rng);
  CHECK(b.task == 2);
  CHECK(b.X.rows() == 50);
  CHECK(b.X.cols() == 8);
  CHECK((b.Y - b.X * noiseless.regression_vector(2)).cwiseAbs().maxCoeff() == 0.0);

  RngStream rng0(1, {2, 0});
  CHECK(sample_task(noiseless, 5, 0, rng0).empty());
  CHECK_THROWS_AS(sample_task(noiseless, 0, 3, rng0), ConfigError);
  CHECK_THROWS_AS(sample_task(noiseless, 6, 3, rng0), ConfigError);

  const GroundTruth noisy = make_sparse_example(ProblemDims::make(8, 3, 4), 0.4, 2);
  RngStream r1(9, {1, 3}), r2(9, {1, 3});
  const SampleBatch x1 = sample_task(noisy, 1, 20, r1);
  const SampleBatch x2 = sample_task(noisy, 1, 20, r2);
  CHECK(x1.X == x2.X);
  CHECK(x1.Y == x2.Y);
}

TEST_CASE("second moment of the output matches ||w||^2 + sigma^2") {
  const GroundTruth t = make_random_environment(ProblemDims::make(6, 2, 3), 0.7, 1.3, 4);
  RngStream rng(17, {1, 0});
  const Index n = 100000;
  const SampleBatch b = sample_task(t, 1, n, rng);
  const double mean_sq = b.Y.squaredNorm() / static_cast<double>(n);
  const double s2 = t.head(1).squaredNorm() + 0.49;
  // y ~ N(0, s2) so Var(y^2) = 2 s2^2.
  const double se = std::sqrt(2.0) * s2 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean_sq - s2) <= 3.0 * se);
}

TEST_CASE("concatenation") {
  const GroundTruth t = make_sparse_example(ProblemDims::make(5, 2, 3), 0.1);
  RngStream rng(0, {1, 0});
  const SampleBatch a = sample_task(t, 1, 3, rng);
  const SampleBatch b = sample_task(t, 1, 2, rng);
  const SampleBatch c = sample_task(t, 1, 4, rng);
  const SampleBatch ab = concat_batches(a, b);
  CHECK(ab.size() == 5);
  CHECK(ab.X.topRows(3) == a.X);
  CHECK(ab.X.bottomRows(2) == b.X);
  CHECK(ab.Y.tail(2) == b.Y);

  const SampleBatch empty(1, Matrix(0, 5), Vector(0));
  const SampleBatch same = concat_batches(a, empty);
  CHECK(same.X == a.X);
  CHECK(same.Y == a.Y);

  const SampleBatch left = concat_batches(ab, c);
  const SampleBatch right = concat_batches(a, concat_batches(b, c));
  CHECK(left.X == right.X);
  CHECK(left.Y == right.Y);

  RngStream rng2(0, {2, 0});
  CHECK_THROWS_AS(concat_batches(a, sample_task(t, 2, 1, rng2)), ConfigError);
  CHECK_THROWS_AS(SampleBatch(1, Matrix(3, 5), Vector(2)), DimensionError);
}
