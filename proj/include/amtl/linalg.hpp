#pragma once

#include <Eigen/Dense>

namespace amtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Largest |A^T A - I| entry; zero for an exactly orthonormal A.
inline double orthonormality_defect(const Matrix &a) {
  const Matrix gram = a.transpose() * a;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

/// K-th largest singular value of A, K = min(rows, cols).
inline double smallest_singular_value(const Matrix &a) {
  if (a.size() == 0)
    return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

} // namespace amtl
