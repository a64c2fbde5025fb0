#pragma once

#include <Eigen/Core>

namespace mvpose {

/// a = u * diag(s) * v^T with s sorted descending and u, v orthonormal
/// (either may have determinant -1).
struct Svd3 {
  Eigen::Matrix3d u;
  Eigen::Vector3d s;
  Eigen::Matrix3d v;
};

/// One-sided Jacobi SVD of a 3x3 matrix. Null-space columns of u are
/// completed by cross products so u stays orthonormal for rank-deficient a.
Svd3 svd3(const Eigen::Matrix3d& a);

}  // namespace mvpose
