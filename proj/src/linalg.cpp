#include "mvpose/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

namespace mvpose {

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kNullRatio = 1e-13;

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& u) {
  // Cross with the axis least aligned with u.
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();
  int k = 0;
  u.cwiseAbs().minCoeff(&k);
  axis(k) = 1.0;
  return u.cross(axis).normalized();
}

}  // namespace

Svd3 svd3(const Eigen::Matrix3d& a) {
  Eigen::Matrix3d b = a;
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  const double eps = std::numeric_limits<double>::epsilon();

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double alpha = b.col(p).squaredNorm();
        const double beta = b.col(q).squaredNorm();
        const double gamma = b.col(p).dot(b.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Eigen::Vector3d bp = b.col(p);
        b.col(p) = c * bp - s * b.col(q);
        b.col(q) = s * bp + c * b.col(q);
        const Eigen::Vector3d vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    }
    if (!rotated) break;
  }

  std::array<int, 3> idx = {0, 1, 2};
  Eigen::Vector3d norms(b.col(0).norm(), b.col(1).norm(), b.col(2).norm());
  std::sort(idx.begin(), idx.end(), [&](int i, int k) { return norms(i) > norms(k); });

  Svd3 out;
  for (int k = 0; k < 3; ++k) {
    out.s(k) = norms(idx[k]);
    out.v.col(k) = v.col(idx[k]);
  }
  const Eigen::Vector3d b0 = b.col(idx[0]);
  const Eigen::Vector3d b1 = b.col(idx[1]);
  const Eigen::Vector3d b2 = b.col(idx[2]);

  const double smax = out.s(0);
  if (!(smax > 0.0)) {
    out.u.setIdentity();
    return out;
  }
  Eigen::Vector3d u0 = b0 / out.s(0);
  Eigen::Vector3d u1;
  if (out.s(1) > kNullRatio * smax) {
    u1 = b1 - u0.dot(b1) * u0;
    u1.normalize();
  } else {
    u1 = any_orthogonal(u0);
  }
  Eigen::Vector3d u2 = u0.cross(u1);
  if (out.s(2) > kNullRatio * smax && u2.dot(b2) < 0.0) u2 = -u2;
  out.u.col(0) = u0;
  out.u.col(1) = u1;
  out.u.col(2) = u2;
  return out;
}

}  // namespace mvpose
