#include "mvpose/alignment.hpp"

#include <string>

#include <Eigen/LU>

#include "mvpose/error.hpp"
#include "mvpose/linalg.hpp"

namespace mvpose {

namespace {

constexpr double kRankRatio = 1e-10;

void check_same_shape(const Pose& a, const Pose& b, const char* op) {
  if (a.n_joints() != b.n_joints()) {
    throw ShapeError(std::string(op) + ": joint counts differ (" + std::to_string(a.n_joints()) +
                     " vs " + std::to_string(b.n_joints()) + ")");
  }
}

double checked_norm(const Pose& p, const char* op) {
  const double n = pose_norm(p);
  if (!(n > kDegenerateNorm)) {
    throw DegenerateError(std::string(op) + ": pose norm below degeneracy threshold");
  }
  return n;
}

Joints gather(const Joints& j, std::span<const int> idx) {
  Joints out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = j.col(idx[k]);
  return out;
}

}  // namespace

double se_distance(const Pose& p1, const Pose& p2) {
  check_same_shape(p1, p2, "se_distance");
  return (p1.joints() - p2.joints()).squaredNorm();
}

double nse_distance(const Pose& p1, const Pose& p2) {
  check_same_shape(p1, p2, "nse_distance");
  const double n1 = checked_norm(p1, "nse_distance");
  const double n2 = checked_norm(p2, "nse_distance");
  return (p1.joints() / n1 - p2.joints() / n2).squaredNorm();
}

Joints se_gradient(const Pose& p1, const Pose& p2) {
  check_same_shape(p1, p2, "se_gradient");
  return 2.0 * (p1.joints() - p2.joints());
}

Joints nse_gradient(const Pose& p1, const Pose& p2) {
  check_same_shape(p1, p2, "nse_gradient");
  const double n1 = checked_norm(p1, "nse_gradient");
  const double n2 = checked_norm(p2, "nse_gradient");
  const Joints u1 = p1.joints() / n1;
  const Joints u2 = p2.joints() / n2;
  // (I - u1 u1^T)(u1 - u2), projected through the difference so that equal
  // poses give an exactly zero gradient.
  const Joints diff = u1 - u2;
  const double c = (u1.array() * diff.array()).sum();
  return (2.0 / n1) * (diff - c * u1);
}

double pose_distance(Distance d, const Pose& p1, const Pose& p2) {
  return d == Distance::se ? se_distance(p1, p2) : nse_distance(p1, p2);
}

Joints pose_distance_gradient(Distance d, const Pose& p1, const Pose& p2) {
  return d == Distance::se ? se_gradient(p1, p2) : nse_gradient(p1, p2);
}

Rotation3 kabsch_rotation(const Joints& src, const Joints& dst) {
  if (src.cols() != dst.cols()) throw ShapeError("kabsch_rotation: point counts differ");
  const Eigen::Matrix3d h = src * dst.transpose();
  const Svd3 svd = svd3(h);
  if (!(svd.s(0) > 0.0) || svd.s(1) <= kRankRatio * svd.s(0)) {
    throw DegenerateError("kabsch_rotation: rank-deficient point configuration (collinear or coincident)");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.v * svd.u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Eigen::Matrix3d r = svd.v * d * svd.u.transpose();
  return Rotation3(r);
}

AlignmentResult estimate_rotation(const Pose& src, const Pose& dst, std::span<const int> torso,
                                  NormMode mode) {
  check_same_shape(src, dst, "estimate_rotation");
  if (torso.size() < 3) throw ConfigError("estimate_rotation: torso set needs at least 3 joints");
  for (int t : torso) {
    if (t < 0 || t >= src.n_joints()) throw ConfigError("estimate_rotation: torso index out of range");
  }
  Joints a = gather(src.joints(), torso);
  Joints b = gather(dst.joints(), torso);
  const double na = mode == NormMode::full_pose ? pose_norm(src) : a.norm();
  const double nb = mode == NormMode::full_pose ? pose_norm(dst) : b.norm();
  if (!(na > kDegenerateNorm) || !(nb > kDegenerateNorm)) {
    throw DegenerateError("estimate_rotation: degenerate torso (near-zero norm)");
  }
  a /= na;
  b /= nb;
  AlignmentResult out;
  out.rotation = kabsch_rotation(a, b);
  out.scale = 1.0;
  out.residual = (out.rotation.matrix() * a - b).squaredNorm();
  return out;
}

double optimal_scale(const Pose& pred, const Pose& gt) {
  check_same_shape(pred, gt, "optimal_scale");
  checked_norm(pred, "optimal_scale");
  return (pred.joints().array() * gt.joints().array()).sum() / pred.joints().squaredNorm();
}

AlignmentResult procrustes_align(const Pose& pred, const Pose& gt) {
  check_same_shape(pred, gt, "procrustes_align");
  checked_norm(pred, "procrustes_align");
  checked_norm(gt, "procrustes_align");
  AlignmentResult out;
  out.rotation = kabsch_rotation(pred.joints(), gt.joints());
  const Joints rp = out.rotation.matrix() * pred.joints();
  out.scale = (rp.array() * gt.joints().array()).sum() / pred.joints().squaredNorm();
  out.residual = (out.scale * rp - gt.joints()).squaredNorm();
  return out;
}

}  // namespace mvpose
