#pragma once

#include <span>

#include "mvpose/pose_core.hpp"

namespace mvpose {

/// Pose distance used by every loss term.
enum class Distance { se, nse };

/// How poses are normalized in the rotation-estimation objective.
enum class NormMode {
  full_pose,   ///< divide by the norm of the whole pose
  torso_only,  ///< divide by the norm of the torso columns only
};

struct AlignmentResult {
  Rotation3 rotation;
  double scale = 1.0;
  /// Value of the minimized objective at the returned solution.
  double residual = 0.0;
};

/// Squared Frobenius distance ||p1 - p2||^2.
double se_distance(const Pose& p1, const Pose& p2);

/// Scale-normalized squared distance ||p1/|p1| - p2/|p2|||^2, in [0, 4].
/// Throws DegenerateError if either norm is below kDegenerateNorm.
double nse_distance(const Pose& p1, const Pose& p2);

/// d se_distance / d p1 = 2 (p1 - p2).
Joints se_gradient(const Pose& p1, const Pose& p2);

/// d nse_distance / d p1 = (2/|p1|) (I - u1 u1^T)(u1 - u2), u_i = p_i / |p_i|.
Joints nse_gradient(const Pose& p1, const Pose& p2);

double pose_distance(Distance d, const Pose& p1, const Pose& p2);
Joints pose_distance_gradient(Distance d, const Pose& p1, const Pose& p2);

/// Rotation R minimizing sum_j |R src_j - dst_j|^2 over proper rotations
/// (Kabsch with determinant correction). Columns are paired point sets.
/// Throws DegenerateError when the cross-covariance has rank < 2.
Rotation3 kabsch_rotation(const Joints& src, const Joints& dst);

/// Rotation taking `src` onto `dst` using only the `torso` joints of the
/// scale-normalized poses. The residual is the normalized torso objective.
AlignmentResult estimate_rotation(const Pose& src, const Pose& dst, std::span<const int> torso,
                                  NormMode mode = NormMode::full_pose);

/// s* = <pred, gt> / <pred, pred>, the minimizer of ||s pred - gt||^2.
double optimal_scale(const Pose& pred, const Pose& gt);

/// Similarity alignment over all joints minimizing ||s R pred - gt||^2.
AlignmentResult procrustes_align(const Pose& pred, const Pose& gt);

}  // namespace mvpose
