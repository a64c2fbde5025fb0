#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace mvpose {

/// 3 x N_J joint matrix, one joint per column, millimetres.
using Joints = Eigen::Matrix3Xd;

/// Degeneracy threshold for norms and bone lengths (mm).
inline constexpr double kDegenerateNorm = 1e-6;

/// Proper rotation matrix. Construction checks orthonormality and det = +1.
class Rotation3 {
 public:
  Rotation3() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Rotation3(const Eigen::Matrix3d& m);

  static Rotation3 identity() { return {}; }
  /// Rodrigues formula; `axis` need not be unit length but must be non-zero.
  static Rotation3 from_axis_angle(const Eigen::Vector3d& axis, double angle_rad);
  static Rotation3 about_x(double angle_rad);
  static Rotation3 about_y(double angle_rad);
  static Rotation3 about_z(double angle_rad);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation3 inverse() const;
  Rotation3 operator*(const Rotation3& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

  /// Geodesic distance to `other` in degrees.
  double angle_to_deg(const Rotation3& other) const;

 private:
  Eigen::Matrix3d m_;
};

/// Pelvis-relative 3D pose. The pelvis is joint 0 and its column is exactly
/// zero; all entries are finite.
class Pose {
 public:
  Pose() = default;
  /// Takes joints that are already pelvis-relative. Throws DegenerateError on
  /// non-finite entries and ConfigError when the pelvis column is not zero.
  explicit Pose(Joints joints);

  static Pose zeros(int n_joints);

  int n_joints() const { return static_cast<int>(joints_.cols()); }
  const Joints& joints() const { return joints_; }
  Eigen::Vector3d joint(int j) const { return joints_.col(j); }
  /// Column-major flattening: x0 y0 z0 x1 y1 z1 ...
  Eigen::Map<const Eigen::VectorXd> flat() const {
    return {joints_.data(), joints_.size()};
  }

  Pose rotated(const Rotation3& r) const;
  Pose scaled(double s) const;

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.joints_.cols() == b.joints_.cols() && a.joints_ == b.joints_;
  }

 private:
  Joints joints_;
};

/// (a, b, c) joint indices; the angle is measured at b.
using JointTriple = std::array<int, 3>;

struct LimbTriples {
  /// (shoulder, hip, knee) per side.
  std::vector<JointTriple> hip;
  /// (hip, knee, ankle) per side.
  std::vector<JointTriple> knee;

  friend bool operator==(const LimbTriples&, const LimbTriples&) = default;
};

/// Joint tree rooted at joint 0 (the pelvis) with bone lengths, torso subset,
/// per-joint mass fractions and limb triples for flexion metrics.
class Skeleton {
 public:
  /// `bone_lengths_mm` and `rest_directions` have one entry per joint; the
  /// root entries are ignored (conventionally 0). Throws ConfigError on any
  /// violated invariant.
  Skeleton(std::vector<std::string> names, std::vector<int> parent,
           std::vector<double> bone_lengths_mm, std::vector<int> torso_set,
           std::vector<double> segment_weights, LimbTriples limbs,
           std::vector<Eigen::Vector3d> rest_directions = {});

  /// 17-joint skeleton with the layout of `data/skeleton_h17.json`.
  static Skeleton default_h17();

  int n_joints() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& parent() const { return parent_; }
  const std::vector<double>& bone_lengths() const { return bone_lengths_; }
  const std::vector<int>& torso_set() const { return torso_set_; }
  const std::vector<double>& segment_weights() const { return segment_weights_; }
  const LimbTriples& limbs() const { return limbs_; }
  /// Joints ordered so that every parent precedes its children; starts at 0.
  const std::vector<int>& topological_order() const { return order_; }
  bool has_rest_pose() const { return !rest_directions_.empty(); }
  /// Unit bone directions of the rest pose (body frame, y up).
  const std::vector<Eigen::Vector3d>& rest_directions() const { return rest_directions_; }
  /// Rest directions as passed to the constructor (serialized form).
  const std::vector<Eigen::Vector3d>& declared_rest_directions() const { return declared_directions_; }

  /// Rest pose assembled from rest directions and bone lengths.
  Pose rest_pose() const;

  /// Copy with a different torso subset (validated).
  Skeleton with_torso_set(std::vector<int> torso) const;

  friend bool operator==(const Skeleton&, const Skeleton&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<int> parent_;
  std::vector<double> bone_lengths_;
  std::vector<int> torso_set_;
  std::vector<double> segment_weights_;
  LimbTriples limbs_;
  std::vector<Eigen::Vector3d> declared_directions_;
  std::vector<Eigen::Vector3d> rest_directions_;
  std::vector<int> order_;
};

/// Subtracts the pelvis column from every column.
Pose center_at_pelvis(const Joints& raw_joints);

/// Frobenius norm of the joint matrix.
double pose_norm(const Pose& p);

/// Rescales every bone to the skeleton's length while keeping its direction.
/// Children are carried along rigidly. Throws DegenerateError naming the
/// joint when a bone of the input has zero length.
Pose normalize_bone_lengths(const Pose& p, const Skeleton& skeleton);

/// Per-bone lengths measured on a pose (root entry 0).
std::vector<double> measure_bone_lengths(const Pose& p, const Skeleton& skeleton);

nlohmann::json skeleton_to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(const nlohmann::json& j);
Skeleton load_skeleton(const std::filesystem::path& path);

/// Row-major 3 x N_J flat array.
nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);

nlohmann::json rotation_to_json(const Rotation3& r);
Rotation3 rotation_from_json(const nlohmann::json& j);

/// Reads a whole JSON document; ConfigError naming the path on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mvpose
