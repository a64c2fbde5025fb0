#include "mvpose/pose_core.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

constexpr double kRotationTolerance = 1e-9;

void check_finite(const Joints& j, const char* what) {
  if (!j.allFinite()) {
    throw DegenerateError(std::string(what) + ": non-finite joint coordinates");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Rotation3

Rotation3::Rotation3(const Eigen::Matrix3d& m) : m_(m) {
  if (!m.allFinite()) {
    throw DegenerateError("rotation: non-finite entries");
  }
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > kRotationTolerance) {
    throw ConfigError("rotation: matrix is not orthonormal (max |R^T R - I| = " +
                      std::to_string(ortho) + ")");
  }
  if (std::abs(m.determinant() - 1.0) > kRotationTolerance) {
    throw ConfigError("rotation: determinant is not +1 (reflection)");
  }
}

Rotation3 Rotation3::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) {
    throw DegenerateError("rotation: zero rotation axis");
  }
  return Rotation3(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix());
}

Rotation3 Rotation3::about_x(double a) { return from_axis_angle(Eigen::Vector3d::UnitX(), a); }
Rotation3 Rotation3::about_y(double a) { return from_axis_angle(Eigen::Vector3d::UnitY(), a); }
Rotation3 Rotation3::about_z(double a) { return from_axis_angle(Eigen::Vector3d::UnitZ(), a); }

Rotation3 Rotation3::inverse() const {
  Rotation3 r;
  r.m_ = m_.transpose();
  return r;
}

Rotation3 Rotation3::operator*(const Rotation3& other) const {
  // Products of proper rotations stay proper; skip re-validation so that long
  // chains do not trip the tolerance on accumulated rounding.
  Rotation3 r;
  r.m_ = m_ * other.m_;
  return r;
}

double Rotation3::angle_to_deg(const Rotation3& other) const {
  const Eigen::Matrix3d rel = m_ * other.m_.transpose();
  // atan2 form stays accurate near 0 and 180 degrees where acos does not.
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double angle = std::atan2(0.5 * axis.norm(), 0.5 * (rel.trace() - 1.0));
  return angle * 180.0 / M_PI;
}

// ---------------------------------------------------------------------------
// Pose

Pose::Pose(Joints joints) : joints_(std::move(joints)) {
  check_finite(joints_, "pose");
  if (joints_.cols() > 0 && !joints_.col(0).isZero(0.0)) {
    throw ConfigError("pose: pelvis column must be exactly zero");
  }
}

Pose Pose::zeros(int n_joints) { return Pose(Joints::Zero(3, n_joints)); }

Pose Pose::rotated(const Rotation3& r) const {
  Pose out;
  out.joints_ = r.matrix() * joints_;
  return out;
}

Pose Pose::scaled(double s) const {
  if (!std::isfinite(s)) {
    throw DegenerateError("pose: non-finite scale factor");
  }
  Pose out;
  out.joints_ = s * joints_;
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton

Skeleton::Skeleton(std::vector<std::string> names, std::vector<int> parent,
                   std::vector<double> bone_lengths_mm, std::vector<int> torso_set,
                   std::vector<double> segment_weights, LimbTriples limbs,
                   std::vector<Eigen::Vector3d> rest_directions)
    : names_(std::move(names)),
      parent_(std::move(parent)),
      bone_lengths_(std::move(bone_lengths_mm)),
      torso_set_(std::move(torso_set)),
      segment_weights_(std::move(segment_weights)),
      limbs_(std::move(limbs)),
      declared_directions_(std::move(rest_directions)) {
  const int n = static_cast<int>(names_.size());
  if (n < 1) throw ConfigError("skeleton: no joints");
  if (static_cast<int>(parent_.size()) != n || static_cast<int>(bone_lengths_.size()) != n ||
      static_cast<int>(segment_weights_.size()) != n) {
    throw ConfigError("skeleton: names, parent, bone_lengths_mm and segment_weights must have equal length");
  }
  if (parent_[0] != 0) {
    throw ConfigError("skeleton: joint 0 must be the root (parent[0] == 0)");
  }
  std::vector<std::vector<int>> children(n);
  for (int j = 1; j < n; ++j) {
    const int p = parent_[j];
    if (p < 0 || p >= n || p == j) {
      throw ConfigError("skeleton: invalid parent for joint '" + names_[j] + "'");
    }
    children[p].push_back(j);
    if (!(bone_lengths_[j] > 0.0) || !std::isfinite(bone_lengths_[j])) {
      throw ConfigError("skeleton: bone length of joint '" + names_[j] + "' must be positive");
    }
  }
  // Breadth-first from the root; a cycle leaves joints unvisited.
  order_.reserve(n);
  order_.push_back(0);
  for (std::size_t head = 0; head < order_.size(); ++head) {
    for (int c : children[order_[head]]) order_.push_back(c);
  }
  if (static_cast<int>(order_.size()) != n) {
    throw ConfigError("skeleton: parent array does not form a single tree rooted at joint 0");
  }

  double weight_sum = 0.0;
  for (double w : segment_weights_) {
    if (!(w >= 0.0)) throw ConfigError("skeleton: segment weights must be non-negative");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw ConfigError("skeleton: segment weights must sum to 1 (got " + std::to_string(weight_sum) + ")");
  }

  if (torso_set_.size() < 3) throw ConfigError("skeleton: torso set needs at least 3 joints");
  std::vector<bool> seen(n, false);
  for (int t : torso_set_) {
    if (t < 0 || t >= n) throw ConfigError("skeleton: torso index out of range");
    if (seen[t]) throw ConfigError("skeleton: duplicate torso index");
    seen[t] = true;
  }

  for (const auto* group : {&limbs_.hip, &limbs_.knee}) {
    for (const auto& tri : *group) {
      for (int idx : tri) {
        if (idx < 0 || idx >= n) throw ConfigError("skeleton: limb triple index out of range");
      }
    }
  }

  if (!declared_directions_.empty()) {
    if (static_cast<int>(declared_directions_.size()) != n) {
      throw ConfigError("skeleton: rest_directions must have one entry per joint");
    }
    rest_directions_.assign(n, Eigen::Vector3d::Zero());
    for (int j = 1; j < n; ++j) {
      const double len = declared_directions_[j].norm();
      if (!(len > 0.0) || !std::isfinite(len)) {
        throw ConfigError("skeleton: zero rest direction for '" + names_[j] + "'");
      }
      rest_directions_[j] = declared_directions_[j] / len;
    }
  }
}

Skeleton Skeleton::default_h17() {
  std::vector<std::string> names = {
      "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
      "spine", "neck", "head", "head_top",
      "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
  std::vector<int> parent = {0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  std::vector<double> bones = {0.0,   130.0, 450.0, 440.0, 130.0, 450.0, 440.0, 240.0, 250.0,
                               110.0, 120.0, 150.0, 280.0, 250.0, 150.0, 280.0, 250.0};
  std::vector<int> torso = {0, 7, 8, 11, 14, 1, 4};
  // Lumped segment masses; non-authoritative defaults.
  std::vector<double> weights = {0.14, 0.05, 0.10, 0.04, 0.05, 0.10, 0.04, 0.14, 0.10,
                                 0.04, 0.04, 0.03, 0.03, 0.02, 0.03, 0.03, 0.02};
  LimbTriples limbs;
  limbs.hip = {{14, 1, 2}, {11, 4, 5}};
  limbs.knee = {{1, 2, 3}, {4, 5, 6}};
  std::vector<Eigen::Vector3d> dirs = {
      {0, 0, 0},        {-1, 0, 0},  {0, -1, 0},       {0, -1, 0.05}, {1, 0, 0},
      {0, -1, 0},       {0, -1, 0.05}, {0, 1, 0.08},   {0, 1, -0.05}, {0, 1, 0.25},
      {0, 1, 0},        {1, 0.05, 0}, {0, -1, 0.05},   {0, -1, 0.1},  {-1, 0.05, 0},
      {0, -1, 0.05},    {0, -1, 0.1}};
  return Skeleton(std::move(names), std::move(parent), std::move(bones), std::move(torso),
                  std::move(weights), std::move(limbs), std::move(dirs));
}

Pose Skeleton::rest_pose() const {
  if (!has_rest_pose()) throw ConfigError("skeleton: no rest directions defined");
  Joints j = Joints::Zero(3, n_joints());
  for (std::size_t k = 1; k < order_.size(); ++k) {
    const int c = order_[k];
    j.col(c) = j.col(parent_[c]) + bone_lengths_[c] * rest_directions_[c];
  }
  return Pose(std::move(j));
}

Skeleton Skeleton::with_torso_set(std::vector<int> torso) const {
  return Skeleton(names_, parent_, bone_lengths_, std::move(torso), segment_weights_, limbs_,
                  declared_directions_);
}

// ---------------------------------------------------------------------------
// Operations

Pose center_at_pelvis(const Joints& raw_joints) {
  check_finite(raw_joints, "center_at_pelvis");
  if (raw_joints.cols() == 0) return Pose{};
  Joints centered = raw_joints.colwise() - raw_joints.col(0);
  return Pose(std::move(centered));
}

double pose_norm(const Pose& p) { return p.joints().norm(); }

std::vector<double> measure_bone_lengths(const Pose& p, const Skeleton& skeleton) {
  if (p.n_joints() != skeleton.n_joints()) {
    throw ShapeError("measure_bone_lengths: pose and skeleton joint counts differ");
  }
  std::vector<double> out(skeleton.n_joints(), 0.0);
  for (int j = 1; j < skeleton.n_joints(); ++j) {
    out[j] = (p.joint(j) - p.joint(skeleton.parent()[j])).norm();
  }
  return out;
}

Pose normalize_bone_lengths(const Pose& p, const Skeleton& skeleton) {
  if (p.n_joints() != skeleton.n_joints()) {
    throw ShapeError("normalize_bone_lengths: pose and skeleton joint counts differ");
  }
  const auto& order = skeleton.topological_order();
  const auto& parent = skeleton.parent();
  Joints out = Joints::Zero(3, p.n_joints());
  for (std::size_t k = 1; k < order.size(); ++k) {
    const int c = order[k];
    const Eigen::Vector3d bone = p.joint(c) - p.joint(parent[c]);
    const double len = bone.norm();
    if (!(len > kDegenerateNorm)) {
      throw DegenerateError("normalize_bone_lengths: zero-length bone at joint '" +
                            skeleton.names()[c] + "'");
    }
    out.col(c) = out.col(parent[c]) + (skeleton.bone_lengths()[c] / len) * bone;
  }
  return Pose(std::move(out));
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json skeleton_to_json(const Skeleton& s) {
  nlohmann::json j;
  j["names"] = s.names();
  j["parent"] = s.parent();
  j["bone_lengths_mm"] = s.bone_lengths();
  j["torso_set"] = s.torso_set();
  j["segment_weights"] = s.segment_weights();
  j["limb_pairs"] = {{"hip", s.limbs().hip}, {"knee", s.limbs().knee}};
  if (s.has_rest_pose()) {
    auto dirs = nlohmann::json::array();
    for (const auto& d : s.declared_rest_directions()) dirs.push_back({d.x(), d.y(), d.z()});
    j["rest_directions"] = std::move(dirs);
  }
  return j;
}

Skeleton skeleton_from_json(const nlohmann::json& j) {
  try {
    LimbTriples limbs;
    if (j.contains("limb_pairs")) {
      const auto& lp = j.at("limb_pairs");
      if (lp.contains("hip")) limbs.hip = lp.at("hip").get<std::vector<JointTriple>>();
      if (lp.contains("knee")) limbs.knee = lp.at("knee").get<std::vector<JointTriple>>();
    }
    std::vector<Eigen::Vector3d> dirs;
    if (j.contains("rest_directions")) {
      for (const auto& d : j.at("rest_directions")) {
        const auto v = d.get<std::array<double, 3>>();
        dirs.emplace_back(v[0], v[1], v[2]);
      }
    }
    return Skeleton(j.at("names").get<std::vector<std::string>>(),
                    j.at("parent").get<std::vector<int>>(),
                    j.at("bone_lengths_mm").get<std::vector<double>>(),
                    j.at("torso_set").get<std::vector<int>>(),
                    j.at("segment_weights").get<std::vector<double>>(), std::move(limbs),
                    std::move(dirs));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("skeleton: malformed JSON: ") + e.what());
  }
}

Skeleton load_skeleton(const std::filesystem::path& path) {
  return skeleton_from_json(read_json_file(path));
}

nlohmann::json pose_to_json(const Pose& p) {
  auto arr = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < p.n_joints(); ++c) arr.push_back(p.joints()(r, c));
  }
  return arr;
}

Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() % 3 != 0) {
    throw ConfigError("pose: expected a flat array of 3 x N_J numbers");
  }
  const int n = static_cast<int>(j.size() / 3);
  Joints m(3, n);
  try {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < n; ++c) m(r, c) = j[r * n + c].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pose: ") + e.what());
  }
  return Pose(std::move(m));
}

nlohmann::json rotation_to_json(const Rotation3& r) {
  auto arr = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) arr.push_back(r.matrix()(i, k));
  }
  return arr;
}

Rotation3 rotation_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 9) throw ConfigError("rotation: expected 9 row-major numbers");
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = j[i * 3 + k].get<double>();
  }
  return Rotation3(m);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

}  // namespace mvpose
