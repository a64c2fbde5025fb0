#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Geometry>

#include "doctest.h"
#include "mvpose/error.hpp"
#include "mvpose/pose_core.hpp"
#include "test_support.hpp"

using namespace mvpose;
using namespace mvpose::testing;

TEST_CASE("rotation construction rejects non-rotations") {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  CHECK_NOTHROW(Rotation3{m});
  m(0, 0) = -1.0;  // reflection: orthonormal, det -1
  CHECK_THROWS_AS(Rotation3{m}, ConfigError);
  m = Eigen::Matrix3d::Identity() * 1.01;
  CHECK_THROWS_AS(Rotation3{m}, ConfigError);
}

TEST_CASE("axis-angle matches an independent quaternion construction") {
  TestRng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d axis = Eigen::Vector3d::Random() * 3.0 + Eigen::Vector3d(0.1, 0.0, 0.0);
    const double angle = uniform(rng, -M_PI, M_PI);
    const Eigen::Matrix3d oracle = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    CHECK((Rotation3::from_axis_angle(axis, angle).matrix() - oracle).norm() < 1e-12);
  }
  CHECK_THROWS_AS(Rotation3::from_axis_angle(Eigen::Vector3d::Zero(), 1.0), DegenerateError);
}

TEST_CASE("rotation algebra") {
  TestRng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Rotation3 r = random_rotation3(rng);
    CHECK((r * r.inverse()).matrix().isIdentity(1e-12));
    CHECK(r.angle_to_deg(r) < 1e-6);
  }
  CHECK(Rotation3::about_z(0.3).angle_to_deg(Rotation3::identity()) == doctest::Approx(0.3 * 180.0 / M_PI));
  CHECK(Rotation3::about_x(M_PI).angle_to_deg(Rotation3::identity()) == doctest::Approx(180.0));
  // about_y maps z onto x for +90 degrees.
  const Eigen::Vector3d v = Rotation3::about_y(M_PI / 2) * Eigen::Vector3d(0, 0, 1);
  CHECK((v - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("pose invariants") {
  Joints j = Joints::Zero(3, 3);
  j(0, 1) = 1.0;
  CHECK_NOTHROW(Pose{j});
  j(1, 0) = 1e-3;
  CHECK_THROWS_AS(Pose{j}, ConfigError);
  j(1, 0) = 0.0;
  j(2, 2) = std::nan("");
  CHECK_THROWS_AS(Pose{j}, DegenerateError);
  j(2, 2) = INFINITY;
  CHECK_THROWS_AS(Pose{j}, DegenerateError);

  const Pose z = Pose::zeros(4);
  CHECK(z.n_joints() == 4);
  CHECK(z.joints().isZero(0.0));
}

TEST_CASE("flat layout is x0 y0 z0 x1 ...") {
  Joints j = Joints::Zero(3, 2);
  j.col(1) << 1, 2, 3;
  const Pose p(j);
  REQUIRE(p.flat().size() == 6);
  CHECK(p.flat()[3] == 1.0);
  CHECK(p.flat()[4] == 2.0);
  CHECK(p.flat()[5] == 3.0);
}

TEST_CASE("center_at_pelvis and pose_norm") {
  Joints raw(3, 3);
  raw << 1, 2, 4,  //
      1, 1, 1,     //
      0, 0, 3;
  const Pose p = center_at_pelvis(raw);
  CHECK(p.joint(0).isZero(0.0));
  CHECK(p.joint(1) == Eigen::Vector3d(1, 0, 0));
  CHECK(p.joint(2) == Eigen::Vector3d(3, 0, 3));
  CHECK(pose_norm(p) == doctest::Approx(std::sqrt(1.0 + 9.0 + 9.0)));
  raw(0, 0) = std::nan("");
  CHECK_THROWS_AS(center_at_pelvis(raw), DegenerateError);
}

TEST_CASE("default skeleton") {
  const Skeleton s = Skeleton::default_h17();
  CHECK(s.n_joints() == 17);
  CHECK(s.names()[0] == "pelvis");
  CHECK(s.torso_set().size() >= 3);
  double sum = 0.0;
  for (double w : s.segment_weights()) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // Topological order: every parent appears before its child.
  std::vector<int> position(s.n_joints());
  for (std::size_t k = 0; k < s.topological_order().size(); ++k) position[s.topological_order()[k]] = k;
  for (int j = 1; j < s.n_joints(); ++j) CHECK(position[s.parent()[j]] < position[j]);

  const Pose rest = s.rest_pose();
  const auto lengths = measure_bone_lengths(rest, s);
  for (int j = 1; j < s.n_joints(); ++j) CHECK(lengths[j] == doctest::Approx(s.bone_lengths()[j]).epsilon(1e-12));
}

TEST_CASE("shipped skeleton file equals the built-in default") {
  const Skeleton file = load_skeleton(std::filesystem::path(MVPOSE_DATA_DIR) / "skeleton_h17.json");
  CHECK(file == Skeleton::default_h17());
}

TEST_CASE("skeleton validation") {
  const LimbTriples none;
  const std::vector<double> w3 = {0.5, 0.25, 0.25};
  auto make = [&](std::vector<int> parent, std::vector<double> bones, std::vector<int> torso,
                  std::vector<double> weights) {
    return Skeleton({"a", "b", "c"}, parent, bones, torso, weights, none);
  };
  CHECK_NOTHROW(make({0, 0, 1}, {0, 1, 1}, {0, 1, 2}, w3));
  CHECK_THROWS_AS(make({1, 0, 1}, {0, 1, 1}, {0, 1, 2}, w3), ConfigError);        // root not joint 0
  CHECK_THROWS_AS(make({0, 2, 1}, {0, 1, 1}, {0, 1, 2}, w3), ConfigError);        // cycle
  CHECK_THROWS_AS(make({0, 0, 1}, {0, 0, 1}, {0, 1, 2}, w3), ConfigError);        // zero bone
  CHECK_THROWS_AS(make({0, 0, 1}, {0, 1, 1}, {0, 1}, w3), ConfigError);           // torso too small
  CHECK_THROWS_AS(make({0, 0, 1}, {0, 1, 1}, {0, 1, 1}, w3), ConfigError);        // duplicate torso joint
  CHECK_THROWS_AS(make({0, 0, 1}, {0, 1, 1}, {0, 1, 2}, {0.5, 0.5, 0.1}), ConfigError);
  CHECK_THROWS_AS(make({0, 0, 1}, {0, 1, 1}, {0, 1, 2}, {1.5, -0.25, -0.25}), ConfigError);
  CHECK_THROWS_AS(make({0, 0}, {0, 1, 1}, {0, 1, 2}, w3), ConfigError);
  LimbTriples bad;
  bad.knee = {{0, 1, 7}};
  CHECK_THROWS_AS(Skeleton({"a", "b", "c"}, {0, 0, 1}, {0, 1, 1}, {0, 1, 2}, w3, bad), ConfigError);
  CHECK_THROWS_AS(Skeleton::default_h17().with_torso_set({0, 1}), ConfigError);
}

TEST_CASE("normalize_bone_lengths restores lengths and keeps directions") {
  const Skeleton s = Skeleton::default_h17();
  TestRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose noisy = random_pose(rng, s.n_joints());
    const Pose fixed = normalize_bone_lengths(noisy, s);
    const auto lengths = measure_bone_lengths(fixed, s);
    for (int j = 1; j < s.n_joints(); ++j) {
      CHECK(lengths[j] == doctest::Approx(s.bone_lengths()[j]).epsilon(1e-9));
      const int p = s.parent()[j];
      const Eigen::Vector3d before = (noisy.joint(j) - noisy.joint(p)).normalized();
      const Eigen::Vector3d after = (fixed.joint(j) - fixed.joint(p)).normalized();
      CHECK((before - after).norm() < 1e-9);
    }
  }
  // Idempotent on a pose that already has the right lengths.
  const Pose rest = s.rest_pose();
  CHECK((normalize_bone_lengths(rest, s).joints() - rest.joints()).norm() < 1e-9);
}

TEST_CASE("zero-length bone is reported by joint name") {
  const Skeleton s = Skeleton::default_h17();
  Joints j = s.rest_pose().joints();
  j.col(3) = j.col(2);  // r_ankle on top of r_knee
  try {
    normalize_bone_lengths(Pose(j), s);
    FAIL("expected DegenerateError");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find("r_ankle") != std::string::npos);
  }
  CHECK_THROWS_AS(normalize_bone_lengths(Pose::zeros(3), s), ShapeError);
}

TEST_CASE("json round trips") {
  TestRng rng(2);
  const Pose p = random_pose(rng, 17);
  CHECK(pose_from_json(pose_to_json(p)) == p);
  // Row-major layout: first N_J entries are the x coordinates.
  const auto j = pose_to_json(p);
  CHECK(j[1].get<double>() == p.joint(1).x());
  CHECK(j[17 + 1].get<double>() == p.joint(1).y());

  const Rotation3 r = random_rotation3(rng);
  CHECK(rotation_from_json(rotation_to_json(r)).matrix() == r.matrix());
  CHECK(rotation_to_json(r)[1].get<double>() == r.matrix()(0, 1));

  const Skeleton s = Skeleton::default_h17();
  CHECK(skeleton_from_json(skeleton_to_json(s)) == s);
  auto broken = skeleton_to_json(s);
  broken.erase("parent");
  CHECK_THROWS_AS(skeleton_from_json(broken), ConfigError);
  CHECK_THROWS_AS(pose_from_json(nlohmann::json::array({1, 2})), ConfigError);
}

TEST_CASE("missing file error names the path") {
  try {
    read_json_file("/nonexistent/dir/skeleton.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/skeleton.json") != std::string::npos);
  }
  const auto tmp = std::filesystem::temp_directory_path() / "mvpose_bad.json";
  write_text_file(tmp, "{ not json");
  CHECK_THROWS_AS(read_json_file(tmp), ConfigError);
  std::filesystem::remove(tmp);
}
