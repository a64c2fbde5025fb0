#include <Eigen/Dense>

#include "doctest.h"
#include "mvpose/alignment.hpp"
#include "mvpose/error.hpp"
#include "mvpose/linalg.hpp"
#include "test_support.hpp"

using namespace mvpose;
using namespace mvpose::testing;

namespace {

void check_svd(const Eigen::Matrix3d& a) {
  const Svd3 d = svd3(a);
  const double scale = std::max(1.0, a.norm());
  CHECK((d.u * d.s.asDiagonal() * d.v.transpose() - a).norm() < 1e-10 * scale);
  CHECK((d.u.transpose() * d.u - Eigen::Matrix3d::Identity()).norm() < 1e-10);
  CHECK((d.v.transpose() * d.v - Eigen::Matrix3d::Identity()).norm() < 1e-10);
  CHECK(d.s(0) >= d.s(1));
  CHECK(d.s(1) >= d.s(2));
  CHECK(d.s(2) >= 0.0);
  const Eigen::Vector3d ref = Eigen::JacobiSVD<Eigen::Matrix3d>(a).singularValues();
  CHECK((d.s - ref).norm() < 1e-10 * scale);
}

/// Torso objective evaluated directly, for comparing against random rotations.
double torso_objective(const Eigen::Matrix3d& r, const Pose& src, const Pose& dst, const std::vector<int>& torso) {
  const double ns = pose_norm(src);
  const double nd = pose_norm(dst);
  double sum = 0.0;
  for (int t : torso) sum += (r * src.joint(t) / ns - dst.joint(t) / nd).squaredNorm();
  return sum;
}

}  // namespace

TEST_CASE("svd3 on random, structured and rank-deficient matrices") {
  TestRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Matrix3d a;
    for (int k = 0; k < 9; ++k) a.data()[k] = uniform(rng, -10.0, 10.0);
    check_svd(a);
  }
  check_svd(Eigen::Matrix3d::Zero());
  check_svd(Eigen::Matrix3d::Identity());
  check_svd(-Eigen::Matrix3d::Identity());
  check_svd(Eigen::Vector3d(3, 2, 1).asDiagonal());
  check_svd(Eigen::Vector3d(1, 2, 3).asDiagonal());
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d x = Eigen::Vector3d::Random(), y = Eigen::Vector3d::Random();
    const Eigen::Vector3d z = Eigen::Vector3d::Random(), w = Eigen::Vector3d::Random();
    check_svd(x * y.transpose());                          // rank 1
    check_svd(x * y.transpose() + z * w.transpose());      // rank 2
    check_svd(random_rotation_matrix(rng) * 1e-8);         // tiny scale
  }
  // Repeated singular values.
  const Eigen::Matrix3d q = random_rotation_matrix(rng);
  check_svd(q * Eigen::Vector3d(2, 2, 1).asDiagonal() * random_rotation_matrix(rng));
  check_svd(q * Eigen::Vector3d(2, 2, 2).asDiagonal());
}

TEST_CASE("se and nse distances") {
  Joints a = Joints::Zero(3, 2), b = Joints::Zero(3, 2);
  a.col(1) << 1, 0, 0;
  b.col(1) << 0, 2, 0;
  CHECK(se_distance(Pose(a), Pose(b)) == doctest::Approx(5.0));
  CHECK(nse_distance(Pose(a), Pose(b)) == doctest::Approx(2.0));
  CHECK(nse_distance(Pose(a), Pose(a).scaled(7.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(nse_distance(Pose(a), Pose(a).scaled(-1.0)) == doctest::Approx(4.0));
  CHECK_THROWS_AS(nse_distance(Pose(a), Pose::zeros(2)), DegenerateError);
  CHECK_THROWS_AS(se_distance(Pose(a), Pose::zeros(3)), ShapeError);

  TestRng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng, 17), q = random_pose(rng, 17);
    const double d = nse_distance(p, q);
    CHECK(d >= 0.0);
    CHECK(d <= 4.0);
    const double s = uniform(rng, 0.01, 100.0);
    CHECK(nse_distance(p.scaled(s), q) == doctest::Approx(d).epsilon(1e-9));
    const Rotation3 r = random_rotation3(rng);
    CHECK(nse_distance(p.rotated(r), q.rotated(r)) == doctest::Approx(d).epsilon(1e-9));
  }
}

TEST_CASE("distance gradients match central differences") {
  TestRng rng(7);
  for (Distance dist : {Distance::se, Distance::nse}) {
    double worst = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      const Pose p1 = random_pose(rng, 6), p2 = random_pose(rng, 6);
      const Eigen::VectorXd x = flat_of(p1.joints());
      const auto f = [&](const Eigen::VectorXd& v) { return pose_distance(dist, pose_from_flat(v), p2); };
      const Eigen::VectorXd fd = fd_pose_gradient(f, x);
      Eigen::VectorXd g = flat_of(pose_distance_gradient(dist, p1, p2));
      g.head(3).setZero();  // the pelvis is not a free coordinate
      worst = std::max(worst, relative_error(g, fd));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("nse gradient is orthogonal to the pose") {
  TestRng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Pose p1 = random_pose(rng, 10), p2 = random_pose(rng, 10);
    const Joints g = nse_gradient(p1, p2);
    CHECK(std::abs((g.array() * p1.joints().array()).sum()) < 1e-12 * g.norm() * pose_norm(p1) + 1e-18);
  }
}

TEST_CASE("kabsch recovers random proper rotations exactly") {
  TestRng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const Pose src = random_pose(rng, 7);
    const Eigen::Matrix3d r = random_rotation_matrix(rng);
    const Joints dst = r * src.joints();
    CHECK((kabsch_rotation(src.joints(), dst).matrix() - r).norm() < 1e-9);
  }
}

TEST_CASE("kabsch never returns a reflection") {
  TestRng rng(10);
  for (int i = 0; i < 200; ++i) {
    const Pose src = random_pose(rng, 7);
    Joints dst = src.joints();
    dst.row(0) *= -1.0;  // mirrored target
    const Rotation3 r = kabsch_rotation(src.joints(), dst);
    CHECK(r.matrix().determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("kabsch rejects collinear configurations") {
  Joints line(3, 4);
  line << 0, 1, 2, 3,  //
      0, 1, 2, 3,      //
      0, 0, 0, 0;
  CHECK_THROWS_AS(kabsch_rotation(line, line), DegenerateError);
  CHECK_THROWS_AS(kabsch_rotation(Joints::Zero(3, 4), Joints::Zero(3, 4)), DegenerateError);
  CHECK_THROWS_AS(kabsch_rotation(Joints::Zero(3, 4), Joints::Zero(3, 3)), ShapeError);
}

TEST_CASE("estimate_rotation beats random rotations on the torso objective") {
  TestRng rng(12);
  const Skeleton skel = Skeleton::default_h17();
  const auto& torso = skel.torso_set();
  for (int trial = 0; trial < 5; ++trial) {
    const Pose src = random_pose(rng, 17);
    const Pose dst = random_pose(rng, 17);
    const AlignmentResult res = estimate_rotation(src, dst, torso);
    const double best = torso_objective(res.rotation.matrix(), src, dst, torso);
    CHECK(res.residual == doctest::Approx(best).epsilon(1e-12));
    for (int k = 0; k < 2000; ++k) {
      CHECK(best <= torso_objective(random_rotation_matrix(rng), src, dst, torso) + 1e-12);
    }
  }
}

TEST_CASE("estimate_rotation uses only torso joints and ignores scale") {
  TestRng rng(13);
  const Skeleton skel = Skeleton::default_h17();
  const std::vector<int>& torso = skel.torso_set();
  for (int trial = 0; trial < 100; ++trial) {
    const Pose src = random_pose(rng, 17);
    const Eigen::Matrix3d r = random_rotation_matrix(rng);
    // Limb joints of the target are garbage; the torso is an exact rotated copy.
    Joints dst = r * src.joints();
    Joints limbs_garbage = dst;
    for (int j = 0; j < 17; ++j) {
      if (std::find(torso.begin(), torso.end(), j) == torso.end()) {
        limbs_garbage.col(j) = Eigen::Vector3d::Random() * 800.0;
      }
    }
    for (NormMode mode : {NormMode::full_pose, NormMode::torso_only}) {
      const Pose target(limbs_garbage);
      const AlignmentResult res = estimate_rotation(src.scaled(3.5), target, torso, mode);
      if (mode == NormMode::torso_only) {
        CHECK((res.rotation.matrix() - r).norm() < 1e-9);
        CHECK(res.residual < 1e-18);
      }
      const AlignmentResult exact = estimate_rotation(src.scaled(0.2), Pose(dst), torso, mode);
      CHECK((exact.rotation.matrix() - r).norm() < 1e-9);
    }
  }
  CHECK_THROWS_AS(estimate_rotation(Pose::zeros(17), Pose::zeros(17), torso), DegenerateError);
  const std::vector<int> small = {0, 1};
  CHECK_THROWS_AS(estimate_rotation(random_pose(rng, 17), random_pose(rng, 17), small), ConfigError);
}

TEST_CASE("optimal_scale beats a dense grid search") {
  TestRng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose gt = random_pose(rng, 17);
    Joints noisy = gt.joints() * uniform(rng, 0.2, 3.0);
    for (int j = 1; j < 17; ++j) noisy.col(j) += Eigen::Vector3d::Random() * 100.0;
    const Pose pred(noisy);
    const double s = optimal_scale(pred, gt);
    const double at_s = (s * pred.joints() - gt.joints()).squaredNorm();
    double grid_best = INFINITY;
    for (int k = 0; k <= 10000; ++k) {
      const double g = 10.0 * k / 10000.0;
      grid_best = std::min(grid_best, (g * pred.joints() - gt.joints()).squaredNorm());
    }
    CHECK(at_s <= grid_best + 1e-9 * grid_best);
  }
  CHECK_THROWS_AS(optimal_scale(Pose::zeros(17), random_pose(rng, 17)), DegenerateError);
}

TEST_CASE("procrustes_align recovers similarity transforms") {
  TestRng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose pred = random_pose(rng, 17);
    const Eigen::Matrix3d r = random_rotation_matrix(rng);
    const double s = uniform(rng, 0.1, 5.0);
    const Pose gt(s * r * pred.joints());
    const AlignmentResult res = procrustes_align(pred, gt);
    CHECK((res.rotation.matrix() - r).norm() < 1e-9);
    CHECK(res.scale == doctest::Approx(s).epsilon(1e-10));
    CHECK(res.residual < 1e-12 * gt.joints().squaredNorm());
  }
}
