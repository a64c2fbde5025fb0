#include "doctest.h"
#include "mvpose/error.hpp"
#include "mvpose/losses.hpp"
#include "test_support.hpp"

using namespace mvpose;
using namespace mvpose::testing;

namespace {

constexpr int kJoints = 6;
constexpr int kFdInstances = 100;

/// A synchronized group: one world pose seen through random rotations plus
/// per-view perturbations, so the consensus is non-trivial.
struct Group {
  std::vector<Pose> predictions;
  std::vector<Rotation3> rotations;
};

Group random_group(TestRng& rng, int n_views) {
  Group g;
  const Pose world = random_pose(rng, kJoints);
  for (int c = 0; c < n_views; ++c) {
    const Rotation3 r = c == 0 ? Rotation3::identity() : random_rotation3(rng);
    Joints view = r.inverse().matrix() * world.joints();
    for (int j = 1; j < kJoints; ++j) view.col(j) += Eigen::Vector3d::Random() * 150.0;
    g.predictions.emplace_back(view * uniform(rng, 0.8, 1.2));
    g.rotations.push_back(r);
  }
  return g;
}

Eigen::VectorXd stack(const std::vector<Pose>& poses) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(poses.size()) * 3 * kJoints);
  for (std::size_t i = 0; i < poses.size(); ++i) v.segment(i * 3 * kJoints, 3 * kJoints) = flat_of(poses[i].joints());
  return v;
}

Eigen::VectorXd stack(const std::vector<Joints>& grads) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(grads.size()) * 3 * kJoints);
  for (std::size_t i = 0; i < grads.size(); ++i) v.segment(i * 3 * kJoints, 3 * kJoints) = flat_of(grads[i]);
  return v;
}

std::vector<Pose> unstack(const Eigen::VectorXd& v, std::size_t n) {
  std::vector<Pose> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pose_from_flat(v.segment(i * 3 * kJoints, 3 * kJoints)));
  return out;
}

/// Finite differences over every non-pelvis coordinate of every prediction.
Eigen::VectorXd fd_over_predictions(const std::function<double(const std::vector<Pose>&)>& f,
                                    const std::vector<Pose>& at) {
  const Eigen::VectorXd x = stack(at);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  const auto wrapped = [&](const Eigen::VectorXd& v) { return f(unstack(v, at.size())); };
  for (std::size_t i = 0; i < at.size(); ++i) {
    // Hold every other prediction fixed; skip the pelvis block.
    const auto partial = [&](const Eigen::VectorXd& seg) {
      Eigen::VectorXd full = x;
      full.segment(i * 3 * kJoints, 3 * kJoints) = seg;
      return wrapped(full);
    };
    g.segment(i * 3 * kJoints, 3 * kJoints) = fd_pose_gradient(partial, x.segment(i * 3 * kJoints, 3 * kJoints));
  }
  return g;
}

double raw_distance(Distance d, const Joints& a, const Joints& b) {
  if (d == Distance::se) return (a - b).squaredNorm();
  return (a / a.norm() - b / b.norm()).squaredNorm();
}

/// Multi-view objective re-implemented with the reference pose and subset as
/// explicit inputs, for the stop-gradient and coupled conventions.
double multiview_oracle(const std::vector<Pose>& preds, const std::vector<Rotation3>& rots,
                        const std::vector<int>& members, const Joints* frozen_reference, Distance d) {
  const int n = static_cast<int>(preds.size());
  std::vector<Joints> rotated;
  for (int c = 0; c < n; ++c) rotated.push_back(rots[c].matrix() * preds[c].joints());
  Joints ref = Joints::Zero(3, kJoints);
  if (frozen_reference) {
    ref = *frozen_reference;
  } else {
    for (int m : members) ref += rotated[m] / static_cast<double>(members.size());
  }
  double sum = 0.0;
  for (int c = 0; c < n; ++c) {
    sum += raw_distance(d, rotated[c], ref);
  }
  return sum / n;
}

}  // namespace

TEST_CASE("multiview loss value matches the oracle") {
  TestRng rng(31);
  for (Distance d : {Distance::se, Distance::nse}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Group g = random_group(rng, 4);
      const MultiviewTerm t = multiview_loss(g.predictions, g.rotations, 2, d);
      const double want = multiview_oracle(g.predictions, g.rotations, t.consensus.members, nullptr, d);
      CHECK(t.value == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("multiview gradient with a frozen reference matches finite differences") {
  TestRng rng(32);
  for (Distance d : {Distance::se, Distance::nse}) {
    double worst = 0.0;
    for (int trial = 0; trial < kFdInstances; ++trial) {
      const Group g = random_group(rng, 4);
      const MultiviewTerm t = multiview_loss(g.predictions, g.rotations, 2, d, false);
      const Joints frozen = t.consensus.reference.joints();
      const auto f = [&](const std::vector<Pose>& p) {
        return multiview_oracle(p, g.rotations, t.consensus.members, &frozen, d);
      };
      worst = std::max(worst, relative_error(stack(t.gradients), fd_over_predictions(f, g.predictions)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("coupled multiview gradient matches finite differences") {
  TestRng rng(33);
  for (Distance d : {Distance::se, Distance::nse}) {
    double worst = 0.0;
    for (int trial = 0; trial < kFdInstances; ++trial) {
      const Group g = random_group(rng, 4);
      const MultiviewTerm t = multiview_loss(g.predictions, g.rotations, 2, d, true);
      const auto f = [&](const std::vector<Pose>& p) {
        return multiview_oracle(p, g.rotations, t.consensus.members, nullptr, d);
      };
      worst = std::max(worst, relative_error(stack(t.gradients), fd_over_predictions(f, g.predictions)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("supervised and regularization gradients match finite differences") {
  TestRng rng(34);
  for (Distance d : {Distance::se, Distance::nse}) {
    double worst_s = 0.0, worst_r = 0.0;
    for (int trial = 0; trial < kFdInstances; ++trial) {
      std::vector<Pose> preds, targets;
      for (int i = 0; i < 4; ++i) {
        preds.push_back(random_pose(rng, kJoints));
        targets.push_back(random_pose(rng, kJoints));
      }
      const auto oracle = [&](const std::vector<Pose>& p) {
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
          sum += raw_distance(d, p[i].joints(), targets[i].joints());
        }
        return sum / static_cast<double>(p.size());
      };
      const LossTerm s = supervised_loss(preds, targets, d);
      const LossTerm r = regularization_loss(preds, targets, d);
      CHECK(s.value == doctest::Approx(oracle(preds)).epsilon(1e-12));
      const Eigen::VectorXd fd = fd_over_predictions(oracle, preds);
      worst_s = std::max(worst_s, relative_error(stack(s.gradients), fd));
      worst_r = std::max(worst_r, relative_error(stack(r.gradients), fd));
    }
    CHECK(worst_s < 1e-5);
    CHECK(worst_r < 1e-5);
  }
}

TEST_CASE("noiseless views with true rotations give zero loss") {
  TestRng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose world = random_pose(rng, kJoints);
    std::vector<Pose> views;
    std::vector<Rotation3> rots;
    for (int c = 0; c < 4; ++c) {
      const Rotation3 r = c == 0 ? Rotation3::identity() : random_rotation3(rng);
      views.push_back(world.rotated(r.inverse()));
      rots.push_back(r);
    }
    CHECK(multiview_loss(views, rots, 2, Distance::se).value < 1e-10);
    CHECK(multiview_loss(views, rots, 2, Distance::nse).value < 1e-10);
    // Per-view rescaling is invisible to nse but not to se.
    views[2] = views[2].scaled(1.7);
    CHECK(multiview_loss(views, rots, 2, Distance::nse).value < 1e-10);
    CHECK(multiview_loss(views, rots, 2, Distance::se).value > 1.0);
  }
}

TEST_CASE("total loss composition") {
  CHECK(total_loss(1.0, 2.0, 3.0, LossWeights{}) == doctest::Approx(501.0));
  CHECK(total_loss(1.0, 1.0, 1.0, LossWeights{1.0, 1.0, 1.0}) == doctest::Approx(3.0));
  CHECK(total_loss(5.0, 0.0, 0.0, LossWeights{100.0, 0.0, 100.0}) == 0.0);
}

TEST_CASE("loss preconditions") {
  TestRng rng(36);
  const std::vector<Pose> two = {random_pose(rng, kJoints), random_pose(rng, kJoints)};
  const std::vector<Pose> one = {random_pose(rng, kJoints)};
  const std::vector<Rotation3> r1 = {Rotation3::identity()};
  CHECK_THROWS_AS(multiview_loss(two, r1, 2, Distance::nse), ShapeError);
  CHECK_THROWS_AS(multiview_loss(one, r1, 2, Distance::nse), ConfigError);
  CHECK_THROWS_AS(supervised_loss(two, one, Distance::se), ShapeError);
  CHECK_THROWS_AS(supervised_loss(std::vector<Pose>{}, std::vector<Pose>{}, Distance::se), ConfigError);
}
