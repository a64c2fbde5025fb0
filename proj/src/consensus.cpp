#include "mvpose/consensus.hpp"

#include <limits>
#include <string>

#include "mvpose/error.hpp"

namespace mvpose {

Pose reference_pose(std::span<const Pose> members) {
  if (members.empty()) throw ConfigError("reference_pose: empty member list");
  Joints sum = members.front().joints();
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].n_joints() != members.front().n_joints()) {
      throw ShapeError("reference_pose: joint counts differ");
    }
    sum += members[i].joints();
  }
  sum /= static_cast<double>(members.size());
  return center_at_pelvis(sum);
}

ConsensusResult select_consensus(std::span<const Pose> rotated_poses, int k, Distance distance) {
  const int n = static_cast<int>(rotated_poses.size());
  if (k < 2) throw ConfigError("select_consensus: consensus size must be at least 2");
  if (n < k) {
    throw ConfigError("select_consensus: " + std::to_string(n) + " views for consensus size " +
                      std::to_string(k));
  }
  for (int i = 0; i < n; ++i) {
    if (rotated_poses[i].n_joints() != rotated_poses[0].n_joints()) {
      throw ShapeError("select_consensus: joint counts differ");
    }
    if (!(pose_norm(rotated_poses[i]) > kDegenerateNorm)) {
      throw DegenerateError("select_consensus: degenerate pose in view " + std::to_string(i));
    }
  }

  ConsensusResult best;
  best.agreement = std::numeric_limits<double>::infinity();
  bool found = false;

  std::vector<int> subset(k);
  for (int i = 0; i < k; ++i) subset[i] = i;
  std::vector<Pose> members(k);
  while (true) {
    for (int i = 0; i < k; ++i) members[i] = rotated_poses[subset[i]];
    Pose mean = reference_pose(members);
    if (distance == Distance::se || pose_norm(mean) > kDegenerateNorm) {
      double score = 0.0;
      for (const Pose& m : members) score += pose_distance(distance, m, mean);
      if (!found || score < best.agreement) {
        best.members = subset;
        best.reference = std::move(mean);
        best.agreement = score;
        found = true;
      }
    }
    // Next combination in lexicographic order.
    int i = k - 1;
    while (i >= 0 && subset[i] == n - k + i) --i;
    if (i < 0) break;
    ++subset[i];
    for (int j = i + 1; j < k; ++j) subset[j] = subset[j - 1] + 1;
  }
  if (!found) throw DegenerateError("select_consensus: every candidate subset has a degenerate mean");
  return best;
}

}  // namespace mvpose
