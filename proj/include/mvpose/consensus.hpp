#pragma once

#include <span>
#include <vector>

#include "mvpose/alignment.hpp"

namespace mvpose {

struct ConsensusResult {
  /// Sorted indices of the consensus views.
  std::vector<int> members;
  /// Mean of the member poses.
  Pose reference;
  /// Sum over members of distance(member, reference); minimal over subsets.
  double agreement = 0.0;
};

/// Deterministic consensus: enumerates every size-k subset of the rotated
/// (common-frame) poses in lexicographic order and keeps the one whose members
/// agree best with their own mean. Ties go to the earliest subset. Subsets
/// whose mean is degenerate under NSE are skipped.
ConsensusResult select_consensus(std::span<const Pose> rotated_poses, int k,
                                 Distance distance = Distance::nse);

/// Element-wise mean of the poses, re-centered at the pelvis.
Pose reference_pose(std::span<const Pose> members);

}  // namespace mvpose
