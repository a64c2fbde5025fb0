#pragma once

#include <span>
#include <vector>

#include "mvpose/consensus.hpp"

namespace mvpose {

/// Weights of the three terms of the training objective.
struct LossWeights {
  double supervised = 100.0;
  double multiview = 1.0;
  double regularizer = 100.0;
};

/// A loss value and its gradient with respect to each input prediction.
struct LossTerm {
  double value = 0.0;
  std::vector<Joints> gradients;
};

struct MultiviewTerm : LossTerm {
  ConsensusResult consensus;
};

/// Per-batch evaluation of the full objective. Gradients are already scaled by
/// the loss weights and are taken with respect to the predicted poses.
struct LossBreakdown {
  double m_value = 0.0;
  double s_value = 0.0;
  double r_value = 0.0;
  double total = 0.0;
  std::vector<Joints> labeled_gradients;
  std::vector<Joints> unlabeled_gradients;
};

/// Multi-view consistency for one synchronized group. Each prediction is
/// rotated into the common frame, a consensus set picks the reference pose,
/// and the loss is the mean distance of all rotated views to it.
///
/// Rotations are constants. With `reference_gradient == false` the reference
/// pose is a constant too; otherwise gradients also flow into the consensus
/// members through the mean (the subset choice itself stays fixed).
MultiviewTerm multiview_loss(std::span<const Pose> predictions, std::span<const Rotation3> rotations,
                             int consensus_size, Distance distance,
                             bool reference_gradient = false);

/// Mean distance between predictions and labels.
LossTerm supervised_loss(std::span<const Pose> predictions, std::span<const Pose> labels,
                         Distance distance);

/// Mean distance between current predictions and frozen anchor predictions;
/// gradients are with respect to the current predictions only.
LossTerm regularization_loss(std::span<const Pose> predictions, std::span<const Pose> anchors,
                             Distance distance);

/// w_m m + w_s s + w_r r.
double total_loss(double m, double s, double r, const LossWeights& weights);

}  // namespace mvpose
