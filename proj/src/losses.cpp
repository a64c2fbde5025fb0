#include "mvpose/losses.hpp"

#include <string>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

LossTerm paired_mean(std::span<const Pose> predictions, std::span<const Pose> targets,
                     Distance distance, const char* op) {
  if (predictions.empty()) throw ConfigError(std::string(op) + ": empty batch");
  if (predictions.size() != targets.size()) {
    throw ShapeError(std::string(op) + ": prediction and target counts differ");
  }
  const double inv_n = 1.0 / static_cast<double>(predictions.size());
  LossTerm out;
  out.gradients.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    out.value += pose_distance(distance, predictions[i], targets[i]);
    out.gradients.push_back(inv_n * pose_distance_gradient(distance, predictions[i], targets[i]));
  }
  out.value *= inv_n;
  return out;
}

}  // namespace

MultiviewTerm multiview_loss(std::span<const Pose> predictions, std::span<const Rotation3> rotations,
                             int consensus_size, Distance distance, bool reference_gradient) {
  const std::size_t n = predictions.size();
  if (n < 2) throw ConfigError("multiview_loss: need at least two views");
  if (rotations.size() != n) throw ShapeError("multiview_loss: one rotation per view required");

  std::vector<Pose> rotated;
  rotated.reserve(n);
  for (std::size_t c = 0; c < n; ++c) rotated.push_back(predictions[c].rotated(rotations[c]));

  MultiviewTerm out;
  out.consensus = select_consensus(rotated, consensus_size, distance);
  const Pose& ref = out.consensus.reference;
  const double inv_n = 1.0 / static_cast<double>(n);

  // d/d(reference) of the summed distances, used only when coupled.
  Joints ref_grad = Joints::Zero(3, ref.n_joints());
  out.gradients.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    out.value += pose_distance(distance, rotated[c], ref);
    const Joints g = pose_distance_gradient(distance, rotated[c], ref);
    out.gradients.push_back(inv_n * (rotations[c].matrix().transpose() * g));
    if (reference_gradient) {
      ref_grad += inv_n * pose_distance_gradient(distance, ref, rotated[c]);
    }
  }
  out.value *= inv_n;

  if (reference_gradient) {
    const double inv_k = 1.0 / static_cast<double>(out.consensus.members.size());
    for (int m : out.consensus.members) {
      out.gradients[m] += inv_k * (rotations[m].matrix().transpose() * ref_grad);
    }
  }
  return out;
}

LossTerm supervised_loss(std::span<const Pose> predictions, std::span<const Pose> labels,
                         Distance distance) {
  return paired_mean(predictions, labels, distance, "supervised_loss");
}

LossTerm regularization_loss(std::span<const Pose> predictions, std::span<const Pose> anchors,
                             Distance distance) {
  return paired_mean(predictions, anchors, distance, "regularization_loss");
}

double total_loss(double m, double s, double r, const LossWeights& w) {
  return w.multiview * m + w.supervised * s + w.regularizer * r;
}

}  // namespace mvpose
