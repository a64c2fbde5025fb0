#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvpose/pose_core.hpp"
#include "mvpose/synth_capture.hpp"

namespace mvpose {

/// Fully connected layer, weights are (out x in).
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

/// Feed-forward pose regressor: standardized input, tanh hidden layers, linear
/// output scaled by `output_scale_mm` and reshaped to a pelvis-centered pose.
/// Only `layers` are trained; the normalization fields are fixed constants.
struct RegressorParams {
  std::vector<DenseLayer> layers;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  double output_scale_mm = 1.0;

  std::vector<int> layer_dims() const;
  int input_dim() const;
  int n_joints() const;
  Eigen::Index parameter_count() const;
};

/// Same layout as RegressorParams::layers.
using RegressorGradients = std::vector<DenseLayer>;

/// Activations of one batched forward pass (samples are columns).
struct ForwardCache {
  /// activations[0] is the standardized input, activations[l] the output of
  /// hidden layer l.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Pose> outputs;
};

/// Scaled random initialization: weights ~ N(0, 1/fan_in), biases zero,
/// identity input normalization, unit output scale.
RegressorParams init_params(std::span<const int> layer_dims, Rng& rng);

Pose forward(const RegressorParams& params, const Eigen::VectorXd& features);

/// Forward pass on feature columns, keeping what backward needs.
ForwardCache forward_batch(const RegressorParams& params, const Eigen::MatrixXd& features);

/// Gradients of sum_i <output_i, output_gradients[i]> with respect to the
/// layer parameters, including the pelvis re-centering of the output.
RegressorGradients backward_batch(const RegressorParams& params, const ForwardCache& cache,
                                  std::span<const Joints> output_gradients);

RegressorGradients backward(const RegressorParams& params, const Eigen::VectorXd& features,
                            const Joints& output_gradient);

RegressorGradients zero_gradients(const RegressorParams& params);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  long iteration = 0;
  std::vector<std::string> joint_names;
};

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json checkpoint_to_json(const RegressorParams& params, const CheckpointInfo& info);
RegressorParams checkpoint_from_json(const nlohmann::json& j, CheckpointInfo* info = nullptr);
void save_checkpoint(const RegressorParams& params, const CheckpointInfo& info,
                     const std::filesystem::path& path);
RegressorParams load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace mvpose
