#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvpose/losses.hpp"
#include "mvpose/metrics.hpp"
#include "mvpose/regressor.hpp"
#include "mvpose/synth_capture.hpp"

namespace mvpose {

enum class RotationSource {
  known,      ///< use the capture rotations
  estimated,  ///< re-estimate from the current predictions every step
};

struct TrainConfig {
  int batch_labeled = 8;
  int batch_unlabeled_groups = 2;
  int views_per_group = 4;
  int consensus_size = 2;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  long iterations = 2000;
  long pretrain_iterations = 2000;
  long eval_every = 100;
  Distance distance = Distance::nse;
  RotationSource rotations = RotationSource::known;
  LossWeights weights;
  bool augment = true;
  /// Let gradients flow into consensus members through the reference pose.
  bool reference_gradient = false;
  NormMode rotation_norm = NormMode::full_pose;
  std::vector<int> hidden_dims = {256, 256};
  std::uint64_t rng_seed = 42;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Flat JSON with TrainConfig field names; loss weights as w_supervised,
/// w_multiview, w_regularizer. Unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AdamState {
  std::vector<DenseLayer> first_moment;
  std::vector<DenseLayer> second_moment;
  long step = 0;
};

AdamState make_adam_state(const RegressorParams& params);

/// One Adam update with bias correction.
void adam_update(RegressorParams& params, const RegressorGradients& grads, AdamState& state,
                 const TrainConfig& config);

/// Synchronized views of one time instant; rotations map each view into the
/// frame of the group's first view.
struct ViewGroup {
  std::vector<Eigen::VectorXd> features;
  std::vector<Rotation3> rotations;
};

struct TrainBatch {
  Eigen::MatrixXd labeled_features;
  std::vector<Pose> labels;
  std::vector<ViewGroup> groups;
};

/// Draws `batch_labeled` distinct labeled samples (augmented when enabled)
/// and `batch_unlabeled_groups` multi-view samples, picking a random subset
/// of `views_per_group` views when more are available. Throws ConfigError if
/// the dataset is too small for the batch layout.
TrainBatch sample_batch(const Dataset& dataset, const TrainConfig& config, Rng& rng,
                        bool with_unlabeled = true);

struct StepResult {
  LossBreakdown loss;
  /// Groups dropped because rotation estimation saw a degenerate torso.
  int skipped_groups = 0;
  /// Rotations used for each group (known or estimated).
  std::vector<std::vector<Rotation3>> rotations;
};

/// Full weakly supervised step: forward, rotation estimation (if configured),
/// consensus, all three loss terms, backward and one Adam update of `theta`.
StepResult train_step(RegressorParams& theta, const RegressorParams& gamma, const TrainBatch& batch,
                      AdamState& adam, const TrainConfig& config, const Skeleton& skeleton);

/// Supervised-only step on the labeled part of `batch`.
LossBreakdown supervised_step(RegressorParams& theta, const TrainBatch& batch, AdamState& adam,
                              const TrainConfig& config);

/// Assembles the loss breakdown without touching parameters.
StepResult evaluate_objective(const RegressorParams& theta, const RegressorParams& gamma,
                              const TrainBatch& batch, const TrainConfig& config,
                              const Skeleton& skeleton);

struct TrainLogEntry {
  long iteration = 0;
  double m = 0.0;
  double s = 0.0;
  double r = 0.0;
  double total = 0.0;
  double val_nmpjpe = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  long skipped_groups = 0;

  /// Header: iteration,m,s,r,total,val_nmpjpe. Loss columns are averages
  /// over the steps since the previous entry (nan for iteration 0).
  std::string to_csv() const;
  double min_val_nmpjpe() const;
  double final_val_nmpjpe() const;
};

struct PretrainResult {
  RegressorParams theta;
  /// Best-validation snapshot (equal to theta).
  RegressorParams gamma;
  TrainLog log;
  long best_iteration = 0;
};

struct TrainResult {
  RegressorParams theta;
  RegressorParams gamma;
  TrainLog pretrain_log;
  TrainLog log;
};

/// Regressor dimensions for a dataset: [2 N_J, hidden..., 3 N_J].
std::vector<int> regressor_dims(const Dataset& dataset, const TrainConfig& config);

/// Supervised pretraining with early stopping on validation NMPJPE.
PretrainResult pretrain(const Dataset& dataset, const TrainConfig& config);

/// Weakly supervised phase starting from a pretraining result.
TrainResult weak_train(const Dataset& dataset, const TrainConfig& config, const PretrainResult& pre);

/// pretrain followed by weak_train.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Mean NMPJPE of the regressor on labeled samples.
double validation_nmpjpe(const RegressorParams& params, const std::vector<LabeledSample>& samples);

/// All metrics on an evaluation set. Throws DegenerateError (with the sample
/// index) when a prediction has near-zero norm.
MetricReport evaluate(const RegressorParams& params, const std::vector<LabeledSample>& samples,
                      const Skeleton& skeleton);

/// Metrics for precomputed predictions.
MetricReport evaluate_predictions(std::span<const Pose> predictions, const std::vector<LabeledSample>& samples,
                                  const Skeleton& skeleton);

}  // namespace mvpose
