#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mvpose/pose_core.hpp"

namespace mvpose {

using Rng = std::mt19937_64;

enum class RotationModel {
  fixed,  ///< each camera keeps one orientation for the whole capture
  ptz,    ///< pan/tilt redrawn per frame and camera
};

/// Pinhole camera looking at the pelvis from `standoff_mm` along its optical
/// axis. Camera frame: x right, y down, z forward.
struct Intrinsics {
  double focal_px = 1000.0;
  double cx = 0.0;
  double cy = 0.0;
  double standoff_mm = 5000.0;
};

struct CaptureConfig {
  int n_cameras = 4;
  int n_subjects = 5;
  int frames_per_subject = 400;
  /// Held-out subjects for validation (single view per frame).
  int n_validation_subjects = 2;
  int validation_frames_per_subject = 250;
  /// Per-coordinate std of the 3D joint noise added before projection.
  double noise_sigma_mm = 23.0;
  RotationModel rotation_model = RotationModel::fixed;
  Intrinsics intrinsics;
  /// Pan and tilt bound of PTZ cameras.
  double ptz_range_deg = 30.0;
  /// Tilt bound of fixed cameras (drawn once per camera).
  double fixed_tilt_deg = 10.0;
  /// Bound of the per-subject joint-angle offsets (motion style).
  double style_deg = 10.0;
  /// Bound of the per-frame joint-angle perturbations.
  double perturbation_deg = 25.0;
  std::uint64_t rng_seed = 42;
};

/// One camera's view of a frame. `features` are the flattened (u, v) pixel
/// coordinates of every joint.
struct ViewObservation {
  Eigen::VectorXd features;
  Pose pose;
  /// Rotation from this view's frame to view 0's frame.
  std::optional<Rotation3> rotation;
};

/// Synchronized views of one subject at one time instant.
struct MultiViewSample {
  int time_index = 0;
  int subject = 0;
  std::vector<ViewObservation> views;
};

struct LabeledSample {
  Eigen::VectorXd features;
  Pose pose;
  int subject = 0;
  int camera = 0;
};

struct Dataset {
  CaptureConfig config;
  Skeleton skeleton = Skeleton::default_h17();
  std::vector<int> labeled_subjects;
  std::vector<LabeledSample> labeled;
  std::vector<MultiViewSample> unlabeled;
  std::vector<LabeledSample> validation;
};

/// Per-joint local rotations applied on top of the rest pose.
struct PoseStyle {
  std::vector<Rotation3> offsets;
};

/// Random rotation with uniformly distributed axis and angle in [0, max].
Rotation3 random_rotation(Rng& rng, double max_angle_rad);

/// Style with one bounded random offset per joint (root included).
PoseStyle sample_style(const Skeleton& skeleton, Rng& rng, double max_angle_rad);

/// Forward kinematics of the rest pose with per-joint local rotations. Bone
/// lengths are preserved exactly; the result is pelvis-centered.
Pose forward_kinematics(const Skeleton& skeleton, std::span<const Rotation3> local);

/// Rest pose perturbed by bounded random joint rotations along the tree,
/// optionally composed with a subject style.
Pose sample_pose(const Skeleton& skeleton, Rng& rng, double max_angle_rad,
                 const PoseStyle* style = nullptr);

/// Per-view poses: view c = rotations[c]^T * world, so that
/// rotations[c] * view_c = view_0. rotations[0] must be the identity.
std::vector<Pose> make_views(const Pose& world_pose, std::span<const Rotation3> rotations);

/// Adds i.i.d. Gaussian noise of std `sigma_mm` to every coordinate.
Joints perturb_joints(const Joints& joints, double sigma_mm, Rng& rng);

/// Pinhole projection of camera-frame joints placed at the standoff distance.
/// Throws DegenerateError for a joint at non-positive depth.
Eigen::VectorXd project(const Joints& camera_joints, const Intrinsics& intrinsics);

/// Noisy 2D observation of a view pose.
Eigen::VectorXd observe(const Pose& view_pose, const Intrinsics& intrinsics, double noise_sigma_mm,
                        Rng& rng);

struct AugmentParams {
  double max_rotation_deg = 20.0;
  double min_scale = 0.85;
  double max_scale = 1.15;
};

struct Augmented {
  Eigen::VectorXd features;
  Pose label;
};

/// Applies an in-plane rotation by `angle_rad` and a scale `scale` about the
/// image point (pivot_u, pivot_v) to the features, and the matching rotation
/// about the optical axis plus scaling to the label.
Augmented apply_augmentation(const Eigen::VectorXd& features, const Pose& label, double angle_rad,
                             double scale, double pivot_u = 0.0, double pivot_v = 0.0);

/// Random in-plane rotation and scale drawn from `params`.
Augmented augment(const Eigen::VectorXd& features, const Pose& label, Rng& rng,
                  const AugmentParams& params = {}, double pivot_u = 0.0, double pivot_v = 0.0);

/// Builds labeled, unlabeled and validation sets. Training subjects are
/// 0..n_subjects-1; listed ones become labeled (one random view per frame),
/// the others unlabeled (all views). Validation subjects follow the training
/// ids. Deterministic in (config, skeleton, labeled ids).
Dataset generate_dataset(const CaptureConfig& config, const Skeleton& skeleton,
                         std::span<const int> labeled_subject_ids);

nlohmann::json capture_config_to_json(const CaptureConfig& c);
CaptureConfig capture_config_from_json(const nlohmann::json& j);

inline constexpr int kDatasetFormatVersion = 1;

nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mvpose
