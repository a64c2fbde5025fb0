#include "mvpose/synth_capture.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Body frame (y up, subject facing +z) to camera-style frame (y down).
const Rotation3& body_to_camera() {
  static const Rotation3 r = Rotation3::about_x(M_PI);
  return r;
}

void validate(const CaptureConfig& c) {
  if (c.n_cameras < 2) throw ConfigError("capture config: n_cameras must be at least 2");
  if (c.n_subjects < 1) throw ConfigError("capture config: n_subjects must be positive");
  if (c.frames_per_subject < 1) throw ConfigError("capture config: frames_per_subject must be positive");
  if (c.n_validation_subjects < 0 || c.validation_frames_per_subject < 0) {
    throw ConfigError("capture config: validation counts must be non-negative");
  }
  if (!(c.noise_sigma_mm >= 0.0)) throw ConfigError("capture config: noise_sigma_mm must be >= 0");
  if (!(c.intrinsics.focal_px > 0.0)) throw ConfigError("capture config: focal length must be positive");
  if (!(c.intrinsics.standoff_mm > 0.0)) throw ConfigError("capture config: standoff must be positive");
}

// Camera orientations in the rig frame for one frame.
std::vector<Rotation3> camera_orientations(const CaptureConfig& c, std::span<const double> fixed_tilt,
                                           Rng& rng) {
  std::vector<Rotation3> out;
  out.reserve(c.n_cameras);
  for (int cam = 0; cam < c.n_cameras; ++cam) {
    const double azimuth = 2.0 * M_PI * cam / c.n_cameras;
    double pan = 0.0;
    double tilt = fixed_tilt[cam];
    if (c.rotation_model == RotationModel::ptz) {
      pan = uniform(rng, -c.ptz_range_deg, c.ptz_range_deg) * kDegToRad;
      tilt = uniform(rng, -c.ptz_range_deg, c.ptz_range_deg) * kDegToRad;
    }
    out.push_back(Rotation3::about_y(azimuth + pan) * Rotation3::about_x(tilt));
  }
  return out;
}

Rng stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

LabeledSample single_view_sample(const Pose& rig_pose, std::span<const Rotation3> orientations,
                                 const CaptureConfig& c, int subject, Rng& rng) {
  const int cam = std::uniform_int_distribution<int>(0, c.n_cameras - 1)(rng);
  LabeledSample s;
  s.pose = rig_pose.rotated(orientations[cam].inverse());
  s.features = observe(s.pose, c.intrinsics, c.noise_sigma_mm, rng);
  s.subject = subject;
  s.camera = cam;
  return s;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json labeled_to_json(const LabeledSample& s) {
  return {{"subject", s.subject}, {"camera", s.camera}, {"features", vector_to_json(s.features)},
          {"pose_mm", pose_to_json(s.pose)}};
}

LabeledSample labeled_from_json(const nlohmann::json& j) {
  LabeledSample s;
  s.subject = j.at("subject").get<int>();
  s.camera = j.at("camera").get<int>();
  s.features = vector_from_json(j.at("features"));
  s.pose = pose_from_json(j.at("pose_mm"));
  return s;
}

}  // namespace

Rotation3 random_rotation(Rng& rng, double max_angle_rad) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d axis;
  do {
    axis = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  } while (axis.norm() < 1e-12);
  const double angle = max_angle_rad > 0.0 ? uniform(rng, 0.0, max_angle_rad) : 0.0;
  return Rotation3::from_axis_angle(axis, angle);
}

PoseStyle sample_style(const Skeleton& skeleton, Rng& rng, double max_angle_rad) {
  PoseStyle style;
  style.offsets.reserve(skeleton.n_joints());
  for (int j = 0; j < skeleton.n_joints(); ++j) style.offsets.push_back(random_rotation(rng, max_angle_rad));
  return style;
}

Pose forward_kinematics(const Skeleton& skeleton, std::span<const Rotation3> local) {
  const int n = skeleton.n_joints();
  if (static_cast<int>(local.size()) != n) throw ShapeError("forward_kinematics: one rotation per joint");
  if (!skeleton.has_rest_pose()) throw ConfigError("forward_kinematics: skeleton has no rest pose");
  std::vector<Eigen::Matrix3d> global(n);
  global[0] = local[0].matrix();
  Joints j = Joints::Zero(3, n);
  const auto& parent = skeleton.parent();
  for (std::size_t k = 1; k < skeleton.topological_order().size(); ++k) {
    const int c = skeleton.topological_order()[k];
    global[c] = global[parent[c]] * local[c].matrix();
    j.col(c) = j.col(parent[c]) + skeleton.bone_lengths()[c] * (global[c] * skeleton.rest_directions()[c]);
  }
  return Pose(std::move(j));
}

Pose sample_pose(const Skeleton& skeleton, Rng& rng, double max_angle_rad, const PoseStyle* style) {
  std::vector<Rotation3> local;
  local.reserve(skeleton.n_joints());
  for (int j = 0; j < skeleton.n_joints(); ++j) {
    Rotation3 r = random_rotation(rng, max_angle_rad);
    local.push_back(style ? style->offsets.at(j) * r : r);
  }
  return forward_kinematics(skeleton, local);
}

std::vector<Pose> make_views(const Pose& world_pose, std::span<const Rotation3> rotations) {
  if (rotations.empty()) throw ConfigError("make_views: no cameras");
  if (!rotations[0].matrix().isIdentity(0.0)) {
    throw ConfigError("make_views: the first rotation must be the identity");
  }
  std::vector<Pose> views;
  views.reserve(rotations.size());
  for (const auto& r : rotations) views.push_back(world_pose.rotated(r.inverse()));
  return views;
}

Joints perturb_joints(const Joints& joints, double sigma_mm, Rng& rng) {
  if (!(sigma_mm >= 0.0)) throw ConfigError("perturb_joints: sigma must be non-negative");
  if (sigma_mm == 0.0) return joints;
  std::normal_distribution<double> normal(0.0, sigma_mm);
  Joints out = joints;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (int r = 0; r < 3; ++r) out(r, c) += normal(rng);
  }
  return out;
}

Eigen::VectorXd project(const Joints& camera_joints, const Intrinsics& k) {
  Eigen::VectorXd f(2 * camera_joints.cols());
  for (Eigen::Index j = 0; j < camera_joints.cols(); ++j) {
    const double z = camera_joints(2, j) + k.standoff_mm;
    if (!(z > 0.0)) {
      throw DegenerateError("project: joint " + std::to_string(j) + " is behind the camera");
    }
    f(2 * j) = k.focal_px * camera_joints(0, j) / z + k.cx;
    f(2 * j + 1) = k.focal_px * camera_joints(1, j) / z + k.cy;
  }
  return f;
}

Eigen::VectorXd observe(const Pose& view_pose, const Intrinsics& intrinsics, double noise_sigma_mm,
                        Rng& rng) {
  return project(perturb_joints(view_pose.joints(), noise_sigma_mm, rng), intrinsics);
}

Augmented apply_augmentation(const Eigen::VectorXd& features, const Pose& label, double angle_rad,
                             double scale, double pivot_u, double pivot_v) {
  if (features.size() % 2 != 0) throw ShapeError("augment: features must hold (u, v) pairs");
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  Augmented out;
  out.features.resize(features.size());
  for (Eigen::Index j = 0; j < features.size() / 2; ++j) {
    const double u = features(2 * j) - pivot_u;
    const double v = features(2 * j + 1) - pivot_v;
    out.features(2 * j) = scale * (c * u - s * v) + pivot_u;
    out.features(2 * j + 1) = scale * (s * u + c * v) + pivot_v;
  }
  out.label = label.rotated(Rotation3::about_z(angle_rad)).scaled(scale);
  return out;
}

Augmented augment(const Eigen::VectorXd& features, const Pose& label, Rng& rng,
                  const AugmentParams& params, double pivot_u, double pivot_v) {
  const double max_rot = params.max_rotation_deg * kDegToRad;
  const double angle = max_rot > 0.0 ? uniform(rng, -max_rot, max_rot) : 0.0;
  const double scale =
      params.max_scale > params.min_scale ? uniform(rng, params.min_scale, params.max_scale) : params.min_scale;
  return apply_augmentation(features, label, angle, scale, pivot_u, pivot_v);
}

Dataset generate_dataset(const CaptureConfig& config, const Skeleton& skeleton,
                         std::span<const int> labeled_subject_ids) {
  validate(config);
  if (!skeleton.has_rest_pose()) throw ConfigError("generate_dataset: skeleton has no rest pose");
  for (int id : labeled_subject_ids) {
    if (id < 0 || id >= config.n_subjects) {
      throw ConfigError("generate_dataset: labeled subject " + std::to_string(id) + " out of range");
    }
  }

  Dataset d;
  d.config = config;
  d.skeleton = skeleton;
  d.labeled_subjects.assign(labeled_subject_ids.begin(), labeled_subject_ids.end());
  std::sort(d.labeled_subjects.begin(), d.labeled_subjects.end());
  d.labeled_subjects.erase(std::unique(d.labeled_subjects.begin(), d.labeled_subjects.end()),
                           d.labeled_subjects.end());

  // Rig and subjects draw from separate streams so that a subject's data does
  // not depend on which other subjects are labeled.
  Rng rig_rng = stream(config.rng_seed, 0);
  std::vector<double> fixed_tilt(config.n_cameras);
  for (auto& t : fixed_tilt) t = uniform(rig_rng, -config.fixed_tilt_deg, config.fixed_tilt_deg) * kDegToRad;

  const double style_rad = config.style_deg * kDegToRad;
  const double perturb_rad = config.perturbation_deg * kDegToRad;
  const int total_subjects = config.n_subjects + config.n_validation_subjects;
  int time_index = 0;
  for (int subject = 0; subject < total_subjects; ++subject) {
    Rng rng = stream(config.rng_seed, static_cast<std::uint64_t>(subject) + 1);
    const PoseStyle style = sample_style(skeleton, rng, style_rad);
    const bool validation = subject >= config.n_subjects;
    const bool labeled = !validation && std::binary_search(d.labeled_subjects.begin(),
                                                           d.labeled_subjects.end(), subject);
    const int frames = validation ? config.validation_frames_per_subject : config.frames_per_subject;
    for (int f = 0; f < frames; ++f, ++time_index) {
      const Pose body = sample_pose(skeleton, rng, perturb_rad, &style);
      const double yaw = uniform(rng, -M_PI, M_PI);
      const Pose rig_pose = body.rotated(body_to_camera() * Rotation3::about_y(yaw));
      const auto orientations = camera_orientations(config, fixed_tilt, rng);

      if (validation) {
        d.validation.push_back(single_view_sample(rig_pose, orientations, config, subject, rng));
      } else if (labeled) {
        d.labeled.push_back(single_view_sample(rig_pose, orientations, config, subject, rng));
      } else {
        // View 0 defines the common frame.
        std::vector<Rotation3> to_first;
        to_first.reserve(config.n_cameras);
        const Rotation3 first_inv = orientations[0].inverse();
        for (int cam = 0; cam < config.n_cameras; ++cam) {
          to_first.push_back(cam == 0 ? Rotation3::identity() : first_inv * orientations[cam]);
        }
        const Pose world = rig_pose.rotated(first_inv);
        const auto views = make_views(world, to_first);
        MultiViewSample mv;
        mv.time_index = time_index;
        mv.subject = subject;
        for (int cam = 0; cam < config.n_cameras; ++cam) {
          ViewObservation obs;
          obs.pose = views[cam];
          obs.features = observe(obs.pose, config.intrinsics, config.noise_sigma_mm, rng);
          obs.rotation = to_first[cam];
          mv.views.push_back(std::move(obs));
        }
        d.unlabeled.push_back(std::move(mv));
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json capture_config_to_json(const CaptureConfig& c) {
  return {{"n_cameras", c.n_cameras},
          {"n_subjects", c.n_subjects},
          {"frames_per_subject", c.frames_per_subject},
          {"n_validation_subjects", c.n_validation_subjects},
          {"validation_frames_per_subject", c.validation_frames_per_subject},
          {"noise_sigma_mm", c.noise_sigma_mm},
          {"rotation_model", c.rotation_model == RotationModel::ptz ? "ptz" : "fixed"},
          {"intrinsics",
           {{"focal_px", c.intrinsics.focal_px},
            {"cx", c.intrinsics.cx},
            {"cy", c.intrinsics.cy},
            {"standoff_mm", c.intrinsics.standoff_mm}}},
          {"ptz_range_deg", c.ptz_range_deg},
          {"fixed_tilt_deg", c.fixed_tilt_deg},
          {"style_deg", c.style_deg},
          {"perturbation_deg", c.perturbation_deg},
          {"rng_seed", c.rng_seed}};
}

CaptureConfig capture_config_from_json(const nlohmann::json& j) {
  CaptureConfig c;
  try {
    static const char* known[] = {"n_cameras",
                                  "n_subjects",
                                  "frames_per_subject",
                                  "n_validation_subjects",
                                  "validation_frames_per_subject",
                                  "noise_sigma_mm",
                                  "rotation_model",
                                  "intrinsics",
                                  "ptz_range_deg",
                                  "fixed_tilt_deg",
                                  "style_deg",
                                  "perturbation_deg",
                                  "rng_seed"};
    for (const auto& [key, value] : j.items()) {
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
          std::end(known)) {
        throw ConfigError("capture config: unknown field '" + key + "'");
      }
    }
    c.n_cameras = j.value("n_cameras", c.n_cameras);
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.frames_per_subject = j.value("frames_per_subject", c.frames_per_subject);
    c.n_validation_subjects = j.value("n_validation_subjects", c.n_validation_subjects);
    c.validation_frames_per_subject = j.value("validation_frames_per_subject", c.validation_frames_per_subject);
    c.noise_sigma_mm = j.value("noise_sigma_mm", c.noise_sigma_mm);
    const std::string model = j.value("rotation_model", std::string("fixed"));
    if (model == "ptz") {
      c.rotation_model = RotationModel::ptz;
    } else if (model == "fixed" || model == "static") {
      c.rotation_model = RotationModel::fixed;
    } else {
      throw ConfigError("capture config: rotation_model must be 'fixed' or 'ptz'");
    }
    if (j.contains("intrinsics")) {
      const auto& k = j.at("intrinsics");
      c.intrinsics.focal_px = k.value("focal_px", c.intrinsics.focal_px);
      c.intrinsics.cx = k.value("cx", c.intrinsics.cx);
      c.intrinsics.cy = k.value("cy", c.intrinsics.cy);
      c.intrinsics.standoff_mm = k.value("standoff_mm", c.intrinsics.standoff_mm);
    }
    c.ptz_range_deg = j.value("ptz_range_deg", c.ptz_range_deg);
    c.fixed_tilt_deg = j.value("fixed_tilt_deg", c.fixed_tilt_deg);
    c.style_deg = j.value("style_deg", c.style_deg);
    c.perturbation_deg = j.value("perturbation_deg", c.perturbation_deg);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("capture config: ") + e.what());
  }
  validate(c);
  return c;
}

nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json j;
  j["format_version"] = kDatasetFormatVersion;
  j["meta"] = capture_config_to_json(d.config);
  j["meta"]["labeled_subjects"] = d.labeled_subjects;
  j["skeleton"] = skeleton_to_json(d.skeleton);
  auto labeled = nlohmann::json::array();
  for (const auto& s : d.labeled) labeled.push_back(labeled_to_json(s));
  j["labeled"] = std::move(labeled);
  auto unlabeled = nlohmann::json::array();
  for (const auto& s : d.unlabeled) {
    auto views = nlohmann::json::array();
    for (const auto& v : s.views) {
      nlohmann::json jv = {{"features", vector_to_json(v.features)}, {"pose_mm", pose_to_json(v.pose)}};
      if (v.rotation) jv["rotation"] = rotation_to_json(*v.rotation);
      views.push_back(std::move(jv));
    }
    unlabeled.push_back({{"time_index", s.time_index}, {"subject", s.subject}, {"views", std::move(views)}});
  }
  j["unlabeled"] = std::move(unlabeled);
  auto validation = nlohmann::json::array();
  for (const auto& s : d.validation) validation.push_back(labeled_to_json(s));
  j["validation"] = std::move(validation);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("format_version")) throw ConfigError("dataset: missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw ConfigError("dataset: unsupported format_version " + std::to_string(version));
    }
    Dataset d;
    nlohmann::json meta = j.at("meta");
    d.labeled_subjects = meta.value("labeled_subjects", std::vector<int>{});
    meta.erase("labeled_subjects");
    d.config = capture_config_from_json(meta);
    d.skeleton = skeleton_from_json(j.at("skeleton"));
    for (const auto& s : j.at("labeled")) d.labeled.push_back(labeled_from_json(s));
    for (const auto& s : j.at("unlabeled")) {
      MultiViewSample mv;
      mv.time_index = s.at("time_index").get<int>();
      mv.subject = s.at("subject").get<int>();
      for (const auto& v : s.at("views")) {
        ViewObservation obs;
        obs.features = vector_from_json(v.at("features"));
        obs.pose = pose_from_json(v.at("pose_mm"));
        if (v.contains("rotation")) obs.rotation = rotation_from_json(v.at("rotation"));
        mv.views.push_back(std::move(obs));
      }
      d.unlabeled.push_back(std::move(mv));
    }
    if (j.contains("validation")) {
      for (const auto& s : j.at("validation")) d.validation.push_back(labeled_from_json(s));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: malformed JSON: ") + e.what());
  }
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(d).dump());
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json_file(path)); }

}  // namespace mvpose
