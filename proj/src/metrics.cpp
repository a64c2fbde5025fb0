#include "mvpose/metrics.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

void check_same_shape(const Pose& a, const Pose& b, const char* op) {
  if (a.n_joints() != b.n_joints()) throw ShapeError(std::string(op) + ": joint counts differ");
}

double mean_joint_error(const Joints& pred, const Joints& gt) {
  return (pred - gt).colwise().norm().mean();
}

double fraction_within(const Joints& pred, const Joints& gt, double threshold_mm) {
  if (!(threshold_mm > 0.0)) throw ConfigError("pck: threshold must be positive");
  const auto err = (pred - gt).colwise().norm();
  int hits = 0;
  for (Eigen::Index j = 0; j < err.size(); ++j) hits += err(j) < threshold_mm ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(err.size());
}

}  // namespace

double mpjpe(const Pose& pred, const Pose& gt) {
  check_same_shape(pred, gt, "mpjpe");
  return mean_joint_error(pred.joints(), gt.joints());
}

double nmpjpe(const Pose& pred, const Pose& gt) {
  const double s = optimal_scale(pred, gt);
  return mean_joint_error(s * pred.joints(), gt.joints());
}

double pmpjpe(const Pose& pred, const Pose& gt) {
  const AlignmentResult a = procrustes_align(pred, gt);
  return mean_joint_error(a.scale * (a.rotation.matrix() * pred.joints()), gt.joints());
}

double pck(const Pose& pred, const Pose& gt, double threshold_mm) {
  check_same_shape(pred, gt, "pck");
  return fraction_within(pred.joints(), gt.joints(), threshold_mm);
}

double npck(const Pose& pred, const Pose& gt, double threshold_mm) {
  const double s = optimal_scale(pred, gt);
  return fraction_within(s * pred.joints(), gt.joints(), threshold_mm);
}

Eigen::Vector3d center_of_mass(const Pose& p, const Skeleton& skeleton) {
  if (p.n_joints() != skeleton.n_joints()) throw ShapeError("center_of_mass: joint counts differ");
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  for (int j = 0; j < p.n_joints(); ++j) com += skeleton.segment_weights()[j] * p.joint(j);
  return com;
}

ComDistances com_distances(const Pose& p, const Skeleton& skeleton) {
  const auto& knee = skeleton.limbs().knee;
  if (knee.empty()) throw ConfigError("com_distances: skeleton defines no (hip, knee, ankle) triples");
  Eigen::Vector3d hip = Eigen::Vector3d::Zero();
  Eigen::Vector3d ankle = Eigen::Vector3d::Zero();
  for (const auto& t : knee) {
    hip += p.joint(t[0]);
    ankle += p.joint(t[2]);
  }
  hip /= static_cast<double>(knee.size());
  ankle /= static_cast<double>(knee.size());
  const Eigen::Vector3d com = center_of_mass(p, skeleton);
  return {(com - hip).norm(), (com - ankle).norm()};
}

double flexion_angle(const Pose& p, const JointTriple& t) {
  for (int idx : t) {
    if (idx < 0 || idx >= p.n_joints()) throw ShapeError("flexion_angle: joint index out of range");
  }
  const Eigen::Vector3d a = p.joint(t[0]) - p.joint(t[1]);
  const Eigen::Vector3d c = p.joint(t[2]) - p.joint(t[1]);
  if (!(a.norm() > kDegenerateNorm) || !(c.norm() > kDegenerateNorm)) {
    throw DegenerateError("flexion_angle: zero-length segment");
  }
  return std::atan2(a.cross(c).norm(), a.dot(c)) * 180.0 / M_PI;
}

MetricReport evaluate_sample(const Pose& pred, const Pose& gt, const Skeleton& skeleton) {
  check_same_shape(pred, gt, "evaluate_sample");
  MetricReport r;
  r.n_samples = 1;
  r.mpjpe_mm = mpjpe(pred, gt);
  r.pck = pck(pred, gt);
  const double s = optimal_scale(pred, gt);
  const Pose scaled = pred.scaled(s);
  r.nmpjpe_mm = mpjpe(scaled, gt);
  r.npck = pck(scaled, gt);
  r.pmpjpe_mm = pmpjpe(pred, gt);

  const auto& limbs = skeleton.limbs();
  if (!limbs.knee.empty()) {
    const ComDistances cp = com_distances(scaled, skeleton);
    const ComDistances cg = com_distances(gt, skeleton);
    r.com_hip_mm = std::abs(cp.com_hip_mm - cg.com_hip_mm);
    r.com_ankle_mm = std::abs(cp.com_ankle_mm - cg.com_ankle_mm);
    double knee = 0.0;
    for (const auto& t : limbs.knee) knee += std::abs(flexion_angle(scaled, t) - flexion_angle(gt, t));
    r.knee_flexion_deg = knee / static_cast<double>(limbs.knee.size());
  } else {
    r.com_hip_mm = r.com_ankle_mm = r.knee_flexion_deg = std::nan("");
  }
  if (!limbs.hip.empty()) {
    double hip = 0.0;
    for (const auto& t : limbs.hip) hip += std::abs(flexion_angle(scaled, t) - flexion_angle(gt, t));
    r.hip_flexion_deg = hip / static_cast<double>(limbs.hip.size());
  } else {
    r.hip_flexion_deg = std::nan("");
  }
  return r;
}

MetricReport aggregate_reports(std::span<const MetricReport> reports) {
  MetricReport out;
  if (reports.empty()) return out;
  for (const auto& r : reports) {
    out.mpjpe_mm += r.mpjpe_mm;
    out.nmpjpe_mm += r.nmpjpe_mm;
    out.pmpjpe_mm += r.pmpjpe_mm;
    out.pck += r.pck;
    out.npck += r.npck;
    out.com_hip_mm += r.com_hip_mm;
    out.com_ankle_mm += r.com_ankle_mm;
    out.hip_flexion_deg += r.hip_flexion_deg;
    out.knee_flexion_deg += r.knee_flexion_deg;
    out.n_samples += r.n_samples;
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  out.mpjpe_mm *= inv;
  out.nmpjpe_mm *= inv;
  out.pmpjpe_mm *= inv;
  out.pck *= inv;
  out.npck *= inv;
  out.com_hip_mm *= inv;
  out.com_ankle_mm *= inv;
  out.hip_flexion_deg *= inv;
  out.knee_flexion_deg *= inv;
  return out;
}

MetricReport report_difference(const MetricReport& a, const MetricReport& b) {
  MetricReport d;
  d.mpjpe_mm = a.mpjpe_mm - b.mpjpe_mm;
  d.nmpjpe_mm = a.nmpjpe_mm - b.nmpjpe_mm;
  d.pmpjpe_mm = a.pmpjpe_mm - b.pmpjpe_mm;
  d.pck = a.pck - b.pck;
  d.npck = a.npck - b.npck;
  d.com_hip_mm = a.com_hip_mm - b.com_hip_mm;
  d.com_ankle_mm = a.com_ankle_mm - b.com_ankle_mm;
  d.hip_flexion_deg = a.hip_flexion_deg - b.hip_flexion_deg;
  d.knee_flexion_deg = a.knee_flexion_deg - b.knee_flexion_deg;
  d.n_samples = a.n_samples - b.n_samples;
  return d;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metric_csv_header() {
  return "mpjpe_mm,nmpjpe_mm,pmpjpe_mm,pck,npck,com_hip_mm,com_ankle_mm,hip_flexion_deg,"
         "knee_flexion_deg,n_samples";
}

std::string metric_csv_row(const MetricReport& r) {
  std::string s;
  for (double v : {r.mpjpe_mm, r.nmpjpe_mm, r.pmpjpe_mm, r.pck, r.npck, r.com_hip_mm,
                   r.com_ankle_mm, r.hip_flexion_deg, r.knee_flexion_deg}) {
    s += format_double(v);
    s += ',';
  }
  s += std::to_string(r.n_samples);
  return s;
}

}  // namespace mvpose
