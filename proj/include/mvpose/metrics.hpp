#pragma once

#include <span>
#include <string>

#include "mvpose/alignment.hpp"

namespace mvpose {

/// Default PCK threshold: a joint is correct within 15 cm.
inline constexpr double kPckThresholdMm = 150.0;

/// Aggregate evaluation metrics. Distances in mm, angles in degrees; the ski
/// fields are absolute errors between prediction and ground truth measured on
/// the scale-corrected prediction.
///
/// CSV column order is the field order below.
struct MetricReport {
  double mpjpe_mm = 0.0;
  double nmpjpe_mm = 0.0;
  double pmpjpe_mm = 0.0;
  double pck = 0.0;
  double npck = 0.0;
  double com_hip_mm = 0.0;
  double com_ankle_mm = 0.0;
  double hip_flexion_deg = 0.0;
  double knee_flexion_deg = 0.0;
  int n_samples = 0;
};

double mpjpe(const Pose& pred, const Pose& gt);
double nmpjpe(const Pose& pred, const Pose& gt);
double pmpjpe(const Pose& pred, const Pose& gt);
double pck(const Pose& pred, const Pose& gt, double threshold_mm = kPckThresholdMm);
/// PCK after applying the per-sample optimal scale to the prediction.
double npck(const Pose& pred, const Pose& gt, double threshold_mm = kPckThresholdMm);

Eigen::Vector3d center_of_mass(const Pose& p, const Skeleton& skeleton);

struct ComDistances {
  double com_hip_mm = 0.0;
  double com_ankle_mm = 0.0;
};

/// Distances from the COM to the hip midpoint and to the ankle midpoint. Hip
/// and ankle joints are taken from the skeleton's knee triples.
ComDistances com_distances(const Pose& p, const Skeleton& skeleton);

/// Interior angle at `triple[1]` between the segments to `triple[0]` and
/// `triple[2]`, in [0, 180] degrees.
double flexion_angle(const Pose& p, const JointTriple& triple);

/// All metrics for one prediction; n_samples = 1.
MetricReport evaluate_sample(const Pose& pred, const Pose& gt, const Skeleton& skeleton);

/// Mean of per-sample reports, n_samples summed.
MetricReport aggregate_reports(std::span<const MetricReport> reports);

/// Per-column a - b (n_samples difference included).
MetricReport report_difference(const MetricReport& a, const MetricReport& b);

std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace mvpose
