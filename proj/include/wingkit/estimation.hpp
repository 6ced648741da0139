#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>

#include "wingkit/geom.hpp"
#include "wingkit/image.hpp"
#include "wingkit/rng.hpp"

namespace wingkit {

// Square fiducial standing vertically in the world; its outward normal is
// the body x-axis of world_pose. Defaults: world origin, facing -x.
struct MarkerConfig {
  double side_length = 0.80;
  Pose world_pose{Vec3::Zero(), 0.0, -kPi, 0.0};
  double max_range = 12.0;
  double max_view_angle = kPi / 3;

  Vec3 normal() const;
  std::array<Vec3, 4> corners() const;
};

struct EstimatorNoiseModel {
  double sigma_pos = 0.0;    // m per axis
  double sigma_yaw = 0.0;    // rad
  double sigma_pitch = 0.0;  // rad
  double sigma_roll = 0.0;   // rad
  std::uint64_t seed = 0;

  // Fallback-estimator calibration: mean position error norm 0.42 m and
  // mean |yaw error| 2.37 deg; pitch/roll reuse the yaw sigma.
  static EstimatorNoiseModel learned_fallback(std::uint64_t seed = 0);
  // Per-axis sigma giving a 3-D error norm with the requested mean.
  static double sigma_for_mean_norm3(double mean_norm);
  // Sigma giving a half-normal with the requested mean.
  static double sigma_for_mean_abs(double mean_abs);
};

enum class EstimateSource { Marker, Fallback };

struct PoseEstimate {
  Pose pose;
  EstimateSource source = EstimateSource::Fallback;
  double timestamp = 0.0;
};

bool marker_visible(const Pose& camera, const CameraIntrinsics& intr,
                    const MarkerConfig& marker);

// Noise sigmas scale by range / max_range. Throws NotVisible when range is
// outside [0, max_range]. Draws from Engine(seed) unless an engine is given.
PoseEstimate simulate_marker_estimate(const Pose& truth, const MarkerConfig& marker,
                                      const EstimatorNoiseModel& noise, double range);
PoseEstimate simulate_marker_estimate(const Pose& truth, const MarkerConfig& marker,
                                      const EstimatorNoiseModel& noise, double range,
                                      Engine& rng);

PoseEstimate simulate_fallback_estimate(const Pose& truth, const EstimatorNoiseModel& noise);
PoseEstimate simulate_fallback_estimate(const Pose& truth, const EstimatorNoiseModel& noise,
                                        Engine& rng);

// Marker branch when the marker is visible, fallback otherwise.
PoseEstimate hybrid_estimate(const Pose& truth, const CameraIntrinsics& intr,
                             const MarkerConfig& marker, const EstimatorNoiseModel& noise);
PoseEstimate hybrid_estimate(const Pose& truth, const CameraIntrinsics& intr,
                             const MarkerConfig& marker, const EstimatorNoiseModel& noise,
                             Engine& rng);

using AngleCode = std::array<double, 6>;

// (sin pitch, cos pitch, sin yaw, cos yaw, sin roll, cos roll)
AngleCode encode_angles(double pitch, double yaw, double roll);
// Throws DegeneratePair when any (sin, cos) pair has norm <= 1e-6.
EulerAngles decode_angles(const AngleCode& code);

// Mean SSIM over non-overlapping 8x8 luma blocks. Throws DimensionMismatch.
double ssim(const Frame& a, const Frame& b);
// Serial reference and OpenMP block kernels behind ssim().
double ssim_serial(const Frame& a, const Frame& b);
double ssim_parallel(const Frame& a, const Frame& b);

struct QualityMonitor {
  double threshold = 0.7;
  int window = 5;
  int consecutive_low = 0;
  bool flagged = false;
};

struct MonitorUpdate {
  QualityMonitor monitor;
  bool flag_raised = false;
};

// Counts strictly-below-threshold values; raises exactly when the count
// reaches the window.
MonitorUpdate monitor_update(const QualityMonitor& monitor, double ssim_value);

void write_monitor_event(std::ostream& out, double t, double ssim_value, bool flag);

}  // namespace wingkit
