#include "wingkit/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "wingkit/dynamics.hpp"
#include "wingkit/error.hpp"

namespace wingkit {

Vec3 MarkerConfig::normal() const { return pose_rotation(world_pose).col(0); }

std::array<Vec3, 4> MarkerConfig::corners() const {
  const Mat3 r = pose_rotation(world_pose);
  const Vec3 y = 0.5 * side_length * r.col(1);
  const Vec3 z = 0.5 * side_length * r.col(2);
  const Vec3& c = world_pose.position;
  return {c + y + z, c - y + z, c - y - z, c + y - z};
}

double EstimatorNoiseModel::sigma_for_mean_norm3(double mean_norm) {
  // Mean of a chi distribution with 3 dof is 2*sqrt(2/pi) sigma.
  return mean_norm / (2.0 * std::sqrt(2.0 / kPi));
}

double EstimatorNoiseModel::sigma_for_mean_abs(double mean_abs) {
  return mean_abs / std::sqrt(2.0 / kPi);
}

EstimatorNoiseModel EstimatorNoiseModel::learned_fallback(std::uint64_t seed) {
  const double yaw = sigma_for_mean_abs(2.37 * kPi / 180.0);
  return {sigma_for_mean_norm3(0.42), yaw, yaw, yaw, seed};
}

bool marker_visible(const Pose& camera, const CameraIntrinsics& intr,
                    const MarkerConfig& marker) {
  const Vec3 to_camera = camera.position - marker.world_pose.position;
  const double range = to_camera.norm();
  if (range > marker.max_range || range <= 0.0) return false;
  const double cos_view = marker.normal().dot(to_camera) / range;
  if (cos_view < std::cos(marker.max_view_angle)) return false;
  for (const Vec3& corner : marker.corners()) {
    const auto px = project_point(intr, camera, corner);
    if (!px) return false;
    if (px->x() < 0.0 || px->x() >= intr.width || px->y() < 0.0 || px->y() >= intr.height) {
      return false;
    }
  }
  return true;
}

namespace {

Pose perturb(const Pose& truth, double s_pos, double s_pitch, double s_yaw,
             double s_roll, Engine& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Pose p = truth;
  p.position.x() += s_pos * n(rng);
  p.position.y() += s_pos * n(rng);
  p.position.z() += s_pos * n(rng);
  p.pitch = std::clamp(truth.pitch + s_pitch * n(rng), -kPitchLimit, kPitchLimit);
  p.yaw = wrap_angle(truth.yaw + s_yaw * n(rng));
  p.roll = wrap_angle(truth.roll + s_roll * n(rng));
  return p;
}

}  // namespace

PoseEstimate simulate_marker_estimate(const Pose& truth, const MarkerConfig& marker,
                                      const EstimatorNoiseModel& noise, double range,
                                      Engine& rng) {
  if (!(range >= 0.0) || range > marker.max_range) {
    throw NotVisible("marker out of range");
  }
  const double s = range / marker.max_range;
  return {perturb(truth, s * noise.sigma_pos, s * noise.sigma_pitch, s * noise.sigma_yaw,
                  s * noise.sigma_roll, rng),
          EstimateSource::Marker, 0.0};
}

PoseEstimate simulate_marker_estimate(const Pose& truth, const MarkerConfig& marker,
                                      const EstimatorNoiseModel& noise, double range) {
  Engine rng(noise.seed);
  return simulate_marker_estimate(truth, marker, noise, range, rng);
}

PoseEstimate simulate_fallback_estimate(const Pose& truth, const EstimatorNoiseModel& noise,
                                        Engine& rng) {
  return {perturb(truth, noise.sigma_pos, noise.sigma_pitch, noise.sigma_yaw,
                  noise.sigma_roll, rng),
          EstimateSource::Fallback, 0.0};
}

PoseEstimate simulate_fallback_estimate(const Pose& truth, const EstimatorNoiseModel& noise) {
  Engine rng(noise.seed);
  return simulate_fallback_estimate(truth, noise, rng);
}

PoseEstimate hybrid_estimate(const Pose& truth, const CameraIntrinsics& intr,
                             const MarkerConfig& marker, const EstimatorNoiseModel& noise,
                             Engine& rng) {
  if (marker_visible(truth, intr, marker)) {
    const double range = (truth.position - marker.world_pose.position).norm();
    return simulate_marker_estimate(truth, marker, noise, range, rng);
  }
  return simulate_fallback_estimate(truth, noise, rng);
}

PoseEstimate hybrid_estimate(const Pose& truth, const CameraIntrinsics& intr,
                             const MarkerConfig& marker, const EstimatorNoiseModel& noise) {
  Engine rng(noise.seed);
  return hybrid_estimate(truth, intr, marker, noise, rng);
}

AngleCode encode_angles(double pitch, double yaw, double roll) {
  return {std::sin(pitch), std::cos(pitch), std::sin(yaw),
          std::cos(yaw),   std::sin(roll),  std::cos(roll)};
}

EulerAngles decode_angles(const AngleCode& code) {
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const double s = code[2 * i];
    const double c = code[2 * i + 1];
    const double norm = std::hypot(s, c);
    if (!(norm > 1e-6)) throw DegeneratePair("sin/cos pair has near-zero norm");
    out[i] = std::atan2(s / norm, c / norm);
  }
  return {out[0], wrap_angle(out[1]), wrap_angle(out[2])};
}

namespace {

constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);
constexpr int kBlock = 8;

std::vector<double> luma(const Frame& f) {
  std::vector<double> y(static_cast<std::size_t>(f.width) * f.height);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * f.pixels[3 * i] + 0.587 * f.pixels[3 * i + 1] + 0.114 * f.pixels[3 * i + 2];
  }
  return y;
}

struct BlockGrid {
  int cols, rows, bw, bh;
};

BlockGrid block_grid(const Frame& f) {
  // Frames smaller than one block are compared as a single block.
  if (f.width < kBlock || f.height < kBlock) return {1, 1, f.width, f.height};
  return {f.width / kBlock, f.height / kBlock, kBlock, kBlock};
}

double block_ssim(const std::vector<double>& ya, const std::vector<double>& yb, int width,
                  int u0, int v0, int bw, int bh) {
  const double n = static_cast<double>(bw) * bh;
  double ma = 0.0, mb = 0.0;
  for (int v = v0; v < v0 + bh; ++v) {
    for (int u = u0; u < u0 + bw; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * width + u;
      ma += ya[i];
      mb += yb[i];
    }
  }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (int v = v0; v < v0 + bh; ++v) {
    for (int u = u0; u < u0 + bw; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * width + u;
      const double da = ya[i] - ma;
      const double db = yb[i] - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

void check_dims(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionMismatch("frames differ in size");
  }
  if (a.width <= 0 || a.height <= 0) throw DimensionMismatch("empty frame");
}

}  // namespace

double ssim_serial(const Frame& a, const Frame& b) {
  check_dims(a, b);
  const auto ya = luma(a);
  const auto yb = luma(b);
  const BlockGrid g = block_grid(a);
  double sum = 0.0;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      sum += block_ssim(ya, yb, a.width, c * g.bw, r * g.bh, g.bw, g.bh);
    }
  }
  return sum / (static_cast<double>(g.rows) * g.cols);
}

double ssim_parallel(const Frame& a, const Frame& b) {
  check_dims(a, b);
  const auto ya = luma(a);
  const auto yb = luma(b);
  const BlockGrid g = block_grid(a);
  std::vector<double> per_block(static_cast<std::size_t>(g.rows) * g.cols);
  const int total = g.rows * g.cols;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < total; ++k) {
    const int r = k / g.cols;
    const int c = k % g.cols;
    per_block[k] = block_ssim(ya, yb, a.width, c * g.bw, r * g.bh, g.bw, g.bh);
  }
  // Summed in block order so the result matches the serial kernel bit for bit.
  double sum = 0.0;
  for (double s : per_block) sum += s;
  return sum / total;
}

double ssim(const Frame& a, const Frame& b) { return ssim_parallel(a, b); }

MonitorUpdate monitor_update(const QualityMonitor& monitor, double ssim_value) {
  MonitorUpdate out{monitor, false};
  if (ssim_value < monitor.threshold) {
    if (out.monitor.consecutive_low < monitor.window) {
      ++out.monitor.consecutive_low;
      if (out.monitor.consecutive_low == monitor.window) {
        out.flag_raised = true;
        out.monitor.flagged = true;
      }
    }
  } else {
    out.monitor.consecutive_low = 0;
  }
  return out;
}

void write_monitor_event(std::ostream& out, double t, double ssim_value, bool flag) {
  nlohmann::ordered_json j;
  j["t"] = t;
  j["ssim"] = ssim_value;
  j["flag"] = flag;
  out << j.dump() << '\n';
}

}  // namespace wingkit
