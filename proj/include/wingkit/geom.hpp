#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace wingkit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

// Maps an angle onto [-pi, pi).
double wrap_angle(double a);

// World frame: x along the runway toward touchdown, y left, z up. Body
// frame: x forward (also the camera optical axis), y left, z up.
// Positive pitch raises the nose, positive roll lowers the left wing (and
// so turns toward positive yaw).
struct Pose {
  Vec3 position = Vec3::Zero();
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
};

struct CameraIntrinsics {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 80.0;
  double cy = 60.0;
  int width = 160;
  int height = 120;

  bool valid() const;
  // Desk-scale default scaled to an arbitrary resolution, same field of view.
  static CameraIntrinsics for_resolution(int width, int height);
};

// x_target = scale * rotation * x_source + translation
struct SimilarityTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();  // along body x, y, z
  Pose orientation;               // only the angles are used
};

// Image-plane ellipse: points x with (x - center)^T S^-1 (x - center) <= 1,
// where S has eigenvalues semi_axes^2 and major-axis direction `angle`.
struct ImageEllipse {
  Vec2 center = Vec2::Zero();
  Vec2 semi_axes = Vec2::Zero();  // major, minor
  double angle = 0.0;             // radians, major axis from +u toward +v

  bool contains(double u, double v) const;
  double area() const { return kPi * semi_axes.x() * semi_axes.y(); }
};

// Intrinsic Z-Y-X (yaw, then pitch, then roll) body-to-world rotation.
Mat3 euler_to_rotation(double pitch, double yaw, double roll);

struct EulerAngles {
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
};

// Throws GimbalDegenerate when |sin(pitch)| > 1 - 1e-9.
EulerAngles rotation_to_euler(const Mat3& r);

inline Mat3 pose_rotation(const Pose& p) {
  return euler_to_rotation(p.pitch, p.yaw, p.roll);
}

// Pixel coordinates; empty when the point is at or behind the camera
// (depth <= 1e-6 m).
std::optional<Vec2> project_point(const CameraIntrinsics& intr,
                                  const Pose& camera, const Vec3& world_point);

// Projected outline of the ellipsoid. Empty when any part of the ellipsoid
// reaches behind the camera, or when the outline misses the image.
std::optional<ImageEllipse> project_ellipsoid(const CameraIntrinsics& intr,
                                              const Pose& camera,
                                              const Ellipsoid& ellipsoid);

// Fallback used for numerically degenerate conics: projects sampled surface
// points and fits the enclosing covariance-aligned ellipse.
std::optional<ImageEllipse> project_ellipsoid_sampled(
    const CameraIntrinsics& intr, const Pose& camera,
    const Ellipsoid& ellipsoid, int samples = 256);

// Row-major occupancy; a pixel (u, v) is set iff its center (u, v) lies
// inside the ellipse.
std::vector<std::uint8_t> rasterize_ellipse(const ImageEllipse& e, int width,
                                            int height);

// Least-squares similarity (R, t, s) taking source onto target, reflection
// corrected. Throws DegenerateConfiguration for fewer than 3 points or a
// rank < 2 centered source scatter; InvalidArgument on length mismatch.
SimilarityTransform kabsch_umeyama(std::span<const Vec3> source,
                                   std::span<const Vec3> target);

}  // namespace wingkit
