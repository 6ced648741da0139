#include "wingkit/geom.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "wingkit/error.hpp"

namespace wingkit {

namespace {

constexpr double kMinDepth = 1e-6;
constexpr double kMaxConicCondition = 1e12;

// Body (x fwd, y left, z up) to the usual vision frame (x right, y down,
// z along the optical axis).
Mat3 body_to_vision() {
  Mat3 m;
  m << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  return m;
}

Eigen::Matrix<double, 3, 4> camera_matrix(const CameraIntrinsics& intr,
                                          const Pose& camera) {
  Mat3 k;
  k << intr.fx, 0, intr.cx,
       0, intr.fy, intr.cy,
       0, 0, 1;
  const Mat3 world_to_vision = body_to_vision() * pose_rotation(camera).transpose();
  Eigen::Matrix<double, 3, 4> ext;
  ext.leftCols<3>() = world_to_vision;
  ext.col(3) = -world_to_vision * camera.position;
  return k * ext;
}

bool bbox_hits_image(const Vec2& c, double half_u, double half_v, int width,
                     int height) {
  return c.x() + half_u >= 0.0 && c.x() - half_u <= width - 1 &&
         c.y() + half_v >= 0.0 && c.y() - half_v <= height - 1;
}

ImageEllipse ellipse_from_shape(const Vec2& center, const Eigen::Matrix2d& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(s);
  // Eigenvalues come sorted ascending.
  const Vec2 major = eig.eigenvectors().col(1);
  ImageEllipse e;
  e.center = center;
  e.semi_axes = {std::sqrt(eig.eigenvalues()(1)), std::sqrt(eig.eigenvalues()(0))};
  double angle = std::atan2(major.y(), major.x());
  if (angle <= -kPi / 2) angle += kPi;
  if (angle > kPi / 2) angle -= kPi;
  e.angle = angle;
  return e;
}

}  // namespace

double wrap_angle(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  // floor() can leave w == pi through rounding.
  if (w >= kPi) w -= 2.0 * kPi;
  if (w < -kPi) w = -kPi;
  return w;
}

bool CameraIntrinsics::valid() const {
  return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width &&
         cy >= 0 && cy < height;
}

CameraIntrinsics CameraIntrinsics::for_resolution(int width, int height) {
  const double s = width / 160.0;
  return {100.0 * s, 100.0 * s, width / 2.0, height / 2.0, width, height};
}

bool ImageEllipse::contains(double u, double v) const {
  const double du = u - center.x();
  const double dv = v - center.y();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double a = (c * du + s * dv) / semi_axes.x();
  const double b = (-s * du + c * dv) / semi_axes.y();
  return a * a + b * b <= 1.0;
}

Mat3 euler_to_rotation(double pitch, double yaw, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
          Eigen::AngleAxisd(-pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(-roll, Vec3::UnitX()))
      .toRotationMatrix();
}

EulerAngles rotation_to_euler(const Mat3& r) {
  const double sin_pitch = r(2, 0);
  if (std::abs(sin_pitch) > 1.0 - 1e-9) {
    throw GimbalDegenerate("pitch too close to +-pi/2");
  }
  EulerAngles out;
  out.pitch = std::atan2(sin_pitch, std::hypot(r(0, 0), r(1, 0)));
  out.yaw = wrap_angle(std::atan2(r(1, 0), r(0, 0)));
  out.roll = wrap_angle(std::atan2(-r(2, 1), r(2, 2)));
  return out;
}

std::optional<Vec2> project_point(const CameraIntrinsics& intr,
                                  const Pose& camera, const Vec3& world_point) {
  const Vec3 body = pose_rotation(camera).transpose() * (world_point - camera.position);
  if (body.x() <= kMinDepth) return std::nullopt;
  return Vec2(intr.cx + intr.fx * (-body.y() / body.x()),
              intr.cy + intr.fy * (-body.z() / body.x()));
}

std::optional<ImageEllipse> project_ellipsoid(const CameraIntrinsics& intr,
                                              const Pose& camera,
                                              const Ellipsoid& ellipsoid) {
  const Mat3 cam_r = pose_rotation(camera);
  const double depth = (cam_r.col(0)).dot(ellipsoid.center - camera.position);
  if (depth - ellipsoid.semi_axes.maxCoeff() <= kMinDepth) return std::nullopt;

  // Dual quadric of the ellipsoid mapped through the camera to a dual conic.
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = pose_rotation(ellipsoid.orientation);
  h.topRightCorner<3, 1>() = ellipsoid.center;
  const Eigen::Vector4d diag(ellipsoid.semi_axes.x() * ellipsoid.semi_axes.x(),
                             ellipsoid.semi_axes.y() * ellipsoid.semi_axes.y(),
                             ellipsoid.semi_axes.z() * ellipsoid.semi_axes.z(), -1.0);
  const Eigen::Matrix4d dual_quadric = h * diag.asDiagonal() * h.transpose();
  const auto p = camera_matrix(intr, camera);
  Mat3 dual_conic = p * dual_quadric * p.transpose();

  if (!(dual_conic(2, 2) < 0.0)) {
    return project_ellipsoid_sampled(intr, camera, ellipsoid);
  }
  dual_conic /= -dual_conic(2, 2);
  const Vec2 center = -dual_conic.topRightCorner<2, 1>();
  Eigen::Matrix2d shape = dual_conic.topLeftCorner<2, 2>() + center * center.transpose();
  shape = 0.5 * (shape + shape.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(shape, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(1);
  if (!(lo > 0.0) || hi / lo > kMaxConicCondition) {
    return project_ellipsoid_sampled(intr, camera, ellipsoid);
  }
  if (!bbox_hits_image(center, std::sqrt(shape(0, 0)), std::sqrt(shape(1, 1)),
                       intr.width, intr.height)) {
    return std::nullopt;
  }
  return ellipse_from_shape(center, shape);
}

std::optional<ImageEllipse> project_ellipsoid_sampled(
    const CameraIntrinsics& intr, const Pose& camera,
    const Ellipsoid& ellipsoid, int samples) {
  const Mat3 rot = pose_rotation(ellipsoid.orientation);
  std::vector<Vec2> pts;
  pts.reserve(samples);
  // Fibonacci lattice over the unit sphere, stretched onto the ellipsoid.
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < samples; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / samples;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 unit(r * std::cos(golden * i), r * std::sin(golden * i), z);
    const Vec3 world = ellipsoid.center + rot * unit.cwiseProduct(ellipsoid.semi_axes);
    auto px = project_point(intr, camera, world);
    if (!px) return std::nullopt;
    pts.push_back(*px);
  }
  Vec2 mean = Vec2::Zero();
  for (const auto& q : pts) mean += q;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& q : pts) cov += (q - mean) * (q - mean).transpose();
  cov /= static_cast<double>(pts.size());
  if (cov.determinant() <= 0.0) return std::nullopt;
  const Eigen::Matrix2d inv = cov.inverse();
  double reach = 0.0;
  for (const auto& q : pts) reach = std::max(reach, (q - mean).dot(inv * (q - mean)));
  const Eigen::Matrix2d shape = cov * reach;
  if (!bbox_hits_image(mean, std::sqrt(shape(0, 0)), std::sqrt(shape(1, 1)),
                       intr.width, intr.height)) {
    return std::nullopt;
  }
  return ellipse_from_shape(mean, shape);
}

std::vector<std::uint8_t> rasterize_ellipse(const ImageEllipse& e, int width,
                                            int height) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double a2 = e.semi_axes.x() * e.semi_axes.x();
  const double b2 = e.semi_axes.y() * e.semi_axes.y();
  const double half_u = std::sqrt(a2 * c * c + b2 * s * s);
  const double half_v = std::sqrt(a2 * s * s + b2 * c * c);
  const int u0 = std::max(0, static_cast<int>(std::floor(e.center.x() - half_u)));
  const int u1 = std::min(width - 1, static_cast<int>(std::ceil(e.center.x() + half_u)));
  const int v0 = std::max(0, static_cast<int>(std::floor(e.center.y() - half_v)));
  const int v1 = std::min(height - 1, static_cast<int>(std::ceil(e.center.y() + half_v)));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      if (e.contains(u, v)) bits[static_cast<std::size_t>(v) * width + u] = 1;
    }
  }
  return bits;
}

SimilarityTransform kabsch_umeyama(std::span<const Vec3> source,
                                   std::span<const Vec3> target) {
  if (source.size() != target.size()) {
    throw InvalidArgument("source and target sizes differ");
  }
  if (source.size() < 3) {
    throw DegenerateConfiguration("need at least 3 point pairs");
  }
  const double n = static_cast<double>(source.size());
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    mu_s += source[i];
    mu_t += target[i];
  }
  mu_s /= n;
  mu_t /= n;

  Mat3 scatter = Mat3::Zero();
  Mat3 cross = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 s = source[i] - mu_s;
    const Vec3 t = target[i] - mu_t;
    scatter += s * s.transpose();
    cross += t * s.transpose();
    var_s += s.squaredNorm();
  }
  cross /= n;
  var_s /= n;

  Eigen::JacobiSVD<Mat3> scatter_svd(scatter);
  const Vec3 sv = scatter_svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw DegenerateConfiguration("source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;

  SimilarityTransform out;
  out.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  out.scale = svd.singularValues().dot(d) / var_s;
  out.translation = mu_t - out.scale * out.rotation * mu_s;
  return out;
}

}  // namespace wingkit
