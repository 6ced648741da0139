#include "wingkit/percept.hpp"

#include <algorithm>
#include <cmath>

#include "wingkit/error.hpp"
#include "wingkit/rng.hpp"

namespace wingkit {

namespace {

constexpr std::uint64_t kSaltPepperSalt = 0x5a17'9e99'e2ULL;
constexpr std::uint64_t kTextureSalt = 0x7e87'0e5ULL;
constexpr int kAzimuthCells = 42;      // ~8.6 deg lattice
constexpr double kElevationCell = 2.0 * kPi / kAzimuthCells;
constexpr double kTextureAmplitude = 18.0;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double lattice(std::uint64_t seed, long i, long j) {
  return 2.0 * hash_unit(seed ^ kTextureSalt, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(j)) - 1.0;
}

// Bilinear value noise on an (azimuth, elevation) lattice.
double value_noise(std::uint64_t seed, double azimuth, double elevation) {
  const double fa = (azimuth + kPi) / (2.0 * kPi) * kAzimuthCells;
  const double fe = (elevation + kPi / 2) / kElevationCell;
  const long ia = static_cast<long>(std::floor(fa));
  const long ie = static_cast<long>(std::floor(fe));
  const double ta = fa - ia;
  const double te = fe - ie;
  auto wrap_a = [](long i) { return ((i % kAzimuthCells) + kAzimuthCells) % kAzimuthCells; };
  const double n00 = lattice(seed, wrap_a(ia), ie);
  const double n10 = lattice(seed, wrap_a(ia + 1), ie);
  const double n01 = lattice(seed, wrap_a(ia), ie + 1);
  const double n11 = lattice(seed, wrap_a(ia + 1), ie + 1);
  const double sa = ta * ta * (3.0 - 2.0 * ta);
  const double se = te * te * (3.0 - 2.0 * te);
  return (n00 * (1 - sa) + n10 * sa) * (1 - se) + (n01 * (1 - sa) + n11 * sa) * se;
}

Rgb background_pixel(const RenderConfig& config, const Mat3& cam_r, int u, int v) {
  const auto& in = config.intrinsics;
  const Vec3 body(1.0, -(u - in.cx) / in.fx, -(v - in.cy) / in.fy);
  const Vec3 d = (cam_r * body).normalized();
  const double elevation = std::asin(std::clamp(d.z(), -1.0, 1.0));
  const double azimuth = std::atan2(d.y(), d.x());
  double r, g, b;
  if (elevation >= 0.0) {
    // Hall ceiling: pale near the horizon, darker overhead.
    const double t = elevation / (kPi / 2);
    r = 185 - 70 * t;
    g = 190 - 50 * t;
    b = 200 - 10 * t;
  } else {
    // Floor.
    const double t = -elevation / (kPi / 2);
    r = 110 - 40 * t;
    g = 100 - 35 * t;
    b = 90 - 30 * t;
  }
  const double n = kTextureAmplitude * value_noise(config.background_seed, azimuth, elevation);
  return {to_byte(r + n), to_byte(g + n), to_byte(b + n)};
}

}  // namespace

Ellipsoid leader_ellipsoid(const Pose& leader, const LeaderAppearance& a) {
  Ellipsoid e;
  e.center = leader.position;
  e.semi_axes = a.scale_factor * Vec3(a.semi_axes.y(), a.semi_axes.x(), a.semi_axes.z());
  e.orientation = leader;
  return e;
}

Mask ground_truth_mask(const RenderConfig& config, const Pose& camera, const Pose& leader,
                       const LeaderAppearance& appearance) {
  const auto& in = config.intrinsics;
  Mask m(in.width, in.height);
  const auto e = project_ellipsoid(in, camera, leader_ellipsoid(leader, appearance));
  if (e) m.bits = rasterize_ellipse(*e, in.width, in.height);
  return m;
}

Frame render_background_serial(const RenderConfig& config, const Pose& camera) {
  const auto& in = config.intrinsics;
  Frame f(in.width, in.height);
  const Mat3 r = pose_rotation(camera);
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) f.set(u, v, background_pixel(config, r, u, v));
  }
  return f;
}

Frame render_background_parallel(const RenderConfig& config, const Pose& camera) {
  const auto& in = config.intrinsics;
  Frame f(in.width, in.height);
  const Mat3 r = pose_rotation(camera);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) f.set(u, v, background_pixel(config, r, u, v));
  }
  return f;
}

Rgb shifted_base_color(const RenderConfig& config, const LeaderAppearance& a) {
  const Rgb& c = config.leader_base_color;
  return {to_byte(c.r + a.brightness_offset), to_byte(c.g + a.brightness_offset),
          to_byte(c.b + a.brightness_offset)};
}

Rgb leader_pixel_color(const RenderConfig& config, const LeaderAppearance& a, int u, int v) {
  if (a.salt_pepper_fraction > 0.0) {
    const std::uint64_t key = config.background_seed ^ kSaltPepperSalt;
    if (hash_unit(key, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(v)) <
        a.salt_pepper_fraction) {
      const bool white =
          hash_unit(key + 1, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(v)) < 0.5;
      return white ? Rgb{255, 255, 255} : Rgb{0, 0, 0};
    }
  }
  return shifted_base_color(config, a);
}

RenderedScene render_scene(const RenderConfig& config, const Pose& camera,
                           const std::optional<Pose>& leader,
                           const LeaderAppearance& appearance) {
  const auto& in = config.intrinsics;
  RenderedScene out{render_background_parallel(config, camera), Mask(in.width, in.height)};
  if (!leader) return out;
  out.mask = ground_truth_mask(config, camera, *leader, appearance);
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) {
      if (out.mask.at(u, v)) out.frame.set(u, v, leader_pixel_color(config, appearance, u, v));
    }
  }
  return out;
}

bool RandomizationSpec::valid() const {
  return scale_min > 0.0 && scale_min <= scale_max && brightness_min <= brightness_max &&
         salt_pepper_min >= 0.0 && salt_pepper_min <= salt_pepper_max && salt_pepper_max <= 1.0;
}

LeaderAppearance randomize_appearance(const LeaderAppearance& base,
                                      const RandomizationSpec& spec, std::uint64_t seed) {
  if (!spec.valid()) throw InvalidArgument("invalid randomization ranges");
  Engine rng = make_engine(seed, "percept.appearance");
  auto draw = [&rng](double lo, double hi) {
    const double t = std::generate_canonical<double, 53>(rng);
    return lo == hi ? lo : lo + (hi - lo) * t;
  };
  LeaderAppearance out = base;
  out.scale_factor = draw(spec.scale_min, spec.scale_max);
  out.brightness_offset = draw(spec.brightness_min, spec.brightness_max);
  out.salt_pepper_fraction = draw(spec.salt_pepper_min, spec.salt_pepper_max);
  return out;
}

std::optional<MaskStats> mask_stats(const Mask& mask) {
  MaskStats s;
  s.u_min = mask.width;
  s.v_min = mask.height;
  s.u_max = -1;
  s.v_max = -1;
  double su = 0.0, sv = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v)) continue;
      ++n;
      su += u;
      sv += v;
      s.u_min = std::min(s.u_min, u);
      s.u_max = std::max(s.u_max, u);
      s.v_min = std::min(s.v_min, v);
      s.v_max = std::max(s.v_max, v);
    }
  }
  if (n == 0) return std::nullopt;
  s.area = static_cast<double>(n);
  s.centroid = {su / n, sv / n};
  return s;
}

}  // namespace wingkit
