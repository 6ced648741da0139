#pragma once

#include <cstdint>
#include <optional>

#include "wingkit/geom.hpp"
#include "wingkit/image.hpp"

namespace wingkit {

struct LeaderAppearance {
  // Half-wingspan, half-length, half-thickness in metres.
  Vec3 semi_axes{0.35, 0.26, 0.08};
  double scale_factor = 1.0;
  double brightness_offset = 0.0;     // gray levels
  double salt_pepper_fraction = 0.0;  // of leader pixels
};

struct RenderConfig {
  CameraIntrinsics intrinsics;
  std::uint64_t background_seed = 0;
  Rgb leader_base_color{200, 40, 40};
};

// Leader ellipsoid in the world: body x carries the half-length, body y the
// half-wingspan.
Ellipsoid leader_ellipsoid(const Pose& leader, const LeaderAppearance& appearance);

Mask ground_truth_mask(const RenderConfig& config, const Pose& camera, const Pose& leader,
                       const LeaderAppearance& appearance);

struct RenderedScene {
  Frame frame;
  Mask mask;
};

RenderedScene render_scene(const RenderConfig& config, const Pose& camera,
                           const std::optional<Pose>& leader,
                           const LeaderAppearance& appearance);

// Kernels behind render_scene: the background fill is per-pixel independent.
// The serial version is kept as the reference for the OpenMP one.
Frame render_background_serial(const RenderConfig& config, const Pose& camera);
Frame render_background_parallel(const RenderConfig& config, const Pose& camera);

// Color of the leader for one pixel, salt-pepper included.
Rgb leader_pixel_color(const RenderConfig& config, const LeaderAppearance& appearance,
                       int u, int v);
Rgb shifted_base_color(const RenderConfig& config, const LeaderAppearance& appearance);

struct RandomizationSpec {
  double scale_min = 0.5, scale_max = 2.0;
  double brightness_min = -40.0, brightness_max = 40.0;
  double salt_pepper_min = 0.0, salt_pepper_max = 0.3;

  bool valid() const;
};

// Throws InvalidArgument for inverted or out-of-domain ranges.
LeaderAppearance randomize_appearance(const LeaderAppearance& base,
                                      const RandomizationSpec& spec, std::uint64_t seed);

struct MaskStats {
  Vec2 centroid = Vec2::Zero();  // pixel-index coordinates
  double area = 0.0;             // pixels
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;
};

std::optional<MaskStats> mask_stats(const Mask& mask);

}  // namespace wingkit
