#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "wingkit/dynamics.hpp"
#include "wingkit/percept.hpp"
#include "wingkit/rng.hpp"

namespace wingkit {

struct GuidanceGains {
  double k_heading = 1.2;       // rad roll per rad heading error
  double k_alt = 0.15;          // rad pitch per m altitude error
  double k_speed = 0.12;        // throttle per m/s speed error
  double target_speed = 8.0;    // m/s
  double max_pitch_cmd = 0.35;  // rad
  double capture_radius = 2.0;  // m
  double trim_throttle = 0.8;   // holds target_speed in level flight under K_ref

  // Leader following.
  double standoff = 3.0;          // m
  double k_closure = 0.4;         // (m/s) per m of range error
  double follow_lookahead = 4.0;  // m ahead of the standoff point

  // Landing.
  double glide_slope = 4.3 * kPi / 180.0;
  double flare_altitude = 0.3;         // m above ground
  double flare_pitch_up = 2.0 * kPi / 180.0;  // rad above the slope-holding pitch
  double runway_lookahead = 10.0;      // m

  // Vision stand-in.
  double k_vision_aileron = 1.5;    // aileron per unit normalized offset
  double k_vision_heading = 1.0;    // rad per unit normalized offset
  double k_vision_pitch = 1.0;      // rad per unit normalized offset
  double k_vision_throttle = 0.03;  // throttle per m of inferred range error
  double reference_area = 0.0;      // px^2 at standoff; 0 = derive from intrinsics
};

// Flat "key = value" text; unknown keys throw InvalidArgument.
GuidanceGains read_gains(std::istream& in);
void write_gains(std::ostream& out, const GuidanceGains& g);
std::map<std::string, double*> gain_fields(GuidanceGains& g);

struct RunwaySpec {
  Vec3 centerline_start{-20.0, -3.0, 0.0};
  Vec3 centerline_end{20.0, -3.0, 0.0};
  double pad_start = 22.0;  // m along the centerline from its start
  double pad_length = 13.0;
  double pad_width = 2.0;
  double pad_height = 0.1;
  Vec3 touchdown_target{6.0, -3.0, 0.1};
  double gear_height = 0.05;

  Vec3 direction() const;
  double heading() const;
  double along(const Vec3& p) const;
  double lateral(const Vec3& p) const;  // signed, positive to the left
  bool over_pad(const Vec3& p) const;
  double ground_height(const Vec3& p) const;
  bool within_pad_bounds(const Vec3& p) const;
};

// Fixed-length FIFO of the 30 most recent controls, zero-padded.
class ControlHistory {
 public:
  static constexpr std::size_t kLength = 30;

  ControlHistory() = default;
  void push(const Control& u);
  // i = 0 is the oldest entry, kLength - 1 the newest.
  const Control& at(std::size_t i) const;
  const Control& newest() const { return at(kLength - 1); }
  std::array<Control, kLength> ordered() const;

 private:
  std::array<Control, kLength> buf_{};
  std::size_t head_ = 0;  // slot of the oldest entry
};

ControlHistory history_push(ControlHistory history, const Control& u);

Control expert_waypoint_control(const State& state, const Vec3& waypoint,
                                const GuidanceGains& gains);

Control expert_follower_control(const State& follower, const State& leader,
                                const GuidanceGains& gains);

enum class LandingPhase { Approach = 0, Flare = 1, Rollout = 2 };

std::string to_string(LandingPhase p);

// Phase implied by height above ground alone; non-increasing in altitude.
LandingPhase landing_phase(const State& state, const RunwaySpec& runway,
                           const GuidanceGains& gains);

Control expert_landing_control(const State& state, const RunwaySpec& runway,
                               const GuidanceGains& gains,
                               std::optional<LandingPhase> phase = std::nullopt);

// Latches the landing phase so it only ever advances within a trial.
class LandingController {
 public:
  LandingController(RunwaySpec runway, GuidanceGains gains)
      : runway_(std::move(runway)), gains_(gains) {}
  Control operator()(const State& state);
  LandingPhase phase() const { return phase_; }

 private:
  RunwaySpec runway_;
  GuidanceGains gains_;
  LandingPhase phase_ = LandingPhase::Approach;
};

// Apparent leader area (px^2) dead ahead at the follow standoff.
double nominal_leader_area(const CameraIntrinsics& intr, double standoff,
                           const LeaderAppearance& appearance = {});

// Image-only follower: steers the mask centroid to the image centre and
// paces on apparent size. `heading` is the aircraft's own heading, which the
// onboard flight controller knows; the image enters only through `stats`.
Control vision_follower_control(const std::optional<MaskStats>& stats,
                                const ControlHistory& history,
                                const CameraIntrinsics& intr, const GuidanceGains& gains,
                                double heading);

using ControlSigma = std::array<double, 4>;

Control inject_expert_noise(const Control& u, const ControlSigma& sigma, Engine& rng);
Control inject_expert_noise(const Control& u, const ControlSigma& sigma, std::uint64_t seed);

}  // namespace wingkit
