#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wingkit/geom.hpp"

namespace wingkit {

inline constexpr double kDefaultDt = 0.05;  // 20 Hz loop
inline constexpr double kMinModelSpeed = 0.5;
inline constexpr double kPitchLimit = kPi / 2 - 1e-3;

struct State {
  Vec3 position = Vec3::Zero();
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
  Vec3 velocity = Vec3::Zero();

  double speed() const { return velocity.norm(); }
  Pose pose() const { return {position, pitch, yaw, roll}; }
  std::array<double, 9> as_array() const;
  static State from_array(std::span<const double, 9> x);

  bool operator==(const State&) const = default;
};

// Throttle in [0, 1], aileron in [-1, 1], pitch command in [-0.5, 0.5] rad,
// absolute heading command in [-pi, pi).
struct Control {
  double throttle = 0.0;
  double aileron = 0.0;
  double pitch_cmd = 0.0;
  double yaw_cmd = 0.0;

  bool operator==(const Control&) const = default;
};

inline constexpr double kMaxPitchCmd = 0.5;

// Saturates every channel into its valid range and wraps the heading.
Control clamp_control(const Control& u);

struct DynParams {
  double k_roll_aileron = 3.0;
  double k_roll_damp = 2.0;
  double k_pitch = 3.0;
  double k_yaw = 1.5;
  double k_thrust = 12.0;
  double k_drag = 1.2;

  static constexpr std::size_t kCount = 6;
  static const std::array<const char*, kCount>& names();
  std::array<double, kCount> as_array() const;
  static DynParams from_array(std::span<const double, kCount> k);
  bool positive() const;

  // Reference set used across all desk-scale experiments.
  static DynParams reference() { return {}; }
};

struct AirframeConfig {
  double mass = 0.15;          // kg
  double wing_area = 0.076;    // m^2
  double air_density = 1.3;    // kg/m^3
  double lift_coeff = 0.6;
  double max_bank = kPi / 6;   // rad
  double gravity = 9.8;        // m/s^2
};

struct Trajectory {
  double dt = kDefaultDt;
  std::vector<State> states;
  std::vector<Control> controls;  // states.size() - 1 entries
};

// One forward-Euler step of the reduced-order model.
State step(const DynParams& params, const State& state, const Control& control,
           double dt = kDefaultDt, double gravity = 9.8);

Trajectory rollout(const DynParams& params, const State& initial,
                   std::span<const Control> controls, double dt = kDefaultDt);

// Throttle holding `speed` constant at pitch `pitch`, unclamped.
double trim_throttle(const DynParams& params, double speed, double pitch = 0.0,
                     double gravity = 9.8);

// Level flight at `speed` along `heading`.
State level_state(const Vec3& position, double heading, double speed);

double min_airspeed(const AirframeConfig& config);
double min_turn_radius(const AirframeConfig& config, double airspeed, double bank);

struct ArenaBox {
  Vec3 min{-20.0, -10.0, 0.0};
  Vec3 max{20.0, 10.0, 5.0};

  bool contains(const Vec3& p) const;
};

enum class Violation { StallRisk, ExcessiveBank, OutOfArena };

std::string to_string(Violation v);

std::vector<Violation> check_envelope(const AirframeConfig& config,
                                      const State& state,
                                      const ArenaBox& arena = {});

// CSV trajectory file: optional leading "# " comment lines, then the header
// row and one row per state. The final row leaves the control fields empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          std::span<const std::string> comments = {});
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace wingkit
