#include "wingkit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "wingkit/error.hpp"

namespace wingkit {

std::array<double, 9> State::as_array() const {
  return {position.x(), position.y(), position.z(), pitch, yaw, roll,
          velocity.x(), velocity.y(), velocity.z()};
}

State State::from_array(std::span<const double, 9> x) {
  State s;
  s.position = {x[0], x[1], x[2]};
  s.pitch = x[3];
  s.yaw = x[4];
  s.roll = x[5];
  s.velocity = {x[6], x[7], x[8]};
  return s;
}

Control clamp_control(const Control& u) {
  return {std::clamp(u.throttle, 0.0, 1.0), std::clamp(u.aileron, -1.0, 1.0),
          std::clamp(u.pitch_cmd, -kMaxPitchCmd, kMaxPitchCmd), wrap_angle(u.yaw_cmd)};
}

const std::array<const char*, DynParams::kCount>& DynParams::names() {
  static const std::array<const char*, kCount> n = {
      "k_roll_aileron", "k_roll_damp", "k_pitch", "k_yaw", "k_thrust", "k_drag"};
  return n;
}

std::array<double, DynParams::kCount> DynParams::as_array() const {
  return {k_roll_aileron, k_roll_damp, k_pitch, k_yaw, k_thrust, k_drag};
}

DynParams DynParams::from_array(std::span<const double, kCount> k) {
  return {k[0], k[1], k[2], k[3], k[4], k[5]};
}

bool DynParams::positive() const {
  const auto k = as_array();
  return std::all_of(k.begin(), k.end(), [](double v) { return v > 0.0; });
}

State step(const DynParams& k, const State& x, const Control& u, double dt,
           double g) {
  const double speed = std::max(x.speed(), kMinModelSpeed);
  State n;
  n.roll = x.roll + dt * (k.k_roll_aileron * u.aileron - k.k_roll_damp * x.roll);
  n.pitch = std::clamp(x.pitch + dt * k.k_pitch * (u.pitch_cmd - x.pitch),
                       -kPitchLimit, kPitchLimit);
  n.yaw = wrap_angle(x.yaw + dt * (k.k_yaw * wrap_angle(u.yaw_cmd - x.yaw) +
                                   (g / speed) * std::tan(n.roll)));
  const double new_speed = std::max(
      0.0, speed + dt * (k.k_thrust * u.throttle - k.k_drag * speed - g * std::sin(n.pitch)));
  const double cp = std::cos(n.pitch);
  n.velocity = new_speed * Vec3(cp * std::cos(n.yaw), cp * std::sin(n.yaw), std::sin(n.pitch));
  n.position = x.position + dt * n.velocity;
  return n;
}

Trajectory rollout(const DynParams& params, const State& initial,
                   std::span<const Control> controls, double dt) {
  Trajectory t;
  t.dt = dt;
  t.states.reserve(controls.size() + 1);
  t.states.push_back(initial);
  for (const Control& u : controls) {
    t.states.push_back(step(params, t.states.back(), u, dt));
  }
  t.controls.assign(controls.begin(), controls.end());
  return t;
}

double trim_throttle(const DynParams& params, double speed, double pitch,
                     double gravity) {
  return (params.k_drag * speed + gravity * std::sin(pitch)) / params.k_thrust;
}

State level_state(const Vec3& position, double heading, double speed) {
  State s;
  s.position = position;
  s.yaw = wrap_angle(heading);
  s.velocity = speed * Vec3(std::cos(s.yaw), std::sin(s.yaw), 0.0);
  return s;
}

double min_airspeed(const AirframeConfig& c) {
  return std::sqrt(2.0 * c.mass * c.gravity / (c.air_density * c.wing_area * c.lift_coeff));
}

double min_turn_radius(const AirframeConfig& c, double airspeed, double bank) {
  return airspeed * airspeed / (c.gravity * std::tan(bank));
}

bool ArenaBox::contains(const Vec3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

std::string to_string(Violation v) {
  switch (v) {
    case Violation::StallRisk: return "StallRisk";
    case Violation::ExcessiveBank: return "ExcessiveBank";
    case Violation::OutOfArena: return "OutOfArena";
  }
  return "Unknown";
}

std::vector<Violation> check_envelope(const AirframeConfig& config,
                                      const State& state, const ArenaBox& arena) {
  std::vector<Violation> out;
  if (state.speed() < min_airspeed(config)) out.push_back(Violation::StallRisk);
  if (std::abs(state.roll) > config.max_bank) out.push_back(Violation::ExcessiveBank);
  if (!arena.contains(state.position)) out.push_back(Violation::OutOfArena);
  return out;
}

namespace {

constexpr const char* kTrajectoryHeader = "t,px,py,pz,pitch,yaw,roll,vx,vy,vz,uT,da,thc,gac";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          std::span<const std::string> comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kTrajectoryHeader << '\n';
  const auto old_precision = out.precision(9);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    out << static_cast<double>(i) * traj.dt;
    for (double v : traj.states[i].as_array()) out << ',' << v;
    if (i < traj.controls.size()) {
      const Control& u = traj.controls[i];
      out << ',' << u.throttle << ',' << u.aileron << ',' << u.pitch_cmd << ',' << u.yaw_cmd;
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  out.precision(old_precision);
}

Trajectory read_trajectory_csv(std::istream& in) {
  Trajectory traj;
  std::string line;
  bool header_seen = false;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kTrajectoryHeader) throw IoFailure("unexpected trajectory header: " + line);
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 14) throw IoFailure("trajectory row needs 14 fields: " + line);
    std::array<double, 9> x{};
    try {
      times.push_back(std::stod(f[0]));
      for (int i = 0; i < 9; ++i) x[i] = std::stod(f[1 + i]);
    } catch (const std::exception&) {
      throw IoFailure("malformed number in row: " + line);
    }
    traj.states.push_back(State::from_array(x));
    if (!f[10].empty()) {
      try {
        traj.controls.push_back({std::stod(f[10]), std::stod(f[11]), std::stod(f[12]),
                                 std::stod(f[13])});
      } catch (const std::exception&) {
        throw IoFailure("malformed control in row: " + line);
      }
    }
  }
  if (!header_seen) throw IoFailure("missing trajectory header");
  if (traj.states.empty()) throw IoFailure("trajectory has no rows");
  if (traj.controls.size() + 1 != traj.states.size()) {
    throw IoFailure("expected one control per transition");
  }
  if (times.size() >= 2) traj.dt = times[1] - times[0];
  return traj;
}

}  // namespace wingkit
