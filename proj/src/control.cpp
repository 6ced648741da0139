#include "wingkit/control.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "wingkit/error.hpp"

namespace wingkit {

std::map<std::string, double*> gain_fields(GuidanceGains& g) {
  return {
      {"k_heading", &g.k_heading},
      {"k_alt", &g.k_alt},
      {"k_speed", &g.k_speed},
      {"target_speed", &g.target_speed},
      {"max_pitch_cmd", &g.max_pitch_cmd},
      {"capture_radius", &g.capture_radius},
      {"trim_throttle", &g.trim_throttle},
      {"standoff", &g.standoff},
      {"k_closure", &g.k_closure},
      {"follow_lookahead", &g.follow_lookahead},
      {"glide_slope", &g.glide_slope},
      {"flare_altitude", &g.flare_altitude},
      {"flare_pitch_up", &g.flare_pitch_up},
      {"runway_lookahead", &g.runway_lookahead},
      {"k_vision_aileron", &g.k_vision_aileron},
      {"k_vision_heading", &g.k_vision_heading},
      {"k_vision_pitch", &g.k_vision_pitch},
      {"k_vision_throttle", &g.k_vision_throttle},
      {"reference_area", &g.reference_area},
  };
}

GuidanceGains read_gains(std::istream& in) {
  GuidanceGains g;
  auto fields = gain_fields(g);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw InvalidArgument("expected key = value: " + line);
      }
      continue;
    }
    std::istringstream key_in(line.substr(0, eq));
    std::string key;
    key_in >> key;
    const auto it = fields.find(key);
    if (it == fields.end()) throw InvalidArgument("unknown gain key: " + key);
    std::istringstream value_in(line.substr(eq + 1));
    double v;
    if (!(value_in >> v)) throw InvalidArgument("bad value for " + key);
    *it->second = v;
  }
  return g;
}

void write_gains(std::ostream& out, const GuidanceGains& g) {
  GuidanceGains copy = g;
  const auto old = out.precision(17);
  for (const auto& [key, ptr] : gain_fields(copy)) out << key << " = " << *ptr << '\n';
  out.precision(old);
}

Vec3 RunwaySpec::direction() const {
  Vec3 d = centerline_end - centerline_start;
  d.z() = 0.0;
  return d.normalized();
}

double RunwaySpec::heading() const {
  const Vec3 d = direction();
  return std::atan2(d.y(), d.x());
}

double RunwaySpec::along(const Vec3& p) const {
  return direction().dot(p - centerline_start);
}

double RunwaySpec::lateral(const Vec3& p) const {
  const Vec3 d = direction();
  const Vec3 left(-d.y(), d.x(), 0.0);
  return left.dot(p - centerline_start);
}

bool RunwaySpec::over_pad(const Vec3& p) const { return within_pad_bounds(p); }

bool RunwaySpec::within_pad_bounds(const Vec3& p) const {
  const double a = along(p);
  return a >= pad_start && a <= pad_start + pad_length &&
         std::abs(lateral(p)) <= 0.5 * pad_width;
}

double RunwaySpec::ground_height(const Vec3& p) const {
  return over_pad(p) ? pad_height : 0.0;
}

void ControlHistory::push(const Control& u) {
  buf_[head_] = u;
  head_ = (head_ + 1) % kLength;
}

const Control& ControlHistory::at(std::size_t i) const {
  return buf_[(head_ + i) % kLength];
}

std::array<Control, ControlHistory::kLength> ControlHistory::ordered() const {
  std::array<Control, kLength> out;
  for (std::size_t i = 0; i < kLength; ++i) out[i] = at(i);
  return out;
}

ControlHistory history_push(ControlHistory history, const Control& u) {
  history.push(u);
  return history;
}

namespace {

double throttle_for(const State& s, double target_speed, const GuidanceGains& g) {
  return std::clamp(g.trim_throttle + g.k_speed * (target_speed - s.speed()), 0.0, 1.0);
}

double aileron_for(const State& s, double heading_cmd, const GuidanceGains& g) {
  return std::clamp(g.k_heading * wrap_angle(heading_cmd - s.yaw) - s.roll, -1.0, 1.0);
}

}  // namespace

Control expert_waypoint_control(const State& s, const Vec3& wp, const GuidanceGains& g) {
  const Vec3 d = wp - s.position;
  Control u;
  u.yaw_cmd = wrap_angle(std::atan2(d.y(), d.x()));
  u.pitch_cmd = std::clamp(g.k_alt * d.z(), -g.max_pitch_cmd, g.max_pitch_cmd);
  u.throttle = throttle_for(s, g.target_speed, g);
  u.aileron = aileron_for(s, u.yaw_cmd, g);
  return clamp_control(u);
}

Control expert_follower_control(const State& follower, const State& leader,
                                const GuidanceGains& g) {
  const Vec3 heading(std::cos(leader.yaw), std::sin(leader.yaw), 0.0);
  const Vec3 aim = leader.position + (g.follow_lookahead - g.standoff) * heading;
  const double range = (leader.position - follower.position).norm();
  GuidanceGains paced = g;
  paced.target_speed = g.target_speed + g.k_closure * (range - g.standoff);
  return expert_waypoint_control(follower, aim, paced);
}

std::string to_string(LandingPhase p) {
  switch (p) {
    case LandingPhase::Approach: return "approach";
    case LandingPhase::Flare: return "flare";
    case LandingPhase::Rollout: return "rollout";
  }
  return "unknown";
}

LandingPhase landing_phase(const State& s, const RunwaySpec& runway, const GuidanceGains& g) {
  const double agl = s.position.z() - runway.ground_height(s.position);
  if (agl <= runway.gear_height) return LandingPhase::Rollout;
  if (agl < g.flare_altitude) return LandingPhase::Flare;
  return LandingPhase::Approach;
}

Control expert_landing_control(const State& s, const RunwaySpec& runway,
                               const GuidanceGains& g, std::optional<LandingPhase> phase) {
  const LandingPhase p = phase.value_or(landing_phase(s, runway, g));
  const double runway_heading = runway.heading();
  Control u;
  if (p == LandingPhase::Rollout) {
    u.throttle = 0.0;
    u.aileron = std::clamp(-s.roll, -1.0, 1.0);
    u.pitch_cmd = 0.0;
    u.yaw_cmd = runway_heading;
    return clamp_control(u);
  }
  // Lateral: chase a point on the centreline a fixed distance ahead.
  u.yaw_cmd = wrap_angle(runway_heading +
                         std::atan2(-runway.lateral(s.position), g.runway_lookahead));
  u.aileron = aileron_for(s, u.yaw_cmd, g);
  if (p == LandingPhase::Flare) {
    u.pitch_cmd = -g.glide_slope + g.flare_pitch_up;
    u.throttle = 0.0;
    return clamp_control(u);
  }
  const double to_go = std::max(0.0, runway.along(runway.touchdown_target) - runway.along(s.position));
  const double z_ref = runway.touchdown_target.z() + runway.gear_height + to_go * std::tan(g.glide_slope);
  u.pitch_cmd = std::clamp(-g.glide_slope + g.k_alt * (z_ref - s.position.z()),
                           -g.max_pitch_cmd, g.max_pitch_cmd);
  u.throttle = throttle_for(s, g.target_speed, g);
  return clamp_control(u);
}

Control LandingController::operator()(const State& state) {
  const LandingPhase now = landing_phase(state, runway_, gains_);
  if (static_cast<int>(now) > static_cast<int>(phase_)) phase_ = now;
  return expert_landing_control(state, runway_, gains_, phase_);
}

double nominal_leader_area(const CameraIntrinsics& intr, double standoff,
                           const LeaderAppearance& appearance) {
  const Pose camera{};
  const Pose leader{Vec3(standoff, 0.0, 0.0), 0.0, 0.0, 0.0};
  const auto e = project_ellipsoid(intr, camera, leader_ellipsoid(leader, appearance));
  return e ? e->area() : 0.0;
}

Control vision_follower_control(const std::optional<MaskStats>& stats,
                                const ControlHistory& history, const CameraIntrinsics& intr,
                                const GuidanceGains& g, double heading) {
  if (!stats) {
    Control held = history.newest();
    held.throttle = g.trim_throttle;
    return clamp_control(held);
  }
  const double ex = (stats->centroid.x() - intr.cx) / intr.fx;
  const double ey = (stats->centroid.y() - intr.cy) / intr.fy;
  const double ref_area =
      g.reference_area > 0.0 ? g.reference_area : nominal_leader_area(intr, g.standoff);
  const double range_est = g.standoff * std::sqrt(ref_area / std::max(stats->area, 1.0));

  Control u;
  u.aileron = -g.k_vision_aileron * ex;
  u.yaw_cmd = wrap_angle(heading - g.k_vision_heading * ex);
  u.pitch_cmd = std::clamp(-g.k_vision_pitch * ey, -g.max_pitch_cmd, g.max_pitch_cmd);
  u.throttle = g.trim_throttle + g.k_vision_throttle * (range_est - g.standoff);
  return clamp_control(u);
}

Control inject_expert_noise(const Control& u, const ControlSigma& sigma, Engine& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Control out = u;
  out.throttle += sigma[0] * n(rng);
  out.aileron += sigma[1] * n(rng);
  out.pitch_cmd += sigma[2] * n(rng);
  out.yaw_cmd += sigma[3] * n(rng);
  return clamp_control(out);
}

Control inject_expert_noise(const Control& u, const ControlSigma& sigma, std::uint64_t seed) {
  Engine rng = make_engine(seed, "control.expert_noise");
  return inject_expert_noise(u, sigma, rng);
}

}  // namespace wingkit
