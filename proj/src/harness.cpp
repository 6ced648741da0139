#include "wingkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <random>

#include <omp.h>

#include <nlohmann/json.hpp>

#include "wingkit/error.hpp"
#include "wingkit/rng.hpp"

namespace wingkit {

namespace {

constexpr double kDeg = kPi / 180.0;
constexpr double kArcRadius = 12.0;        // S-turn arcs, m
constexpr double kSharpArcRadius = 11.5;   // sharp climb arc, m
constexpr double kArcStep = 15.0 * kDeg;   // angular spacing of arc waypoints
constexpr double kStraightSpacing = 3.0;   // m

// Waypoints in a horizontal frame whose x-axis is the start heading:
// (along, left, dz).
class PathBuilder {
 public:
  void straight(double length, double dz) {
    const int n = std::max(1, static_cast<int>(std::ceil(length / kStraightSpacing)));
    const Vec2 dir(std::cos(psi_), std::sin(psi_));
    const Vec2 p0 = p_;
    const double z0 = z_;
    for (int k = 1; k <= n; ++k) {
      const double f = static_cast<double>(k) / n;
      p_ = p0 + f * length * dir;
      z_ = z0 + f * dz;
      pts_.emplace_back(p_.x(), p_.y(), z_);
    }
  }

  // Positive angle turns left.
  void arc(double radius, double angle, double dz) {
    const double sign = angle >= 0.0 ? 1.0 : -1.0;
    const Vec2 normal(-std::sin(psi_), std::cos(psi_));
    const Vec2 centre = p_ + sign * radius * normal;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(angle) / kArcStep)));
    const double psi0 = psi_;
    const double z0 = z_;
    for (int k = 1; k <= n; ++k) {
      const double f = static_cast<double>(k) / n;
      psi_ = psi0 + f * angle;
      p_ = centre - sign * radius * Vec2(-std::sin(psi_), std::cos(psi_));
      z_ = z0 + f * dz;
      pts_.emplace_back(p_.x(), p_.y(), z_);
    }
  }

  const std::vector<Vec3>& points() const { return pts_; }

 private:
  Vec2 p_ = Vec2::Zero();
  double psi_ = 0.0;
  double z_ = 0.0;
  std::vector<Vec3> pts_;
};

std::vector<Vec3> local_left_s_descent() {
  PathBuilder b;
  b.straight(1.0, 0.0);
  b.arc(kArcRadius, 40.0 * kDeg, -0.5);
  b.arc(kArcRadius, -40.0 * kDeg, -0.5);
  b.straight(3.0, 0.0);
  return b.points();
}

std::vector<Vec3> local_path(Maneuver m) {
  switch (m) {
    case Maneuver::LeftSDescent:
      return local_left_s_descent();
    case Maneuver::RightSAscent: {
      auto pts = local_left_s_descent();
      for (auto& p : pts) {
        p.y() = -p.y();
        p.z() = -p.z();
      }
      return pts;
    }
    case Maneuver::RightSharpClimb: {
      PathBuilder b;
      b.straight(1.0, 0.0);
      b.arc(kSharpArcRadius, -90.0 * kDeg, 1.5);
      b.straight(3.0, 0.0);
      return b.points();
    }
    case Maneuver::Straight: {
      PathBuilder b;
      b.straight(24.0, 0.0);
      return b.points();
    }
  }
  return {};
}

std::chrono::steady_clock::time_point now() { return std::chrono::steady_clock::now(); }

void check_envelope_into(const AirframeConfig& airframe, const ArenaBox& arena,
                         const State& s, std::size_t& count) {
  if (!check_envelope(airframe, s, arena).empty()) ++count;
}

nlohmann::json pose_json(const State& s) {
  return {s.position.x(), s.position.y(), s.position.z(), s.pitch, s.yaw, s.roll};
}

nlohmann::json control_json(const Control& u) {
  return {u.throttle, u.aileron, u.pitch_cmd, u.yaw_cmd};
}

}  // namespace

std::string to_string(Maneuver m) {
  switch (m) {
    case Maneuver::LeftSDescent: return "left-s-descent";
    case Maneuver::RightSAscent: return "right-s-ascent";
    case Maneuver::RightSharpClimb: return "right-sharp-climb";
    case Maneuver::Straight: return "straight";
  }
  return "unknown";
}

std::optional<Maneuver> parse_maneuver(const std::string& name) {
  for (Maneuver m : {Maneuver::LeftSDescent, Maneuver::RightSAscent,
                     Maneuver::RightSharpClimb, Maneuver::Straight}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

int Scenario::steps() const { return static_cast<int>(std::lround(duration / dt)); }

State maneuver_start(Maneuver m, double speed) {
  switch (m) {
    case Maneuver::LeftSDescent: return level_state({-12.0, -4.0, 3.0}, 0.0, speed);
    case Maneuver::RightSAscent: return level_state({-12.0, 4.0, 2.0}, 0.0, speed);
    case Maneuver::RightSharpClimb: return level_state({-12.0, 7.0, 2.0}, 0.0, speed);
    case Maneuver::Straight: return level_state({-12.0, 0.0, 2.5}, 0.0, speed);
  }
  return {};
}

std::vector<Vec3> leader_maneuver_waypoints(Maneuver m, const State& start,
                                            const ArenaBox& arena) {
  if (!arena.contains(start.position)) throw OutOfArena("maneuver start outside the arena");
  const double c = std::cos(start.yaw);
  const double s = std::sin(start.yaw);
  std::vector<Vec3> out;
  for (const Vec3& p : local_path(m)) {
    const Vec3 w = start.position + Vec3(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
    if (!arena.contains(w)) throw OutOfArena("maneuver waypoint leaves the arena");
    out.push_back(w);
  }
  return out;
}

double path_length(const Vec3& start, std::span<const Vec3> waypoints) {
  double len = 0.0;
  Vec3 prev = start;
  for (const Vec3& w : waypoints) {
    len += (w - prev).norm();
    prev = w;
  }
  return len;
}

Scenario make_tracking_scenario(Maneuver m, std::uint64_t seed, bool perturb,
                                const GuidanceGains& gains) {
  Scenario sc;
  sc.kind = ScenarioKind::Tracking;
  sc.maneuver = m;
  sc.seed = seed;
  sc.initial_leader = maneuver_start(m, gains.target_speed);
  const auto wps = leader_maneuver_waypoints(m, sc.initial_leader);
  sc.duration = std::floor(path_length(sc.initial_leader.position, wps) / gains.target_speed /
                           sc.dt) * sc.dt;

  const Vec3 back(std::cos(sc.initial_leader.yaw), std::sin(sc.initial_leader.yaw), 0.0);
  Vec3 pos = sc.initial_leader.position - gains.standoff * back;
  double heading = sc.initial_leader.yaw;
  if (perturb) {
    Engine rng = make_engine(seed, "harness.initial_conditions");
    std::uniform_real_distribution<double> offset(-0.5, 0.5);
    std::uniform_real_distribution<double> yaw(-5.0 * kDeg, 5.0 * kDeg);
    pos += Vec3(offset(rng), offset(rng), offset(rng));
    heading += yaw(rng);
  }
  sc.initial_follower = level_state(pos, heading, gains.target_speed);
  return sc;
}

Scenario make_landing_scenario(std::uint64_t seed, const RunwaySpec& runway, bool perturb,
                               double timeout, const GuidanceGains& gains) {
  Scenario sc;
  sc.kind = ScenarioKind::Landing;
  sc.seed = seed;
  sc.duration = timeout;
  const Vec3 dir = runway.direction();
  Vec3 pos = runway.touchdown_target - 20.0 * dir;
  pos.z() = 1.5;
  double heading = runway.heading();
  if (perturb) {
    Engine rng = make_engine(seed, "harness.initial_conditions");
    std::uniform_real_distribution<double> offset(-0.5, 0.5);
    std::uniform_real_distribution<double> yaw(-5.0 * kDeg, 5.0 * kDeg);
    pos += Vec3(offset(rng), offset(rng), offset(rng));
    heading += yaw(rng);
  }
  sc.initial_follower = level_state(pos, heading, gains.target_speed);
  return sc;
}

FollowerPolicy state_expert_policy(const GuidanceGains& gains) {
  return {"state", false, [gains](const FollowerObservation& o) {
            return expert_follower_control(o.follower, o.leader, gains);
          }};
}

FollowerPolicy vision_policy(const GuidanceGains& gains) {
  return {"vision", true, [gains](const FollowerObservation& o) {
            const auto stats = o.scene ? mask_stats(o.scene->mask) : std::nullopt;
            return vision_follower_control(stats, o.history, o.intrinsics,
                                           gains, o.follower.yaw);
          }};
}

FollowerPolicy constant_policy(const Control& u) {
  return {"constant", false, [u](const FollowerObservation&) { return u; }};
}

RenderConfig scenario_render_config(const Scenario& s, const RenderConfig& base) {
  RenderConfig r = base;
  r.background_seed = base.background_seed ^ s.seed;
  return r;
}

TrackingSim::TrackingSim(const Scenario& scenario, const DynParams& params,
                         const GuidanceGains& leader_gains, const RenderConfig& render)
    : scenario_(scenario),
      params_(params),
      leader_gains_(leader_gains),
      render_(render),
      waypoints_(leader_maneuver_waypoints(scenario.maneuver, scenario.initial_leader)),
      follower_(scenario.initial_follower),
      leader_(scenario.initial_leader),
      steps_(scenario.steps()) {}

RenderedScene TrackingSim::render() const {
  return render_scene(render_, follower_.pose(), leader_.pose(), scenario_.appearance);
}

Mask TrackingSim::truth_mask() const {
  return ground_truth_mask(render_, follower_.pose(), leader_.pose(), scenario_.appearance);
}

Control TrackingSim::advance(const Control& follower_control) {
  auto horizontal = [](Vec3 v) {
    v.z() = 0.0;
    return v;
  };
  while (next_wp_ < waypoints_.size()) {
    const Vec3 prev = next_wp_ == 0 ? scenario_.initial_leader.position : waypoints_[next_wp_ - 1];
    const Vec3 to_wp = horizontal(waypoints_[next_wp_] - leader_.position);
    const Vec3 seg = horizontal(waypoints_[next_wp_] - prev);
    if (to_wp.norm() < leader_gains_.capture_radius || to_wp.dot(seg) <= 0.0) {
      ++next_wp_;
    } else {
      break;
    }
  }
  Vec3 target;
  if (next_wp_ < waypoints_.size()) {
    target = waypoints_[next_wp_];
  } else {
    // Past the last waypoint: keep flying along the final leg.
    const Vec3 last = waypoints_.back();
    const Vec3 prev = waypoints_.size() > 1 ? waypoints_[waypoints_.size() - 2]
                                            : scenario_.initial_leader.position;
    Vec3 dir = last - prev;
    dir.z() = 0.0;
    dir.normalize();
    const double along = std::max(0.0, dir.dot(leader_.position - last));
    target = last + (along + 10.0) * dir;
  }
  const Control leader_u = expert_waypoint_control(leader_, target, leader_gains_);
  leader_ = step(params_, leader_, leader_u, scenario_.dt);
  follower_ = step(params_, follower_, follower_control, scenario_.dt);
  ++tick_;
  return leader_u;
}

bool visual_lock(const Mask& mask) {
  return static_cast<double>(mask.count()) >= kLockMinArea;
}

TrialResult run_tracking_trial(const Scenario& scenario, const FollowerPolicy& policy,
                               const DynParams& params, const TrackingOptions& opt) {
  if (scenario.kind != ScenarioKind::Tracking) {
    throw InvalidArgument("run_tracking_trial needs a tracking scenario");
  }
  const RenderConfig render = scenario_render_config(scenario, opt.render);
  TrackingSim sim(scenario, params, opt.leader_gains, render);
  TrialResult r;
  r.seed = scenario.seed;
  r.follower.dt = r.leader.dt = scenario.dt;
  r.follower.states.push_back(sim.follower());
  r.leader.states.push_back(sim.leader());

  ControlHistory history;
  Engine noise_rng = make_engine(scenario.seed, "harness.expert_noise");
  const bool want_frame = policy.needs_frame || opt.render_every_frame;

  while (!sim.done()) {
    std::optional<RenderedScene> scene;
    if (want_frame) scene = sim.render();
    const Mask mask = scene ? scene->mask : sim.truth_mask();
    r.lock_flags.push_back(visual_lock(mask));

    const FollowerObservation obs{sim.follower(), sim.leader(), scene ? &*scene : nullptr,
                                  history, render.intrinsics};
    const auto t0 = now();
    const Control label = policy.act(obs);
    const auto t1 = now();
    r.runtimes.push_back(std::chrono::duration<double>(t1 - t0).count());

    const Control applied =
        opt.expert_noise ? inject_expert_noise(label, *opt.expert_noise, noise_rng) : label;
    if (opt.on_frame) {
      const State follower = sim.follower();
      const State leader = sim.leader();
      FrameRecord rec;
      rec.trajectory = opt.trajectory_index;
      rec.frame = sim.tick();
      rec.t = sim.tick() * scenario.dt;
      rec.follower = &follower;
      rec.leader = &leader;
      rec.scene = scene ? &*scene : nullptr;
      rec.history = &history;
      rec.label = label;
      rec.applied = applied;
      opt.on_frame(rec);
    }
    history.push(applied);
    const Control leader_u = sim.advance(applied);
    r.follower.controls.push_back(applied);
    r.follower.states.push_back(sim.follower());
    r.leader.controls.push_back(leader_u);
    r.leader.states.push_back(sim.leader());
    check_envelope_into(opt.airframe, opt.arena, sim.follower(), r.envelope_violations);
  }
  r.success = !r.lock_flags.empty() &&
              std::all_of(r.lock_flags.begin(), r.lock_flags.end(), [](bool b) { return b; });
  return r;
}

LandingPolicyFactory landing_expert_policy(const RunwaySpec& runway,
                                           const GuidanceGains& gains) {
  return [runway, gains]() -> LandingPolicy {
    auto controller = std::make_shared<LandingController>(runway, gains);
    return [controller](const State& s) { return (*controller)(s); };
  };
}

TrialResult run_landing_trial(const Scenario& scenario, const LandingPolicy& policy,
                              const RunwaySpec& runway, const DynParams& params) {
  if (scenario.kind != ScenarioKind::Landing) {
    throw InvalidArgument("run_landing_trial needs a landing scenario");
  }
  TrialResult r;
  r.seed = scenario.seed;
  r.follower.dt = scenario.dt;
  r.follower.states.push_back(scenario.initial_follower);
  const int steps = scenario.steps();
  AirframeConfig airframe;
  for (int k = 0; k < steps; ++k) {
    const State& s = r.follower.states.back();
    const auto t0 = now();
    const Control u = policy(s);
    const auto t1 = now();
    r.runtimes.push_back(std::chrono::duration<double>(t1 - t0).count());
    const State next = step(params, s, u, scenario.dt);
    r.follower.controls.push_back(u);
    r.follower.states.push_back(next);
    if (std::abs(next.roll) > airframe.max_bank) ++r.envelope_violations;
    const double ground = runway.ground_height(next.position);
    if (next.position.z() <= ground + runway.gear_height && next.velocity.z() < 0.0) {
      r.touchdown = Touchdown{next.position, (k + 1) * scenario.dt, runway.lateral(next.position)};
      break;
    }
  }
  r.timed_out = !r.touchdown.has_value();
  r.success = r.touchdown && runway.within_pad_bounds(r.touchdown->position);
  return r;
}

std::vector<TrialResult> run_tracking_trials_serial(std::span<const Scenario> scenarios,
                                                    const FollowerPolicy& policy,
                                                    const DynParams& params,
                                                    const TrackingOptions& opt) {
  std::vector<TrialResult> out;
  out.reserve(scenarios.size());
  for (const auto& s : scenarios) out.push_back(run_tracking_trial(s, policy, params, opt));
  return out;
}

namespace {

template <typename Fn>
std::vector<TrialResult> parallel_trials(std::size_t n, int jobs, Fn&& run_one) {
  std::vector<TrialResult> out(n);
  std::vector<std::exception_ptr> errors(n);
  const int threads = jobs > 0 ? jobs : 1;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[i] = run_one(static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

std::vector<TrialResult> run_tracking_trials_parallel(std::span<const Scenario> scenarios,
                                                      const FollowerPolicy& policy,
                                                      const DynParams& params,
                                                      const TrackingOptions& opt, int jobs) {
  if (jobs <= 0) jobs = omp_get_max_threads();
  return parallel_trials(scenarios.size(), jobs, [&](std::size_t i) {
    return run_tracking_trial(scenarios[i], policy, params, opt);
  });
}

std::vector<TrialResult> run_landing_trials(std::span<const Scenario> scenarios,
                                            const LandingPolicyFactory& policy,
                                            const RunwaySpec& runway, const DynParams& params,
                                            int jobs) {
  if (jobs <= 0) jobs = omp_get_max_threads();
  return parallel_trials(scenarios.size(), jobs, [&](std::size_t i) {
    return run_landing_trial(scenarios[i], policy(), runway, params);
  });
}

std::optional<double> trial_ate_cm(const TrialResult& r) {
  const auto& f = r.follower.states;
  const auto& l = r.leader.states;
  if (l.empty() || f.size() != l.size()) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += (l[i].position - f[i].position).norm();
  const double initial = (l[0].position - f[0].position).norm();
  return 100.0 * (sum / static_cast<double>(f.size()) - initial);
}

std::optional<double> trial_ald_cm(const TrialResult& r) {
  if (!r.touchdown) return std::nullopt;
  return 100.0 * std::abs(r.touchdown->lateral);
}

Metrics compute_metrics(std::span<const TrialResult> results) {
  if (results.empty()) throw EmptyResults("no trials to score");
  Metrics m;
  m.trials = results.size();
  std::size_t ok = 0, ate_n = 0, ald_n = 0, frames = 0;
  double ate_sum = 0.0, ald_sum = 0.0, runtime_sum = 0.0;
  for (const auto& r : results) {
    ok += r.success;
    if (auto ate = trial_ate_cm(r)) {
      ate_sum += *ate;
      ++ate_n;
    }
    if (r.success) {
      if (auto ald = trial_ald_cm(r)) {
        ald_sum += *ald;
        ++ald_n;
      }
    }
    for (double t : r.runtimes) runtime_sum += t;
    frames += r.runtimes.size();
  }
  m.sr = static_cast<double>(ok) / static_cast<double>(results.size());
  if (ate_n > 0) m.ate_cm = ate_sum / static_cast<double>(ate_n);
  if (ald_n > 0) m.ald_cm = ald_sum / static_cast<double>(ald_n);
  m.art_s = frames > 0 ? runtime_sum / static_cast<double>(frames) : 0.0;
  return m;
}

std::vector<SweepRow> perturbation_sweep(const Scenario& base,
                                         std::span<const double> scale_levels,
                                         std::span<const double> noise_levels,
                                         const FollowerPolicy& policy, const DynParams& params,
                                         int trials_per_level, int jobs) {
  RandomizationSpec limits;
  auto run_level = [&](const LeaderAppearance& appearance) {
    std::vector<Scenario> scenarios;
    for (int i = 0; i < trials_per_level; ++i) {
      Scenario s = make_tracking_scenario(base.maneuver, base.seed + static_cast<std::uint64_t>(i));
      s.appearance = appearance;
      scenarios.push_back(s);
    }
    const auto results = run_tracking_trials_parallel(scenarios, policy, params, {}, jobs);
    return compute_metrics(results).sr;
  };
  std::vector<SweepRow> rows;
  for (double level : scale_levels) {
    if (level < limits.scale_min || level > limits.scale_max) {
      throw InvalidArgument("scale level outside [0.5, 2.0]");
    }
    LeaderAppearance a = base.appearance;
    a.scale_factor = level;
    rows.push_back({"scale", level, run_level(a)});
  }
  for (double level : noise_levels) {
    if (level < limits.salt_pepper_min || level > limits.salt_pepper_max) {
      throw InvalidArgument("salt-pepper level outside [0, 0.3]");
    }
    LeaderAppearance a = base.appearance;
    a.salt_pepper_fraction = level;
    rows.push_back({"salt_pepper", level, run_level(a)});
  }
  return rows;
}

DatasetManifest generate_il_dataset(std::span<const Scenario> scenarios,
                                    const GuidanceGains& expert_gains,
                                    const ControlSigma& noise_sigma,
                                    const std::filesystem::path& out_dir,
                                    const DynParams& params) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());
  DatasetManifest manifest{out_dir / "manifest.jsonl", 0};
  std::ofstream index(manifest.manifest_path);
  if (!index) throw IoFailure("cannot write " + manifest.manifest_path.string());

  const FollowerPolicy expert = state_expert_policy(expert_gains);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const Scenario& sc = scenarios[i];
    TrackingOptions opt;
    opt.leader_gains = expert_gains;
    opt.expert_noise = noise_sigma;
    opt.render_every_frame = true;
    opt.trajectory_index = static_cast<int>(i);
    opt.on_frame = [&](const FrameRecord& rec) {
      const std::string stem = std::to_string(rec.trajectory) + "_" + std::to_string(rec.frame);
      const std::string image = "frame_" + stem + ".ppm";
      const std::string mask = "mask_" + stem + ".pgm";
      {
        std::ofstream f(out_dir / image, std::ios::binary);
        if (!f) throw IoFailure("cannot write " + image);
        write_ppm(f, rec.scene->frame);
      }
      {
        std::ofstream f(out_dir / mask, std::ios::binary);
        if (!f) throw IoFailure("cannot write " + mask);
        write_pgm(f, rec.scene->mask);
      }
      nlohmann::ordered_json row;
      row["trajectory"] = rec.trajectory;
      row["frame"] = rec.frame;
      row["t"] = rec.t;
      row["seed"] = sc.seed;
      row["maneuver"] = to_string(sc.maneuver);
      row["image"] = image;
      row["mask"] = mask;
      nlohmann::json hist = nlohmann::json::array();
      for (const Control& u : rec.history->ordered()) hist.push_back(control_json(u));
      row["history"] = hist;
      row["label"] = control_json(rec.label);
      row["applied"] = control_json(rec.applied);
      row["follower_pose"] = pose_json(*rec.follower);
      row["leader_pose"] = pose_json(*rec.leader);
      row["scale_factor"] = sc.appearance.scale_factor;
      index << row.dump() << '\n';
      ++manifest.rows;
    };
    run_tracking_trial(sc, expert, params, opt);
  }
  if (!index) throw IoFailure("failed writing manifest");
  return manifest;
}

}  // namespace wingkit
