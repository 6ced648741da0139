#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wingkit/control.hpp"
#include "wingkit/dynamics.hpp"
#include "wingkit/percept.hpp"

namespace wingkit {

enum class Maneuver { LeftSDescent, RightSAscent, RightSharpClimb, Straight };

std::string to_string(Maneuver m);
// Accepts "left-s-descent", "right-s-ascent", "right-sharp-climb", "straight".
std::optional<Maneuver> parse_maneuver(const std::string& name);

enum class ScenarioKind { Tracking, Landing };

struct Scenario {
  ScenarioKind kind = ScenarioKind::Tracking;
  Maneuver maneuver = Maneuver::Straight;
  State initial_follower;
  State initial_leader;
  std::uint64_t seed = 0;
  double duration = 5.0;
  double dt = kDefaultDt;
  LeaderAppearance appearance;

  int steps() const;
};

// Nominal leader start for each maneuver (heading +x, target speed).
State maneuver_start(Maneuver m, double speed = 8.0);

// Waypoints in the start state's horizontal frame. Throws OutOfArena.
std::vector<Vec3> leader_maneuver_waypoints(Maneuver m, const State& start,
                                            const ArenaBox& arena = {});

// Length of the polyline start -> waypoints.
double path_length(const Vec3& start, std::span<const Vec3> waypoints);

// Follower placed `standoff` behind the leader, then perturbed by up to
// +-0.5 m per axis and +-5 deg of heading (seeded); seed 0 is unperturbed
// only when perturb = false.
Scenario make_tracking_scenario(Maneuver m, std::uint64_t seed, bool perturb = true,
                                const GuidanceGains& gains = {});

// Handoff 20 m before the touchdown target at 1.5 m, perturbed likewise.
Scenario make_landing_scenario(std::uint64_t seed, const RunwaySpec& runway = {},
                               bool perturb = true, double timeout = 10.0,
                               const GuidanceGains& gains = {});

struct FollowerObservation {
  const State& follower;
  const State& leader;
  const RenderedScene* scene;  // set when the policy asked for frames
  const ControlHistory& history;
  const CameraIntrinsics& intrinsics;
};

struct FollowerPolicy {
  std::string name;
  bool needs_frame = false;
  std::function<Control(const FollowerObservation&)> act;
};

FollowerPolicy state_expert_policy(const GuidanceGains& gains = {});
// Vision stand-in over mask statistics of the rendered frame.
FollowerPolicy vision_policy(const GuidanceGains& gains = {});
FollowerPolicy constant_policy(const Control& u);

// Leader and follower stepping together; the leader flies the expert
// waypoint controller over its maneuver.
class TrackingSim {
 public:
  TrackingSim(const Scenario& scenario, const DynParams& params,
              const GuidanceGains& leader_gains, const RenderConfig& render);

  const State& follower() const { return follower_; }
  const State& leader() const { return leader_; }
  int tick() const { return tick_; }
  int steps() const { return steps_; }
  bool done() const { return tick_ >= steps_; }
  const RenderConfig& render_config() const { return render_; }
  const Scenario& scenario() const { return scenario_; }

  RenderedScene render() const;
  Mask truth_mask() const;
  // Steps the leader with its own controller and the follower with `u`.
  // Returns the leader's control.
  Control advance(const Control& follower_control);

 private:
  Scenario scenario_;
  DynParams params_;
  GuidanceGains leader_gains_;
  RenderConfig render_;
  std::vector<Vec3> waypoints_;
  std::size_t next_wp_ = 0;
  State follower_;
  State leader_;
  int tick_ = 0;
  int steps_ = 0;
};

// Per-frame lock criterion: ground-truth mask area of at least 4 px.
inline constexpr double kLockMinArea = 4.0;
bool visual_lock(const Mask& mask);

struct Touchdown {
  Vec3 position;
  double time = 0.0;
  double lateral = 0.0;  // signed, m
};

struct TrialResult {
  std::uint64_t seed = 0;
  Trajectory follower;
  Trajectory leader;  // empty for landing trials
  std::vector<bool> lock_flags;
  std::vector<double> runtimes;  // s per policy call
  std::optional<Touchdown> touchdown;
  bool timed_out = false;
  bool success = false;
  std::size_t envelope_violations = 0;
};

struct FrameRecord {
  int trajectory = 0;
  int frame = 0;
  double t = 0.0;
  const State* follower = nullptr;
  const State* leader = nullptr;
  const RenderedScene* scene = nullptr;
  const ControlHistory* history = nullptr;  // before this frame's control
  Control label;    // expert action before noise
  Control applied;  // action sent to the plant
};

struct TrackingOptions {
  GuidanceGains leader_gains;
  RenderConfig render;
  std::optional<ControlSigma> expert_noise;
  bool render_every_frame = false;  // forces rendering for the frame hook
  std::function<void(const FrameRecord&)> on_frame;
  AirframeConfig airframe;
  ArenaBox arena;
  int trajectory_index = 0;
};

// Render seed and intrinsics default from the scenario when opt.render is
// left at its defaults.
TrialResult run_tracking_trial(const Scenario& scenario, const FollowerPolicy& policy,
                               const DynParams& params, const TrackingOptions& opt = {});

using LandingPolicy = std::function<Control(const State&)>;
using LandingPolicyFactory = std::function<LandingPolicy()>;

LandingPolicyFactory landing_expert_policy(const RunwaySpec& runway = {},
                                           const GuidanceGains& gains = {});

TrialResult run_landing_trial(const Scenario& scenario, const LandingPolicy& policy,
                              const RunwaySpec& runway, const DynParams& params);

// Batches of independent trials. The OpenMP runner hands each trial to a
// worker and stores results by index; the serial runner is the reference.
std::vector<TrialResult> run_tracking_trials_serial(std::span<const Scenario> scenarios,
                                                    const FollowerPolicy& policy,
                                                    const DynParams& params,
                                                    const TrackingOptions& opt = {});
std::vector<TrialResult> run_tracking_trials_parallel(std::span<const Scenario> scenarios,
                                                      const FollowerPolicy& policy,
                                                      const DynParams& params,
                                                      const TrackingOptions& opt = {},
                                                      int jobs = 0);
std::vector<TrialResult> run_landing_trials(std::span<const Scenario> scenarios,
                                            const LandingPolicyFactory& policy,
                                            const RunwaySpec& runway, const DynParams& params,
                                            int jobs = 1);

struct Metrics {
  std::size_t trials = 0;
  double sr = 0.0;
  std::optional<double> ate_cm;
  double art_s = 0.0;
  std::optional<double> ald_cm;
};

// Signed per-trial tracking error in cm (mean displacement minus the
// initial displacement); empty for trials without a leader.
std::optional<double> trial_ate_cm(const TrialResult& r);
std::optional<double> trial_ald_cm(const TrialResult& r);

// Throws EmptyResults.
Metrics compute_metrics(std::span<const TrialResult> results);

struct SweepRow {
  std::string kind;  // "scale" or "salt_pepper"
  double level = 0.0;
  double sr = 0.0;
};

std::vector<SweepRow> perturbation_sweep(const Scenario& base,
                                         std::span<const double> scale_levels,
                                         std::span<const double> noise_levels,
                                         const FollowerPolicy& policy, const DynParams& params,
                                         int trials_per_level = 10, int jobs = 0);

struct DatasetManifest {
  std::filesystem::path manifest_path;
  std::size_t rows = 0;
};

// Writes frame_<traj>_<k>.ppm, mask_<traj>_<k>.pgm and manifest.jsonl
// under out_dir. Throws IoFailure.
DatasetManifest generate_il_dataset(std::span<const Scenario> scenarios,
                                    const GuidanceGains& expert_gains,
                                    const ControlSigma& noise_sigma,
                                    const std::filesystem::path& out_dir,
                                    const DynParams& params);

// Render configuration a tracking trial uses for its scenario.
RenderConfig scenario_render_config(const Scenario& s, const RenderConfig& base = {});

}  // namespace wingkit
