#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wingkit/error.hpp"
#include "wingkit/harness.hpp"

using namespace wingkit;

namespace {

constexpr Maneuver kTrackingManeuvers[] = {Maneuver::LeftSDescent, Maneuver::RightSAscent,
                                           Maneuver::RightSharpClimb};

std::vector<Scenario> tracking_batch(Maneuver m, std::uint64_t first, int n) {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) out.push_back(make_tracking_scenario(m, first + i));
  return out;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("wingkit_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Maneuver, NamesRoundTrip) {
  for (Maneuver m : {Maneuver::LeftSDescent, Maneuver::RightSAscent, Maneuver::RightSharpClimb,
                     Maneuver::Straight}) {
    EXPECT_EQ(parse_maneuver(to_string(m)), m);
  }
  EXPECT_FALSE(parse_maneuver("loop"));
}

TEST(Maneuver, WaypointsStayInArena) {
  const ArenaBox arena;
  for (Maneuver m : {Maneuver::LeftSDescent, Maneuver::RightSAscent, Maneuver::RightSharpClimb,
                     Maneuver::Straight}) {
    const State start = maneuver_start(m);
    EXPECT_NEAR(start.speed(), 8.0, 1e-12);
    const auto wps = leader_maneuver_waypoints(m, start);
    ASSERT_GE(wps.size(), 3u);
    for (const Vec3& w : wps) EXPECT_TRUE(arena.contains(w)) << to_string(m);
  }
}

TEST(Maneuver, ShapeOfEachPath) {
  const auto left = leader_maneuver_waypoints(Maneuver::LeftSDescent, maneuver_start(Maneuver::LeftSDescent));
  const Vec3 s0 = maneuver_start(Maneuver::LeftSDescent).position;
  EXPECT_GT(left.back().y(), s0.y());                 // net drift left
  EXPECT_NEAR(left.back().z(), s0.z() - 1.0, 1e-12);  // descends 1 m
  const auto right = leader_maneuver_waypoints(Maneuver::RightSAscent, maneuver_start(Maneuver::RightSAscent));
  const Vec3 s1 = maneuver_start(Maneuver::RightSAscent).position;
  EXPECT_LT(right.back().y(), s1.y());
  EXPECT_NEAR(right.back().z(), s1.z() + 1.0, 1e-12);
  // Final leg of the sharp climb points along -y after a quarter turn right.
  const auto sharp = leader_maneuver_waypoints(Maneuver::RightSharpClimb, maneuver_start(Maneuver::RightSharpClimb));
  const Vec3 leg = sharp.back() - sharp[sharp.size() - 2];
  EXPECT_NEAR(leg.x(), 0.0, 1e-9);
  EXPECT_LT(leg.y(), 0.0);
  EXPECT_NEAR(sharp.back().z(), maneuver_start(Maneuver::RightSharpClimb).position.z() + 1.5, 1e-12);
}

TEST(Maneuver, RotatesWithStartHeading) {
  State a = maneuver_start(Maneuver::LeftSDescent);
  State b = a;
  b.position = Vec3(0, 0, 3);
  b.yaw = 0.5;
  a.position = b.position;
  const ArenaBox wide{Vec3(-50, -50, 0), Vec3(50, 50, 10)};
  const auto wa = leader_maneuver_waypoints(Maneuver::LeftSDescent, a, wide);
  const auto wb = leader_maneuver_waypoints(Maneuver::LeftSDescent, b, wide);
  const Mat3 r = euler_to_rotation(0, 0.5, 0);
  for (std::size_t i = 0; i < wa.size(); ++i) {
    EXPECT_LT((r * (wa[i] - a.position) - (wb[i] - b.position)).norm(), 1e-12);
  }
}

TEST(Maneuver, OutOfArenaThrows) {
  State s = maneuver_start(Maneuver::Straight);
  s.position.x() = 0.0;  // 24 m leg would exit the far wall
  EXPECT_THROW(leader_maneuver_waypoints(Maneuver::Straight, s), OutOfArena);
  s.position = Vec3(0, 0, 9);
  EXPECT_THROW(leader_maneuver_waypoints(Maneuver::Straight, s), OutOfArena);
}

TEST(Maneuver, PathLength) {
  const std::vector<Vec3> w{Vec3(3, 0, 0), Vec3(3, 4, 0)};
  EXPECT_DOUBLE_EQ(path_length(Vec3::Zero(), w), 7.0);
  const State s = maneuver_start(Maneuver::Straight);
  EXPECT_NEAR(path_length(s.position, leader_maneuver_waypoints(Maneuver::Straight, s)), 24.0, 1e-12);
}

TEST(Scenario, TrackingInitialConditions) {
  for (Maneuver m : kTrackingManeuvers) {
    const Scenario nominal = make_tracking_scenario(m, 0, false);
    EXPECT_LT((nominal.initial_follower.position -
               (nominal.initial_leader.position - Vec3(3, 0, 0))).norm(), 1e-12);
    const double len = path_length(nominal.initial_leader.position,
                                   leader_maneuver_waypoints(m, nominal.initial_leader));
    EXPECT_NEAR(nominal.duration, std::floor(len / 8.0 / 0.05) * 0.05, 1e-12);
    EXPECT_GE(nominal.duration, 2.0);
    for (std::uint64_t seed = 1; seed < 50; ++seed) {
      const Scenario s = make_tracking_scenario(m, seed);
      const Vec3 d = s.initial_follower.position - nominal.initial_follower.position;
      EXPECT_LE(d.cwiseAbs().maxCoeff(), 0.5);
      EXPECT_LE(std::abs(s.initial_follower.yaw), 5.0 * kPi / 180 + 1e-12);
      EXPECT_EQ(s.initial_leader, nominal.initial_leader);
    }
    EXPECT_EQ(make_tracking_scenario(m, 7).initial_follower, make_tracking_scenario(m, 7).initial_follower);
    EXPECT_NE(make_tracking_scenario(m, 7).initial_follower, make_tracking_scenario(m, 8).initial_follower);
  }
}

TEST(Scenario, LandingHandoff) {
  const RunwaySpec rw;
  const Scenario s = make_landing_scenario(0, rw, false);
  EXPECT_EQ(s.kind, ScenarioKind::Landing);
  EXPECT_NEAR(rw.along(rw.touchdown_target) - rw.along(s.initial_follower.position), 20.0, 1e-12);
  EXPECT_NEAR(s.initial_follower.position.z(), 1.5, 1e-12);
  EXPECT_NEAR(rw.lateral(s.initial_follower.position), 0.0, 1e-12);
}

TEST(Scenario, RenderSeedMixesScenarioSeed) {
  Scenario s;
  s.seed = 0x55;
  RenderConfig base;
  base.background_seed = 0x0f;
  EXPECT_EQ(scenario_render_config(s, base).background_seed, 0x5aULL);
}

TEST(Tracking, ExpertSucceedsOnEveryManeuver) {
  for (Maneuver m : {Maneuver::LeftSDescent, Maneuver::RightSAscent, Maneuver::RightSharpClimb,
                     Maneuver::Straight}) {
    const auto scenarios = tracking_batch(m, 100, 10);
    const auto results = run_tracking_trials_parallel(scenarios, state_expert_policy(), DynParams{});
    for (const auto& r : results) {
      EXPECT_TRUE(r.success) << to_string(m) << " seed " << r.seed;
      EXPECT_EQ(r.envelope_violations, 0u);
      EXPECT_EQ(r.lock_flags.size(), static_cast<std::size_t>(scenarios[0].steps()));
      const auto ate = trial_ate_cm(r);
      ASSERT_TRUE(ate);
      EXPECT_TRUE(std::isfinite(*ate));
    }
  }
}

TEST(Tracking, TrialIsDeterministic) {
  const Scenario s = make_tracking_scenario(Maneuver::RightSAscent, 3);
  const auto a = run_tracking_trial(s, vision_policy(), DynParams{});
  const auto b = run_tracking_trial(s, vision_policy(), DynParams{});
  EXPECT_EQ(a.follower.states, b.follower.states);
  EXPECT_EQ(a.leader.states, b.leader.states);
  EXPECT_EQ(a.lock_flags, b.lock_flags);
}

TEST(Tracking, LeaderFollowsPathAndBeyond) {
  Scenario s = make_tracking_scenario(Maneuver::RightSharpClimb, 0, false);
  s.duration += 1.0;
  const auto r = run_tracking_trial(s, state_expert_policy(), DynParams{});
  const auto wps = leader_maneuver_waypoints(Maneuver::RightSharpClimb, s.initial_leader);
  for (const Vec3& w : wps) {
    double best = 1e9;
    for (const State& l : r.leader.states) best = std::min(best, (l.position - w).norm());
    EXPECT_LT(best, 2.0);
  }
  // Still heading down the final leg a second after the path ends.
  EXPECT_NEAR(wrap_angle(r.leader.states.back().yaw + kPi / 2), 0.0, 0.15);
}

TEST(Tracking, ConstantPolicyLosesLock) {
  for (Maneuver m : kTrackingManeuvers) {
    const auto r = run_tracking_trial(make_tracking_scenario(m, 5), constant_policy(Control{0.8, 0, 0, 0}),
                                      DynParams{});
    EXPECT_FALSE(r.success) << to_string(m);
  }
}

TEST(Tracking, VisionPolicyOnStraightLeader) {
  const auto results = run_tracking_trials_parallel(tracking_batch(Maneuver::Straight, 300, 10),
                                                    vision_policy(), DynParams{});
  EXPECT_GE(compute_metrics(results).sr, 0.9);
}

TEST(Tracking, VisionPolicyHoldsLockForThirtySeconds) {
  Scenario s = make_tracking_scenario(Maneuver::Straight, 301);
  s.duration = 30.0;
  const auto r = run_tracking_trial(s, vision_policy(), DynParams{});
  EXPECT_EQ(r.lock_flags.size(), 600u);
  EXPECT_TRUE(r.success);
}

TEST(Tracking, RejectsLandingScenario) {
  EXPECT_THROW(run_tracking_trial(make_landing_scenario(1), state_expert_policy(), DynParams{}),
               InvalidArgument);
}

TEST(Tracking, FrameHookSeesEveryTick) {
  const Scenario s = make_tracking_scenario(Maneuver::Straight, 2);
  TrackingOptions opt;
  opt.render_every_frame = true;
  int frames = 0;
  opt.on_frame = [&](const FrameRecord& rec) {
    EXPECT_EQ(rec.frame, frames);
    ASSERT_NE(rec.scene, nullptr);
    EXPECT_EQ(rec.label, rec.applied);
    ++frames;
  };
  const auto r = run_tracking_trial(s, state_expert_policy(), DynParams{}, opt);
  EXPECT_EQ(frames, s.steps());
  EXPECT_EQ(r.follower.controls.size(), static_cast<std::size_t>(frames));
}

TEST(Landing, ExpertLandsOnPad) {
  const RunwaySpec rw;
  std::vector<Scenario> scenarios;
  for (std::uint64_t i = 0; i < 10; ++i) scenarios.push_back(make_landing_scenario(200 + i, rw));
  const auto results = run_landing_trials(scenarios, landing_expert_policy(rw), rw, DynParams{}, 4);
  for (const auto& r : results) {
    ASSERT_TRUE(r.touchdown) << r.seed;
    EXPECT_TRUE(r.success);
    EXPECT_FALSE(r.timed_out);
    EXPECT_LE(*trial_ald_cm(r), 100.0);
    EXPECT_EQ(r.envelope_violations, 0u);
  }
  const auto again = run_landing_trials(scenarios, landing_expert_policy(rw), rw, DynParams{}, 1);
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(trial_ald_cm(results[i]), trial_ald_cm(again[i]));
  }
  const auto m = compute_metrics(results);
  EXPECT_EQ(m.sr, 1.0);
  ASSERT_TRUE(m.ald_cm);
  EXPECT_FALSE(m.ate_cm);
}

TEST(Landing, ClimbingPolicyTimesOut) {
  const RunwaySpec rw;
  const auto r = run_landing_trial(make_landing_scenario(1, rw, true, 2.0),
                                   [](const State&) { return Control{1.0, 0, 0.2, 0}; }, rw, DynParams{});
  EXPECT_TRUE(r.timed_out);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.follower.states.size(), 41u);
}

TEST(Landing, ShortLandingMissesPad) {
  const RunwaySpec rw;
  const auto r = run_landing_trial(make_landing_scenario(1, rw, false),
                                   [](const State&) { return Control{0.0, 0, -0.4, 0}; }, rw, DynParams{});
  ASSERT_TRUE(r.touchdown);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(trial_ald_cm(r) == std::nullopt);
}

TEST(Metrics, HandComputed) {
  TrialResult a, b;
  a.success = true;
  a.runtimes = {0.1, 0.3};
  a.follower.states = {level_state(Vec3(0, 0, 0), 0, 8), level_state(Vec3(0, 0, 0), 0, 8)};
  a.leader.states = {level_state(Vec3(3, 0, 0), 0, 8), level_state(Vec3(5, 0, 0), 0, 8)};
  b.success = false;
  b.runtimes = {0.2};
  b.follower.states = a.follower.states;
  b.leader.states = {level_state(Vec3(3, 0, 0), 0, 8), level_state(Vec3(3, 0, 0), 0, 8)};
  const std::vector<TrialResult> rs{a, b};
  EXPECT_NEAR(*trial_ate_cm(a), 100.0, 1e-9);  // mean 4 minus initial 3
  EXPECT_NEAR(*trial_ate_cm(b), 0.0, 1e-12);
  const auto m = compute_metrics(rs);
  EXPECT_EQ(m.trials, 2u);
  EXPECT_EQ(m.sr, 0.5);
  EXPECT_NEAR(*m.ate_cm, 50.0, 1e-9);
  EXPECT_NEAR(m.art_s, 0.2, 1e-12);
  EXPECT_FALSE(m.ald_cm);
  EXPECT_THROW(compute_metrics(std::vector<TrialResult>{}), EmptyResults);
}

TEST(Metrics, AldUsesSuccessfulTrialsOnly) {
  TrialResult ok, miss;
  ok.success = true;
  ok.touchdown = Touchdown{Vec3::Zero(), 1.0, -0.25};
  miss.touchdown = Touchdown{Vec3::Zero(), 1.0, 3.0};
  const std::vector<TrialResult> rs{ok, miss};
  EXPECT_NEAR(*compute_metrics(rs).ald_cm, 25.0, 1e-12);
}

TEST(Sweep, RowsAndValidation) {
  const Scenario base = make_tracking_scenario(Maneuver::Straight, 10);
  const std::vector<double> scales{1.0, 0.5};
  const std::vector<double> noise{0.0, 0.3};
  const auto rows = perturbation_sweep(base, scales, noise, state_expert_policy(), DynParams{}, 3);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].kind, "scale");
  EXPECT_EQ(rows[1].level, 0.5);
  EXPECT_EQ(rows[3].kind, "salt_pepper");
  for (const auto& r : rows) EXPECT_EQ(r.sr, 1.0);
  const std::vector<double> bad_scale{0.4};
  EXPECT_THROW(perturbation_sweep(base, bad_scale, {}, state_expert_policy(), DynParams{}, 1),
               InvalidArgument);
  const std::vector<double> bad_noise{0.31};
  EXPECT_THROW(perturbation_sweep(base, {}, bad_noise, state_expert_policy(), DynParams{}, 1),
               InvalidArgument);
}

TEST(Sweep, VisionNonIncreasingUnderScaleReduction) {
  const Scenario base = make_tracking_scenario(Maneuver::Straight, 400);
  const std::vector<double> scales{1.0, 0.75, 0.5};
  const auto rows = perturbation_sweep(base, scales, {}, vision_policy(), DynParams{}, 10);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_GE(rows[0].sr, 0.9);
  EXPECT_GE(rows[0].sr, rows[1].sr);
  EXPECT_GE(rows[1].sr, rows[2].sr);
}

TEST(Dataset, WritesFramesMasksAndManifest) {
  const auto dir = fresh_dir("dataset");
  std::vector<Scenario> scenarios{make_tracking_scenario(Maneuver::LeftSDescent, 1),
                                  make_tracking_scenario(Maneuver::Straight, 2)};
  const ControlSigma sigma{0.02, 0.02, 0.02, 0.02};
  const auto m = generate_il_dataset(scenarios, GuidanceGains{}, sigma, dir, DynParams{});
  const std::size_t expected = scenarios[0].steps() + scenarios[1].steps();
  EXPECT_EQ(m.rows, expected);
  std::ifstream in(m.manifest_path);
  std::string line;
  std::size_t rows = 0, noisy = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(std::filesystem::exists(dir / j["image"].get<std::string>()));
    EXPECT_TRUE(std::filesystem::exists(dir / j["mask"].get<std::string>()));
    EXPECT_EQ(j["history"].size(), 30u);
    EXPECT_EQ(j["history"][0].size(), 4u);
    EXPECT_EQ(j["follower_pose"].size(), 6u);
    EXPECT_EQ(j["leader_pose"].size(), 6u);
    if (j["label"] != j["applied"]) ++noisy;
    ++rows;
  }
  EXPECT_EQ(rows, expected);
  EXPECT_GT(noisy, expected / 2);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, HistoryCarriesPreviousAppliedAction) {
  const auto dir = fresh_dir("dataset_history");
  std::vector<Scenario> scenarios{make_tracking_scenario(Maneuver::Straight, 3)};
  generate_il_dataset(scenarios, GuidanceGains{}, ControlSigma{0.05, 0.05, 0.05, 0.05}, dir,
                      DynParams{});
  std::ifstream in(dir / "manifest.jsonl");
  std::string line;
  nlohmann::json prev;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (!prev.is_null()) EXPECT_EQ(j["history"][29], prev["applied"]);
    prev = j;
  }
  std::filesystem::remove_all(dir);
}
