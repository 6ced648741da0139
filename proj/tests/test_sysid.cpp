#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wingkit/error.hpp"
#include "wingkit/sysid.hpp"

using namespace wingkit;

namespace {

DynParams doubled(const DynParams& k) {
  auto a = k.as_array();
  for (double& x : a) x *= 2.0;
  return DynParams::from_array(a);
}

double max_relative_error(const DynParams& fit, const DynParams& truth) {
  const auto f = fit.as_array(), t = truth.as_array();
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(f[i] / t[i] - 1.0));
  return worst;
}

const Trajectory& excitation() {
  static const Trajectory t =
      generate_excitation(DynParams::reference(), level_state(Vec3(-10, 0, 2.5), 0, 8), 1);
  return t;
}

// d(residual)/d(log k) by the chain rule through one model step.
Eigen::Matrix<double, 9, 6> analytic_jacobian(const DynParams& k, const Transition& tr,
                                              double dt, const ResidualWeights& w) {
  const double g = 9.8;
  const State& x = tr.current;
  const Control& u = tr.control;
  const double v = std::max(x.speed(), kMinModelSpeed);
  const State n = step(k, x, u, dt, g);
  const double roll = n.roll, pitch = n.pitch, yaw = n.yaw;
  const double vnew = n.velocity.norm();

  // Parameter order: ka, kd, kp, ky, kT, kD.
  Eigen::Matrix<double, 6, 1> d_roll, d_pitch, d_yaw, d_speed;
  d_roll << dt * u.aileron, -dt * x.roll, 0, 0, 0, 0;
  d_pitch << 0, 0, dt * (u.pitch_cmd - x.pitch), 0, 0, 0;
  const double sec2 = 1.0 / (std::cos(roll) * std::cos(roll));
  d_yaw = dt * (g / v) * sec2 * d_roll;
  d_yaw(3) += dt * wrap_angle(u.yaw_cmd - x.yaw);
  d_speed = -dt * g * std::cos(pitch) * d_pitch;
  d_speed(4) += dt * u.throttle;
  d_speed(5) += -dt * v;

  const Vec3 dir(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
  const Vec3 ddir_pitch(-std::sin(pitch) * std::cos(yaw), -std::sin(pitch) * std::sin(yaw),
                        std::cos(pitch));
  const Vec3 ddir_yaw(-std::cos(pitch) * std::sin(yaw), std::cos(pitch) * std::cos(yaw), 0.0);

  Eigen::Matrix<double, 9, 6> j;
  const auto kk = k.as_array();
  for (int c = 0; c < 6; ++c) {
    const Vec3 dvel = d_speed(c) * dir + vnew * (d_pitch(c) * ddir_pitch + d_yaw(c) * ddir_yaw);
    j.block<3, 1>(0, c) = w.position * dt * dvel;
    j(3, c) = w.angle * d_pitch(c);
    j(4, c) = w.angle * d_yaw(c);
    j(5, c) = w.angle * d_roll(c);
    j.block<3, 1>(6, c) = w.velocity * dvel;
    j.col(c) *= kk[c];
  }
  return j;
}

}  // namespace

TEST(Dataset, FromTrajectoryPairsConsecutiveStates) {
  const auto& t = excitation();
  const auto d = dataset_from_trajectory(t);
  ASSERT_EQ(d.transitions.size(), t.controls.size());
  EXPECT_EQ(d.dt, t.dt);
  EXPECT_EQ(d.transitions[7].current, t.states[7]);
  EXPECT_EQ(d.transitions[7].next, t.states[8]);
  EXPECT_EQ(d.transitions[7].control, t.controls[7]);
}

TEST(Residual, ZeroOnModelData) {
  const auto d = dataset_from_trajectory(excitation());
  EXPECT_LT(residual_sse(DynParams::reference(), d), 1e-20);
  EXPECT_GT(residual_sse(doubled(DynParams::reference()), d), 1.0);
}

TEST(Residual, WeightsAndAngleWrap) {
  Transition t;
  t.current = level_state(Vec3::Zero(), kPi - 0.001, 8);
  t.control = Control{0.8, 0, 0, kPi - 0.001};
  t.next = step(DynParams::reference(), t.current, t.control);
  t.next.position += Vec3(0.1, 0, 0);
  t.next.velocity += Vec3(0, 0.2, 0);
  t.next.yaw = wrap_angle(t.next.yaw + 0.01);
  const auto r = transition_residual(DynParams::reference(), t, 0.05);
  EXPECT_NEAR(r(0), -0.1, 1e-12);
  EXPECT_NEAR(r(4), -0.1, 1e-9);  // wrapped across +-pi, weight 10
  EXPECT_NEAR(r(7), -0.1, 1e-12);  // weight 0.5
}

TEST(Jacobian, MatchesChainRule) {
  const auto full = dataset_from_trajectory(excitation());
  StateActionDataset d;
  d.dt = full.dt;
  d.transitions.assign(full.transitions.begin(), full.transitions.begin() + 60);
  const ResidualWeights w;
  for (const DynParams& k : {DynParams::reference(), DynParams{2.5, 1.7, 4.0, 1.1, 10.0, 1.6}}) {
    const Eigen::MatrixXd fd = residual_jacobian_log(k, d, 1e-6, w);
    ASSERT_EQ(fd.rows(), 9 * 60);
    double worst = 0.0;
    for (int i = 0; i < 60; ++i) {
      const auto a = analytic_jacobian(k, d.transitions[i], d.dt, w);
      worst = std::max(worst, (fd.block<9, 6>(9 * i, 0) - a).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(Fit, NoiselessRecoveryFromDoubledGuess) {
  const auto d = dataset_from_trajectory(excitation());
  ASSERT_EQ(d.transitions.size(), 500u);
  const auto r = fit_params(d, doubled(DynParams::reference()));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(max_relative_error(r.params, DynParams::reference()), 1e-3);
  EXPECT_LT(r.sse, 1e-12);
}

TEST(Fit, NoisyRecoveryWithinFivePercent) {
  const auto noisy = add_state_noise(excitation(), 0.01, 9);
  const auto r = fit_params(dataset_from_trajectory(noisy), doubled(DynParams::reference()));
  EXPECT_LT(max_relative_error(r.params, DynParams::reference()), 0.05);
  for (double s : r.stderr_) {
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GT(s, 0.0);
  }
}

TEST(Fit, SseHistoryNonIncreasing) {
  const auto noisy = add_state_noise(excitation(), 0.01, 3);
  const auto r = fit_params(dataset_from_trajectory(noisy), DynParams{6, 0.5, 9, 0.4, 30, 3});
  ASSERT_FALSE(r.sse_history.empty());
  for (std::size_t i = 1; i < r.sse_history.size(); ++i) {
    EXPECT_LE(r.sse_history[i], r.sse_history[i - 1]);
  }
  EXPECT_DOUBLE_EQ(r.sse_history.back(), r.sse);
}

TEST(Fit, InvariantToTransitionOrder) {
  auto d = dataset_from_trajectory(add_state_noise(excitation(), 0.01, 4));
  const auto a = fit_params(d, doubled(DynParams::reference()));
  std::mt19937_64 rng(8);
  std::shuffle(d.transitions.begin(), d.transitions.end(), rng);
  const auto b = fit_params(d, doubled(DynParams::reference()));
  const auto pa = a.params.as_array(), pb = b.params.as_array();
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-8 * pa[i]);
}

TEST(Fit, Errors) {
  EXPECT_THROW(fit_params(StateActionDataset{}, DynParams{}), EmptyDataset);
  const auto d = dataset_from_trajectory(excitation());
  EXPECT_THROW(fit_params(d, DynParams{3, 2, 3, 0, 12, 1.2}), InvalidArgument);
  auto bad = d;
  bad.transitions[3].next.position.x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit_params(bad, DynParams{}), NonFiniteResidual);
}

TEST(Fit, JsonShape) {
  const auto r = fit_params(dataset_from_trajectory(excitation()), doubled(DynParams::reference()));
  const auto j = nlohmann::json::parse(fit_result_json(r));
  for (const char* name : DynParams::names()) EXPECT_TRUE(j["params"].contains(name));
  EXPECT_EQ(j["stderr"].size(), 6u);
  EXPECT_TRUE(j["converged"].get<bool>());
}

TEST(Identifiability, ExcitationIsWellConditioned) {
  const Eigen::MatrixXd h =
      gauss_newton_hessian(DynParams::reference(), dataset_from_trajectory(excitation()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const auto s = svd.singularValues();
  EXPECT_GT(s(5), 0.0);
  EXPECT_LT(s(0) / s(5), 1e8);
}

TEST(Excitation, StaysInsideEnvelope) {
  const auto& t = excitation();
  ASSERT_EQ(t.controls.size(), 500u);
  for (const State& s : t.states) EXPECT_TRUE(check_envelope(AirframeConfig{}, s).empty());
  for (std::size_t i = 10; i < t.controls.size(); i += 10) {
    EXPECT_EQ(t.controls[i], t.controls[i + 1 < t.controls.size() ? i + 1 : i]);
  }
}

TEST(Excitation, DeterministicPerSeed) {
  const State s0 = level_state(Vec3(-10, 0, 2.5), 0, 8);
  ExcitationOptions o;
  o.transitions = 100;
  const auto a = generate_excitation(DynParams{}, s0, 5, o);
  const auto b = generate_excitation(DynParams{}, s0, 5, o);
  const auto c = generate_excitation(DynParams{}, s0, 6, o);
  EXPECT_EQ(a.states, b.states);
  EXPECT_NE(a.states, c.states);
}

TEST(StateNoise, MomentsMatchSigma) {
  const auto& t = excitation();
  const auto n = add_state_noise(t, 0.01, 2);
  double sum = 0, sum2 = 0;
  int count = 0;
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    const auto a = t.states[i].as_array(), b = n.states[i].as_array();
    for (int j = 0; j < 9; ++j) {
      sum += b[j] - a[j];
      sum2 += (b[j] - a[j]) * (b[j] - a[j]);
      ++count;
    }
  }
  EXPECT_NEAR(sum / count, 0.0, 0.001);
  EXPECT_NEAR(std::sqrt(sum2 / count), 0.01, 0.0005);
}

// Pose pipeline ------------------------------------------------------------

namespace {

std::vector<Pose> cubic_poses(double dt, int n) {
  std::vector<Pose> p;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    p.push_back(Pose{Vec3(t * t * t, 2 * t, 0.5 * t * t * t), 0, 0, 0});
  }
  return p;
}

std::vector<Pose> poses_of(const Trajectory& t) {
  std::vector<Pose> p;
  for (const State& s : t.states) p.push_back(s.pose());
  return p;
}

}  // namespace

TEST(Differentiate, CentralDifferenceIsSecondOrder) {
  auto interior_error = [](double dt) {
    const auto p = cubic_poses(dt, 21);
    const auto v = differentiate_poses(p, dt);
    const double t = 10 * dt;
    return (v[10] - Vec3(3 * t * t, 2, 1.5 * t * t)).norm();
  };
  const double e1 = interior_error(0.1), e2 = interior_error(0.05);
  // d/dt t^3 by central difference overshoots by exactly dt^2.
  EXPECT_NEAR(e1, std::sqrt(1.25) * 0.01, 1e-10);
  EXPECT_NEAR(e1 / e2, 4.0, 1e-6);
}

TEST(Differentiate, ExactOnLinearMotion) {
  std::vector<Pose> p;
  for (int i = 0; i < 6; ++i) p.push_back(Pose{Vec3(8 * 0.05 * i, -1, 2), 0, 0, 0});
  for (const Vec3& v : differentiate_poses(p, 0.05)) EXPECT_LT((v - Vec3(8, 0, 0)).norm(), 1e-12);
  EXPECT_THROW(differentiate_poses(std::span<const Pose>(p.data(), 2), 0.05), TooFewSamples);
}

TEST(Outliers, TeleportRejectedSmoothKept) {
  auto p = poses_of(excitation());
  const auto clean = filter_outliers(p, 0.05);
  EXPECT_TRUE(clean.rejected.empty());
  EXPECT_EQ(clean.kept.size(), p.size());
  p[100].position += Vec3(3, -2, 1);
  p[300].position += Vec3(0, 10, 0);
  const auto r = filter_outliers(p, 0.05);
  EXPECT_EQ(r.rejected, (std::vector<std::size_t>{100, 300}));
  EXPECT_EQ(r.kept.size(), p.size() - 2);
}

TEST(Outliers, EndpointsAlwaysKept) {
  auto p = poses_of(excitation());
  p.front().position += Vec3(50, 0, 0);
  p.back().position += Vec3(50, 0, 0);
  const auto r = filter_outliers(p, 0.05);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_THROW(filter_outliers(std::span<const Pose>(p.data(), 4), 0.05), TooFewSamples);
}

TEST(Outliers, SingleFastSegmentIsNotAnOutlier) {
  // A step change in position affects one segment only; neither endpoint
  // sees two implausible neighbours.
  auto p = cubic_poses(0.05, 30);
  for (std::size_t i = 15; i < p.size(); ++i) p[i].position += Vec3(5, 0, 0);
  EXPECT_TRUE(filter_outliers(p, 0.05).rejected.empty());
}

TEST(PosePipeline, DropsTransitionsTouchingOutliers) {
  const auto& t = excitation();
  auto p = poses_of(t);
  p[200].position += Vec3(4, 4, 0);
  const auto d = dataset_from_poses(p, t.controls, t.dt);
  EXPECT_EQ(d.transitions.size(), t.controls.size() - 2);
  for (const auto& tr : d.transitions) {
    for (double x : tr.current.as_array()) EXPECT_TRUE(std::isfinite(x));
  }
  // Neighbours of the bridged sample use the interpolated position.
  const Vec3 expected_v199 = (0.5 * (p[199].position + p[201].position) - p[198].position) / (2 * t.dt);
  EXPECT_LT((d.transitions[198].next.velocity - expected_v199).norm(), 1e-9);
  EXPECT_THROW(dataset_from_poses(p, std::span<const Control>(t.controls.data(), 10), t.dt),
               InvalidArgument);
}

TEST(PosePipeline, FitFromPosesIsClose) {
  const auto& t = excitation();
  auto p = poses_of(t);
  p[150].position += Vec3(0, 0, 6);
  const auto d = dataset_from_poses(p, t.controls, t.dt);
  const auto r = fit_params(d, doubled(DynParams::reference()));
  // Differentiated velocities lag the model's by half a step, so recovery
  // is approximate.
  EXPECT_LT(max_relative_error(r.params, DynParams::reference()), 0.5);
}
