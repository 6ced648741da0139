#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wingkit/dynamics.hpp"

namespace wingkit {

struct Transition {
  State current;
  Control control;
  State next;
};

struct StateActionDataset {
  double dt = kDefaultDt;
  std::vector<Transition> transitions;
};

StateActionDataset dataset_from_trajectory(const Trajectory& traj);

// Per-component residual weights: position, angle, velocity.
struct ResidualWeights {
  double position = 1.0;   // 1/m
  double angle = 10.0;     // 1/rad
  double velocity = 0.5;   // 1/(m/s)
};

inline constexpr int kResidualsPerTransition = 9;

// Weighted residual f_K(x_t, u_t) - x_{t+1}; angle components are wrapped.
Eigen::Matrix<double, 9, 1> transition_residual(const DynParams& params,
                                                const Transition& t, double dt,
                                                const ResidualWeights& w = {});

// Stacked residual kernels (9 entries per transition). The serial version is
// the reference the OpenMP version is tested against.
void residuals_serial(const DynParams& params, const StateActionDataset& data,
                      std::span<double> out, const ResidualWeights& w = {});
void residuals_parallel(const DynParams& params, const StateActionDataset& data,
                        std::span<double> out, const ResidualWeights& w = {});

double residual_sse(const DynParams& params, const StateActionDataset& data,
                    const ResidualWeights& w = {});

// Central-difference Jacobian of the stacked residual with respect to
// log-parameters; relative step `h`.
Eigen::MatrixXd residual_jacobian_log(const DynParams& params,
                                      const StateActionDataset& data,
                                      double h = 1e-6,
                                      const ResidualWeights& w = {});

// J^T J in log-parameter space.
Eigen::Matrix<double, 6, 6> gauss_newton_hessian(const DynParams& params,
                                                 const StateActionDataset& data,
                                                 const ResidualWeights& w = {});

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-10;
  double fd_step = 1e-6;
  double initial_damping = 1e-3;
  ResidualWeights weights;
};

struct FitResult {
  DynParams params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
  std::array<double, 6> stderr_ = {};
  std::vector<double> sse_history;  // SSE after each accepted step
};

// Levenberg-Marquardt over log-parameters. Throws EmptyDataset,
// NonFiniteResidual, InvalidArgument (non-positive initial guess).
FitResult fit_params(const StateActionDataset& data, const DynParams& initial_guess,
                     const FitOptions& options = {});

std::string fit_result_json(const FitResult& r, int indent = 2);

// Velocity by central differences, one-sided at both ends.
std::vector<Vec3> differentiate_poses(std::span<const Pose> poses, double dt);

struct OutlierFilterResult {
  std::vector<Pose> kept;
  std::vector<std::size_t> rejected;
};

// A sample is rejected when the implied speed to both neighbours exceeds
// 3x the running median implied speed or 25 m/s. First/last always kept.
OutlierFilterResult filter_outliers(std::span<const Pose> poses, double dt);

// Pose-only pipeline: reject outliers, bridge them by interpolation,
// differentiate, and pair with the recorded controls. Transitions touching a
// rejected sample are dropped. controls.size() must be poses.size() - 1.
StateActionDataset dataset_from_poses(std::span<const Pose> poses,
                                      std::span<const Control> controls, double dt);

struct ExcitationOptions {
  int transitions = 500;
  int segment_steps = 10;  // 0.5 s at 20 Hz
  int max_attempts = 400;
  double dt = kDefaultDt;
  AirframeConfig airframe;
  ArenaBox arena;
};

// Piecewise-constant random controls, resampled per segment, keeping only
// segments that stay inside the flight envelope; a dead end redraws the
// previous segment.
Trajectory generate_excitation(const DynParams& params, const State& initial,
                               std::uint64_t seed, const ExcitationOptions& opt = {});

// Adds i.i.d. N(0, sigma^2) to all nine components of every state.
Trajectory add_state_noise(const Trajectory& traj, double sigma, std::uint64_t seed);

}  // namespace wingkit
