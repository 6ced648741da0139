#include "wingkit/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include "wingkit/error.hpp"
#include "wingkit/rng.hpp"

namespace wingkit {

namespace {

using LogParams = Eigen::Matrix<double, 6, 1>;

LogParams to_log(const DynParams& p) {
  const auto k = p.as_array();
  LogParams z;
  for (int i = 0; i < 6; ++i) z(i) = std::log(k[i]);
  return z;
}

DynParams from_log(const LogParams& z) {
  std::array<double, 6> k{};
  for (int i = 0; i < 6; ++i) k[i] = std::exp(z(i));
  return DynParams::from_array(k);
}

double sum_squares(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

}  // namespace

StateActionDataset dataset_from_trajectory(const Trajectory& traj) {
  StateActionDataset d;
  d.dt = traj.dt;
  d.transitions.reserve(traj.controls.size());
  for (std::size_t i = 0; i < traj.controls.size(); ++i) {
    d.transitions.push_back({traj.states[i], traj.controls[i], traj.states[i + 1]});
  }
  return d;
}

Eigen::Matrix<double, 9, 1> transition_residual(const DynParams& params,
                                                const Transition& t, double dt,
                                                const ResidualWeights& w) {
  const State pred = step(params, t.current, t.control, dt);
  Eigen::Matrix<double, 9, 1> r;
  r.segment<3>(0) = w.position * (pred.position - t.next.position);
  r(3) = w.angle * wrap_angle(pred.pitch - t.next.pitch);
  r(4) = w.angle * wrap_angle(pred.yaw - t.next.yaw);
  r(5) = w.angle * wrap_angle(pred.roll - t.next.roll);
  r.segment<3>(6) = w.velocity * (pred.velocity - t.next.velocity);
  return r;
}

void residuals_serial(const DynParams& params, const StateActionDataset& data,
                      std::span<double> out, const ResidualWeights& w) {
  const std::size_t n = data.transitions.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = transition_residual(params, data.transitions[i], data.dt, w);
    std::copy(r.data(), r.data() + 9, out.begin() + 9 * i);
  }
}

void residuals_parallel(const DynParams& params, const StateActionDataset& data,
                        std::span<double> out, const ResidualWeights& w) {
  const auto n = static_cast<std::ptrdiff_t>(data.transitions.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = transition_residual(params, data.transitions[i], data.dt, w);
    std::copy(r.data(), r.data() + 9, out.begin() + 9 * i);
  }
}

double residual_sse(const DynParams& params, const StateActionDataset& data,
                    const ResidualWeights& w) {
  std::vector<double> r(9 * data.transitions.size());
  residuals_parallel(params, data, r, w);
  return sum_squares(r);
}

Eigen::MatrixXd residual_jacobian_log(const DynParams& params,
                                      const StateActionDataset& data, double h,
                                      const ResidualWeights& w) {
  const std::size_t m = 9 * data.transitions.size();
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), 6);
  const LogParams z = to_log(params);
  std::vector<double> plus(m), minus(m);
  for (int j = 0; j < 6; ++j) {
    LogParams zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    residuals_parallel(from_log(zp), data, plus, w);
    residuals_parallel(from_log(zm), data, minus, w);
    for (std::size_t i = 0; i < m; ++i) {
      jac(static_cast<Eigen::Index>(i), j) = (plus[i] - minus[i]) / (2.0 * h);
    }
  }
  return jac;
}

Eigen::Matrix<double, 6, 6> gauss_newton_hessian(const DynParams& params,
                                                 const StateActionDataset& data,
                                                 const ResidualWeights& w) {
  const Eigen::MatrixXd j = residual_jacobian_log(params, data, 1e-6, w);
  return j.transpose() * j;
}

FitResult fit_params(const StateActionDataset& data, const DynParams& initial_guess,
                     const FitOptions& opt) {
  if (data.transitions.empty()) throw EmptyDataset("no transitions to fit");
  if (!initial_guess.positive()) throw InvalidArgument("initial guess must be positive");

  const std::size_t m = 9 * data.transitions.size();
  std::vector<double> r(m);
  auto evaluate = [&](const LogParams& z) {
    residuals_parallel(from_log(z), data, r, opt.weights);
    const double s = sum_squares(r);
    if (!std::isfinite(s)) throw NonFiniteResidual("residual is not finite");
    return s;
  };

  LogParams z = to_log(initial_guess);
  double sse = evaluate(z);
  double damping = opt.initial_damping;
  FitResult result;
  result.sse_history.push_back(sse);

  Eigen::MatrixXd jac;
  Eigen::VectorXd res;
  bool need_jacobian = true;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (sse == 0.0) {
      result.converged = true;
      break;
    }
    if (need_jacobian) {
      jac = residual_jacobian_log(from_log(z), data, opt.fd_step, opt.weights);
      evaluate(z);
      res = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(m));
      need_jacobian = false;
    }
    const Eigen::Matrix<double, 6, 6> a = jac.transpose() * jac;
    const LogParams g = jac.transpose() * res;
    Eigen::Matrix<double, 6, 6> damped = a;
    for (int i = 0; i < 6; ++i) damped(i, i) += damping * std::max(a(i, i), 1e-12);
    const LogParams delta = damped.ldlt().solve(-g);
    if (!delta.allFinite()) throw NonFiniteResidual("normal equations are singular");

    const LogParams candidate = z + delta;
    double candidate_sse;
    try {
      candidate_sse = evaluate(candidate);
    } catch (const NonFiniteResidual&) {
      candidate_sse = std::numeric_limits<double>::infinity();
    }
    if (candidate_sse < sse) {
      const double rel = (sse - candidate_sse) / sse;
      z = candidate;
      sse = candidate_sse;
      result.sse_history.push_back(sse);
      damping = std::max(damping / 10.0, 1e-12);
      need_jacobian = true;
      if (rel < opt.tolerance || delta.norm() < opt.tolerance) {
        result.converged = true;
        break;
      }
    } else {
      if (delta.norm() < opt.tolerance) {
        result.converged = true;
        break;
      }
      damping *= 10.0;
      if (damping > 1e16) break;
    }
  }

  result.params = from_log(z);
  result.sse = sse;

  // Gauss-Newton covariance, mapped from log space to parameter space.
  const Eigen::MatrixXd j = residual_jacobian_log(result.params, data, opt.fd_step, opt.weights);
  const Eigen::Matrix<double, 6, 6> a = j.transpose() * j;
  const double dof = std::max<double>(1.0, static_cast<double>(m) - 6.0);
  const Eigen::Matrix<double, 6, 6> cov = (sse / dof) * a.fullPivLu().inverse();
  const auto k = result.params.as_array();
  for (int i = 0; i < 6; ++i) {
    result.stderr_[i] = k[i] * std::sqrt(std::max(0.0, cov(i, i)));
  }
  return result;
}

std::string fit_result_json(const FitResult& r, int indent) {
  nlohmann::ordered_json j;
  const auto k = r.params.as_array();
  for (std::size_t i = 0; i < k.size(); ++i) j["params"][DynParams::names()[i]] = k[i];
  j["sse"] = r.sse;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stderr"] = r.stderr_;
  return j.dump(indent);
}

std::vector<Vec3> differentiate_poses(std::span<const Pose> poses, double dt) {
  if (poses.size() < 3) throw TooFewSamples("need at least 3 poses");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const std::size_t n = poses.size();
  std::vector<Vec3> v(n);
  v[0] = (poses[1].position - poses[0].position) / dt;
  v[n - 1] = (poses[n - 1].position - poses[n - 2].position) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    v[i] = (poses[i + 1].position - poses[i - 1].position) / (2.0 * dt);
  }
  return v;
}

OutlierFilterResult filter_outliers(std::span<const Pose> poses, double dt) {
  if (poses.size() < 5) throw TooFewSamples("need at least 5 poses");
  constexpr double kAbsoluteLimit = 25.0;  // m/s
  constexpr double kMedianFactor = 3.0;
  constexpr std::ptrdiff_t kHalfWindow = 5;

  const std::size_t n = poses.size();
  std::vector<double> seg(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    seg[j] = (poses[j + 1].position - poses[j].position).norm() / dt;
  }
  auto running_median = [&](std::ptrdiff_t centre) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, centre - kHalfWindow);
    const std::ptrdiff_t hi =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(seg.size()) - 1, centre + kHalfWindow);
    std::vector<double> w(seg.begin() + lo, seg.begin() + hi + 1);
    auto mid = w.begin() + w.size() / 2;
    std::nth_element(w.begin(), mid, w.end());
    return *mid;
  };
  auto implausible = [&](std::size_t j, double median) {
    return seg[j] > kAbsoluteLimit || seg[j] > kMedianFactor * median;
  };

  OutlierFilterResult out;
  out.kept.push_back(poses[0]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double median = running_median(static_cast<std::ptrdiff_t>(i));
    if (implausible(i - 1, median) && implausible(i, median)) {
      out.rejected.push_back(i);
    } else {
      out.kept.push_back(poses[i]);
    }
  }
  out.kept.push_back(poses[n - 1]);
  return out;
}

StateActionDataset dataset_from_poses(std::span<const Pose> poses,
                                      std::span<const Control> controls, double dt) {
  if (controls.size() + 1 != poses.size()) {
    throw InvalidArgument("need one control per pose transition");
  }
  const auto filtered = filter_outliers(poses, dt);
  std::vector<Pose> bridged(poses.begin(), poses.end());
  std::vector<bool> bad(poses.size(), false);
  for (std::size_t i : filtered.rejected) bad[i] = true;
  for (std::size_t i = 1; i + 1 < poses.size(); ++i) {
    if (!bad[i]) continue;
    std::size_t next = i + 1;
    while (bad[next]) ++next;
    const Pose& a = bridged[i - 1];
    const Pose& b = poses[next];
    const double f = 1.0 / static_cast<double>(next - i + 1);
    bridged[i].position = a.position + f * (b.position - a.position);
    bridged[i].pitch = a.pitch + f * (b.pitch - a.pitch);
    bridged[i].yaw = wrap_angle(a.yaw + f * wrap_angle(b.yaw - a.yaw));
    bridged[i].roll = a.roll + f * (b.roll - a.roll);
  }
  const auto vel = differentiate_poses(bridged, dt);
  auto state_at = [&](std::size_t i) {
    State s;
    s.position = bridged[i].position;
    s.pitch = bridged[i].pitch;
    s.yaw = bridged[i].yaw;
    s.roll = bridged[i].roll;
    s.velocity = vel[i];
    return s;
  };
  StateActionDataset d;
  d.dt = dt;
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    if (bad[i] || bad[i + 1]) continue;
    d.transitions.push_back({state_at(i), controls[i], state_at(i + 1)});
  }
  return d;
}

Trajectory generate_excitation(const DynParams& params, const State& initial,
                               std::uint64_t seed, const ExcitationOptions& opt) {
  Engine rng = make_engine(seed, "sysid.excitation");
  std::uniform_real_distribution<double> throttle(0.0, 1.0);
  std::uniform_real_distribution<double> aileron(-1.0, 1.0);
  std::uniform_real_distribution<double> pitch(-kMaxPitchCmd, kMaxPitchCmd);
  std::uniform_real_distribution<double> heading(-kPi, kPi);

  Trajectory traj;
  traj.dt = opt.dt;
  traj.states.push_back(initial);
  auto segment_ok = [&](const State& start, const Control& u, int steps) {
    State s = start;
    for (int k = 0; k < steps; ++k) {
      s = step(params, s, u, opt.dt);
      if (!check_envelope(opt.airframe, s, opt.arena).empty()) return false;
    }
    return true;
  };

  // Segment start indices; a dead end pops the previous segment and redraws.
  std::vector<std::size_t> segment_starts;
  int backtracks = 0;
  constexpr int kMaxBacktracks = 2000;
  while (static_cast<int>(traj.controls.size()) < opt.transitions) {
    const int steps =
        std::min(opt.segment_steps, opt.transitions - static_cast<int>(traj.controls.size()));
    const State start = traj.states.back();
    Control chosen;
    bool found = false;
    for (int attempt = 0; attempt < opt.max_attempts && !found; ++attempt) {
      Control u{throttle(rng), aileron(rng), pitch(rng), heading(rng)};
      u.yaw_cmd = wrap_angle(u.yaw_cmd);
      if (segment_ok(start, u, steps)) {
        chosen = u;
        found = true;
      }
    }
    if (!found && !segment_starts.empty() && backtracks < kMaxBacktracks) {
      ++backtracks;
      const std::size_t back_to = segment_starts.back();
      segment_starts.pop_back();
      traj.states.resize(back_to + 1);
      traj.controls.resize(back_to);
      continue;
    }
    if (!found) {
      // Recovery: head for the arena centre, wings level, climb-neutral.
      const Vec3 centre = 0.5 * (opt.arena.min + opt.arena.max);
      const Vec3 d = centre - start.position;
      chosen.throttle = 1.0;
      chosen.aileron = std::clamp(params.k_roll_damp * -start.roll / params.k_roll_aileron, -1.0, 1.0);
      chosen.pitch_cmd = std::clamp(0.2 * d.z(), -0.2, 0.2);
      chosen.yaw_cmd = std::atan2(d.y(), d.x());
    }
    segment_starts.push_back(traj.controls.size());
    for (int k = 0; k < steps; ++k) {
      traj.states.push_back(step(params, traj.states.back(), chosen, opt.dt));
      traj.controls.push_back(chosen);
    }
  }
  return traj;
}

Trajectory add_state_noise(const Trajectory& traj, double sigma, std::uint64_t seed) {
  Engine rng = make_engine(seed, "sysid.state_noise");
  std::normal_distribution<double> noise(0.0, sigma);
  Trajectory out = traj;
  for (State& s : out.states) {
    auto x = s.as_array();
    for (double& v : x) v += noise(rng);
    s = State::from_array(x);
  }
  return out;
}

}  // namespace wingkit
