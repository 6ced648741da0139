#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "wingkit/error.hpp"
#include "wingkit/estimation.hpp"

using namespace wingkit;

namespace {

Frame textured(int w, int h, std::uint64_t seed) {
  Frame f(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& b : f.pixels) b = static_cast<std::uint8_t>(px(rng));
  return f;
}

Frame inverted(const Frame& f) {
  Frame out = f;
  for (auto& b : out.pixels) b = static_cast<std::uint8_t>(255 - b);
  return out;
}

// Whole-window SSIM written directly from the definition over luma.
double reference_block_ssim(const Frame& a, const Frame& b, int u0, int v0, int bw, int bh) {
  auto y = [](const Frame& f, int u, int v) {
    const Rgb c = f.at(u, v);
    return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  };
  std::vector<double> xa, xb;
  for (int v = v0; v < v0 + bh; ++v)
    for (int u = u0; u < u0 + bw; ++u) {
      xa.push_back(y(a, u, v));
      xb.push_back(y(b, u, v));
    }
  const double n = static_cast<double>(xa.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    ma += xa[i] / n;
    mb += xb[i] / n;
  }
  double va = 0, vb = 0, c = 0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    va += (xa[i] - ma) * (xa[i] - ma) / n;
    vb += (xb[i] - mb) * (xb[i] - mb) / n;
    c += (xa[i] - ma) * (xb[i] - mb) / n;
  }
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  return (2 * ma * mb + c1) * (2 * c + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace

// Marker and estimator ------------------------------------------------------

TEST(Marker, CornersAndNormal) {
  const MarkerConfig m;
  EXPECT_LT((m.normal() - Vec3(-1, 0, 0)).norm(), 1e-12);
  for (const Vec3& c : m.corners()) {
    EXPECT_NEAR(c.x(), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(c.y()), 0.4, 1e-12);
    EXPECT_NEAR(std::abs(c.z()), 0.4, 1e-12);
  }
}

TEST(Marker, Visibility) {
  const MarkerConfig m;
  const CameraIntrinsics k;
  EXPECT_TRUE(marker_visible(Pose{Vec3(-5, 0, 0), 0, 0, 0}, k, m));
  EXPECT_FALSE(marker_visible(Pose{Vec3(-13, 0, 0), 0, 0, 0}, k, m));      // beyond range
  EXPECT_FALSE(marker_visible(Pose{Vec3(5, 0, 0), 0, kPi, 0}, k, m));      // behind the marker
  EXPECT_FALSE(marker_visible(Pose{Vec3(-5, 0, 0), 0, kPi / 2, 0}, k, m));  // looking away
  EXPECT_FALSE(marker_visible(Pose{Vec3(-0.5, 0, 0), 0, 0, 0}, k, m));     // corners off-image
  // Oblique beyond the 60 degree view cone.
  const Vec3 oblique(-2 * std::cos(1.2), 2 * std::sin(1.2), 0);
  EXPECT_FALSE(marker_visible(Pose{oblique, 0, std::atan2(-oblique.y(), -oblique.x()), 0}, k, m));
}

TEST(Estimator, MarkerNoiseScalesWithRange) {
  const MarkerConfig m;
  const EstimatorNoiseModel noise{0.1, 0.05, 0.05, 0.05, 7};
  const Pose truth{Vec3(-4, 1, 0.5), 0.1, 0.2, -0.1};
  const auto at_zero = simulate_marker_estimate(truth, m, noise, 0.0);
  EXPECT_EQ(at_zero.source, EstimateSource::Marker);
  EXPECT_LT((at_zero.pose.position - truth.position).norm(), 1e-15);
  EXPECT_NEAR(at_zero.pose.yaw, truth.yaw, 1e-15);

  auto rms = [&](double range) {
    Engine rng(3);
    double s = 0;
    for (int i = 0; i < 4000; ++i) {
      s += (simulate_marker_estimate(truth, m, noise, range, rng).pose.position - truth.position)
               .squaredNorm();
    }
    return std::sqrt(s / (3 * 4000));
  };
  EXPECT_NEAR(rms(12.0), 0.1, 0.005);
  EXPECT_NEAR(rms(6.0), 0.05, 0.0025);
  EXPECT_THROW(simulate_marker_estimate(truth, m, noise, 12.5), NotVisible);
  EXPECT_THROW(simulate_marker_estimate(truth, m, noise, -1.0), NotVisible);
}

TEST(Estimator, DeterministicForSeed) {
  const auto noise = EstimatorNoiseModel::learned_fallback(42);
  const Pose truth{Vec3(1, 2, 3), 0, 0.5, 0};
  const auto a = simulate_fallback_estimate(truth, noise);
  const auto b = simulate_fallback_estimate(truth, noise);
  EXPECT_EQ(a.pose.position, b.pose.position);
  EXPECT_EQ(a.pose.yaw, b.pose.yaw);
  EXPECT_EQ(a.source, EstimateSource::Fallback);
}

TEST(Estimator, SigmaInversions) {
  // Chi(3) mean 2*sqrt(2/pi) sigma; half-normal mean sqrt(2/pi) sigma.
  EXPECT_NEAR(EstimatorNoiseModel::sigma_for_mean_norm3(0.42) * 2 * std::sqrt(2 / kPi), 0.42, 1e-15);
  EXPECT_NEAR(EstimatorNoiseModel::sigma_for_mean_abs(0.5) * std::sqrt(2 / kPi), 0.5, 1e-15);
}

TEST(Estimator, FallbackCalibration) {
  const auto noise = EstimatorNoiseModel::learned_fallback(0);
  Engine rng(2024);
  const Pose truth{Vec3(2, -1, 1.5), 0.05, 0.3, -0.1};
  double pos = 0, yaw = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto e = simulate_fallback_estimate(truth, noise, rng);
    pos += (e.pose.position - truth.position).norm();
    yaw += std::abs(wrap_angle(e.pose.yaw - truth.yaw));
  }
  EXPECT_NEAR(pos / n, 0.42, 0.42 * 0.03);
  EXPECT_NEAR(yaw / n * 180 / kPi, 2.37, 2.37 * 0.03);
}

TEST(Estimator, HybridPicksBranch) {
  const MarkerConfig m;
  const CameraIntrinsics k;
  const auto noise = EstimatorNoiseModel::learned_fallback(1);
  EXPECT_EQ(hybrid_estimate(Pose{Vec3(-5, 0, 0), 0, 0, 0}, k, m, noise).source, EstimateSource::Marker);
  EXPECT_EQ(hybrid_estimate(Pose{Vec3(-5, 0, 0), 0, kPi / 2, 0}, k, m, noise).source,
            EstimateSource::Fallback);
}

// Angle codes ---------------------------------------------------------------

TEST(AngleCode, RoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pitch(-kPi / 2 + 1e-3, kPi / 2 - 1e-3), a(-kPi, kPi);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double p = pitch(rng), y = a(rng), r = a(rng);
    const auto d = decode_angles(encode_angles(p, y, r));
    worst = std::max({worst, std::abs(d.pitch - p), std::abs(wrap_angle(d.yaw - y)),
                      std::abs(wrap_angle(d.roll - r))});
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(AngleCode, ScaleInvariantAndDegenerate) {
  auto code = encode_angles(0.3, -2.0, 1.0);
  for (double& c : code) c *= 3.0;
  const auto d = decode_angles(code);
  EXPECT_NEAR(d.yaw, -2.0, 1e-12);
  AngleCode bad = encode_angles(0.1, 0.2, 0.3);
  bad[4] = 1e-8;
  bad[5] = -1e-8;
  EXPECT_THROW(decode_angles(bad), DegeneratePair);
}

// SSIM ----------------------------------------------------------------------

TEST(Ssim, IdenticalIsOne) {
  const Frame f = textured(160, 120, 1);
  EXPECT_NEAR(ssim(f, f), 1.0, 1e-12);
  const Frame flat(32, 32);
  EXPECT_NEAR(ssim(flat, flat), 1.0, 1e-12);
}

TEST(Ssim, SymmetricAndBounded) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Frame a = textured(40, 24, s), b = textured(40, 24, s + 100);
    const double ab = ssim(a, b);
    EXPECT_NEAR(ab, ssim(b, a), 1e-12);
    EXPECT_LE(ab, 1.0);
    EXPECT_GE(ab, -1.0);
  }
}

TEST(Ssim, MatchesBlockDefinition) {
  const Frame a = textured(24, 16, 3);
  Frame b = a;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 20);
  for (auto& p : b.pixels) p = static_cast<std::uint8_t>(std::clamp(p + n(rng), 0.0, 255.0));
  double expected = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) expected += reference_block_ssim(a, b, 8 * c, 8 * r, 8, 8) / 6;
  EXPECT_NEAR(ssim(a, b), expected, 1e-12);
}

TEST(Ssim, DegradedFrameDropsBelowThreshold) {
  const Frame a = textured(160, 120, 5);
  EXPECT_LT(ssim(a, inverted(a)), 0.7);
  EXPECT_LT(ssim(a, textured(160, 120, 6)), 0.7);
}

TEST(Ssim, SmallFrameIsOneBlock) {
  const Frame a = textured(5, 3, 7), b = textured(5, 3, 8);
  EXPECT_NEAR(ssim(a, b), reference_block_ssim(a, b, 0, 0, 5, 3), 1e-12);
}

TEST(Ssim, DimensionMismatch) {
  EXPECT_THROW(ssim(Frame(8, 8), Frame(8, 9)), DimensionMismatch);
  EXPECT_THROW(ssim(Frame(), Frame()), DimensionMismatch);
}

// Safety monitor ------------------------------------------------------------

TEST(Monitor, FlagsOnFifthConsecutiveLow) {
  QualityMonitor m;
  for (int i = 1; i <= 4; ++i) {
    const auto u = monitor_update(m, 0.5);
    EXPECT_FALSE(u.flag_raised);
    m = u.monitor;
  }
  const auto fifth = monitor_update(m, 0.5);
  EXPECT_TRUE(fifth.flag_raised);
  EXPECT_TRUE(fifth.monitor.flagged);
  const auto sixth = monitor_update(fifth.monitor, 0.5);
  EXPECT_FALSE(sixth.flag_raised);
}

TEST(Monitor, ResetsOnGoodFrame) {
  QualityMonitor m;
  for (double s : {0.1, 0.2, 0.3, 0.4, 0.7}) m = monitor_update(m, s).monitor;
  EXPECT_EQ(m.consecutive_low, 0);
  EXPECT_FALSE(m.flagged);
  // Exactly at threshold counts as good.
  for (int i = 0; i < 10; ++i) EXPECT_FALSE(monitor_update(m, 0.7).flag_raised);
}

TEST(Monitor, MatchesReferenceFold) {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution low(0.6);
  std::uniform_real_distribution<double> below(0.0, 0.6999), above(0.7, 1.0);
  for (int seq = 0; seq < 2000; ++seq) {
    QualityMonitor m;
    int run = 0;
    for (int i = 0; i < 40; ++i) {
      const double s = low(rng) ? below(rng) : above(rng);
      run = s < 0.7 ? run + 1 : 0;
      const auto u = monitor_update(m, s);
      ASSERT_EQ(u.flag_raised, run == 5) << "seq " << seq << " frame " << i;
      m = u.monitor;
    }
  }
}

TEST(Monitor, EventJson) {
  std::ostringstream out;
  write_monitor_event(out, 1.25, 0.42, true);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["t"].get<double>(), 1.25);
  EXPECT_EQ(j["ssim"].get<double>(), 0.42);
  EXPECT_TRUE(j["flag"].get<bool>());
}
