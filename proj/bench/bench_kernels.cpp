#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "wingkit/estimation.hpp"
#include "wingkit/harness.hpp"
#include "wingkit/percept.hpp"
#include "wingkit/sysid.hpp"

using namespace wingkit;

namespace {

const StateActionDataset& dataset() {
  static const StateActionDataset d = dataset_from_trajectory(add_state_noise(
      generate_excitation(DynParams{}, level_state(Vec3(-10, 0, 2.5), 0.0, 8.0), 1,
                          ExcitationOptions{.transitions = 4000}),
      0.01, 1));
  return d;
}

Frame random_frame(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Frame f(w, h);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng());
  return f;
}

template <void (*Kernel)(const DynParams&, const StateActionDataset&, std::span<double>,
                         const ResidualWeights&)>
void BM_Residuals(benchmark::State& state) {
  const auto& d = dataset();
  std::vector<double> out(9 * d.transitions.size());
  for (auto _ : state) {
    Kernel(DynParams{}, d, out, ResidualWeights{});
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.transitions.size()));
}

template <double (*Kernel)(const Frame&, const Frame&)>
void BM_Ssim(benchmark::State& state) {
  const int w = static_cast<int>(state.range(0));
  const Frame a = random_frame(w, w * 3 / 4, 1), b = random_frame(w, w * 3 / 4, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
}

template <Frame (*Kernel)(const RenderConfig&, const Pose&)>
void BM_Background(benchmark::State& state) {
  RenderConfig cfg;
  cfg.background_seed = 5;
  const Pose cam{Vec3(0, 0, 2), 0.05, 0.3, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(cfg, cam));
}

std::vector<Scenario> trial_batch() {
  std::vector<Scenario> s;
  for (std::uint64_t i = 0; i < 8; ++i) s.push_back(make_tracking_scenario(Maneuver::LeftSDescent, i));
  return s;
}

void BM_TrialsSerial(benchmark::State& state) {
  const auto s = trial_batch();
  for (auto _ : state) benchmark::DoNotOptimize(run_tracking_trials_serial(s, vision_policy(), DynParams{}));
}

void BM_TrialsParallel(benchmark::State& state) {
  const auto s = trial_batch();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_tracking_trials_parallel(s, vision_policy(), DynParams{}));
  }
}

}  // namespace

BENCHMARK(BM_Residuals<residuals_serial>)->Name("residuals/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Residuals<residuals_parallel>)->Name("residuals/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Ssim<ssim_serial>)->Name("ssim/serial")->Arg(160)->Arg(640)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Ssim<ssim_parallel>)->Name("ssim/parallel")->Arg(160)->Arg(640)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Background<render_background_serial>)->Name("background/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Background<render_background_parallel>)->Name("background/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrialsSerial)->Name("trials/serial")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TrialsParallel)->Name("trials/parallel")->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
