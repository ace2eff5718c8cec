#include <benchmark/benchmark.h>

#include "bvs/retina.hpp"
#include "bvs/stimulus.hpp"

using namespace bvs;

static void BM_GenerateNoise(benchmark::State& state) {
  NoiseSpec spec;
  for (auto _ : state) {
    spec.seed++;
    benchmark::DoNotOptimize(generate_noise(spec));
  }
}
BENCHMARK(BM_GenerateNoise)->Unit(benchmark::kMillisecond);

static void BM_SearchImage(benchmark::State& state) {
  StimulusSpec spec;
  for (auto _ : state) {
    spec.noise.seed++;
    benchmark::DoNotOptimize(make_search_image(spec, std::nullopt));
  }
}
BENCHMARK(BM_SearchImage)->Unit(benchmark::kMillisecond);

static void BM_RetinalTransform(benchmark::State& state) {
  StimulusSpec spec;
  spec.noise.seed = 3;
  const SearchImage img = make_search_image(spec, std::nullopt);
  const FcgSolution fcg = solve_fcg(FcgConfig{});
  const auto interp = state.range(0) ? Interpolation::Bilinear : Interpolation::Nearest;
  for (auto _ : state)
    benchmark::DoNotOptimize(retinal_sample(img.pixels, {300.5, 280.0}, fcg, interp, 0.5));
}
BENCHMARK(BM_RetinalTransform)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
