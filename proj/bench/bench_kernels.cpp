// Parallel kernels against their single-threaded reference versions.
// Run with --benchmark_counters_tabular=true for a compact table.

#include "dewarp/geometry.hpp"
#include "dewarp/losses.hpp"
#include "dewarp/optimizer.hpp"
#include "dewarp/reference.hpp"
#include "dewarp/synth.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace dewarp;

RasterF32 noise(int n, int c, std::uint64_t seed) {
    RasterF32 r(n, n, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : r.data()) v = u(rng);
    return r;
}

ControlGrid warped_grid(int size) {
    ControlGrid g = init_grid(size, size);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.03, 0.03);
    for (double& v : g.offsets) v += u(rng);
    return g;
}

void set_pixels(benchmark::State& state, int n) {
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n);
}

template <bool Parallel>
void BM_GridSample(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const RasterF32 img = noise(n, 3, 1);
    const CoordMap map = expand(warped_grid(31), n, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? grid_sample(img, map) : reference::grid_sample(img, map));
    }
    set_pixels(state, n);
}

template <bool Parallel>
void BM_GaussianBlur(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const RasterF32 img = noise(n, 1, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? gaussian_blur(img, 2.0) : reference::gaussian_blur(img, 2.0));
    }
    set_pixels(state, n);
}

template <bool Parallel>
void BM_GradientMagnitude(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const RasterF32 img = noise(n, 1, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? gradient_magnitude(img) : reference::gradient_magnitude(img));
    }
    set_pixels(state, n);
}

template <bool Parallel>
void BM_LossMargin(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const WarpSample s = generate_sample(9, Regime::Overflow, n);
    const RasterF32 bg = soft_background(s.dm_gt);
    const RasterF32 m = make_margin_gt(s);
    const CoordMap z = expand(warped_grid(31), n, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? loss_margin(z, bg, m) : reference::loss_margin(z, bg, m));
    }
    set_pixels(state, n);
}

template <bool Parallel>
void BM_Expand(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ControlGrid g = warped_grid(31);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? expand(g, n, n) : reference::expand(g, n, n));
    }
    set_pixels(state, n);
}

template <bool Parallel>
void BM_ExpandAdjoint(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ControlGrid g = warped_grid(31);
    VectorField grad(n, n);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    for (double& v : grad.values) v = n01(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Parallel ? expand_adjoint(g, grad) : reference::expand_adjoint(g, grad));
    }
    set_pixels(state, n);
}

#define DEWARP_BENCH_PAIR(fn)                                                             \
    BENCHMARK(fn<false>)->Name(#fn "/reference")->Arg(256)->Arg(432)->Unit(benchmark::kMicrosecond); \
    BENCHMARK(fn<true>)->Name(#fn "/parallel")->Arg(256)->Arg(432)->Unit(benchmark::kMicrosecond)->UseRealTime()

DEWARP_BENCH_PAIR(BM_GridSample);
DEWARP_BENCH_PAIR(BM_GaussianBlur);
DEWARP_BENCH_PAIR(BM_GradientMagnitude);
DEWARP_BENCH_PAIR(BM_LossMargin);
DEWARP_BENCH_PAIR(BM_Expand);
DEWARP_BENCH_PAIR(BM_ExpandAdjoint);

}  // namespace

BENCHMARK_MAIN();
