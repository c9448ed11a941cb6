#include <benchmark/benchmark.h>

#include "lapcomplete/geometry.hpp"

namespace {

using namespace lapcomplete;

PointCloud random_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    return cloud;
}

void BM_Fps(benchmark::State& state) {
    const PointCloud cloud = random_cloud(static_cast<int>(state.range(0)), 1);
    const int m = static_cast<int>(state.range(0)) / 8;
    for (auto _ : state) benchmark::DoNotOptimize(fps(cloud, m, 0));
}
BENCHMARK(BM_Fps)->Arg(512)->Arg(2048);

void BM_Knn(benchmark::State& state) {
    const PointCloud cloud = random_cloud(static_cast<int>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(knn(cloud, 8));
}
BENCHMARK(BM_Knn)->Arg(512)->Arg(2048);

void BM_NearestBrute(benchmark::State& state) {
    const PointCloud a = random_cloud(static_cast<int>(state.range(0)), 3);
    const PointCloud b = random_cloud(2048, 4);
    for (auto _ : state) benchmark::DoNotOptimize(nearest_indices_bruteforce(a, b));
}
BENCHMARK(BM_NearestBrute)->Arg(512)->Arg(2048);

void BM_NearestGrid(benchmark::State& state) {
    const PointCloud a = random_cloud(static_cast<int>(state.range(0)), 3);
    const PointCloud b = random_cloud(2048, 4);
    for (auto _ : state) benchmark::DoNotOptimize(nearest_indices_grid(a, b));
}
BENCHMARK(BM_NearestGrid)->Arg(512)->Arg(2048);

void BM_Chamfer(benchmark::State& state) {
    const PointCloud a = random_cloud(static_cast<int>(state.range(0)), 5);
    const PointCloud b = random_cloud(2048, 6);
    for (auto _ : state) benchmark::DoNotOptimize(chamfer_distance(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
