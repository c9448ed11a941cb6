#include <benchmark/benchmark.h>

#include "lapcomplete/pipeline.hpp"

namespace {

using namespace lapcomplete;

PointCloud random_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                rng.uniform(-0.5, 0.5)});
    return cloud;
}

// one training step's worth of work for a single sample at desk scale
void BM_ForwardBackward(benchmark::State& state) {
    RunConfig config;
    CompletionModel model = CompletionModel::create(config);
    const PointCloud input = random_cloud(static_cast<int>(config.n_input), 1);
    const PointCloud gt = random_cloud(static_cast<int>(config.gt_size), 2);
    for (auto _ : state) {
        Tape tape;
        ForwardOptions options;
        options.training = true;
        ForwardPass pass = run_forward(tape, model, input, options);
        LossTerms terms = compute_losses(tape, model, pass, gt, 3.0);
        benchmark::DoNotOptimize(tape.backward(terms.total));
    }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_EvalForward(benchmark::State& state) {
    RunConfig config;
    CompletionModel model = CompletionModel::create(config);
    const PointCloud input = random_cloud(static_cast<int>(config.n_input), 1);
    for (auto _ : state) {
        Tape tape;
        ForwardPass pass = run_forward(tape, model, input);
        benchmark::DoNotOptimize(pass.deformed.values());
    }
}
BENCHMARK(BM_EvalForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
