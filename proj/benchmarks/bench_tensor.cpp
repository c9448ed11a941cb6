#include <benchmark/benchmark.h>

#include "lapcomplete/tensor.hpp"

namespace {

using namespace lapcomplete;

Parameter random_param(const std::string& name, Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Parameter p(name, std::move(shape));
    for (double& v : p.value) v = rng.uniform(-1.0, 1.0);
    return p;
}

void BM_MatmulForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Parameter a = random_param("a", {n, 128}, 1);
    Parameter b = random_param("b", {128, 128}, 2);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(tape.matmul(tape.leaf(a), tape.leaf(b)));
    }
}
BENCHMARK(BM_MatmulForward)->Arg(512)->Arg(2048);

void BM_MlpForwardBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Parameter w0 = random_param("w0", {3, 128}, 1);
    Parameter b0 = Parameter("b0", Shape{1, 128});
    Parameter w1 = random_param("w1", {128, 128}, 2);
    Parameter b1 = Parameter("b1", Shape{1, 128});
    Parameter x = random_param("x", {n, 3}, 3);
    for (auto _ : state) {
        Tape tape;
        Tensor h = tape.relu(tape.affine(tape.leaf(x), tape.leaf(w0), tape.leaf(b0)));
        Tensor y = tape.affine(h, tape.leaf(w1), tape.leaf(b1));
        Tensor loss = tape.mean_all(tape.square(y));
        benchmark::DoNotOptimize(tape.backward(loss));
    }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(512)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
