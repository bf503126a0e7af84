// Serial reference versus OpenMP kernels on desk-sized and larger layers.

#include "fedmef/kernels/conv.hpp"
#include "fedmef/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace fedmef;
using namespace fedmef::kernels;

namespace {

ConvGeometry geometry(std::size_t batch, std::size_t cin, std::size_t cout, std::size_t extent) {
    ConvGeometry g;
    g.batch = batch;
    g.in_channels = cin;
    g.in_h = g.in_w = extent;
    g.out_channels = cout;
    g.kernel = 3;
    g.stride = 1;
    g.padding = 1;
    g.out_h = g.out_w = extent;
    return g;
}

std::vector<float> fill(std::size_t n, std::uint64_t seed, double zero_fraction) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto &x : v)
        x = rng.uniform() < zero_fraction ? 0.0f : static_cast<float>(rng.normal());
    return v;
}

// Args: batch, in channels, out channels, extent, weight sparsity in percent.
template <Backend B> void conv_forward_bench(benchmark::State &state) {
    const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                            static_cast<std::size_t>(state.range(2)), static_cast<std::size_t>(state.range(3)));
    const auto x = fill(g.input_size(), 1, 0.0);
    const auto w = fill(g.weight_size(), 2, static_cast<double>(state.range(4)) / 100.0);
    std::vector<float> y(g.output_size());
    for (auto _ : state) {
        conv_forward<float>(B, g, x, w, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.output_size()));
}

template <Backend B> void conv_backward_input_bench(benchmark::State &state) {
    const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                            static_cast<std::size_t>(state.range(2)), static_cast<std::size_t>(state.range(3)));
    const auto dy = fill(g.output_size(), 3, 0.0);
    const auto w = fill(g.weight_size(), 4, static_cast<double>(state.range(4)) / 100.0);
    std::vector<float> dx(g.input_size());
    for (auto _ : state) {
        conv_backward_input<float>(B, g, dy, w, dx);
        benchmark::DoNotOptimize(dx.data());
    }
}

template <Backend B> void conv_backward_weight_bench(benchmark::State &state) {
    const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                            static_cast<std::size_t>(state.range(2)), static_cast<std::size_t>(state.range(3)));
    const auto dy = fill(g.output_size(), 5, 0.0);
    const auto x = fill(g.input_size(), 6, 0.0);
    std::vector<float> dw(g.weight_size());
    for (auto _ : state) {
        conv_backward_weight<float>(B, g, dy, x, dw);
        benchmark::DoNotOptimize(dw.data());
    }
}

template <Backend B> void linear_forward_bench(benchmark::State &state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto in = static_cast<std::size_t>(state.range(1));
    const auto out = static_cast<std::size_t>(state.range(2));
    const auto x = fill(batch * in, 7, 0.0);
    const auto w = fill(in * out, 8, 0.9);
    const auto b = fill(out, 9, 0.0);
    std::vector<float> y(batch * out);
    for (auto _ : state) {
        linear_forward<float>(B, batch, in, out, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

void conv_args(benchmark::internal::Benchmark *b) {
    b->Args({16, 3, 10, 16, 90})->Args({16, 10, 20, 8, 90})->Args({64, 64, 64, 32, 90})->Args({64, 64, 64, 32, 0});
}

} // namespace

BENCHMARK(conv_forward_bench<Backend::Serial>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_forward_bench<Backend::OpenMP>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward_input_bench<Backend::Serial>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward_input_bench<Backend::OpenMP>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward_weight_bench<Backend::Serial>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(conv_backward_weight_bench<Backend::OpenMP>)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(linear_forward_bench<Backend::Serial>)->Args({64, 512, 10})->Args({64, 4096, 256});
BENCHMARK(linear_forward_bench<Backend::OpenMP>)->Args({64, 512, 10})->Args({64, 4096, 256});

BENCHMARK_MAIN();
