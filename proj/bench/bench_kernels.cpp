// Serial vs OpenMP kernels: WTA scan over a packed memory and the codec's dense layers.

#include <benchmark/benchmark.h>

#include <vector>

#include "codesam/core.hpp"
#include "codesam/kernels.hpp"
#include "codesam/sam.hpp"

namespace {

using namespace codesam;

SparseMemory random_memory(std::uint32_t k, std::uint32_t m, std::size_t nodes) {
    SparseMemory memory(CodeConfig(k, m, 1));
    Rng rng(1);
    for (std::size_t n = 0; n < nodes; ++n) {
        CompositionalCode code;
        for (std::uint32_t i = 0; i < m; ++i) code.indices.push_back(static_cast<std::uint16_t>(rng.below(k)));
        memory.store(code, {std::to_string(n), "w", "s"});
    }
    return memory;
}

template <ScanMode Mode>
void BM_Retrieve(benchmark::State& state) {
    const auto memory = random_memory(32, 32, static_cast<std::size_t>(state.range(0)));
    CompositionalCode probe;
    for (std::uint32_t i = 0; i < 32; ++i) probe.indices.push_back(static_cast<std::uint16_t>(i));
    const auto query = QueryPattern::full(probe);
    for (auto _ : state) {
        benchmark::DoNotOptimize(memory.retrieve(query, false, Mode));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RetrieveNaive(benchmark::State& state) {
    const auto memory = random_memory(32, 32, static_cast<std::size_t>(state.range(0)));
    CompositionalCode probe;
    for (std::uint32_t i = 0; i < 32; ++i) probe.indices.push_back(static_cast<std::uint16_t>(i));
    const auto query = QueryPattern::full(probe);
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve_naive(memory, query));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Affine(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    std::vector<double> w(n * n), x(n), b(n), y(n);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const kernels::MatrixView view{w.data(), n, n};
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::parallel::affine(view, x, b, y);
        } else {
            kernels::serial::affine(view, x, b, y);
        }
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

}  // namespace

BENCHMARK(BM_RetrieveNaive)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);
BENCHMARK(BM_Retrieve<ScanMode::serial>)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);
BENCHMARK(BM_Retrieve<ScanMode::parallel>)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);
BENCHMARK(BM_Affine<false>)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_Affine<true>)->Arg(256)->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();
