#include "pcw/tcspc.hpp"

#include <benchmark/benchmark.h>

using namespace pcw;

namespace {

DecayModel truth(bool bi)
{
    DecayModel m;
    m.kind = bi ? ModelKind::bi : ModelKind::mono;
    m.gamma_fast = bi ? 1.34 : 0.15;
    m.gamma_slow = 0.05;
    m.amp_fast = 100;
    m.amp_slow = bi ? 5 : 0;
    m.background = 1.0;
    return m;
}

void BM_ExpectedCounts(benchmark::State& state)
{
    const auto m = truth(true);
    const HistogramShape shape{};
    for (auto _ : state) {
        benchmark::DoNotOptimize(expected_counts(m, shape));
    }
}
BENCHMARK(BM_ExpectedCounts);

void BM_Fit(benchmark::State& state)
{
    const bool bi = state.range(0) != 0;
    const auto h = synthesize(truth(bi), HistogramShape{}, 50000, 11, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit(h, bi ? ModelKind::bi : ModelKind::mono));
    }
}
BENCHMARK(BM_Fit)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_SelectModel(benchmark::State& state)
{
    const auto h = synthesize(truth(true), HistogramShape{}, 50000, 12, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(select_model(h));
    }
}
BENCHMARK(BM_SelectModel)->Unit(benchmark::kMicrosecond);

} // namespace
