#include "pcw/constants.hpp"
#include "pcw/dispersion.hpp"
#include "pcw/pwe.hpp"

#include <benchmark/benchmark.h>

using namespace pcw;

namespace {

constexpr double kA = 256e-9;

void BM_BulkSolve(benchmark::State& state)
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.286, 2.7));
    const auto basis = make_basis(cell, static_cast<int>(state.range(0)));
    SolverOptions opt;
    opt.n_bands = 4;
    const std::vector<Vec2> k{Vec2{0.4 * kPi / kA, 0.1 * kPi / kA}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_bands(cell, k, basis, opt));
    }
    state.counters["basis"] = static_cast<double>(basis.size());
}
BENCHMARK(BM_BulkSolve)->Arg(5)->Arg(9)->Arg(14)->Unit(benchmark::kMillisecond);

// one k-point of the W1 supercell, per mirror sector setting
void BM_W1Solve(benchmark::State& state)
{
    const auto w1 = make_w1_supercell(CrystalGeometry::from_ratio(kA, 0.286, 2.7), 11);
    const auto basis = make_basis(w1, static_cast<int>(state.range(0)));
    SolverOptions opt;
    opt.n_bands = 16;
    opt.sector = state.range(1) != 0 ? MirrorSector::even : MirrorSector::both;
    const std::vector<Vec2> k{Vec2{0.9 * kPi / kA, 0.0}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_bands(w1, k, basis, opt));
    }
    state.counters["basis"] = static_cast<double>(basis.size());
}
BENCHMARK(BM_W1Solve)->Args({5, 1})->Args({7, 1})->Args({7, 0})->Unit(benchmark::kMillisecond);

void BM_ModeVolume(benchmark::State& state)
{
    const auto geom = CrystalGeometry::from_ratio(kA, 0.286, 2.7);
    const auto w1 = make_w1_supercell(geom, 11);
    SolverOptions opt;
    opt.n_bands = 12;
    opt.sector = MirrorSector::even;
    const auto bs = solve_bands(w1, {Vec2{0.9 * kPi / kA, 0.0}}, make_basis(w1, 5), opt);
    const int grid = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(effective_mode_volume(reconstruct_field(bs, 0, 0, grid), geom));
    }
}
BENCHMARK(BM_ModeVolume)->Arg(24)->Arg(48)->Unit(benchmark::kMillisecond);

} // namespace
