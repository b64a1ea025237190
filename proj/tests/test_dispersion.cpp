#include <doctest.h>

#include "pcw/constants.hpp"
#include "pcw/dispersion.hpp"
#include "pcw/errors.hpp"

#include <algorithm>
#include <cmath>

using namespace pcw;

namespace {

constexpr double kA = 256e-9;

CrystalGeometry reference_geometry()
{
    return CrystalGeometry::from_ratio(kA, 0.286, 2.7);
}

GapWindow reference_gap()
{
    const auto cell = make_bulk_cell(reference_geometry());
    SolverOptions opt;
    opt.n_bands = 3;
    return bulk_gap(solve_bands(cell, high_symmetry_path(cell, 8), make_basis(cell, 7), opt));
}

// Reduced k sampling keeps the suite quick; the acceptance run uses the defaults.
struct W1Fixture {
    GapWindow gap;
    BandStructure bs;
    WaveguideMode mode;
};

const W1Fixture& w1_fixture()
{
    static const W1Fixture f = [] {
        W1Fixture out;
        const auto geom = reference_geometry();
        out.gap = reference_gap();
        const auto w1 = make_w1_supercell(geom, 11);
        SolverOptions opt;
        opt.n_bands = 14;
        opt.sector = MirrorSector::even;
        out.bs = solve_bands(w1, guided_k_samples(kA, 16, 8), make_basis(w1, 7), opt);
        out.mode = extract_guided_mode(out.bs, out.gap, geom);
        return out;
    }();
    return f;
}

} // namespace

TEST_CASE("guided k samples")
{
    const auto ks = guided_k_samples(kA, 16, 8);
    REQUIRE(ks.size() >= 17);
    CHECK(ks.front().norm() == 0.0);
    CHECK(ks.back().x() == doctest::Approx(kPi / kA).epsilon(1e-15));
    for (std::size_t i = 1; i < ks.size(); ++i) {
        CHECK(ks[i].x() > ks[i - 1].x());
        CHECK(ks[i].y() == 0.0);
    }
    // clustering: the last spacing is much finer than the uniform one
    const double last = ks.back().x() - ks[ks.size() - 2].x();
    CHECK(last < 0.1 * (kPi / kA) / 16);
}

TEST_CASE("empty lattice group velocity is c over n")
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    SolverOptions opt;
    opt.n_bands = 1;
    const auto bs = solve_bands(cell, {Vec2{0.3 * kPi / kA, 0.0}, Vec2{0.2 * kPi / kA, 0.1 * kPi / kA}},
                                make_basis(cell, 3), opt);
    CHECK(group_velocity(bs, 0, 0) == doctest::Approx(kSpeedOfLight / 2.7).epsilon(1e-12));
    // along x only: cos of the angle between k and x
    const double cosine = 0.2 / std::hypot(0.2, 0.1);
    CHECK(group_velocity(bs, 1, 0) == doctest::Approx(cosine * kSpeedOfLight / 2.7).epsilon(1e-12));
}

TEST_CASE("bulk gap needs holes")
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    SolverOptions opt;
    opt.n_bands = 3;
    const auto bs = solve_bands(cell, high_symmetry_path(cell, 6), make_basis(cell, 3), opt);
    CHECK_THROWS_AS(bulk_gap(bs), NoGapError);
}

TEST_CASE("defect-free supercell has no guided mode")
{
    const auto geom = reference_geometry();
    const auto sc = make_defect_free_supercell(geom, 7);
    SolverOptions opt;
    opt.n_bands = 12;
    const auto bs = solve_bands(sc, guided_k_samples(kA, 6, 2), make_basis(sc, 5), opt);
    CHECK_THROWS_AS(extract_guided_mode(bs, reference_gap(), geom), NoGuidedModeError);
}

TEST_CASE("W1 guided branch")
{
    const auto& f = w1_fixture();
    const auto& m = f.mode;
    REQUIRE(m.size() >= 8);
    CHECK(m.parity == 1);
    CHECK(band_edge(m) == m.omega.back());
    CHECK(m.omega_edge == m.omega.back());
    CHECK(m.k_samples.back() == doctest::Approx(kPi / kA).epsilon(1e-15));
    const double nu_edge = m.scaled_frequency(m.size() - 1);
    CHECK(f.gap.contains(nu_edge));
    CHECK(nu_edge == doctest::Approx(0.26).epsilon(0.03));
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(m.localization[i] >= 0.5);
        if (i > 0) {
            CHECK(m.k_samples[i] > m.k_samples[i - 1]);
        }
    }
    // slow light at the zone boundary, monotone segment ending there
    CHECK(std::abs(m.v_g.back()) < kSpeedOfLight / 100);
    REQUIRE(m.monotone_begin + 3 < m.size());
    // Coupling between periodic images of the supercell leaves a residual
    // slope of order 1e-4 c next to the edge; it shrinks with more rows.
    for (std::size_t i = m.monotone_begin; i + 1 < m.size(); ++i) {
        CHECK(m.v_g[i] >= -2e-4 * kSpeedOfLight);
    }
    // v_g falls toward the edge over the slow-light tail
    const std::size_t tail = m.size() - 6;
    for (std::size_t i = tail; i + 2 < m.size(); ++i) {
        CHECK(m.v_g[i + 1] < m.v_g[i]);
    }
}

TEST_CASE("Hellmann-Feynman and finite-difference velocities agree")
{
    const auto& m = w1_fixture().mode;
    const double dk = (kPi / kA) / 200;
    for (std::size_t i = 1; i + 1 < m.size(); ++i) {
        const double hf = group_velocity(m, i);
        const double fd = finite_difference_velocity(m, i, dk, 14);
        CHECK(hf == doctest::Approx(m.v_g[i]).epsilon(1e-12));
        CHECK(std::abs(fd - hf) < 1e-2 * std::abs(hf));
    }
    CHECK_THROWS_AS(finite_difference_velocity(m, m.size() - 1, dk, 14), ParameterError);
}

TEST_CASE("dispersion inversion")
{
    const auto& m = w1_fixture().mode;
    const std::size_t n = m.size();
    CHECK(invert_dispersion(m, m.omega_edge) == doctest::Approx(kPi / kA).epsilon(1e-15));
    for (std::size_t i = m.monotone_begin; i < n; ++i) {
        CHECK(invert_dispersion(m, m.omega[i]) == m.k_samples[i]);
    }
    // round trip through the interpolant between samples
    const double lo = m.omega[m.monotone_begin];
    const double hi = m.omega_edge;
    for (int j = 1; j < 20; ++j) {
        const double w = lo + (hi - lo) * j / 20.0;
        const double k = invert_dispersion(m, w);
        CHECK(k >= m.k_samples[m.monotone_begin]);
        CHECK(k <= kPi / kA);
        // the recovered k brackets w between its neighbouring samples
        const auto it = std::upper_bound(m.k_samples.begin(), m.k_samples.end(), k);
        if (it != m.k_samples.end() && it != m.k_samples.begin()) {
            const std::size_t r = static_cast<std::size_t>(it - m.k_samples.begin());
            const double wl = m.omega[r - 1], wr = m.omega[r];
            CHECK(w >= std::min(wl, wr) * (1 - 1e-9));
            CHECK(w <= std::max(wl, wr) * (1 + 1e-9));
        }
    }
    const double gap_far = m.orientation > 0 ? hi * 1.05 : hi * 0.95;
    CHECK_THROWS_AS(invert_dispersion(m, gap_far), OutOfBandError);
}

TEST_CASE("monotone cubic interpolant")
{
    const std::vector<double> x{0, 1, 2, 3, 4};
    const std::vector<double> y{0, 1, 1, 2, 8};
    const MonotoneCubic p(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(p(x[i]) == y[i]);
    }
    double prev = p(0);
    for (int i = 1; i <= 400; ++i) {
        const double v = p(i / 100.0);
        CHECK(v >= prev - 1e-15);
        prev = v;
    }
    // flat interval stays flat
    CHECK(p(1.5) == doctest::Approx(1.0));
    // linear data is reproduced
    const MonotoneCubic line({0, 1, 3}, {1, 3, 7});
    CHECK(line(2.2) == doctest::Approx(5.4));
}

TEST_CASE("effective mode volume")
{
    const auto geom = CrystalGeometry::from_ratio(kA, 0.0, 2.7);
    const auto cell = make_bulk_cell(geom);
    SolverOptions opt;
    opt.n_bands = 1;
    const auto bs = solve_bands(cell, {Vec2{0.4 * kPi / kA, 0.0}}, make_basis(cell, 3), opt);
    const auto field = reconstruct_field(bs, 0, 0, 16);
    CHECK(effective_mode_volume(field, geom) == doctest::Approx(cell.area() * geom.t_slab).epsilon(1e-9));

    // invariant under a global complex scale of the eigenvector
    const auto& v = bs.eigenvectors[0][0];
    const Vec2 k = bs.k_points[0];
    const double w = bs.bands(0, 0) * kTwoPi; // omega a / c
    const auto f1 = reconstruct_field(cell, make_basis(cell, 3), k, w, v, 16);
    const auto f2 = reconstruct_field(cell, make_basis(cell, 3), k, w, std::complex<double>(0.3, -2.0) * v, 16);
    CHECK(effective_mode_volume(f1, geom) == doctest::Approx(effective_mode_volume(f2, geom)).epsilon(1e-12));
}

TEST_CASE("W1 mode volume and localization")
{
    const auto& f = w1_fixture();
    const auto& m = f.mode;
    const double unit = kA * kA * std::sqrt(3.0) / 2 * m.t_slab;
    const std::size_t mid = (m.monotone_begin + m.size()) / 2;
    CHECK(m.v_eff[mid] > 0.1 * unit);
    CHECK(m.v_eff[mid] < 10 * unit);

    // grid refinement
    std::size_t k_index = 0;
    while (f.bs.k_points[k_index].x() < m.k_samples[mid] * (1 - 1e-12)) {
        ++k_index;
    }
    const auto& target = m.eigenvectors[mid];
    int band = -1;
    for (int b = 0; b < f.bs.band_count(); ++b) {
        if (std::abs(f.bs.eigenvectors[k_index][b].dot(target)) > 0.99) {
            band = b;
        }
    }
    REQUIRE(band >= 0);
    const auto geom = reference_geometry();
    const double coarse = effective_mode_volume(reconstruct_field(f.bs, k_index, band, 48), geom);
    const double fine = effective_mode_volume(reconstruct_field(f.bs, k_index, band, 96), geom);
    CHECK(std::abs(coarse - fine) / fine < 0.02);

    const auto field = reconstruct_field(f.bs, k_index, band, 24);
    const double inner = localization_fraction(field, 11, 1.5);
    CHECK(inner >= 0.5);
    CHECK(localization_fraction(field, 11, 100.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(localization_fraction(field, 11, 0.5) < inner);
}
