#include <doctest.h>

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"
#include "pcw/geometry.hpp"

#include <algorithm>
#include <cmath>

using namespace pcw;

namespace {

CrystalGeometry reference_geometry()
{
    return CrystalGeometry::from_ratio(256e-9, 0.286, 2.7);
}

// Coefficient from polar quadrature over each hole: trapezoid in angle,
// midpoint in radius.
std::complex<double> quadrature_coefficient(const Supercell& cell, const Vec2& G, bool of_inverse)
{
    const double bg = of_inverse ? 1.0 / cell.eps_bg : cell.eps_bg;
    const double hole = of_inverse ? 1.0 / cell.eps_hole : cell.eps_hole;
    std::complex<double> sum = G.norm() == 0 ? std::complex<double>(bg) : 0.0;
    const int nr = 4000;
    const int nt = 256;
    for (const auto& site : cell.holes()) {
        std::complex<double> disk = 0;
        const double dr = site.radius / nr;
        for (int i = 0; i < nr; ++i) {
            const double r = (i + 0.5) * dr;
            for (int j = 0; j < nt; ++j) {
                const double t = kTwoPi * j / nt;
                const Vec2 x = site.center + r * Vec2{std::cos(t), std::sin(t)};
                disk += std::polar(r * dr * kTwoPi / nt, -G.dot(x));
            }
        }
        sum += (hole - bg) * disk / cell.area();
    }
    return sum;
}

} // namespace

TEST_CASE("bulk cell area")
{
    const auto cell = make_bulk_cell(reference_geometry());
    const double a = 256e-9;
    CHECK(cell.area() == doctest::Approx(0.5 * std::sqrt(3.0) * a * a).epsilon(1e-14));
    CHECK(cell.area() == doctest::Approx(5.675e-14).epsilon(1e-3));
    CHECK(cell.hole_count() == 1);
    CHECK(cell.is_mirror_symmetric());
    CHECK(cell.is_centrosymmetric());
}

TEST_CASE("reciprocal vectors are dual to the lattice")
{
    const auto w1 = make_w1_supercell(reference_geometry(), 11);
    const auto g = reciprocal_vectors(w1);
    CHECK(g[0].dot(w1.a1) == doctest::Approx(kTwoPi));
    CHECK(g[1].dot(w1.a2) == doctest::Approx(kTwoPi));
    CHECK(std::abs(g[0].dot(w1.a2)) < 1e-9);
    CHECK(std::abs(g[1].dot(w1.a1)) < 1e-9);
    CHECK(make_basis(w1, 5).closed_under_negation());
    CHECK(make_basis(make_bulk_cell(reference_geometry()), 5).closed_under_negation());
}

TEST_CASE("touching holes are rejected")
{
    CHECK_THROWS_AS(make_bulk_cell(CrystalGeometry::from_ratio(256e-9, 0.5, 2.7)), ParameterError);
    CHECK_THROWS_AS(make_bulk_cell(CrystalGeometry::from_ratio(256e-9, 0.6, 2.7)), ParameterError);
    CHECK_THROWS_AS(make_bulk_cell(CrystalGeometry::from_ratio(-1.0, 0.2, 2.7)), ParameterError);
    // holes with a higher index than the membrane
    CHECK_THROWS_AS(make_bulk_cell(CrystalGeometry::from_ratio(256e-9, 0.2, 2.7, 150e-9, 9.0)),
                    ParameterError);
}

TEST_CASE("vanishing holes leave the background permittivity")
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(256e-9, 0.0, 2.7));
    const auto g = reciprocal_vectors(cell);
    CHECK(fourier_coefficient(cell, Vec2::Zero(), false).real() == doctest::Approx(7.29));
    CHECK(std::abs(fourier_coefficient(cell, g[0] + g[1], false)) < 1e-15);
    CHECK(std::abs(fourier_coefficient(cell, 2.0 * g[0], true)) < 1e-15);
}

TEST_CASE("W1 supercell rows")
{
    const auto geom = reference_geometry();
    const auto w11 = make_w1_supercell(geom, 11);
    CHECK(w11.hole_count() == 10);
    CHECK(w11.a2.norm() == doctest::Approx(11 * 256e-9).epsilon(1e-12));
    // transverse extent: the height of the cell
    CHECK(w11.a2.y() == doctest::Approx(11 * 256e-9 * std::sqrt(3.0) / 2).epsilon(1e-12));
    CHECK(w11.a2.y() == doctest::Approx(2.439e-6).epsilon(1e-3));
    CHECK(w11.is_mirror_symmetric());
    CHECK(w11.is_centrosymmetric());

    const auto w7 = make_w1_supercell(geom, 7);
    CHECK(w7.hole_count() == 6);
    CHECK(make_defect_free_supercell(geom, 7).hole_count() == 7);

    CHECK_THROWS_AS(make_w1_supercell(geom, 6), ParameterError);
    CHECK_THROWS_AS(make_w1_supercell(geom, 5), ParameterError);

    // exactly one defect site and it sits on the origin
    int defects = 0;
    for (const auto& s : w11.sites) {
        if (s.is_defect) {
            ++defects;
            CHECK(s.center.norm() < 1e-15);
        }
    }
    CHECK(defects == 1);
}

TEST_CASE("average permittivity")
{
    const auto cell = make_bulk_cell(reference_geometry());
    const double f = 2.0 * kPi / std::sqrt(3.0) * 0.286 * 0.286;
    CHECK(f == doctest::Approx(0.29672).epsilon(1e-4));
    CHECK(reference_geometry().hole_fill_fraction() == doctest::Approx(f).epsilon(1e-14));
    const auto e0 = fourier_coefficient(cell, Vec2::Zero(), false);
    CHECK(e0.real() == doctest::Approx(7.29 + f * (1.0 - 7.29)).epsilon(1e-14));
    CHECK(e0.real() == doctest::Approx(5.424).epsilon(1e-3));
    CHECK(e0.imag() == 0.0);
    const auto i0 = fourier_coefficient(cell, Vec2::Zero(), true);
    CHECK(i0.real() == doctest::Approx(1.0 / 7.29 + f * (1.0 - 1.0 / 7.29)).epsilon(1e-14));
}

TEST_CASE("Fourier coefficients are conjugate symmetric")
{
    const auto w1 = make_w1_supercell(reference_geometry(), 7);
    const auto basis = make_basis(w1, 3);
    for (std::size_t i = 0; i < basis.size(); i += 7) {
        const Vec2 G = basis.g_list[i];
        for (bool inv : {false, true}) {
            const auto p = fourier_coefficient(w1, G, inv);
            const auto m = fourier_coefficient(w1, -G, inv);
            CHECK(std::abs(p - std::conj(m)) < 1e-14);
        }
    }
}

TEST_CASE("Fourier coefficients agree with direct quadrature")
{
    // Off-centre hole so the coefficients carry a phase.
    auto cell = make_bulk_cell(reference_geometry());
    cell.sites[0].center = Vec2{0.2 * 256e-9, 0.1 * 256e-9};
    const auto g = reciprocal_vectors(cell);
    const Vec2 cases[] = {Vec2::Zero(), g[0], g[0] + g[1], 2.0 * g[1] - g[0], 3.0 * g[0]};
    for (const Vec2& G : cases) {
        for (bool inv : {false, true}) {
            const auto exact = fourier_coefficient(cell, G, inv);
            const auto quad = quadrature_coefficient(cell, G, inv);
            CHECK(std::abs(exact - quad) < 1e-6 * std::max(1.0, std::abs(exact)));
        }
    }
}

TEST_CASE("defect-free supercell coefficients fold the bulk series")
{
    const auto geom = reference_geometry();
    const auto bulk = make_bulk_cell(geom);
    const auto sc = make_defect_free_supercell(geom, 7);
    const auto gb = reciprocal_vectors(bulk);
    const auto gs = reciprocal_vectors(sc);
    for (int m = -2; m <= 2; ++m) {
        for (int p = -14; p <= 14; ++p) {
            const Vec2 G = m * gs[0] + p * gs[1];
            const auto c = fourier_coefficient(sc, G, false);
            if (p % 7 == 0) {
                const Vec2 Gb = m * gb[0] + (p / 7) * gb[1];
                CHECK((G - Gb).norm() < 1e-6 * G.norm() + 1e-3);
                CHECK(std::abs(c - fourier_coefficient(bulk, Gb, false)) < 1e-13);
            } else {
                CHECK(std::abs(c) < 1e-13);
            }
        }
    }
}

TEST_CASE("permittivity lookup")
{
    const auto w1 = make_w1_supercell(reference_geometry(), 7);
    const double a = 256e-9;
    CHECK(w1.permittivity_at(Vec2{0, 0}) == doctest::Approx(7.29)); // defect row
    CHECK(w1.permittivity_at(w1.a2 / 7.0) == doctest::Approx(1.0)); // first hole row
    CHECK(w1.permittivity_at(w1.a2 / 7.0 + w1.a1 * 3.0 + w1.a2) == doctest::Approx(1.0));
    CHECK(w1.permittivity_at(Vec2{0.5 * a, 0}) == doctest::Approx(7.29));
}
