#include <doctest.h>

#include "pcw/constants.hpp"
#include "pcw/dispersion.hpp"
#include "pcw/errors.hpp"
#include "pcw/pwe.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

using namespace pcw;

namespace {

constexpr double kA = 256e-9;

CrystalGeometry reference_geometry()
{
    return CrystalGeometry::from_ratio(kA, 0.286, 2.7);
}

double max_relative_difference(const std::vector<double>& got, const std::vector<double>& want)
{
    double worst = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max(std::abs(want[i]), 1e-300);
        worst = std::max(worst, want[i] == 0 ? std::abs(got[i]) : std::abs(got[i] - want[i]) / scale);
    }
    return worst;
}

std::vector<double> row(const BandStructure& bs, std::size_t k)
{
    std::vector<double> out(bs.band_count());
    for (int b = 0; b < bs.band_count(); ++b) {
        out[b] = bs.bands(static_cast<Eigen::Index>(k), b);
    }
    return out;
}

} // namespace

TEST_CASE("empty-lattice reference values")
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    const std::vector<Vec2> g0{Vec2::Zero()};
    const auto nu = empty_lattice_reference(Vec2{kPi / kA, 0}, g0, 7.29, kA);
    CHECK(nu.at(0) == doctest::Approx(0.5 / 2.7).epsilon(1e-15));
    CHECK(nu.at(0) == doctest::Approx(0.18519).epsilon(1e-4));
    CHECK(empty_lattice_reference(Vec2::Zero(), g0, 7.29, kA).at(0) == 0.0);

    // Degeneracy at the symmetry points follows the star of k: six shortest
    // G at Gamma, three equivalent corners at K, two at M.
    const auto basis = make_basis(cell, 4);
    const auto g = reciprocal_vectors(cell);
    const Vec2 M = 0.5 * g[0];
    const Vec2 K = (2.0 * g[0] + g[1]) / 3.0;
    auto multiplicity = [&](const Vec2& k, std::size_t level) {
        const auto nu = empty_lattice_reference(k, basis.g_list, 7.29, kA);
        std::vector<double> distinct;
        std::vector<int> count;
        for (double v : nu) {
            if (distinct.empty() || v - distinct.back() > 1e-9 * std::max(1.0, v)) {
                distinct.push_back(v);
                count.push_back(1);
            } else {
                ++count.back();
            }
        }
        return count.at(level);
    };
    CHECK(multiplicity(Vec2::Zero(), 0) == 1);
    CHECK(multiplicity(Vec2::Zero(), 1) == 6);
    CHECK(multiplicity(K, 0) == 3);
    CHECK(multiplicity(M, 0) == 2);
}

TEST_CASE("empty lattice bands are exact along a k path")
{
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    const auto basis = make_basis(cell, 5);
    const auto g = reciprocal_vectors(cell);
    const Vec2 M = 0.5 * g[0];
    std::vector<Vec2> path;
    for (int i = 0; i < 20; ++i) {
        path.push_back(M * (i / 19.0));
    }
    for (auto rule : {EpsilonRule::inverse, EpsilonRule::direct}) {
        SolverOptions opt;
        opt.n_bands = 10;
        opt.rule = rule;
        const auto bs = solve_bands(cell, path, basis, opt);
        for (std::size_t k = 0; k < path.size(); ++k) {
            auto ref = empty_lattice_reference(path[k], basis.g_list, 7.29, kA);
            ref.resize(10);
            CHECK(max_relative_difference(row(bs, k), ref) < 1e-10);
        }
    }
}

TEST_CASE("operator is Hermitian")
{
    // Perturbed lattice without inversion symmetry: a complex operator.
    auto w1 = make_w1_supercell(reference_geometry(), 7);
    w1.sites[1].center += Vec2{0.03 * kA, 0.02 * kA};
    const auto basis = make_basis(w1, 3);
    const Vec2 k{0.37 * kPi / kA, 0.11 * kPi / kA};
    for (auto rule : {EpsilonRule::inverse, EpsilonRule::direct}) {
        const Eigen::MatrixXcd m = assemble_operator(w1, k, basis, rule);
        const double scale = m.cwiseAbs().maxCoeff();
        CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() < 1e-12 * scale);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() > -1e-12 * scale);
    }
    PlaneWaveProblem problem(w1, basis);
    CHECK_FALSE(problem.is_real());
}

TEST_CASE("time reversal symmetry")
{
    const auto cell = make_bulk_cell(reference_geometry());
    const auto basis = make_basis(cell, 5);
    const Vec2 k{0.31 * kPi / kA, 0.17 * kPi / kA};
    SolverOptions opt;
    opt.n_bands = 6;
    const auto bs = solve_bands(cell, {k, Vec2(-k)}, basis, opt);
    CHECK(max_relative_difference(row(bs, 0), row(bs, 1)) < 1e-10);
}

TEST_CASE("direct-rule eigenvalues decrease on nested bases")
{
    const auto cell = make_bulk_cell(reference_geometry());
    const Vec2 k{0.4 * kPi / kA, 0.1 * kPi / kA};
    SolverOptions opt;
    opt.n_bands = 6;
    opt.rule = EpsilonRule::direct;
    std::vector<double> previous;
    for (int cutoff = 3; cutoff <= 7; ++cutoff) {
        const auto bs = solve_bands(cell, {k}, make_basis(cell, cutoff), opt);
        const auto now = row(bs, 0);
        if (!previous.empty()) {
            for (std::size_t b = 0; b < now.size(); ++b) {
                CHECK(now[b] <= previous[b] * (1 + 1e-12));
            }
        }
        previous = now;
    }
}

TEST_CASE("bulk TE gap opens between the first two bands")
{
    const auto cell = make_bulk_cell(reference_geometry());
    SolverOptions opt;
    opt.n_bands = 4;
    const auto path = high_symmetry_path(cell, 8);
    CHECK(path.size() == 25);
    const auto bs = solve_bands(cell, path, make_basis(cell, 7), opt);
    double top1 = 0, bottom2 = 1e9;
    for (std::size_t k = 0; k < bs.k_count(); ++k) {
        top1 = std::max(top1, bs.bands(k, 0));
        bottom2 = std::min(bottom2, bs.bands(k, 1));
        for (int b = 1; b < bs.band_count(); ++b) {
            CHECK(bs.bands(k, b) >= bs.bands(k, b - 1));
        }
    }
    CHECK(bottom2 > top1 * 1.1);
    const auto gap = bulk_gap(bs);
    CHECK(gap.nu_low == doctest::Approx(top1));
    CHECK(gap.nu_high == doctest::Approx(bottom2));
}

TEST_CASE("lowest band at K converges under cutoff doubling")
{
    const auto cell = make_bulk_cell(reference_geometry());
    const auto g = reciprocal_vectors(cell);
    const Vec2 K = (2.0 * g[0] + g[1]) / 3.0;
    SolverOptions opt;
    opt.n_bands = 2;
    const double coarse = solve_bands(cell, {K}, make_basis(cell, 7), opt).bands(0, 0);
    const double fine = solve_bands(cell, {K}, make_basis(cell, 14), opt).bands(0, 0);
    CHECK(std::abs(coarse - fine) / fine < 5e-3);
}

TEST_CASE("defect-free supercell reproduces bulk bands on the folded basis")
{
    const auto geom = reference_geometry();
    const auto bulk = make_bulk_cell(geom);
    const auto sc = make_defect_free_supercell(geom, 7);
    const auto bulk_basis = make_basis(bulk, 5);
    std::vector<std::array<int, 2>> folded;
    for (const auto& mp : bulk_basis.indices) {
        folded.push_back({mp[0], 7 * mp[1]});
    }
    const auto sc_basis = basis_from_indices(sc, folded);
    const Vec2 k{0.23 * kPi / kA, 0.05 * kPi / kA};
    SolverOptions opt;
    opt.n_bands = 5;
    const auto a = solve_bands(bulk, {k}, bulk_basis, opt);
    const auto b = solve_bands(sc, {k}, sc_basis, opt);
    CHECK(max_relative_difference(row(b, 0), row(a, 0)) < 1e-8);
}

TEST_CASE("mirror sectors merge to the full spectrum")
{
    const auto w1 = make_w1_supercell(reference_geometry(), 7);
    const auto problem = std::make_shared<const PlaneWaveProblem>(w1, make_basis(w1, 3));
    REQUIRE(problem->has_mirror_blocks());
    const Vec2 k{0.6 * kPi, 0.0}; // dimensionless k a
    const auto both = problem->solve(k, 10, MirrorSector::both);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> dense(problem->operator_matrix(k), Eigen::EigenvaluesOnly);
    for (int b = 0; b < 10; ++b) {
        CHECK(both.values[b] == doctest::Approx(dense.eigenvalues()[b]).epsilon(1e-10));
        CHECK(std::abs(both.parity[b]) == 1);
    }
    const auto even = problem->solve(k, 5, MirrorSector::even);
    const auto odd = problem->solve(k, 5, MirrorSector::odd);
    for (int b = 0; b < 5; ++b) {
        CHECK(even.parity[b] == 1);
        CHECK(odd.parity[b] == -1);
    }
}

TEST_CASE("reconstructed fields")
{
    const auto cell = make_bulk_cell(reference_geometry());
    SolverOptions opt;
    opt.n_bands = 3;
    const Vec2 k{0.3 * kPi / kA, 0.2 * kPi / kA};
    const auto bs = solve_bands(cell, {Vec2::Zero(), k}, make_basis(cell, 5), opt);
    for (int b = 0; b < 3; ++b) {
        const auto f = reconstruct_field(bs, 1, b, 32);
        CHECK(f.energy_density.sum() * f.element_area() == doctest::Approx(1.0).epsilon(1e-9));
    }
    // omega = 0 at Gamma: E is undefined
    CHECK_THROWS_AS(reconstruct_field(bs, 0, 0, 16), DegenerateModeError);
    CHECK_THROWS_AS(reconstruct_field(bs, 1, 7, 16), ParameterError);

    // A plane wave in the empty lattice has uniform |E|.
    const auto empty = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    const auto es = solve_bands(empty, {Vec2{kPi / kA, 0}}, make_basis(empty, 3), opt);
    const auto f = reconstruct_field(es, 0, 0, 16);
    const double mean = f.energy_density.mean();
    CHECK((f.energy_density.array() - mean).abs().maxCoeff() < 1e-9 * mean);
}

TEST_CASE("E follows from H through the curl relation")
{
    // Ex = i/(omega eps0 eps) dHz/dy; check the ratio of Fourier content on
    // a grid by finite differences of the reconstructed H.
    const auto cell = make_bulk_cell(CrystalGeometry::from_ratio(kA, 0.0, 2.7));
    SolverOptions opt;
    opt.n_bands = 1;
    const Vec2 k{0.3 * kPi / kA, 0.2 * kPi / kA};
    const auto bs = solve_bands(cell, {k}, make_basis(cell, 3), opt);
    const auto f = reconstruct_field(bs, 0, 0, 16);
    // Single plane wave: E is perpendicular to k and |E| / |H| is uniform.
    const double ratio0 = std::abs(f.ex_field[0]) / std::abs(f.h_field[0]);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(f.size()); i += 17) {
        const Vec2 e{std::abs(f.ex_field[i]), std::abs(f.ey_field[i])};
        CHECK(std::abs(f.ex_field[i] * k.x() + f.ey_field[i] * k.y()) < 1e-9 * e.norm() * k.norm());
        CHECK(std::abs(f.ex_field[i]) / std::abs(f.h_field[i]) == doctest::Approx(ratio0).epsilon(1e-9));
    }
}
