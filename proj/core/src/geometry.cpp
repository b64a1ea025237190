#include "pcw/geometry.hpp"

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pcw {
namespace {

constexpr double kCloseToInteger = 1e-9;

Vec2 fractional(const std::array<Vec2, 2>& g, const Vec2& d)
{
    return Vec2{g[0].dot(d) / kTwoPi, g[1].dot(d) / kTwoPi};
}

bool is_integer_pair(const Vec2& f)
{
    return std::abs(f.x() - std::round(f.x())) < kCloseToInteger &&
           std::abs(f.y() - std::round(f.y())) < kCloseToInteger;
}

// Smallest distance between a and any periodic image of b.
double periodic_distance(const Supercell& cell, const std::array<Vec2, 2>& g, const Vec2& a,
                         const Vec2& b)
{
    Vec2 f = fractional(g, a - b);
    f.x() -= std::round(f.x());
    f.y() -= std::round(f.y());
    double best = std::numeric_limits<double>::infinity();
    for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
            const Vec2 d = (f.x() + i) * cell.a1 + (f.y() + j) * cell.a2;
            best = std::min(best, d.norm());
        }
    }
    return best;
}

bool has_matching_hole(const Supercell& cell, const std::array<Vec2, 2>& g, const Vec2& point,
                       double radius)
{
    for (const auto& site : cell.sites) {
        if (site.is_defect) {
            continue;
        }
        if (std::abs(site.radius - radius) > 1e-12 * cell.lattice_constant) {
            continue;
        }
        if (is_integer_pair(fractional(g, point - site.center))) {
            return true;
        }
    }
    return false;
}

void validate_cell(const Supercell& cell)
{
    const auto g = reciprocal_vectors(cell);
    const auto holes = cell.holes();
    for (std::size_t i = 0; i < holes.size(); ++i) {
        for (std::size_t j = i; j < holes.size(); ++j) {
            double dist = 0;
            if (i == j) {
                // Distance to the nearest non-trivial image of itself.
                dist = std::min({cell.a1.norm(), cell.a2.norm(), (cell.a1 - cell.a2).norm(),
                                 (cell.a1 + cell.a2).norm()});
            } else {
                dist = periodic_distance(cell, g, holes[i].center, holes[j].center);
            }
            if (dist <= holes[i].radius + holes[j].radius) {
                throw ParameterError("holes overlap or touch in the periodic cell");
            }
        }
    }
}

} // namespace

CrystalGeometry CrystalGeometry::from_ratio(double a, double r_over_a, double n_eff, double t_slab,
                                            double eps_hole)
{
    CrystalGeometry geom;
    geom.a = a;
    geom.r = r_over_a * a;
    geom.eps_bg = n_eff * n_eff;
    geom.eps_hole = eps_hole;
    geom.t_slab = t_slab;
    return geom;
}

double CrystalGeometry::hole_fill_fraction() const
{
    const double x = r / a;
    return kTwoPi / kSqrt3 * x * x;
}

void CrystalGeometry::validate() const
{
    std::ostringstream why;
    if (!(a > 0)) {
        why << "lattice parameter must be positive (a = " << a << ")";
    } else if (!(r >= 0) || !(r < 0.5 * a)) {
        why << "hole radius must satisfy 0 <= r < a/2 (r/a = " << r / a << ")";
    } else if (!(eps_hole >= 1.0)) {
        why << "hole permittivity must be >= 1 (eps_hole = " << eps_hole << ")";
    } else if (!(eps_bg > eps_hole)) {
        why << "background permittivity must exceed the hole permittivity (eps_bg = " << eps_bg
            << ", eps_hole = " << eps_hole << ")";
    } else if (!(t_slab > 0)) {
        why << "slab thickness must be positive";
    } else {
        return;
    }
    throw ParameterError(why.str());
}

double Supercell::area() const
{
    return std::abs(a1.x() * a2.y() - a1.y() * a2.x());
}

std::vector<LatticeSite> Supercell::holes() const
{
    std::vector<LatticeSite> out;
    for (const auto& site : sites) {
        if (!site.is_defect && site.radius > 0) {
            out.push_back(site);
        }
    }
    return out;
}

std::size_t Supercell::hole_count() const
{
    return static_cast<std::size_t>(std::count_if(sites.begin(), sites.end(),
                                                  [](const LatticeSite& s) { return !s.is_defect; }));
}

bool Supercell::is_mirror_symmetric() const
{
    const auto g = reciprocal_vectors(*this);
    for (const auto& site : holes()) {
        if (!has_matching_hole(*this, g, Vec2{site.center.x(), -site.center.y()}, site.radius)) {
            return false;
        }
    }
    return true;
}

bool Supercell::is_centrosymmetric() const
{
    const auto g = reciprocal_vectors(*this);
    for (const auto& site : holes()) {
        if (!has_matching_hole(*this, g, -site.center, site.radius)) {
            return false;
        }
    }
    return true;
}

double Supercell::permittivity_at(const Vec2& point) const
{
    const auto g = reciprocal_vectors(*this);
    for (const auto& site : holes()) {
        if (periodic_distance(*this, g, point, site.center) < site.radius) {
            return eps_hole;
        }
    }
    return eps_bg;
}

std::array<Vec2, 2> reciprocal_vectors(const Supercell& cell)
{
    const double det = cell.a1.x() * cell.a2.y() - cell.a1.y() * cell.a2.x();
    if (det == 0.0) {
        throw ParameterError("degenerate lattice vectors");
    }
    const double s = kTwoPi / det;
    return {Vec2{s * cell.a2.y(), -s * cell.a2.x()}, Vec2{-s * cell.a1.y(), s * cell.a1.x()}};
}

long ReciprocalBasis::find(int m, int p) const
{
    const std::array<int, 2> key{m, p};
    const auto it = std::lower_bound(indices.begin(), indices.end(), key);
    if (it == indices.end() || *it != key) {
        return -1;
    }
    return static_cast<long>(it - indices.begin());
}

bool ReciprocalBasis::closed_under_negation() const
{
    return std::all_of(indices.begin(), indices.end(),
                       [this](const auto& mp) { return find(-mp[0], -mp[1]) >= 0; });
}

ReciprocalBasis basis_from_indices(const Supercell& cell, std::vector<std::array<int, 2>> indices,
                                   int cutoff)
{
    ReciprocalBasis basis;
    const auto g = reciprocal_vectors(cell);
    basis.g1 = g[0];
    basis.g2 = g[1];
    basis.cutoff = cutoff;
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    basis.indices = std::move(indices);
    basis.g_list.reserve(basis.indices.size());
    for (const auto& [m, p] : basis.indices) {
        basis.g_list.push_back(m * basis.g1 + p * basis.g2);
    }
    return basis;
}

ReciprocalBasis make_basis(const Supercell& cell, int cutoff)
{
    if (cutoff < 1) {
        throw ParameterError("plane-wave cutoff must be >= 1");
    }
    std::vector<std::array<int, 2>> indices;
    const int n = cell.rows;
    if (n == 1) {
        for (int m = -cutoff; m <= cutoff; ++m) {
            for (int p = -cutoff; p <= cutoff; ++p) {
                indices.push_back({m, p});
            }
        }
    } else {
        const int u_max = n * (2 * cutoff + 1);
        for (int m = -cutoff; m <= cutoff; ++m) {
            // u = 2p - n m with |u| <= u_max
            const int lo = static_cast<int>(std::ceil((n * m - u_max) / 2.0));
            const int hi = static_cast<int>(std::floor((n * m + u_max) / 2.0));
            for (int p = lo; p <= hi; ++p) {
                indices.push_back({m, p});
            }
        }
    }
    return basis_from_indices(cell, std::move(indices), cutoff);
}

Supercell make_bulk_cell(const CrystalGeometry& geom)
{
    geom.validate();
    Supercell cell;
    cell.a1 = Vec2{geom.a, 0.0};
    cell.a2 = Vec2{0.5 * geom.a, 0.5 * kSqrt3 * geom.a};
    cell.eps_bg = geom.eps_bg;
    cell.eps_hole = geom.eps_hole;
    cell.lattice_constant = geom.a;
    cell.rows = 1;
    cell.sites.push_back({Vec2::Zero(), geom.r, false});
    validate_cell(cell);
    return cell;
}

namespace {

Supercell stacked_supercell(const CrystalGeometry& geom, int n_rows, bool with_defect)
{
    geom.validate();
    if (n_rows < 7 || n_rows % 2 == 0) {
        throw ParameterError("W1 supercell needs an odd number of rows >= 7 (got " +
                             std::to_string(n_rows) + ")");
    }
    const Vec2 row_step{0.5 * geom.a, 0.5 * kSqrt3 * geom.a};
    Supercell cell;
    cell.a1 = Vec2{geom.a, 0.0};
    cell.a2 = n_rows * row_step;
    cell.eps_bg = geom.eps_bg;
    cell.eps_hole = geom.eps_hole;
    cell.lattice_constant = geom.a;
    cell.rows = n_rows;
    const int half = n_rows / 2;
    for (int j = -half; j <= half; ++j) {
        const bool defect = with_defect && j == 0;
        cell.sites.push_back({j * row_step, defect ? 0.0 : geom.r, defect});
    }
    validate_cell(cell);
    return cell;
}

} // namespace

Supercell make_w1_supercell(const CrystalGeometry& geom, int n_rows)
{
    return stacked_supercell(geom, n_rows, true);
}

Supercell make_defect_free_supercell(const CrystalGeometry& geom, int n_rows)
{
    return stacked_supercell(geom, n_rows, false);
}

std::complex<double> fourier_coefficient(const Supercell& cell, const Vec2& G, bool of_inverse)
{
    const double bg = of_inverse ? 1.0 / cell.eps_bg : cell.eps_bg;
    const double contrast =
        of_inverse ? 1.0 / cell.eps_hole - 1.0 / cell.eps_bg : cell.eps_hole - cell.eps_bg;
    const double area = cell.area();
    const double gnorm = G.norm();
    std::complex<double> sum = gnorm == 0.0 ? bg : 0.0;
    for (const auto& site : cell.sites) {
        if (site.is_defect || site.radius <= 0) {
            continue;
        }
        const double x = gnorm * site.radius;
        // 2 J1(x)/x -> 1 as x -> 0
        const double form = x < 1e-8 ? 1.0 : 2.0 * std::cyl_bessel_j(1.0, x) / x;
        const double weight = contrast * kPi * site.radius * site.radius / area * form;
        sum += weight * std::polar(1.0, -G.dot(site.center));
    }
    return sum;
}

} // namespace pcw
