#pragma once

// Photonic-crystal geometry: bulk triangular cells, W1 supercells, and the
// analytic Fourier series of their dielectric function.

#include <Eigen/Core>

#include <array>
#include <complex>
#include <vector>

namespace pcw {

using Vec2 = Eigen::Vector2d;

/// Physical description of the hole lattice in the membrane.  All lengths in metres.
struct CrystalGeometry {
    double a = 256e-9;        ///< lattice parameter
    double r = 0.286 * 256e-9; ///< hole radius
    double eps_bg = 2.70 * 2.70; ///< background permittivity (effective index squared)
    double eps_hole = 1.0;
    double t_slab = 150e-9;   ///< membrane thickness, used to promote 2D areas to volumes

    /// Convenience constructor for the usual (a, r/a, n_eff) parameterisation.
    static CrystalGeometry from_ratio(double a, double r_over_a, double n_eff,
                                      double t_slab = 150e-9, double eps_hole = 1.0);

    double hole_fill_fraction() const;

    /// Throws ParameterError when the geometry is unphysical.
    void validate() const;
};

struct LatticeSite {
    Vec2 center;       ///< metres, relative to the cell origin
    double radius = 0; ///< metres; zero on defect sites
    bool is_defect = false;
};

/// A periodic cell spanned by a1, a2 that contains circular holes.
///
/// The bulk cell has one site at the origin.  A W1 supercell has `rows` sites
/// stacked along (a/2, a*sqrt(3)/2); its centre row (at the origin) is a defect.
/// Both layouts are centrosymmetric and mirror-symmetric about y = 0.
struct Supercell {
    Vec2 a1 = Vec2::Zero();
    Vec2 a2 = Vec2::Zero();
    std::vector<LatticeSite> sites;
    double eps_bg = 1.0;
    double eps_hole = 1.0;
    double lattice_constant = 0; ///< bulk lattice parameter a
    int rows = 1;                ///< multiplicity of a2 in bulk primitive vectors

    double area() const;
    std::vector<LatticeSite> holes() const;
    std::size_t hole_count() const;

    /// Holes are symmetric under y -> -y (modulo lattice translations).
    bool is_mirror_symmetric() const;
    /// Holes are symmetric under r -> -r, which makes every Fourier coefficient real.
    bool is_centrosymmetric() const;

    /// Permittivity at a point (metres, any position; periodic images are handled).
    double permittivity_at(const Vec2& point) const;
};

/// Reciprocal lattice vectors g1, g2 with g_i . a_j = 2 pi delta_ij.
std::array<Vec2, 2> reciprocal_vectors(const Supercell& cell);

/// A finite set of reciprocal-lattice vectors G = m g1 + p g2.
struct ReciprocalBasis {
    Vec2 g1 = Vec2::Zero();
    Vec2 g2 = Vec2::Zero();
    int cutoff = 0;
    std::vector<std::array<int, 2>> indices; ///< (m, p) per plane wave
    std::vector<Vec2> g_list;                ///< rad/m, parallel to `indices`

    std::size_t size() const { return indices.size(); }
    /// Position of (m, p) in the list, or -1.
    long find(int m, int p) const;
    bool closed_under_negation() const;
};

/// Plane-wave basis for a cell.
///
/// Bulk cells (rows == 1) use |m|, |p| <= cutoff.  Supercells keep the same
/// resolution in bulk reciprocal units with a window that is symmetric under
/// y -> -y: |Gx| <= cutoff * 2pi/a and |Gy| <= (2 cutoff + 1) * 2pi/(sqrt(3) a).
ReciprocalBasis make_basis(const Supercell& cell, int cutoff);

/// Basis from an explicit list of (m, p) indices.
ReciprocalBasis basis_from_indices(const Supercell& cell, std::vector<std::array<int, 2>> indices,
                                   int cutoff = 0);

Supercell make_bulk_cell(const CrystalGeometry& geom);

/// W1 waveguide supercell with `n_rows` rows (odd, >= 7); the centre row has no holes.
Supercell make_w1_supercell(const CrystalGeometry& geom, int n_rows);

/// Same stacking as the W1 supercell but with every row populated.
Supercell make_defect_free_supercell(const CrystalGeometry& geom, int n_rows);

/// Fourier coefficient of eps(r) (or 1/eps(r) when `of_inverse`) at reciprocal vector G (rad/m).
std::complex<double> fourier_coefficient(const Supercell& cell, const Vec2& G, bool of_inverse);

} // namespace pcw
