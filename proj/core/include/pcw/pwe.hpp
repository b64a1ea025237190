#pragma once

// Plane-wave expansion for 2D TE modes (out-of-plane H).  The master equation
// is  sum_G' (k+G).(k+G') eta_{G,G'} h_G' = (omega/c)^2 h_G,  where eta is
// either the inverse of the permittivity Toeplitz matrix (inverse rule) or the
// Fourier series of 1/eps (direct rule).

#include "pcw/geometry.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace pcw {

enum class EpsilonRule { inverse, direct };

/// Parity of H_z under the mirror y -> -y.  Only meaningful at ky = 0 for
/// mirror-symmetric cells; `both` solves every sector and merges.
enum class MirrorSector { both, even, odd };

struct SolverOptions {
    int n_bands = 8;
    EpsilonRule rule = EpsilonRule::inverse;
    MirrorSector sector = MirrorSector::both;
    int threads = 1;
};

/// Eigenpairs at one k.  Values are dimensionless (omega a / c)^2; vectors are
/// unit-norm columns over the basis g_list.
struct Eigenpairs {
    Eigen::VectorXd values;
    Eigen::MatrixXcd vectors;
    std::vector<int> parity; ///< +1 even, -1 odd, 0 unresolved
};

/// Precomputed operator data for a (cell, basis) pair.  k-independent work
/// (building and inverting the permittivity matrix) happens once in the
/// constructor; every k solve afterwards is read-only and thread-safe.
///
/// Wave vectors passed to the member functions are dimensionless (k * a).
class PlaneWaveProblem {
public:
    PlaneWaveProblem(Supercell cell, ReciprocalBasis basis, EpsilonRule rule = EpsilonRule::inverse);
    ~PlaneWaveProblem();
    PlaneWaveProblem(const PlaneWaveProblem&) = delete;
    PlaneWaveProblem& operator=(const PlaneWaveProblem&) = delete;

    const Supercell& cell() const;
    const ReciprocalBasis& basis() const;
    EpsilonRule rule() const;
    bool is_real() const;
    /// True when mirror-sector block solves are available (mirror-symmetric,
    /// centrosymmetric cell with a mirror-closed basis).
    bool has_mirror_blocks() const;

    /// Dense Hermitian operator (dimensionless, eigenvalues (omega a/c)^2).
    Eigen::MatrixXcd operator_matrix(const Vec2& k) const;

    /// Lowest n_bands eigenpairs, ascending.
    Eigenpairs solve(const Vec2& k, int n_bands, MirrorSector sector = MirrorSector::both) const;

    /// eta * v for a coefficient vector over the basis.
    Eigen::VectorXcd apply_eta(const Eigen::VectorXcd& v) const;

    /// <h| dTheta/dk |h> along `direction` (unit vector), dimensionless.
    double operator_derivative(const Vec2& k, const Eigen::VectorXcd& h, const Vec2& direction) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct BandStructure {
    std::vector<Vec2> k_points;                           ///< rad/m
    Eigen::MatrixXd bands;                                 ///< (k, band): omega a / 2 pi c
    std::vector<std::vector<Eigen::VectorXcd>> eigenvectors; ///< [k][band]
    std::vector<std::vector<int>> parity;                 ///< [k][band]
    std::shared_ptr<const PlaneWaveProblem> problem;
    SolverOptions options;

    const Supercell& cell() const { return problem->cell(); }
    double lattice_constant() const { return problem->cell().lattice_constant; }
    std::size_t k_count() const { return k_points.size(); }
    int band_count() const { return static_cast<int>(bands.cols()); }
    /// Angular frequency in rad/s.
    double omega(std::size_t k_index, int band) const;
};

/// Theta_{G,G'} = (k+G).(k+G') eta_{G,G'} in SI units, (rad/m)^2; eigenvalues are (omega/c)^2.
Eigen::MatrixXcd assemble_operator(const Supercell& cell, const Vec2& k, const ReciprocalBasis& basis,
                                   EpsilonRule rule = EpsilonRule::inverse);

BandStructure solve_bands(const Supercell& cell, const std::vector<Vec2>& k_path,
                          const ReciprocalBasis& basis, const SolverOptions& options);

BandStructure solve_bands(std::shared_ptr<const PlaneWaveProblem> problem,
                          const std::vector<Vec2>& k_path, const SolverOptions& options);

/// Sorted empty-lattice frequencies |k+G| / sqrt(eps), returned as omega a / 2 pi c.
std::vector<double> empty_lattice_reference(const Vec2& k, const std::vector<Vec2>& g_set, double eps,
                                            double a);

/// Gamma-M-K-Gamma path for the bulk triangular cell (rad/m), `per_segment`
/// points per leg, endpoints shared.
std::vector<Vec2> high_symmetry_path(const Supercell& bulk_cell, int per_segment);

/// Out-of-plane H and in-plane E of one mode on a uniform grid of fractional
/// coordinates (s, t) in [0,1)^2, r = s a1 + t a2.
struct ModeField {
    int ns = 0;
    int nt = 0;
    Vec2 a1 = Vec2::Zero();
    Vec2 a2 = Vec2::Zero();
    Eigen::VectorXcd h_field;   ///< index s + ns * t
    Eigen::VectorXcd ex_field;
    Eigen::VectorXcd ey_field;
    Eigen::VectorXd eps;
    Eigen::VectorXd energy_density; ///< eps |E|^2, cell integral = 1 (area in m^2)
    double cell_area = 0;

    std::size_t size() const { return static_cast<std::size_t>(ns) * static_cast<std::size_t>(nt); }
    Vec2 position(int is, int it) const;
    double element_area() const { return cell_area / static_cast<double>(size()); }
};

/// Reconstruct the field of (k_index, band_index).  `grid_resolution` is the
/// number of samples per bulk lattice period; the grid has `grid_resolution`
/// points along a1 and `grid_resolution * rows` along a2.
ModeField reconstruct_field(const BandStructure& bs, std::size_t k_index, int band_index,
                            int grid_resolution);

/// Same, from a raw coefficient vector at wave vector k (rad/m).
ModeField reconstruct_field(const Supercell& cell, const ReciprocalBasis& basis, const Vec2& k,
                            double omega_a_over_c, const Eigen::VectorXcd& coefficients,
                            int grid_resolution);

} // namespace pcw
