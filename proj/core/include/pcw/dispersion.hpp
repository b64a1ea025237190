#pragma once

// Guided-mode extraction for W1 supercells: dispersion, group velocity,
// effective mode volume and the slow-light band edge.

#include "pcw/geometry.hpp"
#include "pcw/pwe.hpp"

#include <memory>
#include <vector>

namespace pcw {

/// Bulk TE gap in scaled frequency a / lambda.
struct GapWindow {
    double nu_low = 0;
    double nu_high = 0;

    bool contains(double nu) const { return nu > nu_low && nu < nu_high; }
};

struct GuidedModeOptions {
    double localization_threshold = 0.5;
    double strip_half_width_rows = 1.5; ///< in units of the row spacing a*sqrt(3)/2
    int grid_resolution = 48;           ///< field samples per lattice period
};

/// The fundamental guided branch of a W1 waveguide.
///
/// Samples are in increasing k.  `v_g` is oriented: it is multiplied by
/// `orientation` (the sign of d omega/dk next to the band edge) so that it is
/// non-negative on the monotone segment that ends at the zone boundary.
struct WaveguideMode {
    std::vector<double> k_samples;    ///< rad/m
    std::vector<double> omega;        ///< rad/s
    std::vector<double> v_g;          ///< m/s, oriented
    std::vector<double> v_eff;        ///< m^3
    std::vector<double> localization; ///< energy fraction inside the defect strip
    double omega_edge = 0;            ///< rad/s, value at k = pi/a
    int orientation = 1;
    int parity = 0;                   ///< mirror parity of H_z (+1 even, -1 odd, 0 unknown)
    std::size_t monotone_begin = 0;   ///< first sample of the monotone segment ending at the edge

    double a = 0;      ///< lattice parameter, m
    double t_slab = 0; ///< m
    std::vector<Eigen::VectorXcd> eigenvectors;
    std::shared_ptr<const PlaneWaveProblem> problem;

    std::size_t size() const { return k_samples.size(); }
    double scaled_frequency(std::size_t i) const;
};

/// Gap between the maxima of band 1 and minima of band 2 over the path.
GapWindow bulk_gap(const BandStructure& bs);

/// kx samples in [0, pi/a]: `n_uniform` evenly spaced points plus `n_cluster`
/// points geometrically clustered toward the zone boundary.
std::vector<Vec2> guided_k_samples(double a, int n_uniform = 64, int n_cluster = 32);

/// Fraction of the cell electric energy inside |y| <= half_width_rows * a sqrt(3)/2.
double localization_fraction(const ModeField& field, int rows, double half_width_rows);

WaveguideMode extract_guided_mode(const BandStructure& bs, const GapWindow& gap,
                                  const CrystalGeometry& geom, const GuidedModeOptions& options = {});

/// Hellmann-Feynman group velocity d omega / dk along x (m/s, signed) for a
/// band of a band structure.
double group_velocity(const BandStructure& bs, std::size_t k_index, int band);

/// Oriented Hellmann-Feynman group velocity of a guided-mode sample.
double group_velocity(const WaveguideMode& mode, std::size_t k_index);

/// Central finite difference of omega(k) around sample `k_index` of the
/// guided mode with step dk (rad/m); neighbours are matched by eigenvector
/// overlap.  The step shrinks so the stencil stays inside [0, pi/a], which
/// leaves the zone-boundary samples themselves undefined (ParameterError).
/// Oriented like WaveguideMode::v_g.
double finite_difference_velocity(const WaveguideMode& mode, std::size_t k_index, double dk,
                                  int n_bands);

/// Peak-normalised per-period volume: (integral eps|E|^2 dA / max eps|E|^2) * t_slab.
/// The maximum is taken over the background dielectric, where an emitter can sit.
double effective_mode_volume(const ModeField& field, const CrystalGeometry& geom);

/// omega at k = pi/a, rad/s.
double band_edge(const WaveguideMode& mode);

/// k (rad/m) on the monotone segment with omega(k) = omega; throws OutOfBandError.
double invert_dispersion(const WaveguideMode& mode, double omega);

/// Interpolated oriented group velocity and mode volume at wave vector k.
double interpolate_group_velocity(const WaveguideMode& mode, double k);
double interpolate_mode_volume(const WaveguideMode& mode, double k);

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> y);
    double operator()(double x) const;
    double front() const { return x_.front(); }
    double back() const { return x_.back(); }

private:
    std::vector<double> x_, y_, d_;
};

} // namespace pcw
