#pragma once

// Spontaneous-emission rate into a slow-light waveguide mode and the
// resulting single-photon beta factor.

#include "pcw/constants.hpp"
#include "pcw/dispersion.hpp"

#include <vector>

namespace pcw {

/// Rates are in ns^-1; velocities, lengths and volumes in SI.
struct EmissionParams {
    double gamma0 = 1.1;        ///< homogeneous-medium decay rate
    double eps = 2.7 * 2.7;     ///< permittivity in the rate formula
    double a = 256e-9;          ///< lattice parameter, m
    double vg_floor = kSpeedOfLight / 1000.0;
    double gamma_tot = 0.15;    ///< rate into all other channels, used for theory beta

    void validate() const;
};

struct EmissionPoint {
    double scaled_freq = 0; ///< a / lambda
    double gamma_wg = 0;    ///< ns^-1
    double beta = 0;
};

/// Gamma0 * 3 pi c^3 a / (V omega^2 eps^(3/2) max(v_g, floor)), in ns^-1.
double decay_rate(double omega, double v_g, double v_eff, const EmissionParams& p);

/// Rate spectrum over the monotone part of the guided branch, ascending in
/// scaled frequency.  Beta uses p.gamma_tot.
std::vector<EmissionPoint> decay_rate_spectrum(const WaveguideMode& mode, const EmissionParams& p,
                                               int n_points);

double beta_factor(double gamma_wg, double gamma_tot);

/// 1 - gamma_tot_mean / gamma_fast; throws NotCoupledError when not positive.
double beta_from_measurement(double gamma_fast, double gamma_tot_mean);

double scaled_frequency(double a, double lambda);

/// Relative width (hi - lo) / mid of the scaled-frequency span where
/// beta > threshold, crossings interpolated linearly.  A lone point above
/// threshold has zero width.  Points must be sorted by scaled frequency.
double beta_bandwidth(const std::vector<EmissionPoint>& points, double threshold = 0.5);

} // namespace pcw
