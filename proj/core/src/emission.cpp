#include "pcw/emission.hpp"

#include "pcw/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pcw {

void EmissionParams::validate() const
{
    if (!(gamma0 > 0)) {
        throw ParameterError("gamma0 must be positive");
    }
    if (!(eps >= 1)) {
        throw ParameterError("eps must be >= 1");
    }
    if (!(a > 0)) {
        throw ParameterError("lattice parameter must be positive");
    }
    if (!(vg_floor > 0)) {
        throw ParameterError("vg_floor must be positive");
    }
    if (!(gamma_tot >= 0)) {
        throw ParameterError("gamma_tot must be >= 0");
    }
}

double decay_rate(double omega, double v_g, double v_eff, const EmissionParams& p)
{
    p.validate();
    if (!(omega > 0) || !(v_g >= 0) || !(v_eff > 0)) {
        throw ParameterError("decay_rate needs positive omega and V_eff and non-negative v_g");
    }
    const double c = kSpeedOfLight;
    const double v = std::max(v_g, p.vg_floor);
    const double ratio = 3.0 * kPi * c * c * c * p.a / (v_eff * omega * omega * std::pow(p.eps, 1.5) * v);
    return p.gamma0 * ratio;
}

std::vector<EmissionPoint> decay_rate_spectrum(const WaveguideMode& mode, const EmissionParams& p,
                                               int n_points)
{
    p.validate();
    if (mode.size() < 2 || mode.size() - mode.monotone_begin < 2) {
        throw ParameterError("guided branch needs at least two monotone samples");
    }
    if (n_points < 2) {
        throw ParameterError("spectrum needs at least two points");
    }
    const auto first = mode.omega.begin() + static_cast<long>(mode.monotone_begin);
    const auto [lo_it, hi_it] = std::minmax_element(first, mode.omega.end());
    const double w_lo = *lo_it;
    const double w_hi = *hi_it;

    std::vector<EmissionPoint> out;
    out.reserve(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        const double omega = w_lo + (w_hi - w_lo) * i / (n_points - 1);
        const double k = invert_dispersion(mode, omega);
        // Residual image-coupling slopes can dip below zero next to the edge.
        const double v_g = std::max(interpolate_group_velocity(mode, k), 0.0);
        const double v_eff = interpolate_mode_volume(mode, k);
        EmissionPoint pt;
        pt.scaled_freq = omega * p.a / (kTwoPi * kSpeedOfLight);
        pt.gamma_wg = decay_rate(omega, std::max(v_g, p.vg_floor), v_eff, p);
        pt.beta = beta_factor(pt.gamma_wg, p.gamma_tot);
        out.push_back(pt);
    }
    return out;
}

double beta_factor(double gamma_wg, double gamma_tot)
{
    if (!(gamma_wg >= 0) || !(gamma_tot >= 0)) {
        throw ParameterError("rates must be non-negative");
    }
    if (gamma_wg == 0 && gamma_tot == 0) {
        throw UndefinedError("beta undefined when both rates vanish");
    }
    return gamma_wg / (gamma_wg + gamma_tot);
}

double beta_from_measurement(double gamma_fast, double gamma_tot_mean)
{
    if (!(gamma_tot_mean >= 0)) {
        throw ParameterError("gamma_tot_mean must be non-negative");
    }
    if (!(gamma_fast > gamma_tot_mean)) {
        throw NotCoupledError("fast rate " + std::to_string(gamma_fast) + " does not exceed the uncoupled mean " +
                              std::to_string(gamma_tot_mean));
    }
    return 1.0 - gamma_tot_mean / gamma_fast;
}

double scaled_frequency(double a, double lambda)
{
    if (!(a > 0) || !(lambda > 0)) {
        throw ParameterError("a and lambda must be positive");
    }
    return a / lambda;
}

double beta_bandwidth(const std::vector<EmissionPoint>& points, double threshold)
{
    std::size_t first = points.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].beta > threshold) {
            first = std::min(first, i);
            last = i;
        }
    }
    if (first == points.size()) {
        return 0.0;
    }
    // Crossings by linear interpolation against the neighbouring sample below
    // threshold; a curve that is still above at the end of the range stops there.
    auto crossing = [&](std::size_t in, std::size_t out) {
        const auto& p = points[in];
        const auto& q = points[out];
        const double t = (p.beta - threshold) / (p.beta - q.beta);
        return p.scaled_freq + t * (q.scaled_freq - p.scaled_freq);
    };
    const double lo = first > 0 ? crossing(first, first - 1) : points[first].scaled_freq;
    const double hi = last + 1 < points.size() ? crossing(last, last + 1) : points[last].scaled_freq;
    if (first == last || !(hi > lo)) {
        return 0.0;
    }
    return (hi - lo) / (0.5 * (hi + lo));
}

} // namespace pcw
