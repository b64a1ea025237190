#include "pcw/dispersion.hpp"

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace pcw {
namespace {

double overlap(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b)
{
    return std::abs(a.dot(b));
}

int best_match(const std::vector<Eigen::VectorXcd>& candidates, const Eigen::VectorXcd& reference)
{
    int best = 0;
    double best_overlap = -1;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        const double o = overlap(reference, candidates[j]);
        if (o > best_overlap) {
            best_overlap = o;
            best = static_cast<int>(j);
        }
    }
    return best;
}

struct Candidate {
    ModeField field;
    double localization = 0;
};

} // namespace

double WaveguideMode::scaled_frequency(std::size_t i) const
{
    return omega.at(i) * a / (kTwoPi * kSpeedOfLight);
}

GapWindow bulk_gap(const BandStructure& bs)
{
    if (bs.band_count() < 2 || bs.k_count() == 0) {
        throw ParameterError("bulk_gap needs at least two bands");
    }
    GapWindow gap;
    gap.nu_low = bs.bands.col(0).maxCoeff();
    gap.nu_high = bs.bands.col(1).minCoeff();
    if (!(gap.nu_high > gap.nu_low)) {
        throw NoGapError("no gap between bands 1 and 2 (max band 1 = " + std::to_string(gap.nu_low) +
                         ", min band 2 = " + std::to_string(gap.nu_high) + ")");
    }
    return gap;
}

std::vector<Vec2> guided_k_samples(double a, int n_uniform, int n_cluster)
{
    if (n_uniform < 2 || n_cluster < 0) {
        throw ParameterError("need >= 2 uniform k samples");
    }
    const double zone_edge = kPi / a;
    std::vector<double> fractions;
    for (int i = 0; i < n_uniform; ++i) {
        fractions.push_back(static_cast<double>(i) / (n_uniform - 1));
    }
    const double widest = 1.0 / (n_uniform - 1);
    const double narrowest = 1e-4;
    for (int j = 1; j <= n_cluster; ++j) {
        const double delta = widest * std::pow(narrowest / widest, static_cast<double>(j) / n_cluster);
        fractions.push_back(1.0 - delta);
    }
    std::sort(fractions.begin(), fractions.end());
    fractions.erase(std::unique(fractions.begin(), fractions.end(),
                                [](double l, double r) { return std::abs(l - r) < 1e-12; }),
                    fractions.end());
    std::vector<Vec2> out;
    out.reserve(fractions.size());
    for (double f : fractions) {
        out.emplace_back(f * zone_edge, 0.0);
    }
    return out;
}

double localization_fraction(const ModeField& field, int rows, double half_width_rows)
{
    const double limit = half_width_rows / rows + 1e-12;
    double inside = 0;
    double total = 0;
    for (int it = 0; it < field.nt; ++it) {
        double t = static_cast<double>(it) / field.nt;
        t -= std::round(t);
        double row_sum = 0;
        for (int is = 0; is < field.ns; ++is) {
            row_sum += field.energy_density[is + field.ns * it];
        }
        total += row_sum;
        if (std::abs(t) <= limit) {
            inside += row_sum;
        }
    }
    return total > 0 ? inside / total : 0.0;
}

double group_velocity(const BandStructure& bs, std::size_t k_index, int band)
{
    if (k_index >= bs.k_count() || band < 0 || band >= bs.band_count()) {
        throw ParameterError("group_velocity: index out of range");
    }
    const double nu = bs.bands(static_cast<Eigen::Index>(k_index), band);
    if (!(nu > 1e-12)) {
        throw UndefinedError("group velocity undefined at zero frequency");
    }
    const double a = bs.lattice_constant();
    const double derivative = bs.problem->operator_derivative(
        bs.k_points[k_index] * a, bs.eigenvectors[k_index][band], Vec2{1.0, 0.0});
    return kSpeedOfLight * derivative / (2.0 * kTwoPi * nu);
}

double group_velocity(const WaveguideMode& mode, std::size_t k_index)
{
    if (k_index >= mode.size()) {
        throw ParameterError("group_velocity: index out of range");
    }
    const double omega_a_over_c = mode.omega[k_index] * mode.a / kSpeedOfLight;
    if (!(omega_a_over_c > 1e-12)) {
        throw UndefinedError("group velocity undefined at zero frequency");
    }
    const double derivative = mode.problem->operator_derivative(
        Vec2{mode.k_samples[k_index] * mode.a, 0.0}, mode.eigenvectors[k_index], Vec2{1.0, 0.0});
    return mode.orientation * kSpeedOfLight * derivative / (2.0 * omega_a_over_c);
}

double finite_difference_velocity(const WaveguideMode& mode, std::size_t k_index, double dk,
                                  int n_bands)
{
    if (k_index >= mode.size()) {
        throw ParameterError("finite_difference_velocity: index out of range");
    }
    const auto& problem = *mode.problem;
    const MirrorSector sector = !problem.has_mirror_blocks() || mode.parity == 0
                                    ? MirrorSector::both
                                    : (mode.parity > 0 ? MirrorSector::even : MirrorSector::odd);
    const auto& reference = mode.eigenvectors[k_index];
    auto omega_at = [&](double k) {
        const Eigenpairs pairs = problem.solve(Vec2{k * mode.a, 0.0}, n_bands, sector);
        std::vector<Eigen::VectorXcd> columns;
        for (Eigen::Index c = 0; c < pairs.vectors.cols(); ++c) {
            columns.push_back(pairs.vectors.col(c));
        }
        const int j = best_match(columns, reference);
        return kSpeedOfLight * std::sqrt(std::max(pairs.values[j], 0.0)) / mode.a;
    };
    const double k = mode.k_samples[k_index];
    // omega(k) is even about 0 and pi/a, so a stencil crossing either point
    // sees a folded branch; shrink the step to stay inside.
    const double zone = kPi / mode.a;
    const double h = std::min({dk, k, zone - k});
    if (!(h > 0)) {
        throw ParameterError("finite_difference_velocity: sample lies on the zone boundary");
    }
    return mode.orientation * (omega_at(k + h) - omega_at(k - h)) / (2.0 * h);
}

double effective_mode_volume(const ModeField& field, const CrystalGeometry& geom)
{
    double peak = 0;
    double integral = 0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        integral += field.energy_density[idx];
        if (std::abs(field.eps[idx] - geom.eps_bg) < 1e-12 * geom.eps_bg) {
            peak = std::max(peak, field.energy_density[idx]);
        }
    }
    integral *= field.element_area();
    if (!(peak > 0) || !(integral > 0)) {
        throw UndefinedError("effective mode volume undefined for a zero field");
    }
    return integral / peak * geom.t_slab;
}

WaveguideMode extract_guided_mode(const BandStructure& bs, const GapWindow& gap,
                                  const CrystalGeometry& geom, const GuidedModeOptions& options)
{
    const std::size_t nk = bs.k_count();
    if (nk == 0) {
        throw ParameterError("empty band structure");
    }
    const double a = bs.lattice_constant();
    const int rows = bs.cell().rows;
    for (const auto& k : bs.k_points) {
        if (std::abs(k.y()) > 1e-12 / a) {
            throw ParameterError("guided-mode extraction needs ky = 0");
        }
    }
    if (std::abs(bs.k_points.back().x() * a - kPi) > 1e-9) {
        throw ParameterError("guided-mode k path must end at the zone boundary pi/a");
    }

    auto evaluate = [&](std::size_t i, int b) -> std::optional<Candidate> {
        const double nu = bs.bands(static_cast<Eigen::Index>(i), b);
        if (!gap.contains(nu)) {
            return std::nullopt;
        }
        Candidate c{reconstruct_field(bs, i, b, options.grid_resolution), 0.0};
        c.localization = localization_fraction(c.field, rows, options.strip_half_width_rows);
        if (c.localization < options.localization_threshold) {
            return std::nullopt;
        }
        return c;
    };

    // Fundamental branch: lowest localized in-gap band at the zone boundary.
    std::vector<std::size_t> k_idx;
    std::vector<int> band_idx;
    std::vector<Candidate> accepted;
    for (int b = 0; b < bs.band_count(); ++b) {
        if (auto c = evaluate(nk - 1, b)) {
            k_idx.push_back(nk - 1);
            band_idx.push_back(b);
            accepted.push_back(std::move(*c));
            break;
        }
    }
    if (accepted.empty()) {
        throw NoGuidedModeError("no localized band inside the gap at k = pi/a");
    }
    // Follow the branch toward k = 0 by eigenvector overlap.
    for (std::size_t i = nk - 1; i-- > 0;) {
        const auto& previous = bs.eigenvectors[k_idx.back()][band_idx.back()];
        const int j = best_match(bs.eigenvectors[i], previous);
        auto c = evaluate(i, j);
        if (!c) {
            break;
        }
        k_idx.push_back(i);
        band_idx.push_back(j);
        accepted.push_back(std::move(*c));
    }
    std::reverse(k_idx.begin(), k_idx.end());
    std::reverse(band_idx.begin(), band_idx.end());
    std::reverse(accepted.begin(), accepted.end());

    WaveguideMode mode;
    mode.a = a;
    mode.t_slab = geom.t_slab;
    mode.problem = bs.problem;
    mode.parity = bs.parity[k_idx.back()].empty() ? 0 : bs.parity[k_idx.back()][band_idx.back()];
    const std::size_t n = k_idx.size();
    for (std::size_t s = 0; s < n; ++s) {
        mode.k_samples.push_back(bs.k_points[k_idx[s]].x());
        mode.omega.push_back(bs.omega(k_idx[s], band_idx[s]));
        mode.eigenvectors.push_back(bs.eigenvectors[k_idx[s]][band_idx[s]]);
        mode.localization.push_back(accepted[s].localization);
        mode.v_eff.push_back(effective_mode_volume(accepted[s].field, geom));
    }
    mode.omega_edge = mode.omega.back();

    // Orientation from the secant over the last 5% of the zone.  Weak coupling
    // between periodic images leaves a tiny residual slope right at pi/a, so
    // the local slope of the final samples is not trusted, and reversals below
    // `tol` do not end the monotone segment.
    if (n >= 2) {
        const double k_ref = 0.95 * mode.k_samples.back();
        std::size_t ref = n - 2;
        while (ref > 0 && mode.k_samples[ref] > k_ref) {
            --ref;
        }
        mode.orientation = mode.omega[n - 1] >= mode.omega[ref] ? 1 : -1;
        const double tol = 1e-6 * mode.omega_edge;
        std::size_t begin = n - 1;
        while (begin > 0 && mode.orientation * (mode.omega[begin] - mode.omega[begin - 1]) > -tol) {
            --begin;
        }
        mode.monotone_begin = begin;
    } else {
        mode.orientation = 1;
        mode.monotone_begin = 0;
    }
    for (std::size_t s = 0; s < n; ++s) {
        mode.v_g.push_back(group_velocity(mode, s));
    }
    return mode;
}

double band_edge(const WaveguideMode& mode)
{
    return mode.omega_edge;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y))
{
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) {
        throw ParameterError("interpolation needs at least two samples");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(x_[i] > x_[i - 1])) {
            throw ParameterError("interpolation abscissae must be strictly increasing");
        }
    }
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] > 0) {
            const double w1 = 2 * h[i] + h[i - 1];
            const double w2 = h[i] + 2 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
}

double MonotoneCubic::operator()(double x) const
{
    const std::size_t n = x_.size();
    std::size_t i = 0;
    if (x >= x_[n - 1]) {
        i = n - 2;
    } else if (x > x_[0]) {
        i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    }
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
           (t3 - t2) * h * d_[i + 1];
}

double invert_dispersion(const WaveguideMode& mode, double omega)
{
    const std::size_t n = mode.size();
    const std::size_t begin = mode.monotone_begin;
    if (n - begin < 2) {
        if (n >= 1 && omega == mode.omega.back()) {
            return mode.k_samples.back();
        }
        throw OutOfBandError("guided branch has fewer than two monotone samples");
    }
    const std::vector<double> ks(mode.k_samples.begin() + static_cast<long>(begin), mode.k_samples.end());
    std::vector<double> ws(mode.omega.begin() + static_cast<long>(begin), mode.omega.end());
    // Flatten sub-tolerance reversals so the interpolant is monotone.
    for (std::size_t i = 1; i < ws.size(); ++i) {
        ws[i] = mode.orientation > 0 ? std::max(ws[i], ws[i - 1]) : std::min(ws[i], ws[i - 1]);
    }
    if (omega == mode.omega_edge) {
        return ks.back();
    }
    const auto [lo_it, hi_it] = std::minmax_element(ws.begin(), ws.end());
    if (omega < *lo_it || omega > *hi_it) {
        throw OutOfBandError("frequency outside the guided branch");
    }
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (mode.omega[begin + i] == omega) {
            return ks[i];
        }
    }
    const MonotoneCubic curve(ks, ws);
    // Bracket between consecutive samples, then bisect on the interpolant.
    std::size_t seg = 0;
    for (; seg + 1 < ws.size(); ++seg) {
        if ((ws[seg] - omega) * (ws[seg + 1] - omega) <= 0) {
            break;
        }
    }
    double lo = ks[seg];
    double hi = ks[seg + 1];
    const double f_lo = ws[seg] - omega;
    for (int iter = 0; iter < 200 && hi - lo > 1e-15 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = curve(mid) - omega;
        if ((f_mid < 0) == (f_lo < 0)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double interpolate_group_velocity(const WaveguideMode& mode, double k)
{
    if (mode.size() < 2) {
        return mode.v_g.at(0);
    }
    return MonotoneCubic(mode.k_samples, mode.v_g)(k);
}

double interpolate_mode_volume(const WaveguideMode& mode, double k)
{
    if (mode.size() < 2) {
        return mode.v_eff.at(0);
    }
    return MonotoneCubic(mode.k_samples, mode.v_eff)(k);
}

} // namespace pcw
