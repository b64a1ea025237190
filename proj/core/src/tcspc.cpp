#include "pcw/tcspc.hpp"

#include "pcw/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace pcw {
namespace {

constexpr double kFwhmToSigma = 0.42466090014400953; // 1 / (2 sqrt(2 ln 2))
constexpr double kInvSqrt2 = 0.70710678118654752;
constexpr double kInvSqrtPi = 0.56418958354775629;

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

// exp(-g u + g^2 s^2 / 2) * Phi(u/s - g s), evaluated without overflow.
double emg_density(double g, double s, double u)
{
    const double z = (g * s - u / s) * kInvSqrt2;
    if (z < 20.0) {
        return 0.5 * std::exp(-g * u + 0.5 * g * g * s * s) * std::erfc(z);
    }
    const double iz2 = 1.0 / (z * z);
    const double erfcx = kInvSqrtPi / z * (1.0 - 0.5 * iz2 + 0.75 * iz2 * iz2 - 1.875 * iz2 * iz2 * iz2);
    return 0.5 * erfcx * std::exp(-0.5 * (u / s) * (u / s));
}

// Integral over (-inf, u] of the unit exponential convolved with the IRF.
double emg_cumulative(double g, double s, double u)
{
    if (s <= 0) {
        return u > 0 ? -std::expm1(-g * u) / g : 0.0;
    }
    return (normal_cdf(u / s) - emg_density(g, s, u)) / g;
}

double emg_value(double g, double s, double u)
{
    if (s <= 0) {
        return u > 0 ? std::exp(-g * u) : 0.0;
    }
    return emg_density(g, s, u);
}

// Photons from a unit-amplitude (per ps) component over [a, b) relative to the
// excitation time, summed over all past and the next excitation pulse.
// `d_dt0` receives the derivative with respect to the excitation time.
double periodic_bin_integral(double g, double s, double a, double b, double period, double* d_dt0)
{
    double total = 0;
    double deriv = 0;
    for (int j = -1; j <= 1; ++j) {
        const double shift = j * period;
        total += emg_cumulative(g, s, b - shift) - emg_cumulative(g, s, a - shift);
        deriv -= emg_value(g, s, b - shift) - emg_value(g, s, a - shift);
    }
    // Pulses two or more periods back sit far in their exponential tail.
    const double decay_per_period = std::exp(-g * period);
    const double geometric = decay_per_period * decay_per_period / (1.0 - decay_per_period);
    const double remainder =
        std::exp(0.5 * g * g * s * s - g * a) * (-std::expm1(-g * (b - a))) / g * geometric;
    total += remainder;
    deriv += g * remainder;
    if (d_dt0 != nullptr) {
        *d_dt0 = deriv;
    }
    return total;
}

struct Profile {
    std::vector<double> value;
    std::vector<double> d_t0;
};

// Per-bin integral of a unit-onset-amplitude component (counts per bin at onset = 1).
Profile component_profile(double gamma_ns, double fwhm, double t0, const HistogramShape& shape, bool want_t0)
{
    const double g = gamma_ns * 1e-3;
    const double s = fwhm * kFwhmToSigma;
    Profile p;
    p.value.resize(shape.n_bins);
    if (want_t0) {
        p.d_t0.resize(shape.n_bins);
    }
    for (std::size_t i = 0; i < shape.n_bins; ++i) {
        const double a = static_cast<double>(i) * shape.bin_width - t0;
        const double b = a + shape.bin_width;
        double d = 0;
        p.value[i] = periodic_bin_integral(g, s, a, b, shape.rep_period, want_t0 ? &d : nullptr) / shape.bin_width;
        if (want_t0) {
            p.d_t0[i] = d / shape.bin_width;
        }
    }
    return p;
}

// ---- fitting ----------------------------------------------------------------

// Natural parameters: mono [A_f, G_f, B, t0]; bi [A_f, G_f, A_s, G_s, B, t0].
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

DecayModel unpack(const Vec& p, ModelKind kind, double fwhm)
{
    DecayModel m;
    m.kind = kind;
    m.irf_fwhm = fwhm;
    m.amp_fast = p[0];
    m.gamma_fast = p[1];
    if (kind == ModelKind::bi) {
        m.amp_slow = p[2];
        m.gamma_slow = p[3];
    } else {
        m.amp_slow = 0;
    }
    m.background = p[p.size() - 2];
    m.t0 = p[p.size() - 1];
    return m;
}

Vec pack(const DecayModel& m)
{
    if (m.kind == ModelKind::mono) {
        return Vec{{m.amp_fast, m.gamma_fast, m.background, m.t0}};
    }
    return Vec{{m.amp_fast, m.gamma_fast, m.amp_slow, m.gamma_slow, m.background, m.t0}};
}

struct Evaluation {
    std::vector<double> mu;
    Mat jac; // d mu / d natural parameter
};

Evaluation evaluate(const Vec& p, ModelKind kind, double fwhm, const HistogramShape& shape, bool with_jacobian)
{
    const int n_comp = kind == ModelKind::mono ? 1 : 2;
    const auto nb = static_cast<Eigen::Index>(shape.n_bins);
    const double t0 = p[p.size() - 1];
    Evaluation e;
    e.mu.assign(shape.n_bins, p[p.size() - 2]);
    if (with_jacobian) {
        e.jac = Mat::Zero(nb, p.size());
        e.jac.col(p.size() - 2).setOnes();
    }
    for (int c = 0; c < n_comp; ++c) {
        const double amp = p[2 * c];
        const double gamma = p[2 * c + 1];
        const Profile prof = component_profile(gamma, fwhm, t0, shape, with_jacobian);
        for (Eigen::Index i = 0; i < nb; ++i) {
            e.mu[static_cast<std::size_t>(i)] += amp * prof.value[static_cast<std::size_t>(i)];
        }
        if (!with_jacobian) {
            continue;
        }
        const double h = 1e-5 * gamma;
        const Profile up = component_profile(gamma + h, fwhm, t0, shape, false);
        const Profile dn = component_profile(gamma - h, fwhm, t0, shape, false);
        for (Eigen::Index i = 0; i < nb; ++i) {
            const auto u = static_cast<std::size_t>(i);
            e.jac(i, 2 * c) = prof.value[u];
            e.jac(i, 2 * c + 1) = amp * (up.value[u] - dn.value[u]) / (2 * h);
            e.jac(i, p.size() - 1) += amp * prof.d_t0[u];
        }
    }
    return e;
}

double nll_of(const std::vector<double>& mu, const std::vector<std::int64_t>& y)
{
    double s = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (mu[i] <= 0) {
            if (y[i] > 0) {
                return std::numeric_limits<double>::infinity();
            }
            continue;
        }
        s += mu[i] - static_cast<double>(y[i]) * std::log(mu[i]);
    }
    return s;
}

Vec nll_gradient(const Evaluation& e, const std::vector<std::int64_t>& y)
{
    Vec w(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
        w[static_cast<Eigen::Index>(i)] = 1.0 - static_cast<double>(y[i]) / e.mu[i];
    }
    return e.jac.transpose() * w;
}

bool is_log_param(Eigen::Index j, Eigen::Index n)
{
    return j < n - 2; // amplitudes and rates
}

Vec to_internal(const Vec& p, ParamSpace space)
{
    Vec t = p;
    if (space == ParamSpace::log_rate) {
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            if (is_log_param(j, p.size())) {
                t[j] = std::log(p[j]);
            }
        }
    }
    return t;
}

Vec to_natural(const Vec& t, ParamSpace space)
{
    Vec p = t;
    const Eigen::Index n = t.size();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (space == ParamSpace::log_rate && is_log_param(j, n)) {
            p[j] = std::exp(t[j]);
        } else if (is_log_param(j, n)) {
            p[j] = std::max(t[j], j % 2 == 1 ? 1e-6 : 0.0);
        }
    }
    p[n - 2] = std::max(p[n - 2], 0.0);
    return p;
}

Vec project_internal(const Vec& t, ParamSpace space)
{
    return to_internal(to_natural(t, space), space);
}

struct RawFit {
    Vec p;
    double nll = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    int iterations = 0;
    bool converged = false;
    std::string diagnostic;
};

// Freeze parameter j: no gradient, unit curvature, so the step leaves it alone.
void pin(Mat& curvature, Vec& grad, Eigen::Index j)
{
    curvature.row(j).setZero();
    curvature.col(j).setZero();
    curvature(j, j) = 1.0;
    grad[j] = 0.0;
}

RawFit levenberg_marquardt(const DecayHistogram& hist, ModelKind kind, Vec p0, const FitOptions& opt)
{
    const HistogramShape shape = HistogramShape::of(hist);
    const double fwhm = hist.irf_fwhm;
    const Eigen::Index np = p0.size();
    RawFit r;
    Vec theta = project_internal(to_internal(p0, opt.space), opt.space);
    Vec p = to_natural(theta, opt.space);
    Evaluation e = evaluate(p, kind, fwhm, shape, true);
    double nll = nll_of(e.mu, hist.counts);
    if (!std::isfinite(nll)) {
        r.diagnostic = "initial model has zero rate where counts are present";
        r.p = p;
        return r;
    }
    r.history.push_back(nll);
    double lambda = 1e-3;
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        r.iterations = iter + 1;
        // Chain rule into the internal parameterisation.
        Mat jt = e.jac;
        if (opt.space == ParamSpace::log_rate) {
            for (Eigen::Index j = 0; j < np; ++j) {
                if (is_log_param(j, np)) {
                    jt.col(j) *= p[j];
                }
            }
        }
        Vec w(jt.rows());
        Vec inv_mu(jt.rows());
        for (Eigen::Index i = 0; i < jt.rows(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            w[i] = 1.0 - static_cast<double>(hist.counts[u]) / e.mu[u];
            inv_mu[i] = 1.0 / e.mu[u];
        }
        Vec grad = jt.transpose() * w;
        Mat fisher = jt.transpose() * inv_mu.asDiagonal() * jt;
        if (hist.known_background) {
            pin(fisher, grad, np - 2);
        }

        bool accepted = false;
        while (lambda < 1e14) {
            Mat a = fisher;
            for (Eigen::Index j = 0; j < np; ++j) {
                a(j, j) += lambda * std::max(fisher(j, j), 1e-12);
            }
            const Vec step = a.ldlt().solve(-grad);
            if (!step.allFinite()) {
                lambda *= 10;
                continue;
            }
            const Vec theta_new = project_internal(theta + step, opt.space);
            const Vec p_new = to_natural(theta_new, opt.space);
            Evaluation e_new = evaluate(p_new, kind, fwhm, shape, false);
            const double nll_new = nll_of(e_new.mu, hist.counts);
            if (std::isfinite(nll_new) && nll_new < nll) {
                const double decrease = nll - nll_new;
                theta = theta_new;
                p = p_new;
                e = evaluate(p, kind, fwhm, shape, true);
                nll = nll_new;
                r.history.push_back(nll);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (decrease < opt.tolerance * std::max(1.0, std::abs(nll))) {
                    r.converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            // No descent direction left: accept as a minimum when the
            // predicted decrease is negligible.
            const double predicted = 0.5 * grad.dot(fisher.ldlt().solve(grad));
            r.converged = std::isfinite(predicted) && predicted < 1e-6;
            if (!r.converged) {
                r.diagnostic = "step rejected at maximal damping, predicted decrease " + std::to_string(predicted);
            }
            break;
        }
        if (r.converged) {
            break;
        }
    }
    if (!r.converged && r.diagnostic.empty()) {
        r.diagnostic = "iteration cap of " + std::to_string(opt.max_iterations) + " reached, NLL " +
                       std::to_string(nll);
    }
    r.p = p;
    r.nll = nll;
    return r;
}

// Observed information: central difference of the analytic NLL gradient.
Mat observed_information(const DecayHistogram& hist, ModelKind kind, const Vec& p)
{
    const HistogramShape shape = HistogramShape::of(hist);
    const Eigen::Index np = p.size();
    Mat h(np, np);
    for (Eigen::Index j = 0; j < np; ++j) {
        double scale = std::abs(p[j]);
        if (j == np - 1) {
            scale = std::max(scale, 1.0);
        } else if (j == np - 2) {
            scale = std::max(scale, 1e-2);
        }
        const double step = 1e-4 * scale;
        Vec up = p;
        Vec dn = p;
        up[j] += step;
        dn[j] -= step;
        const Vec gu = nll_gradient(evaluate(up, kind, hist.irf_fwhm, shape, true), hist.counts);
        const Vec gd = nll_gradient(evaluate(dn, kind, hist.irf_fwhm, shape, true), hist.counts);
        h.col(j) = (gu - gd) / (2 * step);
    }
    Mat info = 0.5 * (h + h.transpose());
    if (hist.known_background) {
        Vec unused = Vec::Zero(np);
        pin(info, unused, np - 2);
    }
    return info;
}

// ---- initialisation ---------------------------------------------------------

struct Regression {
    double rate_ns = 0;
    bool ok = false;
};

Regression log_linear(const std::vector<double>& t_ps, const std::vector<double>& net, std::size_t lo, std::size_t hi)
{
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    int used = 0;
    for (std::size_t i = lo; i < hi; ++i) {
        if (net[i] <= 0) {
            continue;
        }
        const double w = net[i];
        const double y = std::log(net[i]);
        sw += w;
        st += w * t_ps[i];
        sy += w * y;
        stt += w * t_ps[i] * t_ps[i];
        sty += w * t_ps[i] * y;
        ++used;
    }
    Regression r;
    const double den = sw * stt - st * st;
    if (used < 3 || den <= 0) {
        return r;
    }
    const double slope = (sw * sty - st * sy) / den;
    if (slope < 0) {
        r.rate_ns = -slope * 1e3;
        r.ok = true;
    }
    return r;
}

struct Landmarks {
    double background = 0;
    double t0 = 0;
    std::size_t tail_begin = 0; ///< first bin past the IRF after the peak
    std::size_t tail_end = 0;   ///< one past the last bin with clear signal
    std::vector<double> t_ps;
    std::vector<double> net;
};

Landmarks find_landmarks(const DecayHistogram& hist, double background)
{
    const std::size_t n = hist.n_bins();
    Landmarks lm;
    lm.background = background;
    lm.t_ps.resize(n);
    lm.net.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        lm.t_ps[i] = (static_cast<double>(i) + 0.5) * hist.bin_width;
        lm.net[i] = static_cast<double>(hist.counts[i]) - background;
    }
    const auto peak = static_cast<std::size_t>(std::max_element(hist.counts.begin(), hist.counts.end()) -
                                               hist.counts.begin());
    const double half = 0.5 * lm.net[peak];
    std::size_t i = peak;
    while (i > 0 && lm.net[i - 1] >= half) {
        --i;
    }
    if (i > 0) {
        const double frac = (half - lm.net[i - 1]) / std::max(lm.net[i] - lm.net[i - 1], 1e-12);
        lm.t0 = lm.t_ps[i - 1] + frac * hist.bin_width;
    } else {
        lm.t0 = lm.t_ps[0];
    }
    const auto skip = static_cast<std::size_t>(std::ceil(hist.irf_fwhm / hist.bin_width));
    lm.tail_begin = std::min(peak + skip, n);
    const double floor_level = std::max(3.0 * std::sqrt(background + 1.0), 2.0);
    lm.tail_end = lm.tail_begin;
    for (std::size_t j = lm.tail_begin; j < n; ++j) {
        if (lm.net[j] > floor_level) {
            lm.tail_end = j + 1;
        }
    }
    return lm;
}

// Least-squares amplitudes for fixed rates, background and t0.
Vec with_amplitudes(const DecayHistogram& hist, ModelKind kind, Vec p)
{
    const HistogramShape shape = HistogramShape::of(hist);
    const int n_comp = kind == ModelKind::mono ? 1 : 2;
    const double t0 = p[p.size() - 1];
    const double bg = p[p.size() - 2];
    Mat basis(static_cast<Eigen::Index>(shape.n_bins), n_comp);
    Vec rhs(static_cast<Eigen::Index>(shape.n_bins));
    for (int c = 0; c < n_comp; ++c) {
        const Profile prof = component_profile(p[2 * c + 1], hist.irf_fwhm, t0, shape, false);
        for (std::size_t i = 0; i < shape.n_bins; ++i) {
            basis(static_cast<Eigen::Index>(i), c) = prof.value[i];
        }
    }
    for (std::size_t i = 0; i < shape.n_bins; ++i) {
        rhs[static_cast<Eigen::Index>(i)] = static_cast<double>(hist.counts[i]) - bg;
    }
    const Vec amps = basis.colPivHouseholderQr().solve(rhs);
    const double peak = static_cast<double>(*std::max_element(hist.counts.begin(), hist.counts.end()));
    for (int c = 0; c < n_comp; ++c) {
        p[2 * c] = std::isfinite(amps[c]) ? std::max(amps[c], 1e-3 * peak) : 0.5 * peak;
    }
    return p;
}

double clamp_rate(double g)
{
    return std::clamp(g, 1e-3, 100.0);
}

std::vector<Vec> mono_starts(const DecayHistogram& hist)
{
    const std::size_t n = hist.n_bins();
    const std::size_t tail = std::max<std::size_t>(1, n / 10);
    double tail_mean = 0;
    for (std::size_t i = n - tail; i < n; ++i) {
        tail_mean += static_cast<double>(hist.counts[i]);
    }
    tail_mean /= static_cast<double>(tail);

    std::vector<Vec> starts;
    std::vector<double> backgrounds{tail_mean, 0.25 * tail_mean};
    if (hist.known_background) {
        backgrounds = {*hist.known_background};
    }
    for (double bg : backgrounds) {
        const Landmarks lm = find_landmarks(hist, bg);
        const Regression reg = log_linear(lm.t_ps, lm.net, lm.tail_begin, lm.tail_end);
        const double duration_ns = static_cast<double>(n) * hist.bin_width * 1e-3;
        const double g = clamp_rate(reg.ok ? reg.rate_ns : 3.0 / duration_ns);
        starts.push_back(with_amplitudes(hist, ModelKind::mono, Vec{{1.0, g, bg, lm.t0}}));
    }
    return starts;
}

std::vector<Vec> bi_starts(const DecayHistogram& hist, const Vec* mono)
{
    const std::size_t n = hist.n_bins();
    const std::size_t tail = std::max<std::size_t>(1, n / 10);
    double tail_mean = 0;
    for (std::size_t i = n - tail; i < n; ++i) {
        tail_mean += static_cast<double>(hist.counts[i]);
    }
    tail_mean /= static_cast<double>(tail);

    if (hist.known_background) {
        tail_mean = *hist.known_background;
    }
    std::vector<Vec> starts;
    const Landmarks lm = find_landmarks(hist, tail_mean);
    const std::size_t span = lm.tail_end > lm.tail_begin ? lm.tail_end - lm.tail_begin : 0;
    const Regression early = log_linear(lm.t_ps, lm.net, lm.tail_begin, lm.tail_begin + span / 3);
    const Regression late = log_linear(lm.t_ps, lm.net, lm.tail_begin + span / 2, lm.tail_end);
    if (early.ok && late.ok) {
        double gf = clamp_rate(early.rate_ns);
        const double gs = clamp_rate(late.rate_ns);
        if (gf < 1.5 * gs) {
            gf = 3.0 * gs;
        }
        starts.push_back(with_amplitudes(hist, ModelKind::bi, Vec{{1.0, gf, 1.0, gs, tail_mean, lm.t0}}));
    }
    if (mono != nullptr) {
        const double gm = (*mono)[1];
        const double bg = (*mono)[2];
        const double t0 = (*mono)[3];
        for (const auto& [f, s] : {std::pair{2.0, 0.25}, std::pair{1.2, 0.2}, std::pair{5.0, 0.5}}) {
            starts.push_back(with_amplitudes(
                hist, ModelKind::bi, Vec{{1.0, clamp_rate(f * gm), 1.0, clamp_rate(s * gm), bg, t0}}));
        }
    }
    return starts;
}

DecayFit finish(const DecayHistogram& hist, ModelKind kind, const RawFit& raw, const FitOptions& opt)
{
    DecayFit out;
    Vec p = raw.p;
    if (kind == ModelKind::bi && p[3] > p[1]) {
        std::swap(p[0], p[2]);
        std::swap(p[1], p[3]);
    }
    out.model = unpack(p, kind, hist.irf_fwhm);
    out.model.background_fixed = hist.known_background.has_value();
    out.converged = raw.converged;
    out.n_iterations = raw.iterations;
    out.nll = raw.nll;
    out.nll_history = raw.history;
    out.chi2_red = reduced_chi2(hist, out.model);
    if (kind == ModelKind::bi) {
        out.degenerate = out.model.gamma_fast < (1.0 + opt.degenerate_ratio) * out.model.gamma_slow;
    }
    const Mat info = observed_information(hist, kind, p);
    const Eigen::LDLT<Mat> ldlt(info);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Vec var = Vec::Constant(p.size(), nan);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        var = ldlt.solve(Mat::Identity(p.size(), p.size())).diagonal();
    }
    auto sigma = [&](Eigen::Index j) { return var[j] > 0 ? std::sqrt(var[j]) : nan; };
    out.rate_uncertainties.push_back(sigma(1));
    if (kind == ModelKind::bi) {
        out.rate_uncertainties.push_back(sigma(3));
    }
    out.amp_fast_sigma = sigma(0);
    out.t0_sigma = sigma(p.size() - 1);
    return out;
}

DecayFit best_of(const DecayHistogram& hist, ModelKind kind, const std::vector<Vec>& starts, const FitOptions& opt)
{
    RawFit best;
    std::string diagnostics;
    for (const Vec& s : starts) {
        RawFit r = levenberg_marquardt(hist, kind, s, opt);
        if (!r.converged) {
            diagnostics += (diagnostics.empty() ? "" : "; ") + r.diagnostic;
            continue;
        }
        if (!best.converged || r.nll < best.nll) {
            best = std::move(r);
        }
    }
    if (!best.converged) {
        throw FitFailure(std::string(to_string(kind)) + " fit did not converge: " + diagnostics);
    }
    return finish(hist, kind, best, opt);
}

} // namespace

std::int64_t DecayHistogram::total() const
{
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

void DecayHistogram::validate() const
{
    if (!(bin_width > 0) || !(rep_period > 0) || !(irf_fwhm >= 0)) {
        throw ParameterError("histogram needs positive bin width and repetition period");
    }
    if (counts.empty()) {
        throw ParameterError("histogram has no bins");
    }
    if (known_background && !(*known_background >= 0)) {
        throw ParameterError("known background must be non-negative");
    }
    if (static_cast<double>(counts.size()) * bin_width > rep_period * (1 + 1e-12)) {
        throw ParameterError("histogram window exceeds the repetition period");
    }
    for (auto c : counts) {
        if (c < 0) {
            throw ParameterError("histogram has negative counts");
        }
    }
}

void DecayModel::validate() const
{
    if (!(gamma_fast > 0) || (kind == ModelKind::bi && !(gamma_slow > 0))) {
        throw ParameterError("decay rates must be positive");
    }
    if (!(amp_fast >= 0) || (kind == ModelKind::bi && !(amp_slow >= 0)) || !(background >= 0)) {
        throw ParameterError("amplitudes and background must be non-negative");
    }
    if (!(irf_fwhm >= 0)) {
        throw ParameterError("IRF width must be non-negative");
    }
}

std::vector<double> expected_counts(const DecayModel& model, const HistogramShape& shape)
{
    model.validate();
    if (shape.n_bins == 0 || !(shape.bin_width > 0) || !(shape.rep_period > 0)) {
        throw ParameterError("invalid histogram shape");
    }
    return evaluate(pack(model), model.kind, model.irf_fwhm, shape, false).mu;
}

DecayHistogram synthesize(const DecayModel& model, const HistogramShape& shape, std::int64_t total_counts,
                          std::uint64_t seed, bool record_background)
{
    if (total_counts <= 0) {
        throw ParameterError("total_counts must be positive");
    }
    const std::vector<double> mu = expected_counts(model, shape);
    const double sum = std::accumulate(mu.begin(), mu.end(), 0.0);
    if (!(sum > 0)) {
        throw ParameterError("model predicts no counts");
    }
    const double scale = static_cast<double>(total_counts) / sum;
    std::mt19937_64 rng(seed);
    DecayHistogram h;
    h.bin_width = shape.bin_width;
    h.rep_period = shape.rep_period;
    h.irf_fwhm = model.irf_fwhm;
    h.t0 = model.t0;
    if (record_background) {
        h.known_background = model.background * scale;
    }
    h.counts.resize(shape.n_bins);
    for (std::size_t i = 0; i < shape.n_bins; ++i) {
        const double mean = mu[i] * scale;
        h.counts[i] = mean > 0 ? std::poisson_distribution<std::int64_t>(mean)(rng) : 0;
    }
    return h;
}

double negative_log_likelihood(const DecayHistogram& hist, const DecayModel& model)
{
    return nll_of(expected_counts(model, HistogramShape::of(hist)), hist.counts);
}

namespace {

void check_fit_input(const DecayHistogram& hist)
{
    hist.validate();
    if (hist.n_bins() < 50 || hist.total() < 1000) {
        throw ParameterError("fit needs at least 50 bins and 1000 counts (got " + std::to_string(hist.n_bins()) +
                             " bins, " + std::to_string(hist.total()) + " counts)");
    }
}

DecayFit fit_bi(const DecayHistogram& hist, const FitOptions& options, const DecayFit* mono_fit)
{
    std::optional<Vec> mono;
    if (mono_fit != nullptr) {
        mono = pack(mono_fit->model);
    } else {
        try {
            mono = pack(best_of(hist, ModelKind::mono, mono_starts(hist), options).model);
        } catch (const FitFailure&) {
        }
    }
    return best_of(hist, ModelKind::bi, bi_starts(hist, mono ? &*mono : nullptr), options);
}

} // namespace

DecayFit fit(const DecayHistogram& hist, ModelKind kind, const FitOptions& options)
{
    check_fit_input(hist);
    if (kind == ModelKind::mono) {
        return best_of(hist, kind, mono_starts(hist), options);
    }
    return fit_bi(hist, options, nullptr);
}

double reduced_chi2(const DecayHistogram& hist, const DecayModel& model)
{
    const std::vector<double> mu = expected_counts(model, HistogramShape::of(hist));
    std::vector<std::pair<double, double>> groups; // (observed, expected)
    double obs = 0;
    double exp = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        obs += static_cast<double>(hist.counts[i]);
        exp += mu[i];
        if (exp >= 5.0) {
            groups.emplace_back(obs, exp);
            obs = exp = 0;
        }
    }
    if (exp > 0 || obs > 0) {
        if (groups.empty()) {
            groups.emplace_back(obs, exp);
        } else {
            groups.back().first += obs;
            groups.back().second += exp;
        }
    }
    const int dof = static_cast<int>(groups.size()) - model.parameter_count();
    if (dof <= 0) {
        throw UndefinedError("reduced chi^2 needs more merged bins than parameters");
    }
    double chi2 = 0;
    for (const auto& [o, e] : groups) {
        chi2 += (o - e) * (o - e) / std::max(e, 1.0);
    }
    return chi2 / dof;
}

DecayFit select_model(const DecayHistogram& hist, const FitOptions& options)
{
    check_fit_input(hist);
    std::optional<DecayFit> mono;
    std::string mono_error;
    try {
        mono = best_of(hist, ModelKind::mono, mono_starts(hist), options);
        if (mono->chi2_red <= options.chi2_threshold) {
            return *mono;
        }
    } catch (const FitFailure& e) {
        mono_error = e.what();
    }
    try {
        DecayFit bi = fit_bi(hist, options, mono ? &*mono : nullptr);
        if (bi.degenerate && mono) {
            return *mono;
        }
        return bi;
    } catch (const FitFailure& e) {
        if (mono) {
            return *mono;
        }
        throw FitFailure("both models failed: " + mono_error + " | " + e.what());
    }
}

const char* to_string(ModelKind kind)
{
    return kind == ModelKind::mono ? "mono" : "bi";
}

} // namespace pcw
