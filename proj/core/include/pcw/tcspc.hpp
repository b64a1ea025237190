#pragma once

// Time-resolved decay histograms: IRF-convolved exponential models with
// periodic excitation, Poisson synthesis and maximum-likelihood fitting.
//
// Times are in ps, rates in ns^-1, amplitudes in counts per bin at onset.

#include <cstdint>
#include <optional>
#include <vector>

namespace pcw {

inline constexpr double kDefaultRepPeriodPs = 1e6 / 75.0;
inline constexpr double kDefaultIrfFwhmPs = 280.0;

struct DecayHistogram {
    double bin_width = 50.0;                  ///< ps
    std::vector<std::int64_t> counts;
    double t0 = 0.0;                          ///< nominal excitation time, ps
    double rep_period = kDefaultRepPeriodPs;  ///< ps
    double irf_fwhm = kDefaultIrfFwhmPs;      ///< ps
    /// Separately calibrated background (counts/bin); when set, fits hold it fixed.
    std::optional<double> known_background;

    std::size_t n_bins() const { return counts.size(); }
    std::int64_t total() const;
    void validate() const;
};

/// Bin layout of a histogram without its data.
struct HistogramShape {
    std::size_t n_bins = 266;
    double bin_width = 50.0;
    double rep_period = kDefaultRepPeriodPs;

    static HistogramShape of(const DecayHistogram& h) { return {h.n_bins(), h.bin_width, h.rep_period}; }
};

enum class ModelKind { mono, bi };

struct DecayModel {
    ModelKind kind = ModelKind::mono;
    double gamma_fast = 1.0;  ///< ns^-1
    double gamma_slow = 0.1;  ///< ns^-1, bi only
    double amp_fast = 100.0;  ///< counts/bin
    double amp_slow = 0.0;    ///< counts/bin, bi only
    double background = 0.0;  ///< counts/bin
    double irf_fwhm = kDefaultIrfFwhmPs;
    double t0 = 500.0;        ///< excitation time, ps
    bool background_fixed = false;

    int parameter_count() const { return (kind == ModelKind::mono ? 4 : 6) - (background_fixed ? 1 : 0); }
    void validate() const;
};

struct DecayFit {
    DecayModel model;
    double chi2_red = 0;
    std::vector<double> rate_uncertainties; ///< 1 sigma, ns^-1: fast (, slow)
    double amp_fast_sigma = 0;
    double t0_sigma = 0;
    bool converged = false;
    int n_iterations = 0;
    double nll = 0;
    std::vector<double> nll_history; ///< negative log-likelihood of each accepted iterate
    bool degenerate = false;         ///< bi fit whose two rates lie within 5%

    /// The rate attributed to the emitter: the fast component.
    double reported_rate() const { return model.gamma_fast; }
};

enum class ParamSpace { log_rate, rate };

struct FitOptions {
    ParamSpace space = ParamSpace::log_rate;
    int max_iterations = 300;
    double tolerance = 1e-10;       ///< relative NLL change at convergence
    double chi2_threshold = 1.3;
    double degenerate_ratio = 0.05;
};

/// Expected counts per bin: Gaussian-IRF-convolved exponentials, wrapped over
/// the repetition period, integrated over each bin, plus background.
std::vector<double> expected_counts(const DecayModel& model, const HistogramShape& shape);

/// Poisson draws whose expected total is `total_counts`.  With
/// `record_background` the scaled background is stored as known_background.
DecayHistogram synthesize(const DecayModel& model, const HistogramShape& shape, std::int64_t total_counts,
                          std::uint64_t seed, bool record_background = false);

/// Poisson negative log-likelihood, dropping the data-only log(y!) term.
double negative_log_likelihood(const DecayHistogram& hist, const DecayModel& model);

DecayFit fit(const DecayHistogram& hist, ModelKind kind, const FitOptions& options = {});

/// Pearson chi^2 per degree of freedom over bins merged until expected >= 5.
double reduced_chi2(const DecayHistogram& hist, const DecayModel& model);

/// Mono first; bi when the mono chi^2_red exceeds the threshold, unless the
/// bi fit is degenerate.
DecayFit select_model(const DecayHistogram& hist, const FitOptions& options = {});

const char* to_string(ModelKind kind);

} // namespace pcw
