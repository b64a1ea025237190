#pragma once

// Campaign analysis: histogram ingest, fitting, coupled/uncoupled split,
// beta estimation, the theory chain and report output.

#include "pcw/config.hpp"
#include "pcw/dispersion.hpp"
#include "pcw/emission.hpp"
#include "pcw/tcspc.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pcw {

struct GeometryConfig {
    double a_nm = 256.0;
    double r_over_a = 0.286;
    double n_eff = 2.70;
    double eps_hole = 1.0;
    double t_slab_nm = 150.0;
    double delta_a_nm = 2.0; ///< lattice-parameter uncertainty
    int n_rows = 11;
};

struct SolverConfig {
    int bulk_cutoff = 9;
    int supercell_cutoff = 7;
    int bulk_bands = 4;
    int w1_bands = 16;
    int bulk_points_per_segment = 12;
    int k_uniform = 64;
    int k_cluster = 32;
    EpsilonRule rule = EpsilonRule::inverse;
    MirrorSector sector = MirrorSector::both;
    int grid_resolution = 48;
    double localization_threshold = 0.5;
    double strip_half_width_rows = 1.5;
};

struct EmissionConfig {
    double gamma0 = 1.1;
    std::optional<double> eps; ///< default n_eff^2
    double vg_floor_fraction = 1e-3; ///< floor as a fraction of c
    double gamma_tot = 0.15;
    int n_points = 400;
};

struct TcspcConfig {
    double bin_width = 50.0;
    int n_bins = 266;
    double rep_period = kDefaultRepPeriodPs;
    double irf_fwhm = kDefaultIrfFwhmPs;
    double chi2_threshold = 1.3;
    ParamSpace space = ParamSpace::log_rate;
    int max_iterations = 300;
    bool use_known_background = true; ///< honour a calibrated background in the sidecar
};

struct ClassifyConfig {
    std::optional<double> threshold; ///< ns^-1; empty means automatic
    double fallback_threshold = 0.5;
    double min_cluster_ratio = 3.0;
};

struct AnalyzeConfig {
    bool theory = true;
    std::string input_dir;
};

struct PipelineConfig {
    GeometryConfig geometry;
    SolverConfig solver;
    EmissionConfig emission;
    TcspcConfig tcspc;
    ClassifyConfig classify;
    AnalyzeConfig analyze;
    std::string text;   ///< verbatim source
    std::string source; ///< file name for diagnostics
    Ini ini;

    static PipelineConfig from_ini(const Ini& ini);
    static PipelineConfig load(const std::string& path);
    static PipelineConfig defaults();

    CrystalGeometry crystal(double a_nm) const;
    EmissionParams emission_params(double a_nm) const;
    FitOptions fit_options() const;
};

// ---- ingest -----------------------------------------------------------------

struct HistogramMeta {
    std::string id;
    double wavelength_nm = 0;
    double lattice_nm = 0;
};

struct Measurement {
    HistogramMeta meta;
    DecayHistogram hist;
};

struct IngestResult {
    std::vector<Measurement> measurements; ///< sorted by id
    std::vector<std::string> errors;       ///< one line per skipped file
};

/// Reads `<id>.csv` (time_ps,counts) with `<id>.json` sidecars from `dir`.
IngestResult ingest(const std::string& dir);

void write_histogram(const std::string& dir, const HistogramMeta& meta, const DecayHistogram& hist);
DecayHistogram read_histogram_csv(const std::string& csv_path, HistogramMeta* meta = nullptr);

// ---- records ----------------------------------------------------------------

struct EmitterRecord {
    std::string id;
    double wavelength_nm = 0;
    double lattice_nm = 0;
    DecayFit fit;
    double scaled_freq = 0;
    bool coupled = false;
    std::optional<double> beta;
    std::string warning;

    double rate() const { return fit.reported_rate(); }
};

std::vector<EmitterRecord> fit_campaign(const std::vector<Measurement>& data, const FitOptions& options,
                                        int threads, std::vector<std::string>* errors = nullptr);

struct ClassifyResult {
    double threshold = 0;
    bool automatic = false;
    bool fell_back = false;
    std::string warning;
};

/// Marks records with rate > threshold as coupled.  Without a threshold the
/// split maximises the gap between sorted log-rates; clusters closer than
/// `min_cluster_ratio` fall back to `fallback_threshold`.
ClassifyResult classify(std::vector<EmitterRecord>& records, const ClassifyConfig& config);

double gamma_tot_mean(const std::vector<EmitterRecord>& records);

/// Sets beta on coupled records; returns warnings for records that could not
/// be assigned one.
std::vector<std::string> beta_spectrum(std::vector<EmitterRecord>& records, double gamma_tot_mean);

// ---- theory -----------------------------------------------------------------

struct TheoryResult {
    GapWindow gap;
    double band_edge_nu = 0;        ///< a/lambda at k = pi/a
    double band_edge_low = 0;       ///< interval for a -/+ delta, in nominal a/lambda
    double band_edge_high = 0;
    double v_g_edge = 0;            ///< m/s
    std::vector<EmissionPoint> curve;
    WaveguideMode mode;
};

TheoryResult theory_chain(const PipelineConfig& config, int threads = 1);

/// Band-edge interval in nominal a/lambda for a structure of lattice a +/- delta
/// with the same dimensionless edge.
std::pair<double, double> band_edge_interval(double nu_edge, double a, double delta);

// ---- report -----------------------------------------------------------------

struct Provenance {
    std::string config_text;
    std::string version;
    std::string timestamp;
};

struct CampaignReport {
    std::vector<EmitterRecord> records;
    double gamma_tot_mean = 0;
    double beta_max = 0;
    double beta_bandwidth = 0;
    double classify_threshold = 0;
    std::vector<EmissionPoint> theory_curve;
    std::optional<GapWindow> gap;
    std::optional<double> band_edge_nu;
    std::optional<std::pair<double, double>> band_edge_interval;
    std::vector<std::string> warnings;
    Provenance provenance;
};

bool operator==(const CampaignReport& a, const CampaignReport& b);

nlohmann::json to_json(const CampaignReport& report);
CampaignReport report_from_json(const nlohmann::json& j);

/// report.json, rates.csv, theory.csv, rates.svg, beta.svg.
void emit_report(const CampaignReport& report, const std::string& out_dir);

/// ingest -> fit -> classify -> beta -> (theory) -> report.
CampaignReport analyze(const PipelineConfig& config, const std::string& input_dir, int threads);

// ---- synthetic campaigns ----------------------------------------------------

struct SyntheticEmitter {
    std::string id;
    double wavelength_nm = 950;
    DecayModel model;
    std::int64_t total_counts = 50000;
};

struct Scenario {
    double lattice_nm = 256;
    HistogramShape shape;
    std::uint64_t seed = 1;
    bool record_background = true;
    std::vector<SyntheticEmitter> emitters;

    static Scenario from_ini(const Ini& ini);
};

/// Writes one histogram pair per emitter; seeds derive from (seed, index).
void write_campaign(const Scenario& scenario, const std::string& dir);

std::string version_string();
std::string utc_timestamp();

} // namespace pcw
