#include "pcw/pipeline.hpp"

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"
#include "pcw/parallel.hpp"
#include "pcw/svg.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#ifndef PCW_VERSION
#define PCW_VERSION "unknown"
#endif

namespace pcw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v)
{
    if (!std::isfinite(v)) {
        return "nan";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

json num_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

double num_from(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Range checks with the offending line in the message.
void require(bool ok, const Ini& ini, const std::string& section, const std::string& key, const std::string& what)
{
    if (!ok) {
        throw ConfigError(ini.where(section, key) + ": [" + section + "] " + key + " " + what);
    }
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

// ---- config -----------------------------------------------------------------

PipelineConfig PipelineConfig::defaults()
{
    return from_ini(Ini::parse("", "<defaults>"));
}

PipelineConfig PipelineConfig::load(const std::string& path)
{
    return from_ini(Ini::load(path));
}

PipelineConfig PipelineConfig::from_ini(const Ini& ini)
{
    PipelineConfig c;
    c.ini = ini;
    c.text = ini.text();
    c.source = ini.source();
    const std::set<std::string> sections{"geometry", "solver", "emission", "tcspc", "classify", "analyze"};
    for (const auto& s : ini.sections()) {
        if (!sections.count(s)) {
            throw ConfigError(ini.source() + ":" + std::to_string(ini.section_line(s)) + ": unknown section [" + s +
                              "]");
        }
    }
    ini.check_keys("geometry", {"a_nm", "r_over_a", "n_eff", "eps_hole", "t_slab_nm", "delta_a_nm", "n_rows"});
    ini.check_keys("solver", {"bulk_cutoff", "supercell_cutoff", "bulk_bands", "w1_bands", "bulk_points_per_segment",
                              "k_uniform", "k_cluster", "rule", "sector", "grid_resolution",
                              "localization_threshold", "strip_half_width_rows"});
    ini.check_keys("emission", {"gamma0", "eps", "vg_floor_c", "gamma_tot", "n_points"});
    ini.check_keys("tcspc", {"bin_width_ps", "n_bins", "rep_period_ps", "irf_fwhm_ps", "chi2_threshold",
                             "param_space", "max_iterations", "background"});
    ini.check_keys("classify", {"threshold", "fallback_threshold", "min_cluster_ratio"});
    ini.check_keys("analyze", {"theory", "input"});

    auto& g = c.geometry;
    g.a_nm = ini.get_double("geometry", "a_nm", g.a_nm);
    g.r_over_a = ini.get_double("geometry", "r_over_a", g.r_over_a);
    g.n_eff = ini.get_double("geometry", "n_eff", g.n_eff);
    g.eps_hole = ini.get_double("geometry", "eps_hole", g.eps_hole);
    g.t_slab_nm = ini.get_double("geometry", "t_slab_nm", g.t_slab_nm);
    g.delta_a_nm = ini.get_double("geometry", "delta_a_nm", g.delta_a_nm);
    g.n_rows = static_cast<int>(ini.get_int("geometry", "n_rows", g.n_rows));
    require(g.a_nm > 0, ini, "geometry", "a_nm", "must be positive");
    require(g.delta_a_nm >= 0 && g.delta_a_nm < g.a_nm, ini, "geometry", "delta_a_nm", "must lie in [0, a_nm)");
    require(g.t_slab_nm > 0, ini, "geometry", "t_slab_nm", "must be positive");
    require(g.n_rows >= 7 && g.n_rows % 2 == 1, ini, "geometry", "n_rows", "must be odd and >= 7");
    try {
        c.crystal(g.a_nm).validate();
    } catch (const ParameterError& e) {
        // point at the value most likely responsible
        std::string key = "r_over_a";
        if (g.r_over_a >= 0 && g.r_over_a < 0.5) {
            key = !(g.eps_hole >= 1) ? "eps_hole" : "n_eff";
        }
        throw ConfigError(ini.where("geometry", key) + ": invalid geometry: " + e.what());
    }

    auto& s = c.solver;
    s.bulk_cutoff = static_cast<int>(ini.get_int("solver", "bulk_cutoff", s.bulk_cutoff));
    s.supercell_cutoff = static_cast<int>(ini.get_int("solver", "supercell_cutoff", s.supercell_cutoff));
    s.bulk_bands = static_cast<int>(ini.get_int("solver", "bulk_bands", s.bulk_bands));
    s.w1_bands = static_cast<int>(ini.get_int("solver", "w1_bands", s.w1_bands));
    s.bulk_points_per_segment =
        static_cast<int>(ini.get_int("solver", "bulk_points_per_segment", s.bulk_points_per_segment));
    s.k_uniform = static_cast<int>(ini.get_int("solver", "k_uniform", s.k_uniform));
    s.k_cluster = static_cast<int>(ini.get_int("solver", "k_cluster", s.k_cluster));
    s.grid_resolution = static_cast<int>(ini.get_int("solver", "grid_resolution", s.grid_resolution));
    s.localization_threshold = ini.get_double("solver", "localization_threshold", s.localization_threshold);
    s.strip_half_width_rows = ini.get_double("solver", "strip_half_width_rows", s.strip_half_width_rows);
    require(s.bulk_cutoff >= 1, ini, "solver", "bulk_cutoff", "must be >= 1");
    require(s.supercell_cutoff >= 1, ini, "solver", "supercell_cutoff", "must be >= 1");
    require(s.bulk_bands >= 2, ini, "solver", "bulk_bands", "must be >= 2");
    require(s.w1_bands >= 1, ini, "solver", "w1_bands", "must be >= 1");
    require(s.bulk_points_per_segment >= 2, ini, "solver", "bulk_points_per_segment", "must be >= 2");
    require(s.k_uniform >= 2, ini, "solver", "k_uniform", "must be >= 2");
    require(s.k_cluster >= 0, ini, "solver", "k_cluster", "must be >= 0");
    require(s.grid_resolution >= 4, ini, "solver", "grid_resolution", "must be >= 4");
    const std::string rule = lower(ini.get_string("solver", "rule", "inverse"));
    require(rule == "inverse" || rule == "direct", ini, "solver", "rule", "must be inverse or direct");
    s.rule = rule == "inverse" ? EpsilonRule::inverse : EpsilonRule::direct;
    const std::string sector = lower(ini.get_string("solver", "sector", "both"));
    require(sector == "both" || sector == "even" || sector == "odd", ini, "solver", "sector",
            "must be both, even or odd");
    s.sector = sector == "both" ? MirrorSector::both : (sector == "even" ? MirrorSector::even : MirrorSector::odd);

    auto& e = c.emission;
    e.gamma0 = ini.get_double("emission", "gamma0", e.gamma0);
    const std::string eps = lower(ini.get_string("emission", "eps", "auto"));
    if (eps != "auto") {
        e.eps = ini.get_double("emission", "eps", 0.0);
        require(*e.eps >= 1, ini, "emission", "eps", "must be >= 1");
    }
    e.vg_floor_fraction = ini.get_double("emission", "vg_floor_c", e.vg_floor_fraction);
    e.gamma_tot = ini.get_double("emission", "gamma_tot", e.gamma_tot);
    e.n_points = static_cast<int>(ini.get_int("emission", "n_points", e.n_points));
    require(e.gamma0 > 0, ini, "emission", "gamma0", "must be positive");
    require(e.vg_floor_fraction > 0 && e.vg_floor_fraction < 1, ini, "emission", "vg_floor_c", "must lie in (0, 1)");
    require(e.gamma_tot >= 0, ini, "emission", "gamma_tot", "must be >= 0");
    require(e.n_points >= 2, ini, "emission", "n_points", "must be >= 2");

    auto& t = c.tcspc;
    t.bin_width = ini.get_double("tcspc", "bin_width_ps", t.bin_width);
    t.n_bins = static_cast<int>(ini.get_int("tcspc", "n_bins", t.n_bins));
    t.rep_period = ini.get_double("tcspc", "rep_period_ps", t.rep_period);
    t.irf_fwhm = ini.get_double("tcspc", "irf_fwhm_ps", t.irf_fwhm);
    t.chi2_threshold = ini.get_double("tcspc", "chi2_threshold", t.chi2_threshold);
    t.max_iterations = static_cast<int>(ini.get_int("tcspc", "max_iterations", t.max_iterations));
    require(t.bin_width > 0, ini, "tcspc", "bin_width_ps", "must be positive");
    require(t.n_bins >= 50, ini, "tcspc", "n_bins", "must be >= 50");
    require(t.rep_period >= t.n_bins * t.bin_width, ini, "tcspc", "rep_period_ps",
            "must cover n_bins * bin_width_ps");
    require(t.irf_fwhm >= 0, ini, "tcspc", "irf_fwhm_ps", "must be >= 0");
    require(t.chi2_threshold > 0, ini, "tcspc", "chi2_threshold", "must be positive");
    require(t.max_iterations >= 1, ini, "tcspc", "max_iterations", "must be >= 1");
    const std::string space = lower(ini.get_string("tcspc", "param_space", "log"));
    require(space == "log" || space == "rate", ini, "tcspc", "param_space", "must be log or rate");
    t.space = space == "log" ? ParamSpace::log_rate : ParamSpace::rate;
    const std::string bg = lower(ini.get_string("tcspc", "background", "known"));
    require(bg == "known" || bg == "fit", ini, "tcspc", "background", "must be known or fit");
    t.use_known_background = bg == "known";

    auto& k = c.classify;
    const std::string thr = lower(ini.get_string("classify", "threshold", "auto"));
    if (thr != "auto") {
        k.threshold = ini.get_double("classify", "threshold", 0.0);
        require(*k.threshold > 0, ini, "classify", "threshold", "must be positive or auto");
    }
    k.fallback_threshold = ini.get_double("classify", "fallback_threshold", k.fallback_threshold);
    k.min_cluster_ratio = ini.get_double("classify", "min_cluster_ratio", k.min_cluster_ratio);
    require(k.fallback_threshold > 0, ini, "classify", "fallback_threshold", "must be positive");
    require(k.min_cluster_ratio >= 1, ini, "classify", "min_cluster_ratio", "must be >= 1");

    c.analyze.theory = ini.get_bool("analyze", "theory", c.analyze.theory);
    c.analyze.input_dir = ini.get_string("analyze", "input", "");
    return c;
}

CrystalGeometry PipelineConfig::crystal(double a_nm) const
{
    return CrystalGeometry::from_ratio(a_nm * 1e-9, geometry.r_over_a, geometry.n_eff, geometry.t_slab_nm * 1e-9,
                                       geometry.eps_hole);
}

EmissionParams PipelineConfig::emission_params(double a_nm) const
{
    EmissionParams p;
    p.gamma0 = emission.gamma0;
    p.eps = emission.eps.value_or(geometry.n_eff * geometry.n_eff);
    p.a = a_nm * 1e-9;
    p.vg_floor = emission.vg_floor_fraction * kSpeedOfLight;
    p.gamma_tot = emission.gamma_tot;
    return p;
}

FitOptions PipelineConfig::fit_options() const
{
    FitOptions o;
    o.space = tcspc.space;
    o.max_iterations = tcspc.max_iterations;
    o.chi2_threshold = tcspc.chi2_threshold;
    return o;
}

// ---- histogram files --------------------------------------------------------

DecayHistogram read_histogram_csv(const std::string& csv_path, HistogramMeta* meta)
{
    const fs::path csv(csv_path);
    const fs::path sidecar = fs::path(csv).replace_extension(".json");
    if (!fs::exists(sidecar)) {
        throw IoError("missing sidecar " + sidecar.filename().string());
    }
    json side;
    try {
        side = json::parse(read_text(sidecar));
    } catch (const json::exception& e) {
        throw IoError("sidecar " + sidecar.filename().string() + " is not valid JSON: " + e.what());
    }
    auto need = [&](const char* key) {
        if (!side.contains(key) || !side[key].is_number()) {
            throw IoError("sidecar " + sidecar.filename().string() + " lacks numeric '" + key + "'");
        }
        return side[key].get<double>();
    };
    DecayHistogram h;
    h.bin_width = need("bin_width");
    h.rep_period = need("rep_period");
    h.irf_fwhm = need("irf_fwhm");
    const double wavelength = need("wavelength_nm");
    const double lattice = need("lattice_nm");
    if (side.contains("background") && side["background"].is_number()) {
        h.known_background = side["background"].get<double>();
    }
    if (side.contains("t0") && side["t0"].is_number()) {
        h.t0 = side["t0"].get<double>();
    }
    if (!(wavelength > 0) || !(lattice > 0)) {
        throw IoError("sidecar " + sidecar.filename().string() + " has non-positive wavelength or lattice");
    }

    std::istringstream in(read_text(csv));
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (!header) {
            if (line != "time_ps,counts") {
                throw IoError(csv.filename().string() + ":1: expected header 'time_ps,counts'");
            }
            header = true;
            continue;
        }
        const auto comma = line.find(',');
        double t = 0;
        long long c = 0;
        if (comma == std::string::npos || !parse_double(line.substr(0, comma), t) ||
            !parse_int(line.substr(comma + 1), c)) {
            throw IoError(csv.filename().string() + ":" + std::to_string(line_no) + ": malformed row");
        }
        if (c < 0) {
            throw IoError(csv.filename().string() + ":" + std::to_string(line_no) + ": negative counts");
        }
        const double expected_t = static_cast<double>(h.counts.size()) * h.bin_width;
        if (std::abs(t - expected_t) > 1e-6 * std::max(h.bin_width, std::abs(expected_t))) {
            throw IoError(csv.filename().string() + ":" + std::to_string(line_no) +
                          ": time does not match bin_width spacing");
        }
        h.counts.push_back(c);
    }
    if (!header) {
        throw IoError(csv.filename().string() + ": empty file");
    }
    try {
        h.validate();
    } catch (const ParameterError& e) {
        throw IoError(csv.filename().string() + ": " + e.what());
    }
    if (meta != nullptr) {
        meta->id = csv.stem().string();
        meta->wavelength_nm = wavelength;
        meta->lattice_nm = lattice;
    }
    return h;
}

void write_histogram(const std::string& dir, const HistogramMeta& meta, const DecayHistogram& hist)
{
    fs::create_directories(dir);
    std::string csv = "time_ps,counts\n";
    for (std::size_t i = 0; i < hist.n_bins(); ++i) {
        csv += fmt(static_cast<double>(i) * hist.bin_width) + "," + std::to_string(hist.counts[i]) + "\n";
    }
    write_text(fs::path(dir) / (meta.id + ".csv"), csv);
    json side{{"bin_width", hist.bin_width},       {"rep_period", hist.rep_period},
              {"irf_fwhm", hist.irf_fwhm},         {"wavelength_nm", meta.wavelength_nm},
              {"lattice_nm", meta.lattice_nm},     {"t0", hist.t0}};
    if (hist.known_background) {
        side["background"] = *hist.known_background;
    }
    write_text(fs::path(dir) / (meta.id + ".json"), side.dump(2) + "\n");
}

IngestResult ingest(const std::string& dir)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw IoError("cannot read directory " + dir);
    }
    std::vector<fs::path> csvs;
    for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
        if (it->is_regular_file() && it->path().extension() == ".csv") {
            csvs.push_back(it->path());
        }
    }
    if (ec) {
        throw IoError("cannot read directory " + dir + ": " + ec.message());
    }
    std::sort(csvs.begin(), csvs.end());
    IngestResult out;
    for (const auto& p : csvs) {
        try {
            Measurement m;
            m.hist = read_histogram_csv(p.string(), &m.meta);
            out.measurements.push_back(std::move(m));
        } catch (const Error& e) {
            out.errors.push_back(p.filename().string() + ": " + e.what());
        }
    }
    if (out.measurements.empty()) {
        std::string detail;
        for (const auto& e : out.errors) {
            detail += "\n  " + e;
        }
        throw EmptyCampaignError("no valid histograms in " + dir + detail);
    }
    return out;
}

// ---- records ----------------------------------------------------------------

std::vector<EmitterRecord> fit_campaign(const std::vector<Measurement>& data, const FitOptions& options,
                                        int threads, std::vector<std::string>* errors)
{
    std::vector<std::optional<EmitterRecord>> slots(data.size());
    std::vector<std::string> failures(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) {
        const Measurement& m = data[i];
        try {
            EmitterRecord r;
            r.id = m.meta.id;
            r.wavelength_nm = m.meta.wavelength_nm;
            r.lattice_nm = m.meta.lattice_nm;
            r.scaled_freq = scaled_frequency(m.meta.lattice_nm, m.meta.wavelength_nm);
            r.fit = select_model(m.hist, options);
            slots[i] = std::move(r);
        } catch (const Error& e) {
            failures[i] = m.meta.id + ": " + e.what();
        }
    });
    std::vector<EmitterRecord> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (slots[i]) {
            out.push_back(std::move(*slots[i]));
        } else if (errors != nullptr) {
            errors->push_back(failures[i]);
        }
    }
    return out;
}

ClassifyResult classify(std::vector<EmitterRecord>& records, const ClassifyConfig& config)
{
    ClassifyResult res;
    if (config.threshold) {
        res.threshold = *config.threshold;
    } else {
        res.automatic = true;
        std::vector<double> rates;
        for (const auto& r : records) {
            rates.push_back(r.rate());
        }
        std::sort(rates.begin(), rates.end());
        double best_gap = 0;
        std::size_t split = 0;
        for (std::size_t i = 0; i + 1 < rates.size(); ++i) {
            const double gap = std::log(rates[i + 1]) - std::log(rates[i]);
            if (gap > best_gap) {
                best_gap = gap;
                split = i;
            }
        }
        if (best_gap <= 0) {
            res.fell_back = true;
            res.threshold = std::numeric_limits<double>::infinity();
            res.warning = "all rates equal; no coupled cluster";
            for (auto& r : records) {
                r.coupled = false;
            }
            return res;
        }
        if (std::exp(best_gap) < config.min_cluster_ratio) {
            res.fell_back = true;
            res.threshold = config.fallback_threshold;
            res.warning = "rate clusters closer than " + fmt(config.min_cluster_ratio) +
                          "x; using fixed threshold " + fmt(config.fallback_threshold) + " ns^-1";
        } else {
            res.threshold = std::sqrt(rates[split] * rates[split + 1]);
        }
    }
    for (auto& r : records) {
        r.coupled = r.rate() > res.threshold;
    }
    return res;
}

double gamma_tot_mean(const std::vector<EmitterRecord>& records)
{
    double sum = 0;
    int n = 0;
    for (const auto& r : records) {
        if (!r.coupled) {
            sum += r.rate();
            ++n;
        }
    }
    if (n == 0) {
        throw EstimationError("no uncoupled emitters; the mean uncoupled rate cannot be formed");
    }
    return sum / n;
}

std::vector<std::string> beta_spectrum(std::vector<EmitterRecord>& records, double mean)
{
    std::vector<std::string> warnings;
    for (auto& r : records) {
        r.beta.reset();
        if (!r.coupled) {
            continue;
        }
        try {
            r.beta = std::clamp(beta_from_measurement(r.rate(), mean), 0.0, 1.0);
        } catch (const NotCoupledError& e) {
            r.warning = e.what();
            warnings.push_back(r.id + ": " + e.what());
        }
    }
    return warnings;
}

// ---- theory -----------------------------------------------------------------

std::pair<double, double> band_edge_interval(double nu_edge, double a, double delta)
{
    if (!(a > 0) || !(delta >= 0) || !(delta < a)) {
        throw ParameterError("band_edge_interval needs 0 <= delta < a");
    }
    return {nu_edge * a / (a + delta), nu_edge * a / (a - delta)};
}

TheoryResult theory_chain(const PipelineConfig& config, int threads)
{
    const auto& gc = config.geometry;
    const auto& sc = config.solver;
    CrystalGeometry geom;
    try {
        geom = config.crystal(gc.a_nm);
        geom.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(config.ini.where("geometry", "r_over_a") + ": invalid geometry: " + e.what());
    }

    TheoryResult out;
    const Supercell bulk = make_bulk_cell(geom);
    SolverOptions bulk_opt;
    bulk_opt.n_bands = sc.bulk_bands;
    bulk_opt.rule = sc.rule;
    bulk_opt.threads = threads;
    const BandStructure bulk_bs = solve_bands(bulk, high_symmetry_path(bulk, sc.bulk_points_per_segment),
                                              make_basis(bulk, sc.bulk_cutoff), bulk_opt);
    out.gap = bulk_gap(bulk_bs);

    const Supercell w1 = make_w1_supercell(geom, gc.n_rows);
    SolverOptions w1_opt;
    w1_opt.n_bands = sc.w1_bands;
    w1_opt.rule = sc.rule;
    w1_opt.sector = sc.sector;
    w1_opt.threads = threads;
    const BandStructure w1_bs =
        solve_bands(w1, guided_k_samples(geom.a, sc.k_uniform, sc.k_cluster), make_basis(w1, sc.supercell_cutoff),
                    w1_opt);
    GuidedModeOptions gm;
    gm.grid_resolution = sc.grid_resolution;
    gm.localization_threshold = sc.localization_threshold;
    gm.strip_half_width_rows = sc.strip_half_width_rows;
    out.mode = extract_guided_mode(w1_bs, out.gap, geom, gm);
    out.band_edge_nu = out.mode.scaled_frequency(out.mode.size() - 1);
    std::tie(out.band_edge_low, out.band_edge_high) =
        band_edge_interval(out.band_edge_nu, gc.a_nm, gc.delta_a_nm);
    out.v_g_edge = std::abs(out.mode.v_g.back());
    out.curve = decay_rate_spectrum(out.mode, config.emission_params(gc.a_nm), config.emission.n_points);
    return out;
}

// ---- report -----------------------------------------------------------------

namespace {

json fit_to_json(const DecayFit& f)
{
    const auto& m = f.model;
    json unc = json::array();
    for (double u : f.rate_uncertainties) {
        unc.push_back(num_or_null(u));
    }
    json model{{"kind", to_string(m.kind)},
               {"gamma_fast", m.gamma_fast},
               {"amp_fast", m.amp_fast},
               {"background", m.background},
               {"background_fixed", m.background_fixed},
               {"irf_fwhm", m.irf_fwhm},
               {"t0", m.t0}};
    if (m.kind == ModelKind::bi) {
        model["gamma_slow"] = m.gamma_slow;
        model["amp_slow"] = m.amp_slow;
    }
    return json{{"model", model},
                {"chi2_red", num_or_null(f.chi2_red)},
                {"rate_uncertainties", unc},
                {"amp_fast_sigma", num_or_null(f.amp_fast_sigma)},
                {"t0_sigma", num_or_null(f.t0_sigma)},
                {"converged", f.converged},
                {"n_iterations", f.n_iterations},
                {"nll", num_or_null(f.nll)},
                {"degenerate", f.degenerate}};
}

DecayFit fit_from_json(const json& j)
{
    DecayFit f;
    const json& m = j.at("model");
    f.model.kind = m.at("kind").get<std::string>() == "bi" ? ModelKind::bi : ModelKind::mono;
    f.model.gamma_fast = m.at("gamma_fast").get<double>();
    f.model.amp_fast = m.at("amp_fast").get<double>();
    f.model.background = m.at("background").get<double>();
    f.model.background_fixed = m.at("background_fixed").get<bool>();
    f.model.irf_fwhm = m.at("irf_fwhm").get<double>();
    f.model.t0 = m.at("t0").get<double>();
    if (f.model.kind == ModelKind::bi) {
        f.model.gamma_slow = m.at("gamma_slow").get<double>();
        f.model.amp_slow = m.at("amp_slow").get<double>();
    } else {
        f.model.amp_slow = 0;
    }
    f.chi2_red = num_from(j.at("chi2_red"));
    for (const auto& u : j.at("rate_uncertainties")) {
        f.rate_uncertainties.push_back(num_from(u));
    }
    f.amp_fast_sigma = num_from(j.at("amp_fast_sigma"));
    f.t0_sigma = num_from(j.at("t0_sigma"));
    f.converged = j.at("converged").get<bool>();
    f.n_iterations = j.at("n_iterations").get<int>();
    f.nll = num_from(j.at("nll"));
    f.degenerate = j.at("degenerate").get<bool>();
    return f;
}

} // namespace

json to_json(const CampaignReport& r)
{
    json records = json::array();
    for (const auto& e : r.records) {
        records.push_back(json{{"id", e.id},
                               {"wavelength_nm", e.wavelength_nm},
                               {"lattice_nm", e.lattice_nm},
                               {"scaled_freq", e.scaled_freq},
                               {"rate", e.rate()},
                               {"coupled", e.coupled},
                               {"beta", e.beta ? json(*e.beta) : json(nullptr)},
                               {"warning", e.warning},
                               {"fit", fit_to_json(e.fit)}});
    }
    json curve = json::array();
    for (const auto& p : r.theory_curve) {
        curve.push_back(json::array({p.scaled_freq, p.gamma_wg, p.beta}));
    }
    json theory{{"curve", curve}};
    theory["gap"] = r.gap ? json::array({r.gap->nu_low, r.gap->nu_high}) : json(nullptr);
    theory["band_edge"] = r.band_edge_nu ? json(*r.band_edge_nu) : json(nullptr);
    theory["band_edge_interval"] = r.band_edge_interval
                                       ? json::array({r.band_edge_interval->first, r.band_edge_interval->second})
                                       : json(nullptr);
    return json{{"records", records},
                {"gamma_tot_mean", num_or_null(r.gamma_tot_mean)},
                {"beta_max", num_or_null(r.beta_max)},
                {"beta_bandwidth", num_or_null(r.beta_bandwidth)},
                {"classify_threshold", num_or_null(r.classify_threshold)},
                {"theory", theory},
                {"warnings", r.warnings},
                {"conventions",
                 {{"rates", "ns^-1, fast component of the selected model"},
                  {"v_eff", "per-period peak-normalised: integral(eps|E|^2 dA) / max(eps|E|^2) * t_slab, "
                            "maximum over the background dielectric"},
                  {"chi2", "Pearson, bins merged until expected >= 5, denominator max(expected, 1)"},
                  {"scaled_frequency", "a / lambda"}}},
                {"provenance",
                 {{"config", r.provenance.config_text},
                  {"version", r.provenance.version},
                  {"timestamp", r.provenance.timestamp}}}};
}

CampaignReport report_from_json(const json& j)
{
    CampaignReport r;
    for (const auto& e : j.at("records")) {
        EmitterRecord rec;
        rec.id = e.at("id").get<std::string>();
        rec.wavelength_nm = e.at("wavelength_nm").get<double>();
        rec.lattice_nm = e.at("lattice_nm").get<double>();
        rec.scaled_freq = e.at("scaled_freq").get<double>();
        rec.coupled = e.at("coupled").get<bool>();
        if (!e.at("beta").is_null()) {
            rec.beta = e.at("beta").get<double>();
        }
        rec.warning = e.at("warning").get<std::string>();
        rec.fit = fit_from_json(e.at("fit"));
        r.records.push_back(std::move(rec));
    }
    r.gamma_tot_mean = num_from(j.at("gamma_tot_mean"));
    r.beta_max = num_from(j.at("beta_max"));
    r.beta_bandwidth = num_from(j.at("beta_bandwidth"));
    r.classify_threshold = num_from(j.at("classify_threshold"));
    const json& th = j.at("theory");
    for (const auto& p : th.at("curve")) {
        r.theory_curve.push_back(EmissionPoint{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    }
    if (!th.at("gap").is_null()) {
        r.gap = GapWindow{th["gap"][0].get<double>(), th["gap"][1].get<double>()};
    }
    if (!th.at("band_edge").is_null()) {
        r.band_edge_nu = th["band_edge"].get<double>();
    }
    if (!th.at("band_edge_interval").is_null()) {
        r.band_edge_interval =
            std::make_pair(th["band_edge_interval"][0].get<double>(), th["band_edge_interval"][1].get<double>());
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    const json& pv = j.at("provenance");
    r.provenance.config_text = pv.at("config").get<std::string>();
    r.provenance.version = pv.at("version").get<std::string>();
    r.provenance.timestamp = pv.at("timestamp").get<std::string>();
    return r;
}

bool operator==(const CampaignReport& a, const CampaignReport& b)
{
    return to_json(a) == to_json(b);
}

void emit_report(const CampaignReport& report, const std::string& out_dir)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir);
    }
    const fs::path dir(out_dir);
    write_text(dir / "report.json", to_json(report).dump(2) + "\n");

    std::string rates = "id,scaled_freq,rate_ns,model,chi2_red,coupled,beta\n";
    for (const auto& r : report.records) {
        rates += r.id + "," + fmt(r.scaled_freq) + "," + fmt(r.rate()) + "," + to_string(r.fit.model.kind) + "," +
                 fmt(r.fit.chi2_red) + "," + (r.coupled ? "1" : "0") + "," + (r.beta ? fmt(*r.beta) : "") + "\n";
    }
    write_text(dir / "rates.csv", rates);

    std::string theory = "scaled_freq,gamma_wg_ns,beta\n";
    for (const auto& p : report.theory_curve) {
        theory += fmt(p.scaled_freq) + "," + fmt(p.gamma_wg) + "," + fmt(p.beta) + "\n";
    }
    write_text(dir / "theory.csv", theory);

    SvgPlot::Points coupled, uncoupled, curve, betas;
    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -xlo;
    for (const auto& r : report.records) {
        (r.coupled ? coupled : uncoupled).emplace_back(r.scaled_freq, r.rate());
        xlo = std::min(xlo, r.scaled_freq);
        xhi = std::max(xhi, r.scaled_freq);
        if (r.beta) {
            betas.emplace_back(r.scaled_freq, *r.beta);
        }
    }
    for (const auto& p : report.theory_curve) {
        curve.emplace_back(p.scaled_freq, p.gamma_wg);
    }
    SvgPlot rate_plot;
    rate_plot.title("Decay rate vs scaled frequency").x_label("a / lambda").y_label("rate (1/ns)").log_y();
    if (report.band_edge_interval) {
        rate_plot.band(report.band_edge_interval->first, report.band_edge_interval->second, "#999999",
                       "band edge (a +/- delta)");
        xlo = std::min(xlo, report.band_edge_interval->first);
        xhi = std::max(xhi, report.band_edge_interval->second);
    }
    if (std::isfinite(xlo) && xhi > xlo) {
        const double pad = 0.15 * (xhi - xlo);
        rate_plot.x_range(xlo - pad, xhi + pad);
    }
    if (!curve.empty()) {
        rate_plot.line(curve, "#d62728", "theory");
    }
    if (std::isfinite(report.gamma_tot_mean)) {
        rate_plot.hline(report.gamma_tot_mean, "#1f77b4", "mean uncoupled");
    }
    rate_plot.scatter(uncoupled, "#1f77b4", "uncoupled").scatter(coupled, "#d62728", "coupled");
    rate_plot.save((dir / "rates.svg").string());

    SvgPlot beta_plot(480, 320);
    beta_plot.title("beta factor").x_label("a / lambda").y_label("beta");
    beta_plot.hline(0.5, "#555555", "beta = 0.5").scatter(betas, "#2ca02c", "coupled");
    beta_plot.save((dir / "beta.svg").string());
}

CampaignReport analyze(const PipelineConfig& config, const std::string& input_dir, int threads)
{
    IngestResult in = ingest(input_dir);
    if (!config.tcspc.use_known_background) {
        for (auto& m : in.measurements) {
            m.hist.known_background.reset();
        }
    }
    CampaignReport report;
    for (const auto& e : in.errors) {
        report.warnings.push_back("skipped " + e);
    }
    std::vector<std::string> fit_errors;
    report.records = fit_campaign(in.measurements, config.fit_options(), threads, &fit_errors);
    for (const auto& e : fit_errors) {
        report.warnings.push_back("fit failed " + e);
    }
    const ClassifyResult cls = classify(report.records, config.classify);
    report.classify_threshold = cls.threshold;
    if (!cls.warning.empty()) {
        report.warnings.push_back("classify: " + cls.warning);
    }
    try {
        report.gamma_tot_mean = gamma_tot_mean(report.records);
        for (auto& w : beta_spectrum(report.records, report.gamma_tot_mean)) {
            report.warnings.push_back("beta: " + w);
        }
    } catch (const EstimationError& e) {
        report.gamma_tot_mean = std::numeric_limits<double>::quiet_NaN();
        report.warnings.push_back(e.what());
    }
    std::vector<EmissionPoint> measured;
    for (const auto& r : report.records) {
        if (r.beta) {
            report.beta_max = std::max(report.beta_max, *r.beta);
            measured.push_back(EmissionPoint{r.scaled_freq, r.rate(), *r.beta});
        }
    }
    std::sort(measured.begin(), measured.end(),
              [](const EmissionPoint& l, const EmissionPoint& r) { return l.scaled_freq < r.scaled_freq; });
    report.beta_bandwidth = beta_bandwidth(measured);

    if (config.analyze.theory) {
        const TheoryResult th = theory_chain(config, threads);
        report.theory_curve = th.curve;
        report.gap = th.gap;
        report.band_edge_nu = th.band_edge_nu;
        report.band_edge_interval = std::make_pair(th.band_edge_low, th.band_edge_high);
    }
    report.provenance.config_text = config.text;
    report.provenance.version = version_string();
    report.provenance.timestamp = utc_timestamp();
    return report;
}

// ---- synthetic campaigns ----------------------------------------------------

Scenario Scenario::from_ini(const Ini& ini)
{
    if (!ini.has_section("campaign")) {
        throw ConfigError(ini.source() + ": scenario needs a [campaign] section");
    }
    ini.check_keys("campaign", {"lattice_nm", "seed", "bin_width_ps", "n_bins", "rep_period_ps", "irf_fwhm_ps",
                                "counts", "background", "t0_ps", "slow_amplitude_ratio", "record_background"});
    Scenario s;
    s.lattice_nm = ini.get_double("campaign", "lattice_nm", s.lattice_nm);
    s.seed = static_cast<std::uint64_t>(ini.get_int("campaign", "seed", static_cast<long long>(s.seed)));
    s.shape.bin_width = ini.get_double("campaign", "bin_width_ps", s.shape.bin_width);
    s.shape.n_bins = static_cast<std::size_t>(ini.get_int("campaign", "n_bins", 266));
    s.shape.rep_period = ini.get_double("campaign", "rep_period_ps", s.shape.rep_period);
    s.record_background = ini.get_bool("campaign", "record_background", s.record_background);
    const double irf = ini.get_double("campaign", "irf_fwhm_ps", kDefaultIrfFwhmPs);
    const long long counts = ini.get_int("campaign", "counts", 50000);
    const double background = ini.get_double("campaign", "background", 1.0);
    const double t0 = ini.get_double("campaign", "t0_ps", 500.0);
    const double slow_ratio = ini.get_double("campaign", "slow_amplitude_ratio", 0.05);
    require(s.lattice_nm > 0, ini, "campaign", "lattice_nm", "must be positive");
    require(s.shape.bin_width > 0, ini, "campaign", "bin_width_ps", "must be positive");
    require(s.shape.n_bins >= 50, ini, "campaign", "n_bins", "must be >= 50");
    require(static_cast<double>(s.shape.n_bins) * s.shape.bin_width <= s.shape.rep_period, ini, "campaign",
            "rep_period_ps", "must cover n_bins * bin_width_ps");
    require(counts > 0, ini, "campaign", "counts", "must be positive");

    for (const auto& section : ini.sections()) {
        if (section == "campaign") {
            continue;
        }
        if (section.rfind("emitter.", 0) != 0 || section.size() == 8) {
            throw ConfigError(ini.source() + ":" + std::to_string(ini.section_line(section)) +
                              ": unknown section [" + section + "]");
        }
        ini.check_keys(section, {"wavelength_nm", "gamma_fast", "gamma_slow", "slow_amplitude_ratio", "counts",
                                 "background", "t0_ps"});
        SyntheticEmitter e;
        e.id = section.substr(8);
        e.wavelength_nm = ini.get_double(section, "wavelength_nm", 0.0);
        require(e.wavelength_nm > 0, ini, section, "wavelength_nm", "must be positive");
        e.total_counts = ini.get_int(section, "counts", counts);
        require(e.total_counts > 0, ini, section, "counts", "must be positive");
        DecayModel& m = e.model;
        m.irf_fwhm = irf;
        m.t0 = ini.get_double(section, "t0_ps", t0);
        m.background = ini.get_double(section, "background", background);
        require(m.background >= 0, ini, section, "background", "must be >= 0");
        m.gamma_fast = ini.get_double(section, "gamma_fast", 0.0);
        require(m.gamma_fast > 0, ini, section, "gamma_fast", "must be positive");
        m.amp_fast = 100.0;
        if (ini.has(section, "gamma_slow")) {
            m.kind = ModelKind::bi;
            m.gamma_slow = ini.get_double(section, "gamma_slow", 0.0);
            require(m.gamma_slow > 0 && m.gamma_slow < m.gamma_fast, ini, section, "gamma_slow",
                    "must lie in (0, gamma_fast)");
            m.amp_slow = m.amp_fast * ini.get_double(section, "slow_amplitude_ratio", slow_ratio);
            require(m.amp_slow >= 0, ini, section, "slow_amplitude_ratio", "must be >= 0");
        }
        s.emitters.push_back(std::move(e));
    }
    if (s.emitters.empty()) {
        throw ConfigError(ini.source() + ": scenario defines no [emitter.<id>] sections");
    }
    return s;
}

void write_campaign(const Scenario& scenario, const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory " + dir);
    }
    for (std::size_t i = 0; i < scenario.emitters.size(); ++i) {
        const auto& e = scenario.emitters[i];
        const std::uint64_t seed = splitmix64(scenario.seed ^ splitmix64(i + 1));
        const DecayHistogram h = synthesize(e.model, scenario.shape, e.total_counts, seed, scenario.record_background);
        write_histogram(dir, HistogramMeta{e.id, e.wavelength_nm, scenario.lattice_nm}, h);
    }
}

std::string version_string()
{
    return PCW_VERSION;
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace pcw
