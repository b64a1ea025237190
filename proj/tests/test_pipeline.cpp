#include <doctest.h>

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"
#include "pcw/pipeline.hpp"
#include "pcw/svg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pcw;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name)
{
    const fs::path p = fs::path(PCW_TEST_TMP) / "pipeline" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Scenario campaign_scenario()
{
    return Scenario::from_ini(Ini::load(PCW_SOURCE_DIR "/configs/scenarios/a256_campaign.ini"));
}

EmitterRecord record(const std::string& id, double rate)
{
    EmitterRecord r;
    r.id = id;
    r.fit.model.gamma_fast = rate;
    return r;
}

std::vector<EmitterRecord> records_of(std::initializer_list<double> rates)
{
    std::vector<EmitterRecord> out;
    int i = 0;
    for (double r : rates) {
        out.push_back(record("e" + std::to_string(i++), r));
    }
    return out;
}

std::vector<bool> flags(const std::vector<EmitterRecord>& rs)
{
    std::vector<bool> out;
    for (const auto& r : rs) {
        out.push_back(r.coupled);
    }
    return out;
}

// Tag-balance check: every element closes in order, attributes are quoted.
bool well_formed_xml(const std::string& s, int* circles_with_marker)
{
    std::vector<std::string> stack;
    int markers = 0;
    std::size_t i = 0;
    while ((i = s.find('<', i)) != std::string::npos) {
        const std::size_t end = s.find('>', i);
        if (end == std::string::npos) {
            return false;
        }
        std::string tag = s.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.rfind("?", 0) == 0 || tag.rfind("!--", 0) == 0) {
            continue;
        }
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) {
            return false;
        }
        if (tag.front() == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) {
                return false;
            }
            stack.pop_back();
            continue;
        }
        const bool self_closing = tag.back() == '/';
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (name == "circle" && tag.find("class=\"marker\"") != std::string::npos) {
            ++markers;
        }
        if (!self_closing) {
            stack.push_back(name);
        }
    }
    if (circles_with_marker != nullptr) {
        *circles_with_marker = markers;
    }
    return stack.empty();
}

const CampaignReport& campaign_report()
{
    static const CampaignReport report = [] {
        const std::string dir = fresh_dir("campaign");
        write_campaign(campaign_scenario(), dir);
        PipelineConfig cfg = PipelineConfig::defaults();
        cfg.analyze.theory = false;
        return analyze(cfg, dir, 1);
    }();
    return report;
}

} // namespace

TEST_CASE("ingest a 26-emitter campaign")
{
    const std::string dir = fresh_dir("ingest");
    write_campaign(campaign_scenario(), dir);
    const auto in = ingest(dir);
    CHECK(in.measurements.size() == 26);
    CHECK(in.errors.empty());
    CHECK(std::is_sorted(in.measurements.begin(), in.measurements.end(),
                         [](const Measurement& a, const Measurement& b) { return a.meta.id < b.meta.id; }));
    const auto& m = in.measurements.front();
    CHECK(m.meta.lattice_nm == 256);
    CHECK(m.hist.n_bins() == 266);
    CHECK(m.hist.bin_width == 50);
    CHECK(m.hist.known_background.has_value());

    // a file with negative counts is skipped and reported
    {
        std::ofstream(fs::path(dir) / "zz_bad.csv") << "time_ps,counts\n0,5\n50,-3\n100,4\n";
        fs::copy_file(fs::path(dir) / "qd01.json", fs::path(dir) / "zz_bad.json");
        std::ofstream(fs::path(dir) / "zz_nosidecar.csv") << "time_ps,counts\n0,5\n50,3\n";
    }
    const auto again = ingest(dir);
    CHECK(again.measurements.size() == 26);
    REQUIRE(again.errors.size() == 2);
    CHECK(again.errors[0].find("zz_bad.csv") != std::string::npos);
    CHECK(again.errors[0].find("negative") != std::string::npos);
    CHECK(again.errors[1].find("zz_nosidecar.csv") != std::string::npos);
}

TEST_CASE("ingest errors")
{
    CHECK_THROWS_AS(ingest(fresh_dir("empty")), EmptyCampaignError);
    CHECK_THROWS_AS(ingest(PCW_TEST_TMP "/does/not/exist"), IoError);
    const std::string dir = fresh_dir("only_bad");
    std::ofstream(fs::path(dir) / "a.csv") << "when,what\n0,1\n";
    std::ofstream(fs::path(dir) / "a.json") << R"({"bin_width": 50, "wavelength_nm": 950, "lattice_nm": 256})";
    CHECK_THROWS_AS(ingest(dir), EmptyCampaignError);
}

TEST_CASE("histogram files round-trip")
{
    const std::string dir = fresh_dir("roundtrip");
    DecayModel m;
    m.gamma_fast = 0.7;
    m.background = 2;
    const auto h = synthesize(m, HistogramShape{}, 20000, 9, true);
    write_histogram(dir, {"x1", 981.0, 256}, h);
    HistogramMeta meta;
    const auto back = read_histogram_csv((fs::path(dir) / "x1.csv").string(), &meta);
    CHECK(back.counts == h.counts);
    CHECK(back.bin_width == h.bin_width);
    CHECK(back.rep_period == h.rep_period);
    CHECK(back.irf_fwhm == h.irf_fwhm);
    CHECK(back.t0 == h.t0);
    CHECK(back.known_background == h.known_background);
    CHECK(meta.id == "x1");
    CHECK(meta.wavelength_nm == 981.0);
    CHECK(meta.lattice_nm == 256);
}

TEST_CASE("classification")
{
    ClassifyConfig fixed;
    fixed.threshold = 0.5;
    auto two = records_of({0.05, 1.34});
    classify(two, fixed);
    CHECK(flags(two) == std::vector<bool>{false, true});

    ClassifyConfig automatic;
    auto same = records_of({0.3, 0.3, 0.3});
    const auto res = classify(same, automatic);
    CHECK(res.fell_back);
    CHECK_FALSE(res.warning.empty());
    CHECK(flags(same) == std::vector<bool>{false, false, false});

    // Brute force: the split with the widest log gap, checked over every
    // split point of the sorted rates.
    auto four = records_of({3.0, 0.2, 3.5, 0.3});
    const auto r4 = classify(four, automatic);
    CHECK(r4.automatic);
    CHECK_FALSE(r4.fell_back);
    CHECK(r4.threshold > 0.3);
    CHECK(r4.threshold < 3.0);
    CHECK(flags(four) == std::vector<bool>{true, false, true, false});
    std::vector<double> sorted{0.2, 0.3, 3.0, 3.5};
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        if (std::log(sorted[i + 1] / sorted[i]) > std::log(sorted[best + 1] / sorted[best])) {
            best = i;
        }
    }
    CHECK(sorted[best] < r4.threshold);
    CHECK(sorted[best + 1] > r4.threshold);

    // Clusters too close together use the fixed fallback.
    auto close = records_of({0.2, 0.3, 0.45, 0.6});
    const auto rc = classify(close, automatic);
    CHECK(rc.fell_back);
    CHECK(rc.threshold == automatic.fallback_threshold);
    CHECK(flags(close) == std::vector<bool>{false, false, false, true});
}

TEST_CASE("automatic classification is scale invariant")
{
    const std::initializer_list<double> base{0.11, 0.2, 0.14, 1.3, 0.9, 0.16, 2.2};
    ClassifyConfig automatic;
    auto a = records_of(base);
    classify(a, automatic);
    for (double s : {1e-3, 0.37, 7.3, 1e4}) {
        auto b = a;
        for (auto& r : b) {
            r.fit.model.gamma_fast *= s;
        }
        classify(b, automatic);
        CHECK(flags(b) == flags(a));
    }
}

TEST_CASE("mean uncoupled rate")
{
    auto rs = records_of({0.1, 0.2, 0.15, 1.34});
    rs[3].coupled = true;
    CHECK(gamma_tot_mean(rs) == doctest::Approx(0.15));
    auto one = records_of({0.21});
    CHECK(gamma_tot_mean(one) == 0.21);
    auto none = records_of({1.0});
    none[0].coupled = true;
    CHECK_THROWS_AS(gamma_tot_mean(none), EstimationError);
}

TEST_CASE("beta spectrum")
{
    auto rs = records_of({1.34, 0.1});
    rs[0].coupled = true;
    CHECK(beta_spectrum(rs, 0.15).empty());
    CHECK(std::abs(*rs[0].beta - 0.888) < 1e-3);
    CHECK_FALSE(rs[1].beta.has_value());

    auto hi = records_of({3.5});
    hi[0].coupled = true;
    beta_spectrum(hi, 0.4);
    CHECK(std::abs(*hi[0].beta - 0.886) < 1e-3);

    auto low = records_of({0.2});
    low[0].coupled = true;
    const auto warnings = beta_spectrum(low, 0.4);
    CHECK(warnings.size() == 1);
    CHECK_FALSE(low[0].beta.has_value());
    CHECK_FALSE(low[0].warning.empty());

    // Dropping uncoupled emitters moves only beta, via the mean.
    auto full = records_of({0.1, 0.2, 0.15, 0.9, 1.34});
    ClassifyConfig automatic;
    classify(full, automatic);
    auto reduced = full;
    reduced.erase(reduced.begin());
    const double m_full = gamma_tot_mean(full);
    const double m_reduced = gamma_tot_mean(reduced);
    beta_spectrum(full, m_full);
    beta_spectrum(reduced, m_reduced);
    for (std::size_t i = 0; i < reduced.size(); ++i) {
        const auto& a = full[i + 1];
        const auto& b = reduced[i];
        CHECK(a.rate() == b.rate());
        CHECK(a.coupled == b.coupled);
        if (a.coupled) {
            CHECK(*a.beta >= 0.0);
            CHECK(*a.beta <= 1.0);
            CHECK(*a.beta != *b.beta);
        }
    }
}

TEST_CASE("analysis of the synthetic campaign")
{
    const auto& report = campaign_report();
    REQUIRE(report.records.size() == 26);
    int coupled = 0;
    for (const auto& r : report.records) {
        coupled += r.coupled ? 1 : 0;
        if (r.beta) {
            CHECK(*r.beta >= 0.0);
            CHECK(*r.beta <= 1.0);
        }
        CHECK(r.scaled_freq == doctest::Approx(256.0 / r.wavelength_nm).epsilon(1e-12));
    }
    CHECK(coupled == 10);
    CHECK(report.gamma_tot_mean == doctest::Approx(0.15).epsilon(0.1));
    CHECK(report.beta_max > 0.85);
    CHECK(report.beta_max < 0.92);
    CHECK(report.beta_bandwidth > 0.01);
    CHECK(report.theory_curve.empty());
    CHECK_FALSE(report.gap.has_value());
    CHECK(report.provenance.version == version_string());
}

TEST_CASE("report JSON round-trip")
{
    CampaignReport report = campaign_report();
    // include the theory-side fields as well
    report.gap = GapWindow{0.2613, 0.3182};
    report.band_edge_nu = 0.267;
    report.band_edge_interval = band_edge_interval(0.267, 256, 2);
    report.theory_curve = {{0.2671, 30.5, 0.995}, {0.27, 2.5, 0.94}};
    report.warnings.push_back("a \"quoted\" warning");
    const auto j = to_json(report);
    const auto back = report_from_json(j);
    CHECK(back == report);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(j.contains("conventions"));
    CHECK(j["provenance"]["config"].is_string());

    // changing a record breaks equality
    auto changed = back;
    changed.records[0].fit.model.gamma_fast *= 1.0 + 1e-15;
    CHECK_FALSE(changed == report);
}

TEST_CASE("emitted report files")
{
    const auto& report = campaign_report();
    const std::string out = fresh_dir("report");
    emit_report(report, out);
    for (const char* f : {"report.json", "rates.csv", "theory.csv", "rates.svg", "beta.svg"}) {
        CHECK(fs::exists(fs::path(out) / f));
    }
    const std::string csv = read_file(fs::path(out) / "rates.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 27);
    CHECK(csv.rfind("id,scaled_freq,rate_ns,model,chi2_red,coupled,beta\n", 0) == 0);

    int markers = 0;
    CHECK(well_formed_xml(read_file(fs::path(out) / "rates.svg"), &markers));
    CHECK(markers == 26);
    int beta_markers = 0;
    CHECK(well_formed_xml(read_file(fs::path(out) / "beta.svg"), &beta_markers));
    int with_beta = 0;
    for (const auto& r : report.records) {
        with_beta += r.beta ? 1 : 0;
    }
    CHECK(beta_markers == with_beta);

    const auto reloaded = report_from_json(nlohmann::json::parse(read_file(fs::path(out) / "report.json")));
    CHECK(reloaded == report);

    // unwritable destination
    const fs::path blocker = fs::path(out) / "blocker";
    std::ofstream(blocker) << "x";
    CHECK_THROWS_AS(emit_report(report, (blocker / "sub").string()), IoError);
}

TEST_CASE("svg escaping")
{
    CHECK(xml_escape("a<b & \"c\">") == "a&lt;b &amp; &quot;c&quot;&gt;");
    SvgPlot plot;
    plot.title("rates <ns^-1>").scatter({{1, 2}, {2, 3}}, "#f00", "x & y");
    int markers = 0;
    CHECK(well_formed_xml(plot.render(), &markers));
    CHECK(markers == 2);
}

TEST_CASE("band-edge interval")
{
    const auto [lo, hi] = band_edge_interval(0.267, 256, 2);
    CHECK(lo < 0.267);
    CHECK(hi > 0.267);
    CHECK(lo == doctest::Approx(0.267 * 256 / 258));
    CHECK(hi == doctest::Approx(0.267 * 256 / 254));
    const auto [z0, z1] = band_edge_interval(0.267, 256, 0);
    CHECK(z0 == 0.267);
    CHECK(z1 == 0.267);
    CHECK_THROWS_AS(band_edge_interval(0.267, 256, 300), ParameterError);
}

TEST_CASE("the dimensionless band edge does not depend on the lattice parameter")
{
    // This is what lets the interval rescale the nominal edge.
    auto edge_at = [](double a) {
        const auto geom = CrystalGeometry::from_ratio(a, 0.286, 2.7);
        const auto w1 = make_w1_supercell(geom, 11);
        SolverOptions opt;
        opt.n_bands = 10;
        opt.sector = MirrorSector::even;
        return solve_bands(w1, {Vec2{kPi / a, 0}}, make_basis(w1, 5), opt);
    };
    const auto a = edge_at(256e-9);
    const auto b = edge_at(258e-9);
    for (int band = 0; band < a.band_count(); ++band) {
        CHECK(b.bands(0, band) == doctest::Approx(a.bands(0, band)).epsilon(1e-10));
        CHECK(b.omega(0, band) == doctest::Approx(a.omega(0, band) * 256.0 / 258.0).epsilon(1e-10));
    }
}

TEST_CASE("theory chain on reduced sampling")
{
    PipelineConfig cfg = PipelineConfig::from_ini(Ini::parse(
        "[solver]\nk_uniform = 12\nk_cluster = 6\nsector = even\nbulk_points_per_segment = 6\n[emission]\nn_points = 120\n"));
    const auto th = theory_chain(cfg, 1);
    CHECK(th.gap.nu_low == doctest::Approx(0.253).epsilon(0.08));
    CHECK(th.gap.contains(th.band_edge_nu));
    CHECK(th.band_edge_nu == doctest::Approx(0.261).epsilon(0.08));
    CHECK(th.band_edge_low < th.band_edge_nu);
    CHECK(th.band_edge_high > th.band_edge_nu);
    CHECK(th.v_g_edge < kSpeedOfLight / 100);
    REQUIRE(th.curve.size() == 120);
    double peak = 0;
    for (const auto& p : th.curve) {
        peak = std::max(peak, p.gamma_wg);
        CHECK(p.beta >= 0.0);
        CHECK(p.beta <= 1.0);
    }
    CHECK(peak > 10 * cfg.emission.gamma0);

    PipelineConfig bad = PipelineConfig::defaults();
    bad.geometry.r_over_a = 0.5;
    CHECK_THROWS_AS(theory_chain(bad, 1), ConfigError);
}

TEST_CASE("scenario files")
{
    const auto s = campaign_scenario();
    CHECK(s.emitters.size() == 26);
    CHECK(s.lattice_nm == 256);
    int bi = 0;
    for (const auto& e : s.emitters) {
        bi += e.model.kind == ModelKind::bi ? 1 : 0;
    }
    CHECK(bi == 10);
    CHECK_THROWS_AS(Scenario::from_ini(Ini::parse("[emitter.x]\nwavelength_nm = 950\n")), ConfigError);

    // per-emitter seeds make every histogram independent of campaign order
    const std::string d1 = fresh_dir("seed1");
    const std::string d2 = fresh_dir("seed2");
    write_campaign(s, d1);
    write_campaign(s, d2);
    CHECK(read_file(fs::path(d1) / "qd05.csv") == read_file(fs::path(d2) / "qd05.csv"));
    CHECK(read_file(fs::path(d1) / "qd05.csv") != read_file(fs::path(d1) / "qd06.csv"));
}
