// pcw: band structures, emission spectra, synthetic TCSPC campaigns and
// campaign analysis from the command line.

#include "pcw/constants.hpp"
#include "pcw/errors.hpp"
#include "pcw/pipeline.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace pcw;

namespace {

std::string fmt(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_file(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw IoError("cannot write " + path.string());
    }
}

std::string band_csv(const BandStructure& bs)
{
    const double a = bs.lattice_constant();
    std::string s = "kx_a_over_2pi,ky_a_over_2pi,band_index,nu\n";
    for (std::size_t i = 0; i < bs.k_count(); ++i) {
        for (int b = 0; b < bs.band_count(); ++b) {
            s += fmt(bs.k_points[i].x() * a / kTwoPi) + "," + fmt(bs.k_points[i].y() * a / kTwoPi) + "," +
                 std::to_string(b) + "," + fmt(bs.bands(static_cast<Eigen::Index>(i), b)) + "\n";
        }
    }
    return s;
}

std::string dispersion_csv(const WaveguideMode& m)
{
    const double unit_v = m.a * m.a * m.t_slab;
    std::string s = "k_a_over_pi,nu,vg_over_c,veff_over_a2t\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        s += fmt(m.k_samples[i] * m.a / kPi) + "," + fmt(m.scaled_frequency(i)) + "," +
             fmt(m.v_g[i] / kSpeedOfLight) + "," + fmt(m.v_eff[i] / unit_v) + "\n";
    }
    return s;
}

std::string theory_csv(const std::vector<EmissionPoint>& pts)
{
    std::string s = "scaled_freq,gamma_wg_ns,beta\n";
    for (const auto& p : pts) {
        s += fmt(p.scaled_freq) + "," + fmt(p.gamma_wg) + "," + fmt(p.beta) + "\n";
    }
    return s;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Photonic-crystal waveguide emission and TCSPC decay analysis"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int threads = 1;
    app.add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the scenario seed)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* bands = app.add_subcommand("bands", "bulk or W1 band structure to CSV");
    std::string cell = "bulk";
    bands->add_option("--cell", cell, "bulk or w1")->check(CLI::IsMember({"bulk", "w1"}));

    auto* emission = app.add_subcommand("emission", "theory decay-rate curve to CSV");

    auto* synth = app.add_subcommand("synth", "synthetic campaign from a scenario file");
    std::string scenario_path;
    synth->add_option("--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);

    auto* fit_cmd = app.add_subcommand("fit", "fit a single histogram");
    std::string csv_path;
    std::string model = "auto";
    fit_cmd->add_option("histogram", csv_path, "histogram CSV with JSON sidecar")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--model", model, "auto, mono or bi")->check(CLI::IsMember({"auto", "mono", "bi"}));

    auto* analyze_cmd = app.add_subcommand("analyze", "full campaign analysis");
    std::string input_dir;
    bool no_theory = false;
    analyze_cmd->add_option("--input", input_dir, "directory of histograms (default: [analyze] input)");
    analyze_cmd->add_flag("--no-theory", no_theory, "skip the band-structure chain");

    CLI11_PARSE(app, argc, argv);

    try {
        const PipelineConfig config = config_path.empty() ? PipelineConfig::defaults() : PipelineConfig::load(config_path);
        const fs::path out(out_dir);

        if (*bands) {
            const CrystalGeometry geom = config.crystal(config.geometry.a_nm);
            SolverOptions opt;
            opt.rule = config.solver.rule;
            opt.threads = threads;
            if (cell == "bulk") {
                const Supercell bulk = make_bulk_cell(geom);
                opt.n_bands = config.solver.bulk_bands;
                const BandStructure bs =
                    solve_bands(bulk, high_symmetry_path(bulk, config.solver.bulk_points_per_segment),
                                make_basis(bulk, config.solver.bulk_cutoff), opt);
                write_file(out / "bands_bulk.csv", band_csv(bs));
                try {
                    const GapWindow gap = bulk_gap(bs);
                    std::printf("bulk gap: %.5f - %.5f (a/lambda)\n", gap.nu_low, gap.nu_high);
                } catch (const NoGapError& e) {
                    std::printf("no bulk gap: %s\n", e.what());
                }
            } else {
                const Supercell w1 = make_w1_supercell(geom, config.geometry.n_rows);
                opt.n_bands = config.solver.w1_bands;
                opt.sector = config.solver.sector;
                const BandStructure bs = solve_bands(
                    w1, guided_k_samples(geom.a, config.solver.k_uniform, config.solver.k_cluster),
                    make_basis(w1, config.solver.supercell_cutoff), opt);
                write_file(out / "bands_w1.csv", band_csv(bs));
            }
            std::printf("wrote %s\n", (out / (cell == "bulk" ? "bands_bulk.csv" : "bands_w1.csv")).string().c_str());
        } else if (*emission) {
            const TheoryResult th = theory_chain(config, threads);
            write_file(out / "theory.csv", theory_csv(th.curve));
            write_file(out / "dispersion.csv", dispersion_csv(th.mode));
            std::printf("bulk gap      %.5f - %.5f\n", th.gap.nu_low, th.gap.nu_high);
            std::printf("band edge     %.5f  (a +/- %g nm: %.5f - %.5f)\n", th.band_edge_nu,
                        config.geometry.delta_a_nm, th.band_edge_low, th.band_edge_high);
            std::printf("v_g at edge   %.3e c\n", th.v_g_edge / kSpeedOfLight);
            double peak = 0;
            for (const auto& p : th.curve) {
                peak = std::max(peak, p.gamma_wg);
            }
            std::printf("peak rate     %.3f ns^-1 (%.1f x gamma0)\n", peak, peak / config.emission.gamma0);
            std::printf("wrote %s, %s\n", (out / "theory.csv").string().c_str(),
                        (out / "dispersion.csv").string().c_str());
        } else if (*synth) {
            Scenario sc = Scenario::from_ini(Ini::load(scenario_path));
            if (*seed_opt) {
                sc.seed = seed;
            }
            write_campaign(sc, out.string());
            std::printf("wrote %zu histograms to %s\n", sc.emitters.size(), out.string().c_str());
        } else if (*fit_cmd) {
            HistogramMeta meta;
            DecayHistogram h = read_histogram_csv(csv_path, &meta);
            if (!config.tcspc.use_known_background) {
                h.known_background.reset();
            }
            const FitOptions fo = config.fit_options();
            const DecayFit f = model == "auto" ? select_model(h, fo)
                                               : fit(h, model == "mono" ? ModelKind::mono : ModelKind::bi, fo);
            CampaignReport single;
            EmitterRecord rec;
            rec.id = meta.id;
            rec.wavelength_nm = meta.wavelength_nm;
            rec.lattice_nm = meta.lattice_nm;
            rec.scaled_freq = scaled_frequency(meta.lattice_nm, meta.wavelength_nm);
            rec.fit = f;
            single.records.push_back(rec);
            std::cout << to_json(single)["records"][0].dump(2) << "\n";
        } else if (*analyze_cmd) {
            PipelineConfig cfg = config;
            if (no_theory) {
                cfg.analyze.theory = false;
            }
            std::string input = input_dir.empty() ? cfg.analyze.input_dir : input_dir;
            if (input.empty()) {
                throw ConfigError("no input directory: pass --input or set [analyze] input");
            }
            const CampaignReport report = analyze(cfg, input, threads);
            emit_report(report, out.string());
            std::printf("%zu records, mean uncoupled rate %.4f ns^-1, beta max %.3f, beta bandwidth %.4f\n",
                        report.records.size(), report.gamma_tot_mean, report.beta_max, report.beta_bandwidth);
            for (const auto& w : report.warnings) {
                std::fprintf(stderr, "warning: %s\n", w.c_str());
            }
            std::printf("wrote %s\n", (out / "report.json").string().c_str());
        }
    } catch (const pcw::Error& e) {
        std::fprintf(stderr, "pcw: %s\n", e.what());
        return 1;
    }
    return 0;
}
