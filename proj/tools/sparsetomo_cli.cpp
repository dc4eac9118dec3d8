#include "sparsetomo/experiment.hpp"
#include "sparsetomo/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace sparsetomo;

namespace {

struct Flags {
    std::string config;
    std::string model;
    int wavelet_order = 0;
    int j0 = 0;
    int j_max = 0;
    std::size_t s = 0;
    std::vector<std::size_t> ms;
    std::vector<double> betas;
    double zeta = 0.0;
    double gamma = 0.0;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::string phantom;
    double a = 0.0;
    std::string m_rule;
    double c0 = 0.0;
    bool j0_rule = false;
    bool calibrate = false;
    double ds_factor = 0.0;
    unsigned workers = 0;
};

struct Registered {
    CLI::Option* model;
    CLI::Option* wavelet_order;
    CLI::Option* j0;
    CLI::Option* j_max;
    CLI::Option* s;
    CLI::Option* m;
    CLI::Option* beta;
    CLI::Option* zeta;
    CLI::Option* gamma;
    CLI::Option* seed;
    CLI::Option* out;
    CLI::Option* phantom;
    CLI::Option* a;
    CLI::Option* m_rule;
    CLI::Option* c0;
    CLI::Option* j0_rule;
    CLI::Option* calibrate;
    CLI::Option* ds_factor;
};

Registered add_common(CLI::App* app, Flags& f) {
    Registered r{};
    app->add_option("--config", f.config, "JSON config; flags given on the command line override it")
        ->check(CLI::ExistingFile);
    r.model = app->add_option("--model", f.model, "radon | fanbeam | fourier | legendre")
                  ->check(CLI::IsMember({"radon", "fanbeam", "fourier", "legendre"}));
    r.wavelet_order = app->add_option("--wavelet-order", f.wavelet_order, "Daubechies order (vanishing moments)");
    r.j0 = app->add_option("--j0", f.j0, "truncation scale");
    r.j_max = app->add_option("--jmax", f.j_max, "finest dictionary scale");
    r.s = app->add_option("--s", f.s, "sparsity of sparse phantoms");
    r.m = app->add_option("--m", f.ms, "sample counts (fixed m rule)");
    r.beta = app->add_option("--beta", f.betas, "noise levels");
    r.zeta = app->add_option("--zeta", f.zeta, "objective weight exponent");
    r.gamma = app->add_option("--gamma", f.gamma, "failure probability in the sample-complexity rules");
    r.seed = app->add_option("--seed", f.seeds, "seeds");
    r.out = app->add_option("--out", f.out, "output directory");
    r.phantom = app->add_option("--phantom", f.phantom, "sparse | cartoon | tail")
                    ->check(CLI::IsMember({"sparse", "cartoon", "tail"}));
    r.a = app->add_option("--a", f.a, "tail decay exponent");
    r.m_rule = app->add_option("--m-rule", f.m_rule, "fixed | sparse | noise | cartoon")
                   ->check(CLI::IsMember({"fixed", "sparse", "noise", "cartoon"}));
    r.c0 = app->add_option("--c0", f.c0, "constant in the m rules");
    r.j0_rule = app->add_flag("--j0-rule", f.j0_rule, "choose j0 from beta");
    r.calibrate = app->add_flag("--calibrate", f.calibrate, "calibrate C0 on the pilot before sweeping");
    r.ds_factor = app->add_option("--ds-factor", f.ds_factor, "detector step in units of the atlas step");
    return r;
}

ExperimentConfig resolve(const Flags& f, const Registered& r) {
    ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : config_from_json_file(f.config);
    if (r.model->count()) cfg.model = f.model;
    if (r.wavelet_order->count()) cfg.wavelet_order = f.wavelet_order;
    if (r.j0->count()) cfg.j0 = cfg.phantom.j0 = f.j0;
    if (r.j_max->count()) cfg.j_max = f.j_max;
    // The default j0 follows a smaller jmax; explicit values are validated as given.
    if (f.config.empty() && !r.j0->count() && cfg.j0 > cfg.j_max) cfg.j0 = cfg.phantom.j0 = cfg.j_max;
    if (r.s->count()) cfg.phantom.s = f.s;
    if (r.m->count()) cfg.ms = f.ms;
    if (r.beta->count()) cfg.betas = f.betas;
    if (r.zeta->count()) cfg.zeta = f.zeta;
    if (r.gamma->count()) cfg.gamma = f.gamma;
    if (r.seed->count()) cfg.seeds = f.seeds;
    if (r.out->count()) cfg.out = f.out;
    if (r.phantom->count()) cfg.phantom.kind = phantom_kind_from_string(f.phantom);
    if (r.a->count()) cfg.phantom.a = f.a;
    if (r.m_rule->count()) cfg.m_rule = m_rule_from_string(f.m_rule);
    if (r.c0->count()) cfg.c0 = f.c0;
    if (r.j0_rule->count()) cfg.j0_rule = true;
    if (r.calibrate->count()) cfg.calibrate = true;
    if (r.ds_factor->count()) cfg.ds_factor = f.ds_factor;
    validate(cfg);
    return cfg;
}

void save_config(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream(cfg.out / "config.json") << config_to_json(cfg) << '\n';
}

void cmd_atlas(const ExperimentConfig& cfg) {
    const DictionaryAtlas atlas = DictionaryAtlas::build(build_filter(cfg.wavelet_order), cfg.j_max);
    save_config(cfg);
    export_atlas(atlas, cfg.out / "atlas");
    std::ofstream counts(cfg.out / "atlas_counts.csv");
    counts << "scale,count,prefix\n";
    for (int j = 0; j <= atlas.j_max(); ++j)
        counts << j << ',' << atlas.count_at_scale(j) << ',' << atlas.prefix_size(j) << '\n';
    std::cout << "atoms " << atlas.size() << ", grid " << atlas.grid().size << "x" << atlas.grid().size << ", h "
              << atlas.grid().h << '\n';
}

void cmd_reconstruct(const ExperimentConfig& cfg) {
    const ModelBundle bundle = make_model(cfg);
    const double beta = cfg.betas.front();
    const int j0 = rule_j0(cfg, beta);
    const std::size_t m = rule_samples(cfg, beta, j0, cfg.phantom.s, cfg.ms.front());
    const CellResult cell = run_cell(bundle, cfg, beta, m, j0, cfg.seeds.front());
    std::filesystem::create_directories(cfg.out);
    write_records_csv({cell.record}, cfg.out / "records.csv");
    write_timings_csv({cell.record}, cfg.out / "timings.csv");
    {
        std::ofstream coeffs(cfg.out / "coefficients.csv");
        coeffs << "index,x_true,x_hat\n";
        for (std::size_t k = 0; k < cell.lambda.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(cell.lambda[k]);
            coeffs << cell.lambda[k] << ',' << format_double(cell.phantom.coefficients[i]) << ','
                   << format_double(cell.solve.x_hat[static_cast<Eigen::Index>(k)]) << '\n';
        }
    }
    if (bundle.atlas) {
        const Image truth = cell.phantom.image ? *cell.phantom.image : bundle.atlas->synthesis(cell.phantom.coefficients);
        const Image recon = reconstruct_image(cell.solve, *bundle.atlas, cell.lambda);
        write_pgm(truth, cfg.out / "truth.pgm");
        write_pgm(recon, cfg.out / "reconstruction.pgm");
        write_image_binary(truth, cfg.out / "truth");
        write_image_binary(recon, cfg.out / "reconstruction");
    }
    const SweepRecord& r = cell.record;
    std::cout << "m " << r.m << ", j0 " << r.j0 << ", status " << r.status << ", err_l2 " << r.err_l2 << ", err_img "
              << r.err_img << ", rel_err " << r.rel_err << '\n';
}

void cmd_sweep(ExperimentConfig cfg, unsigned workers) {
    if (cfg.calibrate) {
        const Calibration cal = calibrate_c0(cfg, cfg.pilot_j0, cfg.pilot_seeds);
        cfg.c0 = cal.c0;
        std::filesystem::create_directories(cfg.out);
        std::ofstream log(cfg.out / "calibration.txt");
        log << "pilot_j0 = " << cal.pilot_j0 << "\nseeds = " << cal.seeds << "\nm_star = " << cal.m_star
            << "\nc0 = " << format_double(cal.c0) << '\n';
        for (const auto& [m, ok] : cal.trials) log << "trial m = " << m << " successes = " << ok << '\n';
        std::cout << "calibrated C0 = " << cal.c0 << " (m* = " << cal.m_star << ")\n";
    }
    save_config(cfg);
    const std::vector<SweepRecord> records = run_recovery_sweep(cfg, workers);
    write_records_csv(records, cfg.out / "records.csv");
    write_timings_csv(records, cfg.out / "timings.csv");
    const FitAxis axis = cfg.betas.size() >= 4 ? FitAxis::beta : FitAxis::m;
    try {
        write_fit(fit_scaling(records, axis), axis, cfg.out / "fit.txt");
    } catch (const FitError& e) {
        std::cout << "no fit: " << e.what() << '\n';
    }
    std::cout << records.size() << " records written to " << (cfg.out / "records.csv").string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-angle tomography with wavelet dictionaries and weighted l1 recovery"};
    app.require_subcommand(1);

    auto* atlas = app.add_subcommand("atlas", "wavelet atlas tools");
    atlas->require_subcommand(1);
    Flags atlas_flags;
    auto* atlas_build = atlas->add_subcommand("build", "build and export the atlas");
    const Registered atlas_reg = add_common(atlas_build, atlas_flags);

    Flags cert_flags;
    auto* certify = app.add_subcommand("certify", "Gram, coherence, delta* and sample-complexity report");
    const Registered cert_reg = add_common(certify, cert_flags);

    Flags rec_flags;
    auto* reconstruct = app.add_subcommand("reconstruct", "one phantom, one sample draw, one solve");
    const Registered rec_reg = add_common(reconstruct, rec_flags);

    Flags sweep_flags;
    auto* sweep = app.add_subcommand("sweep", "recovery sweep over beta, m and seeds");
    const Registered sweep_reg = add_common(sweep, sweep_flags);
    sweep->add_option("--workers", sweep_flags.workers, "worker threads (0 = hardware concurrency)");

    std::string records_path, axis_name = "beta", fit_out;
    auto* fit = app.add_subcommand("fit", "least-squares scaling fit of a records file");
    fit->add_option("--records", records_path, "records.csv")->required()->check(CLI::ExistingFile);
    fit->add_option("--axis", axis_name, "beta | m")->check(CLI::IsMember({"beta", "m"}));
    fit->add_option("--out", fit_out, "output directory (default: next to the records)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (atlas_build->parsed()) {
            cmd_atlas(resolve(atlas_flags, atlas_reg));
        } else if (certify->parsed()) {
            const ExperimentConfig cfg = resolve(cert_flags, cert_reg);
            save_config(cfg);
            run_certification_report(cfg);
            std::cout << "report written to " << cfg.out.string() << '\n';
        } else if (reconstruct->parsed()) {
            const ExperimentConfig cfg = resolve(rec_flags, rec_reg);
            save_config(cfg);
            cmd_reconstruct(cfg);
        } else if (sweep->parsed()) {
            cmd_sweep(resolve(sweep_flags, sweep_reg), sweep_flags.workers);
        } else if (fit->parsed()) {
            const FitAxis axis = fit_axis_from_string(axis_name);
            const ScalingFit result = fit_scaling(read_records_csv(records_path), axis);
            const std::filesystem::path dir =
                fit_out.empty() ? std::filesystem::path(records_path).parent_path() : std::filesystem::path(fit_out);
            write_fit(result, axis, dir / "fit.txt");
            std::cout << "exponent " << result.exponent << ", intercept " << result.intercept << ", r2 " << result.r2
                      << ", points " << result.points << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
