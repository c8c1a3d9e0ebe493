// otmap: sample generation, estimator fits, evaluation, experiments, rates,
// plots and stability certificates from the command line.
//
// Exit codes: 0 success, 2 configuration / input error, 3 numeric or domain failure.

#include "otmap/harness.hpp"
#include "otmap/model.hpp"
#include "otmap/rng.hpp"
#include "otmap/semidual.hpp"
#include "otmap/synthetic.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace otmap;
namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path) {
    const std::string text = harness::read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

void write_json(const std::string& path, const nlohmann::json& j) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
    } else {
        harness::write_file(path, j.dump(2) + "\n");
    }
}

/// Sample file: {problem, seed, X:{d,n,points}, Y:{d,n,points}}.
struct SampleFile {
    synthetic::TestProblem problem;
    std::uint64_t seed = 0;
    SampleSet X;
    SampleSet Y;
};

SampleFile read_samples(const fs::path& path) {
    const nlohmann::json j = read_json(path);
    try {
        SampleFile s{synthetic::problem_from_json(j.at("problem")), j.value("seed", std::uint64_t{0}),
                     synthetic::samples_from_json(j.at("X")), synthetic::samples_from_json(j.at("Y"))};
        if (static_cast<std::size_t>(s.X.cols()) != s.problem.dim() || s.Y.cols() != s.X.cols()) {
            throw ConfigError("samples: X, Y and the problem must share a dimension");
        }
        if (s.X.rows() == 0 || s.X.rows() != s.Y.rows()) throw ConfigError("samples: X and Y must be non-empty and of equal size");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

harness::Format parse_format(const std::string& f) {
    if (f == "csv") return harness::Format::csv;
    if (f == "json") return harness::Format::json;
    if (f == "svg") return harness::Format::svg;
    throw ConfigError("unknown format '" + f + "' (expected csv, json or svg)");
}

// ---- subcommands -------------------------------------------------------------

struct GenArgs {
    std::string problem = "id";
    std::size_t d = 1;
    std::size_t n = 100;
    std::uint64_t seed = 0;
    std::size_t m = 2;
    double kappa = 0.002;
    std::uint64_t tau_seed = 0;
    bool same_draw = false;
    std::string out;
};

int run_gen(const GenArgs& a) {
    if (a.n < 1) throw ConfigError("gen: n must be >= 1");
    nlohmann::json pj = {{"name", a.problem}, {"d", a.d}};
    if (a.problem == "bump") {
        pj["m"] = a.m;
        pj["kappa"] = a.kappa;
        pj["seed"] = a.tau_seed;
    }
    const synthetic::TestProblem p = synthetic::problem_from_json(pj);
    const SampleSet X = synthetic::sample_source(p, a.n, derive_seed(a.seed, {1}));
    const SampleSet Y = a.same_draw ? p.map_all(X) : synthetic::pushforward_sample(p, synthetic::sample_source(p, a.n, derive_seed(a.seed, {2})));
    write_json(a.out, {{"problem", p}, {"seed", a.seed}, {"X", synthetic::samples_to_json(X)}, {"Y", synthetic::samples_to_json(Y)}});
    return 0;
}

struct FitArgs {
    std::string samples;
    std::string estimator = "wavelet";
    std::size_t grid_n = 65;
    std::optional<std::size_t> scale;
    std::string pipeline = "envelope";
    std::size_t quad_n = 33;
    std::optional<double> nu_kernel;
    std::optional<double> nu_ridge;
    bool nearest_neighbor = false;
    std::size_t max_iters = OptimizerOptions{}.max_iters;
    std::string out;
};

int run_fit(const FitArgs& a) {
    const SampleFile s = read_samples(a.samples);
    const auto& p = s.problem;
    if (a.estimator != "wavelet" && a.estimator != "kernel" && a.estimator != "matching") {
        throw ConfigError("fit: unknown estimator '" + a.estimator + "' (expected wavelet, kernel or matching)");
    }
    if (a.estimator == "matching" || a.estimator == "kernel") {
        ot::MatchingModel mm = ot::matching_map(ot::solve_assignment(s.X, s.Y), s.X, s.Y);
        if (a.estimator == "matching") {
            if (a.nearest_neighbor) mm = ot::one_nn_extend(std::move(mm));
            write_json(a.out, model_to_json(TransportMapModel(std::move(mm))));
            return 0;
        }
        if (a.nu_kernel.has_value() != a.nu_ridge.has_value()) throw ConfigError("fit: give both --nu-kernel and --nu-ridge, or neither");
        kernel::KernelModel km;
        if (a.nu_kernel) {
            km = kernel::fit(s.X, mm.values, {*a.nu_kernel, *a.nu_ridge});
        } else {
            const SampleSet holdout = synthetic::sample_source(p, static_cast<std::size_t>(s.X.rows()), derive_seed(s.seed, {3}));
            km = kernel::oracle_select(
                     s.X, mm.values, holdout, [&](const SampleSet& x) { return p.map_all(x); }, kernel::default_kernel_grid(),
                     kernel::default_ridge_grid())
                     .model;
        }
        write_json(a.out, model_to_json(TransportMapModel(std::move(km))));
        return 0;
    }

    if (a.pipeline != "envelope" && a.pipeline != "direct") throw ConfigError("fit: --pipeline must be envelope or direct");
    OptimizerOptions opts;
    opts.max_iters = a.max_iters;
    std::vector<std::size_t> scales;
    if (a.scale) {
        scales.push_back(*a.scale);
    } else {
        for (std::size_t j = 0; j <= wavelet::max_levels(a.grid_n); ++j) scales.push_back(j);
    }
    std::vector<semidual::WaveletFit> fits;
    std::vector<double> pop;
    for (std::size_t j : scales) {
        fits.push_back(semidual::fit_wavelet(s.X, s.Y, p.source_box(), p.target_box(), a.grid_n, j, opts));
        pop.push_back(scales.size() > 1 ? semidual::population_semidual(fits.back().potential, fits.back().grid_y, p, a.quad_n) : 0.0);
    }
    const auto& fit = fits[semidual::select_scale(pop)];
    const auto pipeline = a.pipeline == "envelope" ? semidual::Pipeline::envelope : semidual::Pipeline::direct;
    write_json(a.out, model_to_json(TransportMapModel(make_wavelet_model(fit, pipeline, s.seed))));
    return 0;
}

int run_eval(const std::string& model_path, const std::string& samples_path, const std::string& out) {
    const TransportMapModel m = model_from_json(read_json(model_path));
    const SampleFile s = read_samples(samples_path);
    if (m.dim() != s.problem.dim()) throw ConfigError("eval: model and samples differ in dimension");
    write_json(out, {{"kind", to_string(m.kind())}, {"n", s.X.rows()}, {"mse", harness::mse(m, s.problem, s.X)}});
    return 0;
}

int run_experiment(const std::string& config_path, std::string out_dir, std::optional<std::size_t> workers) {
    harness::ExperimentConfig cfg = harness::config_from_json(read_json(config_path));
    if (workers) cfg.workers = *workers;
    if (out_dir.empty()) out_dir = cfg.output;
    if (out_dir.empty()) throw ConfigError("experiment: no output directory (use --out or the config's \"output\")");
    const auto records = harness::run_experiment(cfg);
    const fs::path dir(out_dir);
    harness::emit(records, harness::Format::csv, dir / "results.csv");
    harness::emit(records, harness::Format::json, dir / "results.json");
    harness::emit(records, harness::Format::svg, dir / "fig.svg");
    const auto rates = harness::fit_all_rates(records);
    harness::emit(rates, harness::Format::csv, dir / "rates.csv");
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.failed() ? 1 : 0;
    std::cout << records.size() << " records (" << failed << " failed) written to " << dir.string() << '\n';
    for (const auto& r : rates) std::cout << r.problem << ' ' << r.estimator << " slope " << r.slope << " r^2 " << r.r_squared << '\n';
    return 0;
}

int run_rates(const std::string& in, const std::string& out, const std::string& format) {
    const auto rates = harness::fit_all_rates(harness::records_from_csv(harness::read_file(in)));
    const auto f = parse_format(format);
    if (out.empty() || out == "-") {
        std::cout << (f == harness::Format::json ? harness::rates_to_json(rates).dump(2) + "\n" : harness::rates_to_csv(rates));
        return 0;
    }
    harness::emit(rates, f, out);
    return 0;
}

int run_plot(const std::string& in, const std::string& out, const std::string& title) {
    const std::string svg = harness::records_to_svg(harness::records_from_csv(harness::read_file(in)), title);
    if (out.empty() || out == "-") {
        std::cout << svg;
    } else {
        harness::write_file(out, svg);
    }
    return 0;
}

struct CertifyArgs {
    std::string model;
    std::string samples;
    double M = 2.0;
    std::size_t quad_n = 33;
    double tol = 1e-4;
    bool force = false;
    std::string out;
};

/// Certificate for the fitted potential against f0 of the sample file's problem, P uniform on [0,1]^d.
int run_certify(const CertifyArgs& a) {
    const TransportMapModel m = model_from_json(read_json(a.model));
    const auto& wm = m.as<WaveletMapModel>();
    const SampleFile s = read_samples(a.samples);
    const auto& p = s.problem;
    if (wm.potential.grid.dim() != p.dim()) throw ConfigError("certify: model and problem differ in dimension");
    const ScalarField f0 = tabulate(wm.potential.grid, [&](auto x) { return p.potential(x); });
    const ScalarField density = tabulate(semidual::unit_quadrature_grid(p.dim(), a.quad_n), [](auto) { return 1.0; });
    const semidual::StabilityReport r =
        semidual::stability_certificate(wm.potential, f0, density, a.M, {.tol = a.tol, .require_convexity = !a.force});
    write_json(a.out, {{"gap", r.gap},
                       {"l2_dist_sq", r.l2_dist_sq},
                       {"M", r.M},
                       {"lower", r.l2_dist_sq / (8.0 * r.M)},
                       {"upper", 2.0 * r.M * r.l2_dist_sq},
                       {"lower_ok", r.lower_ok},
                       {"upper_ok", r.upper_ok},
                       {"convexity_ok", r.convexity_ok},
                       {"holds", r.holds()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"otmap: semi-dual wavelet, kernel and matching estimators of optimal transport maps"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "otmap 1.0");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Draw source and target samples for a test problem");
    g->add_option("--problem", gen.problem, "id, exp or bump")->check(CLI::IsMember({"id", "exp", "bump"}));
    g->add_option("--d", gen.d, "Dimension")->required();
    g->add_option("--n", gen.n, "Sample size")->required();
    g->add_option("--seed", gen.seed, "Base seed");
    g->add_option("--m", gen.m, "Bump cells per axis");
    g->add_option("--kappa", gen.kappa, "Bump amplitude");
    g->add_option("--tau-seed", gen.tau_seed, "Seed for the bump sign pattern");
    g->add_flag("--same-draw", gen.same_draw, "Y = T0(X) instead of an independent draw");
    g->add_option("--out,-o", gen.out, "Output file (stdout if omitted)");

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit a transport map estimator to a sample file");
    f->add_option("--samples,-s", fit.samples, "Sample file from gen")->required();
    f->add_option("--estimator,-e", fit.estimator, "wavelet, kernel or matching")->check(CLI::IsMember({"wavelet", "kernel", "matching"}));
    f->add_option("--grid-n", fit.grid_n, "Wavelet grid nodes per axis");
    f->add_option("--scale,-J", fit.scale, "Wavelet scale J (oracle selection if omitted)");
    f->add_option("--pipeline", fit.pipeline, "envelope or direct");
    f->add_option("--quad-n", fit.quad_n, "Quadrature nodes per axis for oracle J");
    f->add_option("--max-iters", fit.max_iters, "L-BFGS iteration cap");
    f->add_option("--nu-kernel", fit.nu_kernel, "Kernel bandwidth parameter (oracle grid if omitted)");
    f->add_option("--nu-ridge", fit.nu_ridge, "Ridge parameter (oracle grid if omitted)");
    f->add_flag("--nearest-neighbor", fit.nearest_neighbor, "Extend the matching map by 1-NN");
    f->add_option("--out,-o", fit.out, "Model file (stdout if omitted)");

    std::string eval_model, eval_samples, eval_out;
    auto* e = app.add_subcommand("eval", "MSE of a model against the true map on the sample file's X");
    e->add_option("--model,-m", eval_model, "Model file")->required();
    e->add_option("--samples,-s", eval_samples, "Sample file")->required();
    e->add_option("--out,-o", eval_out, "Output file (stdout if omitted)");

    std::string exp_config, exp_out;
    std::optional<std::size_t> exp_workers;
    auto* x = app.add_subcommand("experiment", "Run an experiment grid from a JSON config");
    x->add_option("--config,-c", exp_config, "Config file")->required();
    x->add_option("--out,-o", exp_out, "Output directory");
    x->add_option("--workers", exp_workers, "Worker threads (0: all cores)");

    std::string rates_in, rates_out, rates_format = "csv";
    auto* r = app.add_subcommand("rates", "Log-log rate regression per estimator from results.csv");
    r->add_option("--in,-i", rates_in, "results.csv")->required();
    r->add_option("--out,-o", rates_out, "Output file (stdout if omitted)");
    r->add_option("--format", rates_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    std::string plot_in, plot_out, plot_title = "MSE vs n";
    auto* pl = app.add_subcommand("plot", "Log-log SVG plot from results.csv");
    pl->add_option("--in,-i", plot_in, "results.csv")->required();
    pl->add_option("--out,-o", plot_out, "Output file (stdout if omitted)");
    pl->add_option("--title", plot_title, "Plot title");

    CertifyArgs cert;
    auto* c = app.add_subcommand("certify", "Stability certificate for a fitted wavelet potential");
    c->add_option("--model,-m", cert.model, "Wavelet model file")->required();
    c->add_option("--samples,-s", cert.samples, "Sample file naming the problem")->required();
    c->add_option("--M", cert.M, "Curvature constant");
    c->add_option("--quad-n", cert.quad_n, "Quadrature nodes per axis on [0,1]");
    c->add_option("--tol", cert.tol, "Tolerance on both inequalities");
    c->add_flag("--force", cert.force, "Report even when the curvature bounds fail");
    c->add_option("--out,-o", cert.out, "Output file (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) return run_gen(gen);
        if (*f) return run_fit(fit);
        if (*e) return run_eval(eval_model, eval_samples, eval_out);
        if (*x) return run_experiment(exp_config, exp_out, exp_workers);
        if (*r) return run_rates(rates_in, rates_out, rates_format);
        if (*pl) return run_plot(plot_in, plot_out, plot_title);
        if (*c) return run_certify(cert);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << '\n';
        return 3;
    } catch (const DomainError& err) {
        std::cerr << "domain error: " << err.what() << '\n';
        return 3;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 2;
}
