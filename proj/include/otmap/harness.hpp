#pragma once

// Experiment orchestration: seeded draws per (n, replicate), the three
// estimators with their oracle selection rules, MSE records, log-log rate
// regression and CSV / JSON / SVG output.

#include "otmap/assignment.hpp"
#include "otmap/core.hpp"
#include "otmap/kernel.hpp"
#include "otmap/model.hpp"
#include "otmap/rng.hpp"
#include "otmap/semidual.hpp"
#include "otmap/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace otmap::harness {

struct EstimatorConfig {
    std::string name;  // matching | kernel | wavelet
    // kernel
    std::vector<double> nu_kernel = kernel::default_kernel_grid();
    std::vector<double> nu_ridge = kernel::default_ridge_grid();
    // wavelet
    std::size_t grid_n = 65;
    std::vector<std::size_t> scales;  // empty: every feasible J
    std::string pipeline = "envelope";  // envelope | direct | both
    std::size_t quad_n = 33;
    OptimizerOptions optimizer;
};

struct ExperimentConfig {
    nlohmann::json problem;
    std::size_t d = 1;
    std::vector<std::size_t> n_list;
    std::size_t replicates = 1;
    std::vector<EstimatorConfig> estimators;
    std::uint64_t base_seed = 0;
    std::string output;
    std::size_t workers = 0;  // 0: hardware concurrency
    bool same_draw = false;   // Y = T0(X) for the source draw itself
    bool timing = false;      // wall_ms stays 0 unless set, keeping reruns byte-identical

    void validate() const {
        if (n_list.empty()) throw ConfigError("config: n_list must not be empty");
        if (!std::is_sorted(n_list.begin(), n_list.end())) throw ConfigError("config: n_list must be sorted ascending");
        if (n_list.front() < 1) throw ConfigError("config: sample sizes must be >= 1");
        if (replicates < 1) throw ConfigError("config: replicates must be >= 1");
        if (estimators.empty()) throw ConfigError("config: at least one estimator is required");
        for (const auto& e : estimators) {
            if (e.name != "matching" && e.name != "kernel" && e.name != "wavelet") {
                throw ConfigError("config: unknown estimator '" + e.name + "' (expected matching, kernel or wavelet)");
            }
            if (e.name == "wavelet" && e.pipeline != "envelope" && e.pipeline != "direct" && e.pipeline != "both") {
                throw ConfigError("config: wavelet pipeline must be envelope, direct or both");
            }
            if (e.name == "kernel" && (e.nu_kernel.empty() || e.nu_ridge.empty())) throw ConfigError("config: empty kernel grid");
            e.optimizer.validate();
        }
    }
};

[[nodiscard]] inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig c;
        c.problem = j.at("problem");
        if (c.problem.is_string()) c.problem = {{"name", c.problem.get<std::string>()}};
        c.d = j.at("d").get<std::size_t>();
        c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
        c.replicates = j.value("replicates", std::size_t{1});
        c.base_seed = j.value("base_seed", std::uint64_t{0});
        c.output = j.value("output", std::string{});
        c.workers = j.value("workers", std::size_t{0});
        c.same_draw = j.value("same_draw", false);
        c.timing = j.value("timing", false);
        for (const auto& e : j.at("estimators")) {
            EstimatorConfig ec;
            ec.name = e.is_string() ? e.get<std::string>() : e.at("name").get<std::string>();
            if (e.is_object()) {
                if (e.contains("nu_kernel")) ec.nu_kernel = e.at("nu_kernel").get<std::vector<double>>();
                if (e.contains("nu_ridge")) ec.nu_ridge = e.at("nu_ridge").get<std::vector<double>>();
                ec.grid_n = e.value("N", ec.grid_n);
                if (e.contains("J")) {
                    ec.scales = e.at("J").is_array() ? e.at("J").get<std::vector<std::size_t>>()
                                                     : std::vector<std::size_t>{e.at("J").get<std::size_t>()};
                }
                ec.pipeline = e.value("pipeline", ec.pipeline);
                ec.quad_n = e.value("quad_n", ec.quad_n);
                ec.optimizer.max_iters = e.value("max_iters", ec.optimizer.max_iters);
                ec.optimizer.rel_tol = e.value("rel_tol", ec.optimizer.rel_tol);
                ec.optimizer.memory = e.value("memory", ec.optimizer.memory);
            }
            c.estimators.push_back(std::move(ec));
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

struct ResultRecord {
    std::string problem;
    std::size_t d = 0;
    std::size_t n = 0;
    std::string estimator;
    std::string params;
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    double mse = 0.0;
    double wall_ms = 0.0;

    [[nodiscard]] bool failed() const { return params.rfind("failed:", 0) == 0 || !std::isfinite(mse); }

    friend bool operator==(const ResultRecord& a, const ResultRecord& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.problem == b.problem && a.d == b.d && a.n == b.n && a.estimator == b.estimator && a.params == b.params &&
               a.replicate == b.replicate && a.seed == b.seed && same(a.mse, b.mse) && same(a.wall_ms, b.wall_ms);
    }
};

/// (1/n) sum |T(X_i) - T0(X_i)|^2.
[[nodiscard]] inline double mse(const TransportMapModel& model, const synthetic::TestProblem& problem, const SampleSet& X_eval) {
    const SampleSet pred = model.evaluate(X_eval);
    const SampleSet truth = problem.map_all(X_eval);
    if (X_eval.rows() == 0) throw ConfigError("mse: empty evaluation set");
    return (pred - truth).rowwise().squaredNorm().mean();
}

namespace detail {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string short_double(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline std::string sanitize(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
    }
    return s;
}

struct Cell {
    std::size_t n;
    std::size_t replicate;
};

inline std::vector<ResultRecord> run_cell(const ExperimentConfig& cfg, const synthetic::TestProblem& problem, const Cell& cell) {
    using clock = std::chrono::steady_clock;
    const std::uint64_t seed = derive_seed(cfg.base_seed, {cell.n, cell.replicate});
    const SampleSet X = synthetic::sample_source(problem, cell.n, derive_seed(seed, {1}));
    const SampleSet Y = cfg.same_draw ? problem.map_all(X)
                                      : synthetic::pushforward_sample(problem, synthetic::sample_source(problem, cell.n, derive_seed(seed, {2})));
    std::vector<ResultRecord> out;
    auto record = [&](const std::string& est, const std::string& params, double value, clock::time_point t0) {
        ResultRecord r{problem.name(), problem.dim(), cell.n, est, sanitize(params), cell.replicate, seed, value, 0.0};
        if (cfg.timing) r.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.push_back(std::move(r));
    };
    auto failed = [&](const std::string& est, const std::exception& e, clock::time_point t0) {
        record(est, std::string("failed:") + e.what(), std::numeric_limits<double>::quiet_NaN(), t0);
    };

    // the matching is shared between the baseline and the kernel estimator
    std::optional<ot::MatchingModel> matching;
    auto get_matching = [&]() -> const ot::MatchingModel& {
        if (!matching) matching = ot::matching_map(ot::solve_assignment(X, Y), X, Y);
        return *matching;
    };

    for (const auto& est : cfg.estimators) {
        const auto t0 = clock::now();
        if (est.name == "matching") {
            try {
                const TransportMapModel m(get_matching());
                record("matching", "", mse(m, problem, X), t0);
            } catch (const std::exception& e) {
                failed("matching", e, t0);
            }
        } else if (est.name == "kernel") {
            try {
                const SampleSet holdout = synthetic::sample_source(problem, cell.n, derive_seed(seed, {3}));
                const auto& mm = get_matching();
                const auto res = kernel::oracle_select(
                    X, mm.values, holdout, [&](const SampleSet& p) { return problem.map_all(p); }, est.nu_kernel, est.nu_ridge);
                const TransportMapModel m(res.model);
                record("kernel", "nu_kernel=" + short_double(res.params.nu_kernel) + ";nu_ridge=" + short_double(res.params.nu_ridge),
                       mse(m, problem, X), t0);
            } catch (const std::exception& e) {
                failed("kernel", e, t0);
            }
        } else {
            const bool env = est.pipeline != "direct";
            const bool dir = est.pipeline != "envelope";
            const std::string env_name = "wavelet";
            const std::string dir_name = est.pipeline == "both" ? "wavelet_direct" : "wavelet";
            try {
                std::vector<std::size_t> scales = est.scales;
                if (scales.empty()) {
                    for (std::size_t j = 0; j <= wavelet::max_levels(est.grid_n); ++j) scales.push_back(j);
                }
                std::vector<semidual::WaveletFit> fits;
                std::vector<double> pop;
                for (std::size_t j : scales) {
                    fits.push_back(semidual::fit_wavelet(X, Y, problem.source_box(), problem.target_box(), est.grid_n, j, est.optimizer));
                    pop.push_back(semidual::population_semidual(fits.back().potential, fits.back().grid_y, problem, est.quad_n));
                }
                const std::size_t best = semidual::select_scale(pop);
                const auto& fit = fits[best];
                std::string params = "J=" + std::to_string(fit.J);
                if (fit.optimizer.line_search_failed) params += ";line_search_failed";
                if (env) {
                    record(env_name, params, mse(TransportMapModel(make_wavelet_model(fit, semidual::Pipeline::envelope, seed)), problem, X), t0);
                }
                if (dir) {
                    record(dir_name, params, mse(TransportMapModel(make_wavelet_model(fit, semidual::Pipeline::direct, seed)), problem, X), t0);
                }
            } catch (const std::exception& e) {
                if (env) failed(env_name, e, t0);
                if (dir) failed(dir_name, e, t0);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Canonical order: n, estimator, replicate.
inline void sort_records(std::vector<ResultRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const ResultRecord& a, const ResultRecord& b) {
        if (a.n != b.n) return a.n < b.n;
        if (a.estimator != b.estimator) return a.estimator < b.estimator;
        return a.replicate < b.replicate;
    });
}

/// Runs every (n, replicate) cell on a worker pool. Results do not depend on the schedule.
[[nodiscard]] inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const synthetic::TestProblem problem = synthetic::problem_from_json(cfg.problem, cfg.d);
    if (problem.dim() != cfg.d) throw ConfigError("config: problem dimension differs from d");

    std::vector<detail::Cell> cells;
    for (std::size_t n : cfg.n_list) {
        for (std::size_t r = 0; r < cfg.replicates; ++r) cells.push_back({n, r});
    }
    std::vector<std::vector<ResultRecord>> results(cells.size());
    std::size_t workers = cfg.workers == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg.workers;
    workers = std::min(workers, cells.size());

    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto work = [&]() {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            try {
                results[k] = detail::run_cell(cfg, problem, cells[k]);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);

    std::vector<ResultRecord> out;
    for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
    sort_records(out);
    return out;
}

// ---- rates ------------------------------------------------------------------

struct RatePoint {
    std::size_t n;
    double median_mse;
};

struct RateFit {
    std::string problem;
    std::string estimator;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<RatePoint> points_used;
};

[[nodiscard]] inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median: empty list");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Median MSE per n over non-failed records with positive median.
[[nodiscard]] inline std::vector<RatePoint> median_curve(const std::vector<ResultRecord>& records, const std::string& estimator,
                                                         const std::string& problem) {
    std::map<std::size_t, std::vector<double>> by_n;
    for (const auto& r : records) {
        if (r.estimator != estimator || r.problem != problem || r.failed()) continue;
        by_n[r.n].push_back(r.mse);
    }
    std::vector<RatePoint> out;
    for (auto& [n, v] : by_n) out.push_back({n, median(std::move(v))});
    return out;
}

/// Least squares of log10(median MSE) on log10(n).
[[nodiscard]] inline RateFit fit_rate(const std::vector<ResultRecord>& records, const std::string& estimator, const std::string& problem) {
    RateFit fit{problem, estimator, 0, 0, 0, {}};
    for (const auto& p : median_curve(records, estimator, problem)) {
        if (p.median_mse > 0.0 && std::isfinite(p.median_mse)) fit.points_used.push_back(p);
    }
    if (fit.points_used.size() < 2) {
        throw ConfigError("fit_rate: need at least two distinct n with positive median MSE for " + estimator + " on " + problem);
    }
    const auto k = static_cast<double>(fit.points_used.size());
    double sx = 0, sy = 0;
    for (const auto& p : fit.points_used) {
        sx += std::log10(static_cast<double>(p.n));
        sy += std::log10(p.median_mse);
    }
    const double mx = sx / k, my = sy / k;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& p : fit.points_used) {
        const double x = std::log10(static_cast<double>(p.n)) - mx;
        const double y = std::log10(p.median_mse) - my;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0;
    for (const auto& p : fit.points_used) {
        const double e = std::log10(p.median_mse) - (fit.intercept + fit.slope * std::log10(static_cast<double>(p.n)));
        ss_res += e * e;
    }
    fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

/// One fit per (problem, estimator) present in the records, skipping pairs with too few points.
[[nodiscard]] inline std::vector<RateFit> fit_all_rates(const std::vector<ResultRecord>& records) {
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& r : records) keys.insert({r.problem, r.estimator});
    std::vector<RateFit> out;
    for (const auto& [problem, est] : keys) {
        try {
            out.push_back(fit_rate(records, est, problem));
        } catch (const ConfigError&) {
        }
    }
    return out;
}

// ---- output -----------------------------------------------------------------

inline constexpr const char* kCsvHeader = "problem,d,n,estimator,params,replicate,seed,mse,wall_ms";

[[nodiscard]] inline std::string records_to_csv(const std::vector<ResultRecord>& records) {
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto& r : records) {
        os << detail::sanitize(r.problem) << ',' << r.d << ',' << r.n << ',' << detail::sanitize(r.estimator) << ','
           << detail::sanitize(r.params) << ',' << r.replicate << ',' << r.seed << ',' << detail::format_double(r.mse) << ','
           << detail::format_double(r.wall_ms) << '\n';
    }
    return os.str();
}

[[nodiscard]] inline std::vector<ResultRecord> records_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) throw ConfigError("csv: missing or unexpected header");
    std::vector<ResultRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 9) throw ConfigError("csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields, expected 9");
        try {
            ResultRecord r;
            r.problem = f[0];
            r.d = std::stoul(f[1]);
            r.n = std::stoul(f[2]);
            r.estimator = f[3];
            r.params = f[4];
            r.replicate = std::stoul(f[5]);
            r.seed = std::stoull(f[6]);
            r.mse = f[7] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[7]);
            r.wall_ms = f[8] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[8]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ConfigError("csv: malformed number on line " + std::to_string(lineno));
        }
    }
    return out;
}

[[nodiscard]] inline nlohmann::json records_to_json(const std::vector<ResultRecord>& records) {
    auto arr = nlohmann::json::array();
    for (const auto& r : records) {
        arr.push_back({{"problem", r.problem},
                       {"d", r.d},
                       {"n", r.n},
                       {"estimator", r.estimator},
                       {"params", r.params},
                       {"replicate", r.replicate},
                       {"seed", r.seed},
                       {"mse", std::isfinite(r.mse) ? nlohmann::json(r.mse) : nlohmann::json(nullptr)},
                       {"wall_ms", r.wall_ms}});
    }
    return arr;
}

[[nodiscard]] inline std::string rates_to_csv(const std::vector<RateFit>& rates) {
    std::ostringstream os;
    os << "problem,estimator,slope,intercept,r_squared,points\n";
    for (const auto& r : rates) {
        os << r.problem << ',' << r.estimator << ',' << detail::format_double(r.slope) << ',' << detail::format_double(r.intercept) << ','
           << detail::format_double(r.r_squared) << ',';
        for (std::size_t i = 0; i < r.points_used.size(); ++i) {
            if (i) os << ';';
            os << r.points_used[i].n << ':' << detail::format_double(r.points_used[i].median_mse);
        }
        os << '\n';
    }
    return os.str();
}

[[nodiscard]] inline nlohmann::json rates_to_json(const std::vector<RateFit>& rates) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rates) {
        auto pts = nlohmann::json::array();
        for (const auto& p : r.points_used) pts.push_back({{"n", p.n}, {"median_mse", p.median_mse}});
        arr.push_back({{"problem", r.problem}, {"estimator", r.estimator}, {"slope", r.slope}, {"intercept", r.intercept},
                       {"r_squared", r.r_squared}, {"points", std::move(pts)}});
    }
    return arr;
}

/// Log-log scatter of every record plus one median polyline per estimator.
[[nodiscard]] inline std::string records_to_svg(const std::vector<ResultRecord>& records, const std::string& title = "MSE vs n") {
    constexpr double W = 640, H = 480, L = 70, R = 150, T = 40, B = 55;
    std::vector<const ResultRecord*> ok;
    for (const auto& r : records) {
        if (!r.failed() && r.mse > 0.0) ok.push_back(&r);
    }
    double x0 = 1, x1 = 10, y0 = 1e-3, y1 = 1;
    if (!ok.empty()) {
        x0 = y0 = std::numeric_limits<double>::infinity();
        x1 = y1 = -std::numeric_limits<double>::infinity();
        for (const auto* r : ok) {
            const double lx = std::log10(static_cast<double>(r->n)), ly = std::log10(r->mse);
            x0 = std::min(x0, lx);
            x1 = std::max(x1, lx);
            y0 = std::min(y0, ly);
            y1 = std::max(y1, ly);
        }
        x0 = std::floor(x0 * 2) / 2 - 0.1;
        x1 = std::ceil(x1 * 2) / 2 + 0.1;
        y0 = std::floor(y0) - 0.05;
        y1 = std::ceil(y1) + 0.05;
    } else {
        x0 = 0, x1 = 1, y0 = -3, y1 = 0;
    }
    auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
       << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << title
       << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t = std::ceil(x0 * 2) / 2; t <= x1; t += 0.5) {
        os << "<line x1=\"" << px(t) << "\" y1=\"" << H - B << "\" x2=\"" << px(t) << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>";
        os << "<text x=\"" << px(t) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">10^"
           << std::setprecision(1) << t << std::setprecision(2) << "</text>\n";
    }
    for (double t = std::ceil(y0); t <= y1; t += 1.0) {
        os << "<line x1=\"" << L - 5 << "\" y1=\"" << py(t) << "\" x2=\"" << L << "\" y2=\"" << py(t) << "\" stroke=\"black\"/>";
        os << "<text x=\"" << L - 8 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">10^"
           << std::setprecision(0) << t << std::setprecision(2) << "</text>\n";
    }
    os << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">n</text>\n";
    os << "<text x=\"16\" y=\"" << T + (H - T - B) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
       << T + (H - T - B) / 2 << ")\">MSE</text>\n";

    std::set<std::pair<std::string, std::string>> series;
    for (const auto* r : ok) series.insert({r->estimator, r->problem});
    std::size_t k = 0;
    for (const auto& [est, prob] : series) {
        const char* color = colors[k % 8];
        const std::string label = series.size() > 1 && std::any_of(series.begin(), series.end(), [&](const auto& s) { return s.second != prob; })
                                      ? est + " (" + prob + ")"
                                      : est;
        os << "<g class=\"series\" data-estimator=\"" << est << "\">\n";
        for (const auto* r : ok) {
            if (r->estimator != est || r->problem != prob) continue;
            os << "<circle cx=\"" << px(std::log10(static_cast<double>(r->n))) << "\" cy=\"" << py(std::log10(r->mse))
               << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.35\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (const auto& p : median_curve(records, est, prob)) {
            if (!(p.median_mse > 0)) continue;
            os << (first ? "" : " ") << px(std::log10(static_cast<double>(p.n))) << ',' << py(std::log10(p.median_mse));
            first = false;
        }
        os << "\"/>\n";
        const double ly = T + 16 + 18 * static_cast<double>(k);
        os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/><text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
           << label << "</text>\n</g>\n";
        ++k;
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

enum class Format { csv, json, svg };

/// Writes records in the requested format.
inline void emit(const std::vector<ResultRecord>& records, Format format, const std::filesystem::path& path) {
    switch (format) {
        case Format::csv: write_file(path, records_to_csv(records)); return;
        case Format::json: write_file(path, records_to_json(records).dump(2) + "\n"); return;
        case Format::svg: write_file(path, records_to_svg(records)); return;
    }
}

inline void emit(const std::vector<RateFit>& rates, Format format, const std::filesystem::path& path) {
    switch (format) {
        case Format::csv: write_file(path, rates_to_csv(rates)); return;
        case Format::json: write_file(path, rates_to_json(rates).dump(2) + "\n"); return;
        case Format::svg: throw ConfigError("emit: rates have no SVG form; plot the records instead");
    }
}

}  // namespace otmap::harness
