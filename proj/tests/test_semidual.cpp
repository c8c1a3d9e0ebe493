#include "otmap/rng.hpp"
#include "otmap/semidual.hpp"
#include "otmap/synthetic.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace otmap;
using namespace otmap::semidual;
using Catch::Approx;

namespace {

SampleSet uniform_points(std::size_t n, const Box& b, Rng& rng) {
    SampleSet s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(b.dim()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index a = 0; a < s.cols(); ++a) s(i, a) = rng.uniform(b.lower[a], b.upper[a]);
    }
    return s;
}

SemidualProblem random_problem(std::size_t d, std::size_t n, std::size_t grid_n, std::size_t J, Rng& rng) {
    const Box box = Box::cube(d, -0.5, 1.5);
    return {uniform_points(n, Box::cube(d, 0, 1), rng), uniform_points(n, Box::cube(d, 0, 1), rng), Grid(box, grid_n),
            Grid(box, grid_n), J};
}

std::vector<double> random_vector(std::size_t m, double scale, Rng& rng) {
    std::vector<double> v(m);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// piecewise-linear interpolation on a 1-D uniform grid, written out longhand
double hat_interp(const std::vector<double>& nodes, const std::vector<double>& v, double x) {
    const double h = nodes[1] - nodes[0];
    std::size_t k = static_cast<std::size_t>(std::floor((x - nodes[0]) / h));
    k = std::min(k, nodes.size() - 2);
    const double t = (x - nodes[k]) / h;
    return (1 - t) * v[k] + t * v[k + 1];
}

double rms_error(const VectorField& map, const synthetic::TestProblem& truth, std::size_t quad_n) {
    const Grid q = unit_quadrature_grid(truth.dim(), quad_n);
    const SampleSet nodes = q.nodes();
    const SampleSet est = interpolate(map, nodes);
    const SampleSet ref = truth.map_all(nodes);
    return std::sqrt((est - ref).rowwise().squaredNorm().mean());
}

double mse_on(const VectorField& map, const synthetic::TestProblem& truth, const SampleSet& x) {
    return (interpolate(map, x) - truth.map_all(x)).rowwise().squaredNorm().mean();
}

}  // namespace

TEST_CASE("objective: single sample on zero field") {
    const Grid g(Box::cube(2, -0.5, 1.5), 17);
    SampleSet X(1, 2), Y(1, 2);
    X << 0.25, 0.5;
    Y << 0.75, -0.25;
    const SemidualProblem p{X, Y, g, g, 1};
    const wavelet::WaveletCoeffs zero{17, 2, 1, std::vector<double>(17 * 17, 0.0)};
    double best = -1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.node(i);
        best = std::max(best, x[0] * 0.75 - x[1] * 0.25);
    }
    CHECK(objective(p, zero) == Approx(best).margin(1e-14));
    CHECK(best == Approx(1.5 * 0.75 + 0.5 * 0.25));
}

TEST_CASE("objective: hand-enumerated d = 1, N = 9, n = 3") {
    Rng rng(11);
    const Box box = Box::cube(1, -0.5, 1.5);
    const Grid g(box, 9);
    SampleSet X(3, 1), Y(3, 1);
    X << 0.13, 0.5, 0.97;
    Y << 0.02, 0.61, 1.2;
    const SemidualProblem p{X, Y, g, g, 0};
    const auto gamma = random_vector(9, 1.0, rng);
    const wavelet::WaveletCoeffs c = embed(p, gamma);
    const auto f = wavelet::synthesize(c, g).values;
    const auto nodes = g.axis_nodes(0);

    std::vector<double> conj(9);
    for (std::size_t j = 0; j < 9; ++j) {
        conj[j] = -1e300;
        for (std::size_t i = 0; i < 9; ++i) conj[j] = std::max(conj[j], nodes[i] * nodes[j] - f[i]);
    }
    double expected = 0;
    for (int k = 0; k < 3; ++k) expected += hat_interp(nodes, f, X(k, 0)) + hat_interp(nodes, conj, Y(k, 0));
    expected /= 3;
    CHECK(objective(p, c) == Approx(expected).epsilon(1e-13));
}

TEST_CASE("objective rejects bad input") {
    Rng rng(1);
    SemidualProblem p = random_problem(2, 5, 33, 1, rng);
    p.X(0, 0) = 2.0;
    CHECK_THROWS_AS(SemidualObjective(p), DomainError);
    p = random_problem(2, 5, 33, 3, rng);
    CHECK_THROWS_AS(SemidualObjective(p), ConfigError);
    p = random_problem(2, 5, 33, 1, rng);
    p.Y.conservativeResize(4, 2);
    CHECK_THROWS_AS(SemidualObjective(p), ConfigError);
    p = random_problem(2, 5, 33, 1, rng);
    CHECK_THROWS_AS(embed(p, std::vector<double>(3)), ConfigError);
}

TEST_CASE("objective is convex in gamma") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 2);
        const SemidualObjective obj(random_problem(d, 20, 33, 1 + static_cast<std::size_t>(trial % 2), rng));
        const auto a = random_vector(obj.size(), 1.0, rng), b = random_vector(obj.size(), 1.0, rng);
        std::vector<double> mid(a.size()), twice(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            mid[k] = 0.5 * (a[k] + b[k]);
            twice[k] = 2 * a[k];
        }
        CHECK(obj.value(mid) <= 0.5 * obj.value(a) + 0.5 * obj.value(b) + 1e-10);
        CHECK(std::isfinite(obj.value(twice)));
    }
}

TEST_CASE("adding a constant to the potential leaves the objective unchanged") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const SemidualObjective obj(random_problem(2, 30, 33, 2, rng));
        const ScalarField f = obj.potential(random_vector(obj.size(), 1.0, rng));
        ScalarField shifted = f;
        for (auto& v : shifted.values) v += 0.75;
        CHECK(std::abs(obj.field_value(shifted) - obj.field_value(f)) <= 1e-12);
    }
}

TEST_CASE("subgradient matches central differences") {
    Rng rng(14);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 2);
        const SemidualObjective obj(random_problem(d, 15, 33, 1, rng));
        const auto gamma = random_vector(obj.size(), 1.0, rng);
        auto dir = random_vector(obj.size(), 1.0, rng);
        std::vector<double> grad(obj.size());
        (void)obj.evaluate(gamma, grad);
        const double eps = 1e-7;
        auto shifted = [&](double t) {
            std::vector<double> v(gamma);
            for (std::size_t k = 0; k < v.size(); ++k) v[k] += t * dir[k];
            return obj.value(v);
        };
        const double f0 = obj.value(gamma), fp = shifted(eps), fm = shifted(-eps);
        const double fwd = (fp - f0) / eps, bwd = (f0 - fm) / eps;
        // skip the rare draws that sit on a kink of the piecewise-linear objective
        if (std::abs(fwd - bwd) > 1e-6 * std::max(1.0, std::abs(fwd))) continue;
        ++checked;
        const double central = (fp - fm) / (2 * eps);
        CHECK(central == Approx(dot(grad, dir)).epsilon(1e-5).margin(1e-9));
    }
    CHECK(checked >= 30);
}

TEST_CASE("subgradient inequality") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
        const SemidualProblem p = random_problem(d, 10, d == 3 ? 17 : 33, 1, rng);
        const SemidualObjective obj(p);
        const auto a = random_vector(obj.size(), 1.0, rng), b = random_vector(obj.size(), 1.0, rng);
        const auto g = subgradient(p, embed(p, a));
        std::vector<double> diff(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) diff[k] = b[k] - a[k];
        CHECK(obj.value(b) >= obj.value(a) + dot(g, diff) - 1e-9);
    }
}

TEST_CASE("minimize: engineered fixpoint") {
    const Grid g(Box::cube(2, -0.5, 1.5), 33);
    SampleSet X(1, 2), Y(1, 2);
    X << -0.5, -0.5;
    Y << 0.0, 0.0;
    const SemidualObjective obj(SemidualProblem{X, Y, g, g, 2});
    std::vector<double> grad(obj.size());
    (void)obj.evaluate(std::vector<double>(obj.size(), 0.0), grad);
    CHECK(std::all_of(grad.begin(), grad.end(), [](double v) { return v == 0.0; }));
    const OptimizerResult r = minimize(obj);
    CHECK(r.iterations <= 2);
    CHECK(r.converged);
    CHECK(r.x.isZero(0.0));
}

TEST_CASE("minimize: trace is non-increasing and stops on the relative test") {
    Rng rng(16);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 2);
        const SemidualObjective obj(random_problem(d, 50, 33, static_cast<std::size_t>(trial % 3), rng));
        const OptimizerResult r = minimize(obj);
        REQUIRE(r.trace.size() >= 2);
        for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1]);
        CHECK(r.value == r.trace.back());
        CHECK(r.iterations <= 10000);
    }
    CHECK_THROWS_AS(minimize(SemidualObjective(random_problem(1, 5, 33, 1, rng)), std::vector<double>(2)), ConfigError);
}

TEST_CASE("fit_wavelet recovers a d = 1 quadratic potential") {
    const auto truth = synthetic::TestProblem::identity(1);
    const SampleSet X = synthetic::sample_source(truth, 500, 101);
    const SampleSet Y = synthetic::pushforward_sample(truth, synthetic::sample_source(truth, 500, 202));
    std::vector<WaveletFit> fits;
    std::vector<double> pop;
    for (std::size_t J = 0; J <= 3; ++J) {
        fits.push_back(fit_wavelet(X, Y, truth.source_box(), truth.target_box(), 65, J));
        pop.push_back(population_semidual(fits.back().potential, fits.back().grid_y, truth));
        const auto& trace = fits.back().optimizer.trace;
        for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
    }
    const WaveletFit& fit = fits[select_scale(pop)];
    INFO("oracle J = " << fit.J);
    CHECK(rms_error(fit.envelope_map, truth, 65) < 0.05);
}

TEST_CASE("fit_wavelet: identity problem d = 2, n = 100, J = 1") {
    const auto truth = synthetic::TestProblem::identity(2);
    const SampleSet X = synthetic::sample_source(truth, 100, 1);
    const SampleSet Y = synthetic::pushforward_sample(truth, synthetic::sample_source(truth, 100, 2));
    const WaveletFit fit = fit_wavelet(X, Y, truth.source_box(), truth.target_box(), 65, 1);
    const SampleSet values = interpolate(fit.envelope_map, unit_quadrature_grid(2, 33).nodes());
    // the estimate on the support stays in the target box and mostly near the unit square
    CHECK(values.minCoeff() >= -0.5);
    CHECK(values.maxCoeff() <= 1.5);
    Eigen::Index near = 0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) near += (values.row(i).array() >= -0.1).all() && (values.row(i).array() <= 1.1).all();
    CHECK(static_cast<double>(near) >= 0.9 * static_cast<double>(values.rows()));
    CHECK(values.colwise().mean().isApprox(Eigen::RowVector2d(0.5, 0.5), 0.1));
    CHECK(fit.envelope_map.grid == fit.potential.grid);
}

TEST_CASE("fit_wavelet: kappa = 0 bump error falls with n") {
    const auto truth = synthetic::make_bump_problem(2, 2, 0.0, std::vector<std::uint8_t>{0, 1, 1, 0});
    auto mse_at = [&](std::size_t n) {
        const SampleSet X = synthetic::sample_source(truth, n, 10 + n);
        const SampleSet Y = synthetic::pushforward_sample(truth, synthetic::sample_source(truth, n, 20 + n));
        const WaveletFit fit = fit_wavelet(X, Y, truth.source_box(), truth.target_box(), 33, 1);
        return mse_on(fit.envelope_map, truth, synthetic::sample_source(truth, 2000, 99));
    };
    CHECK(mse_at(1000) < mse_at(100));
}

TEST_CASE("fit_wavelet: infeasible scale") {
    const auto truth = synthetic::TestProblem::identity(1);
    const SampleSet X = synthetic::sample_source(truth, 10, 1);
    CHECK_THROWS_AS(fit_wavelet(X, X, truth.source_box(), truth.target_box(), 33, 3), ConfigError);
}

TEST_CASE("population semidual of the true potential is d/3") {
    for (std::size_t d = 1; d <= 3; ++d) {
        const auto truth = synthetic::TestProblem::identity(d);
        const Grid g(truth.source_box(), 65);
        const ScalarField f0 = tabulate(g, [&](auto x) { return truth.potential(x); });
        CHECK(population_semidual(f0, g, truth, 33) == Approx(static_cast<double>(d) / 3.0).margin(1e-6));
    }
}

TEST_CASE("population semidual is minimal at the true potential") {
    Rng rng(17);
    for (std::size_t d = 1; d <= 2; ++d) {
        const auto truth = synthetic::TestProblem::identity(d);
        const Grid g(truth.source_box(), 65);
        const ScalarField f0 = tabulate(g, [&](auto x) { return truth.potential(x); });
        const double s0 = population_semidual(f0, g, truth);
        for (int trial = 0; trial < 10; ++trial) {
            const ScalarField f = synthesize(wavelet::WaveletCoeffs{65, d, 3, random_vector(ipow(65, d), 0.3, rng)}, g);
            CHECK(population_semidual(f, g, truth) >= s0 - 1e-9);
        }
    }
    CHECK_THROWS_AS(population_semidual(ScalarField(Grid(Box::cube(1, 0, 1), 9)), Grid(Box::cube(1, 0, 1), 9),
                                        synthetic::TestProblem::identity(2)),
                    ConfigError);
}

TEST_CASE("select_scale is the argmin") {
    const std::vector<double> v{0.4, 0.1, 0.3, 0.1};
    CHECK(select_scale(v) == 1);
    const std::vector<double> one{2.0};
    CHECK(select_scale(one) == 0);
    CHECK_THROWS_AS(select_scale(std::vector<double>{}), ConfigError);
}

namespace {

struct CertificateSetup {
    synthetic::TestProblem truth;
    Grid grid;
    ScalarField f0;
    ScalarField density;
};

CertificateSetup certificate_setup(const synthetic::TestProblem& truth) {
    const Grid g(truth.source_box(), 65);
    ScalarField f0 = tabulate(g, [&](auto x) { return truth.potential(x); });
    const Grid q = unit_quadrature_grid(truth.dim(), 33);
    ScalarField density = tabulate(q, [](auto) { return 1.0; });
    return {truth, g, std::move(f0), std::move(density)};
}

ScalarField perturb(const CertificateSetup& s, int k) {
    const double phase = 0.37 * k;
    const double freq = 1.0 + (k % 2);
    return tabulate(s.grid, [&](auto x) {
        double p = 1.0;
        for (std::size_t a = 0; a < x.size(); ++a) p *= std::sin(freq * std::numbers::pi * x[a] / (a + 1.0) + phase * (a + 1));
        return s.truth.potential(x) + 0.01 * p;
    });
}

}  // namespace

TEST_CASE("stability certificate: equality case") {
    const auto s = certificate_setup(synthetic::TestProblem::identity(2));
    const StabilityReport r = stability_certificate(s.f0, s.f0, s.density, 2.0);
    CHECK(std::abs(r.gap) <= 1e-12);
    CHECK(r.l2_dist_sq == 0.0);
    CHECK(r.holds());
    CHECK(r.convexity_ok);
}

TEST_CASE("stability certificate: sandwich on convex perturbations") {
    for (const auto& truth : {synthetic::TestProblem::identity(1), synthetic::TestProblem::identity(2),
                              synthetic::TestProblem::exponential(1), synthetic::TestProblem::exponential(2)}) {
        const auto s = certificate_setup(truth);
        const double M = truth.kind() == synthetic::ProblemKind::exponential ? 3.0 : 2.0;
        for (int k = 0; k < 20; ++k) {
            const ScalarField f = perturb(s, k);
            const StabilityReport r = stability_certificate(f, s.f0, s.density, M, {.hessian_check = true});
            INFO(truth.name() << " d=" << truth.dim() << " k=" << k << " gap=" << r.gap << " dist=" << r.l2_dist_sq);
            CHECK(r.l2_dist_sq > 0.0);
            CHECK(r.lower_ok);
            CHECK(r.upper_ok);
        }
    }
}

TEST_CASE("stability certificate: refusal and preconditions") {
    const auto s = certificate_setup(synthetic::TestProblem::identity(2));
    const ScalarField bad = tabulate(s.grid, [](auto x) {
        return 0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.05 * std::sin(3 * std::numbers::pi * x[0]) * std::sin(3 * std::numbers::pi * x[1]);
    });
    CHECK_THROWS_AS(stability_certificate(bad, s.f0, s.density, 2.0), ConfigError);
    const StabilityReport forced = stability_certificate(bad, s.f0, s.density, 2.0, {.require_convexity = false});
    CHECK_FALSE(forced.convexity_ok);

    CHECK_THROWS_AS(stability_certificate(s.f0, s.f0, s.density, 0.0), ConfigError);
    const ScalarField misaligned = tabulate(Grid(Box::cube(2, 0, 1), 21), [](auto) { return 1.0; });
    CHECK_THROWS_AS(stability_certificate(s.f0, s.f0, misaligned, 2.0), ConfigError);
}
