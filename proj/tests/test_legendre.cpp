#include "otmap/grid.hpp"
#include "otmap/legendre.hpp"
#include "otmap/rng.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace otmap;
using namespace otmap::legendre;
using Catch::Approx;

namespace {

std::vector<double> brute_1d(const std::vector<double>& x, const std::vector<double>& f, const std::vector<double>& y) {
    std::vector<double> g(y.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < y.size(); ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) g[j] = std::max(g[j], x[i] * y[j] - f[i]);
    }
    return g;
}

std::vector<double> sorted_uniform(std::size_t n, double lo, double hi, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    std::sort(v.begin(), v.end());
    return v;
}

ScalarField random_field(const Grid& g, Rng& rng) {
    ScalarField f(g);
    for (auto& v : f.values) v = rng.uniform(-1, 1);
    return f;
}

double sup_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

Box random_box(std::size_t d, Rng& rng) {
    Box b;
    for (std::size_t a = 0; a < d; ++a) {
        const double lo = rng.uniform(-1, 1);
        b.lower.push_back(lo);
        b.upper.push_back(lo + rng.uniform(0.5, 2));
    }
    return b;
}

}  // namespace

TEST_CASE("llt_1d examples") {
    const std::vector<double> x{0, 0.5, 1}, f{0, 0.125, 0.5};
    const std::vector<double> y1{1.0}, y2{2.0};
    CHECK(llt_1d(x, f, y1)[0] == Approx(0.5).margin(1e-15));
    CHECK(llt_1d(x, f, y2)[0] == Approx(1.5).margin(1e-15));
}

TEST_CASE("llt_1d rejects bad input") {
    const std::vector<double> x{0, 1, 1}, f{0, 0, 0}, y{0};
    CHECK_THROWS_AS(llt_1d(x, f, y), ConfigError);
    const std::vector<double> xs{1, 0}, fs{0, 0};
    CHECK_THROWS_AS(llt_1d(xs, fs, y), ConfigError);
    const std::vector<double> ok{0, 1}, short_f{0};
    CHECK_THROWS_AS(llt_1d(ok, short_f, y), ConfigError);
    const std::vector<double> yun{1, 0};
    CHECK_THROWS_AS(llt_1d(ok, fs, yun), ConfigError);
}

TEST_CASE("llt_1d equals brute force on random data") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = sorted_uniform(101, -2, 2, rng);
        std::vector<double> f(101);
        for (auto& v : f) v = rng.uniform(-3, 3);
        const auto y = sorted_uniform(50, -5, 5, rng);
        const auto g = llt_1d(x, f, y);
        const auto b = brute_1d(x, f, y);
        for (std::size_t j = 0; j < y.size(); ++j) CHECK(g[j] == Approx(b[j]).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("llt_1d handles collinear and single-node data") {
    const std::vector<double> x{0, 1, 2, 3}, f{0, 1, 2, 3};
    const std::vector<double> y{0.0, 1.0, 2.0};
    const auto g = llt_1d(x, f, y);
    const auto b = brute_1d(x, f, y);
    for (std::size_t j = 0; j < 3; ++j) CHECK(g[j] == b[j]);
    const std::vector<double> x1{0.3}, f1{1.0};
    CHECK(llt_1d(x1, f1, y)[2] == Approx(0.6 - 1.0));
}

TEST_CASE("legendre_d examples") {
    // support function of the unit square
    const Grid g(Box::cube(2, 0, 1), 5);
    const ScalarField zero(g);
    const Grid gy(Box::cube(2, 0, 2), 9);
    const ScalarField s = legendre_d(zero, gy);
    for (std::size_t j = 0; j < gy.size(); ++j) {
        const auto y = gy.node(j);
        CHECK(s.values[j] == Approx(y[0] + y[1]).margin(1e-14));
    }

    // half squared norm is self-conjugate up to O(h) inside the gradient range
    const Grid fine(Box::cube(2, -1, 1), 81);
    const ScalarField q = tabulate(fine, [](auto x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); });
    const Grid targets(Box::cube(2, -0.8, 0.8), 17);
    const ScalarField c = legendre_d(q, targets);
    const Box u = Box::cube(2, -1, 1);
    const std::vector<double> zero2{0, 0};
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const auto y = targets.node(j);
        const double exact = quadratic_conjugate(1.0, zero2, 0.0, zero2, u, y);
        CHECK(exact == Approx(0.5 * (y[0] * y[0] + y[1] * y[1])).margin(1e-15));
        CHECK(std::abs(c.values[j] - exact) <= fine.spacing(0));
    }
}

TEST_CASE("legendre_d equals brute force") {
    Rng rng(77);
    SECTION("random convex fields, d = 2, N = 21") {
        const Grid g(Box::cube(2, -1, 1), 21);
        for (int trial = 0; trial < 10; ++trial) {
            const double a = rng.uniform(0.5, 2), b = rng.uniform(-1, 1);
            ScalarField f = tabulate(g, [&](auto x) { return a * x[0] * x[0] + x[1] * x[1] / a + b * x[0] * x[1] * 0.3 + std::exp(0.3 * x[1]); });
            const Grid gy(random_box(2, rng), 21);
            CHECK(sup_diff(legendre_d(f, gy), legendre_brute(f, gy)) <= 1e-10);
        }
    }
    SECTION("random non-convex fields, d = 1..4, up to 1e4 nodes") {
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t d = 1 + static_cast<std::size_t>(trial % 4);
            const std::size_t n = d == 1 ? 101 : d == 2 ? 31 : d == 3 ? 9 : 5;
            const Grid g(random_box(d, rng), n);
            const Grid gy(random_box(d, rng), d == 4 ? 5 : 7);
            const ScalarField f = random_field(g, rng);
            std::vector<std::size_t> arg;
            const ScalarField b = legendre_brute(f, gy, &arg);
            const Conjugate c = legendre_tracked(f, gy);
            CHECK(sup_diff(c.values(), b) <= 1e-10);
            // the tracked maximizer attains the max
            for (std::size_t j = 0; j < gy.size(); ++j) {
                const std::size_t i = c.maximizer(j);
                const auto x = g.node(i), y = gy.node(j);
                double v = -f.values[i];
                for (std::size_t a = 0; a < d; ++a) v += x[a] * y[a];
                CHECK(v == Approx(b.values[j]).margin(1e-10));
            }
        }
    }
}

TEST_CASE("tie-break picks the smallest row-major index") {
    // constant field: every node ties at y = 0
    const Grid g(Box::cube(2, 0, 1), 5);
    const ScalarField c(g);
    const Grid gy(Box::cube(2, -1, 1), 3);
    const Conjugate conj = legendre_tracked(c, gy);
    std::vector<std::size_t> arg;
    (void)legendre_brute(c, gy, &arg);
    for (std::size_t j = 0; j < gy.size(); ++j) CHECK(conj.maximizer(j) == arg[j]);
    CHECK(conj.maximizer(4) == 0);  // y = (0, 0)
    CHECK(conj.maximizer(8) == g.size() - 1);  // y = (1, 1): upper corner
}

TEST_CASE("legendre_d rejects dimension mismatch") {
    const ScalarField f(Grid(Box::cube(2, 0, 1), 3));
    CHECK_THROWS_AS(legendre_d(f, Grid(Box::cube(1, 0, 1), 3)), ConfigError);
}

TEST_CASE("order reversal and nonexpansiveness") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
        const Grid g(Box::cube(d, 0, 1), d == 3 ? 7 : 11);
        const Grid gy(Box::cube(d, -2, 2), 9);
        const ScalarField f = random_field(g, rng);
        ScalarField h = f;
        for (auto& v : h.values) v += rng.uniform(0, 0.5);
        const ScalarField lf = legendre_d(f, gy), lh = legendre_d(h, gy);
        for (std::size_t j = 0; j < gy.size(); ++j) CHECK(lf.values[j] >= lh.values[j]);

        const ScalarField p = random_field(g, rng);
        CHECK(sup_diff(legendre_d(p, gy), lf) <= sup_diff(p, f) + 1e-12);
    }
}

TEST_CASE("convex envelope examples") {
    // concave bump is flattened
    const Grid g(Box::cube(1, 0, 1), 3);
    const ScalarField bump(g, {0, 1, 0});
    const Grid slopes(Box::cube(1, -4, 4), 33);
    const ScalarField env = convex_envelope(bump, slopes);
    for (double v : env.values) CHECK(v == Approx(0.0).margin(1e-14));

    // a convex quadratic is kept up to slope-grid resolution
    const Grid gx(Box::cube(1, 0, 1), 65);
    const ScalarField q = tabulate(gx, [](auto x) { return 0.5 * x[0] * x[0]; });
    const ScalarField eq = convex_envelope(q, Grid(Box::cube(1, -0.5, 1.5), 65));
    CHECK(sup_diff(eq, q) <= gx.spacing(0));
    for (std::size_t i = 0; i < gx.size(); ++i) CHECK(eq.values[i] <= q.values[i] + 1e-14);
}

TEST_CASE("envelope properties on random fields") {
    Rng rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
        const Grid g(Box::cube(d, -0.5, 1.5), d == 3 ? 9 : 17);
        const Grid via(Box::cube(d, -3, 3), d == 3 ? 9 : 17);
        const ScalarField f = random_field(g, rng);
        const ScalarField e = convex_envelope(f, via);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(e.values[i] <= f.values[i] + 1e-12);
        CHECK(sup_diff(convex_envelope(e, via), e) <= 1e-10);
        // convex along every axis-parallel grid line
        for (std::size_t a = 0; a < d; ++a) {
            const std::size_t s = g.stride(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t k = g.axis_index(i, a);
                if (k == 0 || k + 1 == g.n()) continue;
                CHECK(e.values[i + s] - 2 * e.values[i] + e.values[i - s] >= -1e-10);
            }
        }
    }
}

TEST_CASE("quadratic_conjugate examples") {
    const std::vector<double> z{0.0};
    const std::vector<double> y0{0.0}, y2{2.0};
    CHECK(quadratic_conjugate(1, z, 0, z, Box::cube(1, -1, 1), y0) == 0.0);
    CHECK(quadratic_conjugate(1, z, 0, z, Box::cube(1, 0, 1), y2) == Approx(1.5));
    // agrees with the discrete transform of the sampled quadratic at a node
    const std::vector<double> x{0, 0.5, 1}, f{0, 0.125, 0.5};
    CHECK(llt_1d(x, f, y2)[0] == Approx(quadratic_conjugate(1, z, 0, z, Box::cube(1, 0, 1), y2)));
    CHECK_THROWS_AS(quadratic_conjugate(0, z, 0, z, Box::cube(1, 0, 1), y2), ConfigError);
}

TEST_CASE("quadratic_conjugate matches direct maximization with a shift") {
    // q(x) = a/2 |x - t|^2 + <b, x - t> + c on U, brute-force sup on a fine grid
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = rng.uniform(0.5, 2), c = rng.uniform(-1, 1);
        const std::vector<double> b{rng.uniform(-1, 1)}, t{rng.uniform(-1, 1)}, y{rng.uniform(-3, 3)};
        const Box u = Box::cube(1, -0.5, 0.7);
        double best = -1e300;
        for (int k = 0; k <= 200000; ++k) {
            const double xx = -0.5 + 1.2 * k / 200000.0;
            const double q = 0.5 * a * (xx - t[0]) * (xx - t[0]) + b[0] * (xx - t[0]) + c;
            best = std::max(best, xx * y[0] - q);
        }
        CHECK(quadratic_conjugate(a, b, c, t, u, y) == Approx(best).margin(1e-8));
    }
}

TEST_CASE("discrete conjugate converges to the closed form") {
    const std::vector<double> z1{0.0};
    auto gap_1d = [&](std::size_t n) {
        const Grid g(Box::cube(1, 0, 1), n);
        const ScalarField q = tabulate(g, [](auto x) { return 0.5 * x[0] * x[0]; });
        const Grid gy(Box::cube(1, -0.5, 1.5), 41);
        const ScalarField c = legendre_d(q, gy);
        double worst = 0;
        for (std::size_t j = 0; j < gy.size(); ++j) {
            const std::vector<double> y{gy.coord(0, j)};
            worst = std::max(worst, std::abs(c.values[j] - quadratic_conjugate(1, z1, 0, z1, Box::cube(1, 0, 1), y)));
        }
        return worst;
    };
    CHECK(gap_1d(129) < 0.5 * gap_1d(65));
    CHECK(gap_1d(257) < 0.5 * gap_1d(129));
}
