#include "otmap/assignment.hpp"
#include "otmap/rng.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

using namespace otmap;
using namespace otmap::ot;
using Catch::Approx;

namespace {

SampleSet random_points(std::size_t n, std::size_t d, Rng& rng) {
    SampleSet s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform();
    return s;
}

double pairing_cost(const SampleSet& X, const SampleSet& Y, const std::vector<std::size_t>& perm) {
    double s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        s += (X.row(static_cast<Eigen::Index>(i)) - Y.row(static_cast<Eigen::Index>(perm[i]))).squaredNorm();
    }
    return s / static_cast<double>(perm.size());
}

// smallest cost; among exact ties the lexicographically smallest permutation
std::vector<std::size_t> exhaustive(const SampleSet& X, const SampleSet& Y, double& best) {
    std::vector<std::size_t> p(static_cast<std::size_t>(X.rows()));
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::size_t> arg = p;
    best = pairing_cost(X, Y, p);
    while (std::next_permutation(p.begin(), p.end())) {
        const double c = pairing_cost(X, Y, p);
        if (c < best) {
            best = c;
            arg = p;
        }
    }
    return arg;
}

bool is_permutation(const std::vector<std::size_t>& p) {
    std::vector<std::size_t> s = p;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != i) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("solve_assignment examples") {
    SampleSet X(2, 1), Y(2, 1);
    X << 0, 1;
    Y << 0.1, 0.9;
    const Assignment a = solve_assignment(X, Y);
    CHECK(a.perm == std::vector<std::size_t>{0, 1});
    CHECK(a.cost == Approx(0.01).margin(1e-15));

    Rng rng(1);
    const SampleSet Z = random_points(50, 3, rng);
    const Assignment same = solve_assignment(Z, Z);
    std::vector<std::size_t> id(50);
    std::iota(id.begin(), id.end(), 0);
    CHECK(same.perm == id);
    CHECK(same.cost == 0.0);

    SampleSet one(1, 2), other(1, 2);
    one << 0.2, 0.3;
    other << 1.2, 0.3;
    const Assignment single = solve_assignment(one, other);
    CHECK(single.perm == std::vector<std::size_t>{0});
    CHECK(single.cost == Approx(1.0));
}

TEST_CASE("solve_assignment rejects bad input") {
    CHECK_THROWS_AS(solve_assignment(SampleSet(3, 2), SampleSet(4, 2)), ConfigError);
    CHECK_THROWS_AS(solve_assignment(SampleSet(3, 2), SampleSet(3, 1)), ConfigError);
    CHECK_THROWS_AS(solve_assignment(SampleSet(0, 2), SampleSet(0, 2)), ConfigError);
}

TEST_CASE("solve_assignment equals exhaustive search") {
    Rng rng(2);
    for (std::size_t n = 1; n <= 7; ++n) {
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
            const SampleSet X = random_points(n, d, rng), Y = random_points(n, d, rng);
            double best = 0;
            const auto arg = exhaustive(X, Y, best);
            const Assignment a = solve_assignment(X, Y);
            CHECK(is_permutation(a.perm));
            CHECK(a.perm == arg);
            CHECK(a.cost == Approx(best).epsilon(1e-14));
        }
    }
}

TEST_CASE("ties resolve to the lexicographically smallest permutation") {
    // four corners of a square against their centre-symmetric copy: several optimal pairings
    SampleSet X(4, 2), Y(4, 2);
    X << 0, 0, 1, 0, 0, 1, 1, 1;
    Y << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
    CHECK(solve_assignment(X, Y).perm == std::vector<std::size_t>{0, 1, 2, 3});

    // integer lattice with many exact ties
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 6;
        SampleSet A(n, 1), B(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            A(static_cast<Eigen::Index>(i), 0) = std::floor(rng.uniform(0, 3));
            B(static_cast<Eigen::Index>(i), 0) = std::floor(rng.uniform(0, 3));
        }
        double best = 0;
        CHECK(solve_assignment(A, B).perm == exhaustive(A, B, best));
    }
}

TEST_CASE("1-D assignment is the monotone rearrangement") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 200;
        const SampleSet X = random_points(n, 1, rng), Y = random_points(n, 1, rng);
        std::vector<std::size_t> ix(n), iy(n);
        std::iota(ix.begin(), ix.end(), 0);
        std::iota(iy.begin(), iy.end(), 0);
        std::sort(ix.begin(), ix.end(), [&](auto a, auto b) { return X(static_cast<Eigen::Index>(a), 0) < X(static_cast<Eigen::Index>(b), 0); });
        std::sort(iy.begin(), iy.end(), [&](auto a, auto b) { return Y(static_cast<Eigen::Index>(a), 0) < Y(static_cast<Eigen::Index>(b), 0); });
        std::vector<std::size_t> sorted(n);
        for (std::size_t k = 0; k < n; ++k) sorted[ix[k]] = iy[k];
        const Assignment a = solve_assignment(X, Y);
        CHECK(a.perm == sorted);
        CHECK(a.cost == Approx(pairing_cost(X, Y, sorted)).epsilon(1e-13));
    }
}

TEST_CASE("assignment properties on larger instances") {
    Rng rng(5);
    for (std::size_t n : {50u, 200u, 500u}) {
        const std::size_t d = 3;
        const SampleSet X = random_points(n, d, rng), Y = random_points(n, d, rng);
        const Assignment a = solve_assignment(X, Y);
        CHECK(is_permutation(a.perm));
        std::vector<std::size_t> id(n);
        std::iota(id.begin(), id.end(), 0);
        CHECK(a.cost <= pairing_cost(X, Y, id));
        CHECK(a.cost == Approx(pairing_cost(X, Y, a.perm)).epsilon(1e-14));
        // no improving 2-swap
        bool improvable = false;
        for (std::size_t i = 0; i < n && !improvable; ++i) {
            for (std::size_t k = i + 1; k < n; ++k) {
                std::vector<std::size_t> p = a.perm;
                std::swap(p[i], p[k]);
                if (pairing_cost(X, Y, p) < a.cost - 1e-14) {
                    improvable = true;
                    break;
                }
            }
        }
        CHECK_FALSE(improvable);

        // relabeling Y by sigma gives perm' = sigma o perm
        std::vector<std::size_t> sigma(n);
        std::iota(sigma.begin(), sigma.end(), 0);
        for (std::size_t i = n; i-- > 1;) std::swap(sigma[i], sigma[static_cast<std::size_t>(rng.uniform(0, static_cast<double>(i + 1)))]);
        SampleSet Ys(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < n; ++j) Ys.row(static_cast<Eigen::Index>(sigma[j])) = Y.row(static_cast<Eigen::Index>(j));
        const Assignment b = solve_assignment(X, Ys);
        for (std::size_t i = 0; i < n; ++i) CHECK(b.perm[i] == sigma[a.perm[i]]);
        CHECK(b.cost == Approx(a.cost).epsilon(1e-14));
    }
}

TEST_CASE("assignment JSON round-trips and validates") {
    Rng rng(6);
    const SampleSet X = random_points(10, 2, rng), Y = random_points(10, 2, rng);
    const Assignment a = solve_assignment(X, Y);
    const nlohmann::json j = a;
    const auto back = nlohmann::json::parse(j.dump()).get<Assignment>();
    CHECK(back.perm == a.perm);
    CHECK(back.cost == a.cost);
    nlohmann::json bad = j;
    bad["perm"][0] = bad["perm"][1];
    CHECK_THROWS_AS(bad.get<Assignment>(), ConfigError);
    bad = j;
    bad["n"] = 11;
    CHECK_THROWS_AS(bad.get<Assignment>(), ConfigError);
}

TEST_CASE("matching map") {
    Rng rng(7);
    const SampleSet X = random_points(3, 2, rng), Y = random_points(3, 2, rng);
    double best = 0;
    const auto arg = exhaustive(X, Y, best);
    const MatchingModel m = matching_map(solve_assignment(X, Y), X, Y);
    const SampleSet at_x = evaluate(m, X);
    for (std::size_t i = 0; i < 3; ++i) CHECK(at_x.row(static_cast<Eigen::Index>(i)) == Y.row(static_cast<Eigen::Index>(arg[i])));

    // a single training point queried on its own
    const SampleSet x1 = X.row(1);
    CHECK(evaluate(m, x1).row(0) == Y.row(static_cast<Eigen::Index>(arg[1])));

    // identity problem with Y = X: zero error
    const SampleSet Z = random_points(40, 3, rng);
    const MatchingModel mz = matching_map(solve_assignment(Z, Z), Z, Z);
    CHECK((evaluate(mz, Z) - Z).squaredNorm() == 0.0);

    SampleSet off(1, 2);
    off << 0.123456, 0.654321;
    CHECK_THROWS_AS(evaluate(m, off), DomainError);
    CHECK_THROWS_AS(matching_map(solve_assignment(X, Y), random_points(4, 2, rng), Y), ConfigError);
}

TEST_CASE("1-NN extension") {
    Rng rng(8);
    const SampleSet X = random_points(30, 2, rng), Y = random_points(30, 2, rng);
    const MatchingModel m = one_nn_extend(matching_map(solve_assignment(X, Y), X, Y));
    CHECK((evaluate(m, X) - m.values).squaredNorm() == 0.0);

    const SampleSet q = random_points(500, 2, rng);
    const SampleSet out = evaluate(m, q);
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        Eigen::Index best = 0;
        double bd = 1e300;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const double dd = (X.row(i) - q.row(r)).squaredNorm();
            if (dd < bd) {
                bd = dd;
                best = i;
            }
        }
        CHECK(out.row(r) == m.values.row(best));
    }

    // n = 1: constant map
    SampleSet x1(1, 2), y1(1, 2);
    x1 << 0.5, 0.5;
    y1 << 0.1, 0.9;
    const MatchingModel c = one_nn_extend(matching_map(solve_assignment(x1, y1), x1, y1));
    const SampleSet cq = evaluate(c, q);
    for (Eigen::Index r = 0; r < cq.rows(); ++r) CHECK(cq.row(r) == y1.row(0));

    // equidistant query ties to the smaller index
    SampleSet two(2, 1), vals(2, 1), mid(1, 1);
    two << 0.0, 1.0;
    vals << 5.0, 7.0;
    mid << 0.5;
    const MatchingModel t = one_nn_extend(MatchingModel{two, vals, false});
    CHECK(evaluate(t, mid)(0, 0) == 5.0);
}
