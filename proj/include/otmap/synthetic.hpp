#pragma once

// Ground-truth transport problems with P = Unif([0,1]^d):
//
//   id    f0 = |x|^2 / 2,                 T0 = x
//   exp   f0 = sum_i exp(x_i),            T0 = (exp(x_i))_i
//   bump  f0 = |x|^2 / 2 + sum_j tau_j g_j, T0 = grad f0
//
// The bump family places one smooth bump kappa * prod_i xi(m (x_i - c_i)) in
// each of the m^d cells of the unit cube, switched on by tau. Outside the cube
// the potential is |x|^2 / 2, so grad f0 maps every cell onto itself.

#include "otmap/core.hpp"
#include "otmap/grid.hpp"
#include "otmap/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace otmap::synthetic {

/// Normalized C-infinity bump on (0,1): xi(t) = e * exp(-1 / (1 - (2t-1)^2)), peak 1 at t = 1/2.
struct Bump1d {
    double value = 0.0;
    double first = 0.0;
    double second = 0.0;
};

[[nodiscard]] inline Bump1d bump_profile(double t) {
    if (!(t > 0.0 && t < 1.0)) return {};
    const double s = 2.0 * t - 1.0;
    const double u = 1.0 - s * s;
    const double xi = std::exp(1.0 - 1.0 / u);
    const double q = -4.0 * s / (u * u);                          // (log xi)'
    const double dq = -8.0 / (u * u) - 32.0 * s * s / (u * u * u);  // (log xi)''
    return {xi, xi * q, xi * (q * q + dq)};
}

enum class ProblemKind { identity, exponential, bump };

struct BumpSpec {
    std::size_t m = 1;
    double kappa = 0.0;
    std::vector<std::uint8_t> tau;  // m^d switches, row-major over cells
};

class TestProblem {
public:
    [[nodiscard]] static TestProblem identity(std::size_t d) { return TestProblem(ProblemKind::identity, d); }
    [[nodiscard]] static TestProblem exponential(std::size_t d) { return TestProblem(ProblemKind::exponential, d); }

    [[nodiscard]] ProblemKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t dim() const noexcept { return d_; }
    [[nodiscard]] const BumpSpec& bump() const noexcept { return bump_; }

    [[nodiscard]] std::string name() const {
        switch (kind_) {
            case ProblemKind::identity: return "id";
            case ProblemKind::exponential: return "exp";
            case ProblemKind::bump: return "bump";
        }
        return "?";
    }

    /// Grid box for the source potential.
    [[nodiscard]] Box source_box() const { return Box::cube(d_, -0.5, 1.5); }

    /// Grid box for the conjugate potential.
    [[nodiscard]] Box target_box() const {
        return kind_ == ProblemKind::exponential ? Box::cube(d_, 0.0, 4.0) : Box::cube(d_, -0.5, 1.5);
    }

    [[nodiscard]] double potential(std::span<const double> x) const {
        double v = 0.0;
        switch (kind_) {
            case ProblemKind::identity:
                for (double xi : x) v += 0.5 * xi * xi;
                return v;
            case ProblemKind::exponential:
                for (double xi : x) v += std::exp(xi);
                return v;
            case ProblemKind::bump: {
                for (double xi : x) v += 0.5 * xi * xi;
                Local loc;
                if (locate(x, loc)) {
                    double g = 1.0;
                    for (std::size_t a = 0; a < d_; ++a) g *= loc.p[a].value;
                    v += bump_.kappa * g;
                }
                return v;
            }
        }
        return v;
    }

    void map(std::span<const double> x, std::span<double> out) const {
        switch (kind_) {
            case ProblemKind::identity:
                std::copy(x.begin(), x.end(), out.begin());
                return;
            case ProblemKind::exponential:
                for (std::size_t a = 0; a < d_; ++a) out[a] = std::exp(x[a]);
                return;
            case ProblemKind::bump: {
                std::copy(x.begin(), x.end(), out.begin());
                Local loc;
                if (!locate(x, loc)) return;
                const double scale = bump_.kappa * static_cast<double>(bump_.m);
                for (std::size_t a = 0; a < d_; ++a) {
                    double g = loc.p[a].first;
                    for (std::size_t b = 0; b < d_; ++b) {
                        if (b != a) g *= loc.p[b].value;
                    }
                    out[a] += scale * g;
                }
                return;
            }
        }
    }

    [[nodiscard]] std::vector<double> map(std::span<const double> x) const {
        std::vector<double> out(d_);
        map(x, out);
        return out;
    }

    [[nodiscard]] Eigen::MatrixXd hessian(std::span<const double> x) const {
        const auto d = static_cast<Eigen::Index>(d_);
        Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
        if (kind_ == ProblemKind::exponential) {
            for (Eigen::Index a = 0; a < d; ++a) h(a, a) = std::exp(x[static_cast<std::size_t>(a)]);
            return h;
        }
        Local loc;
        if (kind_ == ProblemKind::identity || !locate(x, loc)) return h;
        const double scale = bump_.kappa * static_cast<double>(bump_.m * bump_.m);
        for (std::size_t a = 0; a < d_; ++a) {
            for (std::size_t b = 0; b < d_; ++b) {
                double g = 1.0;
                for (std::size_t c = 0; c < d_; ++c) {
                    if (a == b && c == a) {
                        g *= loc.p[c].second;
                    } else if (c == a || c == b) {
                        g *= loc.p[c].first;
                    } else {
                        g *= loc.p[c].value;
                    }
                }
                h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += scale * g;
            }
        }
        return h;
    }

    /// T0 applied row-wise.
    [[nodiscard]] SampleSet map_all(const SampleSet& x) const {
        SampleSet out(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            map(std::span<const double>(x.row(i).data(), d_), std::span<double>(out.row(i).data(), d_));
        }
        return out;
    }

    friend TestProblem make_bump_problem(std::size_t d, std::size_t m, double kappa, std::vector<std::uint8_t> tau);

private:
    TestProblem(ProblemKind kind, std::size_t d) : kind_(kind), d_(d) {
        if (d == 0) throw ConfigError("problem: dimension must be >= 1");
    }

    struct Local {
        std::vector<Bump1d> p;
    };

    /// Profile values in the active cell containing x, false when no bump is active at x.
    bool locate(std::span<const double> x, Local& loc) const {
        const std::size_t m = bump_.m;
        std::size_t cell = 0;
        std::vector<double> t(d_);
        for (std::size_t a = 0; a < d_; ++a) {
            if (!(x[a] > 0.0 && x[a] < 1.0)) return false;
            const double s = x[a] * static_cast<double>(m);
            const std::size_t k = std::min(static_cast<std::size_t>(s), m - 1);
            cell = cell * m + k;
            t[a] = s - static_cast<double>(k);
        }
        if (bump_.tau[cell] == 0) return false;
        loc.p.resize(d_);
        for (std::size_t a = 0; a < d_; ++a) loc.p[a] = bump_profile(t[a]);
        return true;
    }

    ProblemKind kind_;
    std::size_t d_;
    BumpSpec bump_;
};

/// Extreme eigenvalues of D^2 f0 over a probe grid.
struct HessianRange {
    double min_eig = 0.0;
    double max_eig = 0.0;
};

[[nodiscard]] inline HessianRange probe_hessian(const TestProblem& p, std::size_t probe_n = 33) {
    const Grid probe(Box::cube(p.dim(), 0.0, 1.0), probe_n);
    HessianRange r{1e300, -1e300};
    std::vector<double> x(p.dim());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        probe.node(i, x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.hessian(x), Eigen::EigenvaluesOnly);
        r.min_eig = std::min(r.min_eig, es.eigenvalues().minCoeff());
        r.max_eig = std::max(r.max_eig, es.eigenvalues().maxCoeff());
    }
    return r;
}

namespace detail {

/// Hessian of the unit bump prod_a xi(u_a).
inline Eigen::MatrixXd unit_bump_hessian(std::span<const double> u) {
    const std::size_t d = u.size();
    std::vector<Bump1d> p(d);
    for (std::size_t a = 0; a < d; ++a) p[a] = bump_profile(u[a]);
    Eigen::MatrixXd h(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
            double g = 1.0;
            for (std::size_t c = 0; c < d; ++c) g *= a == b && c == a ? p[c].second : c == a || c == b ? p[c].first : p[c].value;
            h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = g;
        }
    }
    return h;
}

inline double unit_bump_eig(std::span<const double> u, bool want_max) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(unit_bump_hessian(u), Eigen::EigenvaluesOnly);
    return want_max ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
}

/// Extreme eigenvalues of the unit bump Hessian over the unit cell. The bump is
/// symmetric under u_a -> 1 - u_a and under axis permutations, so sorted points
/// of [0, 1/2]^d are probed; the best probes are then polished by compass search.
inline HessianRange compute_unit_bump_range(std::size_t d) {
    std::size_t r = 5;
    auto multisets = [d](std::size_t k) {
        double c = 1.0;  // C(k + d - 1, d)
        for (std::size_t i = 1; i <= d; ++i) c = c * static_cast<double>(k - 1 + i) / static_cast<double>(i);
        return c;
    };
    while (r < 4097 && multisets(2 * r - 1) <= 5e4) r = 2 * r - 1;
    const double h = 0.5 / static_cast<double>(r - 1);

    struct Probe {
        double value;
        std::vector<double> u;
    };
    constexpr std::size_t keep = 8;
    std::vector<Probe> lows, highs;
    auto offer = [](std::vector<Probe>& list, Probe p, bool larger) {
        list.push_back(std::move(p));
        std::sort(list.begin(), list.end(), [larger](const Probe& a, const Probe& b) { return larger ? a.value > b.value : a.value < b.value; });
        if (list.size() > keep) list.pop_back();
    };
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> u(d);
    for (bool more = true; more;) {
        for (std::size_t a = 0; a < d; ++a) u[a] = static_cast<double>(idx[a]) * h;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(unit_bump_hessian(u), Eigen::EigenvaluesOnly);
        offer(lows, {es.eigenvalues().minCoeff(), u}, false);
        offer(highs, {es.eigenvalues().maxCoeff(), u}, true);
        // next non-decreasing index tuple
        more = false;
        for (std::size_t a = d; a-- > 0;) {
            if (idx[a] + 1 < r) {
                ++idx[a];
                for (std::size_t b = a + 1; b < d; ++b) idx[b] = idx[a];
                more = true;
                break;
            }
        }
    }

    auto polish = [d, h](Probe p, bool want_max) {
        const double sign = want_max ? 1.0 : -1.0;
        for (double step = h; step > 1e-10; step *= 0.5) {
            for (bool moved = true; moved;) {
                moved = false;
                for (std::size_t a = 0; a < d; ++a) {
                    for (double dir : {-1.0, 1.0}) {
                        std::vector<double> q = p.u;
                        q[a] = std::clamp(q[a] + dir * step, 0.0, 1.0);
                        const double v = unit_bump_eig(q, want_max);
                        if (sign * (v - p.value) > 0.0) {
                            p = {v, std::move(q)};
                            moved = true;
                        }
                    }
                }
            }
        }
        return p.value;
    };
    HessianRange out{0.0, 0.0};
    for (const auto& p : lows) out.min_eig = std::min(out.min_eig, polish(p, false));
    for (const auto& p : highs) out.max_eig = std::max(out.max_eig, polish(p, true));
    return out;
}

inline HessianRange unit_bump_range(std::size_t d) {
    static std::mutex mu;
    static std::map<std::size_t, HessianRange> cache;
    const std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(d);
    if (it == cache.end()) it = cache.emplace(d, compute_unit_bump_range(d)).first;
    return it->second;
}

}  // namespace detail

/// Bump potential |x|^2/2 + sum_j tau_j kappa g(m(x - x_j)). On an active cell
/// D^2 f0 = I + kappa m^2 D^2 g, so its eigenvalues span 1 + kappa m^2 [lo, hi]
/// with [lo, hi] the unit bump range. Throws when that leaves [1/2, 2],
/// reporting the largest admissible kappa.
[[nodiscard]] inline TestProblem make_bump_problem(std::size_t d, std::size_t m, double kappa, std::vector<std::uint8_t> tau) {
    if (m == 0) throw ConfigError("bump: m must be >= 1");
    if (!(kappa >= 0.0)) throw ConfigError("bump: kappa must be >= 0");
    if (tau.size() != ipow(m, d)) throw ConfigError("bump: tau must have m^d entries");
    TestProblem p(ProblemKind::bump, d);
    const bool active = std::any_of(tau.begin(), tau.end(), [](std::uint8_t t) { return t != 0; });
    p.bump_ = BumpSpec{m, kappa, std::move(tau)};
    if (kappa == 0.0 || !active) return p;

    const HessianRange unit = detail::unit_bump_range(d);
    const double m2 = static_cast<double>(m * m);
    const double lo = 1.0 + kappa * m2 * unit.min_eig, hi = 1.0 + kappa * m2 * unit.max_eig;
    if (lo < 0.5 || hi > 2.0) {
        const double limit = std::min(unit.min_eig < 0 ? 0.5 / (-unit.min_eig * m2) : 1e300, unit.max_eig > 0 ? 1.0 / (unit.max_eig * m2) : 1e300);
        std::ostringstream os;
        os << "bump: Hessian eigenvalues [" << lo << ", " << hi << "] leave [1/2, 2]; kappa must be <= " << limit << " for m = " << m;
        throw ConfigError(os.str());
    }
    return p;
}

/// Same as make_bump_problem with tau drawn uniformly from {0,1}^(m^d).
[[nodiscard]] inline TestProblem make_bump_problem(std::size_t d, std::size_t m, double kappa, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> tau(ipow(m, d));
    for (auto& t : tau) t = static_cast<std::uint8_t>(rng.next() & 1U);
    return make_bump_problem(d, m, kappa, std::move(tau));
}

/// n i.i.d. draws from Unif([0,1]^d).
[[nodiscard]] inline SampleSet sample_source(const TestProblem& p, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    SampleSet x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.dim()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index a = 0; a < x.cols(); ++a) x(i, a) = rng.uniform();
    }
    return x;
}

/// T0 applied to a source draw. Pass an independent draw to model Y ~ Q.
[[nodiscard]] inline SampleSet pushforward_sample(const TestProblem& p, const SampleSet& x) {
    if (static_cast<std::size_t>(x.cols()) != p.dim()) throw ConfigError("pushforward: dimension mismatch");
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index a = 0; a < x.cols(); ++a) {
            if (!(x(i, a) >= 0.0 && x(i, a) <= 1.0)) {
                throw DomainError("pushforward: source point outside [0,1]^d", static_cast<std::size_t>(i), static_cast<std::size_t>(a));
            }
        }
    }
    return p.map_all(x);
}

/// Density of (grad f0)_# P at y in [0,1]^d: 1 / det D^2 f0 at the preimage,
/// found by damped Newton on grad f0(x) = y.
[[nodiscard]] inline double monge_ampere_density(const TestProblem& p, std::span<const double> y) {
    const std::size_t d = p.dim();
    for (std::size_t a = 0; a < d; ++a) {
        if (!(y[a] >= 0.0 && y[a] <= 1.0)) throw DomainError("monge_ampere_density: y outside [0,1]^d", 0, a);
    }
    if (p.kind() == ProblemKind::identity) return 1.0;
    const auto dd = static_cast<Eigen::Index>(d);
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(y.data(), dd);
    Eigen::VectorXd ty(dd);
    Eigen::VectorXd target = x;

    auto residual = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd t(dd);
        p.map(std::span<const double>(z.data(), d), std::span<double>(t.data(), d));
        return Eigen::VectorXd(t - target);
    };
    Eigen::VectorXd r = residual(x);
    bool converged = r.norm() < 1e-13;
    for (int it = 0; it < 100 && !converged; ++it) {
        const Eigen::MatrixXd h = p.hessian(std::span<const double>(x.data(), d));
        const Eigen::VectorXd step = h.ldlt().solve(r);
        double t = 1.0;
        Eigen::VectorXd xn = x - step;
        Eigen::VectorXd rn = residual(xn);
        while (rn.norm() > (1.0 - 1e-4 * t) * r.norm() && t > 1e-8) {
            t *= 0.5;
            xn = x - t * step;
            rn = residual(xn);
        }
        x = xn;
        r = rn;
        converged = r.norm() < 1e-13 || step.norm() * t < 1e-15;
    }
    if (!converged) throw NumericError("monge_ampere_density: Newton did not converge");
    return 1.0 / p.hessian(std::span<const double>(x.data(), d)).determinant();
}

inline void to_json(nlohmann::json& j, const TestProblem& p) {
    j = {{"name", p.name()}, {"d", p.dim()}};
    if (p.kind() == ProblemKind::bump) {
        j["m"] = p.bump().m;
        j["kappa"] = p.bump().kappa;
        j["tau"] = p.bump().tau;
    }
}

/// {"name": "id"|"exp"|"bump", "d": .., bump: "m", "kappa", and "tau" or "seed"}.
[[nodiscard]] inline TestProblem problem_from_json(const nlohmann::json& j, std::size_t fallback_d = 0) {
    const auto name = j.at("name").get<std::string>();
    const std::size_t d = j.contains("d") ? j.at("d").get<std::size_t>() : fallback_d;
    if (d == 0) throw ConfigError("problem: missing dimension");
    if (name == "id") return TestProblem::identity(d);
    if (name == "exp") return TestProblem::exponential(d);
    if (name == "bump") {
        const auto m = j.at("m").get<std::size_t>();
        const auto kappa = j.at("kappa").get<double>();
        if (j.contains("tau")) return make_bump_problem(d, m, kappa, j.at("tau").get<std::vector<std::uint8_t>>());
        return make_bump_problem(d, m, kappa, j.value("seed", std::uint64_t{0}));
    }
    throw ConfigError("problem: unknown name '" + name + "' (expected id, exp or bump)");
}

// {d, n, points:[[...]]}

[[nodiscard]] inline nlohmann::json samples_to_json(const SampleSet& x) {
    auto pts = nlohmann::json::array();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        pts.push_back(std::vector<double>(x.row(i).data(), x.row(i).data() + x.cols()));
    }
    return {{"d", x.cols()}, {"n", x.rows()}, {"points", std::move(pts)}};
}

[[nodiscard]] inline SampleSet samples_from_json(const nlohmann::json& j) {
    const auto d = j.at("d").get<Eigen::Index>();
    const auto& pts = j.at("points");
    SampleSet x(static_cast<Eigen::Index>(pts.size()), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto& row = pts[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != d) throw ConfigError("samples: point " + std::to_string(i) + " has wrong dimension");
        for (Eigen::Index a = 0; a < d; ++a) x(i, a) = row[static_cast<std::size_t>(a)].get<double>();
    }
    if (j.contains("n") && j.at("n").get<Eigen::Index>() != x.rows()) throw ConfigError("samples: n does not match point count");
    return x;
}

}  // namespace otmap::synthetic
