#pragma once

// Empirical semi-dual over truncated wavelet coefficients:
//
//   F(gamma) = 1/n sum_i P_x(W^T gamma)(X_i) + 1/n sum_i P_y(L(W^T gamma))(Y_i)
//
// where P is multilinear interpolation and L the discrete Legendre transform.
// F is convex and piecewise linear in gamma. The subgradient puts +w/n on the
// corners of each X stencil and -w/n on the maximizer behind each corner of a
// Y stencil, then pulls the field cotangent back through the synthesis.

#include "otmap/core.hpp"
#include "otmap/grid.hpp"
#include "otmap/lbfgs.hpp"
#include "otmap/legendre.hpp"
#include "otmap/synthetic.hpp"
#include "otmap/wavelet.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace otmap::semidual {

struct SemidualProblem {
    SampleSet X;
    SampleSet Y;
    Grid grid_x;
    Grid grid_y;
    std::size_t J = 0;

    void validate() const {
        if (X.rows() < 1) throw ConfigError("semidual: need at least one sample");
        if (X.rows() != Y.rows()) throw ConfigError("semidual: X and Y must have the same size");
        if (X.cols() != Y.cols()) throw ConfigError("semidual: X and Y dimensions differ");
        if (static_cast<std::size_t>(X.cols()) != grid_x.dim() || grid_x.dim() != grid_y.dim()) {
            throw ConfigError("semidual: sample and grid dimensions differ");
        }
        if (grid_x.n() != grid_y.n()) throw ConfigError("semidual: x and y grids must share the node count");
        if (J > wavelet::max_levels(grid_x.n())) {
            throw ConfigError("semidual: scale J = " + std::to_string(J) + " exceeds the " +
                              std::to_string(wavelet::max_levels(grid_x.n())) + " levels available for N = " +
                              std::to_string(grid_x.n()));
        }
    }
};

/// Precomputed stencils and synthesis operator; evaluations are independent and thread-safe.
class SemidualObjective {
public:
    explicit SemidualObjective(SemidualProblem problem)
        : problem_((problem.validate(), std::move(problem))),
          basis_(problem_.grid_x.n(), problem_.grid_x.dim(), wavelet::max_levels(problem_.grid_x.n()), problem_.J),
          sx_(make_stencil(problem_.grid_x, problem_.X)),
          sy_(make_stencil(problem_.grid_y, problem_.Y)) {}

    [[nodiscard]] const SemidualProblem& problem() const noexcept { return problem_; }
    [[nodiscard]] std::size_t size() const noexcept { return basis_.size(); }
    [[nodiscard]] const wavelet::ScaleBasis& basis() const noexcept { return basis_; }

    /// W_J^T gamma on grid_x.
    [[nodiscard]] ScalarField potential(std::span<const double> gamma) const {
        ScalarField f(problem_.grid_x);
        basis_.synthesize(gamma, f.values);
        return f;
    }

    /// Objective for a field on grid_x (constant shifts cancel between the two terms).
    [[nodiscard]] double field_value(const ScalarField& f, std::vector<double>* cotangent = nullptr) const {
        const double inv_n = 1.0 / static_cast<double>(problem_.X.rows());
        double a = 0.0;
        for (double v : interpolate(sx_, f.values)) a += v;
        const legendre::Conjugate conj = legendre::legendre_tracked(f, problem_.grid_y);
        double b = 0.0;
        for (double v : interpolate(sy_, conj.values().values)) b += v;
        if (cotangent) {
            cotangent->assign(f.values.size(), 0.0);
            for (std::size_t k = 0; k < sx_.index.size(); ++k) (*cotangent)[sx_.index[k]] += sx_.weight[k] * inv_n;
            for (std::size_t k = 0; k < sy_.index.size(); ++k) {
                if (sy_.weight[k] == 0.0) continue;
                (*cotangent)[conj.maximizer(sy_.index[k])] -= sy_.weight[k] * inv_n;
            }
        }
        return (a + b) * inv_n;
    }

    [[nodiscard]] double value(std::span<const double> gamma) const { return field_value(potential(gamma)); }

    /// Objective value; writes a subgradient into `grad`.
    double evaluate(std::span<const double> gamma, std::span<double> grad) const {
        std::vector<double> cot;
        const double v = field_value(potential(gamma), &cot);
        basis_.adjoint(cot, grad);
        return v;
    }

private:
    SemidualProblem problem_;
    wavelet::ScaleBasis basis_;
    Stencil sx_;
    Stencil sy_;
};

namespace detail {

/// Leading m_J coefficients of `gamma`; finer coefficients must be zero.
inline std::vector<double> scale_prefix(const SemidualProblem& p, const wavelet::WaveletCoeffs& gamma) {
    if (gamma.n != p.grid_x.n() || gamma.d != p.grid_x.dim()) throw ConfigError("semidual: coefficients do not match grid_x");
    const std::size_t m = wavelet::coeff_count(gamma.n, gamma.d, p.J);
    if (gamma.levels != wavelet::max_levels(gamma.n)) {
        throw ConfigError("semidual: coefficients must use the full decomposition depth");
    }
    if (gamma.flat.size() < m) throw ConfigError("semidual: coefficient vector too short");
    for (std::size_t k = m; k < gamma.flat.size(); ++k) {
        if (gamma.flat[k] != 0.0) throw ConfigError("semidual: coefficients finer than scale J are nonzero");
    }
    return {gamma.flat.begin(), gamma.flat.begin() + static_cast<std::ptrdiff_t>(m)};
}

}  // namespace detail

/// Embeds a scale-J parameter vector into full-depth coefficients.
[[nodiscard]] inline wavelet::WaveletCoeffs embed(const SemidualProblem& p, std::span<const double> gamma) {
    const std::size_t n = p.grid_x.n();
    const std::size_t d = p.grid_x.dim();
    wavelet::WaveletCoeffs c{n, d, wavelet::max_levels(n), std::vector<double>(ipow(n, d), 0.0)};
    if (gamma.size() != wavelet::coeff_count(n, d, p.J)) throw ConfigError("semidual: parameter size does not match m_J");
    std::copy(gamma.begin(), gamma.end(), c.flat.begin());
    return c;
}

[[nodiscard]] inline double objective(const SemidualProblem& p, const wavelet::WaveletCoeffs& gamma) {
    const SemidualObjective obj(p);
    return obj.value(detail::scale_prefix(p, gamma));
}

/// Subgradient with respect to the leading m_J coefficients.
[[nodiscard]] inline std::vector<double> subgradient(const SemidualProblem& p, const wavelet::WaveletCoeffs& gamma) {
    const SemidualObjective obj(p);
    std::vector<double> g(obj.size());
    (void)obj.evaluate(detail::scale_prefix(p, gamma), g);
    return g;
}

/// L-BFGS from gamma0 (all zeros when empty).
[[nodiscard]] inline OptimizerResult minimize(const SemidualObjective& obj, std::vector<double> gamma0 = {},
                                              const OptimizerOptions& opts = {}) {
    if (gamma0.empty()) gamma0.assign(obj.size(), 0.0);
    if (gamma0.size() != obj.size()) throw ConfigError("semidual: gamma0 has the wrong size");
    Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(gamma0.data(), static_cast<Eigen::Index>(gamma0.size()));
    auto fn = [&obj](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return obj.evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                            std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
    };
    return lbfgs_minimize(fn, std::move(x0), opts);
}

[[nodiscard]] inline OptimizerResult minimize(const SemidualProblem& p, std::vector<double> gamma0 = {},
                                              const OptimizerOptions& opts = {}) {
    return minimize(SemidualObjective(p), std::move(gamma0), opts);
}

enum class Pipeline { envelope, direct };

[[nodiscard]] inline std::string to_string(Pipeline p) { return p == Pipeline::envelope ? "envelope" : "direct"; }

/// A fitted wavelet potential and the maps derived from it.
struct WaveletFit {
    std::size_t J = 0;
    std::vector<double> gamma;
    ScalarField potential;      // W_J^T gamma_hat on grid_x
    VectorField envelope_map;   // gradient of the convex envelope
    VectorField direct_map;     // gradient of the raw potential
    Grid grid_y;
    OptimizerResult optimizer;
};

[[nodiscard]] inline WaveletFit fit_wavelet(const SampleSet& X, const SampleSet& Y, const Box& box_x, const Box& box_y,
                                            std::size_t grid_n, std::size_t J, const OptimizerOptions& opts = {}) {
    SemidualProblem p{X, Y, Grid(box_x, grid_n), Grid(box_y, grid_n), J};
    const SemidualObjective obj(std::move(p));
    WaveletFit fit;
    fit.J = J;
    fit.grid_y = obj.problem().grid_y;
    fit.optimizer = minimize(obj, {}, opts);
    fit.gamma.assign(fit.optimizer.x.data(), fit.optimizer.x.data() + fit.optimizer.x.size());
    fit.potential = obj.potential(fit.gamma);
    if (!fit.potential.all_finite()) throw NumericError("fit_wavelet: potential is not finite");
    fit.envelope_map = gradient(legendre::convex_envelope(fit.potential, fit.grid_y));
    fit.direct_map = gradient(fit.potential);
    return fit;
}

/// Quadrature grid on the source support [0,1]^d.
[[nodiscard]] inline Grid unit_quadrature_grid(std::size_t d, std::size_t n) { return Grid(Box::cube(d, 0.0, 1.0), n); }

/// S(f) = int f dP + int f*(T0(x)) dP over P = Unif([0,1]^d), with f* the discrete
/// conjugate onto grid_y, both terms read off by multilinear interpolation.
[[nodiscard]] inline double population_semidual(const ScalarField& f, const Grid& grid_y, const synthetic::TestProblem& truth,
                                                std::size_t quad_n = 33) {
    if (f.grid.dim() != truth.dim()) throw ConfigError("population_semidual: dimension mismatch");
    const Grid q = unit_quadrature_grid(truth.dim(), quad_n);
    const SampleSet nodes = q.nodes();
    const auto w = simpson_node_weights(q);
    const auto fx = interpolate(f, nodes);
    const auto fy = interpolate(legendre::legendre_d(f, grid_y), truth.map_all(nodes));
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * (fx[i] + fy[i]);
    return s;
}

/// Index of the smallest value; ties go to the smallest index.
[[nodiscard]] inline std::size_t select_scale(std::span<const double> population_values) {
    if (population_values.empty()) throw ConfigError("select_scale: empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < population_values.size(); ++i) {
        if (population_values[i] < population_values[best]) best = i;
    }
    return best;
}

// ---- stability certificate --------------------------------------------------

struct StabilityReport {
    double gap = 0.0;         // S(f) - S(f0)
    double l2_dist_sq = 0.0;  // |grad f - grad f0|^2 in L2(P)
    double M = 0.0;
    bool lower_ok = false;
    bool upper_ok = false;
    bool convexity_ok = false;
    double tol = 1e-4;

    [[nodiscard]] bool holds() const noexcept { return lower_ok && upper_ok; }
};

struct CertificateOptions {
    double tol = 1e-4;
    bool require_convexity = true;
    bool hessian_check = false;  // full finite-difference Hessian eigenvalues, d <= 3
};

namespace detail {

/// Finite-difference derivatives of node values around node `k`: fourth order
/// where two neighbours exist on both sides, second order otherwise.
struct LocalDerivatives {
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

inline LocalDerivatives local_derivatives(const ScalarField& f, std::size_t k) {
    const Grid& g = f.grid;
    const std::size_t d = g.dim();
    const std::size_t n = g.n();
    const auto& v = f.values;
    LocalDerivatives out{Eigen::VectorXd(static_cast<Eigen::Index>(d)), Eigen::MatrixXd(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
    std::vector<std::size_t> pos(d);
    for (std::size_t a = 0; a < d; ++a) pos[a] = g.axis_index(k, a);
    for (std::size_t a = 0; a < d; ++a) {
        const auto ia = static_cast<Eigen::Index>(a);
        const std::size_t s = g.stride(a);
        const double h = g.spacing(a);
        const std::size_t p = pos[a];
        if (p >= 2 && p + 2 < n) {
            out.grad(ia) = (-v[k + 2 * s] + 8.0 * v[k + s] - 8.0 * v[k - s] + v[k - 2 * s]) / (12.0 * h);
            out.hess(ia, ia) = (-v[k + 2 * s] + 16.0 * v[k + s] - 30.0 * v[k] + 16.0 * v[k - s] - v[k - 2 * s]) / (12.0 * h * h);
        } else if (p >= 1 && p + 1 < n) {
            out.grad(ia) = (v[k + s] - v[k - s]) / (2.0 * h);
            out.hess(ia, ia) = (v[k + s] - 2.0 * v[k] + v[k - s]) / (h * h);
        } else {
            throw ConfigError("stability_certificate: evaluation node on the grid boundary; enlarge the potential grid");
        }
        for (std::size_t b = 0; b < a; ++b) {
            const auto ib = static_cast<Eigen::Index>(b);
            const std::size_t t = g.stride(b);
            if (pos[b] < 1 || pos[b] + 1 >= n) throw ConfigError("stability_certificate: evaluation node on the grid boundary");
            const double m = (v[k + s + t] - v[k + s - t] - v[k - s + t] + v[k - s - t]) / (4.0 * h * g.spacing(b));
            out.hess(ia, ib) = m;
            out.hess(ib, ia) = m;
        }
    }
    return out;
}

/// Continuous conjugate f*(y) of the potential behind node values, starting the
/// discrete search at node `start`: climb to the best node, then maximize the
/// local quadratic model, re-centring while the model optimum leaves the cell.
/// On non-convex values the recentring may not settle; the best node score seen
/// (the discrete conjugate) is returned then.
inline double refined_conjugate(const ScalarField& f, std::span<const double> y, std::size_t start) {
    const Grid& g = f.grid;
    const std::size_t d = g.dim();
    auto score = [&](std::size_t i) {
        double s = -f.values[i];
        for (std::size_t a = 0; a < d; ++a) s += g.coord(a, g.axis_index(i, a)) * y[a];
        return s;
    };
    std::size_t k = start;
    std::vector<std::size_t> visited;
    double best_seen = -std::numeric_limits<double>::infinity();
    for (int recentre = 0; recentre < 16; ++recentre) {
        double best = score(k);
        for (bool moved = true; moved;) {
            moved = false;
            for (std::size_t a = 0; a < d; ++a) {
                const std::size_t p = g.axis_index(k, a);
                for (int dir : {-1, 1}) {
                    if ((dir < 0 && p == 0) || (dir > 0 && p + 1 == g.n())) continue;
                    const std::size_t nb = dir < 0 ? k - g.stride(a) : k + g.stride(a);
                    const double s = score(nb);
                    if (s > best) {
                        best = s;
                        k = nb;
                        moved = true;
                    }
                }
            }
        }
        best_seen = std::max(best_seen, best);
        const LocalDerivatives ld = local_derivatives(f, k);
        const Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(d)) - ld.grad;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(ld.hess);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return best;
        const Eigen::VectorXd delta = ldlt.solve(r);
        const double model = best + 0.5 * r.dot(delta);
        // the model is trusted within one cell of its centre
        std::size_t target = k;
        for (std::size_t a = 0; a < d; ++a) {
            const double steps = std::round(delta(static_cast<Eigen::Index>(a)) / g.spacing(a));
            if (std::abs(delta(static_cast<Eigen::Index>(a))) > g.spacing(a)) {
                const auto p = static_cast<std::ptrdiff_t>(g.axis_index(k, a)) + static_cast<std::ptrdiff_t>(steps);
                const auto clamped = std::clamp<std::ptrdiff_t>(p, 1, static_cast<std::ptrdiff_t>(g.n()) - 2);
                target = target - g.axis_index(k, a) * g.stride(a) + static_cast<std::size_t>(clamped) * g.stride(a);
            }
        }
        if (target == k || std::find(visited.begin(), visited.end(), target) != visited.end()) return model;
        visited.push_back(k);
        k = target;
    }
    return best_seen;
}

inline bool axis_convexity_ok(const ScalarField& f, double M) {
    const Grid& g = f.grid;
    const double lo = 1.0 / (2.0 * M);
    const double hi = 2.0 * M;
    for (std::size_t a = 0; a < g.dim(); ++a) {
        const std::size_t s = g.stride(a);
        const double h2 = g.spacing(a) * g.spacing(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t p = g.axis_index(i, a);
            if (p == 0 || p + 1 == g.n()) continue;
            const double d2 = (f.values[i + s] - 2.0 * f.values[i] + f.values[i - s]) / h2;
            if (!(d2 >= lo && d2 <= hi)) return false;
        }
    }
    return true;
}

inline bool hessian_convexity_ok(const ScalarField& f, double M) {
    const Grid& g = f.grid;
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool interior = true;
        for (std::size_t a = 0; a < g.dim(); ++a) {
            const std::size_t p = g.axis_index(i, a);
            interior = interior && p >= 1 && p + 1 < g.n();
        }
        if (!interior) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(local_derivatives(f, i).hess, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < 1.0 / (2.0 * M) || es.eigenvalues().maxCoeff() > 2.0 * M) return false;
    }
    return true;
}

}  // namespace detail

/// Both sides of (1/(8M)) |grad f - grad f0|^2 <= S(f) - S(f0) <= 2M |grad f - grad f0|^2.
///
/// f and f0 live on one grid covering a neighbourhood of the source support;
/// `density` (the density of P) lives on the quadrature grid, whose nodes must
/// coincide with nodes of the potential grid. Q = (grad f0)_# P.
[[nodiscard]] inline StabilityReport stability_certificate(const ScalarField& f, const ScalarField& f0, const ScalarField& density,
                                                           double M, const CertificateOptions& opts = {}) {
    if (!(M > 0.0)) throw ConfigError("stability_certificate: M must be > 0");
    if (!(f.grid == f0.grid)) throw ConfigError("stability_certificate: f and f0 must share a grid");
    const Grid& g = f.grid;
    const Grid& q = density.grid;
    const std::size_t d = g.dim();
    if (q.dim() != d) throw ConfigError("stability_certificate: density dimension mismatch");
    if (opts.hessian_check && d > 3) throw ConfigError("stability_certificate: Hessian check is offered for d <= 3 only");

    StabilityReport rep;
    rep.M = M;
    rep.tol = opts.tol;
    rep.convexity_ok = detail::axis_convexity_ok(f, M) && detail::axis_convexity_ok(f0, M);
    if (rep.convexity_ok && opts.hessian_check) {
        rep.convexity_ok = detail::hessian_convexity_ok(f, M) && detail::hessian_convexity_ok(f0, M);
    }
    if (!rep.convexity_ok && opts.require_convexity) {
        std::ostringstream os;
        os << "stability_certificate: f or f0 violates the curvature bounds [1/(2M), 2M] = [" << 1.0 / (2.0 * M) << ", "
           << 2.0 * M << "]; certificate refused";
        throw ConfigError(os.str());
    }

    // map quadrature nodes onto potential-grid nodes
    std::vector<std::size_t> node_of(q.size());
    std::vector<double> x(d);
    for (std::size_t i = 0; i < q.size(); ++i) {
        q.node(i, x);
        std::size_t flat = 0;
        for (std::size_t a = 0; a < d; ++a) {
            const double t = (x[a] - g.box().lower[a]) / g.spacing(a);
            const double r = std::round(t);
            if (std::abs(t - r) > 1e-9 || r < 0.0 || r > static_cast<double>(g.n() - 1)) {
                throw ConfigError("stability_certificate: quadrature nodes must coincide with potential grid nodes");
            }
            flat += static_cast<std::size_t>(r) * g.stride(a);
        }
        node_of[i] = flat;
    }

    const auto w = simpson_node_weights(q);
    double s_f = 0.0, s_f0 = 0.0, dist = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const std::size_t k = node_of[i];
        const double wi = w[i] * density.values[i];
        const detail::LocalDerivatives d0 = detail::local_derivatives(f0, k);
        const detail::LocalDerivatives d1 = detail::local_derivatives(f, k);
        const std::span<const double> y(d0.grad.data(), d);
        s_f += wi * (f.values[k] + detail::refined_conjugate(f, y, k));
        s_f0 += wi * (f0.values[k] + detail::refined_conjugate(f0, y, k));
        dist += wi * (d1.grad - d0.grad).squaredNorm();
    }
    rep.gap = s_f - s_f0;
    rep.l2_dist_sq = dist;
    rep.lower_ok = rep.gap >= dist / (8.0 * M) - opts.tol;
    rep.upper_ok = rep.gap <= 2.0 * M * dist + opts.tol;
    return rep;
}

}  // namespace otmap::semidual
