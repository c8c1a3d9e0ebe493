#pragma once

// Discrete Legendre-Fenchel transforms.
//
// g(y_j) = max_i <x_i, y_j> - f(x_i) over all nodes of a source grid. In one
// dimension the max is evaluated in O(|x| + |y|) by walking the lower convex
// hull of (x_i, f_i) against sorted slopes. The d-dimensional transform is a
// sequence of exact one-dimensional maxima, one axis at a time:
//
//   g(y) = max_{x_0} [x_0 y_0 + max_{x_1} [x_1 y_1 + ... max_{x_{d-1}} [x_{d-1} y_{d-1} - f(x)]]]
//
// Each inner max is itself a 1-D conjugate (of the negated partial result), and
// the hull walk returns the exact maximum of finitely many affine functions
// whether or not the data along the line is convex. Ties go to the smallest
// index on every axis, which is the smallest row-major index overall.

#include "otmap/core.hpp"
#include "otmap/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otmap::legendre {

namespace detail {

/// Hull walk. x strictly increasing, y non-decreasing. `hull` is scratch space.
inline void llt_kernel(std::span<const double> x, std::span<const double> f, std::span<const double> y,
                       std::span<double> g, std::span<std::uint32_t> arg, std::vector<std::uint32_t>& hull) {
    hull.clear();
    for (std::uint32_t i = 0; i < x.size(); ++i) {
        while (hull.size() >= 2) {
            const auto a = hull[hull.size() - 2];
            const auto b = hull.back();
            // drop b unless slope(a,b) < slope(b,i)
            if ((f[b] - f[a]) * (x[i] - x[b]) >= (f[i] - f[b]) * (x[b] - x[a])) {
                hull.pop_back();
            } else {
                break;
            }
        }
        hull.push_back(i);
    }
    std::size_t k = 0;
    const std::size_t last = hull.size() - 1;
    for (std::size_t j = 0; j < y.size(); ++j) {
        while (k < last) {
            const auto a = hull[k];
            const auto b = hull[k + 1];
            const double slope = (f[b] - f[a]) / (x[b] - x[a]);
            if (y[j] > slope) {
                ++k;
            } else {
                break;
            }
        }
        const auto v = hull[k];
        g[j] = x[v] * y[j] - f[v];
        arg[j] = v;
    }
}

}  // namespace detail

/// g[j] = max_i x_i * y_j - f_i in linear time.
[[nodiscard]] inline std::vector<double> llt_1d(std::span<const double> x, std::span<const double> f,
                                                std::span<const double> y) {
    if (x.empty()) throw ConfigError("llt_1d: empty source grid");
    if (x.size() != f.size()) throw ConfigError("llt_1d: x and f lengths differ");
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (!(x[i] > x[i - 1])) throw ConfigError("llt_1d: x nodes must be strictly increasing (index " + std::to_string(i) + ")");
    }
    for (std::size_t j = 1; j < y.size(); ++j) {
        if (y[j] < y[j - 1]) throw ConfigError("llt_1d: y nodes must be sorted");
    }
    std::vector<double> g(y.size());
    std::vector<std::uint32_t> arg(y.size());
    std::vector<std::uint32_t> hull;
    detail::llt_kernel(x, f, y, g, arg, hull);
    return g;
}

/// Conjugate values on the target grid together with the information needed to
/// recover, for any target node, the source node attaining the max.
class Conjugate {
public:
    Conjugate(ScalarField values, Grid source, std::vector<std::vector<std::uint32_t>> argmax)
        : values_(std::move(values)), source_(std::move(source)), argmax_(std::move(argmax)) {}

    [[nodiscard]] const ScalarField& values() const noexcept { return values_; }
    [[nodiscard]] const Grid& source() const noexcept { return source_; }

    /// Flat source index of the maximizer for target node `y_flat`.
    [[nodiscard]] std::size_t maximizer(std::size_t y_flat) const {
        const std::size_t d = source_.dim();
        const std::size_t nx = source_.n();
        const std::size_t ny = values_.grid.n();
        std::vector<std::size_t> yk(d), xk(d);
        for (std::size_t a = d; a-- > 0;) {
            yk[a] = y_flat % ny;
            y_flat /= ny;
        }
        // pass for axis a was stored with x coordinates on axes < a and y on axes >= a
        for (std::size_t a = 0; a < d; ++a) {
            std::size_t idx = 0;
            for (std::size_t b = 0; b < d; ++b) idx = idx * (b < a ? nx : ny) + (b < a ? xk[b] : yk[b]);
            xk[a] = argmax_[a][idx];
        }
        std::size_t flat = 0;
        for (std::size_t a = 0; a < d; ++a) flat = flat * nx + xk[a];
        return flat;
    }

private:
    ScalarField values_;
    Grid source_;
    std::vector<std::vector<std::uint32_t>> argmax_;
};

/// Factorized d-dimensional transform of `f` onto `grid_y`, keeping maximizers.
[[nodiscard]] inline Conjugate legendre_tracked(const ScalarField& f, const Grid& grid_y) {
    const Grid& gx = f.grid;
    const std::size_t d = gx.dim();
    if (grid_y.dim() != d) throw ConfigError("legendre: source and target dimensions differ");
    const std::size_t nx = gx.n();
    const std::size_t ny = grid_y.n();

    std::vector<std::vector<std::uint32_t>> argmax(d);
    std::vector<double> current = f.values;
    std::vector<std::size_t> shape(d, nx);

    std::vector<double> line_in(nx), line_out(ny);
    std::vector<std::uint32_t> line_arg(ny), hull;
    hull.reserve(nx);

    for (std::size_t a = d; a-- > 0;) {
        const bool first = (a + 1 == d);
        std::vector<std::size_t> out_shape = shape;
        out_shape[a] = ny;
        auto strides_of = [d](const std::vector<std::size_t>& s) {
            std::vector<std::size_t> st(d, 1);
            for (std::size_t b = d - 1; b-- > 0;) st[b] = st[b + 1] * s[b + 1];
            return st;
        };
        const auto in_st = strides_of(shape);
        const auto out_st = strides_of(out_shape);
        std::size_t out_size = 1;
        for (auto s : out_shape) out_size *= s;
        std::vector<double> next(out_size);
        argmax[a].assign(out_size, 0);

        const auto xs = gx.axis_nodes(a);
        const auto ys = grid_y.axis_nodes(a);

        std::vector<std::size_t> idx(d, 0);
        while (true) {
            std::size_t base_in = 0, base_out = 0;
            for (std::size_t b = 0; b < d; ++b) {
                base_in += idx[b] * in_st[b];
                base_out += idx[b] * out_st[b];
            }
            for (std::size_t k = 0; k < nx; ++k) {
                const double v = current[base_in + k * in_st[a]];
                line_in[k] = first ? v : -v;
            }
            detail::llt_kernel(xs, line_in, ys, line_out, line_arg, hull);
            for (std::size_t k = 0; k < ny; ++k) {
                next[base_out + k * out_st[a]] = line_out[k];
                argmax[a][base_out + k * out_st[a]] = line_arg[k];
            }
            std::size_t b = d;
            while (b-- > 0) {
                if (b == a) continue;
                if (++idx[b] < shape[b]) break;
                idx[b] = 0;
            }
            if (b == static_cast<std::size_t>(-1)) break;
        }
        current = std::move(next);
        shape = std::move(out_shape);
    }
    return Conjugate(ScalarField(grid_y, std::move(current)), gx, std::move(argmax));
}

/// The discrete transform L_{x->y}(f).
[[nodiscard]] inline ScalarField legendre_d(const ScalarField& f, const Grid& grid_y) {
    return legendre_tracked(f, grid_y).values();
}

/// Reference O(|x| |y|) enumeration; ties go to the smallest row-major index.
[[nodiscard]] inline ScalarField legendre_brute(const ScalarField& f, const Grid& grid_y, std::vector<std::size_t>* argmax = nullptr) {
    const std::size_t d = f.grid.dim();
    if (grid_y.dim() != d) throw ConfigError("legendre: source and target dimensions differ");
    const SampleSet xs = f.grid.nodes();
    ScalarField out(grid_y);
    if (argmax) argmax->assign(grid_y.size(), 0);
    std::vector<double> y(d);
    for (std::size_t j = 0; j < grid_y.size(); ++j) {
        grid_y.node(j, y);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < f.grid.size(); ++i) {
            double v = 0.0;
            for (std::size_t a = 0; a < d; ++a) v += xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) * y[a];
            v -= f.values[i];
            if (v > best) {
                best = v;
                best_i = i;
            }
        }
        out.values[j] = best;
        if (argmax) (*argmax)[j] = best_i;
    }
    return out;
}

/// Largest convex minorant representable through the slopes of `via_grid`: L_{y->x}(L_{x->y}(f)).
[[nodiscard]] inline ScalarField convex_envelope(const ScalarField& f, const Grid& via_grid) {
    return legendre_d(legendre_d(f, via_grid), f.grid);
}

/// Conjugate of q(x) = a/2 |x - t|^2 + <b, x - t> + c restricted to the box U:
/// |y - b|^2 / (2a) + <t, y> - c - a/2 * dist^2((y - b)/a + t, U).
/// The maximizer is the projection of (y - b)/a + t onto U.
[[nodiscard]] inline double quadratic_conjugate(double a, std::span<const double> b, double c, std::span<const double> t,
                                                const Box& u, std::span<const double> y) {
    if (!(a > 0.0)) throw ConfigError("quadratic_conjugate: curvature must be positive");
    const std::size_t d = y.size();
    if (b.size() != d || t.size() != d || u.dim() != d) throw ConfigError("quadratic_conjugate: dimension mismatch");
    double yb2 = 0.0, ty = 0.0, dist2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double r = y[i] - b[i];
        yb2 += r * r;
        ty += t[i] * y[i];
        const double p = r / a + t[i];
        const double q = std::clamp(p, u.lower[i], u.upper[i]);
        dist2 += (p - q) * (p - q);
    }
    return yb2 / (2.0 * a) + ty - c - 0.5 * a * dist2;
}

}  // namespace otmap::legendre
