#pragma once

// Regular tensor grids on boxes: multilinear interpolation, finite-difference
// gradients and composite Simpson quadrature.
//
// Storage is row-major with axis 0 slowest. Nodes are x_k = lower + k * h with
// h = (upper - lower) / (N - 1), so the boundary nodes sit on the box faces.

#include "otmap/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace otmap {

struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    [[nodiscard]] std::size_t dim() const noexcept { return lower.size(); }
    [[nodiscard]] double width(std::size_t axis) const { return upper[axis] - lower[axis]; }

    /// Same interval [lo, hi] along every axis.
    [[nodiscard]] static Box cube(std::size_t d, double lo, double hi) {
        return Box{std::vector<double>(d, lo), std::vector<double>(d, hi)};
    }

    void validate() const {
        if (lower.empty()) throw ConfigError("box: dimension must be >= 1");
        if (lower.size() != upper.size()) throw ConfigError("box: lower/upper dimension mismatch");
        for (std::size_t a = 0; a < lower.size(); ++a) {
            if (!std::isfinite(lower[a]) || !std::isfinite(upper[a]) || !(lower[a] < upper[a])) {
                std::ostringstream os;
                os << "box: need lower < upper on axis " << a << " (got " << lower[a] << ", " << upper[a]
                   << ")";
                throw ConfigError(os.str());
            }
        }
    }

    friend bool operator==(const Box&, const Box&) = default;
};

class Grid {
public:
    Grid() = default;

    Grid(Box box, std::size_t nodes_per_axis) : box_(std::move(box)), n_(nodes_per_axis) {
        box_.validate();
        if (n_ < 3 || n_ % 2 == 0) {
            throw ConfigError("grid: nodes per axis must be odd and >= 3 (got " + std::to_string(n_) + ")");
        }
        size_ = ipow(n_, dim());
        strides_.assign(dim(), 1);
        for (std::size_t a = dim() - 1; a-- > 0;) strides_[a] = strides_[a + 1] * n_;
    }

    [[nodiscard]] const Box& box() const noexcept { return box_; }
    [[nodiscard]] std::size_t dim() const noexcept { return box_.dim(); }
    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t stride(std::size_t axis) const { return strides_[axis]; }

    [[nodiscard]] double spacing(std::size_t axis) const {
        return box_.width(axis) / static_cast<double>(n_ - 1);
    }

    [[nodiscard]] double coord(std::size_t axis, std::size_t k) const {
        if (k == n_ - 1) return box_.upper[axis];
        return box_.lower[axis] + static_cast<double>(k) * spacing(axis);
    }

    [[nodiscard]] std::vector<double> axis_nodes(std::size_t axis) const {
        std::vector<double> out(n_);
        for (std::size_t k = 0; k < n_; ++k) out[k] = coord(axis, k);
        return out;
    }

    /// Per-axis index of flat node `flat` along `axis`.
    [[nodiscard]] std::size_t axis_index(std::size_t flat, std::size_t axis) const {
        return (flat / strides_[axis]) % n_;
    }

    void node(std::size_t flat, std::span<double> out) const {
        for (std::size_t a = 0; a < dim(); ++a) out[a] = coord(a, axis_index(flat, a));
    }

    [[nodiscard]] std::vector<double> node(std::size_t flat) const {
        std::vector<double> out(dim());
        node(flat, out);
        return out;
    }

    /// All nodes as a SampleSet, in storage order.
    [[nodiscard]] SampleSet nodes() const {
        SampleSet pts(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(dim()));
        for (std::size_t i = 0; i < size_; ++i) {
            node(i, std::span<double>(pts.row(static_cast<Eigen::Index>(i)).data(), dim()));
        }
        return pts;
    }

    friend bool operator==(const Grid& a, const Grid& b) { return a.n_ == b.n_ && a.box_ == b.box_; }

private:
    Box box_;
    std::size_t n_ = 0;
    std::size_t size_ = 0;
    std::vector<std::size_t> strides_;
};

[[nodiscard]] inline Grid make_grid(Box box, std::size_t nodes_per_axis) {
    return Grid(std::move(box), nodes_per_axis);
}

struct ScalarField {
    Grid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(Grid g) : grid(std::move(g)), values(grid.size(), 0.0) {}
    ScalarField(Grid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
        if (values.size() != grid.size()) throw ConfigError("scalar field: value count does not match grid");
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

/// One d-vector per grid node, node-major.
struct VectorField {
    Grid grid;
    std::vector<double> values;

    VectorField() = default;
    explicit VectorField(Grid g) : grid(std::move(g)), values(grid.size() * grid.dim(), 0.0) {}
    VectorField(Grid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
        if (values.size() != grid.size() * grid.dim()) {
            throw ConfigError("vector field: value count does not match grid");
        }
    }

    [[nodiscard]] std::span<const double> at(std::size_t node) const {
        return {values.data() + node * grid.dim(), grid.dim()};
    }
    [[nodiscard]] std::span<double> at(std::size_t node) { return {values.data() + node * grid.dim(), grid.dim()}; }

    /// Scalar field of one component.
    [[nodiscard]] ScalarField component(std::size_t axis) const {
        ScalarField out(grid);
        for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] = values[i * grid.dim() + axis];
        return out;
    }
};

/// Samples `fn` at every node of `grid`.
[[nodiscard]] inline ScalarField tabulate(const Grid& grid, const std::function<double(std::span<const double>)>& fn) {
    ScalarField out(grid);
    std::vector<double> x(grid.dim());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.node(i, x);
        out.values[i] = fn(x);
    }
    return out;
}

/// Corner indices and multilinear weights of a batch of query points.
struct Stencil {
    std::size_t corners = 0;  // 2^d
    std::vector<std::size_t> index;
    std::vector<double> weight;

    [[nodiscard]] std::size_t points() const noexcept { return corners == 0 ? 0 : index.size() / corners; }
};

inline constexpr double kBoxSlack = 1e-12;

/// Precomputes multilinear interpolation weights. Points must lie in the grid box
/// up to a relative slack of 1e-12; anything further out throws DomainError.
[[nodiscard]] inline Stencil make_stencil(const Grid& grid, const SampleSet& points) {
    const std::size_t d = grid.dim();
    if (static_cast<std::size_t>(points.cols()) != d) {
        throw ConfigError("interpolate: point dimension " + std::to_string(points.cols()) +
                          " does not match grid dimension " + std::to_string(d));
    }
    const std::size_t n = static_cast<std::size_t>(points.rows());
    Stencil st;
    st.corners = std::size_t{1} << d;
    st.index.resize(n * st.corners);
    st.weight.resize(n * st.corners);

    std::vector<std::size_t> cell(d);
    std::vector<double> frac(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            const double p = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a));
            const double lo = grid.box().lower[a];
            const double hi = grid.box().upper[a];
            const double slack = kBoxSlack * std::max(1.0, hi - lo);
            if (!(p >= lo - slack && p <= hi + slack)) {
                std::ostringstream os;
                os << "interpolate: point " << i << " lies outside the grid box on axis " << a << " (" << p
                   << " not in [" << lo << ", " << hi << "])";
                throw DomainError(os.str(), i, a);
            }
            const double t = std::clamp((p - lo) / grid.spacing(a), 0.0, static_cast<double>(grid.n() - 1));
            const std::size_t k = std::min(static_cast<std::size_t>(t), grid.n() - 2);
            cell[a] = k;
            frac[a] = std::clamp(t - static_cast<double>(k), 0.0, 1.0);
        }
        for (std::size_t c = 0; c < st.corners; ++c) {
            std::size_t flat = 0;
            double w = 1.0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool up = (c >> (d - 1 - a)) & 1U;
                flat += (cell[a] + (up ? 1 : 0)) * grid.stride(a);
                w *= up ? frac[a] : 1.0 - frac[a];
            }
            st.index[i * st.corners + c] = flat;
            st.weight[i * st.corners + c] = w;
        }
    }
    return st;
}

[[nodiscard]] inline std::vector<double> interpolate(const Stencil& st, std::span<const double> values) {
    const std::size_t n = st.points();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < st.corners; ++c) {
            acc += st.weight[i * st.corners + c] * values[st.index[i * st.corners + c]];
        }
        out[i] = acc;
    }
    return out;
}

[[nodiscard]] inline std::vector<double> interpolate(const ScalarField& field, const SampleSet& points) {
    return interpolate(make_stencil(field.grid, points), field.values);
}

[[nodiscard]] inline SampleSet interpolate(const VectorField& field, const SampleSet& points) {
    const Stencil st = make_stencil(field.grid, points);
    const std::size_t d = field.grid.dim();
    SampleSet out = SampleSet::Zero(points.rows(), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < st.points(); ++i) {
        for (std::size_t c = 0; c < st.corners; ++c) {
            const double w = st.weight[i * st.corners + c];
            const auto v = field.at(st.index[i * st.corners + c]);
            for (std::size_t a = 0; a < d; ++a) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) += w * v[a];
        }
    }
    return out;
}

/// Second-order finite differences: central in the interior, three-point
/// one-sided (-3/2, 2, -1/2) / h on the faces. Exact for quadratics.
[[nodiscard]] inline VectorField gradient(const ScalarField& field) {
    const Grid& g = field.grid;
    const std::size_t d = g.dim();
    const std::size_t n = g.n();
    VectorField out(g);
    const auto& f = field.values;
    for (std::size_t a = 0; a < d; ++a) {
        const std::size_t s = g.stride(a);
        const double h = g.spacing(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t k = g.axis_index(i, a);
            double v;
            if (k == 0) {
                v = (-1.5 * f[i] + 2.0 * f[i + s] - 0.5 * f[i + 2 * s]) / h;
            } else if (k == n - 1) {
                v = (1.5 * f[i] - 2.0 * f[i - s] + 0.5 * f[i - 2 * s]) / h;
            } else {
                v = (f[i + s] - f[i - s]) / (2.0 * h);
            }
            out.values[i * d + a] = v;
        }
    }
    return out;
}

/// Composite Simpson weights h/3 * (1, 4, 2, ..., 4, 1) for an odd node count.
[[nodiscard]] inline std::vector<double> simpson_weights(std::size_t n, double h) {
    if (n < 3 || n % 2 == 0) throw ConfigError("simpson: node count must be odd and >= 3");
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        w[k] = (k == 0 || k == n - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        w[k] *= h / 3.0;
    }
    return w;
}

/// Tensor-product Simpson weight of every node of `grid`.
[[nodiscard]] inline std::vector<double> simpson_node_weights(const Grid& grid) {
    std::vector<std::vector<double>> per_axis;
    for (std::size_t a = 0; a < grid.dim(); ++a) per_axis.push_back(simpson_weights(grid.n(), grid.spacing(a)));
    std::vector<double> w(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 1.0;
        for (std::size_t a = 0; a < grid.dim(); ++a) acc *= per_axis[a][grid.axis_index(i, a)];
        w[i] = acc;
    }
    return w;
}

[[nodiscard]] inline double simpson_integrate(const ScalarField& field) {
    const auto w = simpson_node_weights(field.grid);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * field.values[i];
    return acc;
}

[[nodiscard]] inline double simpson_integrate(const ScalarField& field, const ScalarField& weight) {
    if (!(field.grid == weight.grid)) throw ConfigError("simpson: field and weight live on different grids");
    const auto w = simpson_node_weights(field.grid);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * field.values[i] * weight.values[i];
    return acc;
}

// JSON: {box:{lower,upper}, n:N, values:[...]}

inline void to_json(nlohmann::json& j, const Box& b) { j = {{"lower", b.lower}, {"upper", b.upper}}; }

inline void from_json(const nlohmann::json& j, Box& b) {
    j.at("lower").get_to(b.lower);
    j.at("upper").get_to(b.upper);
    b.validate();
}

inline void to_json(nlohmann::json& j, const Grid& g) { j = {{"box", g.box()}, {"n", g.n()}}; }

inline void from_json(const nlohmann::json& j, Grid& g) { g = Grid(j.at("box").get<Box>(), j.at("n").get<std::size_t>()); }

inline void to_json(nlohmann::json& j, const ScalarField& f) {
    j = f.grid;
    j["values"] = f.values;
}

inline void from_json(const nlohmann::json& j, ScalarField& f) {
    f = ScalarField(j.get<Grid>(), j.at("values").get<std::vector<double>>());
}

inline void to_json(nlohmann::json& j, const VectorField& f) {
    j = f.grid;
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        const auto v = f.at(i);
        rows.push_back(std::vector<double>(v.begin(), v.end()));
    }
    j["values"] = std::move(rows);
}

inline void from_json(const nlohmann::json& j, VectorField& f) {
    const Grid g = j.get<Grid>();
    std::vector<double> flat;
    flat.reserve(g.size() * g.dim());
    for (const auto& row : j.at("values")) {
        if (row.size() != g.dim()) throw ConfigError("vector field: row length does not match dimension");
        for (const auto& v : row) flat.push_back(v.get<double>());
    }
    f = VectorField(g, std::move(flat));
}

}  // namespace otmap
