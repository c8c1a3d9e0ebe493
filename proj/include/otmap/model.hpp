#pragma once

// A fitted transport map of any of the three kinds, evaluable and serializable.

#include "otmap/assignment.hpp"
#include "otmap/core.hpp"
#include "otmap/grid.hpp"
#include "otmap/kernel.hpp"
#include "otmap/semidual.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace otmap {

struct WaveletMapModel {
    VectorField map;       // T_hat_J on grid_x
    ScalarField potential; // W_J^T gamma_hat on grid_x
    Grid grid_y;
    std::size_t J = 0;
    semidual::Pipeline pipeline = semidual::Pipeline::envelope;
    std::size_t iterations = 0;
    std::vector<double> objective_trace;
    bool line_search_failed = false;
    std::uint64_t seed = 0;
};

[[nodiscard]] inline WaveletMapModel make_wavelet_model(const semidual::WaveletFit& fit, semidual::Pipeline pipeline,
                                                        std::uint64_t seed = 0) {
    WaveletMapModel m;
    m.map = pipeline == semidual::Pipeline::envelope ? fit.envelope_map : fit.direct_map;
    m.potential = fit.potential;
    m.grid_y = fit.grid_y;
    m.J = fit.J;
    m.pipeline = pipeline;
    m.iterations = fit.optimizer.iterations;
    m.objective_trace = fit.optimizer.trace;
    m.line_search_failed = fit.optimizer.line_search_failed;
    m.seed = seed;
    return m;
}

enum class ModelKind { wavelet, kernel, matching };

[[nodiscard]] inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::wavelet: return "wavelet";
        case ModelKind::kernel: return "kernel";
        case ModelKind::matching: return "matching";
    }
    return "?";
}

class TransportMapModel {
public:
    using Payload = std::variant<WaveletMapModel, kernel::KernelModel, ot::MatchingModel>;

    TransportMapModel(Payload p) : payload_(std::move(p)) {}  // NOLINT(google-explicit-constructor)

    [[nodiscard]] ModelKind kind() const noexcept { return static_cast<ModelKind>(payload_.index()); }
    [[nodiscard]] const Payload& payload() const noexcept { return payload_; }

    template <class T>
    [[nodiscard]] const T& as() const {
        if (const T* p = std::get_if<T>(&payload_)) return *p;
        throw ConfigError("model: wrong model kind (" + to_string(kind()) + ")");
    }

    [[nodiscard]] std::size_t dim() const {
        return std::visit(
            [](const auto& m) -> std::size_t {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, WaveletMapModel>) {
                    return m.map.grid.dim();
                } else if constexpr (std::is_same_v<T, kernel::KernelModel>) {
                    return static_cast<std::size_t>(m.train_X.cols());
                } else {
                    return m.dim();
                }
            },
            payload_);
    }

    [[nodiscard]] SampleSet evaluate(const SampleSet& points) const {
        return std::visit(
            [&](const auto& m) -> SampleSet {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, WaveletMapModel>) {
                    return interpolate(m.map, points);
                } else if constexpr (std::is_same_v<T, kernel::KernelModel>) {
                    return kernel::predict(m, points);
                } else {
                    return ot::evaluate(m, points);
                }
            },
            payload_);
    }

private:
    Payload payload_;
};

namespace detail {

inline nlohmann::json rows_to_json(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& m) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index a = 0; a < m.cols(); ++a) r[static_cast<std::size_t>(a)] = m(i, a);
        out.push_back(std::move(r));
    }
    return out;
}

inline SampleSet rows_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw ConfigError(std::string("model: '") + what + "' must be a non-empty array of points");
    const auto d = static_cast<Eigen::Index>(j[0].size());
    SampleSet out(static_cast<Eigen::Index>(j.size()), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(r.size()) != d) throw ConfigError(std::string("model: ragged rows in '") + what + "'");
        for (Eigen::Index a = 0; a < d; ++a) out(i, a) = r[static_cast<std::size_t>(a)].get<double>();
    }
    return out;
}

}  // namespace detail

/// Schemas:
///   {kind:"wavelet", grid:{box,n}, map_values:[[..]..], potential:[..], grid_y:{box,n},
///    meta:{J, pipeline, iters, objective_trace, line_search_failed, seed}}
///   {kind:"kernel", X:[[..]..], W:[[..]..], nu_kernel, nu_ridge}
///   {kind:"matching", X:[[..]..], Y:[[..]..], nearest_neighbor}
[[nodiscard]] inline nlohmann::json model_to_json(const TransportMapModel& model) {
    return std::visit(
        [](const auto& m) -> nlohmann::json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, WaveletMapModel>) {
                const std::size_t d = m.map.grid.dim();
                auto values = nlohmann::json::array();
                for (std::size_t i = 0; i < m.map.grid.size(); ++i) {
                    const auto v = m.map.at(i);
                    values.push_back(std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(d)));
                }
                return {{"kind", "wavelet"},
                        {"grid", m.map.grid},
                        {"map_values", std::move(values)},
                        {"potential", m.potential.values},
                        {"grid_y", m.grid_y},
                        {"meta",
                         {{"J", m.J},
                          {"pipeline", semidual::to_string(m.pipeline)},
                          {"iters", m.iterations},
                          {"objective_trace", m.objective_trace},
                          {"line_search_failed", m.line_search_failed},
                          {"seed", m.seed}}}};
            } else if constexpr (std::is_same_v<T, kernel::KernelModel>) {
                const SampleSet w = m.W;
                return {{"kind", "kernel"},
                        {"X", detail::rows_to_json(m.train_X)},
                        {"W", detail::rows_to_json(w)},
                        {"nu_kernel", m.params.nu_kernel},
                        {"nu_ridge", m.params.nu_ridge}};
            } else {
                return {{"kind", "matching"},
                        {"X", detail::rows_to_json(m.X)},
                        {"Y", detail::rows_to_json(m.values)},
                        {"nearest_neighbor", m.nearest_neighbor}};
            }
        },
        model.payload());
}

[[nodiscard]] inline TransportMapModel model_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "wavelet") {
        WaveletMapModel m;
        const Grid g = j.at("grid").get<Grid>();
        m.map = VectorField(g);
        const auto& values = j.at("map_values");
        if (values.size() != g.size()) throw ConfigError("model: map_values has the wrong length");
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto v = values[i].get<std::vector<double>>();
            if (v.size() != g.dim()) throw ConfigError("model: map value " + std::to_string(i) + " has the wrong dimension");
            std::copy(v.begin(), v.end(), m.map.at(i).begin());
        }
        m.potential = ScalarField(g, j.at("potential").get<std::vector<double>>());
        m.grid_y = j.at("grid_y").get<Grid>();
        const auto& meta = j.at("meta");
        m.J = meta.at("J").get<std::size_t>();
        const auto pipeline = meta.value("pipeline", std::string("envelope"));
        if (pipeline != "envelope" && pipeline != "direct") throw ConfigError("model: unknown pipeline '" + pipeline + "'");
        m.pipeline = pipeline == "envelope" ? semidual::Pipeline::envelope : semidual::Pipeline::direct;
        m.iterations = meta.value("iters", std::size_t{0});
        m.objective_trace = meta.value("objective_trace", std::vector<double>{});
        m.line_search_failed = meta.value("line_search_failed", false);
        m.seed = meta.value("seed", std::uint64_t{0});
        return TransportMapModel(std::move(m));
    }
    if (kind == "kernel") {
        kernel::KernelModel m;
        m.train_X = detail::rows_from_json(j.at("X"), "X");
        m.W = detail::rows_from_json(j.at("W"), "W");
        m.params = kernel::KernelParams{j.at("nu_kernel").get<double>(), j.at("nu_ridge").get<double>()};
        m.params.validate();
        if (m.W.rows() != m.train_X.rows()) throw ConfigError("model: W and X row counts differ");
        return TransportMapModel(std::move(m));
    }
    if (kind == "matching") {
        ot::MatchingModel m;
        m.X = detail::rows_from_json(j.at("X"), "X");
        m.values = detail::rows_from_json(j.at("Y"), "Y");
        m.nearest_neighbor = j.value("nearest_neighbor", false);
        if (m.values.rows() != m.X.rows()) throw ConfigError("model: X and Y row counts differ");
        return TransportMapModel(std::move(m));
    }
    throw ConfigError("model: unknown kind '" + kind + "' (expected wavelet, kernel or matching)");
}

}  // namespace otmap
