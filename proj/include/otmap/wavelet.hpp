#pragma once

// Separable multilevel Daubechies-4 (eight taps, four vanishing moments)
// analysis and synthesis on odd-length grids.
//
// Each level maps a length-L signal to ceil(L/2) approximation and floor(L/2)
// detail coefficients using the db4 filters on the whole-point symmetric
// extension of the signal. The resulting square L x L analysis matrix is
// invertible (condition number about 2.2 at every length), and synthesis is its exact
// inverse, so analyze and synthesize are mutual inverses on arbitrary lengths.
// The transform is not orthonormal near the boundary.
//
// Coefficients are kept in the Mallat layout of an N^d array: the
// approximation band occupies the cube [0, L_D)^d, and level l details fill
// the shell between cubes of side L_{D-l+1} and L_{D-l}. The flattened order
// (approximation, then detail levels coarse to fine, bands ascending,
// row-major inside a band) makes every scale-J truncation a prefix.

#include "otmap/core.hpp"
#include "otmap/grid.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace otmap::wavelet {

inline constexpr std::size_t kFilterLength = 8;

inline constexpr std::array<double, kFilterLength> kDb4Lowpass = {
    -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
    -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965,
};

[[nodiscard]] constexpr double db4_highpass(std::size_t t) {
    const double mirrored = kDb4Lowpass[kFilterLength - 1 - t];
    return (t % 2 == 0) ? -mirrored : mirrored;
}

/// Tap offsets: approximation row k reads samples 2k - 6 .. 2k + 1, detail row k
/// reads 2k .. 2k + 7. Both start on even samples so interior rows stay orthonormal;
/// of the even alignments this one keeps the square boundary-reflected operator
/// best conditioned (singular value ratio about 2.2 at every length).
inline constexpr std::ptrdiff_t kLowPhase = 6;
inline constexpr std::ptrdiff_t kHighPhase = 0;

/// Lengths L_0 = N, L_{k+1} = (L_k + 1) / 2, stopping before a level would drop below the filter length.
[[nodiscard]] inline std::vector<std::size_t> level_lengths(std::size_t n) {
    std::vector<std::size_t> out{n};
    while ((out.back() + 1) / 2 >= kFilterLength) out.push_back((out.back() + 1) / 2);
    return out;
}

[[nodiscard]] inline std::size_t max_levels(std::size_t n) { return level_lengths(n).size() - 1; }

/// One decomposition level for signals of length L.
struct LevelOperator {
    Eigen::MatrixXd analysis;   // L x L, rows: approximation then detail
    Eigen::MatrixXd synthesis;  // inverse of analysis
};

namespace detail {

[[nodiscard]] inline std::size_t reflect(std::ptrdiff_t i, std::size_t len) {
    const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(len) ? i : period - i);
}

[[nodiscard]] inline LevelOperator build_level(std::size_t len) {
    const std::size_t na = (len + 1) / 2;
    const std::size_t nd = len / 2;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len));
    for (std::size_t k = 0; k < na; ++k) {
        for (std::size_t t = 0; t < kFilterLength; ++t) {
            const auto src = reflect(static_cast<std::ptrdiff_t>(2 * k + t) - kLowPhase, len);
            a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(src)) += kDb4Lowpass[t];
        }
    }
    for (std::size_t k = 0; k < nd; ++k) {
        for (std::size_t t = 0; t < kFilterLength; ++t) {
            const auto src = reflect(static_cast<std::ptrdiff_t>(2 * k + t) - kHighPhase, len);
            a(static_cast<Eigen::Index>(na + k), static_cast<Eigen::Index>(src)) += db4_highpass(t);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericError("wavelet: singular analysis operator for length " + std::to_string(len));
    return LevelOperator{a, lu.inverse()};
}

}  // namespace detail

/// Shared, immutable per-length operators.
[[nodiscard]] inline std::shared_ptr<const LevelOperator> level_operator(std::size_t len) {
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const LevelOperator>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(len);
    if (it == cache.end()) {
        it = cache.emplace(len, std::make_shared<const LevelOperator>(detail::build_level(len))).first;
    }
    return it->second;
}

/// A coefficient band: level 0 is the approximation, level l >= 1 the l-th detail level counted from the coarsest.
struct Band {
    std::size_t level = 0;
    std::size_t band_index = 0;  // bit (d-1-a) set <=> axis a lies in the detail half
    std::size_t offset = 0;      // into the flattened vector
    std::vector<std::size_t> begin;
    std::vector<std::size_t> end;

    [[nodiscard]] std::size_t size() const {
        std::size_t s = 1;
        for (std::size_t a = 0; a < begin.size(); ++a) s *= end[a] - begin[a];
        return s;
    }
};

/// Flattening order and Mallat positions for an (N, d, levels) decomposition.
class Layout {
public:
    Layout(std::size_t n, std::size_t d, std::size_t levels) : n_(n), d_(d), levels_(levels) {
        if (d == 0) throw ConfigError("wavelet: dimension must be >= 1");
        lengths_ = level_lengths(n);
        if (levels >= lengths_.size()) {
            throw ConfigError("wavelet: " + std::to_string(levels) + " levels requested but N = " + std::to_string(n) +
                              " supports at most " + std::to_string(lengths_.size() - 1));
        }
        lengths_.resize(levels + 1);

        std::size_t offset = 0;
        auto add_band = [&](std::size_t level, std::size_t index, std::vector<std::size_t> b, std::vector<std::size_t> e) {
            Band band{level, index, offset, std::move(b), std::move(e)};
            offset += band.size();
            bands_.push_back(std::move(band));
        };
        add_band(0, 0, std::vector<std::size_t>(d, 0), std::vector<std::size_t>(d, lengths_[levels]));
        for (std::size_t l = 1; l <= levels; ++l) {
            const std::size_t inner = lengths_[levels - l + 1];
            const std::size_t outer = lengths_[levels - l];
            for (std::size_t b = 1; b < (std::size_t{1} << d); ++b) {
                std::vector<std::size_t> lo(d), hi(d);
                for (std::size_t a = 0; a < d; ++a) {
                    const bool detail = (b >> (d - 1 - a)) & 1U;
                    lo[a] = detail ? inner : 0;
                    hi[a] = detail ? outer : inner;
                }
                add_band(l, b, std::move(lo), std::move(hi));
            }
        }

        position_.resize(offset);
        std::vector<std::size_t> idx(d);
        for (const auto& band : bands_) {
            std::size_t k = band.offset;
            idx = band.begin;
            for (std::size_t c = 0; c < band.size(); ++c) {
                std::size_t flat = 0;
                for (std::size_t a = 0; a < d; ++a) flat = flat * n + idx[a];
                position_[k++] = flat;
                for (std::size_t a = d; a-- > 0;) {
                    if (++idx[a] < band.end[a]) break;
                    idx[a] = band.begin[a];
                }
            }
        }
    }

    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t dim() const noexcept { return d_; }
    [[nodiscard]] std::size_t levels() const noexcept { return levels_; }
    [[nodiscard]] std::size_t size() const noexcept { return position_.size(); }
    [[nodiscard]] const std::vector<Band>& bands() const noexcept { return bands_; }
    [[nodiscard]] const std::vector<std::size_t>& lengths() const noexcept { return lengths_; }
    /// Mallat-array index of flattened coefficient k.
    [[nodiscard]] std::size_t position(std::size_t k) const { return position_[k]; }

    /// Number of leading coefficients that span approximation plus the J coarsest detail levels.
    [[nodiscard]] std::size_t prefix_size(std::size_t j) const {
        if (j > levels_) throw ConfigError("wavelet: scale exceeds decomposition depth");
        return ipow(lengths_[levels_ - j], d_);
    }

private:
    std::size_t n_, d_, levels_;
    std::vector<std::size_t> lengths_;
    std::vector<Band> bands_;
    std::vector<std::size_t> position_;
};

struct WaveletCoeffs {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t levels = 0;
    std::vector<double> flat;

    [[nodiscard]] Layout layout() const { return Layout(n, d, levels); }
};

namespace detail {

/// Applies an (out_len x in_len) block of `m` (or of its transpose) along `axis`
/// to every line of the N^d array whose other coordinates lie below `lines_ext`.
/// Entries [out_len, clear_to) of each processed line are zeroed.
inline void apply_along_axis(std::span<double> data, std::size_t n, std::size_t d, std::size_t axis,
                             const Eigen::MatrixXd& m, bool transpose, std::size_t in_len, std::size_t out_len,
                             std::size_t clear_to, const std::vector<std::size_t>& lines_ext, Eigen::MatrixXd& buf_in,
                             Eigen::MatrixXd& buf_out) {
    std::vector<std::size_t> strides(d, 1);
    for (std::size_t a = d - 1; a-- > 0;) strides[a] = strides[a + 1] * n;
    const std::size_t stride = strides[axis];
    std::size_t lines = 1;
    for (std::size_t a = 0; a < d; ++a) {
        if (a != axis) lines *= lines_ext[a];
    }
    if (lines == 0) return;

    // gather every line into a column, apply the operator as one product, scatter back
    std::vector<std::size_t> bases(lines);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t l = 0; l < lines; ++l) {
        std::size_t base = 0;
        for (std::size_t a = 0; a < d; ++a) base += idx[a] * strides[a];
        bases[l] = base;
        for (std::size_t a = d; a-- > 0;) {
            if (a == axis) continue;
            if (++idx[a] < lines_ext[a]) break;
            idx[a] = 0;
        }
    }
    const auto in = static_cast<Eigen::Index>(in_len), out = static_cast<Eigen::Index>(out_len);
    buf_in.resize(in, static_cast<Eigen::Index>(lines));
    for (std::size_t l = 0; l < lines; ++l) {
        double* col = buf_in.col(static_cast<Eigen::Index>(l)).data();
        for (std::size_t k = 0; k < in_len; ++k) col[k] = data[bases[l] + k * stride];
    }
    if (transpose) {
        buf_out.noalias() = m.topLeftCorner(in, out).transpose() * buf_in;
    } else {
        buf_out.noalias() = m.topLeftCorner(out, in) * buf_in;
    }
    for (std::size_t l = 0; l < lines; ++l) {
        const double* col = buf_out.col(static_cast<Eigen::Index>(l)).data();
        for (std::size_t r = 0; r < out_len; ++r) data[bases[l] + r * stride] = col[r];
        for (std::size_t r = out_len; r < clear_to; ++r) data[bases[l] + r * stride] = 0.0;
    }
}

}  // namespace detail

/// The truncated synthesis operator: maps the leading m_J coefficients of a
/// `levels`-deep decomposition to field values on the N^d grid, and back by its
/// exact adjoint.
class ScaleBasis {
public:
    ScaleBasis(std::size_t n, std::size_t d, std::size_t levels, std::size_t j)
        : layout_(n, d, levels), scale_(j), size_(layout_.prefix_size(j)) {
        const auto& lengths = layout_.lengths();
        std::vector<std::size_t> ext(d, lengths[levels - j]);
        for (std::size_t s = levels; s-- > 0;) {
            const std::size_t len = lengths[s];
            const auto op = level_operator(len);
            for (std::size_t a = 0; a < d; ++a) {
                Step step;
                step.op = op;
                step.axis = a;
                step.len = len;
                step.in_len = std::min(ext[a], len);
                step.lines_ext.resize(d);
                for (std::size_t b = 0; b < d; ++b) step.lines_ext[b] = std::min(ext[b], len);
                steps_.push_back(std::move(step));
                ext[a] = std::max(ext[a], len);
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t scale() const noexcept { return scale_; }
    [[nodiscard]] std::size_t field_size() const noexcept { return ipow(layout_.n(), layout_.dim()); }
    [[nodiscard]] const Layout& layout() const noexcept { return layout_; }

    void synthesize(std::span<const double> gamma, std::span<double> field) const {
        if (gamma.size() != size_ || field.size() != field_size()) throw ConfigError("wavelet: coefficient/field size mismatch");
        std::fill(field.begin(), field.end(), 0.0);
        for (std::size_t k = 0; k < size_; ++k) field[layout_.position(k)] = gamma[k];
        Eigen::MatrixXd bi, bo;
        for (const auto& s : steps_) {
            detail::apply_along_axis(field, layout_.n(), layout_.dim(), s.axis, s.op->synthesis, false, s.in_len, s.len,
                                     s.len, s.lines_ext, bi, bo);
        }
    }

    /// grad = W_J applied to a field-space cotangent (the transpose of synthesize).
    void adjoint(std::span<const double> cotangent, std::span<double> grad) const {
        if (grad.size() != size_ || cotangent.size() != field_size()) throw ConfigError("wavelet: coefficient/field size mismatch");
        std::vector<double> work(cotangent.begin(), cotangent.end());
        Eigen::MatrixXd bi, bo;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
            detail::apply_along_axis(work, layout_.n(), layout_.dim(), it->axis, it->op->synthesis, true, it->len, it->in_len,
                                     it->len, it->lines_ext, bi, bo);
        }
        for (std::size_t k = 0; k < size_; ++k) grad[k] = work[layout_.position(k)];
    }

private:
    struct Step {
        std::shared_ptr<const LevelOperator> op;
        std::size_t axis = 0;
        std::size_t len = 0;
        std::size_t in_len = 0;
        std::vector<std::size_t> lines_ext;
    };

    Layout layout_;
    std::size_t scale_;
    std::size_t size_;
    std::vector<Step> steps_;
};

/// Forward transform with `levels` decomposition steps.
[[nodiscard]] inline WaveletCoeffs analyze(const ScalarField& field, std::size_t levels) {
    const std::size_t n = field.grid.n();
    const std::size_t d = field.grid.dim();
    const Layout layout(n, d, levels);
    std::vector<double> data = field.values;
    Eigen::MatrixXd bi, bo;
    for (std::size_t s = 0; s < levels; ++s) {
        const std::size_t len = layout.lengths()[s];
        const auto op = level_operator(len);
        const std::vector<std::size_t> ext(d, len);
        for (std::size_t a = 0; a < d; ++a) {
            detail::apply_along_axis(data, n, d, a, op->analysis, false, len, len, len, ext, bi, bo);
        }
    }
    WaveletCoeffs out{n, d, levels, std::vector<double>(layout.size())};
    for (std::size_t k = 0; k < layout.size(); ++k) out.flat[k] = data[layout.position(k)];
    return out;
}

[[nodiscard]] inline ScalarField synthesize(const WaveletCoeffs& coeffs, const Grid& grid) {
    if (grid.n() != coeffs.n || grid.dim() != coeffs.d) throw ConfigError("wavelet: coefficients do not match grid shape");
    const ScaleBasis basis(coeffs.n, coeffs.d, coeffs.levels, coeffs.levels);
    ScalarField out(grid);
    basis.synthesize(coeffs.flat, out.values);
    return out;
}

/// Zeroes every detail band finer than the J coarsest levels.
[[nodiscard]] inline WaveletCoeffs truncate(WaveletCoeffs coeffs, std::size_t j) {
    const std::size_t keep = coeffs.layout().prefix_size(j);
    std::fill(coeffs.flat.begin() + static_cast<std::ptrdiff_t>(keep), coeffs.flat.end(), 0.0);
    return coeffs;
}

/// m_J for the full-depth decomposition of an N^d grid.
[[nodiscard]] inline std::size_t coeff_count(std::size_t n, std::size_t d, std::size_t j) {
    return Layout(n, d, max_levels(n)).prefix_size(j);
}

struct TruncationPoint {
    std::size_t scale;
    double l2_error;
};

/// L2 (Simpson) error of keeping approximation plus the J coarsest detail levels, J = 0..j_max.
[[nodiscard]] inline std::vector<TruncationPoint> truncation_error_curve(const ScalarField& f, std::size_t j_max) {
    const WaveletCoeffs coeffs = analyze(f, j_max);
    std::vector<TruncationPoint> out;
    for (std::size_t j = 0; j <= j_max; ++j) {
        const ScalarField g = synthesize(truncate(coeffs, j), f.grid);
        ScalarField sq(f.grid);
        for (std::size_t i = 0; i < sq.values.size(); ++i) {
            const double e = f.values[i] - g.values[i];
            sq.values[i] = e * e;
        }
        out.push_back({j, std::sqrt(std::max(0.0, simpson_integrate(sq)))});
    }
    return out;
}

inline void to_json(nlohmann::json& j, const WaveletCoeffs& c) {
    const Layout layout = c.layout();
    auto bands = nlohmann::json::array();
    for (const auto& b : layout.bands()) {
        bands.push_back({{"level", b.level},
                         {"band_index", b.band_index},
                         {"data", std::vector<double>(c.flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                      c.flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()))}});
    }
    j = {{"shape", {{"n", c.n}, {"d", c.d}}}, {"J", c.levels}, {"bands", std::move(bands)}};
}

inline void from_json(const nlohmann::json& j, WaveletCoeffs& c) {
    c.n = j.at("shape").at("n").get<std::size_t>();
    c.d = j.at("shape").at("d").get<std::size_t>();
    c.levels = j.at("J").get<std::size_t>();
    const Layout layout = c.layout();
    c.flat.assign(layout.size(), 0.0);
    const auto& bands = j.at("bands");
    if (bands.size() != layout.bands().size()) throw ConfigError("wavelet: band count mismatch");
    for (std::size_t i = 0; i < bands.size(); ++i) {
        const auto& b = layout.bands()[i];
        const auto data = bands[i].at("data").get<std::vector<double>>();
        if (bands[i].at("level").get<std::size_t>() != b.level || bands[i].at("band_index").get<std::size_t>() != b.band_index ||
            data.size() != b.size()) {
            throw ConfigError("wavelet: band " + std::to_string(i) + " does not match the layout");
        }
        std::copy(data.begin(), data.end(), c.flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
}

}  // namespace otmap::wavelet
