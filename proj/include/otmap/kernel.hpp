#pragma once

// Gaussian kernel ridge regression of matched targets:
//   W = (K + nu_ridge I)^{-1} Ytilde,   T_ker(x) = sum_i W_i exp(-nu_kernel |x - X_i|^2)

#include "otmap/core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace otmap::kernel {

struct KernelParams {
    double nu_kernel = 1.0;
    double nu_ridge = 1.0;

    void validate() const {
        if (!(nu_kernel > 0.0) || !std::isfinite(nu_kernel)) throw ConfigError("kernel: nu_kernel must be > 0");
        if (!(nu_ridge > 0.0) || !std::isfinite(nu_ridge)) throw ConfigError("kernel: nu_ridge must be > 0");
    }

    friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

struct KernelModel {
    SampleSet train_X;
    Eigen::MatrixXd W;  // n x d
    KernelParams params;
    double residual = 0.0;  // |(K + nu I) W - Ytilde| / |Ytilde|
};

/// k(A_i, B_j) = exp(-nu |A_i - B_j|^2).
[[nodiscard]] inline Eigen::MatrixXd cross_gram(const SampleSet& A, const SampleSet& B, double nu_kernel) {
    if (A.cols() != B.cols()) throw ConfigError("kernel: point dimensions differ");
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            double s = 0.0;
            for (Eigen::Index a = 0; a < A.cols(); ++a) {
                const double t = A(i, a) - B(j, a);
                s += t * t;
            }
            K(i, j) = std::exp(-nu_kernel * s);
        }
    }
    return K;
}

[[nodiscard]] inline Eigen::MatrixXd gram(const SampleSet& X, double nu_kernel) {
    if (X.rows() < 1) throw ConfigError("gram: need at least one point");
    const auto n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index a = 0; a < X.cols(); ++a) {
                const double t = X(i, a) - X(j, a);
                s += t * t;
            }
            K(i, j) = K(j, i) = std::exp(-nu_kernel * s);
        }
    }
    return K;
}

/// Ridge solve with a precomputed Gram matrix.
[[nodiscard]] inline KernelModel fit_gram(const SampleSet& X, const Eigen::MatrixXd& K, const SampleSet& Ytilde, const KernelParams& params) {
    params.validate();
    if (X.rows() != Ytilde.rows()) throw ConfigError("kernel fit: |X| and |Ytilde| differ");
    if (X.rows() < 1) throw ConfigError("kernel fit: need at least one point");
    if (K.rows() != X.rows() || K.cols() != X.rows()) throw ConfigError("kernel fit: Gram matrix has the wrong size");
    Eigen::MatrixXd A = K;
    A.diagonal().array() += params.nu_ridge;
    const Eigen::MatrixXd rhs = Ytilde;
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError("kernel fit: Cholesky factorization failed");
    Eigen::MatrixXd W = llt.solve(rhs);
    const double scale = std::max(rhs.norm(), std::numeric_limits<double>::min());
    double res = (A * W - rhs).norm() / scale;
    for (int it = 0; it < 3 && res > 1e-8; ++it) {
        W += llt.solve(rhs - A * W);
        res = (A * W - rhs).norm() / scale;
    }
    if (rhs.norm() == 0.0) res = (A * W).norm();
    if (!(res <= 1e-8)) {
        std::ostringstream os;
        os << "kernel fit: relative residual " << res << " exceeds 1e-8";
        throw NumericError(os.str());
    }
    return KernelModel{X, std::move(W), params, res};
}

[[nodiscard]] inline KernelModel fit(const SampleSet& X, const SampleSet& Ytilde, const KernelParams& params) {
    params.validate();
    return fit_gram(X, gram(X, params.nu_kernel), Ytilde, params);
}

[[nodiscard]] inline SampleSet predict(const KernelModel& m, const SampleSet& points) {
    if (points.cols() != m.train_X.cols()) throw ConfigError("kernel predict: query dimension mismatch");
    const Eigen::MatrixXd K = cross_gram(points, m.train_X, m.params.nu_kernel);
    return SampleSet(K * m.W);
}

[[nodiscard]] inline std::vector<double> predict(const KernelModel& m, const std::vector<double>& x) {
    SampleSet q(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t a = 0; a < x.size(); ++a) q(0, static_cast<Eigen::Index>(a)) = x[a];
    const SampleSet out = predict(m, q);
    return {out.data(), out.data() + out.size()};
}

/// 10^lo, 10^(lo+step), ..., 10^hi.
[[nodiscard]] inline std::vector<double> log_grid(double lo, double hi, double step) {
    std::vector<double> out;
    const auto count = static_cast<int>(std::lround((hi - lo) / step));
    for (int k = 0; k <= count; ++k) out.push_back(std::pow(10.0, lo + step * k));
    return out;
}

[[nodiscard]] inline std::vector<double> default_kernel_grid() { return log_grid(-9.0, -5.0, 0.5); }
[[nodiscard]] inline std::vector<double> default_ridge_grid() { return log_grid(-5.0, -1.0, 0.5); }

struct OracleResult {
    KernelParams params;
    KernelModel model;
    double holdout_mse = 0.0;
    std::size_t fits = 0;
};

/// Exhaustive sweep; the holdout MSE against T0 picks the parameters, ties to
/// the smaller (nu_kernel, nu_ridge) in lexicographic order.
[[nodiscard]] inline OracleResult oracle_select(const SampleSet& X, const SampleSet& Ytilde, const SampleSet& holdout_X,
                                                const std::function<SampleSet(const SampleSet&)>& T0,
                                                std::vector<double> grid_kernel, std::vector<double> grid_ridge) {
    if (grid_kernel.empty() || grid_ridge.empty()) throw ConfigError("oracle_select: empty parameter grid");
    if (holdout_X.rows() < 1) throw ConfigError("oracle_select: empty holdout sample");
    std::sort(grid_kernel.begin(), grid_kernel.end());
    std::sort(grid_ridge.begin(), grid_ridge.end());
    const SampleSet truth = T0(holdout_X);
    OracleResult best;
    best.holdout_mse = std::numeric_limits<double>::infinity();
    bool have = false;
    for (double nk : grid_kernel) {
        const Eigen::MatrixXd K = gram(X, nk);
        const Eigen::MatrixXd Kh = cross_gram(holdout_X, X, nk);
        for (double nr : grid_ridge) {
            KernelModel m = fit_gram(X, K, Ytilde, KernelParams{nk, nr});
            ++best.fits;
            const Eigen::MatrixXd pred = Kh * m.W;
            const double mse = (pred - truth).rowwise().squaredNorm().mean();
            if (std::isfinite(mse) && (!have || mse < best.holdout_mse)) {
                have = true;
                best.params = m.params;
                best.model = std::move(m);
                best.holdout_mse = mse;
            }
        }
    }
    if (!have) throw NumericError("oracle_select: no parameter pair produced a finite holdout error");
    return best;
}

}  // namespace otmap::kernel
