#pragma once

// Limited-memory BFGS with Armijo backtracking, usable on convex objectives
// that are only piecewise smooth: the caller supplies any subgradient.

#include "otmap/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace otmap {

struct OptimizerOptions {
    std::size_t memory = 10;
    std::size_t max_iters = 10000;
    double rel_tol = 1e-9;
    double armijo_c1 = 1e-4;
    std::size_t max_halvings = 60;

    void validate() const {
        if (memory < 1) throw ConfigError("optimizer: memory must be >= 1");
        if (max_iters < 1) throw ConfigError("optimizer: max_iters must be >= 1");
        if (!(rel_tol > 0.0)) throw ConfigError("optimizer: rel_tol must be > 0");
        if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw ConfigError("optimizer: armijo_c1 must lie in (0, 1)");
        if (max_halvings < 1) throw ConfigError("optimizer: max_halvings must be >= 1");
    }
};

struct OptimizerResult {
    Eigen::VectorXd x;
    double value = 0.0;
    std::vector<double> trace;  // objective after every accepted step, starting at x0
    std::size_t iterations = 0;
    bool converged = false;
    bool line_search_failed = false;
};

/// Objective returning f(x) and writing a (sub)gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

[[nodiscard]] inline OptimizerResult lbfgs_minimize(const Objective& fn, Eigen::VectorXd x0, const OptimizerOptions& opts = {}) {
    opts.validate();
    const auto m = x0.size();
    OptimizerResult res;
    res.x = std::move(x0);
    Eigen::VectorXd g(m), g_new(m), x_new(m), dir(m);
    double f = fn(res.x, g);
    if (!std::isfinite(f)) throw NumericError("lbfgs: objective is not finite at the starting point");
    res.trace.push_back(f);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha(opts.memory);

    auto two_loop = [&]() {
        dir = -g;
        const std::size_t k = s_hist.size();
        for (std::size_t i = k; i-- > 0;) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(dir);
            dir -= alpha[i] * y_hist[i];
        }
        if (k > 0) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < k; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(dir);
            dir += (alpha[i] - beta) * s_hist[i];
        }
    };

    for (res.iterations = 0; res.iterations < opts.max_iters;) {
        if (g.squaredNorm() == 0.0) {
            res.converged = true;
            break;
        }
        two_loop();
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -g;
            slope = -g.squaredNorm();
        }

        // Armijo backtracking; a failed quasi-Newton direction falls back to steepest descent once
        double f_new = 0.0;
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double t = 1.0;
            if (s_hist.empty()) t = std::min(1.0, 1.0 / std::sqrt(g.squaredNorm()));
            for (std::size_t h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
                x_new = res.x + t * dir;
                f_new = fn(x_new, g_new);
                if (std::isfinite(f_new) && f_new <= f + opts.armijo_c1 * t * slope) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                if (s_hist.empty() && attempt == 0 && dir.isApprox(-g)) break;
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                dir = -g;
                slope = -g.squaredNorm();
            }
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }

        ++res.iterations;
        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > std::numeric_limits<double>::epsilon() * s.norm() * y.norm() && sy > 0.0) {
            if (s_hist.size() == opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
        }
        const double f_old = f;
        res.x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        res.trace.push_back(f);
        if ((f_old - f) / std::max({std::abs(f_old), std::abs(f), 1.0}) < opts.rel_tol) {
            res.converged = true;
            break;
        }
    }
    res.value = f;
    return res;
}

}  // namespace otmap
