#pragma once

#include "trimlik/common.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace trimlik::detail {

struct BfgsOptions {
    int max_iter = 200;
    double grad_tol = 1e-7;
    double step_tol = 1e-9;  // on the max-abs parameter step
};

struct BfgsReport {
    Vec x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    double last_step = 0.0;
    std::vector<double> trace;  // objective value per accepted iterate
    std::optional<std::string> aborted;
};

/// Dense BFGS ascent with Armijo backtracking. `monitor(x)` may return an abort
/// reason (used by the nonexistence detector); non-finite trial values are
/// treated as infeasible and backtracked over.
inline BfgsReport bfgs_maximize(
    const std::function<double(const Vec&)>& value,
    const std::function<Vec(const Vec&)>& gradient, Vec x0, const BfgsOptions& opts,
    const std::function<std::optional<std::string>(const Vec&, int)>& monitor = nullptr) {
    const auto n = x0.size();
    Mat h_inv = Mat::Identity(n, n);
    BfgsReport rep;
    rep.x = std::move(x0);
    rep.value = value(rep.x);
    rep.trace.push_back(rep.value);
    if (!std::isfinite(rep.value)) {
        rep.aborted = "objective not finite at the starting point";
        return rep;
    }
    Vec g = gradient(rep.x);

    for (int it = 0; it < opts.max_iter; ++it) {
        rep.iterations = it + 1;
        if (monitor) {
            if (auto reason = monitor(rep.x, it)) {
                rep.aborted = *reason;
                return rep;
            }
        }
        if (g.cwiseAbs().maxCoeff() < opts.grad_tol * std::max(1.0, std::abs(rep.value))) {
            rep.converged = true;
            return rep;
        }
        Vec dir = h_inv * g;
        double slope = g.dot(dir);
        bool steepest = false;
        if (!(slope > 0.0)) {  // stale curvature; restart from steepest ascent
            h_inv = Mat::Identity(n, n);
            dir = g;
            slope = g.squaredNorm();
            steepest = true;
        }
        auto line_search = [&](const Vec& d, double sl, Vec& x_out, double& f_out) {
            double step = 1.0;
            for (int ls = 0; ls < 40; ++ls) {
                x_out = rep.x + step * d;
                f_out = value(x_out);
                if (std::isfinite(f_out) && f_out >= rep.value + 1e-4 * step * sl) return true;
                step *= 0.5;
            }
            return false;
        };
        double f_new = -std::numeric_limits<double>::infinity();
        Vec x_new;
        bool accepted = line_search(dir, slope, x_new, f_new);
        if (!accepted && !steepest) {  // quasi-Newton direction exhausted; retry steepest
            h_inv = Mat::Identity(n, n);
            accepted = line_search(g, g.squaredNorm(), x_new, f_new);
        }
        if (!accepted) {
            // no ascent direction left: that is convergence only when the gradient
            // has actually flattened, not when the search stalled against an
            // infeasible frontier
            rep.converged =
                g.cwiseAbs().maxCoeff() < 1e3 * opts.grad_tol * std::max(1.0, std::abs(rep.value));
            return rep;
        }
        Vec g_new = gradient(x_new);
        Vec s = x_new - rep.x;
        Vec y = g - g_new;  // gradient of the negated objective increases
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            Vec hy = h_inv * y;
            double yhy = y.dot(hy);
            h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                     (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        double prev_step = rep.last_step;
        rep.last_step = s.cwiseAbs().maxCoeff();
        rep.x = x_new;
        rep.value = f_new;
        rep.trace.push_back(f_new);
        g = g_new;
        // one small step on an ill-conditioned ridge is not convergence
        if (it > 0 && rep.last_step < opts.step_tol && prev_step < opts.step_tol) {
            rep.converged = true;
            return rep;
        }
    }
    return rep;
}

}  // namespace trimlik::detail
