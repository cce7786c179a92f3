#pragma once

// Deterministic full-batch minimizers: limited-memory BFGS with a strong
// Wolfe line search, and steepest descent with backtracking. Both only ever
// accept steps that decrease the objective.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "sinkprop/types.hpp"

namespace sinkprop {

/// Returns f(x) and writes the gradient into `grad` (already sized like x).
using ObjectiveFn = std::function<double(const Vector& x, Vector& grad)>;

enum class OptimizerKind { Lbfgs, GradientDescent };

enum class StopReason { GradientTolerance, MaxIterations, LineSearchFailed };

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::Lbfgs;
    int max_iterations = 100;
    double grad_tolerance = 1e-5;
    int history = 10;
    double c1 = 1e-4; // sufficient decrease
    double c2 = 0.9;  // curvature
    int max_line_search = 30;
};

struct OptimizeResult {
    Vector x;
    double value = 0.0;
    Vector gradient;
    int iterations = 0;
    int evaluations = 0;
    StopReason reason = StopReason::MaxIterations;
};

namespace detail {

struct LinePoint {
    double alpha;
    double value;
    double slope;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// middle 80% of [a, b]; falls back to bisection.
inline double cubic_step(const LinePoint& a, const LinePoint& b) {
    const double lo = std::min(a.alpha, b.alpha);
    const double hi = std::max(a.alpha, b.alpha);
    const double margin = 0.1 * (hi - lo);
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.slope * b.slope;
    double t = 0.5 * (lo + hi);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
        const double denom = b.slope - a.slope + 2.0 * d2;
        if (denom != 0.0) {
            const double cand = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
            if (std::isfinite(cand)) t = cand;
        }
    }
    return std::clamp(t, lo + margin, hi - margin);
}

class LineSearch {
public:
    LineSearch(const ObjectiveFn& f, const OptimizerOptions& opt, const Vector& x, double f0,
               const Vector& dir, double slope0)
        : f_(f), opt_(opt), x_(x), dir_(dir), f0_(f0), slope0_(slope0),
          grad_(Vector::Zero(x.size())) {}

    /// Strong Wolfe step; on success x/value/grad hold the accepted point.
    bool run(double alpha0) {
        LinePoint prev{0.0, f0_, slope0_};
        double alpha = alpha0;
        for (int i = 0; i < opt_.max_line_search; ++i) {
            const LinePoint cur = eval(alpha);
            if (!std::isfinite(cur.value) || cur.value > f0_ + opt_.c1 * alpha * slope0_ ||
                (i > 0 && cur.value >= prev.value)) {
                return zoom(prev, cur);
            }
            if (std::abs(cur.slope) <= -opt_.c2 * slope0_) return accept(cur);
            if (cur.slope >= 0.0) return zoom(cur, prev);
            prev = cur;
            alpha *= 2.0;
        }
        return false;
    }

    /// Armijo backtracking from alpha0.
    bool backtrack(double alpha0) {
        double alpha = alpha0;
        for (int i = 0; i < 60; ++i) {
            const LinePoint cur = eval(alpha);
            if (std::isfinite(cur.value) && cur.value <= f0_ + opt_.c1 * alpha * slope0_ &&
                cur.value < f0_) {
                return accept(cur);
            }
            alpha *= 0.5;
        }
        return false;
    }

    const Vector& x() const { return best_x_; }
    const Vector& grad() const { return best_grad_; }
    double value() const { return best_value_; }
    int evaluations() const { return evals_; }

private:
    LinePoint eval(double alpha) {
        trial_x_ = x_ + alpha * dir_;
        const double v = f_(trial_x_, grad_);
        ++evals_;
        const double slope = std::isfinite(v) ? grad_.dot(dir_) : std::numeric_limits<double>::quiet_NaN();
        last_ = {alpha, v, slope};
        last_x_ = trial_x_;
        last_grad_ = grad_;
        return last_;
    }

    bool accept(const LinePoint& p) {
        // `p` is always the most recent evaluation at the call sites.
        best_x_ = last_x_;
        best_grad_ = last_grad_;
        best_value_ = p.value;
        return true;
    }

    bool zoom(LinePoint lo, LinePoint hi) {
        for (int i = 0; i < opt_.max_line_search; ++i) {
            double alpha;
            if (std::isfinite(hi.value) && std::isfinite(hi.slope)) {
                alpha = cubic_step(lo, hi);
            } else {
                alpha = 0.5 * (lo.alpha + hi.alpha);
            }
            const LinePoint cur = eval(alpha);
            if (!std::isfinite(cur.value) || cur.value > f0_ + opt_.c1 * alpha * slope0_ ||
                cur.value >= lo.value) {
                hi = cur;
            } else {
                if (std::abs(cur.slope) <= -opt_.c2 * slope0_) return accept(cur);
                if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = cur;
            }
            if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
        }
        // No strong Wolfe point found; settle for the best sufficient-decrease point.
        if (lo.alpha > 0.0 && lo.value < f0_) {
            eval(lo.alpha);
            return accept(last_);
        }
        return false;
    }

    const ObjectiveFn& f_;
    const OptimizerOptions& opt_;
    const Vector& x_;
    const Vector& dir_;
    double f0_;
    double slope0_;
    Vector grad_;
    Vector trial_x_;
    LinePoint last_{};
    Vector last_x_, last_grad_;
    Vector best_x_, best_grad_;
    double best_value_ = 0.0;
    int evals_ = 0;
};

} // namespace detail

/// Minimizes `f` from `x0`. Throws Divergence if f(x0) is not finite.
inline OptimizeResult minimize(const ObjectiveFn& f, Vector x0, const OptimizerOptions& opt = {}) {
    OptimizeResult res;
    res.x = std::move(x0);
    res.gradient = Vector::Zero(res.x.size());
    res.value = f(res.x, res.gradient);
    res.evaluations = 1;
    if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
        throw Error(ErrorCode::Divergence, "objective is not finite at the starting point");
    }

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    while (true) {
        if (res.gradient.norm() <= opt.grad_tolerance) {
            res.reason = StopReason::GradientTolerance;
            return res;
        }
        if (res.iterations >= opt.max_iterations) {
            res.reason = StopReason::MaxIterations;
            return res;
        }

        Vector dir = -res.gradient;
        if (opt.kind == OptimizerKind::Lbfgs && !s_hist.empty()) {
            // Two-loop recursion.
            const std::size_t m = s_hist.size();
            std::vector<double> a(m);
            for (std::size_t i = m; i-- > 0;) {
                a[i] = rho_hist[i] * s_hist[i].dot(dir);
                dir -= a[i] * y_hist[i];
            }
            dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            for (std::size_t i = 0; i < m; ++i) {
                const double b = rho_hist[i] * y_hist[i].dot(dir);
                dir += (a[i] - b) * s_hist[i];
            }
        }
        double slope = res.gradient.dot(dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -res.gradient;
            slope = -res.gradient.squaredNorm();
        }

        const bool steepest = s_hist.empty();
        const double alpha0 = steepest ? std::min(1.0, 1.0 / res.gradient.norm()) : 1.0;
        detail::LineSearch ls(f, opt, res.x, res.value, dir, slope);
        bool ok = opt.kind == OptimizerKind::Lbfgs ? ls.run(alpha0) : ls.backtrack(alpha0);
        if (!ok && !steepest) {
            // Quasi-Newton direction failed; retry once along the gradient.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            res.evaluations += ls.evaluations();
            const Vector sd = -res.gradient;
            detail::LineSearch retry(f, opt, res.x, res.value, sd, -res.gradient.squaredNorm());
            ok = retry.backtrack(std::min(1.0, 1.0 / res.gradient.norm()));
            res.evaluations += retry.evaluations();
            if (!ok) {
                res.reason = StopReason::LineSearchFailed;
                return res;
            }
            res.x = retry.x();
            res.gradient = retry.grad();
            res.value = retry.value();
            ++res.iterations;
            continue;
        }
        res.evaluations += ls.evaluations();
        if (!ok) {
            res.reason = StopReason::LineSearchFailed;
            return res;
        }

        Vector s = ls.x() - res.x;
        Vector y = ls.grad() - res.gradient;
        res.x = ls.x();
        res.gradient = ls.grad();
        res.value = ls.value();
        ++res.iterations;

        const double sy = s.dot(y);
        if (opt.kind == OptimizerKind::Lbfgs && sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
    }
}

} // namespace sinkprop
