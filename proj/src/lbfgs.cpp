#include "oed/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>

namespace oed {

namespace {

struct Point {
    double alpha = 0.0;
    double f = 0.0;
    double d = 0.0;  // directional derivative
    Vector x;
    Vector g;
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), kept inside
// the middle 80% of the interval; falls back to bisection.
double cubic_step(const Point& a, const Point& b) {
    const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
    const double d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.d * b.d;
    double t = 0.5 * (lo + hi);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
        const double denom = b.d - a.d + 2.0 * d2;
        if (denom != 0.0) t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / denom;
    }
    const double margin = 0.1 * (hi - lo);
    if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
    return t;
}

class LineSearch {
  public:
    LineSearch(const Objective& f, const Vector& x, const Vector& p, double f0, double d0, const LbfgsOptions& o)
        : f_(f), x_(x), p_(p), f0_(f0), d0_(d0), o_(o) {}

    Point eval(double alpha) {
        Point pt;
        pt.alpha = alpha;
        pt.x = x_ + alpha * p_;
        pt.f = f_(pt.x, pt.g);
        pt.d = pt.g.dot(p_);
        ++evals;
        if (std::isfinite(pt.f) && pt.f <= f0_ + o_.c1 * alpha * d0_ && (!best || pt.f < best->f)) best = pt;
        return pt;
    }

    bool armijo(const Point& pt) const { return std::isfinite(pt.f) && pt.f <= f0_ + o_.c1 * pt.alpha * d0_; }
    bool curvature(const Point& pt) const { return std::abs(pt.d) <= -o_.c2 * d0_; }

    // Returns a point meeting the strong Wolfe conditions, or the best Armijo point seen.
    std::optional<Point> run(double alpha0) {
        Point prev;
        prev.alpha = 0.0;
        prev.f = f0_;
        prev.d = d0_;
        double alpha = alpha0;
        for (int i = 0; evals < o_.max_line_evals; ++i) {
            Point cur = eval(alpha);
            if (!std::isfinite(cur.f)) {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if (!armijo(cur) || (i > 0 && cur.f >= prev.f)) return zoom(prev, cur);
            if (curvature(cur)) return cur;
            if (cur.d >= 0.0) return zoom(cur, prev);
            prev = cur;
            alpha *= 2.0;
        }
        return best;
    }

    int evals = 0;
    std::optional<Point> best;

  private:
    std::optional<Point> zoom(Point lo, Point hi) {
        while (evals < o_.max_line_evals) {
            if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
            Point cur = eval(cubic_step(lo, hi));
            if (!armijo(cur) || cur.f >= lo.f) {
                hi = cur;
            } else {
                if (curvature(cur)) return cur;
                if (cur.d * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = cur;
            }
        }
        return best;
    }

    const Objective& f_;
    const Vector& x_;
    const Vector& p_;
    double f0_, d0_;
    const LbfgsOptions& o_;
};

}  // namespace

MinimizeResult lbfgs_minimize(const Objective& f, Vector x0, const LbfgsOptions& opts) {
    require(opts.memory >= 1 && opts.max_iter >= 0, "lbfgs: invalid options");
    MinimizeResult res;
    res.x = std::move(x0);
    Vector g;
    res.value = f(res.x, g);
    res.evaluations = 1;
    if (!std::isfinite(res.value) || !g.allFinite()) throw NumericalError("lbfgs: objective not finite at the start");
    res.initial_grad_norm = g.norm();
    res.grad_norm = res.initial_grad_norm;
    const double target = opts.grad_tol * std::max(1.0, res.initial_grad_norm);

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    while (true) {
        if (res.grad_norm <= target) {
            res.converged = true;
            res.message = "gradient tolerance reached";
            return res;
        }
        if (res.iterations >= opts.max_iter) {
            res.message = "maximum iterations reached";
            return res;
        }
        // Two-loop recursion.
        Vector q = -g;
        std::vector<double> a(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            a[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= a[k] * y_hist[k];
        }
        if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double b = rho_hist[k] * y_hist[k].dot(q);
            q += (a[k] - b) * s_hist[k];
        }
        double d0 = q.dot(g);
        if (!(d0 < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            q = -g;
            d0 = -g.squaredNorm();
        }
        const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-300)) : 1.0;
        LineSearch ls(f, res.x, q, res.value, d0, opts);
        const auto pt = ls.run(alpha0);
        res.evaluations += ls.evals;
        if (!pt) {
            res.message = "line search failed";
            return res;
        }
        Vector s = pt->x - res.x;
        Vector y = pt->g - g;
        const double sy = s.dot(y);
        const double f_old = res.value;
        res.x = pt->x;
        res.value = pt->f;
        g = pt->g;
        res.grad_norm = g.norm();
        ++res.iterations;
        if (sy > 1e-12 * std::sqrt(s.squaredNorm() * y.squaredNorm())) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (f_old - res.value <= 1e-16 * std::max(1.0, std::abs(res.value)) && res.grad_norm > target) {
            // No measurable progress left at double precision.
            res.converged = res.grad_norm <= target;
            res.message = "objective stalled";
            return res;
        }
    }
}

MinimizeResult adam_minimize(const Objective& f, Vector x0, int iterations, double lr) {
    require(iterations >= 0 && lr > 0.0, "adam: invalid options");
    MinimizeResult res;
    res.x = std::move(x0);
    Vector g;
    Vector m1 = Vector::Zero(res.x.size()), m2 = Vector::Zero(res.x.size());
    Vector best_x = res.x;
    double best = f(res.x, g);
    res.initial_grad_norm = g.norm();
    res.evaluations = 1;
    for (int k = 1; k <= iterations; ++k) {
        m1 = 0.9 * m1 + 0.1 * g;
        m2 = 0.999 * m2 + 0.001 * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(0.9, k), c2 = 1.0 - std::pow(0.999, k);
        res.x.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + 1e-8);
        const double v = f(res.x, g);
        ++res.evaluations;
        ++res.iterations;
        if (std::isfinite(v) && v < best) {
            best = v;
            best_x = res.x;
        }
    }
    res.x = best_x;
    res.value = f(res.x, g);
    res.grad_norm = g.norm();
    res.message = "fixed iteration count";
    return res;
}

}  // namespace oed
