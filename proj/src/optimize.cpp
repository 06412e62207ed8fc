#include "dvc/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace dvc {

ScalarMinimum brent_minimize(const std::function<double(double)>& f_raw, double lo, double hi, double tol,
                             int max_iter) {
    auto f = [&](double x) {
        const double y = f_raw(x);
        return std::isfinite(y) ? y : std::numeric_limits<double>::infinity();
    };
    constexpr double kGolden = 0.3819660112501051;
    constexpr double kEps = 1e-12;
    double a = lo, b = hi;
    double x = a + kGolden * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        const double m = 0.5 * (a + b);
        const double tol1 = tol * std::fabs(x) + kEps;
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - m) <= tol2 - 0.5 * (b - a)) break;
        bool golden = true;
        if (std::fabs(e) > tol1 && std::isfinite(fx) && std::isfinite(fw) && std::isfinite(fv)) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::fabs(q);
            const double e_old = e;
            e = d;
            if (std::fabs(p) < std::fabs(0.5 * q * e_old) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = x < m ? tol1 : -tol1;
                golden = false;
            }
        }
        if (golden) {
            e = (x < m ? b : a) - x;
            d = kGolden * e;
        }
        const double u = std::fabs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u < x)
                b = x;
            else
                a = x;
            v = w, fv = fw;
            w = x, fw = fx;
            x = u, fx = fu;
        } else {
            if (u < x)
                a = u;
            else
                b = u;
            if (fu <= fw || w == x) {
                v = w, fv = fw;
                w = u, fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u, fv = fu;
            }
        }
    }
    // The interior search cannot reach the end points; compare them explicitly.
    for (double edge : {lo, hi}) {
        const double fe = f(edge);
        if (fe < fx) x = edge, fx = fe;
    }
    return {x, fx, it};
}

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, double box) { return x.cwiseMax(-box).cwiseMin(box); }

double projected_grad_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double box) {
    return (project(x - g, box) - x).cwiseAbs().maxCoeff();
}

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveWithGradient& f, Eigen::VectorXd x0, const LbfgsOptions& opts) {
    LbfgsResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd x = project(std::move(x0), opts.box);
    Eigen::VectorXd g(n);
    double fx = f(x, g);
    res.history.push_back(fx);
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it + 1;
        if (!std::isfinite(fx) || !g.allFinite()) break;
        if (n == 0 || projected_grad_norm(x, g, opts.box) < opts.grad_tol) {
            res.converged = true;
            break;
        }
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd dir = -q;
        if (dir.dot(g) >= 0.0) {
            dir = -g;
            s_hist.clear(), y_hist.clear(), rho_hist.clear();
        }
        if (s_hist.empty()) {
            const double gn = dir.norm();
            if (gn > 1.0) dir /= gn;
        }

        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new, g_new(n);
        double f_new = fx;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = project(x + step * dir, opts.box);
            f_new = f(x_new, g_new);
            const double decrease = g.dot(x_new - x);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * std::min(decrease, 0.0) && f_new < fx) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!s_hist.empty()) {
                s_hist.clear(), y_hist.clear(), rho_hist.clear();
                continue;
            }
            res.converged = true;  // no descent available from here
            break;
        }
        Eigen::VectorXd s = x_new - x, y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front(), y_hist.pop_front(), rho_hist.pop_front();
            }
        }
        const double rel = std::fabs(fx - f_new) / std::max(1.0, std::fabs(fx));
        x = x_new;
        g = g_new;
        fx = f_new;
        res.history.push_back(fx);
        if (rel < opts.f_rel_tol) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.fx = fx;
    return res;
}

}  // namespace dvc
