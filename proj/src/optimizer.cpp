#include "quorum/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace quorum {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

OptimizeResult minimize_bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& opt) {
    const std::size_t n = x0.size();
    OptimizeResult res;
    res.x = std::move(x0);
    std::vector<double> g(n), g_new(n), p(n), x_new(n), s(n), y(n);
    res.value = f(res.x, &g);
    res.trace.push_back(res.value);
    if (!std::isfinite(res.value) || !all_finite(g)) {
        res.diverged = true;
        return res;
    }
    if (n == 0) {
        res.converged = true;
        return res;
    }

    // Inverse Hessian approximation, row-major.
    std::vector<double> H(n * n, 0.0);
    auto reset = [&] {
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
    };
    reset();
    bool scaled = false;

    for (int it = 0; it < opt.max_iter; ++it) {
        if (inf_norm(g) <= opt.grad_tol * (1.0 + std::abs(res.value))) {
            res.converged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc -= H[i * n + j] * g[j];
            p[i] = acc;
        }
        double slope = dot(g, p);
        if (!(slope < 0.0)) {
            reset();
            scaled = false;
            for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
            slope = -dot(g, g);
        }

        double step = 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int k = 0; k < opt.max_backtracks; ++k) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * p[i];
            f_new = f(x_new, nullptr);
            if (std::isfinite(f_new) && f_new <= res.value + opt.armijo_c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No descent possible along p: we are at a numerical minimum.
            res.converged = true;
            break;
        }
        f(x_new, &g_new);
        if (!all_finite(g_new)) {
            res.diverged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - res.x[i];
            y[i] = g_new[i] - g[i];
        }
        const double f_old = res.value;
        res.x = x_new;
        res.value = f_new;
        g = g_new;
        res.trace.push_back(f_new);
        res.iterations = it + 1;

        double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            if (!scaled) {
                double gamma = sy / dot(y, y);
                for (std::size_t i = 0; i < n; ++i) H[i * n + i] = gamma;
                scaled = true;
            }
            const double rho = 1.0 / sy;
            std::vector<double> Hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) Hy[i] += H[i * n + j] * y[j];
            }
            const double yHy = dot(y, Hy);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    H[i * n + j] += (1.0 + rho * yHy) * rho * s[i] * s[j] - rho * (Hy[i] * s[j] + s[i] * Hy[j]);
                }
            }
        }
        if (f_old - f_new <= opt.f_tol * (1.0 + std::abs(f_old))) {
            res.converged = true;
            break;
        }
    }
    if (!std::isfinite(res.value) || !all_finite(res.x)) res.diverged = true;
    return res;
}

}  // namespace quorum
