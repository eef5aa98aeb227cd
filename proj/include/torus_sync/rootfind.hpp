#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "torus_sync/errors.hpp"

namespace tsync {

// Bracketed root finder: bisection refined by a secant step. Keeps the
// bracket valid at all times; the secant proposal is used only when it falls
// strictly inside the current bracket, otherwise the step falls back to the
// midpoint. Tolerance is on the argument.
template <typename F>
double bisect_secant(F&& f, double lo, double hi, double xtol = 1e-12) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw RootNotBracketed("bisect_secant: no sign change over bracket");
    for (int it = 0; it < 200 && (hi - lo) > xtol; ++it) {
        double mid = 0.5 * (lo + hi);
        double x = mid;
        const double denom = fhi - flo;
        if (denom != 0.0) {
            const double sec = hi - fhi * (hi - lo) / denom;
            if (sec > lo + 0.01 * (hi - lo) && sec < hi - 0.01 * (hi - lo)) x = sec;
        }
        const double fx = f(x);
        if (fx == 0.0) return x;
        if ((fx > 0.0) == (flo > 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    return 0.5 * (lo + hi);
}

// Sign-scan over [lo, hi] with n_grid nodes; returns brackets [x_k, x_{k+1}]
// whose endpoint values have strictly opposite signs. Nodes where f is exactly
// zero are nudged by one ulp-scale offset so a grazing zero still produces a
// usable bracket on each side it separates.
template <typename F>
std::vector<std::pair<double, double>> scan_sign_changes(F&& f, double lo, double hi,
                                                         int n_grid = 4096) {
    std::vector<std::pair<double, double>> brackets;
    const double h = (hi - lo) / (n_grid - 1);
    double x_prev = lo;
    double f_prev = f(lo);
    if (f_prev == 0.0) f_prev = f(lo + 1e-3 * h);
    for (int k = 1; k < n_grid; ++k) {
        double x = lo + k * h;
        if (k == n_grid - 1) x = hi;
        double fx = f(x);
        if (fx == 0.0) fx = f(x - 1e-3 * h);
        if (fx != 0.0 && f_prev != 0.0 && (fx > 0.0) != (f_prev > 0.0))
            brackets.emplace_back(x_prev, x);
        x_prev = x;
        f_prev = fx;
    }
    return brackets;
}

} // namespace tsync
