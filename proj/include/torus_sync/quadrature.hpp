#pragma once

#include <cmath>
#include <cstdint>

#include "torus_sync/errors.hpp"

namespace tsync {

namespace detail {

template <typename F>
double simpson_rec(F& f, double a, double m, double b, double fa, double fm, double fb,
                   double whole, double tol, std::int64_t& budget) {
    if (--budget < 0)
        throw QuadratureNonconvergence("adaptive Simpson: subdivision budget exhausted");
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson_rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, budget) +
           simpson_rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, budget);
}

} // namespace detail

// Adaptive Simpson with absolute tolerance; the caller splits at any interior
// kinks so each invocation sees a smooth integrand. Throws after 1e6
// subdivisions.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double abs_tol = 1e-10,
                        std::int64_t max_subdivisions = 1000000) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fm = f(m);
    const double fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    std::int64_t budget = max_subdivisions;
    return detail::simpson_rec(f, a, m, b, fa, fm, fb, whole, abs_tol, budget);
}

} // namespace tsync
