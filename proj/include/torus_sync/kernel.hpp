#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

#include "torus_sync/errors.hpp"
#include "torus_sync/quadrature.hpp"
#include "torus_sync/rootfind.hpp"

namespace tsync {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Interval of angles, canonical range [0, 2pi] with lo < hi (hi may equal 2pi
// when a region touches the wrap point).
struct AngleInterval {
    double lo = 0.0;
    double hi = 0.0;
};

// Odd 2pi-periodic interaction kernel f with analytic derivatives up to
// order 3.
//
// Families:
//   self_attention  f(x) = sin(x) e^{beta(cos x - 1)}   (normalized form; the
//                   e^{-beta} factor rescales time only and keeps large-beta
//                   evaluation overflow-free)
//   kuramoto        f(x) = sin(x), the beta = 0 case
//   hcos            f(x) = sin(x) h(cos x) for a user-supplied h with
//                   derivatives h', h'', h''' (all four callables required so
//                   that order-3 evaluation stays analytic)
//   asymmetric      g(x) = |a| f(x) - |b| f(-x) over a base kernel
class InteractionKernel {
  public:
    using ScalarFn = std::function<double(double)>;
    enum class Family { self_attention, kuramoto, hcos, asymmetric };

    static InteractionKernel self_attention(double beta) {
        InteractionKernel k(Family::self_attention);
        k.beta_ = beta;
        k.fp0_ = 1.0;
        return k;
    }

    static InteractionKernel kuramoto() {
        InteractionKernel k(Family::kuramoto);
        k.fp0_ = 1.0;
        return k;
    }

    static InteractionKernel hcos(ScalarFn h, ScalarFn dh, ScalarFn d2h, ScalarFn d3h) {
        InteractionKernel k(Family::hcos);
        k.h_ = {std::move(h), std::move(dh), std::move(d2h), std::move(d3h)};
        k.fp0_ = k.h_[0](1.0);
        return k;
    }

    // f and derivatives; order in {0,1,2,3}. Total on the reals (periodicity
    // comes out of sin/cos directly).
    [[nodiscard]] double eval(double x, int order = 0) const {
        switch (family_) {
            case Family::self_attention:
            case Family::kuramoto: {
                const double s = std::sin(x);
                const double c = std::cos(x);
                const double b = beta_;
                const double e = (b == 0.0) ? 1.0 : std::exp(b * (c - 1.0));
                switch (order) {
                    case 0: return s * e;
                    case 1: return (c - b * s * s) * e;
                    case 2: return (-s - 3.0 * b * s * c + b * b * s * s * s) * e;
                    case 3: {
                        const double s2 = s * s;
                        return -(c + 3.0 * b * c * c - 4.0 * b * s2 -
                                 6.0 * b * b * c * s2 + b * b * b * s2 * s2) *
                               e;
                    }
                }
                break;
            }
            case Family::hcos: {
                const double s = std::sin(x);
                const double c = std::cos(x);
                const double s2 = s * s;
                switch (order) {
                    case 0: return s * h_[0](c);
                    case 1: return c * h_[0](c) - s2 * h_[1](c);
                    case 2: return -s * h_[0](c) - 3.0 * s * c * h_[1](c) + s2 * s * h_[2](c);
                    case 3:
                        return -c * h_[0](c) + (4.0 * s2 - 3.0 * c * c) * h_[1](c) +
                               6.0 * s2 * c * h_[2](c) - s2 * s2 * h_[3](c);
                }
                break;
            }
            case Family::asymmetric: {
                const double sgn = (order % 2 == 0) ? -1.0 : 1.0;
                return asym_a_ * base_->eval(x, order) +
                       sgn * asym_b_ * base_->eval(-x, order);
            }
        }
        throw std::invalid_argument("InteractionKernel::eval: order must be 0..3");
    }

    double operator()(double x) const { return eval(x, 0); }

    [[nodiscard]] Family family() const { return family_; }

    // Cached f'(0).
    [[nodiscard]] double fp0() const { return fp0_; }

    [[nodiscard]] bool exponential_family() const {
        return family_ == Family::self_attention || family_ == Family::kuramoto;
    }

    // Kernels of the form sin(x) h(cos x); these admit the energy and the
    // Laplacian Hessian.
    [[nodiscard]] bool gradient_structured() const { return family_ != Family::asymmetric; }

    [[nodiscard]] double beta() const {
        if (!exponential_family())
            throw UnsupportedKernel("beta is defined for the exponential families only");
        return beta_;
    }

    // h(cos) factor and its derivatives in t = cos x.
    [[nodiscard]] double h_cos(double t, int order = 0) const {
        switch (family_) {
            case Family::self_attention:
            case Family::kuramoto: {
                const double e = (beta_ == 0.0) ? 1.0 : std::exp(beta_ * (t - 1.0));
                double scale = 1.0;
                for (int k = 0; k < order; ++k) scale *= beta_;
                return scale * e;
            }
            case Family::hcos:
                return h_[static_cast<std::size_t>(order)](t);
            case Family::asymmetric:
                throw UnsupportedKernel("asymmetric kernels have no sin*h(cos) structure");
        }
        throw std::invalid_argument("h_cos: order must be 0..3");
    }

    // Potential phi with phi' = h. The exponential families use the closed
    // form e^{beta(t-1)}/beta (phi(t) = t at beta = 0); hcos integrates h
    // numerically from 0.
    [[nodiscard]] double phi(double t) const {
        switch (family_) {
            case Family::self_attention:
            case Family::kuramoto:
                if (beta_ == 0.0) return t;
                return std::exp(beta_ * (t - 1.0)) / beta_;
            case Family::hcos:
                return adaptive_simpson([this](double s) { return h_[0](s); }, 0.0, t, 1e-12);
            case Family::asymmetric:
                throw UnsupportedKernel("asymmetric kernels have no gradient structure");
        }
        throw std::logic_error("phi: unreachable");
    }

    [[nodiscard]] const InteractionKernel& base() const {
        if (family_ != Family::asymmetric)
            throw UnsupportedKernel("base() applies to asymmetric kernels only");
        return *base_;
    }

    // (|a| + |b|) for asymmetric kernels, 1 otherwise. For odd bases the
    // asymmetric combination is exactly this scale factor times the base.
    [[nodiscard]] double scale() const {
        return family_ == Family::asymmetric ? asym_a_ + asym_b_ : 1.0;
    }

    friend InteractionKernel asymmetric_combine(const InteractionKernel& base, double a,
                                                double b);

  private:
    explicit InteractionKernel(Family family) : family_(family) {}

    Family family_;
    double beta_ = 0.0;
    std::array<ScalarFn, 4> h_{};
    std::shared_ptr<const InteractionKernel> base_;
    double asym_a_ = 0.0;
    double asym_b_ = 0.0;
    double fp0_ = 0.0;
};

// g(x) = |a| f(x) - |b| f(-x); requires ab >= 0 and not both zero so that
// g'(0) = (|a|+|b|) f'(0) keeps the sign of f'(0).
inline InteractionKernel asymmetric_combine(const InteractionKernel& base, double a, double b) {
    if (a * b < 0.0 || (a == 0.0 && b == 0.0))
        throw InvalidWeights("asymmetric_combine requires ab >= 0 and (a, b) != (0, 0)");
    InteractionKernel k(InteractionKernel::Family::asymmetric);
    k.asym_a_ = std::abs(a);
    k.asym_b_ = std::abs(b);
    k.base_ = std::make_shared<InteractionKernel>(base);
    k.fp0_ = (k.asym_a_ + k.asym_b_) * base.fp0();
    return k;
}

// Stability angle: smallest tau in (0, pi] with f' < 0 on (tau, pi].
// Closed form for the exponential families: cos(tau) is the root of
// beta u^2 + u - beta = 0 in [-1, 1], written in the cancellation-free form
// 2 beta / (1 + sqrt(1 + 4 beta^2)); tau = pi/2 exactly at beta = 0. The hcos
// path falls back to bracketed root finding and verifies the single-crossing
// structure on 1024 samples.
inline double tau(const InteractionKernel& kernel) {
    using Family = InteractionKernel::Family;
    if (kernel.family() == Family::asymmetric) return tau(kernel.base());
    if (kernel.fp0() <= 0.0) throw NoValidTau("tau requires f'(0) > 0");
    if (kernel.exponential_family()) {
        const double b = kernel.beta();
        if (b == 0.0) return kPi / 2.0;
        const double u = 2.0 * b / (1.0 + std::sqrt(1.0 + 4.0 * b * b));
        return std::acos(u);
    }
    auto fp = [&kernel](double x) { return kernel.eval(x, 1); };
    const auto brackets = scan_sign_changes(fp, 0.0, kPi, 4096);
    if (brackets.size() != 1)
        throw NoValidTau("f' does not have the single-sign-change structure on (0, pi]");
    const double t = bisect_secant(fp, brackets[0].first, brackets[0].second, 1e-12);
    for (int k = 1; k <= 1024; ++k) {
        const double x = t + 1e-9 + (kPi - t - 1e-9) * k / 1024.0;
        if (x <= kPi && fp(x) >= 0.0)
            throw NoValidTau("f' is not negative everywhere beyond the candidate tau");
    }
    return t;
}

namespace detail {

// Cosine polynomial p(z) with f'''(x) = p(cos x) e^{beta(cos x - 1)} for the
// exponential families.
inline double f3_cos_poly(double beta, double z) {
    const double w = 1.0 - z * z;
    return -(z + 3.0 * beta * z * z - 4.0 * beta * w - 6.0 * beta * beta * z * w +
             beta * beta * beta * w * w);
}

inline int f3_sign(const InteractionKernel& k, double x, double nudge) {
    double v = k.eval(x, 3);
    if (v == 0.0) v = k.eval(x + nudge, 3);
    return v > 0.0 ? 1 : -1;
}

} // namespace detail

// Maximal intervals of [0, 2pi] where f''' > 0. f is odd, so f''' is even
// and it suffices to locate roots in (0, pi) and mirror. The exponential
// families find roots through the cosine polynomial p(z); hcos kernels scan
// f''' directly. A 4096-point sign scan over the full circle must agree with
// the root count, otherwise the region structure is not trusted.
inline std::vector<AngleInterval> f3_positive_region(const InteractionKernel& kernel) {
    using Family = InteractionKernel::Family;
    if (kernel.family() == Family::asymmetric) return f3_positive_region(kernel.base());

    auto f3 = [&kernel](double x) { return kernel.eval(x, 3); };

    std::vector<double> roots;
    bool polynomial_route = kernel.exponential_family();
    if (polynomial_route) {
        const double b = kernel.beta();
        auto p = [b](double z) { return detail::f3_cos_poly(b, z); };
        for (const auto& [zlo, zhi] : scan_sign_changes(p, -1.0, 1.0, 4096)) {
            // acos reverses orientation; re-polish the root on f''' in angle
            // space so endpoint accuracy is uniform in x.
            const double xlo = std::acos(zhi);
            const double xhi = std::acos(zlo);
            if ((f3(xlo) > 0.0) == (f3(xhi) > 0.0)) {
                polynomial_route = false; // rounding broke the bracket
                break;
            }
            roots.push_back(bisect_secant(f3, xlo, xhi, 1e-12));
        }
    }
    if (!polynomial_route) {
        roots.clear();
        for (const auto& [xlo, xhi] : scan_sign_changes(f3, 0.0, kPi, 4096))
            roots.push_back(bisect_secant(f3, xlo, xhi, 1e-12));
    }
    std::sort(roots.begin(), roots.end());

    std::vector<double> breakpoints{0.0};
    breakpoints.insert(breakpoints.end(), roots.begin(), roots.end());
    breakpoints.push_back(kPi);

    std::vector<AngleInterval> half;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double lo = breakpoints[i];
        const double hi = breakpoints[i + 1];
        if (hi - lo < 1e-13) continue;
        if (f3(0.5 * (lo + hi)) > 0.0) half.push_back({lo, hi});
    }

    std::vector<AngleInterval> full = half;
    for (auto it = half.rbegin(); it != half.rend(); ++it)
        full.push_back({kTwoPi - it->hi, kTwoPi - it->lo});
    std::sort(full.begin(), full.end(),
              [](const AngleInterval& u, const AngleInterval& v) { return u.lo < v.lo; });
    std::vector<AngleInterval> merged;
    for (const auto& iv : full) {
        if (!merged.empty() && iv.lo - merged.back().hi < 1e-9)
            merged.back().hi = iv.hi;
        else
            merged.push_back(iv);
    }

    // Defensive consistency check: each root in (0, pi) appears twice as a
    // sign change of f''' on the circle (roots at 0 or pi are tangencies of
    // the even function and change no sign).
    int grid_changes = 0;
    const int n_grid = 4096;
    int prev = detail::f3_sign(kernel, 0.0, 1e-9);
    for (int k = 1; k < n_grid; ++k) {
        const int s = detail::f3_sign(kernel, kTwoPi * k / n_grid, 1e-9);
        if (s != prev) ++grid_changes;
        prev = s;
    }
    int interior_roots = 0;
    for (double r : roots)
        if (r > 1e-9 && r < kPi - 1e-9) ++interior_roots;
    if (grid_changes != 2 * interior_roots)
        throw RegionStructureUnknown("f''' sign-scan disagrees with the located root count");

    return merged;
}

enum class IntegralMethod { region_antiderivative, quadrature };

// I = integral over one period of |f'''|_+. The antiderivative route
// telescopes f'' over the positive intervals; the quadrature route integrates
// f''' by adaptive Simpson on the same intervals (splitting there keeps each
// piece smooth).
inline double l1_f3_plus(const InteractionKernel& kernel,
                         IntegralMethod method = IntegralMethod::region_antiderivative) {
    const auto regions = f3_positive_region(kernel);
    double total = 0.0;
    if (method == IntegralMethod::region_antiderivative) {
        for (const auto& iv : regions) total += kernel.eval(iv.hi, 2) - kernel.eval(iv.lo, 2);
    } else {
        const double tol = 1e-10 / static_cast<double>(std::max<std::size_t>(regions.size(), 1));
        for (const auto& iv : regions)
            total += adaptive_simpson([&kernel](double x) { return kernel.eval(x, 3); }, iv.lo,
                                      iv.hi, tol);
    }
    return total;
}

} // namespace tsync
