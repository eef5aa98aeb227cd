#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "torus_sync/errors.hpp"
#include "torus_sync/kernel.hpp"
#include "torus_sync/rng.hpp"

namespace tsync {

// Angle into [0, 2pi).
inline double wrap_angle(double x) {
    double y = std::fmod(x, kTwoPi);
    if (y < 0.0) y += kTwoPi;
    if (y >= kTwoPi) y = 0.0; // fmod can round up to 2pi
    return y;
}

// Difference into (-pi, pi]; keeps kernel arguments small.
inline double wrap_difference(double d) {
    double y = std::fmod(d, kTwoPi);
    if (y > kPi) y -= kTwoPi;
    if (y <= -kPi) y += kTwoPi;
    return y;
}

// n particles on the circle; angles normalized to [0, 2pi) by every public
// operation.
struct ParticleState {
    std::vector<double> angles;

    ParticleState() = default;
    explicit ParticleState(std::vector<double> a) : angles(std::move(a)) { normalize(); }

    [[nodiscard]] std::size_t n() const { return angles.size(); }

    void normalize() {
        for (double& x : angles) x = wrap_angle(x);
    }

    static ParticleState uniform_random(std::size_t n, std::uint64_t seed) {
        SplitMix64 rng(seed);
        std::vector<double> a(n);
        for (double& x : a) x = rng.next_double() * kTwoPi;
        return ParticleState(std::move(a));
    }

    static ParticleState regular_ngon(std::size_t n) {
        std::vector<double> a(n);
        for (std::size_t i = 0; i < n; ++i)
            a[i] = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
        return ParticleState(std::move(a));
    }
};

namespace detail {

// Gaps between circularly sorted angles (the last wraps around); sums to 2pi.
inline std::vector<double> sorted_gaps(std::vector<double> sorted) {
    const std::size_t n = sorted.size();
    std::vector<double> gaps(n);
    for (std::size_t i = 0; i + 1 < n; ++i) gaps[i] = sorted[i + 1] - sorted[i];
    gaps[n - 1] = sorted[0] + kTwoPi - sorted[n - 1];
    return gaps;
}

} // namespace detail

// Length of the smallest arc containing all particles: 2pi minus the largest
// circular gap. Zero iff all angles coincide.
inline double circular_diameter(const ParticleState& state) {
    const std::size_t n = state.n();
    if (n <= 1) return 0.0;
    std::vector<double> sorted = state.angles;
    std::sort(sorted.begin(), sorted.end());
    const auto gaps = detail::sorted_gaps(std::move(sorted));
    const double max_gap = *std::max_element(gaps.begin(), gaps.end());
    return kTwoPi - max_gap;
}

// Number of maximal runs of circularly sorted angles whose consecutive gaps
// stay below gap_threshold.
inline int cluster_count(const ParticleState& state, double gap_threshold) {
    if (!(gap_threshold > 0.0)) throw std::invalid_argument("gap_threshold must be positive");
    const std::size_t n = state.n();
    if (n <= 1) return static_cast<int>(n);
    std::vector<double> sorted = state.angles;
    std::sort(sorted.begin(), sorted.end());
    const auto gaps = detail::sorted_gaps(std::move(sorted));
    int breaks = 0;
    for (double g : gaps)
        if (g >= gap_threshold) ++breaks;
    return std::max(breaks, 1);
}

} // namespace tsync
