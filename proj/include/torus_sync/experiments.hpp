#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "torus_sync/criterion.hpp"
#include "torus_sync/dynamics.hpp"
#include "torus_sync/kernel.hpp"
#include "torus_sync/parallel.hpp"
#include "torus_sync/rng.hpp"
#include "torus_sync/stability.hpp"

namespace tsync {

// Tabular result of a packaged experiment; deterministic given
// (name, parameters, seed).
struct ExperimentResult {
    std::string name;
    std::vector<std::pair<std::string, std::string>> parameters;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::string tag_column;            // optional leading text column
    std::vector<std::string> row_tags; // aligned with rows when tag_column set
    std::optional<bool> pass;
    std::uint64_t seed = 0;
};

// Uniform-random trials integrated to their terminal status; pass requires
// every trial to synchronize. Trials run in parallel on derived seeds.
inline ExperimentResult monte_carlo_sync(double beta, std::size_t n, int trials,
                                         NormalizerSpec normalizer, const SimConfig& config) {
    if (trials < 1) throw UsageError("monte_carlo_sync requires trials >= 1");
    const InteractionKernel kernel = InteractionKernel::self_attention(beta);
    const bool normalized = normalizer.mode == NormalizerSpec::Mode::attention;

    struct Row {
        TerminalStatus status;
        double diameter;
        double t_final;
    };
    const auto rows = parallel_map<Row>(static_cast<std::size_t>(trials), [&](std::size_t trial) {
        const auto init = ParticleState::uniform_random(n, derive_seed(config.seed, trial));
        const auto traj = integrate(init, kernel, WeightSpec{}, normalizer, config);
        return Row{traj.terminal_status, traj.diameters.back(), traj.t_final()};
    });

    ExperimentResult result;
    result.name = "monte_carlo_sync";
    result.seed = config.seed;
    result.parameters = {{"beta", std::to_string(beta)},
                         {"n", std::to_string(n)},
                         {"trials", std::to_string(trials)},
                         {"normalized", normalized ? "true" : "false"},
                         {"t_max", std::to_string(config.t_max)},
                         {"sync_tol", std::to_string(config.sync_tol)}};
    result.columns = {"trial", "diameter", "t_final"};
    result.tag_column = "status";
    bool all_sync = true;
    for (int i = 0; i < trials; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        result.rows.push_back({static_cast<double>(i), r.diameter, r.t_final});
        result.row_tags.emplace_back(to_string(r.status));
        all_sync = all_sync && r.status == TerminalStatus::synchronized;
    }
    result.pass = all_sync;
    return result;
}

// Three-cluster stationary configuration for beta < -2/3: n - 2*floor(n/3)
// particles at 0 and floor(n/3) at each of +-alpha, where alpha solves the
// cluster balance equation
//     floor(n/3) f(2 alpha) + (n - 2 floor(n/3)) f(alpha) = 0
// on (0, pi); alpha = 2pi/3 exactly when 3 | n. The root taken is the one
// nearest 2pi/3. For some n not divisible by 3 the balance function has no
// zero and the construction fails honestly.
inline ParticleState build_counterexample(double beta, std::size_t n) {
    if (!(beta < -2.0 / 3.0)) throw UsageError("counterexample requires beta < -2/3");
    if (n < 3) throw UsageError("counterexample requires n >= 3");
    const InteractionKernel kernel = InteractionKernel::self_attention(beta);
    const auto m = static_cast<double>(n / 3);
    const auto m0 = static_cast<double>(n - 2 * (n / 3));

    double alpha;
    if (n % 3 == 0) {
        alpha = kTwoPi / 3.0;
    } else {
        auto balance = [&](double a) { return m * kernel.eval(2.0 * a) + m0 * kernel.eval(a); };
        const auto brackets = scan_sign_changes(balance, 1e-9, kPi - 1e-9, 8192);
        if (brackets.empty())
            throw RootNotBracketed("cluster balance equation has no root in (0, pi) for n=" +
                                   std::to_string(n));
        alpha = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [lo, hi] : brackets) {
            const double root = bisect_secant(balance, lo, hi, 1e-12);
            if (std::abs(root - kTwoPi / 3.0) < best) {
                best = std::abs(root - kTwoPi / 3.0);
                alpha = root;
            }
        }
    }

    std::vector<double> angles;
    angles.reserve(n);
    for (std::size_t i = 0; i < n - 2 * (n / 3); ++i) angles.push_back(0.0);
    for (std::size_t i = 0; i < n / 3; ++i) angles.push_back(alpha);
    for (std::size_t i = 0; i < n / 3; ++i) angles.push_back(kTwoPi - alpha);
    return ParticleState(std::move(angles));
}

// Cluster-count profile of one uniform initialization at the given sample
// times; gap threshold pi/(4 sqrt(beta)).
inline ExperimentResult metastability_profile(double beta, std::size_t n, std::uint64_t seed,
                                              std::vector<double> sample_times,
                                              std::optional<SimConfig> config_override = {}) {
    if (!(beta > 0.0)) throw UsageError("metastability_profile requires beta > 0");
    std::sort(sample_times.begin(), sample_times.end());
    const double threshold = kPi / (4.0 * std::sqrt(beta));
    const InteractionKernel kernel = InteractionKernel::self_attention(beta);

    SimConfig config;
    if (config_override) {
        config = *config_override;
    } else {
        // The observable is a thresholded count; loose tolerances keep the
        // large-n profile cheap.
        config.rtol = 1e-5;
        config.atol = 1e-8;
    }
    config.seed = seed;
    config.sample_every = 0.0;

    ExperimentResult result;
    result.name = "metastability_profile";
    result.seed = seed;
    result.parameters = {{"beta", std::to_string(beta)},
                         {"n", std::to_string(n)},
                         {"gap_threshold", std::to_string(threshold)}};
    result.columns = {"t", "cluster_count", "diameter", "energy"};

    ParticleState state = ParticleState::uniform_random(n, seed);
    double t_now = 0.0;
    for (double t_k : sample_times) {
        if (t_k > t_now) {
            SimConfig leg = config;
            leg.t_max = t_k - t_now;
            const auto traj = integrate(state, kernel, WeightSpec{}, NormalizerSpec::none(), leg);
            state = traj.final_state();
            t_now = t_k;
        }
        result.rows.push_back({t_k, static_cast<double>(cluster_count(state, threshold)),
                               circular_diameter(state), energy(state, kernel)});
    }
    return result;
}

namespace detail {

struct AuditRegime {
    const char* tag;
    bool two_intervals;
    double recommended_M; // used by the audit/criterion coherence tests
};

inline AuditRegime audit_regime(double beta) {
    if (beta >= 1.0) return {"beta>=1", true, kTwoPi};
    if (beta >= 0.75) return {"0.75<=beta<1", true, kTwoPi};
    if (beta >= 0.5) return {"0.5<=beta<0.75", true, kTwoPi};
    if (beta > 1.0 / 3.0) return {"1/3<beta<0.5", true, kTwoPi};
    if (beta >= 0.0) return {"0<=beta<=1/3", false, kTwoPi};
    if (beta >= -0.16) return {"-0.16<=beta<0", false, kPi};
    throw UsageError("inequality audit covers beta >= -0.16 only");
}

} // namespace detail

// Regime-by-regime audit of the inequalities behind the criterion: for
// beta > 1/3 (two positive intervals (b, a) and mirrored) the quantity
// tau (f''(a) - f''(b)) must stay below 2; for 0 <= beta <= 1/3 (single
// interval [a, 2pi - a]) tau f''(a) must exceed -2; for -0.16 <= beta < 0
// the weaker bound tau f''(a) >= -2 (1 + tau/pi) applies.
inline ExperimentResult appendix_inequality_audit(const std::vector<double>& beta_grid) {
    ExperimentResult result;
    result.name = "appendix_inequality_audit";
    result.columns = {"beta", "lhs", "bound", "holds"};
    result.tag_column = "regime";
    bool all_hold = true;
    for (double beta : beta_grid) {
        const auto regime = detail::audit_regime(beta);
        const InteractionKernel kernel = InteractionKernel::self_attention(beta);
        const double t = tau(kernel);
        const auto regions = f3_positive_region(kernel);
        double lhs, bound;
        bool holds;
        if (regime.two_intervals) {
            if (regions.size() != 2)
                throw RegionStructureUnknown("expected two positive intervals for beta=" +
                                             std::to_string(beta));
            const double b = regions[0].lo;
            const double a = regions[0].hi;
            lhs = t * (kernel.eval(a, 2) - kernel.eval(b, 2));
            bound = 2.0;
            holds = lhs < bound;
        } else {
            if (regions.size() != 1)
                throw RegionStructureUnknown("expected one positive interval for beta=" +
                                             std::to_string(beta));
            const double a = regions[0].lo;
            lhs = t * kernel.eval(a, 2);
            if (beta >= 0.0) {
                bound = -2.0;
                holds = lhs > bound;
            } else {
                bound = -2.0 * (1.0 + t / kPi);
                holds = lhs >= bound;
            }
        }
        result.rows.push_back({beta, lhs, bound, holds ? 1.0 : 0.0});
        result.row_tags.emplace_back(regime.tag);
        all_hold = all_hold && holds;
    }
    result.pass = all_hold;
    return result;
}

// sqrt(beta) tau(beta) must increase strictly in beta and stay below 1.
inline ExperimentResult tau_property_audit(const std::vector<double>& beta_grid) {
    ExperimentResult result;
    result.name = "tau_property_audit";
    result.columns = {"beta", "sqrt_beta_tau", "tau_slack"};
    bool pass = true;
    double prev = -std::numeric_limits<double>::infinity();
    for (double beta : beta_grid) {
        if (!(beta > 0.0)) throw UsageError("tau_property_audit requires positive beta");
        const double t = tau(InteractionKernel::self_attention(beta));
        const double scaled = std::sqrt(beta) * t;
        const double slack = 1.0 / std::sqrt(beta) - t;
        result.rows.push_back({beta, scaled, slack});
        pass = pass && scaled > prev && slack > 0.0;
        prev = scaled;
    }
    result.pass = pass;
    return result;
}

} // namespace tsync
