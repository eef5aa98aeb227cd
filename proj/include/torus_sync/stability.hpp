#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "torus_sync/dynamics.hpp"
#include "torus_sync/kernel.hpp"
#include "torus_sync/state.hpp"

namespace tsync {

struct Tolerances {
    double residual_tol = 1e-10;
    double instability_tol = 1e-9;
    double merge_tol = 1e-8;
};

// Distinct cluster angles with multiplicities, weights, and circular gaps.
struct ClusterDecomposition {
    std::vector<double> thetas;        // K distinct angles, ascending in [0, 2pi)
    std::vector<int> multiplicities;   // N_1..N_K, sum = n
    std::vector<double> cluster_weights; // W_1..W_K, sums of c_j per cluster
    std::vector<double> gaps;          // Delta_1..Delta_K with wraparound, sum = 2pi
    std::vector<std::vector<int>> members; // particle indices per cluster
    double tau_max = 0.0;              // max gap

    [[nodiscard]] int K() const { return static_cast<int>(thetas.size()); }
};

// Sup-norm of the weighted force sums; zero at stationary points.
inline double stationarity_residual(const ParticleState& state, const InteractionKernel& kernel,
                                    const WeightSpec& weights = {}) {
    const std::size_t n = state.n();
    weights.validate(n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            sum += weights.c_at(j) * kernel.eval(wrap_difference(state.angles[i] - state.angles[j]));
        worst = std::max(worst, std::abs(sum));
    }
    return worst;
}

// Circularly sorts the angles and merges runs whose consecutive gaps are at
// most merge_tol; cluster representatives are circular means.
inline ClusterDecomposition decompose_clusters(const ParticleState& state, double merge_tol,
                                               const WeightSpec& weights = {}) {
    if (merge_tol < 0.0) throw std::invalid_argument("merge_tol must be nonnegative");
    const std::size_t n = state.n();
    weights.validate(n);
    ClusterDecomposition out;
    if (n == 0) return out;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return state.angles[a] < state.angles[b];
    });

    // Runs over the sorted circle, split where the gap exceeds merge_tol.
    std::vector<std::vector<int>> runs{{static_cast<int>(order[0])}};
    for (std::size_t k = 1; k < n; ++k) {
        const double gap = state.angles[order[k]] - state.angles[order[k - 1]];
        if (gap > merge_tol) runs.emplace_back();
        runs.back().push_back(static_cast<int>(order[k]));
    }
    if (runs.size() > 1) {
        const double wrap_gap =
            state.angles[order[0]] + kTwoPi - state.angles[order[n - 1]];
        if (wrap_gap <= merge_tol) {
            // Last run continues through 0 into the first.
            auto& first = runs.front();
            auto& last = runs.back();
            last.insert(last.end(), first.begin(), first.end());
            first = std::move(last);
            runs.pop_back();
        }
    }

    struct Cluster {
        double theta;
        std::vector<int> members;
    };
    std::vector<Cluster> clusters;
    clusters.reserve(runs.size());
    for (auto& run : runs) {
        double sx = 0.0, sy = 0.0;
        for (int idx : run) {
            sx += std::cos(state.angles[static_cast<std::size_t>(idx)]);
            sy += std::sin(state.angles[static_cast<std::size_t>(idx)]);
        }
        clusters.push_back({wrap_angle(std::atan2(sy, sx)), std::move(run)});
    }
    std::sort(clusters.begin(), clusters.end(),
              [](const Cluster& a, const Cluster& b) { return a.theta < b.theta; });

    for (auto& cl : clusters) {
        out.thetas.push_back(cl.theta);
        out.multiplicities.push_back(static_cast<int>(cl.members.size()));
        double w = 0.0;
        for (int idx : cl.members) w += weights.c_at(static_cast<std::size_t>(idx));
        out.cluster_weights.push_back(w);
        out.members.push_back(std::move(cl.members));
    }
    const int K = out.K();
    out.gaps.resize(static_cast<std::size_t>(K));
    if (K == 1) {
        out.gaps[0] = kTwoPi;
    } else {
        for (int k = 0; k < K; ++k) {
            const double next = (k + 1 < K) ? out.thetas[static_cast<std::size_t>(k + 1)]
                                            : out.thetas[0] + kTwoPi;
            out.gaps[static_cast<std::size_t>(k)] = next - out.thetas[static_cast<std::size_t>(k)];
        }
    }
    out.tau_max = *std::max_element(out.gaps.begin(), out.gaps.end());
    return out;
}

struct CutMarginEntry {
    int cluster = 0;
    int subset_size = 0;
    double margin = 0.0;
};

struct CutMargins {
    std::vector<CutMarginEntry> entries; // minimum margin per (cluster, size)
    double min_margin = std::numeric_limits<double>::infinity();
};

// Cut sums over subsets S of co-located particles. For S inside cluster l
// with weight sum W_S the cut equals W_S (B_l + f'(0) (W_l - W_S)) where
// B_l collects the out-of-cluster f' terms; the expression is concave in W_S,
// so the size-k minimum is attained by the k smallest or k largest weights.
inline CutMargins cut_stability_margins(const ParticleState& state, const InteractionKernel& kernel,
                                        const WeightSpec& weights = {}, double merge_tol = 1e-8) {
    const std::size_t n = state.n();
    weights.validate(n);
    const auto decomp = decompose_clusters(state, merge_tol, weights);
    const double fp0 = kernel.fp0();

    CutMargins out;
    for (int l = 0; l < decomp.K(); ++l) {
        const auto& members = decomp.members[static_cast<std::size_t>(l)];
        const double theta = decomp.thetas[static_cast<std::size_t>(l)];
        const double W_l = decomp.cluster_weights[static_cast<std::size_t>(l)];

        std::vector<bool> inside(n, false);
        for (int idx : members) inside[static_cast<std::size_t>(idx)] = true;
        double B = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (!inside[j])
                B += weights.c_at(j) * kernel.eval(wrap_difference(theta - state.angles[j]), 1);

        std::vector<double> w;
        w.reserve(members.size());
        for (int idx : members) w.push_back(weights.c_at(static_cast<std::size_t>(idx)));
        std::sort(w.begin(), w.end());
        const int N_l = static_cast<int>(w.size());

        double lo_sum = 0.0; // k smallest
        double hi_sum = 0.0; // k largest
        for (int k = 1; k <= N_l; ++k) {
            lo_sum += w[static_cast<std::size_t>(k - 1)];
            hi_sum += w[static_cast<std::size_t>(N_l - k)];
            if (static_cast<std::size_t>(N_l) == n && k == N_l) continue; // S must be proper
            auto cut = [&](double W_S) { return W_S * (B + fp0 * (W_l - W_S)); };
            const double margin = std::min(cut(lo_sum), cut(hi_sum));
            out.entries.push_back({l, k, margin});
            out.min_margin = std::min(out.min_margin, margin);
        }
    }
    return out;
}

// At most one circular gap between distinct clusters may exceed tau.
inline bool gap_lemma_check(const ParticleState& state, const InteractionKernel& kernel,
                            double merge_tol = 1e-8) {
    const auto decomp = decompose_clusters(state, merge_tol);
    const double t = tau(kernel);
    int over = 0;
    for (double g : decomp.gaps)
        if (g > t) ++over;
    return over <= 1;
}

// Analytic linearization of the dynamics at `state`, including the softmax
// normalizer terms in attention mode. Rows sum to zero (translation
// invariance).
inline Eigen::MatrixXd jacobian(const ParticleState& state, const InteractionKernel& kernel,
                                const WeightSpec& weights = {},
                                NormalizerSpec normalizer = NormalizerSpec::none()) {
    const std::size_t n = state.n();
    weights.validate(n);
    const bool attention = normalizer.mode == NormalizerSpec::Mode::attention;
    if (attention && !kernel.exponential_family())
        throw UnsupportedKernel("attention normalization requires a self-attention kernel");
    const double beta = attention ? kernel.beta() : 0.0;

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
    std::vector<double> g(n, 1.0), F(n, 0.0), fsum(n, 0.0);
    if (attention) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = wrap_difference(state.angles[i] - state.angles[j]);
                g[i] += std::exp(beta * (std::cos(d) - 1.0));
                F[i] += weights.c_at(j) * kernel.eval(d);
                fsum[i] += kernel.eval(d);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double w1 = weights.w1_at(i);
        double diag = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = wrap_difference(state.angles[i] - state.angles[j]);
            const double fp = kernel.eval(d, 1);
            double entry;
            if (!attention) {
                entry = w1 * weights.c_at(j) * fp;
            } else {
                entry = w1 * (weights.c_at(j) * fp * g[i] + beta * F[i] * kernel.eval(d)) /
                        (g[i] * g[i]);
            }
            J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entry;
            diag -= entry;
        }
        J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag;
    }
    return J;
}

// Graph Laplacian of edge weights -c_i c_j f'(x_i - x_j): the Hessian of the
// energy. Rows sum to zero (translation mode).
inline Eigen::MatrixXd hessian_matrix(const ParticleState& state,
                                      const InteractionKernel& kernel,
                                      const WeightSpec& weights = {}) {
    if (!kernel.gradient_structured())
        throw UnsupportedKernel("hessian_matrix requires a gradient-structured kernel");
    const std::size_t n = state.n();
    weights.validate(n);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double diag = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double wij =
                -weights.c_at(i) * weights.c_at(j) *
                kernel.eval(wrap_difference(state.angles[i] - state.angles[j]), 1);
            L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -wij;
            diag += wij;
        }
        L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag;
    }
    return L;
}

// Eigenvalues of the energy Hessian, ascending; always contains the
// translation zero mode.
inline std::vector<double> hessian_spectrum(const ParticleState& state,
                                            const InteractionKernel& kernel,
                                            const WeightSpec& weights = {}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hessian_matrix(state, kernel, weights),
                                                          Eigen::EigenvaluesOnly);
    const auto& vals = solver.eigenvalues();
    return {vals.data(), vals.data() + vals.size()};
}

enum class Classification { synchronized, locally_unstable, stable_nonsynchronized, inconclusive };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::synchronized: return "synchronized";
        case Classification::locally_unstable: return "locally_unstable";
        case Classification::stable_nonsynchronized: return "stable_nonsynchronized";
        case Classification::inconclusive: return "inconclusive";
    }
    return "?";
}

struct StationaryReport {
    double residual = 0.0;
    ClusterDecomposition decomposition;
    CutMargins cut_margins;
    bool gap_lemma_ok = false;
    std::vector<std::complex<double>> jacobian_eigs; // ascending by real part
    std::vector<double> hessian_eigs;                // ascending; empty without gradient structure
    Classification classification = Classification::inconclusive;
};

// Classification of a numerically stationary state: synchronized when a
// single cluster remains; locally unstable when the linearization has an
// expanding direction; stable (nonsynchronized) when all directions contract
// except the translation zero mode; inconclusive otherwise.
inline StationaryReport classify_stationary_point(const ParticleState& state,
                                                  const InteractionKernel& kernel,
                                                  const WeightSpec& weights = {},
                                                  NormalizerSpec normalizer = NormalizerSpec::none(),
                                                  const Tolerances& tol = {}) {
    StationaryReport report;
    report.residual = stationarity_residual(state, kernel, weights);
    if (report.residual >= tol.residual_tol)
        throw NotStationary("stationarity residual " + std::to_string(report.residual) +
                            " exceeds the tolerance");
    report.decomposition = decompose_clusters(state, tol.merge_tol, weights);
    report.cut_margins = cut_stability_margins(state, kernel, weights, tol.merge_tol);
    report.gap_lemma_ok = gap_lemma_check(state, kernel, tol.merge_tol);

    const Eigen::MatrixXd J = jacobian(state, kernel, weights, normalizer);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(J, false);
    report.jacobian_eigs.resize(state.n());
    for (std::size_t i = 0; i < state.n(); ++i)
        report.jacobian_eigs[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
    std::sort(report.jacobian_eigs.begin(), report.jacobian_eigs.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
              });

    if (kernel.gradient_structured())
        report.hessian_eigs = hessian_spectrum(state, kernel, weights);

    if (report.decomposition.K() == 1) {
        report.classification = Classification::synchronized;
        return report;
    }
    const double max_re = report.jacobian_eigs.back().real();
    if (max_re > tol.instability_tol) {
        report.classification = Classification::locally_unstable;
        return report;
    }
    int near_zero = 0;
    int contracting = 0;
    for (const auto& ev : report.jacobian_eigs) {
        if (std::abs(ev.real()) <= tol.instability_tol)
            ++near_zero;
        else if (ev.real() < -tol.instability_tol)
            ++contracting;
    }
    if (near_zero == 1 && contracting == static_cast<int>(state.n()) - 1)
        report.classification = Classification::stable_nonsynchronized;
    else
        report.classification = Classification::inconclusive;
    return report;
}

} // namespace tsync
