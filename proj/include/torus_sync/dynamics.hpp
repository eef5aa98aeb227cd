#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "torus_sync/errors.hpp"
#include "torus_sync/kernel.hpp"
#include "torus_sync/state.hpp"

namespace tsync {

// Particle weights c (pair coupling) and optional row weights w1 (rank-1
// coupling); empty vectors mean all ones.
struct WeightSpec {
    std::vector<double> c;
    std::vector<double> w1;

    void validate(std::size_t n) const {
        auto check = [n](const std::vector<double>& w, const char* name) {
            if (w.empty()) return;
            if (w.size() != n) throw InvalidWeights(std::string(name) + " length must equal n");
            for (double v : w)
                if (!(v > 0.0)) throw InvalidWeights(std::string(name) + " entries must be positive");
        };
        check(c, "weights c");
        check(w1, "weights w1");
    }

    [[nodiscard]] double c_at(std::size_t i) const { return c.empty() ? 1.0 : c[i]; }
    [[nodiscard]] double w1_at(std::size_t i) const { return w1.empty() ? 1.0 : w1[i]; }
};

struct NormalizerSpec {
    enum class Mode { none, attention };
    Mode mode = Mode::none;

    static NormalizerSpec none() { return {Mode::none}; }
    static NormalizerSpec attention() { return {Mode::attention}; }
};

enum class Integrator { rk4_fixed, rk45_adaptive };

struct SimConfig {
    Integrator integrator = Integrator::rk45_adaptive;
    double dt = 1e-2;      // fixed-step size
    double dt_init = 1e-3; // adaptive initial step
    double rtol = 1e-9;
    double atol = 1e-11;
    double t_max = 1e3;
    double sample_every = 0.0; // <= 0 records endpoints only
    double sync_tol = 1e-6;
    std::uint64_t seed = 0;
};

enum class TerminalStatus { synchronized, t_max_reached, stationary_nonsync };

inline const char* to_string(TerminalStatus s) {
    switch (s) {
        case TerminalStatus::synchronized: return "synchronized";
        case TerminalStatus::t_max_reached: return "t_max_reached";
        case TerminalStatus::stationary_nonsync: return "stationary_nonsync";
    }
    return "?";
}

// Sup-norm threshold below which the field is considered stationary. Kept
// below the integrator noise floor.
inline constexpr double kStationaryFieldTol = 1e-13;

struct Trajectory {
    std::vector<double> times;
    std::vector<ParticleState> states;
    std::vector<double> energies; // NaN for kernels without gradient structure
    std::vector<double> diameters;
    // Accumulated first-order bound on energy drift from local truncation
    // error, per sample (adaptive integrator only). Used as the slack scale
    // for monotonicity checks.
    std::vector<double> energy_err_bound;
    TerminalStatus terminal_status = TerminalStatus::t_max_reached;

    [[nodiscard]] double t_final() const { return times.empty() ? 0.0 : times.back(); }
    [[nodiscard]] const ParticleState& final_state() const { return states.back(); }
};

namespace detail {

// O(n^2) evaluator for v_i = -(w1_i / g_i) sum_j c_j f(x_i - x_j). The
// exponential families use pairwise angle-subtraction identities with one exp
// per unordered pair; f odd halves the force loop for every family.
class FieldEvaluator {
  public:
    FieldEvaluator(const InteractionKernel& kernel, const WeightSpec& weights,
                   NormalizerSpec normalizer, std::size_t n)
        : kernel_(kernel), weights_(weights), attention_(normalizer.mode == NormalizerSpec::Mode::attention),
          n_(n) {
        weights_.validate(n);
        if (attention_ && !kernel_.exponential_family())
            throw UnsupportedKernel("attention normalization requires a self-attention kernel");
        if (kernel_.exponential_family()) beta_ = kernel_.beta();
        fast_path_ = kernel_.exponential_family();
        s_.resize(n);
        c_.resize(n);
        force_.resize(n);
        gnorm_.resize(n);
    }

    // Writes velocities into v. Returns the 2-norm of the energy gradient
    // (c_i g_i v_i / w1_i) when the kernel is gradient-structured, else NaN.
    double operator()(const std::vector<double>& x, std::vector<double>& v) {
        v.resize(n_);
        std::fill(force_.begin(), force_.end(), 0.0);
        std::fill(gnorm_.begin(), gnorm_.end(), 1.0); // self term e^0
        if (fast_path_) {
            for (std::size_t i = 0; i < n_; ++i) {
                s_[i] = std::sin(x[i]);
                c_[i] = std::cos(x[i]);
            }
            for (std::size_t i = 0; i < n_; ++i) {
                const double si = s_[i];
                const double ci = c_[i];
                const double cwi = weights_.c_at(i);
                for (std::size_t j = i + 1; j < n_; ++j) {
                    const double sij = si * c_[j] - ci * s_[j];
                    const double cij = ci * c_[j] + si * s_[j];
                    const double e = (beta_ == 0.0) ? 1.0 : std::exp(beta_ * (cij - 1.0));
                    const double f = sij * e;
                    force_[i] += weights_.c_at(j) * f;
                    force_[j] -= cwi * f;
                    if (attention_) {
                        gnorm_[i] += e;
                        gnorm_[j] += e;
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < n_; ++i) {
                const double cwi = weights_.c_at(i);
                for (std::size_t j = i + 1; j < n_; ++j) {
                    const double f = kernel_.eval(wrap_difference(x[i] - x[j]));
                    force_[i] += weights_.c_at(j) * f;
                    force_[j] -= cwi * f;
                }
            }
        }
        double grad_sq = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double g = attention_ ? gnorm_[i] : 1.0;
            v[i] = -weights_.w1_at(i) * force_[i] / g;
            const double grad_i = weights_.c_at(i) * g * v[i] / weights_.w1_at(i);
            grad_sq += grad_i * grad_i;
        }
        return kernel_.gradient_structured() ? std::sqrt(grad_sq)
                                             : std::numeric_limits<double>::quiet_NaN();
    }

  private:
    InteractionKernel kernel_;
    WeightSpec weights_;
    bool attention_;
    bool fast_path_;
    std::size_t n_;
    double beta_ = 0.0;
    std::vector<double> s_, c_, force_, gnorm_;
};

} // namespace detail

inline std::vector<double> vector_field(const ParticleState& state, const InteractionKernel& kernel,
                                        const WeightSpec& weights = {},
                                        NormalizerSpec normalizer = NormalizerSpec::none()) {
    detail::FieldEvaluator eval(kernel, weights, normalizer, state.n());
    std::vector<double> v;
    eval(state.angles, v);
    return v;
}

// Weighted energy E = (1/2) sum_{i,j} c_i c_j phi(cos(x_i - x_j)) with
// phi' = h; the dynamics is its (Riemannian) gradient ascent, so E is
// nondecreasing along trajectories.
inline double energy(const ParticleState& state, const InteractionKernel& kernel,
                     const WeightSpec& weights = {}) {
    if (!kernel.gradient_structured())
        throw UnsupportedKernel("energy requires a gradient-structured kernel");
    const std::size_t n = state.n();
    weights.validate(n);
    const bool fast = kernel.exponential_family();
    const double beta = fast ? kernel.beta() : 0.0;
    double off_diag = 0.0;
    if (fast) {
        std::vector<double> s(n), c(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::sin(state.angles[i]);
            c[i] = std::cos(state.angles[i]);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double cij = c[i] * c[j] + s[i] * s[j];
                const double phi =
                    (beta == 0.0) ? cij : std::exp(beta * (cij - 1.0)) / beta;
                off_diag += weights.c_at(i) * weights.c_at(j) * phi;
            }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                off_diag += weights.c_at(i) * weights.c_at(j) *
                            kernel.phi(std::cos(wrap_difference(state.angles[i] - state.angles[j])));
    }
    double diag = 0.0;
    const double phi1 = fast ? ((beta == 0.0) ? 1.0 : 1.0 / beta) : kernel.phi(1.0);
    for (std::size_t i = 0; i < n; ++i) diag += weights.c_at(i) * weights.c_at(i);
    return off_diag + 0.5 * diag * phi1;
}

namespace detail {

struct StepRecorder {
    const InteractionKernel* kernel;
    const WeightSpec* weights;
    Trajectory traj;
    bool has_energy;
    double err_accum = 0.0;

    void record(double t, const std::vector<double>& x) {
        ParticleState st{std::vector<double>(x)};
        traj.times.push_back(t);
        traj.diameters.push_back(circular_diameter(st));
        traj.energies.push_back(has_energy ? energy(st, *kernel, *weights)
                                           : std::numeric_limits<double>::quiet_NaN());
        traj.energy_err_bound.push_back(err_accum);
        traj.states.push_back(std::move(st));
    }
};

} // namespace detail

// Advances the dynamics, wrapping angles after every accepted step and
// sampling at multiples of sample_every (plus t = 0 and the terminal point).
// Stops early once the circular diameter falls below sync_tol (synchronized)
// or the field sup-norm falls below 1e-13 at a non-synchronized state
// (stationary_nonsync).
inline Trajectory integrate(const ParticleState& initial, const InteractionKernel& kernel,
                            const WeightSpec& weights, NormalizerSpec normalizer,
                            const SimConfig& config) {
    if (!(config.t_max > 0.0) || !(config.sync_tol > 0.0) ||
        !(config.dt > 0.0) || !(config.dt_init > 0.0))
        throw std::invalid_argument("SimConfig: dt, t_max and sync_tol must be positive");

    const std::size_t n = initial.n();
    detail::FieldEvaluator field(kernel, weights, normalizer, n);
    detail::StepRecorder rec{&kernel, &weights, {}, kernel.gradient_structured()};

    std::vector<double> x = initial.angles;
    for (double& a : x) a = wrap_angle(a);
    double t = 0.0;

    const bool adaptive = config.integrator == Integrator::rk45_adaptive;
    double dt = adaptive ? config.dt_init : config.dt;
    const double sample_every = config.sample_every;
    double next_sample = sample_every > 0.0 ? sample_every : config.t_max;

    // Dormand-Prince 5(4) tableau.
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640,
                            e5 = -2187.0 / 6784 + 92097.0 / 339200, e6 = 11.0 / 84 - 187.0 / 2100,
                            e7 = -1.0 / 40;

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), stage(n), xnew(n);
    auto eval_stage = [&](std::vector<double>& out, const std::vector<double>& base) -> double {
        for (std::size_t i = 0; i < n; ++i) stage[i] = wrap_angle(base[i]);
        return field(stage, out);
    };

    (void)field(x, k1);
    bool have_k1 = true;

    rec.record(t, x);
    bool recorded_at_t = true;

    auto finish = [&](TerminalStatus status) {
        rec.traj.terminal_status = status;
        if (!recorded_at_t) rec.record(t, x);
        return std::move(rec.traj);
    };

    for (long long step = 0;; ++step) {
        if (step > 200000000LL) throw NumericalError("integrate: step budget exhausted");

        if (!have_k1) {
            (void)field(x, k1);
            have_k1 = true;
        }

        // Stop checks on the current state (covers t = 0).
        const double diam = circular_diameter(ParticleState{std::vector<double>(x)});
        if (diam < config.sync_tol) return finish(TerminalStatus::synchronized);
        double sup = 0.0;
        for (double v : k1) sup = std::max(sup, std::abs(v));
        if (sup < kStationaryFieldTol) return finish(TerminalStatus::stationary_nonsync);
        if (t >= config.t_max) return finish(TerminalStatus::t_max_reached);

        double h = std::min(dt, config.t_max - t);
        if (sample_every > 0.0 && next_sample - t > 1e-14) h = std::min(h, next_sample - t);

        if (!adaptive) {
            // Classic RK4.
            for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + 0.5 * h * k1[i];
            eval_stage(k2, xnew);
            for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + 0.5 * h * k2[i];
            eval_stage(k3, xnew);
            for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + h * k3[i];
            eval_stage(k4, xnew);
            for (std::size_t i = 0; i < n; ++i)
                x[i] = wrap_angle(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            t += h;
            have_k1 = false;
        } else {
            for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + h * a21 * k1[i];
            eval_stage(k2, xnew);
            for (std::size_t i = 0; i < n; ++i) xnew[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
            eval_stage(k3, xnew);
            for (std::size_t i = 0; i < n; ++i)
                xnew[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            eval_stage(k4, xnew);
            for (std::size_t i = 0; i < n; ++i)
                xnew[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            eval_stage(k5, xnew);
            for (std::size_t i = 0; i < n; ++i)
                xnew[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                      a65 * k5[i]);
            eval_stage(k6, xnew);
            for (std::size_t i = 0; i < n; ++i)
                xnew[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                                      b6 * k6[i]);
            const double new_grad_norm = eval_stage(k7, xnew); // FSAL stage

            double err_ratio_sq = 0.0;
            double err_norm2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                       e6 * k6[i] + e7 * k7[i]);
                const double scale =
                    config.atol + config.rtol * std::max(std::abs(x[i]), std::abs(xnew[i]));
                err_ratio_sq += (ei / scale) * (ei / scale);
                err_norm2 += ei * ei;
            }
            const double err = std::sqrt(err_ratio_sq / static_cast<double>(n));

            if (err <= 1.0) {
                t += h;
                for (std::size_t i = 0; i < n; ++i) x[i] = wrap_angle(xnew[i]);
                if (rec.has_energy && std::isfinite(new_grad_norm))
                    rec.err_accum += std::sqrt(err_norm2) * new_grad_norm;
                k1.swap(k7); // FSAL; the field is periodic so the wrap changes nothing
                have_k1 = true;
            } else {
                have_k1 = true; // k1 still matches x
            }
            const double factor = !std::isfinite(err) ? 0.2
                                  : (err == 0.0)
                                      ? 5.0
                                      : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            dt = h * factor;
            if (dt < 1e-14) throw StepSizeUnderflow("adaptive step size fell below 1e-14");
            if (!(err <= 1.0)) continue; // rejected (or non-finite); retry from the same state
        }

        recorded_at_t = false;
        if (sample_every > 0.0 && t >= next_sample - 1e-12) {
            rec.record(t, x);
            recorded_at_t = true;
            while (next_sample <= t + 1e-12) next_sample += sample_every;
        }
    }
}

inline Trajectory integrate(const ParticleState& initial, const InteractionKernel& kernel,
                            const SimConfig& config) {
    return integrate(initial, kernel, WeightSpec{}, NormalizerSpec::none(), config);
}

} // namespace tsync
