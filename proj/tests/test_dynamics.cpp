#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "torus_sync/dynamics.hpp"
#include "torus_sync/experiments.hpp"

using namespace tsync;

namespace {

// Straightforward reference evaluator, no pairwise-trig identities.
std::vector<double> reference_field(const ParticleState& state, const InteractionKernel& kernel,
                                    const WeightSpec& weights, bool attention) {
    const std::size_t n = state.n();
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double force = 0.0;
        double g = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = state.angles[i] - state.angles[j];
            force += weights.c_at(j) * kernel.eval(d);
            if (attention) g += std::exp(kernel.beta() * (std::cos(d) - 1.0));
        }
        if (!attention) g = 1.0;
        v[i] = -weights.w1_at(i) / g * force;
    }
    return v;
}

WeightSpec random_weights(std::size_t n, std::uint64_t seed, bool with_w1) {
    SplitMix64 rng(seed);
    WeightSpec w;
    w.c.resize(n);
    for (double& x : w.c) x = 0.5 + 1.5 * rng.next_double();
    if (with_w1) {
        w.w1.resize(n);
        for (double& x : w.w1) x = 0.5 + 1.5 * rng.next_double();
    }
    return w;
}

} // namespace

TEST_CASE("vector field closed forms") {
    const auto kur = InteractionKernel::kuramoto();

    SECTION("equal angles give the zero field exactly") {
        const ParticleState s(std::vector<double>(7, 1.3));
        for (double v : vector_field(s, kur)) CHECK(v == 0.0);
        for (double v : vector_field(s, InteractionKernel::self_attention(2.0))) CHECK(v == 0.0);
    }

    SECTION("antipodal pair is stationary") {
        const ParticleState s(std::vector<double>{0.0, kPi});
        for (double v : vector_field(s, kur)) CHECK(v == Catch::Approx(0.0).margin(1e-15));
    }

    SECTION("quarter-turn pair attracts head-on") {
        const ParticleState s(std::vector<double>{0.0, kPi / 2.0});
        const auto v = vector_field(s, kur);
        CHECK(v[0] == Catch::Approx(1.0).margin(1e-15));
        CHECK(v[1] == Catch::Approx(-1.0).margin(1e-15));
    }
}

TEST_CASE("fast path matches the reference evaluator") {
    const auto state = ParticleState::uniform_random(12, 99);

    SECTION("unit weights, no normalizer") {
        for (double beta : {-0.7, 0.0, 1.3}) {
            const auto k = InteractionKernel::self_attention(beta);
            const auto v = vector_field(state, k);
            const auto ref = reference_field(state, k, {}, false);
            for (std::size_t i = 0; i < v.size(); ++i)
                CHECK(v[i] == Catch::Approx(ref[i]).margin(1e-12));
        }
    }

    SECTION("random weights with attention normalizer") {
        const auto k = InteractionKernel::self_attention(1.3);
        const auto w = random_weights(state.n(), 7, true);
        const auto v = vector_field(state, k, w, NormalizerSpec::attention());
        const auto ref = reference_field(state, k, w, true);
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(v[i] == Catch::Approx(ref[i]).margin(1e-12));
    }

    SECTION("attention requires the exponential family") {
        auto h = InteractionKernel::hcos([](double) { return 1.0; }, [](double) { return 0.0; },
                                         [](double) { return 0.0; }, [](double) { return 0.0; });
        CHECK_THROWS_AS(vector_field(state, h, {}, NormalizerSpec::attention()),
                        UnsupportedKernel);
    }
}

TEST_CASE("energy closed forms and gradient identity") {
    SECTION("synchronized values") {
        const ParticleState s4(std::vector<double>(4, 0.9));
        CHECK(energy(s4, InteractionKernel::kuramoto()) == Catch::Approx(8.0).margin(1e-12));
        const ParticleState s5(std::vector<double>(5, 2.2));
        CHECK(energy(s5, InteractionKernel::self_attention(1.0)) ==
              Catch::Approx(12.5).margin(1e-12));
    }

    SECTION("asymmetric kernels have no energy") {
        const auto g = asymmetric_combine(InteractionKernel::kuramoto(), 2.0, 1.0);
        CHECK_THROWS_AS(energy(ParticleState::uniform_random(4, 1), g), UnsupportedKernel);
    }

    SECTION("directional derivative along the flow equals sum c g v^2 / w1") {
        const auto k = InteractionKernel::self_attention(0.7);
        const auto state = ParticleState::uniform_random(6, 31);
        struct Case {
            WeightSpec w;
            bool attention;
        };
        std::vector<Case> cases{{WeightSpec{}, false},
                                {random_weights(6, 5, false), false},
                                {random_weights(6, 11, true), true}};
        for (const auto& cs : cases) {
            const auto mode =
                cs.attention ? NormalizerSpec::attention() : NormalizerSpec::none();
            const auto v = vector_field(state, k, cs.w, mode);
            double expected = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                double g = 1.0;
                if (cs.attention) {
                    g = 0.0;
                    for (std::size_t j = 0; j < 6; ++j)
                        g += std::exp(0.7 * (std::cos(state.angles[i] - state.angles[j]) - 1.0));
                }
                expected += cs.w.c_at(i) * g * v[i] * v[i] / cs.w.w1_at(i);
            }
            const double eps = 1e-6;
            std::vector<double> plus = state.angles, minus = state.angles;
            for (std::size_t i = 0; i < 6; ++i) {
                plus[i] += eps * v[i];
                minus[i] -= eps * v[i];
            }
            const double fd = (energy(ParticleState(plus), k, cs.w) -
                               energy(ParticleState(minus), k, cs.w)) /
                              (2.0 * eps);
            CHECK(fd == Catch::Approx(expected).epsilon(1e-6));
        }
    }
}

TEST_CASE("integration terminal states") {
    const auto kur = InteractionKernel::kuramoto();
    SimConfig cfg;

    SECTION("synchronized start stops immediately") {
        const auto traj = integrate(ParticleState(std::vector<double>(5, 0.4)), kur, cfg);
        CHECK(traj.terminal_status == TerminalStatus::synchronized);
        REQUIRE(traj.times.size() == 1);
        CHECK(traj.times[0] == 0.0);
    }

    SECTION("a packed cluster synchronizes") {
        cfg.t_max = 100.0;
        const auto traj =
            integrate(ParticleState(std::vector<double>{0.0, 0.1, 0.2}), kur, cfg);
        CHECK(traj.terminal_status == TerminalStatus::synchronized);
        CHECK(circular_diameter(traj.final_state()) < cfg.sync_tol);
        CHECK(traj.t_final() < 100.0);
    }

    SECTION("a stationary nonsynchronized start is flagged") {
        const auto ce = build_counterexample(-1.0, 9);
        const auto traj = integrate(ce, InteractionKernel::self_attention(-1.0), cfg);
        CHECK(traj.terminal_status == TerminalStatus::stationary_nonsync);
        CHECK(traj.t_final() == 0.0);
    }

    SECTION("slow pair reaches t_max with the expected samples") {
        cfg.t_max = 1.0;
        cfg.sample_every = 0.3;
        const auto traj = integrate(ParticleState(std::vector<double>{0.0, kPi - 0.1}), kur, cfg);
        CHECK(traj.terminal_status == TerminalStatus::t_max_reached);
        REQUIRE(traj.times.size() == 5);
        const double expected[] = {0.0, 0.3, 0.6, 0.9, 1.0};
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(traj.times[i] == Catch::Approx(expected[i]).margin(1e-9));
        CHECK(traj.energies.size() == 5);
        CHECK(traj.diameters.size() == 5);
        CHECK(traj.energy_err_bound.size() == 5);
    }

    SECTION("invalid configuration is rejected") {
        cfg.t_max = 0.0;
        CHECK_THROWS_AS(integrate(ParticleState::uniform_random(4, 2), kur, cfg),
                        std::invalid_argument);
    }
}

TEST_CASE("equivariance of the flow") {
    const auto kur = InteractionKernel::kuramoto();
    SimConfig cfg;
    cfg.integrator = Integrator::rk4_fixed;
    cfg.dt = 0.01;
    cfg.t_max = 5.0;
    cfg.sync_tol = 1e-30;
    const auto init = ParticleState::uniform_random(8, 17);
    const auto base = integrate(init, kur, cfg);

    SECTION("rotation") {
        const double delta = 0.7;
        auto shifted = init.angles;
        for (double& x : shifted) x += delta;
        const auto rot = integrate(ParticleState(shifted), kur, cfg);
        REQUIRE(rot.final_state().n() == 8);
        for (std::size_t i = 0; i < 8; ++i) {
            const double d =
                wrap_difference(rot.final_state().angles[i] - base.final_state().angles[i]);
            CHECK(d == Catch::Approx(delta).margin(1e-9));
        }
    }

    SECTION("relabeling") {
        std::vector<double> perm(init.angles.rbegin(), init.angles.rend());
        const auto rev = integrate(ParticleState(perm), kur, cfg);
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(rev.final_state().angles[8 - 1 - i] ==
                  Catch::Approx(base.final_state().angles[i]).margin(1e-9));
    }
}

TEST_CASE("adaptive and fixed steppers agree") {
    const auto kur = InteractionKernel::kuramoto();
    const auto init = ParticleState::uniform_random(8, 23);

    SimConfig fixed;
    fixed.integrator = Integrator::rk4_fixed;
    fixed.dt = 1e-3;
    fixed.t_max = 2.0;
    fixed.sync_tol = 1e-30;

    SimConfig adaptive;
    adaptive.t_max = 2.0;
    adaptive.sync_tol = 1e-30;

    const auto a = integrate(init, kur, fixed);
    const auto b = integrate(init, kur, adaptive);
    REQUIRE(a.terminal_status == TerminalStatus::t_max_reached);
    REQUIRE(b.terminal_status == TerminalStatus::t_max_reached);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(wrap_difference(a.final_state().angles[i] - b.final_state().angles[i]) ==
              Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("energy is nondecreasing along trajectories") {
    int run = 0;
    for (double beta : {-0.5, 0.0, 2.0}) {
        const auto k = InteractionKernel::self_attention(beta);
        for (int variant = 0; variant < 4; ++variant) {
            ++run;
            const std::uint64_t seed = 100 + static_cast<std::uint64_t>(run);
            const auto init = ParticleState::uniform_random(16, seed);
            WeightSpec w;
            auto mode = NormalizerSpec::none();
            if (variant == 1) w = random_weights(16, seed, false);
            if (variant == 2) mode = NormalizerSpec::attention();
            if (variant == 3) {
                w = random_weights(16, seed, true);
                mode = NormalizerSpec::attention();
            }
            SimConfig cfg;
            cfg.t_max = 20.0;
            cfg.sample_every = 0.5;
            const auto traj = integrate(init, k, w, mode, cfg);
            REQUIRE(traj.energies.size() >= 2);
            for (std::size_t s = 1; s < traj.energies.size(); ++s) {
                const double slack =
                    10.0 * (traj.energy_err_bound[s] - traj.energy_err_bound[s - 1]) + 1e-12;
                INFO("beta = " << beta << " variant = " << variant << " sample " << s);
                CHECK(traj.energies[s] - traj.energies[s - 1] >= -slack);
            }
        }
    }
}

TEST_CASE("step size underflow is reported") {
    // Forces of order 1e200 make every trial step fail its error test, so the
    // controller shrinks dt until it gives up.
    auto stiff = InteractionKernel::hcos([](double) { return 1e200; }, [](double) { return 0.0; },
                                         [](double) { return 0.0; }, [](double) { return 0.0; });
    SimConfig cfg;
    cfg.t_max = 1.0;
    CHECK_THROWS_AS(integrate(ParticleState(std::vector<double>{0.0, 1.0, 2.0, 3.0}), stiff, cfg),
                    StepSizeUnderflow);
}

TEST_CASE("runs are reproducible") {
    const auto k = InteractionKernel::self_attention(1.0);
    SimConfig cfg;
    cfg.t_max = 3.0;
    const auto a = integrate(ParticleState::uniform_random(10, 555), k, cfg);
    const auto b = integrate(ParticleState::uniform_random(10, 555), k, cfg);
    REQUIRE(a.times.size() == b.times.size());
    CHECK(a.terminal_status == b.terminal_status);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(a.final_state().angles[i] == b.final_state().angles[i]);
}
