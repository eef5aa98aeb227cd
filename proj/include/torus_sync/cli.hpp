#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "torus_sync/io.hpp"

namespace tsync::cli {

struct HelpRequested {
    std::string text;
};

struct RunConfig {
    std::string subcommand;
    std::uint64_t seed = 0;
    bool json = false;
    std::string out; // empty: stdout

    std::string kernel_spec = "kuramoto";
    bool semicircle = false; // criterion/sweep: M = pi instead of 2*pi

    double beta_min = -1.0, beta_max = 10.0;
    int steps = 500;
    std::string svg;

    std::size_t n = 16;
    std::string init = "uniform"; // uniform | ngon | file:<path>
    bool normalized = false;
    bool dump_angles = false;
    std::string weights_file, w1_file, state_file;
    bool rk4 = false;
    SimConfig sim;
    double gap_threshold = 0.0; // 0: pi/(4 sqrt(beta)) for beta>0, else pi/4

    double beta = 0.0;
    int trials = 50;
    bool analyze_after = false;
    std::vector<double> times = {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
    std::string suite = "appendix";
    std::vector<double> grid;

    Tolerances tolerances;
};

inline RunConfig parse_args(const std::vector<std::string>& args) {
    RunConfig cfg;
    CLI::App app{"torus-sync: mean-field particle dynamics on the circle"};
    app.require_subcommand(1);
    app.add_option("--seed", cfg.seed, "RNG seed (64-bit)");
    app.add_flag("--json", cfg.json, "emit JSON instead of text/CSV");
    app.add_option("--out", cfg.out, "output path (default: stdout)");

    auto* criterion = app.add_subcommand("criterion", "evaluate the synchronization criterion");
    criterion->fallthrough();
    criterion->add_option("--kernel", cfg.kernel_spec, "kernel spec: kuramoto | sa:<beta> | asym:<a>:<b>:<spec>");
    criterion->add_flag("--m-semicircle", cfg.semicircle, "use M = pi instead of the default M = 2*pi");

    auto* sweep = app.add_subcommand("sweep", "criterion ratio over a beta grid (self-attention family)");
    sweep->fallthrough();
    sweep->add_option("--beta-min", cfg.beta_min, "grid start");
    sweep->add_option("--beta-max", cfg.beta_max, "grid end");
    sweep->add_option("--steps", cfg.steps, "number of grid points");
    sweep->add_flag("--m-semicircle", cfg.semicircle, "use M = pi");
    sweep->add_option("--svg", cfg.svg, "also write an SVG ratio chart to this path");

    auto* simulate = app.add_subcommand("simulate", "integrate the particle dynamics");
    simulate->fallthrough();
    simulate->add_option("--kernel", cfg.kernel_spec, "kernel spec");
    simulate->add_option("--n", cfg.n, "particle count");
    simulate->add_option("--init", cfg.init, "uniform | ngon | file:<path>");
    simulate->add_flag("--normalized", cfg.normalized, "attention-normalized velocities");
    simulate->add_option("--weights-file", cfg.weights_file, "c weights, one per line");
    simulate->add_option("--w1-file", cfg.w1_file, "w1 rates, one per line");
    simulate->add_flag("--rk4", cfg.rk4, "fixed-step classical RK4 instead of adaptive RK45");
    simulate->add_option("--dt", cfg.sim.dt, "fixed step size (rk4)");
    simulate->add_option("--dt-init", cfg.sim.dt_init, "initial step size (rk45)");
    simulate->add_option("--rtol", cfg.sim.rtol, "relative tolerance (rk45)");
    simulate->add_option("--atol", cfg.sim.atol, "absolute tolerance (rk45)");
    simulate->add_option("--t-max", cfg.sim.t_max, "time horizon");
    simulate->add_option("--sync-tol", cfg.sim.sync_tol, "stop when circular diameter drops below this");
    simulate->add_option("--sample-every", cfg.sim.sample_every, "sample interval (0: endpoints only)");
    simulate->add_option("--gap-threshold", cfg.gap_threshold, "cluster gap threshold (0: auto)");
    simulate->add_flag("--dump-angles", cfg.dump_angles, "append x_0..x_{n-1} columns to the output");

    auto* analyze = app.add_subcommand("analyze", "classify a stationary configuration");
    analyze->fallthrough();
    analyze->add_option("--kernel", cfg.kernel_spec, "kernel spec");
    analyze->add_option("--state-file", cfg.state_file, "angles, one per line")->required();
    analyze->add_flag("--normalized", cfg.normalized, "attention-normalized Jacobian");
    analyze->add_option("--weights-file", cfg.weights_file, "c weights, one per line");
    analyze->add_option("--w1-file", cfg.w1_file, "w1 rates, one per line");
    analyze->add_option("--residual-tol", cfg.tolerances.residual_tol, "stationarity residual gate");
    analyze->add_option("--merge-tol", cfg.tolerances.merge_tol, "cluster merge tolerance");
    analyze->add_option("--instability-tol", cfg.tolerances.instability_tol, "Jacobian eigenvalue gate");

    auto* mc = app.add_subcommand("mc", "Monte-Carlo synchronization study (self-attention family)");
    mc->fallthrough();
    mc->add_option("--kernel", cfg.kernel_spec, "kernel spec: kuramoto | sa:<beta>");
    mc->add_option("--n", cfg.n, "particle count");
    mc->add_option("--trials", cfg.trials, "number of random trials");
    mc->add_flag("--normalized", cfg.normalized, "attention-normalized velocities");
    auto* mc_tmax = mc->add_option("--t-max", cfg.sim.t_max, "per-trial time budget (default 1e6)");
    mc->add_option("--sync-tol", cfg.sim.sync_tol, "synchronization diameter threshold");

    auto* cex = app.add_subcommand("counterexample", "three-cluster stable stationary state, beta < -2/3");
    cex->fallthrough();
    cex->add_option("--beta", cfg.beta, "inverse temperature (< -2/3)")->required();
    cex->add_option("--n", cfg.n, "particle count")->required();
    cex->add_flag("--analyze", cfg.analyze_after, "append the stability report");

    auto* meta = app.add_subcommand("metastability", "cluster-count profile of one random run");
    meta->fallthrough();
    meta->add_option("--beta", cfg.beta, "inverse temperature (> 0)")->required();
    meta->add_option("--n", cfg.n, "particle count");
    meta->add_option("--times", cfg.times, "sample times, comma separated")->delimiter(',');

    auto* audit = app.add_subcommand("audit", "inequality audits behind the criterion");
    audit->fallthrough();
    audit->add_option("--suite", cfg.suite, "appendix | tau");
    audit->add_option("--grid", cfg.grid, "explicit beta grid, comma separated")->delimiter(',');

    std::vector<const char*> argv;
    argv.push_back("torus-sync");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested{app.help()};
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }
    cfg.subcommand = app.get_subcommands().front()->get_name();

    if (cfg.subcommand == "sweep") {
        if (!(cfg.beta_min <= cfg.beta_max)) throw UsageError("--beta-min must not exceed --beta-max");
        if (cfg.steps < 1) throw UsageError("--steps must be at least 1");
    }
    if (cfg.subcommand == "mc") {
        if (cfg.trials < 1) throw UsageError("--trials must be at least 1");
        if (mc_tmax->count() == 0) cfg.sim.t_max = 1e6;
    }
    if (cfg.subcommand == "metastability" && cfg.times.empty())
        throw UsageError("--times needs at least one sample time");
    if (cfg.subcommand == "audit" && cfg.suite != "appendix" && cfg.suite != "tau")
        throw UsageError("--suite must be 'appendix' or 'tau'");
    if (cfg.n < 1) throw UsageError("--n must be positive");
    if (cfg.init != "uniform" && cfg.init != "ngon" && cfg.init.rfind("file:", 0) != 0)
        throw UsageError("--init must be uniform, ngon, or file:<path>");

    auto must_exist = [](const std::string& path) {
        if (!path.empty() && !std::filesystem::exists(path))
            throw FileNotFound("no such file: '" + path + "'");
    };
    must_exist(cfg.state_file);
    must_exist(cfg.weights_file);
    must_exist(cfg.w1_file);
    if (cfg.init.rfind("file:", 0) == 0) must_exist(cfg.init.substr(5));

    cfg.sim.integrator = cfg.rk4 ? Integrator::rk4_fixed : Integrator::rk45_adaptive;
    cfg.sim.seed = cfg.seed;
    return cfg;
}

namespace detail {

inline double default_gap_threshold(const InteractionKernel& kernel) {
    if (kernel.exponential_family() && kernel.beta() > 0.0)
        return kPi / (4.0 * std::sqrt(kernel.beta()));
    return kPi / 4.0;
}

inline std::vector<double> linspace(double a, double b, int k) {
    std::vector<double> grid(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        grid[static_cast<std::size_t>(i)] =
            k == 1 ? a : a + (b - a) * static_cast<double>(i) / (k - 1);
    return grid;
}

inline std::vector<double> geomspace(double a, double b, int k) {
    std::vector<double> grid(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        grid[static_cast<std::size_t>(i)] =
            k == 1 ? a : a * std::pow(b / a, static_cast<double>(i) / (k - 1));
    return grid;
}

// Six per-regime grids; half-open regime ends stay strictly inside.
inline std::vector<double> appendix_grid(int per_regime) {
    std::vector<double> grid;
    auto append = [&](std::vector<double> part) {
        grid.insert(grid.end(), part.begin(), part.end());
    };
    append(linspace(-0.16, -1e-4, per_regime));
    append(linspace(0.0, 1.0 / 3.0, per_regime));
    append(linspace(1.0 / 3.0 + 1e-4, 0.5 - 1e-4, per_regime));
    append(linspace(0.5, 0.75 - 1e-4, per_regime));
    append(linspace(0.75, 1.0 - 1e-4, per_regime));
    append(linspace(1.0, 100.0, per_regime));
    return grid;
}

struct OutputStream {
    explicit OutputStream(const std::string& path) {
        if (!path.empty()) {
            file.open(path);
            if (!file) throw IoError("cannot write '" + path + "'");
        }
    }
    std::ostream& get() { return file.is_open() ? file : std::cout; }
    std::ofstream file;
};

inline WeightSpec load_weight_spec(const RunConfig& cfg) {
    WeightSpec weights;
    if (!cfg.weights_file.empty()) weights.c = io::load_weights(cfg.weights_file);
    if (!cfg.w1_file.empty()) weights.w1 = io::load_weights(cfg.w1_file);
    return weights;
}

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

} // namespace detail

inline int run_command(const RunConfig& cfg) {
    using detail::OutputStream;
    using io::Meta;

    if (cfg.subcommand == "criterion") {
        const auto kernel = io::parse_kernel(cfg.kernel_spec);
        const double M = cfg.semicircle ? kPi : kTwoPi;
        const auto report = check_criterion(kernel, M);
        const Meta meta{{"subcommand", "criterion"},
                        {"kernel", cfg.kernel_spec},
                        {"M", io::format_double(M)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::criterion_json(report, meta).dump(2) << "\n";
        else
            io::write_criterion_text(report, meta, out.get());
        return report.verdict == Verdict::holds ? 0 : 1;
    }

    if (cfg.subcommand == "sweep") {
        const double M = cfg.semicircle ? kPi : kTwoPi;
        const auto grid = detail::linspace(cfg.beta_min, cfg.beta_max, cfg.steps);
        const auto rows = ratio_sweep(grid, M);
        const Meta meta{{"subcommand", "sweep"},
                        {"beta_min", io::format_double(cfg.beta_min)},
                        {"beta_max", io::format_double(cfg.beta_max)},
                        {"steps", std::to_string(cfg.steps)},
                        {"M", io::format_double(M)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::sweep_json(rows, meta).dump(2) << "\n";
        else
            io::write_sweep_csv(rows, meta, out.get());
        if (!cfg.svg.empty()) {
            std::ofstream svg(cfg.svg);
            if (!svg) throw IoError("cannot write '" + cfg.svg + "'");
            io::write_sweep_svg(rows, meta, svg);
        }
        return 0;
    }

    if (cfg.subcommand == "simulate") {
        const auto kernel = io::parse_kernel(cfg.kernel_spec);
        const auto weights = detail::load_weight_spec(cfg);
        const auto normalizer =
            cfg.normalized ? NormalizerSpec::attention() : NormalizerSpec::none();
        ParticleState state;
        if (cfg.init == "uniform")
            state = ParticleState::uniform_random(cfg.n, cfg.seed);
        else if (cfg.init == "ngon")
            state = ParticleState::regular_ngon(cfg.n);
        else
            state = io::load_state(cfg.init.substr(5));
        const double gap =
            cfg.gap_threshold > 0.0 ? cfg.gap_threshold : detail::default_gap_threshold(kernel);
        const auto traj = integrate(state, kernel, weights, normalizer, cfg.sim);
        const Meta meta{{"subcommand", "simulate"},
                        {"kernel", cfg.kernel_spec},
                        {"n", std::to_string(state.n())},
                        {"init", cfg.init},
                        {"seed", std::to_string(cfg.seed)},
                        {"normalized", detail::bool_str(cfg.normalized)},
                        {"integrator", cfg.rk4 ? "rk4" : "rk45"},
                        {"t_max", io::format_double(cfg.sim.t_max)},
                        {"rtol", io::format_double(cfg.sim.rtol)},
                        {"atol", io::format_double(cfg.sim.atol)},
                        {"sync_tol", io::format_double(cfg.sim.sync_tol)},
                        {"sample_every", io::format_double(cfg.sim.sample_every)},
                        {"gap_threshold", io::format_double(gap)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::trajectory_json(traj, gap, cfg.dump_angles, meta).dump(2) << "\n";
        else
            io::write_trajectory_csv(traj, gap, cfg.dump_angles, meta, out.get());
        return 0;
    }

    if (cfg.subcommand == "analyze") {
        const auto kernel = io::parse_kernel(cfg.kernel_spec);
        const auto weights = detail::load_weight_spec(cfg);
        const auto normalizer =
            cfg.normalized ? NormalizerSpec::attention() : NormalizerSpec::none();
        const auto state = io::load_state(cfg.state_file);
        const auto report =
            classify_stationary_point(state, kernel, weights, normalizer, cfg.tolerances);
        const Meta meta{{"subcommand", "analyze"},
                        {"kernel", cfg.kernel_spec},
                        {"state_file", cfg.state_file},
                        {"n", std::to_string(state.n())},
                        {"normalized", detail::bool_str(cfg.normalized)},
                        {"residual_tol", io::format_double(cfg.tolerances.residual_tol)},
                        {"merge_tol", io::format_double(cfg.tolerances.merge_tol)},
                        {"instability_tol", io::format_double(cfg.tolerances.instability_tol)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::stationary_json(report, meta).dump(2) << "\n";
        else
            io::write_stationary_text(report, meta, out.get());
        return 0;
    }

    if (cfg.subcommand == "mc") {
        const auto kernel = io::parse_kernel(cfg.kernel_spec);
        if (!kernel.exponential_family())
            throw UsageError("mc runs over the self-attention family; use --kernel sa:<beta> or kuramoto");
        const auto normalizer =
            cfg.normalized ? NormalizerSpec::attention() : NormalizerSpec::none();
        const auto result =
            monte_carlo_sync(kernel.beta(), cfg.n, cfg.trials, normalizer, cfg.sim);
        const Meta meta{{"subcommand", "mc"},
                        {"kernel", cfg.kernel_spec},
                        {"seed", std::to_string(cfg.seed)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::experiment_json(result, meta).dump(2) << "\n";
        else
            io::write_experiment_csv(result, meta, out.get());
        return result.pass.value_or(false) ? 0 : 1;
    }

    if (cfg.subcommand == "counterexample") {
        const auto state = build_counterexample(cfg.beta, cfg.n);
        const auto kernel = InteractionKernel::self_attention(cfg.beta);
        Meta meta{{"subcommand", "counterexample"},
                  {"beta", io::format_double(cfg.beta)},
                  {"n", std::to_string(cfg.n)}};
        int code = 0;
        OutputStream out(cfg.out);
        if (cfg.analyze_after) {
            const auto report = classify_stationary_point(state, kernel);
            meta.emplace_back("residual", io::format_double(report.residual));
            meta.emplace_back("min_cut_margin", io::format_double(report.cut_margins.min_margin));
            meta.emplace_back("classification", to_string(report.classification));
            code = report.classification == Classification::stable_nonsynchronized ? 0 : 1;
            if (cfg.json) {
                auto obj = io::stationary_json(report, meta);
                obj["command"] = "counterexample";
                obj["angles"] = state.angles;
                out.get() << obj.dump(2) << "\n";
                return code;
            }
        } else if (cfg.json) {
            nlohmann::json obj{{"command", "counterexample"},
                               {"config", io::detail::meta_json(meta)},
                               {"angles", state.angles}};
            out.get() << obj.dump(2) << "\n";
            return code;
        }
        io::write_state(state, meta, out.get());
        return code;
    }

    if (cfg.subcommand == "metastability") {
        const auto result = metastability_profile(cfg.beta, cfg.n, cfg.seed, cfg.times);
        const Meta meta{{"subcommand", "metastability"}, {"seed", std::to_string(cfg.seed)}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::experiment_json(result, meta).dump(2) << "\n";
        else
            io::write_experiment_csv(result, meta, out.get());
        return 0;
    }

    if (cfg.subcommand == "audit") {
        ExperimentResult result;
        if (cfg.suite == "appendix")
            result = appendix_inequality_audit(cfg.grid.empty() ? detail::appendix_grid(100)
                                                                : cfg.grid);
        else
            result = tau_property_audit(cfg.grid.empty() ? detail::geomspace(0.1, 100.0, 200)
                                                         : cfg.grid);
        const Meta meta{{"subcommand", "audit"}, {"suite", cfg.suite}};
        OutputStream out(cfg.out);
        if (cfg.json)
            out.get() << io::experiment_json(result, meta).dump(2) << "\n";
        else
            io::write_experiment_csv(result, meta, out.get());
        return result.pass.value_or(false) ? 0 : 1;
    }

    throw UsageError("unknown subcommand '" + cfg.subcommand + "'");
}

inline int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    try {
        return run_command(parse_args(args));
    } catch (const HelpRequested& help) {
        std::cout << help.text;
        return 0;
    } catch (const FileNotFound& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace tsync::cli
