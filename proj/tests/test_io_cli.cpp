#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "torus_sync/cli.hpp"
#include "torus_sync/io.hpp"

using namespace tsync;

namespace {

const std::filesystem::path& tmp_dir() {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("tsync_io_cli_" + std::to_string(::getpid()));
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

std::filesystem::path tmp_file(const std::string& name) { return tmp_dir() / name; }

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path);
    os << content;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const auto out = tmp_file("cli_" + std::to_string(counter++) + ".out");
    const std::string cmd =
        std::string(TORUS_SYNC_BIN) + " " + args + " >" + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return {WEXITSTATUS(status), read_file(out)};
}

// Minimal XML well-formedness scan: balanced tags, comments and the
// declaration skipped.
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        if (text.compare(i, 4, "<!--") == 0) {
            const auto end = text.find("-->", i);
            if (end == std::string::npos) return false;
            i = end + 3;
            continue;
        }
        if (text.compare(i, 2, "<?") == 0) {
            const auto end = text.find("?>", i);
            if (end == std::string::npos) return false;
            i = end + 2;
            continue;
        }
        const auto close = text.find('>', i);
        if (close == std::string::npos) return false;
        std::string body = text.substr(i + 1, close - i - 1);
        i = close + 1;
        bool closing = false;
        if (!body.empty() && body.front() == '/') {
            closing = true;
            body.erase(0, 1);
        }
        bool self_closing = false;
        if (!body.empty() && body.back() == '/') {
            self_closing = true;
            body.pop_back();
        }
        const std::string name = body.substr(0, body.find_first_of(" \t\n"));
        if (name.empty()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(name);
        }
    }
    return stack.empty();
}

} // namespace

TEST_CASE("kernel spec parsing") {
    const auto sa = io::parse_kernel("sa:2");
    CHECK(sa.exponential_family());
    CHECK(sa.beta() == 2.0);
    CHECK(io::parse_kernel("sa:-0.5").beta() == -0.5);

    const auto kur = io::parse_kernel("kuramoto");
    CHECK(kur.eval(1.0) == Catch::Approx(std::sin(1.0)).margin(1e-15));

    const auto nested = io::parse_kernel("asym:1:2:kuramoto");
    for (double x = -3.0; x <= 3.0; x += 0.7)
        CHECK(nested.eval(x) == Catch::Approx(3.0 * std::sin(x)).margin(1e-13));

    CHECK_THROWS_AS(io::parse_kernel("sa:abc"), InvalidKernelSpec);
    CHECK_THROWS_AS(io::parse_kernel("sa:"), InvalidKernelSpec);
    CHECK_THROWS_AS(io::parse_kernel("asym:1:2"), InvalidKernelSpec);
    CHECK_THROWS_AS(io::parse_kernel("xyz"), InvalidKernelSpec);
    CHECK_THROWS_AS(io::parse_kernel(""), InvalidKernelSpec);
    CHECK_THROWS_AS(io::parse_kernel("asym:1:-2:kuramoto"), InvalidWeights);
}

TEST_CASE("doubles survive the text round trip") {
    for (double x : {3.141592653589793, 1.0 / 3.0, 1e-300, 0.0, -2.5e17, 6.02e23}) {
        const std::string s = io::format_double(x);
        CHECK(std::strtod(s.c_str(), nullptr) == x);
    }
}

TEST_CASE("value and state loaders") {
    SECTION("comments and blanks are skipped") {
        const auto p = tmp_file("values.txt");
        write_file(p, "# header\n1.5\n\n  # indented comment\n-0.25\n");
        const auto vals = io::load_values(p.string());
        REQUIRE(vals.size() == 2);
        CHECK(vals[0] == 1.5);
        CHECK(vals[1] == -0.25);
    }

    SECTION("failure modes") {
        const auto p = tmp_file("garbage.txt");
        write_file(p, "1.0\nnot-a-number\n");
        CHECK_THROWS_AS(io::load_values(p.string()), IoError);
        CHECK_THROWS_AS(io::load_values((tmp_dir() / "missing.txt").string()), FileNotFound);
    }

    SECTION("weights must be positive") {
        const auto p = tmp_file("weights.txt");
        write_file(p, "1.0\n0.0\n");
        CHECK_THROWS_AS(io::load_weights(p.string()), InvalidWeights);
    }

    SECTION("states wrap into [0, 2pi)") {
        const auto p = tmp_file("state.txt");
        write_file(p, "-1.0\n7.0\n");
        const auto s = io::load_state(p.string());
        REQUIRE(s.n() == 2);
        CHECK(s.angles[0] == Catch::Approx(kTwoPi - 1.0).margin(1e-14));
        CHECK(s.angles[1] == Catch::Approx(7.0 - kTwoPi).margin(1e-14));
    }

    SECTION("trajectory CSVs load their final row") {
        const auto p = tmp_file("traj_state.csv");
        write_file(p, "# kernel=kuramoto\nt,diameter,energy,cluster_count,x_0,x_1\n"
                      "0,1,2,1,0.25,0.75\n"
                      "1,0.5,2.5,1,0.375,0.625\n");
        const auto s = io::load_state(p.string());
        REQUIRE(s.n() == 2);
        CHECK(s.angles[0] == 0.375);
        CHECK(s.angles[1] == 0.625);
    }
}

TEST_CASE("sweep serialization") {
    std::vector<SweepRow> rows;
    rows.push_back({0.0, check_criterion(InteractionKernel::kuramoto(), kPi), ""});
    rows.push_back({2.0, check_criterion(InteractionKernel::self_attention(2.0), kPi), ""});
    SweepRow broken;
    broken.beta = -5.0;
    broken.error = "region structure not trusted";
    rows.push_back(broken);

    SECTION("CSV schema") {
        std::ostringstream os;
        io::write_sweep_csv(rows, {{"M", "pi"}}, os);
        const std::string text = os.str();
        CHECK(text.find("# M=pi\n") != std::string::npos);
        CHECK(text.find("beta,tau,integral,lhs,rhs,ratio,verdict\n") != std::string::npos);
        CHECK(text.find(",,,,,error\n") != std::string::npos);
        CHECK(text.find("holds") != std::string::npos);

        std::ostringstream empty;
        io::write_sweep_csv({}, {}, empty);
        CHECK(empty.str() == "beta,tau,integral,lhs,rhs,ratio,verdict\n");
    }

    SECTION("JSON parse-back") {
        const auto doc = io::sweep_json(rows, {{"M", "pi"}});
        const auto parsed = nlohmann::json::parse(doc.dump());
        REQUIRE(parsed["rows"].size() == 3);
        CHECK(parsed["rows"][0]["ratio"].get<double>() ==
              Catch::Approx(6.0 / kPi).margin(1e-12));
        CHECK(parsed["rows"][1]["verdict"] == "holds");
        CHECK(parsed["rows"][2]["error"] == "region structure not trusted");
        CHECK(parsed["config"]["M"] == "pi");
    }

    SECTION("SVG output is well-formed XML") {
        std::ostringstream os;
        io::write_sweep_svg(rows, {{"note", "has -- dashes"}}, os);
        const std::string svg = os.str();
        CHECK(xml_well_formed(svg));
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("stroke-dasharray") != std::string::npos);
        // Double dashes in metadata must be munged inside the XML comment.
        const auto c0 = svg.find("<!--");
        const auto c1 = svg.find("-->");
        REQUIRE(c0 != std::string::npos);
        REQUIRE(c1 != std::string::npos);
        const std::string comment = svg.substr(c0 + 4, c1 - c0 - 4);
        CHECK(comment.find("--") == std::string::npos);
        CHECK(comment.find("-_") != std::string::npos);

        std::ostringstream single;
        io::write_sweep_svg({rows[0]}, {}, single);
        CHECK(xml_well_formed(single.str()));
        CHECK(single.str().find("<circle") != std::string::npos);
    }
}

TEST_CASE("report serialization") {
    SECTION("criterion text and JSON") {
        const auto r = check_criterion(InteractionKernel::self_attention(2.0), kPi);
        std::ostringstream os;
        io::write_criterion_text(r, {{"kernel", "sa:2"}}, os);
        CHECK(os.str().find("ratio") != std::string::npos);
        CHECK(os.str().find("holds") != std::string::npos);

        const auto parsed = nlohmann::json::parse(io::criterion_json(r, {}).dump());
        CHECK(parsed["report"]["ratio"].get<double>() ==
              Catch::Approx(1.48649954409).margin(1e-6));
        CHECK(parsed["report"]["verdict"] == "holds");
        CHECK(parsed["report"]["tau"].get<double>() == Catch::Approx(r.tau));
    }

    SECTION("trajectory CSV and JSON") {
        SimConfig cfg;
        cfg.t_max = 1.0;
        cfg.sample_every = 0.5;
        const auto traj = integrate(ParticleState(std::vector<double>{0.0, kPi - 0.1}),
                                    InteractionKernel::kuramoto(), cfg);
        std::ostringstream os;
        io::write_trajectory_csv(traj, kPi / 4.0, true, {{"kernel", "kuramoto"}}, os);
        const auto text = os.str();
        CHECK(text.find("t,diameter,energy,cluster_count,x_0,x_1\n") != std::string::npos);
        CHECK(text.find("# terminal_status=t_max_reached") != std::string::npos);
        CHECK(text.find("# energy_err_bound=") != std::string::npos);

        const auto parsed =
            nlohmann::json::parse(io::trajectory_json(traj, kPi / 4.0, false, {}).dump());
        CHECK(parsed["terminal_status"] == "t_max_reached");
        REQUIRE(parsed["final_angles"].size() == 2);
        CHECK(parsed["samples"].size() == traj.times.size());
        CHECK_FALSE(parsed["samples"][0].contains("angles"));
    }

    SECTION("stationary report text and JSON") {
        const auto report = classify_stationary_point(ParticleState::regular_ngon(3),
                                                      InteractionKernel::kuramoto());
        std::ostringstream os;
        io::write_stationary_text(report, {}, os);
        CHECK(os.str().find("locally_unstable") != std::string::npos);

        const auto parsed = nlohmann::json::parse(io::stationary_json(report, {}).dump());
        CHECK(parsed["classification"] == "locally_unstable");
        CHECK(parsed["clusters"]["thetas"].size() == 3);
        CHECK(parsed["clusters"]["multiplicities"] == nlohmann::json::array({1, 1, 1}));
        REQUIRE(parsed["jacobian_eigs"].size() == 3);
        CHECK(parsed["jacobian_eigs"][0].size() == 2); // [re, im]
        CHECK(parsed["hessian_eigs"].size() == 3);
        CHECK(parsed["cut_margins"]["min_margin"].get<double>() < 0.0);
        CHECK(parsed["gap_lemma_ok"].is_boolean());
    }

    SECTION("experiment CSV and JSON") {
        SimConfig cfg;
        cfg.seed = 2;
        cfg.t_max = 50.0;
        const auto result = monte_carlo_sync(0.0, 6, 3, NormalizerSpec::none(), cfg);
        std::ostringstream os;
        io::write_experiment_csv(result, {{"subcommand", "mc"}}, os);
        const auto text = os.str();
        CHECK(text.find("trial,diameter,t_final,status\n") != std::string::npos);
        CHECK(text.find("# pass=true") != std::string::npos);
        CHECK(text.find("synchronized") != std::string::npos);

        const auto parsed = nlohmann::json::parse(io::experiment_json(result, {}).dump());
        CHECK(parsed["pass"].get<bool>());
        CHECK(parsed["rows"].size() == 3);
        CHECK(parsed["tags"].size() == 3);
    }
}

TEST_CASE("command line exit codes") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("criterion --help").exit_code == 0);

    const auto ok = run_cli("criterion --kernel sa:2");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("holds") != std::string::npos);

    const auto fails = run_cli("criterion --kernel sa:-1 --m-semicircle");
    CHECK(fails.exit_code == 1);
    CHECK(fails.output.find("fails") != std::string::npos);

    CHECK(run_cli("criterion --kernel sa:abc").exit_code == 2);
    CHECK(run_cli("criterion --bogus-flag").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("sweep --beta-min 1 --beta-max 0").exit_code == 2);
    CHECK(run_cli("analyze --kernel kuramoto --state-file /nonexistent/state.txt").exit_code ==
          2);
    CHECK(run_cli("counterexample --beta 1 --n 9").exit_code == 2);
    CHECK(run_cli("counterexample --beta -1 --n 10").exit_code == 3);
    CHECK(run_cli("audit --suite bogus").exit_code == 2);
}

TEST_CASE("command line workflows") {
    SECTION("sweep writes CSV and SVG") {
        const auto csv = tmp_file("sweep.csv");
        const auto svg = tmp_file("sweep.svg");
        const auto r = run_cli("sweep --beta-min -0.3 --beta-max 2 --steps 12 --m-semicircle"
                               " --out " + csv.string() + " --svg " + svg.string());
        CHECK(r.exit_code == 0);
        const auto text = read_file(csv);
        CHECK(text.find("beta,tau,integral,lhs,rhs,ratio,verdict") != std::string::npos);
        int data_lines = 0;
        std::istringstream is(text);
        for (std::string line; std::getline(is, line);)
            if (!line.empty() && line[0] != '#' && line.find("beta,") != 0) ++data_lines;
        CHECK(data_lines == 12);
        CHECK(xml_well_formed(read_file(svg)));
    }

    SECTION("simulate round trip via --dump-angles") {
        const auto init = tmp_file("init.txt");
        write_file(init, "0.1\n2.0\n4.0\n");
        const auto csv = tmp_file("traj.csv");
        const std::string common = "simulate --kernel sa:1 --init file:" + init.string() +
                                   " --t-max 1 --sample-every 0.25 --dump-angles";
        const auto r1 = run_cli(common + " --out " + csv.string());
        CHECK(r1.exit_code == 0);

        const auto json_out = tmp_file("traj.json");
        const auto r2 = run_cli(common + " --json --out " + json_out.string());
        CHECK(r2.exit_code == 0);

        const auto reloaded = io::load_state(csv.string());
        const auto doc = nlohmann::json::parse(read_file(json_out));
        const auto final_angles = doc["final_angles"].get<std::vector<double>>();
        REQUIRE(reloaded.n() == 3);
        REQUIRE(final_angles.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(reloaded.angles[i] == final_angles[i]);
    }

    SECTION("simulate detects a stationary start") {
        const auto r = run_cli("simulate --kernel kuramoto --n 5 --init ngon --t-max 1");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("terminal_status=stationary_nonsync") != std::string::npos);
    }

    SECTION("fixed-step integrator flag") {
        CHECK(run_cli("simulate --kernel sa:1 --n 6 --seed 3 --rk4 --dt 0.01 --t-max 2")
                  .exit_code == 0);
    }

    SECTION("weights file validation") {
        const auto w = tmp_file("neg_weights.txt");
        write_file(w, "1.0\n-1.0\n2.0\n");
        const auto r = run_cli("simulate --kernel sa:1 --n 3 --seed 1 --weights-file " +
                               w.string() + " --t-max 1");
        CHECK(r.exit_code == 2);
    }

    SECTION("analyze classifies an n-gon") {
        const auto state = tmp_file("ngon.txt");
        std::ostringstream ss;
        for (int i = 0; i < 3; ++i) ss << io::format_double(kTwoPi * i / 3.0) << "\n";
        write_file(state, ss.str());
        const auto r = run_cli("analyze --kernel kuramoto --state-file " + state.string());
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("locally_unstable") != std::string::npos);

        const auto rj =
            run_cli("analyze --kernel kuramoto --state-file " + state.string() + " --json");
        CHECK(rj.exit_code == 0);
        const auto doc = nlohmann::json::parse(rj.output);
        CHECK(doc["classification"] == "locally_unstable");
    }

    SECTION("counterexample emits a loadable state") {
        const auto out = tmp_file("ce.txt");
        const auto r = run_cli("counterexample --beta -1 --n 9 --out " + out.string());
        CHECK(r.exit_code == 0);
        const auto s = io::load_state(out.string());
        REQUIRE(s.n() == 9);
        CHECK(stationarity_residual(s, InteractionKernel::self_attention(-1.0)) < 1e-12);

        const auto ra = run_cli("counterexample --beta -1 --n 9 --analyze");
        CHECK(ra.exit_code == 0);
        CHECK(ra.output.find("stable_nonsynchronized") != std::string::npos);
    }

    SECTION("monte carlo pass and fail exit codes") {
        const auto pass = run_cli("mc --kernel sa:0 --n 8 --trials 5 --t-max 50 --seed 4");
        CHECK(pass.exit_code == 0);
        CHECK(pass.output.find("# pass=true") != std::string::npos);

        const auto fail = run_cli("mc --kernel sa:-1 --n 9 --trials 4 --t-max 0.01 --seed 4");
        CHECK(fail.exit_code == 1);
        CHECK(fail.output.find("t_max_reached") != std::string::npos);

        CHECK(run_cli("mc --kernel asym:1:1:kuramoto --n 4 --trials 2").exit_code == 2);
    }

    SECTION("audit subcommand") {
        const auto r = run_cli("audit --suite appendix --grid 0,0.5,2 --json");
        CHECK(r.exit_code == 0);
        const auto doc = nlohmann::json::parse(r.output);
        CHECK(doc["pass"].get<bool>());
        CHECK(doc["rows"].size() == 3);
        CHECK(run_cli("audit --suite tau --grid 1,2,3").exit_code == 0);
    }

    SECTION("metastability subcommand") {
        const auto r = run_cli("metastability --beta 50 --n 12 --times 0,0.5 --seed 4");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("t,cluster_count,diameter,energy") != std::string::npos);
    }
}
