#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "torus_sync/criterion.hpp"
#include "torus_sync/dynamics.hpp"
#include "torus_sync/experiments.hpp"
#include "torus_sync/stability.hpp"

namespace tsync::io {

using Meta = std::vector<std::pair<std::string, std::string>>;

// 17 significant digits: enough for bit-exact double round trips.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline double parse_number(const std::string& text, const std::string& spec) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw InvalidKernelSpec("bad numeric field '" + text + "' in kernel spec '" + spec + "'");
    return value;
}

} // namespace detail

// Kernel specs: "kuramoto", "sa:<beta>", "asym:<a>:<b>:<inner spec>".
inline InteractionKernel parse_kernel(const std::string& spec) {
    if (spec == "kuramoto") return InteractionKernel::kuramoto();
    if (spec.rfind("sa:", 0) == 0)
        return InteractionKernel::self_attention(detail::parse_number(spec.substr(3), spec));
    if (spec.rfind("asym:", 0) == 0) {
        const std::string rest = spec.substr(5);
        const auto cut1 = rest.find(':');
        const auto cut2 = rest.find(':', cut1 == std::string::npos ? cut1 : cut1 + 1);
        if (cut1 == std::string::npos || cut2 == std::string::npos)
            throw InvalidKernelSpec("asym spec needs three fields: '" + spec + "'");
        const double a = detail::parse_number(rest.substr(0, cut1), spec);
        const double b = detail::parse_number(rest.substr(cut1 + 1, cut2 - cut1 - 1), spec);
        return asymmetric_combine(parse_kernel(rest.substr(cut2 + 1)), a, b);
    }
    throw InvalidKernelSpec("unrecognized kernel spec '" + spec + "'");
}

// One numeric value per line; blank lines and '#' comments skipped.
inline std::vector<double> load_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open '" + path + "'");
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos || line[begin] == '#') continue;
        std::size_t end = line.find_last_not_of(" \t\r") + 1;
        const std::string token = line.substr(begin, end - begin);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc{} || ptr != token.data() + token.size())
            throw IoError("'" + path + "' line " + std::to_string(line_no) +
                          ": expected a number, got '" + token + "'");
        values.push_back(value);
    }
    if (values.empty()) throw IoError("'" + path + "' holds no values");
    return values;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto cut = line.find(',', start);
        fields.push_back(line.substr(start, cut - start));
        if (cut == std::string::npos) break;
        start = cut + 1;
    }
    return fields;
}

} // namespace detail

// Accepts either one angle per line or a trajectory CSV carrying x_0..x_{n-1}
// columns (written with --dump-angles), in which case the final row is taken.
inline ParticleState load_state(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw FileNotFound("cannot open '" + path + "'");
    std::string line, header, last;
    while (std::getline(probe, line)) {
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos || line[begin] == '#') continue;
        if (header.empty())
            header = line;
        else
            last = line;
    }
    if (header.find(',') == std::string::npos) {
        ParticleState state(load_values(path));
        state.normalize();
        return state;
    }
    const auto names = detail::split_csv(header);
    std::vector<std::size_t> angle_cols;
    for (std::size_t c = 0; c < names.size(); ++c)
        if (names[c].rfind("x_", 0) == 0) angle_cols.push_back(c);
    if (angle_cols.empty())
        throw IoError("'" + path + "': CSV has no x_i angle columns");
    if (last.empty()) throw IoError("'" + path + "': CSV has no data rows");
    const auto fields = detail::split_csv(last);
    std::vector<double> angles;
    for (std::size_t c : angle_cols) {
        if (c >= fields.size()) throw IoError("'" + path + "': short CSV row");
        double value = 0.0;
        const auto& tok = fields[c];
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc{} || ptr != tok.data() + tok.size())
            throw IoError("'" + path + "': bad angle field '" + tok + "'");
        angles.push_back(value);
    }
    ParticleState state(std::move(angles));
    state.normalize();
    return state;
}

inline std::vector<double> load_weights(const std::string& path) {
    auto values = load_values(path);
    for (double w : values)
        if (!(w > 0.0)) throw InvalidWeights("'" + path + "' holds a non-positive weight");
    return values;
}

namespace detail {

inline void write_meta(const Meta& meta, std::ostream& os) {
    for (const auto& [key, value] : meta) os << "# " << key << "=" << value << "\n";
}

inline nlohmann::json meta_json(const Meta& meta) {
    auto obj = nlohmann::json::object();
    for (const auto& [key, value] : meta) obj[key] = value;
    return obj;
}

} // namespace detail

// ---- criterion ----------------------------------------------------------

inline nlohmann::json criterion_json(const CriterionReport& r, const Meta& meta) {
    return {{"command", "criterion"},
            {"config", detail::meta_json(meta)},
            {"report",
             {{"tau", r.tau},
              {"fp0", r.fp0},
              {"integral", r.integral_I},
              {"M", r.M},
              {"lhs", r.lhs},
              {"rhs", r.rhs},
              {"ratio", r.ratio},
              {"method_discrepancy", r.method_discrepancy},
              {"verdict", to_string(r.verdict)}}}};
}

inline void write_criterion_text(const CriterionReport& r, const Meta& meta, std::ostream& os) {
    detail::write_meta(meta, os);
    os << "tau                 " << format_double(r.tau) << "\n"
       << "fp0                 " << format_double(r.fp0) << "\n"
       << "integral            " << format_double(r.integral_I) << "\n"
       << "M                   " << format_double(r.M) << "\n"
       << "lhs                 " << format_double(r.lhs) << "\n"
       << "rhs                 " << format_double(r.rhs) << "\n"
       << "ratio               " << format_double(r.ratio) << "\n"
       << "method_discrepancy  " << format_double(r.method_discrepancy) << "\n"
       << "verdict             " << to_string(r.verdict) << "\n";
}

// ---- sweep --------------------------------------------------------------

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const Meta& meta,
                            std::ostream& os) {
    detail::write_meta(meta, os);
    os << "beta,tau,integral,lhs,rhs,ratio,verdict\n";
    for (const auto& row : rows) {
        os << format_double(row.beta) << ",";
        if (row.report) {
            const auto& r = *row.report;
            os << format_double(r.tau) << "," << format_double(r.integral_I) << ","
               << format_double(r.lhs) << "," << format_double(r.rhs) << ","
               << format_double(r.ratio) << "," << to_string(r.verdict) << "\n";
        } else {
            os << ",,,,,error\n";
        }
    }
}

inline nlohmann::json sweep_json(const std::vector<SweepRow>& rows, const Meta& meta) {
    auto arr = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json obj{{"beta", row.beta}};
        if (row.report) {
            const auto& r = *row.report;
            obj["tau"] = r.tau;
            obj["integral"] = r.integral_I;
            obj["lhs"] = r.lhs;
            obj["rhs"] = r.rhs;
            obj["ratio"] = r.ratio;
            obj["verdict"] = to_string(r.verdict);
        } else {
            obj["error"] = row.error;
        }
        arr.push_back(std::move(obj));
    }
    return {{"command", "sweep"}, {"config", detail::meta_json(meta)}, {"rows", std::move(arr)}};
}

// Ratio-vs-beta chart with a reference line at 1; well-formed XML.
inline void write_sweep_svg(const std::vector<SweepRow>& rows, const Meta& meta,
                            std::ostream& os) {
    const double width = 800, height = 600;
    const double ml = 80, mr = 25, mt = 25, mb = 60;
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = 0.0, y_hi = 1.0;
    for (const auto& row : rows) {
        x_lo = std::min(x_lo, row.beta);
        x_hi = std::max(x_hi, row.beta);
        if (row.report && std::isfinite(row.report->ratio)) {
            y_lo = std::min(y_lo, row.report->ratio);
            y_hi = std::max(y_hi, row.report->ratio);
        }
    }
    if (!std::isfinite(x_lo)) {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    y_hi += 0.05 * (y_hi - y_lo);
    auto px = [&](double b) { return ml + (b - x_lo) / (x_hi - x_lo) * (width - ml - mr); };
    auto py = [&](double r) {
        return height - mb - (r - y_lo) / (y_hi - y_lo) * (height - mt - mb);
    };
    auto tick_label = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };

    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<!--\n";
    for (const auto& [key, value] : meta) {
        std::string safe = key + "=" + value;
        for (std::size_t i = 0; i + 1 < safe.size(); ++i)
            if (safe[i] == '-' && safe[i + 1] == '-') safe[i + 1] = '_';
        os << safe << "\n";
    }
    os << "-->\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";

    const int n_ticks = 6;
    for (int i = 0; i < n_ticks; ++i) {
        const double frac = static_cast<double>(i) / (n_ticks - 1);
        const double bx = x_lo + frac * (x_hi - x_lo);
        const double ry = y_lo + frac * (y_hi - y_lo);
        os << "<line x1=\"" << px(bx) << "\" y1=\"" << height - mb << "\" x2=\"" << px(bx)
           << "\" y2=\"" << height - mb + 6 << "\" stroke=\"black\"/>\n"
           << "<text x=\"" << px(bx) << "\" y=\"" << height - mb + 22
           << "\" font-size=\"13\" text-anchor=\"middle\">" << tick_label(bx) << "</text>\n";
        os << "<line x1=\"" << ml - 6 << "\" y1=\"" << py(ry) << "\" x2=\"" << ml << "\" y2=\""
           << py(ry) << "\" stroke=\"black\"/>\n"
           << "<text x=\"" << ml - 10 << "\" y=\"" << py(ry) + 4
           << "\" font-size=\"13\" text-anchor=\"end\">" << tick_label(ry) << "</text>\n";
    }
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
       << height - mb << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
       << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 14
       << "\" font-size=\"15\" text-anchor=\"middle\">beta</text>\n";
    os << "<text x=\"20\" y=\"" << (mt + height - mb) / 2
       << "\" font-size=\"15\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
       << (mt + height - mb) / 2 << ")\">rhs / lhs</text>\n";

    if (1.0 >= y_lo && 1.0 <= y_hi)
        os << "<line x1=\"" << ml << "\" y1=\"" << py(1.0) << "\" x2=\"" << width - mr
           << "\" y2=\"" << py(1.0)
           << "\" stroke=\"#c02020\" stroke-dasharray=\"6 4\" stroke-width=\"1.2\"/>\n";

    std::vector<std::pair<double, double>> run;
    auto flush_run = [&]() {
        if (run.size() >= 2) {
            os << "<polyline fill=\"none\" stroke=\"#2050c0\" stroke-width=\"1.8\" points=\"";
            for (const auto& [x, y] : run) os << x << "," << y << " ";
            os << "\"/>\n";
        } else if (run.size() == 1) {
            os << "<circle cx=\"" << run[0].first << "\" cy=\"" << run[0].second
               << "\" r=\"2.5\" fill=\"#2050c0\"/>\n";
        }
        run.clear();
    };
    for (const auto& row : rows) {
        if (row.report && std::isfinite(row.report->ratio))
            run.emplace_back(px(row.beta), py(row.report->ratio));
        else
            flush_run();
    }
    flush_run();
    os << "</svg>\n";
}

// ---- states and trajectories ---------------------------------------------

// One angle per line; output is accepted back by load_state.
inline void write_state(const ParticleState& state, const Meta& meta, std::ostream& os) {
    detail::write_meta(meta, os);
    for (double x : state.angles) os << format_double(x) << "\n";
}

inline void write_trajectory_csv(const Trajectory& traj, double gap_threshold, bool dump_angles,
                                 const Meta& meta, std::ostream& os) {
    detail::write_meta(meta, os);
    os << "# terminal_status=" << to_string(traj.terminal_status) << "\n"
       << "# energy_err_bound="
       << format_double(traj.energy_err_bound.empty() ? 0.0 : traj.energy_err_bound.back())
       << "\n";
    os << "t,diameter,energy,cluster_count";
    if (dump_angles)
        for (std::size_t i = 0; i < traj.states.front().n(); ++i) os << ",x_" << i;
    os << "\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        os << format_double(traj.times[k]) << "," << format_double(traj.diameters[k]) << ","
           << format_double(traj.energies[k]) << ","
           << cluster_count(traj.states[k], gap_threshold);
        if (dump_angles)
            for (double x : traj.states[k].angles) os << "," << format_double(x);
        os << "\n";
    }
}

inline nlohmann::json trajectory_json(const Trajectory& traj, double gap_threshold,
                                      bool dump_angles, const Meta& meta) {
    auto samples = nlohmann::json::array();
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        nlohmann::json row{{"t", traj.times[k]},
                           {"diameter", traj.diameters[k]},
                           {"energy", traj.energies[k]},
                           {"cluster_count", cluster_count(traj.states[k], gap_threshold)}};
        if (dump_angles) row["angles"] = traj.states[k].angles;
        samples.push_back(std::move(row));
    }
    return {{"command", "simulate"},
            {"config", detail::meta_json(meta)},
            {"terminal_status", to_string(traj.terminal_status)},
            {"energy_err_bound",
             traj.energy_err_bound.empty() ? 0.0 : traj.energy_err_bound.back()},
            {"final_angles", traj.final_state().angles},
            {"samples", std::move(samples)}};
}

// ---- stationary-point reports -------------------------------------------

inline nlohmann::json stationary_json(const StationaryReport& r, const Meta& meta) {
    auto margins = nlohmann::json::array();
    for (const auto& e : r.cut_margins.entries)
        margins.push_back({{"cluster", e.cluster}, {"subset_size", e.subset_size},
                           {"margin", e.margin}});
    auto jac = nlohmann::json::array();
    for (const auto& z : r.jacobian_eigs) jac.push_back({z.real(), z.imag()});
    return {{"command", "analyze"},
            {"config", detail::meta_json(meta)},
            {"residual", r.residual},
            {"classification", to_string(r.classification)},
            {"clusters",
             {{"thetas", r.decomposition.thetas},
              {"multiplicities", r.decomposition.multiplicities},
              {"weights", r.decomposition.cluster_weights},
              {"gaps", r.decomposition.gaps},
              {"tau_max", r.decomposition.tau_max}}},
            {"gap_lemma_ok", r.gap_lemma_ok},
            {"cut_margins", {{"min_margin", r.cut_margins.min_margin},
                             {"entries", std::move(margins)}}},
            {"jacobian_eigs", std::move(jac)},
            {"hessian_eigs", r.hessian_eigs}};
}

inline void write_stationary_text(const StationaryReport& r, const Meta& meta,
                                  std::ostream& os) {
    detail::write_meta(meta, os);
    os << "residual        " << format_double(r.residual) << "\n"
       << "clusters        " << r.decomposition.K() << "\n";
    for (std::size_t i = 0; i < r.decomposition.K(); ++i)
        os << "  cluster " << i << "  theta=" << format_double(r.decomposition.thetas[i])
           << "  size=" << r.decomposition.multiplicities[i]
           << "  weight=" << format_double(r.decomposition.cluster_weights[i]) << "\n";
    os << "max_gap         " << format_double(r.decomposition.tau_max) << "\n"
       << "gap_lemma_ok    " << (r.gap_lemma_ok ? "true" : "false") << "\n"
       << "min_cut_margin  " << format_double(r.cut_margins.min_margin) << "\n";
    os << "jacobian_eigs  ";
    for (const auto& z : r.jacobian_eigs)
        os << " (" << format_double(z.real()) << "," << format_double(z.imag()) << ")";
    os << "\n";
    os << "hessian_eigs   ";
    for (double v : r.hessian_eigs) os << " " << format_double(v);
    os << "\n";
    os << "classification  " << to_string(r.classification) << "\n";
}

// ---- experiments --------------------------------------------------------

inline void write_experiment_csv(const ExperimentResult& result, const Meta& meta,
                                 std::ostream& os) {
    detail::write_meta(meta, os);
    for (const auto& [key, value] : result.parameters) os << "# " << key << "=" << value << "\n";
    if (result.pass) os << "# pass=" << (*result.pass ? "true" : "false") << "\n";
    for (std::size_t c = 0; c < result.columns.size(); ++c)
        os << (c ? "," : "") << result.columns[c];
    if (!result.tag_column.empty()) os << "," << result.tag_column;
    os << "\n";
    for (std::size_t k = 0; k < result.rows.size(); ++k) {
        const auto& row = result.rows[k];
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
        if (!result.tag_column.empty()) os << "," << result.row_tags[k];
        os << "\n";
    }
}

inline nlohmann::json experiment_json(const ExperimentResult& result, const Meta& meta) {
    nlohmann::json obj{{"command", result.name},
                       {"config", detail::meta_json(meta)},
                       {"columns", result.columns},
                       {"seed", result.seed}};
    auto params = nlohmann::json::object();
    for (const auto& [key, value] : result.parameters) params[key] = value;
    obj["parameters"] = std::move(params);
    obj["rows"] = result.rows;
    if (!result.tag_column.empty()) {
        obj["tag_column"] = result.tag_column;
        obj["tags"] = result.row_tags;
    }
    if (result.pass)
        obj["pass"] = *result.pass;
    else
        obj["pass"] = nullptr;
    return obj;
}

} // namespace tsync::io
