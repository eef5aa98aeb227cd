#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "torus_sync/kernel.hpp"
#include "torus_sync/parallel.hpp"

namespace tsync {

enum class Verdict { holds, fails };

inline const char* to_string(Verdict v) { return v == Verdict::holds ? "holds" : "fails"; }

// The synchronization criterion: every stable stationary point of the
// dynamics is synchronized whenever
//     tau * I  <=  4 (1 + tau/M) f'(0),      I = integral of |f'''|_+,
// with M = 2pi always admissible and M = pi admissible for the families
// handled here. ratio = rhs/lhs, so ratio >= 1 certifies synchronization.
struct CriterionReport {
    double tau = 0.0;
    double fp0 = 0.0;
    double integral_I = 0.0;
    double M = kTwoPi;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    Verdict verdict = Verdict::fails;
    double method_discrepancy = 0.0;
};

inline CriterionReport check_criterion(const InteractionKernel& kernel, double M = kTwoPi) {
    if (!(M > 0.0) || M > kTwoPi) throw UsageError("criterion requires M in (0, 2pi]");
    if (kernel.fp0() <= 0.0) throw NoValidTau("criterion requires f'(0) > 0");
    CriterionReport r;
    r.M = M;
    r.fp0 = kernel.fp0();
    r.tau = tau(kernel);
    r.integral_I = l1_f3_plus(kernel, IntegralMethod::region_antiderivative);
    const double quad = l1_f3_plus(kernel, IntegralMethod::quadrature);
    r.method_discrepancy = std::abs(r.integral_I - quad);
    r.lhs = r.tau * r.integral_I;
    r.rhs = 4.0 * (1.0 + r.tau / M) * r.fp0;
    r.ratio = r.lhs > 0.0 ? r.rhs / r.lhs : std::numeric_limits<double>::infinity();
    r.verdict = r.lhs <= r.rhs ? Verdict::holds : Verdict::fails;
    return r;
}

struct SweepRow {
    double beta = 0.0;
    std::optional<CriterionReport> report;
    std::string error; // non-empty when the row failed; the sweep continues
};

// One criterion report per beta over the self-attention family, in grid
// order. Rows are independent and evaluated in parallel.
inline std::vector<SweepRow> ratio_sweep(const std::vector<double>& beta_grid,
                                         double M = kTwoPi) {
    return parallel_map<SweepRow>(beta_grid.size(), [&](std::size_t i) {
        SweepRow row;
        row.beta = beta_grid[i];
        try {
            row.report = check_criterion(InteractionKernel::self_attention(beta_grid[i]), M);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    });
}

// Bisection for the crossing ratio(beta) = 1 of the self-attention family,
// to 1e-4 on beta.
inline double find_criterion_boundary(double M, std::pair<double, double> bracket) {
    auto g = [M](double beta) {
        return check_criterion(InteractionKernel::self_attention(beta), M).ratio - 1.0;
    };
    const double glo = g(bracket.first);
    const double ghi = g(bracket.second);
    if (glo == 0.0) return bracket.first;
    if (ghi == 0.0) return bracket.second;
    if ((glo > 0.0) == (ghi > 0.0))
        throw NoSignChange("ratio - 1 has equal signs at both bracket endpoints");
    return bisect_secant(g, bracket.first, bracket.second, 1e-4);
}

} // namespace tsync
