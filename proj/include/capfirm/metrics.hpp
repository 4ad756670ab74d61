#pragma once

// Remuneration and penalty arithmetic, the indicator suite, the BESS capacity
// sweep and storage sizing.

#include "capfirm/domain.hpp"
#include "capfirm/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace capfirm::metrics {

/// pi_e * max(0, |e* - e| - deadband)^2
inline double penalty(double e_star, double e, double deadband, double slack_price) {
    const double h = std::max(0.0, std::abs(e_star - e) - deadband);
    return slack_price * h * h;
}

/// price * e_measured - penalty
inline double net_remuneration(double e_star, double e_measured, double price, double deadband, double slack_price) {
    return price * e_measured - penalty(e_star, e_measured, deadband, slack_price);
}

struct IndicatorTable {
    double production_total_mwh = 0.0; // [P]^D
    double production_ratio = 0.0;     // %, [P]^D / [P^m]^D
    double charge_ratio = 0.0;         // %, [P^cha]^D / [P]^D
    std::optional<double> full_bess_days_ratio; // %, empty without storage
    double export_ratio = 0.0;         // %, [e]^D / [e*]^D
    double measured_total_mwh = 0.0;   // [P^m]^D
    double r_max = 0.0;                // k-money
    double gross_revenue = 0.0;        // k-money
    double revenue_ratio = 0.0;        // %
    double penalty_total = 0.0;        // k-money
    double net_revenue = 0.0;          // k-money
    double objective_eval = 0.0;       // k-money, sum of J^eval
    double mean_cpu_time_s = 0.0;      // planner solve time per day
    int days = 0;
};

inline double ratio_pct(double num, double den) { return den > 0.0 ? 100.0 * num / den : 0.0; }

/// Full-storage day: max_t s_t within 1e-6 kWh of the capacity.
inline constexpr double kFullStorageTolKwh = 1e-6;

inline IndicatorTable compute_indicators(const evaluator::SimulationReport& report, const PvTrace& trace,
                                         const TenderParams& params) {
    const int T = params.periods_per_day;
    const auto days = market_days(trace, T);
    if (days.size() != report.days.size())
        fail(ErrorCode::DayMismatch, "report has " + std::to_string(report.days.size()) + " days, trace has " +
                                         std::to_string(days.size()));
    const double dt = params.period_duration_h;
    IndicatorTable ind;
    ind.days = static_cast<int>(days.size());
    double p_tot = 0.0, pm_tot = 0.0, cha_tot = 0.0, e_tot = 0.0, es_tot = 0.0, pen = 0.0, cpu = 0.0, jeval = 0.0;
    int full_days = 0;
    for (std::size_t d = 0; d < days.size(); ++d) {
        const auto& out = report.days[d];
        const auto& r = out.dispatch;
        if (r.day_index != days[d].day_index || r.exports.size() != static_cast<std::size_t>(T))
            fail(ErrorCode::DayMismatch, "report day " + std::to_string(r.day_index) + " does not match the trace");
        double smax = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto k = static_cast<std::size_t>(t);
            p_tot += r.production[k] * dt;
            cha_tot += r.charge[k] * dt;
            e_tot += r.exports[k];
            es_tot += r.e_star[k];
            pm_tot += trace.values[static_cast<std::size_t>(days[d].first_period + t)] * dt;
            pen += penalty(r.e_star[k], r.exports[k], params.energy_deadband_kwh, params.slack_price);
            smax = std::max(smax, r.soc[k]);
        }
        if (report.bess.capacity_max_kwh > 0.0 && smax >= report.bess.capacity_max_kwh - kFullStorageTolKwh) ++full_days;
        cpu += out.nominations.solve_time_s;
        jeval += r.objective_eval;
    }
    ind.production_total_mwh = p_tot / 1000.0;
    ind.measured_total_mwh = pm_tot / 1000.0;
    ind.production_ratio = ratio_pct(p_tot, pm_tot);
    ind.charge_ratio = ratio_pct(cha_tot, p_tot);
    if (report.bess.capacity_max_kwh > 0.0) ind.full_bess_days_ratio = ratio_pct(full_days, static_cast<double>(days.size()));
    ind.export_ratio = ratio_pct(e_tot, es_tot);
    ind.r_max = params.selling_price * pm_tot / 1000.0;
    ind.gross_revenue = params.selling_price * e_tot / 1000.0;
    ind.revenue_ratio = ratio_pct(ind.gross_revenue, ind.r_max);
    ind.penalty_total = pen / 1000.0;
    ind.net_revenue = ind.gross_revenue - ind.penalty_total;
    ind.objective_eval = jeval / 1000.0;
    ind.mean_cpu_time_s = days.empty() ? 0.0 : cpu / static_cast<double>(days.size());
    return ind;
}

/// 15 years of 12 months: the horizon over which one simulated month is counted.
inline constexpr double kDefaultHorizonMonths = 15.0 * 12.0;

/// months * (R_i - R_base)
inline double delta_net_revenue(double net_revenue, double baseline_net_revenue,
                                double horizon_months = kDefaultHorizonMonths) {
    return horizon_months * (net_revenue - baseline_net_revenue);
}

struct BessSweepRow {
    int case_id = 0;
    BessSpec bess;
    IndicatorTable indicators;
    double delta_net_revenue = 0.0; // k-money
};

/// The five storage cases of the case study, largest first; the last one has no storage.
inline std::vector<BessSpec> default_bess_cases() {
    std::vector<BessSpec> cases;
    for (double cap : {2000.0, 1000.0, 500.0, 250.0, 0.0}) {
        BessSpec b;
        b.capacity_max_kwh = cap;
        b.capacity_min_kwh = 0.0;
        b.charge_power_max_kw = cap;
        b.discharge_power_max_kw = cap;
        cases.push_back(b);
    }
    return cases;
}

inline bool is_baseline(const BessSpec& b) { return b.capacity_max_kwh == 0.0; }

/// Fills delta_net_revenue against the zero-capacity row.
inline void apply_baseline(std::vector<BessSweepRow>& rows, double horizon_months = kDefaultHorizonMonths) {
    const auto base = std::find_if(rows.begin(), rows.end(), [](const BessSweepRow& r) { return is_baseline(r.bess); });
    if (base == rows.end()) fail(ErrorCode::MissingBaseline, "sweep has no zero-capacity case");
    const double ref = base->indicators.net_revenue;
    for (auto& r : rows)
        r.delta_net_revenue = is_baseline(r.bess) ? 0.0 : delta_net_revenue(r.indicators.net_revenue, ref, horizon_months);
}

struct SweepRun {
    std::vector<BessSweepRow> rows;
    std::vector<evaluator::SimulationReport> reports;
};

/// One simulation per case with the same seeds.
inline SweepRun bess_sweep(const PvTrace& trace, const std::vector<BessSpec>& cases,
                           const evaluator::SimulationConfig& cfg, const TenderParams& params,
                           const PvTrace* forecast = nullptr, double horizon_months = kDefaultHorizonMonths) {
    if (std::none_of(cases.begin(), cases.end(), is_baseline))
        fail(ErrorCode::MissingBaseline, "sweep has no zero-capacity case");
    SweepRun run;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        auto report = evaluator::simulate_dataset(trace, cfg, params, cases[i], forecast);
        BessSweepRow row;
        row.case_id = static_cast<int>(i) + 1;
        row.bess = cases[i];
        row.indicators = compute_indicators(report, trace, params);
        run.rows.push_back(row);
        run.reports.push_back(std::move(report));
    }
    apply_baseline(run.rows, horizon_months);
    return run;
}

struct SizingResult {
    double size_kwh = 0.0;
    // Local quadratic dR(S) = a S^2 + b S + c used for the answer.
    double a = 0.0, b = 0.0, c = 0.0;
    double span_lo = 0.0, span_hi = 0.0;
    double break_even_capex = 0.0; // dR/dS at the smallest capacity
    // Least-squares quadratic through every point, for reference.
    double ls_a = 0.0, ls_b = 0.0, ls_c = 0.0;
};

namespace detail {

struct Quadratic {
    double a = 0.0, b = 0.0, c = 0.0;
    [[nodiscard]] double slope(double x) const { return 2.0 * a * x + b; }
};

inline Quadratic through(double x0, double y0, double x1, double y1, double x2, double y2) {
    const double s01 = (y1 - y0) / (x1 - x0);
    const double s12 = (y2 - y1) / (x2 - x1);
    Quadratic q;
    q.a = (s12 - s01) / (x2 - x0);
    q.b = s01 - q.a * (x0 + x1);
    q.c = y0 - q.a * x0 * x0 - q.b * x0;
    return q;
}

// Normal equations in (x / scale) for conditioning.
inline Quadratic least_squares(const std::vector<std::pair<double, double>>& pts) {
    double scale = 0.0;
    for (const auto& [x, y] : pts) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) scale = 1.0;
    double m[3][4] = {};
    for (const auto& [x, y] : pts) {
        const double u = x / scale;
        const double phi[3] = {u * u, u, 1.0};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m[i][j] += phi[i] * phi[j];
            m[i][3] += phi[i] * y;
        }
    }
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        std::swap(m[col], m[piv]);
        for (int r = 0; r < 3; ++r) {
            if (r == col || m[col][col] == 0.0) continue;
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
        }
    }
    Quadratic q;
    q.a = m[0][3] / m[0][0] / (scale * scale);
    q.b = m[1][3] / m[1][1] / scale;
    q.c = m[2][3] / m[2][2];
    return q;
}

} // namespace detail

/// Storage size where the marginal gain dR/dS falls to `capex`. The gain curve
/// is interpolated by quadratics through consecutive triples of capacities;
/// the first concave piece whose slope reaches `capex` inside its span gives
/// the answer. Never profitable -> smallest capacity; never saturating -> largest.
inline SizingResult optimal_bess_size(const std::vector<std::pair<double, double>>& points, double capex) {
    auto pts = points;
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& l, const auto& r) { return l.first == r.first; }),
              pts.end());
    if (pts.size() < 3) fail(ErrorCode::InsufficientPoints, "sizing needs at least 3 distinct capacities");
    if (!(capex >= 0.0)) fail(ErrorCode::InvalidParameter, "capex must be >= 0");

    SizingResult res;
    const auto ls = detail::least_squares(pts);
    res.ls_a = ls.a;
    res.ls_b = ls.b;
    res.ls_c = ls.c;

    std::vector<detail::Quadratic> pieces;
    bool any_concave = false;
    for (std::size_t i = 0; i + 2 < pts.size(); ++i) {
        pieces.push_back(detail::through(pts[i].first, pts[i].second, pts[i + 1].first, pts[i + 1].second,
                                         pts[i + 2].first, pts[i + 2].second));
        any_concave = any_concave || pieces.back().a < 0.0;
    }
    if (!any_concave) fail(ErrorCode::DegenerateFit, "gain curve shows no diminishing returns");

    auto pick = [&](std::size_t i, double size) {
        res.a = pieces[i].a;
        res.b = pieces[i].b;
        res.c = pieces[i].c;
        res.span_lo = pts[i].first;
        res.span_hi = pts[i + 2].first;
        res.size_kwh = size;
    };
    res.break_even_capex = pieces.front().slope(pts.front().first);
    if (capex >= res.break_even_capex) {
        pick(0, pts.front().first);
        return res;
    }
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& q = pieces[i];
        if (!(q.a < 0.0)) continue;
        const double x = (capex - q.b) / (2.0 * q.a);
        if (x >= pts[i].first && x <= pts[i + 2].first) {
            pick(i, x);
            return res;
        }
    }
    pick(pieces.size() - 1, pts.back().first);
    return res;
}

inline SizingResult optimal_bess_size(const std::vector<BessSweepRow>& rows, double capex) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) pts.emplace_back(r.bess.capacity_max_kwh, r.delta_net_revenue);
    return optimal_bess_size(pts, capex);
}

// Rendered tables round to the precision of a summary table; raw values live in CSV.
namespace render {

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string pad(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string row(const std::vector<std::string>& cells, std::size_t w = 10) {
    std::string out;
    for (const auto& c : cells) out += pad(c, w);
    return out + "\n";
}

inline std::string opt_pct(const std::optional<double>& v) { return v ? fixed(*v, 1) : "-"; }

inline std::string ratio_table(const IndicatorTable& t) {
    return row({"[P]^D", "P_%", "Pcha_%", "Smax_%", "e_%"}) +
           row({fixed(t.production_total_mwh, 1), fixed(t.production_ratio, 1), fixed(t.charge_ratio, 1),
                opt_pct(t.full_bess_days_ratio), fixed(t.export_ratio, 1)});
}

inline std::string revenue_table(const IndicatorTable& t) {
    return row({"R_max", "R^e", "r^e", "C^e", "R^n,e", "J^eval"}) +
           row({fixed(t.r_max, 2), fixed(t.gross_revenue, 2), fixed(t.revenue_ratio, 1), fixed(t.penalty_total, 2),
                fixed(t.net_revenue, 2), fixed(t.objective_eval, 2)});
}

inline std::string sweep_table(const std::vector<BessSweepRow>& rows) {
    std::string out = row({"case", "Smax", "[P]^D", "P_%", "Pcha_%", "Smax_%", "e_%"});
    for (const auto& r : rows) {
        const auto& t = r.indicators;
        out += row({std::to_string(r.case_id), fixed(r.bess.capacity_max_kwh, 0), fixed(t.production_total_mwh, 1),
                    fixed(t.production_ratio, 1), is_baseline(r.bess) ? "-" : fixed(t.charge_ratio, 1),
                    opt_pct(t.full_bess_days_ratio), fixed(t.export_ratio, 1)});
    }
    out += row({"case", "R^e", "C^e", "R^n,e", "J^eval", "dR^n,e"});
    for (const auto& r : rows) {
        const auto& t = r.indicators;
        out += row({std::to_string(r.case_id), fixed(t.gross_revenue, 2), fixed(t.penalty_total, 2),
                    fixed(t.net_revenue, 2), fixed(t.objective_eval, 2), fixed(r.delta_net_revenue, 0)});
    }
    return out;
}

} // namespace render

} // namespace capfirm::metrics
