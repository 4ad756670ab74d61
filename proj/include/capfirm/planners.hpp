#pragma once

// Day-ahead nomination problems: deterministic (point forecast), perfect
// foresight (measured PV) and scenario-based stochastic. All three share one
// builder; the deterministic kinds are the single-scenario case.

#include "capfirm/domain.hpp"
#include "capfirm/qp/model.hpp"
#include "capfirm/qp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace capfirm::planners {

enum class PlannerKind { deterministic, perfect, stochastic };

constexpr const char* to_string(PlannerKind k) {
    switch (k) {
    case PlannerKind::deterministic: return "d";
    case PlannerKind::perfect: return "dstar";
    case PlannerKind::stochastic: return "s";
    }
    return "?";
}

inline PlannerKind planner_from_string(const std::string& s) {
    if (s == "d" || s == "deterministic") return PlannerKind::deterministic;
    if (s == "dstar" || s == "perfect" || s == "d*") return PlannerKind::perfect;
    if (s == "s" || s == "stochastic") return PlannerKind::stochastic;
    fail(ErrorCode::UsageError, "unknown planner '" + s + "' (expected d, dstar or s)");
}

/// Weight of the tie-break term that discourages simultaneous charge and
/// discharge. It is excluded from every reported objective.
inline constexpr double kDispatchTieBreak = 1e-9;

enum class Symbol { e_star, e, dev_pos, dev_neg, pv, p_cha, p_dis, soc };

/// Column lookup for (symbol, period[, scenario]).
struct VarMap {
    int periods = 0;
    int scenarios = 0;
    std::vector<int> e_star;                            // [t]
    std::vector<int> e, dev_pos, dev_neg, pv, p_cha, p_dis, soc; // [w * T + t]

    [[nodiscard]] int at(Symbol s, int t, int w = 0) const {
        if (s == Symbol::e_star) return e_star[static_cast<std::size_t>(t)];
        const auto k = static_cast<std::size_t>(w * periods + t);
        switch (s) {
        case Symbol::e: return e[k];
        case Symbol::dev_pos: return dev_pos[k];
        case Symbol::dev_neg: return dev_neg[k];
        case Symbol::pv: return pv[k];
        case Symbol::p_cha: return p_cha[k];
        case Symbol::p_dis: return p_dis[k];
        case Symbol::soc: return soc[k];
        case Symbol::e_star: break;
        }
        return -1;
    }
};

struct DayProblem {
    PlannerKind kind = PlannerKind::deterministic;
    qp::CanonicalQP qp;
    VarMap vars;
    TenderParams params;
    BessSpec bess;
    ScenarioSet inputs; // the deterministic kinds hold their single profile with probability 1

    /// Expected cost sum_w p_w sum_t [-price e + slack (dev+^2 + dev-^2)],
    /// without the dispatch tie-break.
    [[nodiscard]] double reported_objective(std::span<const double> x) const {
        double total = 0.0;
        for (int w = 0; w < vars.scenarios; ++w) {
            double day = 0.0;
            for (int t = 0; t < vars.periods; ++t) {
                const double e = x[static_cast<std::size_t>(vars.at(Symbol::e, t, w))];
                const double dp = x[static_cast<std::size_t>(vars.at(Symbol::dev_pos, t, w))];
                const double dn = x[static_cast<std::size_t>(vars.at(Symbol::dev_neg, t, w))];
                day += -params.selling_price * e + params.slack_price * (dp * dp + dn * dn);
            }
            total += inputs.probabilities[static_cast<std::size_t>(w)] * day;
        }
        return total;
    }
};

struct NominationSchedule {
    int day_index = 0;
    std::vector<double> nominations; // e*_t, kWh
    PlannerKind planner = PlannerKind::deterministic;
    double objective = 0.0;
    qp::SolveStatus status = qp::SolveStatus::optimal;
    double solve_time_s = 0.0;
    int iterations = 0;
};

namespace detail {

inline DayProblem build(PlannerKind kind, const ScenarioSet& profiles, const TenderParams& params,
                        const BessSpec& bess_in) {
    const BessSpec bess = validate_bess(bess_in);
    const int T = params.periods_per_day;
    const int W = static_cast<int>(profiles.size());
    const double dt = params.period_duration_h;
    const bool single = kind != PlannerKind::stochastic;

    DayProblem prob;
    prob.kind = kind;
    prob.params = params;
    prob.bess = bess;
    prob.inputs = profiles;
    auto& vm = prob.vars;
    vm.periods = T;
    vm.scenarios = W;

    auto idx = [](int t) { return "[" + std::to_string(t + 1) + "]"; };
    auto idx2 = [&](int t, int w) { return single ? idx(t) : "[" + std::to_string(t + 1) + "," + std::to_string(w + 1) + "]"; };

    qp::ModelBuilder m;
    using qp::IdTerm;
    using qp::Sense;
    std::vector<qp::VarId> e_star(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        e_star[static_cast<std::size_t>(t)] = m.add_variable("e_star" + idx(t));
        vm.e_star.push_back(e_star[static_cast<std::size_t>(t)].index);
    }

    const auto cells = static_cast<std::size_t>(T * W);
    for (auto* v : {&vm.e, &vm.dev_pos, &vm.dev_neg, &vm.pv, &vm.p_cha, &vm.p_dis, &vm.soc}) v->resize(cells);
    for (int w = 0; w < W; ++w) {
        for (int t = 0; t < T; ++t) {
            const auto k = static_cast<std::size_t>(w * T + t);
            const auto s = idx2(t, w);
            vm.e[k] = m.add_variable("e" + s).index;
            vm.dev_pos[k] = m.add_variable("dev_pos" + s).index;
            vm.dev_neg[k] = m.add_variable("dev_neg" + s).index;
            vm.pv[k] = m.add_variable("P" + s).index;
            vm.p_cha[k] = m.add_variable("P_cha" + s).index;
            vm.p_dis[k] = m.add_variable("P_dis" + s).index;
            vm.soc[k] = m.add_variable("s" + s, -qp::kInf, qp::kInf).index;
        }
    }

    // Nomination constraints shared by all scenarios.
    for (int t = 0; t < T; ++t) {
        const auto es = e_star[static_cast<std::size_t>(t)];
        m.add_constraint("e_star_cap" + idx(t), {{es, 1.0}}, Sense::le, params.export_cap_kw * dt);
        if (t == 0) continue; // first-period ramp is released to decouple days
        const auto prev = e_star[static_cast<std::size_t>(t - 1)];
        m.add_constraint("ramp_up" + idx(t), {{es, 1.0}, {prev, -1.0}}, Sense::le, params.ramp_limit_kw * dt);
        m.add_constraint("ramp_down" + idx(t), {{prev, 1.0}, {es, -1.0}}, Sense::le, params.ramp_limit_kw * dt);
    }

    for (int w = 0; w < W; ++w) {
        const double pw = profiles.probabilities[static_cast<std::size_t>(w)];
        const auto& forecast = profiles.scenarios[static_cast<std::size_t>(w)];
        for (int t = 0; t < T; ++t) {
            const auto k = static_cast<std::size_t>(w * T + t);
            const auto s = idx2(t, w);
            const qp::VarId e{vm.e[k]}, dp{vm.dev_pos[k]}, dn{vm.dev_neg[k]}, pv{vm.pv[k]}, pc{vm.p_cha[k]},
                pd{vm.p_dis[k]}, soc{vm.soc[k]};
            const auto es = e_star[static_cast<std::size_t>(t)];

            m.add_linear_cost(e, -pw * params.selling_price);
            m.add_quadratic_cost(dp, pw * params.slack_price);
            m.add_quadratic_cost(dn, pw * params.slack_price);
            m.add_linear_cost(pc, pw * kDispatchTieBreak);
            m.add_linear_cost(pd, pw * kDispatchTieBreak);

            m.add_constraint("dev_pos" + s, {{e, 1.0}, {es, -1.0}, {dp, -1.0}}, Sense::le, params.energy_deadband_kwh);
            m.add_constraint("dev_neg" + s, {{es, 1.0}, {e, -1.0}, {dn, -1.0}}, Sense::le, params.energy_deadband_kwh);

            m.add_constraint("pv_cap" + s, {{pv, 1.0}}, Sense::le, forecast[static_cast<std::size_t>(t)]);
            m.add_constraint("cha_cap" + s, {{pc, 1.0}}, Sense::le, bess.charge_power_max_kw);
            m.add_constraint("dis_cap" + s, {{pd, 1.0}}, Sense::le, bess.discharge_power_max_kw);
            m.add_constraint("soc_min" + s, {{soc, 1.0}}, Sense::ge, bess.capacity_min_kwh);
            m.add_constraint("soc_max" + s, {{soc, 1.0}}, Sense::le, bess.capacity_max_kwh);

            m.add_constraint("balance" + s, {{e, 1.0 / dt}, {pv, -1.0}, {pd, -1.0}, {pc, 1.0}}, Sense::eq, 0.0);
            m.add_constraint("export_cap" + s, {{e, 1.0}}, Sense::le, params.export_cap_kw * dt);

            std::vector<IdTerm> dyn{{soc, 1.0}, {pc, -dt * bess.eta_charge}, {pd, dt / bess.eta_discharge}};
            double rhs = bess.soc_init_kwh;
            if (t > 0) {
                dyn.push_back({qp::VarId{vm.soc[k - 1]}, -1.0});
                rhs = 0.0;
            }
            m.add_constraint("soc_dyn" + s, dyn, Sense::eq, rhs);
        }
        m.add_constraint("soc_end" + (single ? std::string() : "[" + std::to_string(w + 1) + "]"),
                         {{qp::VarId{vm.soc[static_cast<std::size_t>(w * T + T - 1)]}, 1.0}}, Sense::eq, bess.soc_end_kwh);
    }
    prob.qp = m.assemble();
    return prob;
}

inline ScenarioSet single_profile(const PvTrace& day, const TenderParams& params) {
    if (day.values.size() != static_cast<std::size_t>(params.periods_per_day))
        fail(ErrorCode::LengthMismatch, "day profile has " + std::to_string(day.values.size()) + " periods, expected " +
                                            std::to_string(params.periods_per_day));
    ScenarioSet s;
    s.scenarios.push_back(day.values);
    s.probabilities.push_back(1.0);
    validate_scenarios(s, params);
    return s;
}

} // namespace detail

inline DayProblem build_deterministic(const PvTrace& forecast_day, const TenderParams& params, const BessSpec& bess) {
    return detail::build(PlannerKind::deterministic, detail::single_profile(forecast_day, params), params, bess);
}

/// Same structure as the deterministic problem with the forecast replaced by
/// the measured profile.
inline DayProblem build_perfect(const PvTrace& measured_day, const TenderParams& params, const BessSpec& bess) {
    if (measured_day.kind != TraceKind::measured)
        fail(ErrorCode::InvalidParameter, "perfect-foresight planning needs a measured profile");
    return detail::build(PlannerKind::perfect, detail::single_profile(measured_day, params), params, bess);
}

inline DayProblem build_stochastic(const ScenarioSet& scenarios, const TenderParams& params, const BessSpec& bess) {
    validate_scenarios(scenarios, params);
    return detail::build(PlannerKind::stochastic, scenarios, params, bess);
}

/// Tolerances used when checking nominations (kW); relative to the limit so
/// values rounded to 6 decimals in CSV still pass.
inline double ramp_tolerance_kw(const TenderParams& p) { return 1e-6 * (1.0 + p.ramp_limit_kw); }
inline double cap_tolerance_kw(const TenderParams& p) { return 1e-6 * (1.0 + p.export_cap_kw); }

/// Throws RampViolation or CapViolation naming the first offending period.
inline void check_nominations(std::span<const double> e_star, const TenderParams& params) {
    const double dt = params.period_duration_h;
    for (std::size_t t = 0; t < e_star.size(); ++t) {
        if (!(e_star[t] >= -1e-9) || e_star[t] / dt > params.export_cap_kw + cap_tolerance_kw(params))
            fail(ErrorCode::CapViolation, "nomination at period " + std::to_string(t + 1) + " outside [0, export cap]");
        if (t == 0) continue;
        const double ramp = std::abs(e_star[t] - e_star[t - 1]) / dt;
        if (ramp > params.ramp_limit_kw + ramp_tolerance_kw(params))
            fail(ErrorCode::RampViolation, "ramp of " + std::to_string(ramp) + " kW between periods " +
                                               std::to_string(t) + " and " + std::to_string(t + 1) +
                                               " exceeds " + std::to_string(params.ramp_limit_kw) + " kW");
    }
}

inline NominationSchedule extract_nominations(const DayProblem& problem, const qp::QpSolution& solution,
                                              int day_index = 0) {
    if (solution.status != qp::SolveStatus::optimal)
        fail(ErrorCode::NotOptimal, std::string("solve status is ") + qp::to_string(solution.status));
    NominationSchedule sched;
    sched.day_index = day_index;
    sched.planner = problem.kind;
    sched.status = solution.status;
    sched.solve_time_s = solution.solve_time_s;
    sched.iterations = solution.iterations;
    sched.objective = problem.reported_objective(solution.primal);
    sched.nominations.reserve(static_cast<std::size_t>(problem.vars.periods));
    for (int t = 0; t < problem.vars.periods; ++t) {
        // Interior-point iterates sit strictly inside the bounds; clear the
        // residual at an exact zero bound.
        const double v = solution.primal[static_cast<std::size_t>(problem.vars.at(Symbol::e_star, t))];
        sched.nominations.push_back(snap_to_output_grid(std::max(v, 0.0)));
    }
    check_nominations(sched.nominations, problem.params);
    return sched;
}

/// Builds, solves and extracts in one step.
inline NominationSchedule plan_day(const DayProblem& problem, const qp::SolverSettings& settings, int day_index = 0) {
    const auto sol = qp::solve_qp(problem.qp, settings);
    if (sol.status != qp::SolveStatus::optimal) {
        std::string msg = std::string("planner ") + to_string(problem.kind) + " day " + std::to_string(day_index) +
                          ": " + qp::to_string(sol.status);
        for (const auto& v : sol.violated) msg += "\n  " + v;
        fail(sol.status == qp::SolveStatus::infeasible ? ErrorCode::Infeasible : ErrorCode::NotOptimal, msg);
    }
    return extract_nominations(problem, sol, day_index);
}

} // namespace capfirm::planners
