#pragma once

// Ex-post assessment of fixed nominations with an ideal real-time controller,
// and the multi-day plan/evaluate loop.

#include "capfirm/domain.hpp"
#include "capfirm/planners.hpp"
#include "capfirm/scenariogen.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace capfirm::evaluator {

using planners::NominationSchedule;
using planners::PlannerKind;

struct DispatchResult {
    int day_index = 0;
    std::vector<double> e_star;  // kWh, copied from the nominations
    std::vector<double> exports; // kWh
    std::vector<double> dev_pos, dev_neg; // kWh
    std::vector<double> production;       // kW
    std::vector<double> charge, discharge; // kW
    std::vector<double> soc;               // kWh
    double objective_eval = 0.0;
    double solve_time_s = 0.0;
};

/// sum_t [-price e_t + slack (dev+_t^2 + dev-_t^2)] from the stored trajectories.
inline double recompute_objective(const DispatchResult& r, const TenderParams& p) {
    double j = 0.0;
    for (std::size_t t = 0; t < r.exports.size(); ++t)
        j += -p.selling_price * r.exports[t] + p.slack_price * (r.dev_pos[t] * r.dev_pos[t] + r.dev_neg[t] * r.dev_neg[t]);
    return j;
}

/// Minimises the evaluation cost over the dispatch with the nominations held
/// fixed. The deterministic problem is reused with the e* columns pinned.
inline DispatchResult evaluate_nominations(const NominationSchedule& nominations, const PvTrace& measured_day,
                                           const TenderParams& params, const BessSpec& bess,
                                           const qp::SolverSettings& settings = {}) {
    planners::check_nominations(nominations.nominations, params);
    auto problem = planners::build_deterministic(measured_day, params, bess);
    const int T = problem.vars.periods;
    if (nominations.nominations.size() != static_cast<std::size_t>(T))
        fail(ErrorCode::LengthMismatch, "nomination count differs from periods per day");
    for (int t = 0; t < T; ++t) {
        const auto col = static_cast<std::size_t>(problem.vars.at(planners::Symbol::e_star, t));
        problem.qp.lower[col] = nominations.nominations[static_cast<std::size_t>(t)];
        problem.qp.upper[col] = nominations.nominations[static_cast<std::size_t>(t)];
    }
    const auto sol = qp::solve_qp(problem.qp, settings);
    if (sol.status != qp::SolveStatus::optimal) {
        std::string msg = "evaluation of day " + std::to_string(nominations.day_index) + " is " + qp::to_string(sol.status);
        for (const auto& v : sol.violated) msg += "\n  " + v;
        fail(ErrorCode::Infeasible, msg);
    }

    DispatchResult r;
    r.day_index = nominations.day_index;
    r.e_star = nominations.nominations;
    auto read = [&](planners::Symbol s, std::vector<double>& out) {
        out.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) out[static_cast<std::size_t>(t)] = sol.primal[static_cast<std::size_t>(problem.vars.at(s, t))];
    };
    read(planners::Symbol::e, r.exports);
    read(planners::Symbol::dev_pos, r.dev_pos);
    read(planners::Symbol::dev_neg, r.dev_neg);
    read(planners::Symbol::pv, r.production);
    read(planners::Symbol::p_cha, r.charge);
    read(planners::Symbol::p_dis, r.discharge);
    read(planners::Symbol::soc, r.soc);
    // The tie-break weight sits below solver tolerance, so an interior point
    // keeps some simultaneous charge and discharge. Without losses netting them
    // leaves balance and state of charge untouched.
    const bool lossless = bess.eta_charge == 1.0 && bess.eta_discharge == 1.0;
    // At the optimum each deviation equals its hinge; store exactly that so the
    // trajectory is self-consistent.
    for (int t = 0; t < T; ++t) {
        const auto k = static_cast<std::size_t>(t);
        if (lossless) {
            const double m = std::min(r.charge[k], r.discharge[k]);
            r.charge[k] = std::max(0.0, r.charge[k] - m);
            r.discharge[k] = std::max(0.0, r.discharge[k] - m);
        }
        for (auto* v : {&r.exports[k], &r.production[k], &r.charge[k], &r.discharge[k], &r.soc[k]})
            *v = snap_to_output_grid(std::max(0.0, *v));
        r.dev_pos[k] = std::max(0.0, r.exports[k] - r.e_star[k] - params.energy_deadband_kwh);
        r.dev_neg[k] = std::max(0.0, r.e_star[k] - r.exports[k] - params.energy_deadband_kwh);
    }
    r.objective_eval = recompute_objective(r, params);
    r.solve_time_s = sol.solve_time_s;
    return r;
}

struct ScenarioConfig {
    scenariogen::ErrorModelParams model;
    int n_scenarios = 100;

    bool operator==(const ScenarioConfig&) const = default;
};

struct SimulationConfig {
    PlannerKind planner = PlannerKind::perfect;
    std::optional<ScenarioConfig> scenarios; // required for the stochastic planner
    std::uint64_t seed = 0;
    qp::SolverSettings solver;
    int jobs = 1;
};

struct DayOutcome {
    NominationSchedule nominations;
    DispatchResult dispatch;
    double plan_time_s = 0.0; // wall clock: scenario generation + planning
    double eval_time_s = 0.0;
};

struct SimulationReport {
    std::vector<DayOutcome> days;
    double aggregate_objective = 0.0; // sum of J^eval over days
    double aggregate_planned = 0.0;   // sum of planner objectives
    SimulationConfig config;
    TenderParams params;
    BessSpec bess;
};

/// Seed of the scenario set of one day.
inline std::uint64_t day_seed(std::uint64_t seed, int day_index) {
    return scenariogen::substream_seed(seed, static_cast<std::uint64_t>(day_index));
}

inline DayOutcome run_day(const PvTrace& truth_day, const PvTrace* forecast_day, int day_index,
                          const SimulationConfig& cfg, const TenderParams& params, const BessSpec& bess) {
    using clock = std::chrono::steady_clock;
    DayOutcome out;
    const auto t0 = clock::now();
    planners::DayProblem problem;
    switch (cfg.planner) {
    case PlannerKind::perfect: problem = planners::build_perfect(truth_day, params, bess); break;
    case PlannerKind::deterministic:
        if (!forecast_day) fail(ErrorCode::UsageError, "planner d needs a point-forecast trace");
        problem = planners::build_deterministic(*forecast_day, params, bess);
        break;
    case PlannerKind::stochastic: {
        if (!cfg.scenarios) fail(ErrorCode::UsageError, "planner s needs scenario parameters");
        const auto set = scenariogen::generate_scenarios(truth_day, cfg.scenarios->model, cfg.scenarios->n_scenarios,
                                                         day_seed(cfg.seed, day_index), params.installed_capacity_kwp);
        problem = planners::build_stochastic(set, params, bess);
        break;
    }
    }
    out.nominations = planners::plan_day(problem, cfg.solver, day_index);
    const auto t1 = clock::now();
    out.dispatch = evaluate_nominations(out.nominations, truth_day, params, bess, cfg.solver);
    const auto t2 = clock::now();
    out.plan_time_s = std::chrono::duration<double>(t1 - t0).count();
    out.eval_time_s = std::chrono::duration<double>(t2 - t1).count();
    return out;
}

/// Plans and evaluates every day of `trace` independently. Results are in day
/// order whatever the number of worker threads.
inline SimulationReport simulate_dataset(const PvTrace& trace, const SimulationConfig& cfg, const TenderParams& params,
                                         const BessSpec& bess, const PvTrace* forecast = nullptr) {
    validate_trace(trace, params);
    if (forecast) {
        validate_trace(*forecast, params);
        if (forecast->values.size() != trace.values.size())
            fail(ErrorCode::LengthMismatch, "forecast and measured traces cover different periods");
    }
    const auto days = market_days(trace, params.periods_per_day);
    SimulationReport report;
    report.config = cfg;
    report.params = params;
    report.bess = validate_bess(bess);
    report.days.resize(days.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t d = next++; d < days.size(); d = next++) {
            try {
                const auto truth = day_trace(trace, days[d]);
                std::optional<PvTrace> fc;
                if (forecast) fc = day_trace(*forecast, days[d]);
                report.days[d] = run_day(truth, fc ? &*fc : nullptr, days[d].day_index, cfg, params, bess);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = days.size();
            }
        }
    };
    const int jobs = std::clamp(cfg.jobs, 1, static_cast<int>(std::max<std::size_t>(days.size(), 1)));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    for (const auto& d : report.days) {
        report.aggregate_objective += d.dispatch.objective_eval;
        report.aggregate_planned += d.nominations.objective;
    }
    return report;
}

} // namespace capfirm::evaluator
