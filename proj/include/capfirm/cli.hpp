#pragma once

// Command-line front end. Every command first resolves its full option set
// (defaults < config file < flags) into key-value form; that set is what runs
// and what the manifest records, so `rerun` replays exactly the same command.

#include "capfirm/evaluator.hpp"
#include "capfirm/io.hpp"
#include "capfirm/metrics.hpp"
#include "capfirm/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

namespace capfirm::cli {

inline constexpr const char* kToolVersion = "0.1.0";

using io::KeyValues;

// --- option access ----------------------------------------------------------

inline const std::string& need(const KeyValues& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorCode::UsageError, "missing option '" + key + "'");
    return it->second;
}

inline double get_double(const KeyValues& kv, const std::string& key) { return io::parse_number(need(kv, key), key); }
inline int get_int(const KeyValues& kv, const std::string& key) { return static_cast<int>(io::parse_int(need(kv, key), key)); }

inline std::uint64_t get_u64(const KeyValues& kv, const std::string& key) {
    const auto& s = need(kv, key);
    char* end = nullptr;
    const auto v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || end != s.c_str() + s.size()) fail(ErrorCode::ParseError, key + ": '" + s + "' is not a seed");
    return v;
}

inline bool has(const KeyValues& kv, const std::string& key) { return kv.count(key) != 0; }

// --- defaults ---------------------------------------------------------------

inline KeyValues tender_defaults() {
    const RawTenderParams r;
    return {{"tender.price", io::fmt_exact(r.selling_price)},
            {"tender.slack_price", io::fmt_exact(r.slack_price)},
            {"tender.ramp_limit_percent", "10"},
            {"tender.export_cap_kw", io::fmt_exact(r.export_cap_kw)},
            {"tender.deadband_kwh", io::fmt_exact(r.energy_deadband_kwh)},
            {"tender.capacity_kwp", io::fmt_exact(r.installed_capacity_kwp)}};
}

inline KeyValues bess_defaults() {
    const BessSpec b;
    return {{"bess.capacity_kwh", io::fmt_exact(b.capacity_max_kwh)},
            {"bess.min_kwh", io::fmt_exact(b.capacity_min_kwh)},
            {"bess.charge_kw", io::fmt_exact(b.charge_power_max_kw)},
            {"bess.discharge_kw", io::fmt_exact(b.discharge_power_max_kw)},
            {"bess.eta_charge", io::fmt_exact(b.eta_charge)},
            {"bess.eta_discharge", io::fmt_exact(b.eta_discharge)},
            {"bess.soc_init_kwh", io::fmt_exact(b.soc_init_kwh)},
            {"bess.soc_end_kwh", io::fmt_exact(b.soc_end_kwh)}};
}

inline KeyValues scenario_defaults() {
    const scenariogen::ErrorModelParams m;
    return {{"scenario.p", io::fmt_exact(m.p)},
            {"scenario.sigma", io::fmt_exact(m.sigma)},
            {"scenario.n_scenarios", "100"},
            {"scenario.seed", "0"},
            {"scenario.lead_offset", std::to_string(m.lead_offset)},
            {"scenario.max_lead", std::to_string(m.max_lead)}};
}

inline KeyValues solver_defaults() {
    const qp::SolverSettings s;
    return {{"solver.tol", io::fmt_exact(s.tol)}, {"solver.max_iter", std::to_string(s.max_iter)}};
}

inline void merge(KeyValues& into, const KeyValues& from) {
    for (const auto& [k, v] : from) into[k] = v;
}

/// Keys each command understands, with defaults. Keys without a default are
/// listed with an empty value and must be supplied.
inline KeyValues defaults_for(const std::string& command) {
    KeyValues kv;
    auto model = [&] {
        merge(kv, tender_defaults());
        merge(kv, bess_defaults());
        merge(kv, solver_defaults());
    };
    if (command == "synth-data") {
        kv = {{"synth.days", "28"},           {"synth.capacity_kwp", "2000"}, {"synth.peak_fraction", "0.494"},
              {"synth.seed", "1"},            {"synth.period_minutes", "15"}, {"synth.forecast_sigma", "0"},
              {"scenario.p", "0.9"},          {"scenario.lead_offset", "33"}, {"scenario.max_lead", "128"}};
    } else if (command == "plan" || command == "simulate") {
        model();
        merge(kv, scenario_defaults());
        kv["run.planner"] = "dstar";
        kv["run.jobs"] = "1";
    } else if (command == "evaluate") {
        model();
    } else if (command == "sweep-bess") {
        model();
        merge(kv, scenario_defaults());
        kv["run.planner"] = "dstar";
        kv["run.jobs"] = "1";
        kv["sweep.cases"] = "2000,1000,500,250,0";
        kv["sweep.capex"] = "0.1";
        kv["sweep.horizon_months"] = "180";
    } else if (command == "gen-scenarios") {
        merge(kv, scenario_defaults());
        kv["tender.capacity_kwp"] = "2000";
    } else {
        fail(ErrorCode::UsageError, "unknown command '" + command + "'");
    }
    return kv;
}

// --- typed views ------------------------------------------------------------

inline TenderParams tender_from(const KeyValues& kv, double period_duration_h) {
    RawTenderParams r;
    r.selling_price = get_double(kv, "tender.price");
    r.slack_price = get_double(kv, "tender.slack_price");
    r.period_duration_h = period_duration_h;
    if (has(kv, "tender.ramp_limit_kw"))
        r.ramp_limit = RampLimitKw{get_double(kv, "tender.ramp_limit_kw")};
    else
        r.ramp_limit = RampLimitPercent{get_double(kv, "tender.ramp_limit_percent")};
    r.export_cap_kw = get_double(kv, "tender.export_cap_kw");
    r.energy_deadband_kwh = get_double(kv, "tender.deadband_kwh");
    r.installed_capacity_kwp = get_double(kv, "tender.capacity_kwp");
    return validate_tender_params(r);
}

inline BessSpec bess_from(const KeyValues& kv) {
    BessSpec b;
    b.capacity_max_kwh = get_double(kv, "bess.capacity_kwh");
    b.capacity_min_kwh = get_double(kv, "bess.min_kwh");
    b.charge_power_max_kw = get_double(kv, "bess.charge_kw");
    b.discharge_power_max_kw = get_double(kv, "bess.discharge_kw");
    b.eta_charge = get_double(kv, "bess.eta_charge");
    b.eta_discharge = get_double(kv, "bess.eta_discharge");
    b.soc_init_kwh = get_double(kv, "bess.soc_init_kwh");
    b.soc_end_kwh = get_double(kv, "bess.soc_end_kwh");
    return validate_bess(b);
}

inline scenariogen::ErrorModelParams model_from(const KeyValues& kv) {
    scenariogen::ErrorModelParams m;
    m.p = get_double(kv, "scenario.p");
    m.sigma = has(kv, "scenario.sigma") ? get_double(kv, "scenario.sigma") : 0.0;
    m.lead_offset = get_int(kv, "scenario.lead_offset");
    m.max_lead = get_int(kv, "scenario.max_lead");
    scenariogen::validate(m);
    return m;
}

inline qp::SolverSettings solver_from(const KeyValues& kv) {
    qp::SolverSettings s;
    s.tol = get_double(kv, "solver.tol");
    s.max_iter = get_int(kv, "solver.max_iter");
    if (!(s.tol > 0.0)) fail(ErrorCode::InvalidParameter, "solver.tol must be > 0");
    if (s.max_iter < 1) fail(ErrorCode::InvalidParameter, "solver.max_iter must be >= 1");
    return s;
}

inline evaluator::SimulationConfig simulation_from(const KeyValues& kv) {
    evaluator::SimulationConfig cfg;
    cfg.planner = planners::planner_from_string(need(kv, "run.planner"));
    cfg.seed = get_u64(kv, "scenario.seed");
    cfg.solver = solver_from(kv);
    cfg.jobs = get_int(kv, "run.jobs");
    if (cfg.jobs < 1) fail(ErrorCode::InvalidParameter, "run.jobs must be >= 1");
    if (cfg.planner == planners::PlannerKind::stochastic) {
        evaluator::ScenarioConfig sc;
        sc.model = model_from(kv);
        sc.n_scenarios = get_int(kv, "scenario.n_scenarios");
        cfg.scenarios = sc;
    }
    return cfg;
}

// --- outputs ----------------------------------------------------------------

struct Context {
    std::filesystem::path out_dir;
    std::ostream& out;
    std::string timing_path; // wall-clock data lives outside the reproducible outputs
};

inline void write_output(const Context& ctx, const std::string& name, const std::string& content) {
    io::write_file((ctx.out_dir / name).string(), content);
}

inline void write_timing(const Context& ctx, const std::string& content) {
    if (!ctx.timing_path.empty()) io::write_file(ctx.timing_path, content);
}

/// Manifest: tool, command, every resolved option and the digest of every input.
inline std::string manifest_text(const std::string& command, const KeyValues& kv) {
    KeyValues m = kv;
    m["tool"] = "capfirm";
    m["tool.version"] = kToolVersion;
    m["command"] = command;
    for (const auto& [k, v] : kv)
        if (k.rfind("input.", 0) == 0) m["digest." + k] = io::file_sha256(v);
    return "# capfirm run manifest\n" + io::format_key_values(m);
}

inline std::vector<std::string> run_comments(const std::string& command, const KeyValues& kv) {
    std::vector<std::string> c{"capfirm " + std::string(kToolVersion) + " " + command};
    for (const auto& [k, v] : kv)
        if (k.rfind("run.", 0) == 0 || k.rfind("scenario.", 0) == 0 || k.rfind("tender.", 0) == 0) c.push_back(k + "=" + v);
    return c;
}

inline std::string timing_csv(const evaluator::SimulationReport& r) {
    std::string out = "day,plan_wall_s,eval_wall_s,solve_s,iterations\n";
    for (const auto& d : r.days) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%d\n", d.nominations.day_index, d.plan_time_s, d.eval_time_s,
                      d.nominations.solve_time_s, d.nominations.iterations);
        out += buf;
    }
    return out;
}

inline double mean_solve_time(const evaluator::SimulationReport& r) {
    double s = 0.0;
    for (const auto& d : r.days) s += d.nominations.solve_time_s;
    return r.days.empty() ? 0.0 : s / static_cast<double>(r.days.size());
}

inline PvTrace load_input(const KeyValues& kv, const std::string& key, TraceKind kind) {
    return io::load_pv_csv(need(kv, key), kind);
}

inline const PvTrace* optional_forecast(const KeyValues& kv, std::optional<PvTrace>& holder) {
    if (!has(kv, "input.forecast")) return nullptr;
    holder = load_input(kv, "input.forecast", TraceKind::point_forecast);
    return &*holder;
}

// --- commands ---------------------------------------------------------------

inline void cmd_synth(const KeyValues& kv, const Context& ctx) {
    SynthOptions opt;
    opt.period_duration_h = get_double(kv, "synth.period_minutes") / 60.0;
    const double capacity = get_double(kv, "synth.capacity_kwp");
    const auto seed = get_u64(kv, "synth.seed");
    const auto trace = synth_pv_trace(get_int(kv, "synth.days"), capacity, get_double(kv, "synth.peak_fraction"), seed, opt);
    write_output(ctx, "pv.csv", io::pv_csv(trace));
    const double fsig = get_double(kv, "synth.forecast_sigma");
    if (fsig > 0.0) {
        // One error path per day, drawn from a stream disjoint from the planner's.
        auto m = model_from(kv);
        m.sigma = fsig;
        PvTrace fc = trace;
        fc.kind = TraceKind::point_forecast;
        const int T = periods_per_day(opt.period_duration_h);
        for (const auto& md : market_days(trace, T)) {
            const auto day = day_trace(trace, md);
            const auto set = scenariogen::generate_scenarios(
                day, m, 1, scenariogen::substream_seed(~seed, static_cast<std::uint64_t>(md.day_index)), capacity);
            std::copy(set.scenarios[0].begin(), set.scenarios[0].end(), fc.values.begin() + md.first_period);
        }
        write_output(ctx, "forecast.csv", io::pv_csv(fc));
    }
    ctx.out << "wrote " << trace.values.size() << " periods, peak "
            << io::fmt_energy(*std::max_element(trace.values.begin(), trace.values.end())) << " kW\n";
}

inline void cmd_plan(const KeyValues& kv, const Context& ctx) {
    const auto truth = load_input(kv, "input.pv", TraceKind::measured);
    const auto params = tender_from(kv, truth.period_duration_h);
    const auto bess = bess_from(kv);
    const auto cfg = simulation_from(kv);
    std::optional<PvTrace> fc_holder;
    const PvTrace* fc = optional_forecast(kv, fc_holder);
    if (fc) validate_trace(*fc, params);
    validate_trace(truth, params);

    const auto days = market_days(truth, params.periods_per_day);
    std::vector<planners::NominationSchedule> sched(days.size());
    std::vector<double> wall(days.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t d = next++; d < days.size(); d = next++) {
            try {
                const auto t0 = std::chrono::steady_clock::now();
                const auto day = day_trace(truth, days[d]);
                planners::DayProblem prob;
                switch (cfg.planner) {
                case planners::PlannerKind::perfect: prob = planners::build_perfect(day, params, bess); break;
                case planners::PlannerKind::deterministic:
                    if (!fc) fail(ErrorCode::UsageError, "planner d needs --forecast");
                    prob = planners::build_deterministic(day_trace(*fc, days[d]), params, bess);
                    break;
                case planners::PlannerKind::stochastic:
                    prob = planners::build_stochastic(
                        scenariogen::generate_scenarios(day, cfg.scenarios->model, cfg.scenarios->n_scenarios,
                                                        evaluator::day_seed(cfg.seed, days[d].day_index),
                                                        params.installed_capacity_kwp),
                        params, bess);
                    break;
                }
                sched[d] = planners::plan_day(prob, cfg.solver, days[d].day_index);
                wall[d] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                next = days.size();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 1; j < std::min<int>(cfg.jobs, static_cast<int>(days.size())); ++j) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);

    write_output(ctx, "nominations.csv", io::nominations_csv(sched, run_comments("plan", kv)));
    std::string summary = "day,objective\n", timing = "day,plan_wall_s,solve_s,iterations\n";
    double total = 0.0;
    for (std::size_t d = 0; d < sched.size(); ++d) {
        summary += std::to_string(sched[d].day_index) + "," + io::fmt_money(sched[d].objective) + "\n";
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d\n", sched[d].day_index, wall[d], sched[d].solve_time_s,
                      sched[d].iterations);
        timing += buf;
        total += sched[d].objective;
    }
    write_output(ctx, "plan_summary.csv", summary);
    write_timing(ctx, timing);
    ctx.out << "planner " << planners::to_string(cfg.planner) << " days " << sched.size() << " objective "
            << io::fmt_money(total) << "\n";
}

inline void cmd_evaluate(const KeyValues& kv, const Context& ctx) {
    const auto truth = load_input(kv, "input.pv", TraceKind::measured);
    const auto params = tender_from(kv, truth.period_duration_h);
    const auto bess = bess_from(kv);
    const auto solver = solver_from(kv);
    validate_trace(truth, params);
    const auto noms = io::load_nominations_csv(need(kv, "input.nominations"));
    const auto days = market_days(truth, params.periods_per_day);
    std::vector<evaluator::DispatchResult> results;
    std::string summary = "day,objective_eval\n";
    double total = 0.0;
    for (const auto& n : noms) {
        const auto it = std::find_if(days.begin(), days.end(), [&](const MarketDay& m) { return m.day_index == n.day_index; });
        if (it == days.end()) fail(ErrorCode::DayMismatch, "nominations for day " + std::to_string(n.day_index) + " have no measured day");
        results.push_back(evaluator::evaluate_nominations(n, day_trace(truth, *it), params, bess, solver));
        summary += std::to_string(n.day_index) + "," + io::fmt_money(results.back().objective_eval) + "\n";
        total += results.back().objective_eval;
    }
    write_output(ctx, "dispatch.csv", io::dispatch_csv(results));
    write_output(ctx, "evaluation_summary.csv", summary);
    ctx.out << "days " << results.size() << " objective_eval " << io::fmt_money(total) << "\n";
}

inline std::string days_csv(const evaluator::SimulationReport& r) {
    std::string out = "day,objective_planned,objective_eval\n";
    for (const auto& d : r.days)
        out += std::to_string(d.nominations.day_index) + "," + io::fmt_money(d.nominations.objective) + "," +
               io::fmt_money(d.dispatch.objective_eval) + "\n";
    return out;
}

inline void cmd_simulate(const KeyValues& kv, const Context& ctx) {
    const auto truth = load_input(kv, "input.pv", TraceKind::measured);
    const auto params = tender_from(kv, truth.period_duration_h);
    const auto bess = bess_from(kv);
    const auto cfg = simulation_from(kv);
    std::optional<PvTrace> fc_holder;
    const auto report = evaluator::simulate_dataset(truth, cfg, params, bess, optional_forecast(kv, fc_holder));
    const auto ind = metrics::compute_indicators(report, truth, params);

    std::vector<planners::NominationSchedule> noms;
    std::vector<evaluator::DispatchResult> disp;
    for (const auto& d : report.days) {
        noms.push_back(d.nominations);
        disp.push_back(d.dispatch);
    }
    write_output(ctx, "nominations.csv", io::nominations_csv(noms, run_comments("simulate", kv)));
    write_output(ctx, "dispatch.csv", io::dispatch_csv(disp));
    write_output(ctx, "days.csv", days_csv(report));
    write_output(ctx, "indicators.csv", std::string(io::kIndicatorHeader) + "\n" +
                                            io::indicator_row(1, bess.capacity_max_kwh, ind, 0.0));
    write_output(ctx, "indicators.txt", metrics::render::ratio_table(ind) + "\n" + metrics::render::revenue_table(ind));
    write_timing(ctx, timing_csv(report));
    ctx.out << metrics::render::ratio_table(ind) << "\n" << metrics::render::revenue_table(ind);
    ctx.out << "objective_eval " << io::fmt_money(report.aggregate_objective) << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", mean_solve_time(report));
    ctx.out << "mean solve time per day " << buf << " s\n";
}

inline std::vector<BessSpec> parse_cases(const std::string& list) {
    std::vector<BessSpec> cases;
    for (const auto& item : io::split(list)) {
        const double cap = io::parse_number(item, "sweep.cases");
        BessSpec b;
        b.capacity_max_kwh = cap;
        b.capacity_min_kwh = 0.0;
        b.charge_power_max_kw = cap;
        b.discharge_power_max_kw = cap;
        cases.push_back(validate_bess(b));
    }
    return cases;
}

inline void cmd_sweep(const KeyValues& kv, const Context& ctx) {
    const auto truth = load_input(kv, "input.pv", TraceKind::measured);
    const auto params = tender_from(kv, truth.period_duration_h);
    const auto cfg = simulation_from(kv);
    const auto cases = parse_cases(need(kv, "sweep.cases"));
    std::optional<PvTrace> fc_holder;
    const auto run = metrics::bess_sweep(truth, cases, cfg, params, optional_forecast(kv, fc_holder),
                                         get_double(kv, "sweep.horizon_months"));
    std::string csv = std::string(io::kIndicatorHeader) + "\n";
    std::string timing = "case_id,day,solve_s,iterations\n";
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
        const auto& r = run.rows[i];
        csv += io::indicator_row(r.case_id, r.bess.capacity_max_kwh, r.indicators, r.delta_net_revenue);
        for (const auto& d : run.reports[i].days) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%d\n", r.case_id, d.nominations.day_index,
                          d.nominations.solve_time_s, d.nominations.iterations);
            timing += buf;
        }
    }
    write_output(ctx, "sweep.csv", csv);
    write_output(ctx, "sweep.txt", metrics::render::sweep_table(run.rows));
    write_timing(ctx, timing);
    ctx.out << metrics::render::sweep_table(run.rows);

    const double capex = get_double(kv, "sweep.capex");
    KeyValues sizing{{"capex", io::fmt_exact(capex)}};
    try {
        const auto s = metrics::optimal_bess_size(run.rows, capex);
        sizing["size_kwh"] = io::fmt_energy(s.size_kwh);
        sizing["fit.a"] = io::fmt_exact(s.a);
        sizing["fit.b"] = io::fmt_exact(s.b);
        sizing["fit.c"] = io::fmt_exact(s.c);
        sizing["fit.span_kwh"] = io::fmt_energy(s.span_lo) + "," + io::fmt_energy(s.span_hi);
        sizing["break_even_capex"] = io::fmt_exact(s.break_even_capex);
        sizing["least_squares.a"] = io::fmt_exact(s.ls_a);
        sizing["least_squares.b"] = io::fmt_exact(s.ls_b);
        sizing["least_squares.c"] = io::fmt_exact(s.ls_c);
        ctx.out << "optimal storage " << io::fmt_energy(s.size_kwh) << " kWh at capex " << io::fmt_exact(capex)
                << ", break-even capex " << io::fmt_exact(s.break_even_capex) << "\n";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateFit && e.code() != ErrorCode::InsufficientPoints) throw;
        sizing["status"] = to_string(e.code());
        ctx.out << "sizing not available: " << e.what() << "\n";
    }
    write_output(ctx, "sizing.txt", io::format_key_values(sizing));
}

inline void cmd_scenarios(const KeyValues& kv, const Context& ctx) {
    const auto truth = load_input(kv, "input.pv", TraceKind::measured);
    const auto m = model_from(kv);
    const int n = get_int(kv, "scenario.n_scenarios");
    const auto seed = get_u64(kv, "scenario.seed");
    const double cap = get_double(kv, "tender.capacity_kwp");
    const int T = periods_per_day(truth.period_duration_h);
    KeyValues meta{{"p", io::fmt_exact(m.p)},
                   {"sigma", io::fmt_exact(m.sigma)},
                   {"seed", std::to_string(seed)},
                   {"lead_offset", std::to_string(m.lead_offset)},
                   {"max_lead", std::to_string(m.max_lead)},
                   {"n_scenarios", std::to_string(n)}};
    for (const auto& md : market_days(truth, T)) {
        const auto ds = evaluator::day_seed(seed, md.day_index);
        const auto set = scenariogen::generate_scenarios(day_trace(truth, md), m, n, ds, cap);
        char name[64];
        std::snprintf(name, sizeof name, "scenarios_day%03d.csv", md.day_index);
        write_output(ctx, name, io::scenarios_csv(set));
        meta["day_seed." + std::to_string(md.day_index)] = std::to_string(ds);
    }
    write_output(ctx, "scenarios_meta.txt", io::format_key_values(meta));
    ctx.out << "wrote scenarios for " << market_days(truth, T).size() << " days\n";
}

inline void execute(const std::string& command, const KeyValues& kv, const Context& ctx) {
    std::filesystem::create_directories(ctx.out_dir);
    if (command == "synth-data") cmd_synth(kv, ctx);
    else if (command == "plan") cmd_plan(kv, ctx);
    else if (command == "evaluate") cmd_evaluate(kv, ctx);
    else if (command == "simulate") cmd_simulate(kv, ctx);
    else if (command == "sweep-bess") cmd_sweep(kv, ctx);
    else if (command == "gen-scenarios") cmd_scenarios(kv, ctx);
    else fail(ErrorCode::UsageError, "unknown command '" + command + "'");
    write_output(ctx, "manifest.txt", manifest_text(command, kv));
}

/// Layers a config file and explicit flags over the command defaults and
/// normalises the result (absolute input paths, one ramp form, sigma only).
inline KeyValues resolve(const std::string& command, const KeyValues& config, const KeyValues& flags) {
    KeyValues kv = defaults_for(command);
    auto layer = [&](const KeyValues& src, const char* origin) {
        for (const auto& [k, v] : src) {
            const bool known = kv.count(k) || k.rfind("input.", 0) == 0 || k == "tender.ramp_limit_kw" ||
                               k == "scenario.eps_max";
            if (!known) fail(ErrorCode::UsageError, std::string(origin) + ": option '" + k + "' does not apply to " + command);
            if (k == "tender.ramp_limit_kw") kv.erase("tender.ramp_limit_percent");
            if (k == "tender.ramp_limit_percent") kv.erase("tender.ramp_limit_kw");
            if (k == "scenario.eps_max") kv.erase("scenario.sigma");
            if (k == "scenario.sigma") kv.erase("scenario.eps_max");
            kv[k] = v;
        }
    };
    layer(config, "config");
    layer(flags, "flag");
    if (has(kv, "scenario.eps_max")) {
        kv["scenario.sigma"] = io::fmt_exact(
            scenariogen::sigma_from_eps_max(get_double(kv, "scenario.eps_max"), get_double(kv, "scenario.p")));
        kv.erase("scenario.eps_max");
    }
    for (auto& [k, v] : kv)
        if (k.rfind("input.", 0) == 0) v = std::filesystem::absolute(v).lexically_normal().string();
    return kv;
}

/// Runs a command; returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Day-ahead nominations for capacity firming of a PV plant with storage", "capfirm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    struct Bound {
        CLI::App* sub;
        std::string flag;
        std::string key;
        std::string value;
    };
    std::vector<std::unique_ptr<Bound>> bound;
    std::string config_path, out_dir = ".", manifest_path, timing_path;

    auto opt = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        bound.push_back(std::make_unique<Bound>(Bound{sub, flag, key, {}}));
        sub->add_option(flag, bound.back()->value, help);
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--config", config_path, "key-value configuration file");
    };
    auto timing_flag = [&](CLI::App* sub) {
        sub->add_option("--timing", timing_path, "write per-day wall-clock and solver times to this CSV");
    };
    auto model_flags = [&](CLI::App* sub) {
        opt(sub, "--price", "tender.price", "selling price per kWh");
        opt(sub, "--slack-price", "tender.slack_price", "quadratic penalty price per kWh^2");
        opt(sub, "--ramp-limit-kw", "tender.ramp_limit_kw", "nomination ramp limit, kW");
        opt(sub, "--ramp-limit-percent", "tender.ramp_limit_percent", "nomination ramp limit, % of installed capacity");
        opt(sub, "--export-cap-kw", "tender.export_cap_kw", "export capacity, kW");
        opt(sub, "--deadband-kwh", "tender.deadband_kwh", "penalty-free deviation, kWh");
        opt(sub, "--capacity-kwp", "tender.capacity_kwp", "installed PV capacity, kWp");
        opt(sub, "--bess-capacity-kwh", "bess.capacity_kwh", "storage capacity, kWh");
        opt(sub, "--bess-min-kwh", "bess.min_kwh", "minimum state of charge, kWh");
        opt(sub, "--bess-charge-kw", "bess.charge_kw", "maximum charge power, kW");
        opt(sub, "--bess-discharge-kw", "bess.discharge_kw", "maximum discharge power, kW");
        opt(sub, "--eta-charge", "bess.eta_charge", "charge efficiency");
        opt(sub, "--eta-discharge", "bess.eta_discharge", "discharge efficiency");
        opt(sub, "--soc-init-kwh", "bess.soc_init_kwh", "state of charge at the start of each day, kWh");
        opt(sub, "--soc-end-kwh", "bess.soc_end_kwh", "state of charge at the end of each day, kWh");
        opt(sub, "--tol", "solver.tol", "solver tolerance");
        opt(sub, "--max-iter", "solver.max_iter", "solver iteration limit");
    };
    auto scenario_flags = [&](CLI::App* sub) {
        opt(sub, "--n-scenarios", "scenario.n_scenarios", "scenarios per day");
        opt(sub, "--sigma", "scenario.sigma", "noise standard deviation");
        opt(sub, "--eps-max", "scenario.eps_max", "three-sigma error bound; sets sigma");
        opt(sub, "--p", "scenario.p", "moving-average decay");
        opt(sub, "--lead-offset", "scenario.lead_offset", "forecast lead of the first period");
        opt(sub, "--max-lead", "scenario.max_lead", "longest forecast lead");
        opt(sub, "--seed", "scenario.seed", "scenario seed");
    };
    auto run_flags = [&](CLI::App* sub) {
        opt(sub, "--planner", "run.planner", "d, dstar or s");
        opt(sub, "--jobs", "run.jobs", "worker threads");
        opt(sub, "--input", "input.pv", "measured PV CSV");
        opt(sub, "--forecast", "input.forecast", "point-forecast PV CSV (planner d)");
    };

    auto* synth = app.add_subcommand("synth-data", "write a synthetic PV trace");
    common(synth);
    opt(synth, "--days", "synth.days", "number of days");
    opt(synth, "--capacity-kwp", "synth.capacity_kwp", "installed capacity, kWp");
    opt(synth, "--peak-fraction", "synth.peak_fraction", "trace maximum as a share of capacity");
    opt(synth, "--seed", "synth.seed", "random seed");
    opt(synth, "--period-minutes", "synth.period_minutes", "market period, minutes");
    opt(synth, "--forecast-sigma", "synth.forecast_sigma", "also write a noisy point forecast with this sigma");

    auto* plan = app.add_subcommand("plan", "compute day-ahead nominations");
    common(plan);
    model_flags(plan);
    scenario_flags(plan);
    run_flags(plan);
    timing_flag(plan);

    auto* evaluate = app.add_subcommand("evaluate", "evaluate nominations against measured PV");
    common(evaluate);
    model_flags(evaluate);
    opt(evaluate, "--nominations", "input.nominations", "nominations CSV");
    opt(evaluate, "--input", "input.pv", "measured PV CSV");

    auto* simulate = app.add_subcommand("simulate", "plan and evaluate every day, then report indicators");
    common(simulate);
    model_flags(simulate);
    scenario_flags(simulate);
    run_flags(simulate);
    timing_flag(simulate);

    auto* sweep = app.add_subcommand("sweep-bess", "storage capacity sweep and sizing");
    common(sweep);
    model_flags(sweep);
    scenario_flags(sweep);
    run_flags(sweep);
    timing_flag(sweep);
    opt(sweep, "--cases", "sweep.cases", "comma-separated capacities in kWh; must include 0");
    opt(sweep, "--capex", "sweep.capex", "storage price per kWh, same money unit as the gain (thousands)");
    opt(sweep, "--horizon-months", "sweep.horizon_months", "months over which one simulated month counts");

    auto* scen = app.add_subcommand("gen-scenarios", "write PV scenarios for every day");
    common(scen);
    scenario_flags(scen);
    opt(scen, "--input", "input.pv", "measured PV CSV");
    opt(scen, "--capacity-kwp", "tender.capacity_kwp", "clip limit, kWp");

    auto* rerun = app.add_subcommand("rerun", "replay a run from its manifest");
    rerun->add_option("--manifest", manifest_path, "manifest.txt of an earlier run")->required();
    rerun->add_option("--out", out_dir, "output directory")->capture_default_str();
    timing_flag(rerun);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        const Context ctx{out_dir, out, timing_path};
        if (rerun->parsed()) {
            // Only --out and --timing may differ in a replay.
            auto kv = io::load_key_values(manifest_path);
            const auto command = need(kv, "command");
            for (auto it = kv.begin(); it != kv.end();) {
                if (it->first.rfind("digest.", 0) == 0) {
                    const auto& path = need(kv, it->first.substr(7));
                    if (io::file_sha256(path) != it->second)
                        fail(ErrorCode::IoError, "input '" + path + "' changed since the manifest was written");
                    it = kv.erase(it);
                } else if (it->first == "tool" || it->first == "tool.version" || it->first == "command") {
                    it = kv.erase(it);
                } else {
                    ++it;
                }
            }
            execute(command, kv, ctx);
            return 0;
        }
        for (auto* sub : app.get_subcommands()) {
            const std::string command = sub->get_name();
            KeyValues flags;
            for (const auto& b : bound)
                if (b->sub == sub && sub->get_option(b->flag)->count() > 0) flags[b->key] = b->value;
            const KeyValues config = config_path.empty() ? KeyValues{} : io::load_key_values(config_path);
            execute(command, resolve(command, config, flags), ctx);
        }
        return 0;
    } catch (const Error& e) {
        err << "capfirm: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "capfirm: " << e.what() << "\n";
        return 1;
    }
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace capfirm::cli
