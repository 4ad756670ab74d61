#pragma once

// File formats: PV traces, nominations, dispatch, scenarios, indicators,
// key-value configuration and run manifests.

#include "capfirm/domain.hpp"
#include "capfirm/evaluator.hpp"
#include "capfirm/metrics.hpp"
#include "capfirm/scenariogen.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace capfirm::io {

// Energies and powers carry 6 decimals, money 9.
inline std::string fmt_energy(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

inline std::string fmt_money(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    std::string s = buf;
    if (s == "-0.000000000") s = "0.000000000";
    return s;
}

/// Shortest text that reads back to the same double.
inline std::string fmt_exact(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
    out << content;
    if (!out) fail(ErrorCode::IoError, "write failed for '" + path + "'");
}

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorCode::IoError, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(slurp(path)); }

// --- timestamps -------------------------------------------------------------

/// YYYY-MM-DDTHH:MM[:SS] (a space may replace the T). No time zone.
inline std::optional<Timestamp> parse_timestamp(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep = 0;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed) != 6) return std::nullopt;
    if (sep != 'T' && sep != ' ') return std::nullopt;
    std::string rest = s.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty()) {
        int more = 0;
        if (std::sscanf(rest.c_str(), ":%2d%n", &sec, &more) != 1 || static_cast<std::size_t>(more) != rest.size())
            return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return std::nullopt;
    return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec};
}

inline std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day = floor<days>(ts);
    const year_month_day ymd{day};
    const hh_mm_ss hms{ts - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

// --- CSV helpers ------------------------------------------------------------

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& s, const std::string& where) {
    const auto t = trim(s);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
        fail(ErrorCode::ParseError, where + ": '" + s + "' is not a number");
    return v;
}

inline long parse_int(const std::string& s, const std::string& where) {
    const auto t = trim(s);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size()) fail(ErrorCode::ParseError, where + ": '" + s + "' is not an integer");
    return v;
}

/// Data lines of a CSV with the given header; '#' lines are comments.
struct CsvLines {
    std::vector<std::pair<int, std::vector<std::string>>> rows; // (line number, fields)
    std::vector<std::string> comments;
};

inline CsvLines read_csv(const std::string& path, const std::string& header) {
    std::istringstream in(slurp(path));
    CsvLines out;
    std::string line;
    int no = 0;
    bool seen_header = false;
    const auto cols = split(header).size();
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            out.comments.push_back(line.substr(1));
            continue;
        }
        if (!seen_header) {
            if (trim(line) != header)
                fail(ErrorCode::ParseError, path + ":" + std::to_string(no) + ": expected header '" + header + "'");
            seen_header = true;
            continue;
        }
        auto f = split(line);
        if (f.size() != cols)
            fail(ErrorCode::ParseError, path + ":" + std::to_string(no) + ": expected " + std::to_string(cols) + " fields");
        out.rows.emplace_back(no, std::move(f));
    }
    if (!seen_header) fail(ErrorCode::ParseError, path + ": missing header '" + header + "'");
    return out;
}

// --- PV traces --------------------------------------------------------------

inline constexpr const char* kPvHeader = "timestamp,power_kw";

/// Parses a PV trace. The period is inferred from the first two rows and must
/// be uniform; the trace must start at midnight and cover whole days.
inline PvTrace load_pv_csv(const std::string& path, TraceKind kind = TraceKind::measured) {
    const auto csv = read_csv(path, kPvHeader);
    if (csv.rows.size() < 2) fail(ErrorCode::PartialDay, path + ": fewer than two rows");
    PvTrace trace;
    trace.kind = kind;
    std::vector<Timestamp> stamps;
    for (const auto& [no, f] : csv.rows) {
        const auto where = path + ":" + std::to_string(no);
        const auto ts = parse_timestamp(trim(f[0]));
        if (!ts) fail(ErrorCode::ParseError, where + ": bad timestamp '" + f[0] + "'");
        const double p = parse_number(f[1], where);
        if (p < 0.0) fail(ErrorCode::NegativePower, where + ": power " + trim(f[1]) + " kW is negative");
        stamps.push_back(*ts);
        trace.values.push_back(p);
    }
    const auto step = stamps[1] - stamps[0];
    if (step.count() <= 0) fail(ErrorCode::NonUniformTimestep, path + ":" + std::to_string(csv.rows[1].first) + ": timestamps do not increase");
    for (std::size_t i = 1; i < stamps.size(); ++i)
        if (stamps[i] - stamps[i - 1] != step)
            fail(ErrorCode::NonUniformTimestep, path + ":" + std::to_string(csv.rows[i].first) + ": timestep " +
                                                    std::to_string((stamps[i] - stamps[i - 1]).count()) + " s, expected " +
                                                    std::to_string(step.count()) + " s");
    trace.start = stamps[0];
    trace.period_duration_h = static_cast<double>(step.count()) / 3600.0;
    const int T = periods_per_day(trace.period_duration_h);
    if (stamps[0] != std::chrono::floor<std::chrono::days>(stamps[0]))
        fail(ErrorCode::PartialDay, path + ": trace must start at 00:00");
    if (trace.values.size() % static_cast<std::size_t>(T) != 0)
        fail(ErrorCode::PartialDay, path + ": " + std::to_string(trace.values.size()) + " rows is not a whole number of " +
                                        std::to_string(T) + "-period days");
    return trace;
}

inline std::string pv_csv(const PvTrace& trace) {
    std::string out = std::string(kPvHeader) + "\n";
    const auto step = std::chrono::seconds{std::llround(trace.period_duration_h * 3600.0)};
    for (std::size_t i = 0; i < trace.values.size(); ++i)
        out += format_timestamp(trace.start + step * static_cast<long>(i)) + "," + fmt_energy(trace.values[i]) + "\n";
    return out;
}

// --- nominations ------------------------------------------------------------

inline constexpr const char* kNominationHeader = "day,period,e_star_kwh";

inline std::string nominations_csv(const std::vector<planners::NominationSchedule>& days,
                                   const std::vector<std::string>& header_comments) {
    std::string out;
    for (const auto& c : header_comments) out += "# " + c + "\n";
    out += std::string(kNominationHeader) + "\n";
    for (const auto& d : days)
        for (std::size_t t = 0; t < d.nominations.size(); ++t)
            out += std::to_string(d.day_index) + "," + std::to_string(t + 1) + "," + fmt_energy(d.nominations[t]) + "\n";
    return out;
}

/// Reads nominations grouped by day, in file order. Periods must run 1..T.
inline std::vector<planners::NominationSchedule> load_nominations_csv(const std::string& path) {
    const auto csv = read_csv(path, kNominationHeader);
    std::vector<planners::NominationSchedule> days;
    for (const auto& [no, f] : csv.rows) {
        const auto where = path + ":" + std::to_string(no);
        const int day = static_cast<int>(parse_int(f[0], where));
        const long period = parse_int(f[1], where);
        const double v = parse_number(f[2], where);
        if (days.empty() || days.back().day_index != day) {
            days.emplace_back();
            days.back().day_index = day;
        }
        auto& d = days.back();
        if (period != static_cast<long>(d.nominations.size()) + 1)
            fail(ErrorCode::ParseError, where + ": period " + std::to_string(period) + " out of sequence");
        d.nominations.push_back(v);
    }
    return days;
}

// --- dispatch ---------------------------------------------------------------

inline constexpr const char* kDispatchHeader =
    "day,period,e_star_kwh,e_kwh,dev_pos_kwh,dev_neg_kwh,p_kw,p_cha_kw,p_dis_kw,soc_kwh";

inline std::string dispatch_csv(const std::vector<evaluator::DispatchResult>& days) {
    std::string out = std::string(kDispatchHeader) + "\n";
    for (const auto& d : days)
        for (std::size_t t = 0; t < d.exports.size(); ++t)
            out += std::to_string(d.day_index) + "," + std::to_string(t + 1) + "," + fmt_energy(d.e_star[t]) + "," +
                   fmt_energy(d.exports[t]) + "," + fmt_energy(d.dev_pos[t]) + "," + fmt_energy(d.dev_neg[t]) + "," +
                   fmt_energy(d.production[t]) + "," + fmt_energy(d.charge[t]) + "," + fmt_energy(d.discharge[t]) +
                   "," + fmt_energy(d.soc[t]) + "\n";
    return out;
}

inline std::vector<evaluator::DispatchResult> load_dispatch_csv(const std::string& path, const TenderParams& params) {
    const auto csv = read_csv(path, kDispatchHeader);
    std::vector<evaluator::DispatchResult> days;
    for (const auto& [no, f] : csv.rows) {
        const auto where = path + ":" + std::to_string(no);
        const int day = static_cast<int>(parse_int(f[0], where));
        if (days.empty() || days.back().day_index != day) {
            days.emplace_back();
            days.back().day_index = day;
        }
        auto& d = days.back();
        if (parse_int(f[1], where) != static_cast<long>(d.exports.size()) + 1)
            fail(ErrorCode::ParseError, where + ": period out of sequence");
        d.e_star.push_back(parse_number(f[2], where));
        d.exports.push_back(parse_number(f[3], where));
        d.dev_pos.push_back(parse_number(f[4], where));
        d.dev_neg.push_back(parse_number(f[5], where));
        d.production.push_back(parse_number(f[6], where));
        d.charge.push_back(parse_number(f[7], where));
        d.discharge.push_back(parse_number(f[8], where));
        d.soc.push_back(parse_number(f[9], where));
    }
    for (auto& d : days) d.objective_eval = evaluator::recompute_objective(d, params);
    return days;
}

// --- scenarios --------------------------------------------------------------

inline constexpr const char* kScenarioHeader = "scenario_id,period,power_kw";

inline std::string scenarios_csv(const ScenarioSet& set) {
    std::string out = std::string(kScenarioHeader) + "\n";
    for (std::size_t w = 0; w < set.scenarios.size(); ++w)
        for (std::size_t t = 0; t < set.scenarios[w].size(); ++t)
            out += std::to_string(w + 1) + "," + std::to_string(t + 1) + "," + fmt_energy(set.scenarios[w][t]) + "\n";
    return out;
}

/// Probabilities are uniform.
inline ScenarioSet load_scenarios_csv(const std::string& path) {
    const auto csv = read_csv(path, kScenarioHeader);
    ScenarioSet set;
    for (const auto& [no, f] : csv.rows) {
        const auto where = path + ":" + std::to_string(no);
        const long w = parse_int(f[0], where);
        if (w == static_cast<long>(set.scenarios.size()) + 1) set.scenarios.emplace_back();
        if (w != static_cast<long>(set.scenarios.size()))
            fail(ErrorCode::ParseError, where + ": scenario id out of sequence");
        auto& s = set.scenarios.back();
        if (parse_int(f[1], where) != static_cast<long>(s.size()) + 1)
            fail(ErrorCode::ParseError, where + ": period out of sequence");
        s.push_back(parse_number(f[2], where));
    }
    if (set.scenarios.empty()) fail(ErrorCode::EmptyScenarioSet, path + ": no scenarios");
    set.probabilities.assign(set.scenarios.size(), 1.0 / static_cast<double>(set.scenarios.size()));
    return set;
}

// --- indicators -------------------------------------------------------------

inline constexpr const char* kIndicatorHeader =
    "case_id,bess_capacity_kwh,production_total_mwh,production_ratio_pct,charge_ratio_pct,full_bess_days_pct,"
    "export_ratio_pct,measured_total_mwh,r_max_k,gross_revenue_k,revenue_ratio_pct,penalty_total_k,net_revenue_k,"
    "objective_eval_k,delta_net_revenue_k";

inline std::string indicator_row(int case_id, double capacity, const metrics::IndicatorTable& t, double delta) {
    auto pct = [](double v) { return fmt_money(v); };
    return std::to_string(case_id) + "," + fmt_energy(capacity) + "," + fmt_money(t.production_total_mwh) + "," +
           pct(t.production_ratio) + "," + pct(t.charge_ratio) + "," +
           (t.full_bess_days_ratio ? pct(*t.full_bess_days_ratio) : std::string()) + "," + pct(t.export_ratio) + "," +
           fmt_money(t.measured_total_mwh) + "," + fmt_money(t.r_max) + "," + fmt_money(t.gross_revenue) + "," +
           pct(t.revenue_ratio) + "," + fmt_money(t.penalty_total) + "," + fmt_money(t.net_revenue) + "," +
           fmt_money(t.objective_eval) + "," + fmt_money(delta) + "\n";
}

// --- key-value files (config and manifest) ----------------------------------

/// Flat key-value text: `key = value` lines, optional `[section]` headers
/// that prefix following keys as `section.key`, and `#` or `;` comments,
/// whole-line or after whitespace.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line, section;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                fail(ErrorCode::ParseError, origin + ":" + std::to_string(no) + ": bad section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.find('.') != std::string::npos)
                fail(ErrorCode::ParseError, origin + ":" + std::to_string(no) + ": sections do not nest");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail(ErrorCode::ParseError, origin + ":" + std::to_string(no) + ": expected key = value");
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) fail(ErrorCode::ParseError, origin + ":" + std::to_string(no) + ": empty key");
        const auto full = section.empty() ? key : section + "." + key;
        if (kv.count(full)) fail(ErrorCode::ParseError, origin + ":" + std::to_string(no) + ": duplicate key '" + full + "'");
        auto value = t.substr(eq + 1);
        // Inline comments need leading whitespace so values may contain # or ;.
        for (std::size_t i = 1; i < value.size(); ++i)
            if ((value[i] == '#' || value[i] == ';') && std::isspace(static_cast<unsigned char>(value[i - 1]))) {
                value.resize(i);
                break;
            }
        kv[full] = trim(value);
    }
    return kv;
}

inline KeyValues load_key_values(const std::string& path) { return parse_key_values(slurp(path), path); }

inline std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

} // namespace capfirm::io
