#pragma once

// Core domain types shared by every module. Units: energies in kWh, powers in
// kW, period durations in hours, money in the tender currency.

#include "capfirm/error.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace capfirm {

using Timestamp = std::chrono::sys_seconds; // timezone-naive local time

/// Ramp limit between consecutive nominations, given in absolute terms or as a
/// share of the installed PV capacity.
struct RampLimitKw {
    double kw = 0.0;
};
struct RampLimitPercent {
    double percent_of_capacity = 0.0;
};
using RampLimitSpec = std::variant<RampLimitKw, RampLimitPercent>;

/// Unvalidated tender record as read from configuration.
struct RawTenderParams {
    double selling_price = 0.045;      // per kWh
    double slack_price = 0.0045;       // per kWh^2
    double period_duration_h = 0.25;
    RampLimitSpec ramp_limit = RampLimitPercent{10.0};
    double export_cap_kw = 2000.0;
    double energy_deadband_kwh = 25.0;
    double installed_capacity_kwp = 2000.0;
};

/// Validated market/contract constants. Only produced by validate_tender_params.
struct TenderParams {
    double selling_price = 0.0;
    double slack_price = 0.0;
    double period_duration_h = 0.0;
    double ramp_limit_kw = 0.0;
    double export_cap_kw = 0.0;
    double energy_deadband_kwh = 0.0;
    double installed_capacity_kwp = 0.0;
    int periods_per_day = 0;

    [[nodiscard]] RawTenderParams raw() const {
        return RawTenderParams{selling_price, slack_price, period_duration_h, RampLimitKw{ramp_limit_kw},
                               export_cap_kw, energy_deadband_kwh, installed_capacity_kwp};
    }
    bool operator==(const TenderParams&) const = default;
};

struct BessSpec {
    double capacity_max_kwh = 1000.0;
    double capacity_min_kwh = 0.0;
    double charge_power_max_kw = 1000.0;
    double discharge_power_max_kw = 1000.0;
    double eta_charge = 1.0;
    double eta_discharge = 1.0;
    double soc_init_kwh = 0.0;
    double soc_end_kwh = 0.0;

    static BessSpec none() { return BessSpec{0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0}; }
    bool operator==(const BessSpec&) const = default;
};

enum class TraceKind { measured, point_forecast };

struct PvTrace {
    Timestamp start{};
    double period_duration_h = 0.25;
    std::vector<double> values; // kW, one per market period
    TraceKind kind = TraceKind::measured;
};

struct MarketDay {
    int day_index = 0;
    std::size_t first_period = 0;
    int periods = 0;
};

struct ScenarioSet {
    std::vector<std::vector<double>> scenarios; // kW, scenario x period
    std::vector<double> probabilities;

    [[nodiscard]] std::size_t size() const noexcept { return scenarios.size(); }
};

/// Number of market periods in a day; throws unless 24 h is an exact multiple.
/// Energies and powers are stored on the 1e-6 grid used by every CSV writer,
/// so a file written and read back reproduces the in-memory value exactly.
inline constexpr double kOutputScale = 1e6;

inline double snap_to_output_grid(double v) {
    // Dividing by the exact scale yields the double nearest to k * 1e-6,
    // which is what parsing the printed decimal returns.
    const double s = std::round(v * kOutputScale) / kOutputScale;
    return s == 0.0 ? 0.0 : s;
}

inline int periods_per_day(double period_duration_h) {
    if (!(period_duration_h > 0.0) || !std::isfinite(period_duration_h))
        fail(ErrorCode::NonPositivePeriod, "period duration must be positive, got " + std::to_string(period_duration_h));
    const double ratio = 24.0 / period_duration_h;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
        fail(ErrorCode::PeriodNotDividingDay,
             "24 h is not a whole number of " + std::to_string(period_duration_h) + " h periods");
    return static_cast<int>(rounded);
}

namespace detail {
inline void require_nonnegative(double value, const char* name) {
    if (!(value >= 0.0) || !std::isfinite(value))
        fail(ErrorCode::NegativeParameter, std::string(name) + " must be finite and >= 0, got " + std::to_string(value));
}
} // namespace detail

inline TenderParams validate_tender_params(const RawTenderParams& raw) {
    const int periods = periods_per_day(raw.period_duration_h);
    detail::require_nonnegative(raw.selling_price, "selling_price");
    detail::require_nonnegative(raw.slack_price, "slack_price");
    detail::require_nonnegative(raw.energy_deadband_kwh, "energy_deadband");
    detail::require_nonnegative(raw.export_cap_kw, "export_cap");
    if (!(raw.installed_capacity_kwp > 0.0) || !std::isfinite(raw.installed_capacity_kwp))
        fail(ErrorCode::NegativeParameter, "installed_capacity must be > 0");

    double ramp_kw = 0.0;
    if (const auto* kw = std::get_if<RampLimitKw>(&raw.ramp_limit)) {
        ramp_kw = kw->kw;
    } else {
        const auto& pct = std::get<RampLimitPercent>(raw.ramp_limit);
        detail::require_nonnegative(pct.percent_of_capacity, "ramp_limit percent");
        ramp_kw = pct.percent_of_capacity / 100.0 * raw.installed_capacity_kwp;
    }
    detail::require_nonnegative(ramp_kw, "ramp_limit");

    TenderParams p;
    p.selling_price = raw.selling_price;
    p.slack_price = raw.slack_price;
    // Stored as 24/T so that T * period_duration_h == 24 holds exactly.
    p.period_duration_h = 24.0 / periods;
    p.ramp_limit_kw = ramp_kw;
    p.export_cap_kw = raw.export_cap_kw;
    p.energy_deadband_kwh = raw.energy_deadband_kwh;
    p.installed_capacity_kwp = raw.installed_capacity_kwp;
    p.periods_per_day = periods;
    return p;
}

inline BessSpec validate_bess(const BessSpec& b) {
    detail::require_nonnegative(b.capacity_min_kwh, "capacity_min");
    detail::require_nonnegative(b.charge_power_max_kw, "charge_power_max");
    detail::require_nonnegative(b.discharge_power_max_kw, "discharge_power_max");
    if (!(b.capacity_max_kwh >= b.capacity_min_kwh) || !std::isfinite(b.capacity_max_kwh))
        fail(ErrorCode::InvalidParameter, "capacity_max must be >= capacity_min");
    auto in_unit = [](double eta) { return eta > 0.0 && eta <= 1.0; };
    if (!in_unit(b.eta_charge) || !in_unit(b.eta_discharge))
        fail(ErrorCode::InvalidParameter, "efficiencies must lie in (0, 1]");
    auto in_range = [&](double s) { return s >= b.capacity_min_kwh && s <= b.capacity_max_kwh; };
    if (!in_range(b.soc_init_kwh) || !in_range(b.soc_end_kwh))
        fail(ErrorCode::InvalidParameter, "soc_init and soc_end must lie within [capacity_min, capacity_max]");
    return b;
}

/// Checks a trace against the tender: matching period, whole days, and
/// 0 <= value <= installed capacity everywhere. Negative readings are errors.
inline void validate_trace(const PvTrace& trace, const TenderParams& params) {
    if (std::abs(trace.period_duration_h - params.period_duration_h) > 1e-9)
        fail(ErrorCode::InvalidParameter, "trace period duration does not match tender period duration");
    const auto periods = static_cast<std::size_t>(params.periods_per_day);
    if (trace.values.empty() || trace.values.size() % periods != 0)
        fail(ErrorCode::PartialDay, "trace length " + std::to_string(trace.values.size()) +
                                        " is not a positive multiple of " + std::to_string(periods));
    for (std::size_t i = 0; i < trace.values.size(); ++i) {
        const double v = trace.values[i];
        if (!std::isfinite(v) || v < 0.0)
            fail(ErrorCode::NegativePower, "negative or non-finite PV value at period " + std::to_string(i));
        if (v > params.installed_capacity_kwp)
            fail(ErrorCode::PowerAboveCapacity, "PV value above installed capacity at period " + std::to_string(i));
    }
}

inline std::vector<MarketDay> market_days(const PvTrace& trace, int periods) {
    if (periods <= 0 || trace.values.size() % static_cast<std::size_t>(periods) != 0)
        fail(ErrorCode::PartialDay, "trace does not split into whole days");
    std::vector<MarketDay> days;
    const auto n = trace.values.size() / static_cast<std::size_t>(periods);
    days.reserve(n);
    for (std::size_t d = 0; d < n; ++d)
        days.push_back(MarketDay{static_cast<int>(d), d * static_cast<std::size_t>(periods), periods});
    return days;
}

/// Copy of one market day as a standalone trace.
inline PvTrace day_trace(const PvTrace& trace, const MarketDay& day) {
    if (day.first_period + static_cast<std::size_t>(day.periods) > trace.values.size())
        fail(ErrorCode::LengthMismatch, "market day exceeds trace");
    PvTrace out;
    out.start = trace.start + std::chrono::seconds(static_cast<long long>(
                                  std::llround(static_cast<double>(day.first_period) * trace.period_duration_h * 3600.0)));
    out.period_duration_h = trace.period_duration_h;
    out.kind = trace.kind;
    const auto first = trace.values.begin() + static_cast<std::ptrdiff_t>(day.first_period);
    out.values.assign(first, first + day.periods);
    return out;
}

inline void validate_scenarios(const ScenarioSet& set, const TenderParams& params) {
    if (set.scenarios.empty()) fail(ErrorCode::EmptyScenarioSet, "scenario set is empty");
    if (set.probabilities.size() != set.scenarios.size())
        fail(ErrorCode::LengthMismatch, "one probability per scenario required");
    double total = 0.0;
    for (double p : set.probabilities) {
        if (!(p >= 0.0)) fail(ErrorCode::InvalidParameter, "negative scenario probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidParameter, "scenario probabilities must sum to 1");
    for (const auto& s : set.scenarios) {
        if (s.size() != static_cast<std::size_t>(params.periods_per_day))
            fail(ErrorCode::LengthMismatch, "scenario length differs from periods per day");
        for (double v : s)
            if (!(v >= 0.0) || v > params.installed_capacity_kwp)
                fail(ErrorCode::InvalidParameter, "scenario value outside [0, installed capacity]");
    }
}

} // namespace capfirm
