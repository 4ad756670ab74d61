#pragma once

// Synthetic PV traces for desk-scale runs. Each day is a clear-sky bell times a
// clear-sky index that switches between sun and cloud shade. Defaults mimic a
// winter month of a mid-latitude plant: short days, many overcast or broken
// days, and 15-minute swings of several hundred kW.

#include "capfirm/domain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace capfirm {

struct SynthOptions {
    double period_duration_h = 0.25;
    double sunrise_h = 7.75;
    double sunset_h = 17.75;
    // Daily cloudiness c ~ Beta(alpha, beta); each period is shaded with probability c.
    double cloudiness_alpha = 1.5;
    double cloudiness_beta = 1.0;
    double regime_switch_prob = 0.2; // per period chance of redrawing sun/shade
    double haze_min = 0.75;          // sunny clear-sky index ~ U(haze_min, 1) per day
    double shade_min = 0.1;          // shaded clear-sky index ~ U(shade_min, shade_max)
    double shade_max = 0.5;
    double flicker = 0.05;           // relative jitter in sun
    Timestamp start = std::chrono::sys_days{std::chrono::year{2019} / 2 / 1};
};

/// Deterministic per seed. The maximum of the trace equals
/// peak_fraction * capacity (up to the output grid).
inline PvTrace synth_pv_trace(int days, double capacity_kwp, double peak_fraction, std::uint64_t seed,
                              const SynthOptions& opt = {}) {
    if (days < 1) fail(ErrorCode::InvalidParameter, "days must be >= 1");
    if (!(capacity_kwp > 0.0)) fail(ErrorCode::InvalidParameter, "capacity must be > 0");
    if (!(peak_fraction >= 0.0 && peak_fraction <= 1.0)) fail(ErrorCode::InvalidParameter, "peak_fraction must lie in [0, 1]");
    const int T = periods_per_day(opt.period_duration_h);
    if (!(opt.sunrise_h >= 0.0 && opt.sunrise_h < opt.sunset_h && opt.sunset_h <= 24.0))
        fail(ErrorCode::InvalidParameter, "daylight window must lie inside the day");
    if (!(opt.cloudiness_alpha > 0.0 && opt.cloudiness_beta > 0.0))
        fail(ErrorCode::InvalidParameter, "cloudiness shape parameters must be > 0");
    if (!(opt.regime_switch_prob >= 0.0 && opt.regime_switch_prob <= 1.0))
        fail(ErrorCode::InvalidParameter, "regime_switch_prob must lie in [0, 1]");
    if (!(0.0 <= opt.shade_min && opt.shade_min <= opt.shade_max && opt.haze_min > 0.0 && opt.haze_min <= 1.0))
        fail(ErrorCode::InvalidParameter, "clear-sky index ranges are inconsistent");

    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> ga(opt.cloudiness_alpha, 1.0), gb(opt.cloudiness_beta, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0), haze(opt.haze_min, 1.0), shade(opt.shade_min, opt.shade_max);

    PvTrace trace;
    trace.start = opt.start;
    trace.period_duration_h = opt.period_duration_h;
    trace.kind = TraceKind::measured;
    trace.values.assign(static_cast<std::size_t>(days) * static_cast<std::size_t>(T), 0.0);

    const double span = opt.sunset_h - opt.sunrise_h;
    for (int d = 0; d < days; ++d) {
        const double x = ga(rng), y = gb(rng);
        const double cloudiness = x / (x + y);
        const double clear = haze(rng);
        bool sun = u01(rng) > cloudiness;
        double shaded = shade(rng);
        for (int t = 0; t < T; ++t) {
            // Draw every period, day or night, so the stream layout is fixed.
            if (u01(rng) < opt.regime_switch_prob) {
                sun = u01(rng) > cloudiness;
                shaded = shade(rng);
            }
            const double jitter = u01(rng);
            const double h = (t + 0.5) * opt.period_duration_h; // period midpoint
            if (h <= opt.sunrise_h || h >= opt.sunset_h) continue;
            const double bell = std::pow(std::sin(std::numbers::pi * (h - opt.sunrise_h) / span), 2.0);
            const double k = sun ? clear * (1.0 - opt.flicker * jitter) : shaded;
            trace.values[static_cast<std::size_t>(d * T + t)] = bell * k;
        }
    }
    const double top = *std::max_element(trace.values.begin(), trace.values.end());
    const double scale = top > 0.0 ? peak_fraction * capacity_kwp / top : 0.0;
    for (auto& v : trace.values) v = snap_to_output_grid(v * scale);
    return trace;
}

} // namespace capfirm
