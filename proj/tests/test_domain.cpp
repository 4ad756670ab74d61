#include "catch_amalgamated.hpp"

#include "capfirm/domain.hpp"

#include <random>

using namespace capfirm;

namespace {
ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::UsageError;
}
} // namespace

TEST_CASE("case-study tender resolves the ramp as a share of capacity", "[domain]") {
    RawTenderParams raw; // defaults are the case-study values
    raw.period_duration_h = 15.0 / 60.0;
    raw.ramp_limit = RampLimitPercent{10.0};
    const auto p = validate_tender_params(raw);
    CHECK(p.ramp_limit_kw == 200.0);
    CHECK(p.periods_per_day == 96);
    CHECK(p.period_duration_h == 0.25);

    raw.ramp_limit = RampLimitKw{10.0};
    CHECK(validate_tender_params(raw).ramp_limit_kw == 10.0);
}

TEST_CASE("tender validation errors", "[domain]") {
    RawTenderParams raw;
    raw.period_duration_h = 0.0;
    CHECK(code_of([&] { validate_tender_params(raw); }) == ErrorCode::NonPositivePeriod);
    raw = RawTenderParams{};
    raw.energy_deadband_kwh = -1.0;
    CHECK(code_of([&] { validate_tender_params(raw); }) == ErrorCode::NegativeParameter);
    raw = RawTenderParams{};
    raw.period_duration_h = 7.0 / 60.0;
    CHECK(code_of([&] { validate_tender_params(raw); }) == ErrorCode::PeriodNotDividingDay);
    raw = RawTenderParams{};
    raw.installed_capacity_kwp = 0.0;
    CHECK(code_of([&] { validate_tender_params(raw); }) == ErrorCode::NegativeParameter);
}

TEST_CASE("periods per day", "[domain]") {
    CHECK(periods_per_day(0.25) == 96);
    CHECK(periods_per_day(1.0) == 24);
    CHECK(periods_per_day(0.5) == 48);
    CHECK(code_of([] { periods_per_day(7.0 / 60.0); }) == ErrorCode::PeriodNotDividingDay);
    CHECK(code_of([] { periods_per_day(-1.0); }) == ErrorCode::NonPositivePeriod);
}

TEST_CASE("validated tenders are idempotent and tile the day", "[domain][property]") {
    const double minutes[] = {1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 16, 18, 20, 24, 30, 32, 36, 40, 45, 48, 60, 72, 80, 90, 96, 120};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (double m : minutes) {
        RawTenderParams raw;
        raw.period_duration_h = m / 60.0;
        raw.selling_price = u(rng);
        raw.slack_price = u(rng);
        raw.ramp_limit = RampLimitPercent{u(rng) * 10};
        const auto p = validate_tender_params(raw);
        CHECK(p.periods_per_day * p.period_duration_h == 24.0);
        CHECK(validate_tender_params(p.raw()) == p);
    }
}

TEST_CASE("trace validation rejects negative, excessive, and partial data", "[domain]") {
    const auto params = validate_tender_params(RawTenderParams{});
    PvTrace trace;
    trace.values.assign(96, 10.0);
    CHECK_NOTHROW(validate_trace(trace, params));
    trace.values[5] = -1.0;
    CHECK(code_of([&] { validate_trace(trace, params); }) == ErrorCode::NegativePower);
    trace.values[5] = 2000.5;
    CHECK(code_of([&] { validate_trace(trace, params); }) == ErrorCode::PowerAboveCapacity);
    trace.values.assign(95, 0.0);
    CHECK(code_of([&] { validate_trace(trace, params); }) == ErrorCode::PartialDay);
}

TEST_CASE("accepted traces stay within [0, capacity] and split into days", "[domain][property]") {
    const auto params = validate_tender_params(RawTenderParams{});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-100.0, 2100.0);
    int accepted = 0;
    for (int trial = 0; trial < 200; ++trial) {
        PvTrace t;
        t.values.resize(96 * 2);
        for (auto& v : t.values) v = trial % 2 ? std::clamp(u(rng), 0.0, 2000.0) : u(rng);
        try {
            validate_trace(t, params);
        } catch (const Error&) {
            continue;
        }
        ++accepted;
        for (double v : t.values) CHECK((v >= 0.0 && v <= 2000.0));
        const auto days = market_days(t, params.periods_per_day);
        REQUIRE(days.size() == 2);
        CHECK(day_trace(t, days[1]).values.front() == t.values[96]);
        CHECK((day_trace(t, days[1]).start - t.start) == std::chrono::hours(24));
    }
    CHECK(accepted >= 100);
}

TEST_CASE("bess and scenario validation", "[domain]") {
    BessSpec b;
    CHECK_NOTHROW(validate_bess(b));
    b.soc_init_kwh = 1500.0;
    CHECK_THROWS_AS(validate_bess(b), Error);
    CHECK_NOTHROW(validate_bess(BessSpec::none()));

    const auto params = validate_tender_params(RawTenderParams{});
    ScenarioSet s;
    CHECK(code_of([&] { validate_scenarios(s, params); }) == ErrorCode::EmptyScenarioSet);
    s.scenarios.assign(4, std::vector<double>(96, 1.0));
    s.probabilities.assign(4, 0.25);
    CHECK_NOTHROW(validate_scenarios(s, params));
    s.probabilities[0] = 0.3;
    CHECK_THROWS_AS(validate_scenarios(s, params), Error);
}
