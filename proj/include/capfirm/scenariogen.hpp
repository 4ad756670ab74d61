#pragma once

// Ideal unbiased PV predictor: multiplicative moving-average error paths over
// forecast lead times, with alpha_i = p^i.

#include "capfirm/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace capfirm::scenariogen {

struct ErrorModelParams {
    double p = 0.9;
    double sigma = 0.035;
    int max_lead = 128;
    int lead_offset = 33; // lead of the first delivery period (16:00 gate, 15 min periods)

    bool operator==(const ErrorModelParams&) const = default;
};

struct ErrorPath {
    std::vector<double> epsilon; // epsilon[k-1] for lead k = 1..K
};

inline void validate(const ErrorModelParams& m) {
    if (!(m.p >= 0.0 && m.p < 1.0)) fail(ErrorCode::InvalidParameter, "p must lie in [0, 1)");
    if (!(m.sigma >= 0.0) || !std::isfinite(m.sigma)) fail(ErrorCode::InvalidParameter, "sigma must be >= 0");
    if (m.max_lead < 1) fail(ErrorCode::InvalidParameter, "max_lead must be >= 1");
    if (m.lead_offset < 1 || m.lead_offset > m.max_lead)
        fail(ErrorCode::InvalidParameter, "lead_offset must lie in [1, max_lead]");
}

/// splitmix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of substream `index` under `seed`. Substreams never depend on how many
/// siblings are drawn.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// eps_k = eta_k + sum_{i=1}^{k-1} p^i eta_{k-i}, computed through the
/// equivalent recursion eps_k = eta_k + p * eps_{k-1}.
template <typename Engine>
ErrorPath ma_error_path(const ErrorModelParams& m, Engine& engine) {
    validate(m);
    ErrorPath path;
    path.epsilon.assign(static_cast<std::size_t>(m.max_lead), 0.0);
    if (m.sigma == 0.0) return path;
    std::normal_distribution<double> eta(0.0, m.sigma);
    double prev = 0.0;
    for (auto& eps : path.epsilon) {
        eps = eta(engine) + m.p * prev;
        prev = eps;
    }
    return path;
}

inline ErrorPath ma_error_path(const ErrorModelParams& m, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    return ma_error_path(m, engine);
}

/// Var(eps_k) = sigma^2 (1 - p^(2k)) / (1 - p^2), k = 1..K.
inline std::vector<double> variance_profile(double p, double sigma, int max_lead) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::InvalidParameter, "p must lie in [0, 1)");
    std::vector<double> out(static_cast<std::size_t>(std::max(max_lead, 0)));
    const double p2 = p * p;
    double power = 1.0; // p^(2k)
    for (auto& v : out) {
        power *= p2;
        v = sigma * sigma * (1.0 - power) / (1.0 - p2);
    }
    return out;
}

inline double asymptotic_variance_factor(double p) { return 1.0 / (1.0 - p * p); }

/// sigma such that 3 standard deviations of the plateau error equal eps_max.
inline double sigma_from_eps_max(double eps_max, double p) {
    if (!(eps_max >= 0.0)) fail(ErrorCode::InvalidParameter, "eps_max must be >= 0");
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::InvalidParameter, "p must lie in [0, 1)");
    return eps_max * std::sqrt(1.0 - p * p) / 3.0;
}

/// Scenario omega of `truth_day`: truth_t * (1 + eps_{lead(t)}), clipped to
/// [0, installed capacity] and stored on the output grid. Probabilities are
/// uniform. When `leads` is empty period t (0-based) uses lead
/// lead_offset + t, which needs T = K - offset + 1.
inline ScenarioSet generate_scenarios(const PvTrace& truth_day, const ErrorModelParams& m, int n_scenarios,
                                      std::uint64_t seed, double installed_capacity_kwp,
                                      const std::vector<int>& leads = {}) {
    validate(m);
    if (n_scenarios < 1) fail(ErrorCode::EmptyScenarioSet, "n_scenarios must be >= 1");
    const auto periods = truth_day.values.size();
    std::vector<int> lead_of(periods);
    if (leads.empty()) {
        if (static_cast<long>(periods) != m.max_lead - m.lead_offset + 1)
            fail(ErrorCode::LengthMismatch, "day has " + std::to_string(periods) + " periods but leads " +
                                                std::to_string(m.lead_offset) + ".." + std::to_string(m.max_lead) +
                                                " cover " + std::to_string(m.max_lead - m.lead_offset + 1));
        for (std::size_t t = 0; t < periods; ++t) lead_of[t] = m.lead_offset + static_cast<int>(t);
    } else {
        if (leads.size() != periods) fail(ErrorCode::LengthMismatch, "one lead per period required");
        for (std::size_t t = 0; t < periods; ++t) {
            if (leads[t] < 1 || leads[t] > m.max_lead) fail(ErrorCode::InvalidParameter, "lead outside [1, K]");
            lead_of[t] = leads[t];
        }
    }

    ScenarioSet set;
    set.scenarios.reserve(static_cast<std::size_t>(n_scenarios));
    for (int w = 0; w < n_scenarios; ++w) {
        const auto path = ma_error_path(m, substream_seed(seed, static_cast<std::uint64_t>(w)));
        std::vector<double> values(periods);
        for (std::size_t t = 0; t < periods; ++t) {
            const double truth = truth_day.values[t];
            const double eps = path.epsilon[static_cast<std::size_t>(lead_of[t] - 1)];
            values[t] = truth == 0.0 ? 0.0 : snap_to_output_grid(std::clamp(truth * (1.0 + eps), 0.0, installed_capacity_kwp));
        }
        set.scenarios.push_back(std::move(values));
    }
    set.probabilities.assign(static_cast<std::size_t>(n_scenarios), 1.0 / n_scenarios);
    return set;
}

} // namespace capfirm::scenariogen
