#pragma once

// First-order optimality residuals recomputed from the problem data and a
// candidate primal/dual point. Nothing here depends on solver internals.

#include "capfirm/qp/canonical.hpp"

#include <algorithm>
#include <cmath>

namespace capfirm::qp {

struct KktResiduals {
    double primal_infeasibility = 0.0; // max violation / (1 + max |rhs or bound|)
    double stationarity = 0.0;         // max |grad L| and dual sign violation / (1 + max(|c|, |2 q x|))
    double complementarity = 0.0;      // max |multiplier * slack| / (1 + |f(x)|)

    [[nodiscard]] double worst() const { return std::max({primal_infeasibility, stationarity, complementarity}); }
    [[nodiscard]] bool within(double tol) const { return worst() <= tol; }
};

/// Scale used to normalise primal violations: the largest finite right-hand
/// side or bound magnitude.
inline double primal_scale(const CanonicalQP& qp) {
    double s = 0.0;
    for (double v : qp.eq_rhs) s = std::max(s, std::abs(v));
    for (double v : qp.ineq_upper) s = std::max(s, std::abs(v));
    for (double v : qp.lower)
        if (std::isfinite(v)) s = std::max(s, std::abs(v));
    for (double v : qp.upper)
        if (std::isfinite(v)) s = std::max(s, std::abs(v));
    return s;
}

/// Largest absolute primal violation of every row and bound.
inline double max_violation(const CanonicalQP& qp, std::span<const double> x) {
    double viol = 0.0;
    for (std::size_t r = 0; r < qp.eq.rows(); ++r) viol = std::max(viol, std::abs(qp.eq.dot(r, x) - qp.eq_rhs[r]));
    for (std::size_t r = 0; r < qp.ineq.rows(); ++r) viol = std::max(viol, qp.ineq.dot(r, x) - qp.ineq_upper[r]);
    for (std::size_t j = 0; j < x.size(); ++j) viol = std::max({viol, qp.lower[j] - x[j], x[j] - qp.upper[j]});
    return viol;
}

inline KktResiduals kkt_residuals(const CanonicalQP& qp, const QpSolution& sol) {
    const auto n = static_cast<std::size_t>(qp.n);
    if (sol.primal.size() != n || sol.bound_duals.size() != n || sol.eq_duals.size() != qp.eq.rows() ||
        sol.ineq_duals.size() != qp.ineq.rows())
        fail(ErrorCode::DimensionMismatch, "solution vectors do not match the QP dimensions");
    const auto& x = sol.primal;

    KktResiduals res;
    res.primal_infeasibility = max_violation(qp, x) / (1.0 + primal_scale(qp));

    std::vector<double> grad(n);
    double cost_scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double hx = 2.0 * qp.quadratic_diag[j] * x[j];
        grad[j] = hx + qp.linear_cost[j] - sol.bound_duals[j];
        cost_scale = std::max({cost_scale, std::abs(hx), std::abs(qp.linear_cost[j])});
    }
    qp.eq.add_transpose_product(sol.eq_duals, grad);
    qp.ineq.add_transpose_product(sol.ineq_duals, grad);
    double stat = 0.0;
    for (double g : grad) stat = std::max(stat, std::abs(g));
    for (double lam : sol.ineq_duals) stat = std::max(stat, -lam);
    for (std::size_t j = 0; j < n; ++j) {
        const double z = sol.bound_duals[j];
        if (z > 0.0 && !std::isfinite(qp.lower[j])) stat = std::max(stat, z);
        if (z < 0.0 && !std::isfinite(qp.upper[j])) stat = std::max(stat, -z);
    }
    res.stationarity = stat / (1.0 + cost_scale);

    double comp = 0.0;
    for (std::size_t r = 0; r < qp.ineq.rows(); ++r)
        comp = std::max(comp, std::abs(sol.ineq_duals[r] * (qp.ineq_upper[r] - qp.ineq.dot(r, x))));
    for (std::size_t j = 0; j < n; ++j) {
        const double z = sol.bound_duals[j];
        if (z > 0.0 && std::isfinite(qp.lower[j])) comp = std::max(comp, z * std::abs(x[j] - qp.lower[j]));
        if (z < 0.0 && std::isfinite(qp.upper[j])) comp = std::max(comp, -z * std::abs(qp.upper[j] - x[j]));
    }
    res.complementarity = comp / (1.0 + std::abs(qp.objective(x)));
    return res;
}

} // namespace capfirm::qp
