#pragma once

// Canonical convex QP with a diagonal Hessian:
//
//   minimize    sum_j q_j x_j^2 + c_j x_j + constant
//   subject to  G x <= g,  E x = b,  l <= x <= u.

#include "capfirm/error.hpp"

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace capfirm::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Term {
    int col = 0;
    double coef = 0.0;
};

/// Compressed sparse rows.
struct SparseRows {
    std::vector<std::size_t> start{0};
    std::vector<int> col;
    std::vector<double> val;

    [[nodiscard]] std::size_t rows() const noexcept { return start.size() - 1; }
    [[nodiscard]] std::size_t nonzeros() const noexcept { return col.size(); }

    void add_row(std::span<const Term> terms) {
        for (const auto& t : terms) {
            col.push_back(t.col);
            val.push_back(t.coef);
        }
        start.push_back(col.size());
    }

    [[nodiscard]] double dot(std::size_t row, std::span<const double> x) const {
        double s = 0.0;
        for (auto k = start[row]; k < start[row + 1]; ++k) s += val[k] * x[static_cast<std::size_t>(col[k])];
        return s;
    }

    /// out += A^T y
    void add_transpose_product(std::span<const double> y, std::span<double> out) const {
        for (std::size_t r = 0; r < rows(); ++r) {
            if (y[r] == 0.0) continue;
            for (auto k = start[r]; k < start[r + 1]; ++k) out[static_cast<std::size_t>(col[k])] += val[k] * y[r];
        }
    }
};

struct CanonicalQP {
    int n = 0;
    std::vector<double> quadratic_diag;
    std::vector<double> linear_cost;
    double objective_constant = 0.0;
    std::vector<double> lower;
    std::vector<double> upper;

    SparseRows ineq; // rows a x <= ineq_upper
    std::vector<double> ineq_upper;
    std::vector<std::string> ineq_names;

    SparseRows eq; // rows a x == eq_rhs
    std::vector<double> eq_rhs;
    std::vector<std::string> eq_names;

    std::vector<std::string> variable_names;

    /// Constraints declared in the model, including single-variable ones that
    /// were folded into the bounds.
    std::size_t modeled_constraints = 0;

    [[nodiscard]] double objective(std::span<const double> x) const {
        double f = objective_constant;
        for (std::size_t j = 0; j < x.size(); ++j) f += (quadratic_diag[j] * x[j] + linear_cost[j]) * x[j];
        return f;
    }

    /// Throws unless the representation is consistent and convex.
    void check() const {
        const auto nn = static_cast<std::size_t>(n);
        if (quadratic_diag.size() != nn || linear_cost.size() != nn || lower.size() != nn || upper.size() != nn ||
            variable_names.size() != nn)
            fail(ErrorCode::DimensionMismatch, "QP vectors must all have length n");
        if (ineq.rows() != ineq_upper.size() || ineq.rows() != ineq_names.size() || eq.rows() != eq_rhs.size() ||
            eq.rows() != eq_names.size())
            fail(ErrorCode::DimensionMismatch, "constraint rows, right-hand sides and names disagree");
        for (std::size_t j = 0; j < nn; ++j) {
            if (!(quadratic_diag[j] >= 0.0)) fail(ErrorCode::InvalidParameter, "negative quadratic term on " + variable_names[j]);
            if (!(lower[j] <= upper[j])) fail(ErrorCode::InvalidParameter, "lower > upper on " + variable_names[j]);
        }
        for (const auto* rows : {&ineq, &eq})
            for (int c : rows->col)
                if (c < 0 || c >= n) fail(ErrorCode::UnknownVariable, "row references column " + std::to_string(c));
    }
};

enum class SolveStatus { optimal, infeasible, max_iterations };

constexpr const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iterations: return "max_iterations";
    }
    return "unknown";
}

struct QpSolution {
    std::vector<double> primal;
    std::vector<double> eq_duals;
    std::vector<double> ineq_duals;  // >= 0
    std::vector<double> bound_duals; // > 0 at an active lower bound, < 0 at an active upper bound
    double objective = 0.0;
    SolveStatus status = SolveStatus::max_iterations;
    int iterations = 0;
    double solve_time_s = 0.0;
    std::vector<std::string> violated; // most-violated constraints when not optimal
};

namespace detail {
inline void write_number(std::ostream& os, double v) {
    if (std::isinf(v)) {
        os << (v > 0 ? "inf" : "-inf");
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

inline void write_row(std::ostream& os, const CanonicalQP& qp, const SparseRows& rows, std::size_t r) {
    for (auto k = rows.start[r]; k < rows.start[r + 1]; ++k) {
        os << ' ' << qp.variable_names[static_cast<std::size_t>(rows.col[k])] << ':';
        write_number(os, rows.val[k]);
    }
}
} // namespace detail

/// Diffable text dump: one constraint per line as
/// `name coef_pairs... sense rhs`, followed by bounds and objective terms.
inline void dump_text(const CanonicalQP& qp, std::ostream& os) {
    os << "# n " << qp.n << " eq " << qp.eq.rows() << " ineq " << qp.ineq.rows() << '\n';
    for (std::size_t r = 0; r < qp.eq.rows(); ++r) {
        os << qp.eq_names[r];
        detail::write_row(os, qp, qp.eq, r);
        os << " = ";
        detail::write_number(os, qp.eq_rhs[r]);
        os << '\n';
    }
    for (std::size_t r = 0; r < qp.ineq.rows(); ++r) {
        os << qp.ineq_names[r];
        detail::write_row(os, qp, qp.ineq, r);
        os << " <= ";
        detail::write_number(os, qp.ineq_upper[r]);
        os << '\n';
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(qp.n); ++j) {
        os << "bound " << qp.variable_names[j] << ' ';
        detail::write_number(os, qp.lower[j]);
        os << ' ';
        detail::write_number(os, qp.upper[j]);
        os << '\n';
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(qp.n); ++j) {
        if (qp.quadratic_diag[j] == 0.0 && qp.linear_cost[j] == 0.0) continue;
        os << "cost " << qp.variable_names[j] << ' ';
        detail::write_number(os, qp.quadratic_diag[j]);
        os << ' ';
        detail::write_number(os, qp.linear_cost[j]);
        os << '\n';
    }
}

} // namespace capfirm::qp
