#pragma once

// Primal-dual interior-point method (Mehrotra predictor-corrector) for the
// canonical QP. Each iteration factors the regularised quasi-definite system
//
//   [ H + Sigma + rho I    A^T       ] [dx]   [r_x]
//   [ A                   -D - delta ] [dy] = [r_y]
//
// with a sparse LDL^T whose ordering is computed once per problem. Fixed
// variables are eliminated up front. Termination is decided by kkt_residuals
// on the original problem.

#include "capfirm/qp/canonical.hpp"
#include "capfirm/qp/kkt.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

namespace capfirm::qp {

struct SolverSettings {
    double tol = 1e-6;
    int max_iter = 20000;
};

namespace detail {

struct Presolved {
    std::vector<int> free_cols;     // reduced -> original column
    std::vector<int> reduced_of;    // original -> reduced column or -1 when fixed
    std::vector<double> fixed_value;
    std::vector<int> eq_rows, ineq_rows; // kept original rows
    SparseRows eq, ineq;
    std::vector<double> eq_rhs, ineq_upper;
    std::vector<double> eq_scale, ineq_scale; // row divisors
    std::vector<std::string> empty_row_violations;
};

inline Presolved presolve(const CanonicalQP& qp) {
    Presolved p;
    const auto n = static_cast<std::size_t>(qp.n);
    p.reduced_of.assign(n, -1);
    p.fixed_value.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double lo = qp.lower[j], hi = qp.upper[j];
        if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-12 * (1.0 + std::abs(lo))) {
            p.fixed_value[j] = 0.5 * (lo + hi);
        } else {
            p.reduced_of[j] = static_cast<int>(p.free_cols.size());
            p.free_cols.push_back(static_cast<int>(j));
        }
    }

    const double scale = 1.0 + primal_scale(qp);
    auto reduce = [&](const SparseRows& rows, std::size_t r, double rhs, bool equality, SparseRows& out,
                      std::vector<double>& out_rhs, std::vector<double>& out_scale, std::vector<int>& kept,
                      const std::string& name) {
        std::vector<Term> terms;
        double amax = 0.0;
        for (auto k = rows.start[r]; k < rows.start[r + 1]; ++k) {
            const auto j = static_cast<std::size_t>(rows.col[k]);
            if (p.reduced_of[j] < 0) {
                rhs -= rows.val[k] * p.fixed_value[j];
            } else {
                terms.push_back(Term{p.reduced_of[j], rows.val[k]});
                amax = std::max(amax, std::abs(rows.val[k]));
            }
        }
        if (terms.empty()) {
            const bool violated = equality ? std::abs(rhs) > 1e-9 * scale : rhs < -1e-9 * scale;
            if (violated) p.empty_row_violations.push_back(name);
            return;
        }
        for (auto& t : terms) t.coef /= amax;
        out.add_row(terms);
        out_rhs.push_back(rhs / amax);
        out_scale.push_back(amax);
        kept.push_back(static_cast<int>(r));
    };
    for (std::size_t r = 0; r < qp.eq.rows(); ++r)
        reduce(qp.eq, r, qp.eq_rhs[r], true, p.eq, p.eq_rhs, p.eq_scale, p.eq_rows, qp.eq_names[r]);
    for (std::size_t r = 0; r < qp.ineq.rows(); ++r)
        reduce(qp.ineq, r, qp.ineq_upper[r], false, p.ineq, p.ineq_upper, p.ineq_scale, p.ineq_rows,
               qp.ineq_names[r]);
    return p;
}

/// Names of the k most violated constraints/bounds at x.
inline std::vector<std::string> most_violated(const CanonicalQP& qp, std::span<const double> x, std::size_t k) {
    std::vector<std::pair<double, std::string>> v;
    for (std::size_t r = 0; r < qp.eq.rows(); ++r) {
        const double d = std::abs(qp.eq.dot(r, x) - qp.eq_rhs[r]);
        if (d > 0.0) v.emplace_back(d, qp.eq_names[r]);
    }
    for (std::size_t r = 0; r < qp.ineq.rows(); ++r) {
        const double d = qp.ineq.dot(r, x) - qp.ineq_upper[r];
        if (d > 0.0) v.emplace_back(d, qp.ineq_names[r]);
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = std::max(qp.lower[j] - x[j], x[j] - qp.upper[j]);
        if (d > 0.0) v.emplace_back(d, "bound " + qp.variable_names[j]);
    }
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, v.size()); ++i) {
        char buf[48];
        std::snprintf(buf, sizeof buf, " (violation %.3g)", v[i].first);
        out.push_back(v[i].second + buf);
    }
    return out;
}

class InteriorPoint {
public:
    InteriorPoint(const CanonicalQP& qp, const Presolved& pre) : qp_(qp), pre_(pre) {
        n_ = static_cast<int>(pre.free_cols.size());
        me_ = static_cast<int>(pre.eq.rows());
        mi_ = static_cast<int>(pre.ineq.rows());
        m_ = me_ + mi_;

        // Objective scaling keeps the largest cost coefficient near one.
        double cmax = 0.0;
        for (int j : pre.free_cols) {
            cmax = std::max(cmax, std::abs(qp.linear_cost[static_cast<std::size_t>(j)]));
            cmax = std::max(cmax, 2.0 * qp.quadratic_diag[static_cast<std::size_t>(j)]);
        }
        obj_scale_ = cmax > 0.0 ? 1.0 / cmax : 1.0;

        h_.resize(n_);
        c_.resize(n_);
        lo_.resize(n_);
        hi_.resize(n_);
        for (int k = 0; k < n_; ++k) {
            const auto j = static_cast<std::size_t>(pre.free_cols[static_cast<std::size_t>(k)]);
            h_[k] = 2.0 * qp.quadratic_diag[j] * obj_scale_;
            c_[k] = qp.linear_cost[j] * obj_scale_;
            lo_[k] = qp.lower[j];
            hi_[k] = qp.upper[j];
        }
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(pre.eq.nonzeros() + pre.ineq.nonzeros());
        for (std::size_t r = 0; r < pre.eq.rows(); ++r)
            for (auto k = pre.eq.start[r]; k < pre.eq.start[r + 1]; ++k)
                trip.emplace_back(static_cast<int>(r), pre.eq.col[k], pre.eq.val[k]);
        for (std::size_t r = 0; r < pre.ineq.rows(); ++r)
            for (auto k = pre.ineq.start[r]; k < pre.ineq.start[r + 1]; ++k)
                trip.emplace_back(me_ + static_cast<int>(r), pre.ineq.col[k], pre.ineq.val[k]);
        A_.resize(m_, n_);
        A_.setFromTriplets(trip.begin(), trip.end());
        At_ = A_.transpose();
        rhs_.resize(m_);
        for (int r = 0; r < me_; ++r) rhs_[r] = pre.eq_rhs[static_cast<std::size_t>(r)];
        for (int r = 0; r < mi_; ++r) rhs_[me_ + r] = pre.ineq_upper[static_cast<std::size_t>(r)];

        build_kkt_pattern();
    }

    QpSolution run(const SolverSettings& settings) {
        initial_point();
        QpSolution best;
        double best_score = kInf;
        double best_kkt = kInf;
        int stall = 0;
        const int iteration_cap = std::max(1, std::min(settings.max_iter, 500));
        int it = 0;
        for (; it < iteration_cap; ++it) {
            residuals();
            const double mu = complementarity_mean();

            if (!std::isfinite(mu)) break;

            QpSolution cand = recover();
            cand.iterations = it;
            const auto kkt = kkt_residuals(qp_, cand);
            // The max-norm residuals alone admit a sizeable total duality gap
            // on large problems, so the relative gap enters the score too.
            const double gap = mu * pair_count() / obj_scale_ / (1.0 + std::abs(cand.objective));
            const double score = std::max(kkt.worst(), gap);
            if (score < best_score) {
                if (score < 0.5 * best_score) stall = 0;
                best_score = score;
                best_kkt = kkt.worst();
                best = std::move(cand);
            } else if (++stall > 30) {
                break;
            }
            // Aim below the contract; the contract itself is checked on exit.
            if (score <= 1e-2 * settings.tol) {
                best.status = SolveStatus::optimal;
                return best;
            }
            if (dual_norm() > 1e13) break;

            factor(mu);
            // Predictor.
            direction(0.0, nullptr);
            const double a_aff = step_length();
            const double mu_aff = complementarity_after(a_aff);
            const double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 0.0, 1.0);
            // Corrector.
            Step aff = step_;
            direction(sigma * mu, &aff);
            double alpha = step_length();
            alpha = std::min(1.0, 0.995 * alpha);
            if (alpha < 1e-12) {
                if (++stall > 5) break;
            }
            apply(alpha);
        }
        if (best_kkt <= settings.tol) {
            best.status = SolveStatus::optimal;
            return best;
        }
        const double viol = max_violation(qp_, best.primal) / (1.0 + primal_scale(qp_));
        best.status = (dual_norm() > 1e13 || viol > std::sqrt(settings.tol)) && it < iteration_cap
                          ? SolveStatus::infeasible
                          : SolveStatus::max_iterations;
        best.iterations = it;
        best.violated = most_violated(qp_, best.primal, 10);
        return best;
    }

private:
    struct Step {
        Eigen::VectorXd dx, dy, dzl, dzu, dw;
    };

    bool has_lo(int j) const { return std::isfinite(lo_[j]); }
    bool has_hi(int j) const { return std::isfinite(hi_[j]); }

    void build_kkt_pattern() {
        const int dim = n_ + m_;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(dim) + static_cast<std::size_t>(A_.nonZeros()));
        for (int i = 0; i < dim; ++i) trip.emplace_back(i, i, 1.0);
        for (int k = 0; k < A_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itr(A_, k); itr; ++itr)
                trip.emplace_back(n_ + static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
        K_.resize(dim, dim);
        K_.setFromTriplets(trip.begin(), trip.end());
        K_.makeCompressed();
        diag_pos_.resize(static_cast<std::size_t>(dim));
        for (int col = 0; col < dim; ++col) {
            const auto begin = K_.outerIndexPtr()[col];
            const auto end = K_.outerIndexPtr()[col + 1];
            for (auto p = begin; p < end; ++p)
                if (K_.innerIndexPtr()[p] == col) diag_pos_[static_cast<std::size_t>(col)] = p;
        }
        ldlt_.analyzePattern(K_);
    }

    void initial_point() {
        x_.resize(n_);
        zl_ = Eigen::VectorXd::Zero(n_);
        zu_ = Eigen::VectorXd::Zero(n_);
        for (int j = 0; j < n_; ++j) {
            const bool l = has_lo(j), u = has_hi(j);
            if (l && u) {
                x_[j] = lo_[j] + 0.5 * (hi_[j] - lo_[j]);
            } else if (l) {
                x_[j] = lo_[j] + 1.0;
            } else if (u) {
                x_[j] = hi_[j] - 1.0;
            } else {
                x_[j] = 0.0;
            }
            if (l) zl_[j] = 1.0;
            if (u) zu_[j] = 1.0;
        }
        y_ = Eigen::VectorXd::Zero(m_);
        w_ = Eigen::VectorXd::Zero(mi_);
        const Eigen::VectorXd ax = A_ * x_;
        for (int r = 0; r < mi_; ++r) {
            w_[r] = std::max(rhs_[me_ + r] - ax[me_ + r], 1.0);
            y_[me_ + r] = 1.0;
        }
    }

    // Residuals of the reduced, scaled problem:
    //   rd = H x + c + A^T y - zl + zu,  rp = A x + [0; w] - rhs.
    void residuals() {
        rd_ = h_.cwiseProduct(x_) + c_ + At_ * y_ - zl_ + zu_;
        rp_ = A_ * x_ - rhs_;
        for (int r = 0; r < mi_; ++r) rp_[me_ + r] += w_[r];
    }

    int pair_count() const {
        int cnt = mi_;
        for (int j = 0; j < n_; ++j) cnt += static_cast<int>(has_lo(j)) + static_cast<int>(has_hi(j));
        return cnt;
    }

    double complementarity_mean() const {
        const int cnt = pair_count();
        if (cnt == 0) return 0.0;
        double s = 0.0;
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) s += (x_[j] - lo_[j]) * zl_[j];
            if (has_hi(j)) s += (hi_[j] - x_[j]) * zu_[j];
        }
        for (int r = 0; r < mi_; ++r) s += w_[r] * y_[me_ + r];
        return s / cnt;
    }

    double complementarity_after(double a) const {
        const int cnt = pair_count();
        if (cnt == 0) return 0.0;
        double s = 0.0;
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) s += (x_[j] + a * step_.dx[j] - lo_[j]) * (zl_[j] + a * step_.dzl[j]);
            if (has_hi(j)) s += (hi_[j] - x_[j] - a * step_.dx[j]) * (zu_[j] + a * step_.dzu[j]);
        }
        for (int r = 0; r < mi_; ++r) s += (w_[r] + a * step_.dw[r]) * (y_[me_ + r] + a * step_.dy[me_ + r]);
        return s / cnt;
    }

    double dual_norm() const {
        double v = 0.0;
        if (m_ > 0) v = std::max(v, y_.lpNorm<Eigen::Infinity>());
        if (n_ > 0) v = std::max({v, zl_.lpNorm<Eigen::Infinity>(), zu_.lpNorm<Eigen::Infinity>()});
        return v;
    }

    void factor(double mu) {
        (void)mu;
        reg_primal_ = 1e-8;
        reg_dual_ = 1e-8;
        sigma_x_.resize(n_);
        double* vals = K_.valuePtr();
        for (int j = 0; j < n_; ++j) {
            double s = 0.0;
            if (has_lo(j)) s += zl_[j] / (x_[j] - lo_[j]);
            if (has_hi(j)) s += zu_[j] / (hi_[j] - x_[j]);
            sigma_x_[j] = s;
            vals[diag_pos_[static_cast<std::size_t>(j)]] = h_[j] + s + reg_primal_;
        }
        dy_diag_.resize(m_);
        for (int r = 0; r < me_; ++r) dy_diag_[r] = 0.0;
        for (int r = 0; r < mi_; ++r) dy_diag_[me_ + r] = -w_[r] / y_[me_ + r];
        for (int r = 0; r < m_; ++r) vals[diag_pos_[static_cast<std::size_t>(n_ + r)]] = dy_diag_[r] - reg_dual_;
        ldlt_.factorize(K_);
    }

    // Product with the unregularised KKT matrix.
    Eigen::VectorXd kkt_product(const Eigen::VectorXd& v) const {
        Eigen::VectorXd out(n_ + m_);
        const auto vx = v.head(n_);
        const auto vy = v.tail(m_);
        out.head(n_) = (h_ + sigma_x_).cwiseProduct(vx) + At_ * vy;
        out.tail(m_) = A_ * vx + dy_diag_.cwiseProduct(vy);
        return out;
    }

    Eigen::VectorXd solve_kkt(const Eigen::VectorXd& rhs) const {
        Eigen::VectorXd sol = ldlt_.solve(rhs);
        for (int refine = 0; refine < 10; ++refine) {
            const Eigen::VectorXd r = rhs - kkt_product(sol);
            if (r.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
            sol += ldlt_.solve(r);
        }
        return sol;
    }

    // Newton direction for target complementarity `target`; with `aff` the
    // second-order Mehrotra correction is included.
    void direction(double target, const Step* aff) {
        Eigen::VectorXd rhs(n_ + m_);
        Eigen::VectorXd tl = Eigen::VectorXd::Zero(n_), tu = Eigen::VectorXd::Zero(n_), tw = Eigen::VectorXd::Zero(mi_);
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) tl[j] = target - (aff ? aff->dx[j] * aff->dzl[j] : 0.0);
            if (has_hi(j)) tu[j] = target + (aff ? aff->dx[j] * aff->dzu[j] : 0.0);
        }
        for (int r = 0; r < mi_; ++r) tw[r] = target - (aff ? aff->dw[r] * aff->dy[me_ + r] : 0.0);

        for (int j = 0; j < n_; ++j) {
            double v = -rd_[j];
            if (has_lo(j)) v += tl[j] / (x_[j] - lo_[j]) - zl_[j];
            if (has_hi(j)) v += zu_[j] - tu[j] / (hi_[j] - x_[j]);
            rhs[j] = v;
        }
        for (int r = 0; r < me_; ++r) rhs[n_ + r] = -rp_[r];
        for (int r = 0; r < mi_; ++r) rhs[n_ + me_ + r] = -rp_[me_ + r] + w_[r] - tw[r] / y_[me_ + r];

        const Eigen::VectorXd sol = solve_kkt(rhs);
        step_.dx = sol.head(n_);
        step_.dy = sol.tail(m_);
        step_.dzl = Eigen::VectorXd::Zero(n_);
        step_.dzu = Eigen::VectorXd::Zero(n_);
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) {
                const double s = x_[j] - lo_[j];
                step_.dzl[j] = tl[j] / s - zl_[j] - zl_[j] / s * step_.dx[j];
            }
            if (has_hi(j)) {
                const double s = hi_[j] - x_[j];
                step_.dzu[j] = tu[j] / s - zu_[j] + zu_[j] / s * step_.dx[j];
            }
        }
        step_.dw.resize(mi_);
        if (mi_ > 0) {
            const Eigen::VectorXd gdx = A_.bottomRows(mi_) * step_.dx;
            for (int r = 0; r < mi_; ++r) step_.dw[r] = -rp_[me_ + r] - gdx[r];
        }
    }

    double step_length() const {
        double a = 1.0;
        auto limit = [&a](double v, double dv) {
            if (dv < 0.0) a = std::min(a, -v / dv);
        };
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) {
                limit(x_[j] - lo_[j], step_.dx[j]);
                limit(zl_[j], step_.dzl[j]);
            }
            if (has_hi(j)) {
                limit(hi_[j] - x_[j], -step_.dx[j]);
                limit(zu_[j], step_.dzu[j]);
            }
        }
        for (int r = 0; r < mi_; ++r) {
            limit(w_[r], step_.dw[r]);
            limit(y_[me_ + r], step_.dy[me_ + r]);
        }
        return a;
    }

    void apply(double a) {
        x_ += a * step_.dx;
        y_ += a * step_.dy;
        zl_ += a * step_.dzl;
        zu_ += a * step_.dzu;
        w_ += a * step_.dw;
        // Keep strict interiority against rounding.
        for (int j = 0; j < n_; ++j) {
            if (has_lo(j)) {
                x_[j] = std::max(x_[j], lo_[j] + 1e-300);
                zl_[j] = std::max(zl_[j], 1e-300);
            }
            if (has_hi(j)) {
                x_[j] = std::min(x_[j], hi_[j] - 1e-300);
                zu_[j] = std::max(zu_[j], 1e-300);
            }
        }
        for (int r = 0; r < mi_; ++r) {
            w_[r] = std::max(w_[r], 1e-300);
            y_[me_ + r] = std::max(y_[me_ + r], 1e-300);
        }
    }

    // Maps the current iterate back to the original problem.
    QpSolution recover() const {
        const auto n = static_cast<std::size_t>(qp_.n);
        QpSolution s;
        s.primal = pre_.fixed_value;
        for (int k = 0; k < n_; ++k) s.primal[static_cast<std::size_t>(pre_.free_cols[static_cast<std::size_t>(k)])] = x_[k];
        s.eq_duals.assign(qp_.eq.rows(), 0.0);
        s.ineq_duals.assign(qp_.ineq.rows(), 0.0);
        for (int r = 0; r < me_; ++r)
            s.eq_duals[static_cast<std::size_t>(pre_.eq_rows[static_cast<std::size_t>(r)])] =
                y_[r] / (pre_.eq_scale[static_cast<std::size_t>(r)] * obj_scale_);
        for (int r = 0; r < mi_; ++r)
            s.ineq_duals[static_cast<std::size_t>(pre_.ineq_rows[static_cast<std::size_t>(r)])] =
                y_[me_ + r] / (pre_.ineq_scale[static_cast<std::size_t>(r)] * obj_scale_);
        s.bound_duals.assign(n, 0.0);
        for (int k = 0; k < n_; ++k)
            s.bound_duals[static_cast<std::size_t>(pre_.free_cols[static_cast<std::size_t>(k)])] =
                (zl_[k] - zu_[k]) / obj_scale_;
        // Fixed columns: the bound multiplier absorbs the whole reduced gradient.
        std::vector<double> grad(n, 0.0);
        qp_.eq.add_transpose_product(s.eq_duals, grad);
        qp_.ineq.add_transpose_product(s.ineq_duals, grad);
        for (std::size_t j = 0; j < n; ++j) {
            if (pre_.reduced_of[j] >= 0) continue;
            s.bound_duals[j] = 2.0 * qp_.quadratic_diag[j] * s.primal[j] + qp_.linear_cost[j] + grad[j];
        }
        s.objective = qp_.objective(s.primal);
        return s;
    }

    const CanonicalQP& qp_;
    const Presolved& pre_;
    int n_ = 0, me_ = 0, mi_ = 0, m_ = 0;
    double obj_scale_ = 1.0;
    Eigen::VectorXd h_, c_, lo_, hi_, rhs_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> A_;
    Eigen::SparseMatrix<double> At_;
    Eigen::SparseMatrix<double> K_;
    std::vector<Eigen::Index> diag_pos_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    double reg_primal_ = 0.0, reg_dual_ = 0.0;
    Eigen::VectorXd sigma_x_, dy_diag_;

    Eigen::VectorXd x_, y_, zl_, zu_, w_; // y = [equality; inequality] multipliers
    Eigen::VectorXd rd_, rp_;
    Step step_;
};

} // namespace detail

/// Solves `qp`. An optimal status always satisfies kkt_residuals <= tol.
inline QpSolution solve_qp(const CanonicalQP& qp, const SolverSettings& settings = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    qp.check();
    const auto pre = detail::presolve(qp);
    QpSolution sol;
    if (!pre.empty_row_violations.empty()) {
        sol.primal = pre.fixed_value;
        sol.eq_duals.assign(qp.eq.rows(), 0.0);
        sol.ineq_duals.assign(qp.ineq.rows(), 0.0);
        sol.bound_duals.assign(static_cast<std::size_t>(qp.n), 0.0);
        sol.objective = qp.objective(sol.primal);
        sol.status = SolveStatus::infeasible;
        sol.violated = pre.empty_row_violations;
        if (sol.violated.size() > 10) sol.violated.resize(10);
    } else {
        detail::InteriorPoint ipm(qp, pre);
        sol = ipm.run(settings);
    }
    if (sol.status == SolveStatus::optimal && !kkt_residuals(qp, sol).within(settings.tol))
        fail(ErrorCode::NotOptimal, "post-solve KKT check failed");
    sol.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
}

} // namespace capfirm::qp
