#pragma once

// Symbolic variable/constraint registry that assembles a CanonicalQP.
// Columns follow registration order. Single-variable constraints are folded
// into the variable bounds but still counted as modeled constraints.

#include "capfirm/qp/canonical.hpp"

#include <algorithm>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace capfirm::qp {

enum class Sense { le, ge, eq };

struct VarId {
    int index = -1;
};

struct NamedTerm {
    std::string var;
    double coef = 0.0;
};

struct IdTerm {
    VarId var;
    double coef = 0.0;
};

class ModelBuilder {
public:
    VarId add_variable(std::string name, double lower = 0.0, double upper = kInf) {
        if (!(lower <= upper)) fail(ErrorCode::InvalidParameter, "empty domain for variable " + name);
        if (!index_.emplace(name, static_cast<int>(names_.size())).second)
            fail(ErrorCode::DuplicateVariable, "variable registered twice: " + name);
        names_.push_back(std::move(name));
        lower_.push_back(lower);
        upper_.push_back(upper);
        quad_.push_back(0.0);
        lin_.push_back(0.0);
        return VarId{static_cast<int>(names_.size()) - 1};
    }

    [[nodiscard]] VarId variable(std::string_view name) const {
        const auto it = index_.find(std::string(name));
        if (it == index_.end()) fail(ErrorCode::UnknownVariable, "unknown variable " + std::string(name));
        return VarId{it->second};
    }

    [[nodiscard]] std::size_t variable_count() const noexcept { return names_.size(); }
    [[nodiscard]] std::size_t constraint_count() const noexcept { return constraint_names_.size(); }

    void add_constraint(std::string name, const std::vector<IdTerm>& terms, Sense sense, double rhs) {
        if (!constraint_names_.insert(name).second)
            fail(ErrorCode::DuplicateConstraintName, "constraint registered twice: " + name);
        std::vector<Term> row;
        row.reserve(terms.size());
        for (const auto& t : terms) {
            check(t.var);
            if (t.coef == 0.0) continue;
            auto same = std::find_if(row.begin(), row.end(), [&](const Term& r) { return r.col == t.var.index; });
            if (same != row.end())
                same->coef += t.coef;
            else
                row.push_back(Term{t.var.index, t.coef});
        }
        if (row.size() == 1) {
            fold_into_bounds(row.front(), sense, rhs, name);
            return;
        }
        if (sense == Sense::eq) {
            eq_.add_row(row);
            eq_rhs_.push_back(rhs);
            eq_names_.push_back(std::move(name));
            return;
        }
        if (sense == Sense::ge) {
            for (auto& t : row) t.coef = -t.coef;
            rhs = -rhs;
        }
        ineq_.add_row(row);
        ineq_upper_.push_back(rhs);
        ineq_names_.push_back(std::move(name));
    }

    void add_constraint(std::string name, const std::vector<NamedTerm>& terms, Sense sense, double rhs) {
        std::vector<IdTerm> ids;
        ids.reserve(terms.size());
        for (const auto& t : terms) ids.push_back(IdTerm{variable(t.var), t.coef});
        add_constraint(std::move(name), ids, sense, rhs);
    }

    void add_quadratic_cost(VarId v, double coef) {
        check(v);
        quad_[static_cast<std::size_t>(v.index)] += coef;
    }
    void add_linear_cost(VarId v, double coef) {
        check(v);
        lin_[static_cast<std::size_t>(v.index)] += coef;
    }
    void add_constant_cost(double c) { constant_ += c; }

    [[nodiscard]] CanonicalQP assemble() const {
        CanonicalQP qp;
        qp.n = static_cast<int>(names_.size());
        qp.quadratic_diag = quad_;
        qp.linear_cost = lin_;
        qp.objective_constant = constant_;
        qp.lower = lower_;
        qp.upper = upper_;
        qp.ineq = ineq_;
        qp.ineq_upper = ineq_upper_;
        qp.ineq_names = ineq_names_;
        qp.eq = eq_;
        qp.eq_rhs = eq_rhs_;
        qp.eq_names = eq_names_;
        qp.variable_names = names_;
        qp.modeled_constraints = constraint_names_.size();
        qp.check();
        return qp;
    }

private:
    void check(VarId v) const {
        if (v.index < 0 || static_cast<std::size_t>(v.index) >= names_.size())
            fail(ErrorCode::UnknownVariable, "variable id " + std::to_string(v.index) + " not registered");
    }

    void fold_into_bounds(const Term& t, Sense sense, double rhs, const std::string& name) {
        const auto j = static_cast<std::size_t>(t.col);
        const double value = rhs / t.coef;
        const bool flips = t.coef < 0.0;
        if (sense == Sense::eq) {
            lower_[j] = std::max(lower_[j], value);
            upper_[j] = std::min(upper_[j], value);
        } else if ((sense == Sense::le) != flips) {
            upper_[j] = std::min(upper_[j], value);
        } else {
            lower_[j] = std::max(lower_[j], value);
        }
        if (!(lower_[j] <= upper_[j]))
            fail(ErrorCode::Infeasible, "constraint " + name + " empties the domain of " + names_[j]);
    }

    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    std::vector<double> lower_, upper_, quad_, lin_;
    double constant_ = 0.0;

    std::unordered_set<std::string> constraint_names_;
    SparseRows ineq_, eq_;
    std::vector<double> ineq_upper_, eq_rhs_;
    std::vector<std::string> ineq_names_, eq_names_;
};

} // namespace capfirm::qp
