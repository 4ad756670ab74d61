#include "catch_amalgamated.hpp"

#include "capfirm/qp/kkt.hpp"
#include "capfirm/qp/model.hpp"
#include "capfirm/qp/solver.hpp"
#include "support/grid_oracle.hpp"
#include "support/small_qp_model.hpp"

#include <random>
#include <sstream>

using namespace capfirm;
using namespace capfirm::qp;
using Catch::Approx;

using test_support::to_canonical;

TEST_CASE("single quadratic variable assembles to a unit diagonal", "[qp][model]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", -kInf, kInf);
    m.add_quadratic_cost(x, 1.0);
    const auto qp = m.assemble();
    CHECK(qp.n == 1);
    CHECK(qp.quadratic_diag == std::vector<double>{1.0});
    CHECK(qp.eq.rows() == 0);
    CHECK(qp.ineq.rows() == 0);
}

TEST_CASE("registry rejects unknown variables and duplicate names", "[qp][model]") {
    ModelBuilder m;
    m.add_variable("x");
    m.add_variable("y");
    CHECK_THROWS_AS(m.add_variable("x"), Error);
    try {
        m.add_constraint("c", std::vector<NamedTerm>{{"x", 1.0}, {"z", 1.0}}, Sense::le, 1.0);
        FAIL("expected UnknownVariable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownVariable);
    }
    m.add_constraint("c", std::vector<NamedTerm>{{"x", 1.0}, {"y", 1.0}}, Sense::le, 1.0);
    try {
        m.add_constraint("c", std::vector<NamedTerm>{{"x", 1.0}, {"y", -1.0}}, Sense::ge, 0.0);
        FAIL("expected DuplicateConstraintName");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateConstraintName);
    }
}

TEST_CASE("single-variable constraints fold into bounds but are counted", "[qp][model]") {
    ModelBuilder m;
    const auto x = m.add_variable("x");
    const auto y = m.add_variable("y", -kInf, kInf);
    m.add_constraint("x_cap", {{x, 2.0}}, Sense::le, 6.0);
    m.add_constraint("y_floor", {{y, -1.0}}, Sense::le, 4.0);
    m.add_constraint("sum", {{x, 1.0}, {y, 1.0}}, Sense::ge, 1.0);
    const auto qp = m.assemble();
    CHECK(qp.upper[0] == 3.0);
    CHECK(qp.lower[1] == -4.0);
    CHECK(qp.ineq.rows() == 1);
    CHECK(qp.ineq_upper[0] == -1.0); // ge rows are stored negated
    CHECK(qp.modeled_constraints == 3);
}

TEST_CASE("bound example: min x^2 s.t. x >= 1", "[qp][solver]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", -kInf, kInf);
    m.add_quadratic_cost(x, 1.0);
    m.add_constraint("x_min", {{x, 1.0}}, Sense::ge, 1.0);
    const auto qp = m.assemble();
    const auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.primal[0] == Approx(1.0).margin(1e-6));
    CHECK(sol.objective == Approx(1.0).margin(1e-6));
}

TEST_CASE("symmetric example: min (x-1)^2 + (y-1)^2 s.t. x + y <= 1", "[qp][solver]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", -kInf, kInf);
    const auto y = m.add_variable("y", -kInf, kInf);
    for (auto v : {x, y}) {
        m.add_quadratic_cost(v, 1.0);
        m.add_linear_cost(v, -2.0);
    }
    m.add_constant_cost(2.0);
    m.add_constraint("sum", {{x, 1.0}, {y, 1.0}}, Sense::le, 1.0);
    const auto sol = solve_qp(m.assemble());
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.primal[0] == Approx(0.5).margin(1e-6));
    CHECK(sol.primal[1] == Approx(0.5).margin(1e-6));
    CHECK(sol.objective == Approx(0.5).margin(1e-6));
}

TEST_CASE("random small QPs agree with the grid oracle", "[qp][solver][oracle]") {
    std::mt19937_64 rng(20190201);
    for (int k = 0; k < 50; ++k) {
        const auto small = oracle::random_qp(rng);
        const auto qp = to_canonical(small);
        const auto sol = solve_qp(qp, SolverSettings{1e-6, 20000});
        INFO("instance " << k << " n=" << small.n << " rows=" << small.a.size());
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(kkt_residuals(qp, sol).within(1e-6));
        CHECK(std::abs(sol.objective - oracle::grid_minimum(small)) <= 1e-4);
    }
}

TEST_CASE("equality rows and fixed variables", "[qp][solver]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", 0.0, 10.0);
    const auto y = m.add_variable("y", 0.0, 10.0);
    const auto z = m.add_variable("z", 2.0, 2.0);
    m.add_quadratic_cost(x, 1.0);
    m.add_quadratic_cost(y, 1.0);
    m.add_linear_cost(z, 5.0);
    m.add_constraint("balance", {{x, 1.0}, {y, 1.0}, {z, 1.0}}, Sense::eq, 6.0);
    const auto qp = m.assemble();
    const auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.primal[0] == Approx(2.0).margin(1e-6));
    CHECK(sol.primal[1] == Approx(2.0).margin(1e-6));
    CHECK(sol.primal[2] == 2.0);
    CHECK(sol.objective == Approx(18.0).margin(1e-6));
}

TEST_CASE("infeasible problems are reported with violated constraints", "[qp][solver]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", 1.0, 5.0);
    const auto y = m.add_variable("y", 1.0, 5.0);
    m.add_linear_cost(x, 1.0);
    m.add_constraint("too_small", {{x, 1.0}, {y, 1.0}}, Sense::le, 1.0);
    const auto sol = solve_qp(m.assemble());
    CHECK(sol.status == SolveStatus::infeasible);
    REQUIRE_FALSE(sol.violated.empty());
    CHECK(sol.violated.size() <= 10);
}

TEST_CASE("empty rows after fixing variables are checked directly", "[qp][solver]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", 1.0, 1.0);
    const auto y = m.add_variable("y", 1.0, 1.0);
    m.add_constraint("sum", {{x, 1.0}, {y, 1.0}}, Sense::eq, 3.0);
    const auto sol = solve_qp(m.assemble());
    CHECK(sol.status == SolveStatus::infeasible);
    REQUIRE(sol.violated.size() == 1);
    CHECK(sol.violated[0] == "sum");
}

TEST_CASE("kkt residuals detect perturbations and violations", "[qp][kkt]") {
    ModelBuilder m;
    const auto x = m.add_variable("x", 0.0, 4.0);
    const auto y = m.add_variable("y", 0.0, 4.0);
    m.add_quadratic_cost(x, 1.0);
    m.add_quadratic_cost(y, 2.0);
    m.add_linear_cost(x, -4.0);
    m.add_linear_cost(y, -4.0);
    m.add_constraint("link", {{x, 1.0}, {y, -1.0}}, Sense::eq, 0.5);
    const auto qp = m.assemble();
    const auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(kkt_residuals(qp, sol).within(1e-6));

    auto bumped = sol;
    bumped.primal[0] += 0.1;
    CHECK_FALSE(kkt_residuals(qp, bumped).within(1e-6));

    auto broken = sol;
    broken.primal[0] = sol.primal[1] + 0.5 + 1.0; // equality off by 1.0
    const double scale = primal_scale(qp);
    CHECK(kkt_residuals(qp, broken).primal_infeasibility >= 1.0 / (1.0 + scale) - 1e-12);

    auto wrong = sol;
    wrong.primal.pop_back();
    CHECK_THROWS_AS(kkt_residuals(qp, wrong), Error);
}

TEST_CASE("solves are deterministic and scale with the cost", "[qp][solver][property]") {
    std::mt19937_64 rng(7);
    for (int k = 0; k < 10; ++k) {
        const auto small = oracle::random_qp(rng);
        const auto qp = to_canonical(small);
        const auto a = solve_qp(qp);
        const auto b = solve_qp(qp);
        REQUIRE(a.status == SolveStatus::optimal);
        CHECK(a.primal == b.primal);
        CHECK(a.objective == b.objective);

        auto scaled = qp;
        for (auto& v : scaled.quadratic_diag) v *= 7.5;
        for (auto& v : scaled.linear_cost) v *= 7.5;
        const auto s = solve_qp(scaled);
        REQUIRE(s.status == SolveStatus::optimal);
        CHECK(s.objective == Approx(7.5 * a.objective).margin(1e-5));
        // The argmin is unique only in strictly convex coordinates.
        for (std::size_t j = 0; j < small.n; ++j)
            if (small.q[j] > 0.0) CHECK(s.primal[j] == Approx(a.primal[j]).margin(1e-4));
    }
}

TEST_CASE("text dump lists one constraint per line", "[qp][dump]") {
    ModelBuilder m;
    const auto x = m.add_variable("x");
    const auto y = m.add_variable("y");
    m.add_constraint("c1", {{x, 1.0}, {y, 2.0}}, Sense::le, 3.0);
    m.add_constraint("e1", {{x, 1.0}, {y, -1.0}}, Sense::eq, 0.0);
    std::ostringstream os;
    dump_text(m.assemble(), os);
    const auto text = os.str();
    CHECK(text.find("c1 x:1 y:2 <= 3\n") != std::string::npos);
    CHECK(text.find("e1 x:1 y:-1 = 0\n") != std::string::npos);
    CHECK(text.find("bound x 0 inf\n") != std::string::npos);
}
