#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "idrcde/dc.hpp"
#include "idrcde/rng.hpp"

using namespace idrcde;

namespace {

/// Toy program: minimize x^2 - 2x subject to |x| >= 1 (as max(x-1, -x-1) >= 0).
/// The subproblem minimizes (2+c)/2 x^2 - (2 + c xbar) x over an interval, so
/// the closed form is a clamp of (2 + c xbar)/(2 + c); qp_backed switches to
/// the interior-point path instead for cross-checking.
ReverseConvexDCProgram toy_program(bool qp_backed = false, double box = 1e6) {
    ReverseConvexDCProgram prog;
    prog.dim = 1;
    prog.f = [](const Vector& x) { return x[0] * x[0]; };
    prog.g = [](const Vector& x) { return 2.0 * x[0]; };
    prog.grad_g = [](const Vector&) { return Vector{2.0}; };
    MaxAffineConstraint c;
    AffineTerm t1;
    t1.push(0, 1.0);
    t1.offset = -1.0;
    AffineTerm t2;
    t2.push(0, -1.0);
    t2.offset = -1.0;
    c.terms = {t1, t2};
    prog.constraints.push_back(c);
    prog.domain.lo = {-box};
    prog.domain.hi = {box};
    if (qp_backed) {
        prog.subproblem = [box](const Vector& xbar, double c_prox,
                                const std::vector<AffineTerm>& rows) {
            ConvexQP qp = ConvexQP::make(1);
            qp.Q(0, 0) = 2.0 + c_prox;
            qp.q[0] = -2.0 - c_prox * xbar[0];
            qp.obj_const = 0.5 * c_prox * xbar[0] * xbar[0];
            qp.lo[0] = -box;
            qp.hi[0] = box;
            for (const auto& row : rows) {
                SpRow r;
                for (std::size_t k = 0; k < row.idx.size(); ++k) r.push(row.idx[k], -row.coef[k]);
                qp.ineq.push_back(std::move(r));
                qp.ineq_rhs.push_back(row.offset);
            }
            auto sol = solve_qp(qp, 1e-9);
            SubproblemOutcome out;
            out.x = sol.x;
            out.objective = sol.objective;
            out.qp_iterations = sol.iterations;
            out.qp_kkt = sol.kkt.max();
            return out;
        };
    } else {
        prog.subproblem = [box](const Vector& xbar, double c_prox,
                                const std::vector<AffineTerm>& rows) {
            double lo = -box, hi = box;
            for (const auto& row : rows) {
                double coef = row.coef[0], off = row.offset;
                if (coef > 0.0)
                    lo = std::max(lo, -off / coef);
                else if (coef < 0.0)
                    hi = std::min(hi, -off / coef);
            }
            double x = (2.0 + c_prox * xbar[0]) / (2.0 + c_prox);
            x = std::min(std::max(x, lo), hi);
            SubproblemOutcome out;
            out.x = {x};
            double d = x - xbar[0];
            out.objective = x * x - 2.0 * x + 0.5 * c_prox * d * d;
            return out;
        };
    }
    return prog;
}

}  // namespace

TEST_CASE("argmax_indices") {
    MaxAffineConstraint c;
    AffineTerm t1;  // 2*sigma + s - 1 over (sigma, s)
    t1.push(0, 2.0);
    t1.push(1, 1.0);
    t1.offset = -1.0;
    AffineTerm t2;  // sigma
    t2.push(0, 1.0);
    c.terms = {t1, t2};
    CHECK(argmax_indices(c, {1.0, 0.0}, 1e-9) == std::vector<int>{0, 1});  // both equal 1
    CHECK(argmax_indices(c, {0.0, -1.0}, 1e-9) == std::vector<int>{1});    // -2 vs 0

    MaxAffineConstraint abs1;
    AffineTerm a1;
    a1.push(0, 1.0);
    a1.offset = -1.0;
    AffineTerm a2;
    a2.push(0, -1.0);
    a2.offset = -1.0;
    abs1.terms = {a1, a2};
    CHECK(argmax_indices(abs1, {2.0}, 1e-9) == std::vector<int>{0});
}

TEST_CASE("active_set") {
    auto prog = toy_program();
    CHECK(active_set(prog, {1.0}, 1e-8) == std::vector<int>{0});
    CHECK(active_set(prog, {2.0}, 1e-8).empty());
    CHECK(active_set(prog, {1.0 + 1e-10}, 1e-8) == std::vector<int>{0});
    CHECK_THROWS_AS(active_set(prog, {0.5}, 1e-8), SolverError);  // infeasible point
}

TEST_CASE("dc_step follows the closed-form recursion") {
    auto prog = toy_program();
    auto s1 = dc_step(prog, {2.0}, 1.0);
    CHECK(s1.x_next[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-8));
    auto s2 = dc_step(prog, s1.x_next, 1.0);
    CHECK(s2.x_next[0] == doctest::Approx(10.0 / 9.0).epsilon(1e-8));
    auto fixed = dc_step(prog, {1.0}, 1.0);
    CHECK(fixed.x_next[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fixed.info.step_norm_inf <= 1e-7);
}

TEST_CASE("solve converges to the global solution from x0 = 2") {
    auto prog = toy_program();
    DCOptions opts;
    opts.prox_c = 1.0;
    opts.eps_step = 1e-8;
    auto res = solve(prog, {2.0}, opts);
    CHECK(std::abs(res.x[0] - 1.0) <= 1e-6);
    CHECK(prog.h(res.x) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK_FALSE(res.trace.hit_iteration_limit);
    // contraction: |x_k - 1| <= (1/3)^k from x0 = 2
    for (std::size_t k = 0; k < res.trace.iterates.size(); ++k) {
        double bound = std::pow(1.0 / 3.0, static_cast<double>(k)) * 1.0 + 1e-9;
        CHECK(std::abs(res.trace.iterates[k][0] - 1.0) <= bound * (1 + 1e-6));
    }
    // descent with proximal gap and feasibility at every step
    CHECK(res.trace.max_descent_slack() <= 1e-7);
    CHECK(res.trace.max_feas_violation() <= 1e-8);
    // objective nonincreasing along the trace
    for (std::size_t k = 1; k < res.trace.steps.size(); ++k)
        CHECK(res.trace.steps[k].objective <= res.trace.steps[k - 1].objective + 1e-9);

    auto cert = check_a_stationarity(prog, res.x, 1e-6);
    CHECK(cert.certified);
}

TEST_CASE("solve lands on the local solution from x0 = -2") {
    auto prog = toy_program();
    DCOptions opts;
    opts.prox_c = 1.0;
    opts.eps_step = 1e-8;
    auto res = solve(prog, {-2.0}, opts);
    CHECK(res.x[0] == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(prog.h(res.x) == doctest::Approx(3.0).epsilon(1e-7));
    auto cert = check_a_stationarity(prog, res.x, 1e-6);
    CHECK(cert.certified);
}

TEST_CASE("a-stationary start returns within one iteration") {
    auto prog = toy_program();
    DCOptions opts;
    opts.prox_c = 1.0;
    opts.eps_step = 1e-6;
    auto res = solve(prog, {1.0}, opts);
    CHECK(res.trace.iterations() == 1);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("check_a_stationarity rejects non-stationary points") {
    auto prog = toy_program();
    CHECK_FALSE(check_a_stationarity(prog, {2.0}, 1e-6).certified);
    CHECK(check_a_stationarity(prog, {1.0}, 1e-6).certified);
    CHECK(check_a_stationarity(prog, {-1.0}, 1e-6).certified);
}

TEST_CASE("default proximal weight and infeasible start") {
    auto prog = toy_program();
    CHECK(default_prox_weight(prog, {2.0}) == doctest::Approx(1e-4 * 3.0));
    DCOptions opts;
    CHECK_THROWS_AS(solve(prog, {0.0}, opts), SolverError);
}

TEST_CASE("trace exports json") {
    auto prog = toy_program();
    DCOptions opts;
    opts.prox_c = 1.0;
    auto res = solve(prog, {2.0}, opts);
    std::string j = res.trace.to_json();
    CHECK(j.find("\"iterations\"") != std::string::npos);
    CHECK(j.find("\"objective\"") != std::string::npos);
    CHECK(j.find("\"tuple\"") != std::string::npos);
}

TEST_CASE("qp-backed subproblems agree with the closed form") {
    auto exact = toy_program(false);
    auto via_qp = toy_program(true);
    for (double x0 : {2.0, -2.0, 1.5, -1.2}) {
        auto a = dc_step(exact, {x0}, 1.0);
        auto b = dc_step(via_qp, {x0}, 1.0);
        CHECK(a.x_next[0] == doctest::Approx(b.x_next[0]).epsilon(1e-7));
    }
    DCOptions opts;
    opts.prox_c = 1.0;
    opts.eps_step = 1e-8;
    auto res = solve(via_qp, {2.0}, opts);
    CHECK(std::abs(res.x[0] - 1.0) <= 1e-6);
    CHECK(res.trace.max_descent_slack() <= 1e-7);
    CHECK(check_a_stationarity(via_qp, res.x, 1e-6).certified);
}

TEST_CASE("step norms shrink toward zero") {
    auto prog = toy_program();
    DCOptions opts;
    opts.prox_c = 0.3;
    opts.eps_step = 1e-10;
    opts.max_iterations = 60;
    auto res = solve(prog, {2.0}, opts);
    double min_step = kInf;
    for (const auto& s : res.trace.steps) min_step = std::min(min_step, s.step_norm2);
    CHECK(min_step <= 1e-9);
}
