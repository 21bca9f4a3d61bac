#pragma once

#include <functional>
#include <string>

#include "idrcde/epigraph.hpp"
#include "idrcde/qp.hpp"

namespace idrcde {

/// Polyhedral base set X: a box plus optional extra rows a.x >= rhs.
struct Polyhedron {
    Vector lo, hi;
    std::vector<SpRow> rows_ge;
    Vector rows_rhs;

    bool contains(const Vector& x, double eps) const;
};

struct SubproblemOutcome {
    Vector x;
    double objective = 0.0;  ///< value of the proximal linearized subproblem at x
    int qp_iterations = 0;
    double qp_kkt = 0.0;
    double split_product = 0.0;
};

/// Minimize f(x) - [g(xbar) + grad_g(xbar).(x - xbar)] + (c/2)||x - xbar||^2
/// over domain /\ {rows >= 0}. Provided by the program owner (the empirical
/// problem routes this through the split-QP machinery; toy programs build a
/// direct QP).
using SubproblemSolver = std::function<SubproblemOutcome(
    const Vector& xbar, double c, const std::vector<AffineTerm>& rows)>;

/// minimize f(x) - g(x) over domain, s.t. max-affine constraints >= 0,
/// with f convex and g convex continuously differentiable.
struct ReverseConvexDCProgram {
    int dim = 0;
    std::function<double(const Vector&)> f;
    std::function<double(const Vector&)> g;
    std::function<Vector(const Vector&)> grad_g;
    std::vector<MaxAffineConstraint> constraints;
    Polyhedron domain;
    SubproblemSolver subproblem;

    double h(const Vector& x) const { return f(x) - g(x); }
    bool feasible(const Vector& x, double eps) const;
};

struct DCOptions {
    double prox_c = 0.0;        ///< <= 0 means the default 1e-4 (1 + ||grad g(x0)||_inf)
    double eps_step = 1e-6;     ///< stop when ||x_{k+1} - x_k||_inf <= eps_step
    int max_iterations = 200;
    double eps_feas = 1e-8;
    double eps_tie = 1e-9;      ///< argmax tie tolerance for index selection
    /// also stop when the objective decreased by no more than
    /// eps_obj * (1 + |h|) over the trailing obj_window iterations; 0 disables
    double eps_obj = 0.0;
    int obj_window = 5;
};

struct DCIteration {
    double objective = 0.0;       ///< h at the new iterate
    double step_norm2 = 0.0;
    double step_norm_inf = 0.0;
    double descent_slack = 0.0;   ///< h(x+) + (c/2)||step||^2 - h(x), <= 0 up to qp tolerance
    double feas_violation = 0.0;  ///< worst constraint violation at the new iterate
    std::vector<int> chosen;      ///< chosen argmax index per constraint
    int qp_iterations = 0;
    double split_product = 0.0;
};

struct SolverTrace {
    std::vector<Vector> iterates;  ///< x^0 ... x^K
    std::vector<DCIteration> steps;
    bool hit_iteration_limit = false;
    double prox_c = 0.0;

    int iterations() const { return static_cast<int>(steps.size()); }
    double max_descent_slack() const;
    double max_feas_violation() const;
    std::string to_json() const;
};

struct DCResult {
    Vector x;
    SolverTrace trace;
};

/// Indices within eps_tie of the maximal term value of the constraint at x.
std::vector<int> argmax_indices(const MaxAffineConstraint& c, const Vector& x, double eps_tie);

/// Constraints whose max value at x lies in [-eps_feas, eps_feas].
/// Throws SolverError when x is infeasible beyond eps_feas.
std::vector<int> active_set(const ReverseConvexDCProgram& prog, const Vector& x, double eps_feas);

/// One proximal linearization step from the feasible point x with weight c.
/// The lowest tied argmax index is chosen per constraint, except that an
/// index from `prefer` is kept when it is still within the tie tolerance
/// (sticky selection stops tie flapping between iterations).
struct StepOutcome {
    Vector x_next;
    DCIteration info;
};
StepOutcome dc_step(const ReverseConvexDCProgram& prog, const Vector& x, double c,
                    double eps_tie = 1e-9, const std::vector<int>* prefer = nullptr);

double default_prox_weight(const ReverseConvexDCProgram& prog, const Vector& x0);

/// Runs dc_step until the infinity step norm drops below eps_step or the
/// iteration limit is reached. Every iterate stays feasible and the objective
/// never increases (up to the recorded slack).
DCResult solve(const ReverseConvexDCProgram& prog, const Vector& x0, const DCOptions& opts = {});

struct StationarityCertificate {
    bool certified = false;
    bool partial = false;   ///< tuple enumeration was capped before certifying
    int tuples_checked = 0;
};

/// Certifies that for some tuple of argmax indices, xbar minimizes the
/// linearized convex program over all chosen rows, up to `tol`. Enumerates at
/// most `tuple_cap` tuples (lexicographic order); past the cap only the
/// lowest-index tuple is checked and the result is flagged partial.
StationarityCertificate check_a_stationarity(const ReverseConvexDCProgram& prog,
                                             const Vector& xbar, double tol,
                                             int tuple_cap = 64);

}  // namespace idrcde
