#pragma once

#include <iosfwd>
#include <optional>
#include <utility>

#include "idrcde/core.hpp"

namespace idrcde {

/// Sparse row: sum_k val[k] * x[idx[k]].
struct SpRow {
    std::vector<int> idx;
    Vector val;

    double dot(const Vector& x) const {
        double s = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * x[idx[k]];
        return s;
    }
    void push(int i, double v) {
        idx.push_back(i);
        val.push_back(v);
    }
};

/// Convex quadratic program
///   minimize    (1/2) x^T Q x + q^T x + obj_const
///   subject to  ineq[r] . x <= ineq_rhs[r]
///               eq[r] . x == eq_rhs[r]
///               lo <= x <= hi          (entries may be +-inf)
/// Q must be symmetric positive semidefinite; the proximal/ridge terms added
/// by the callers make it positive definite on the feasible affine hull.
struct ConvexQP {
    int n = 0;
    Matrix Q;
    Vector q;
    double obj_const = 0.0;
    std::vector<SpRow> ineq;
    Vector ineq_rhs;
    std::vector<SpRow> eq;
    Vector eq_rhs;
    Vector lo, hi;

    static ConvexQP make(int n);
    double objective(const Vector& x) const;
};

enum class QPStatus { optimal, max_iterations, infeasible };

/// Scaled KKT residuals, always recomputed from the returned primal/dual
/// point rather than read off the solver's internal state:
///   stationarity:    ||Qx + q + A^T y + G^T z - z_lo + z_hi||_inf / (1 + ||q||_inf + ||Qx||_inf)
///   primal:          max constraint violation / (1 + max |rhs|)
///   complementarity: max_i |dual_i * slack_i| / (1 + |objective|)
struct KktResiduals {
    double stationarity = kInf;
    double primal = kInf;
    double complementarity = kInf;

    double max() const { return std::max(stationarity, std::max(primal, complementarity)); }
};

struct QPSolution {
    QPStatus status = QPStatus::max_iterations;
    Vector x;
    Vector dual_ineq;  ///< >= 0, one per ineq row
    Vector dual_eq;    ///< free, one per eq row
    Vector dual_lo;    ///< >= 0, lower-bound multipliers
    Vector dual_hi;    ///< >= 0, upper-bound multipliers
    double objective = 0.0;
    int iterations = 0;
    KktResiduals kkt;
    double infeasibility = 0.0;  ///< phase-1 certificate value when status == infeasible
};

KktResiduals verify_kkt(const ConvexQP& qp, const QPSolution& sol);

struct QPSolveOptions {
    double tol = 1e-8;
    int max_iterations = 120;
    const Vector* warm_start = nullptr;  ///< optional primal warm start
};

/// Interior-point solve with equality presolve and KKT verification.
/// Throws SolverError when the problem is infeasible (with the phase-1
/// certificate value in the message) or when no point passing `tol` is found.
QPSolution solve_qp(const ConvexQP& qp, const QPSolveOptions& opts);
QPSolution solve_qp(const ConvexQP& qp, double tol = 1e-8);

/// Plain-text sparse triplet dump (objective, rows, bounds) for external
/// cross-checking.
void dump_qp_triplets(const ConvexQP& qp, std::ostream& os);

// ---------------------------------------------------------------------------
// Proximal-subproblem assembly via variable splitting.
// ---------------------------------------------------------------------------

/// One term (weight/2) * (coef_pos*max(t,0) + coef_neg*max(-t,0) + x[sigma_index])^2
/// with t = t_offset + t_coef . x an affine function of the base variables.
struct HingeSquare {
    double weight = 0.0;
    double coef_pos = 0.0;
    double coef_neg = 0.0;
    SpRow t_coef;
    double t_offset = 0.0;
    int sigma_index = -1;  ///< -1 when the additive variable is absent
};

/// Everything needed to assemble one proximal linearized subproblem
///   min  sum_k l1[k].second * |x_{l1[k].first}|  +  lin . x
///        + sum hinges + (prox_c/2) ||x - center||^2 + constant
///   s.t. rows_ge[r] . x >= rows_ge_rhs[r],  lo <= x <= hi
/// over the base variables x (dimension n_z).
struct SubproblemIngredients {
    int n_z = 0;
    Vector center;
    double prox_c = 0.0;
    double split_ridge = 1e-12;
    Vector lin;
    double constant = 0.0;
    std::vector<std::pair<int, double>> l1;
    std::vector<HingeSquare> hinges;
    std::vector<SpRow> rows_ge;
    Vector rows_ge_rhs;
    Vector lo, hi;

    double objective(const Vector& x) const;  ///< split-free evaluation
};

/// The assembled QP: base variables first, then t+/t- per hinge and a +/-
/// magnitude pair per l1 term, tied by equality rows
///   t_coef . x - t+ + t- = -t_offset     (so t+ - t- = t)
///   x_k - a+ + a- = 0
/// with all split variables nonnegative. At any split-consistent point the QP
/// objective equals the subproblem objective (plus the tiny ridge).
struct SplitQP {
    ConvexQP qp;
    int n_z = 0;
    std::vector<int> t_plus, t_minus;
    std::vector<int> abs_plus, abs_minus;
};

SplitQP split_variables(const SubproblemIngredients& ing);

struct SubproblemSolution {
    Vector z;                        ///< base variables with exact split recovery
    double objective = 0.0;          ///< subproblem objective at z
    double max_split_product = 0.0;  ///< max t+ * t- and a+ * a- at the raw QP optimum
    QPSolution qp;
};

SubproblemSolution solve_subproblem(const SubproblemIngredients& ing,
                                    const QPSolveOptions& opts = {});

}  // namespace idrcde
