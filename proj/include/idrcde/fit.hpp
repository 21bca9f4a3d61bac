#pragma once

#include <string>

#include "idrcde/dc.hpp"

namespace idrcde {

enum class SurrogateKind { plain_l1, mcp_like };

/// Configuration of one empirical fit. The utility must be piecewise linear;
/// phi weights default to 1 per coefficient.
struct FitSpec {
    Dataset data;
    UtilitySpec utility = UtilitySpec::piecewise_linear(0.0, 2.0);
    double lambda_alloc = 0.0;
    double lambda_rule = 0.0;
    Vector phi_alloc;  ///< per-coefficient weights, size p (empty = all 1)
    Vector phi_rule;
    SurrogateKind surrogate = SurrogateKind::plain_l1;
    double mcp_a = 3.0;
    double box_bound = 1e3;  ///< allocation box S = [-box_bound, box_bound]^{p+1}
    double prox_c = 1e-2;
    double eps_step = 1e-6;
    int max_iterations = 200;
    double eps_feas = 1e-8;
    /// windowed objective-progress stop (see DCOptions); the default trims
    /// flat tails that no longer move the decision rule
    double eps_obj = 3e-5;
    int obj_window = 4;
    double qp_tol = 1e-8;
    Vector beta_init;  ///< size p (empty = zeros)

    void validate() const;
};

/// Index layout of the decision vector z = (w, beta, sigma-, sigma+).
struct FitLayout {
    std::size_t p = 0, n = 0, n_pos = 0;
    std::vector<std::size_t> pos_index;  ///< sample index behind each sigma+ slot

    int n_z() const { return static_cast<int>(2 * p + 1 + n + n_pos); }
    int w_index(std::size_t j) const { return static_cast<int>(j); }  // j == p: intercept b0
    int beta_index(std::size_t j) const { return static_cast<int>(p + 1 + j); }
    int sigma_minus_index(std::size_t i) const { return static_cast<int>(2 * p + 1 + i); }
    int sigma_plus_index(std::size_t k) const { return static_cast<int>(2 * p + 1 + n + k); }
};

struct BuiltProgram {
    ReverseConvexDCProgram program;
    FitLayout layout;
    int bias = 1;
};

/// Assembles the epigraph-form empirical program for the given bias sign.
BuiltProgram build_program(const FitSpec& spec, int bias);

/// Feasible start: w = 0, beta = beta_start, sigma variables at the exact
/// indicator values of the induced margins.
Vector initial_point(const FitSpec& spec, int bias, const Vector& beta_start);

/// The discontinuous objective evaluated directly with indicators.
double objective_direct(const FitSpec& spec, const RuleParams& theta, const AllocParams& alloc);

struct BiasRun {
    int bias = 1;
    double final_phi = 0.0;
    double final_direct = 0.0;
    RuleParams theta;
    AllocParams alloc;
    SolverTrace trace;
};

struct FittedIDR {
    RuleParams theta;
    AllocParams alloc;
    int bias = 1;
    double objective_phi = 0.0;
    double objective_direct_value = 0.0;
    bool certificate = false;
    bool certificate_partial = false;
    BiasRun run_plus, run_minus;

    std::string to_json() const;
};

/// Runs the solver for bias = +1 and bias = -1 from the packaged initial
/// point and keeps the run with the smaller final objective (ties go to +1).
FittedIDR fit(const FitSpec& spec);

/// Unpacks (theta, alloc) from a decision vector.
RuleParams unpack_rule(const FitLayout& layout, int bias, const Vector& z);
AllocParams unpack_alloc(const FitLayout& layout, const Vector& z, double box_bound);

}  // namespace idrcde
