#pragma once

#include "idrcde/eval.hpp"

namespace idrcde {

/// Linear decision rule with a free intercept (baseline methods are not
/// restricted to the fixed +-1 bias).
struct LinearRule {
    Vector beta;
    double intercept = 0.0;

    int decide(const Vector& x) const {
        return dot(beta, x) + intercept >= 0.0 ? 1 : -1;
    }
};

DecisionFn as_decision(const LinearRule& rule);

struct ScenarioSpec {
    int id = 1;  ///< 1: lognormal errors, 2: Weibull, 3: covariate-scaled lognormal
    std::size_t n = 100;
    std::size_t p = 10;
    std::uint64_t seed = 0;
};

/// Z = (1 + X1 + X2) + (0.5 + X1 - X2 + X3) A + eps with X ~ U[-1,1]^p,
/// A ~ uniform{-1,+1}, propensity 0.5, and scenario-specific errors.
Dataset simulate(const ScenarioSpec& s);

/// sign(0.5 + x1 - x2 + x3), zero margin -> +1.
int true_rule(const Vector& x);

struct PenalizedLsResult {
    Vector coef;
    std::vector<std::string> warnings;
};

/// Weighted lasso by cyclic coordinate descent:
///   min (1/2n) sum_i w_i (y_i - c.d_i)^2 + lambda * sum_{penalized j} |c_j|
/// Zero-variance penalized columns are pinned to zero with a warning.
PenalizedLsResult fit_penalized_ls(const Matrix& design, const Vector& response,
                                   const Vector& weights, double lambda,
                                   const std::vector<char>& penalized);

/// Penalized least squares of Z on (1, X, A, X*A); decides by the sign of the
/// predicted treatment effect.
LinearRule fit_l1pls(const Dataset& data, double lambda);

/// Weighted (1/pi) penalized least squares of Z*A on (X, 1); decides by the
/// sign of the fit.
LinearRule fit_dlearn(const Dataset& data, double lambda);

struct SolveStats {
    std::vector<int> iterations;        ///< per bias-run iteration counts
    double max_descent_slack = 0.0;
    double max_feas_violation = 0.0;
    double max_split_product = 0.0;     ///< worst split product over all subproblems
    int hit_limit = 0;
    double total_seconds = 0.0;
};

/// Direction for seeding the rule coefficients: a dlearn fit on outcomes
/// winsorized at the given upper quantile (heavy tails would otherwise
/// dominate the least squares), normalized to sup-norm 1.
Vector robust_dlearn_direction(const Dataset& data, double lambda, double winsor_q = 0.7);

/// Runs fit() once per seed scale (beta_init = scale * direction) and keeps
/// the result with the smallest final objective. Solver statistics of every
/// run are appended to `stats` when given.
FittedIDR fit_with_restarts(const FitSpec& base, const Vector& direction,
                            const std::vector<double>& scales, SolveStats* stats = nullptr);

struct BenchConfig {
    std::vector<int> scenarios = {1, 2, 3};
    std::vector<std::size_t> train_sizes = {100};
    int replications = 20;
    std::size_t test_size = 10000;
    std::size_t p = 10;
    std::vector<std::string> methods = {"idr_cde", "dlearn", "l1pls"};
    std::uint64_t seed = 1;
    int jobs = 1;

    UtilitySpec utility = UtilitySpec::piecewise_linear(0.0, 2.0);
    double lambda_alloc = 0.1;
    double lambda_rule = 0.1;
    bool idr_cv = false;  ///< tune the pair by 10-fold CV instead of fixed values
    std::vector<std::pair<double, double>> idr_grid;
    int cv_folds = 10;
    bool warm_start = true;  ///< seed beta from the winsorized dlearn direction
    double winsor_q = 0.7;
    std::vector<double> seed_scales = {1.5};
    double prox_c = 1e-2;

    bool baseline_cv = true;
    std::vector<double> baseline_grid = {0.0, 1e-3, 1e-2, 1e-1, 1.0};
};

struct MetricStats {
    double mean = 0.0;
    double stderr_ = 0.0;
    int n = 0;             ///< replications contributing a defined value
    Vector values;         ///< per-replication values (nan = undefined)
};

struct BenchmarkReport {
    struct Cell {
        int scenario = 0;
        std::size_t n = 0;
        std::string method;
        std::map<std::string, MetricStats> metrics;
        SolveStats solver;  ///< populated for idr_cde
        std::vector<int> failed_reps;
    };
    std::vector<Cell> cells;
    std::string notes;

    /// Timing rows are excluded by default so reruns are byte-identical.
    std::string to_csv(bool include_timing = false) const;
    std::string to_json(bool include_timing = false) const;
};

BenchmarkReport run_benchmark(const BenchConfig& config);

}  // namespace idrcde
