#pragma once

#include <functional>
#include <map>
#include <optional>

#include "idrcde/fit.hpp"

namespace idrcde {

using DecisionFn = std::function<int(const Vector&)>;

DecisionFn as_decision(const RuleParams& rule);

Vector covariate_row(const Dataset& d, std::size_t i);

/// Keeps rows[i] of d, in the given order.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows);

/// Inverse-propensity weighted average outcome over samples whose observed
/// action matches the rule. Empty match set -> nullopt ("undefined").
std::optional<double> empirical_value(const DecisionFn& rule, const Dataset& test);
std::optional<double> empirical_value(const RuleParams& rule, const Dataset& test);

/// Weighted average of alpha(X) + u(Z - alpha(X)) over matched samples.
std::optional<double> empirical_cde(const DecisionFn& rule, const AllocParams& alloc,
                                    const UtilitySpec& u, const Dataset& data);
std::optional<double> empirical_cde(const RuleParams& rule, const AllocParams& alloc,
                                    const UtilitySpec& u, const Dataset& data);

/// Fraction of rows where the two rules disagree.
double misclassification(const DecisionFn& rule, const DecisionFn& truth, const Matrix& x_test);

/// Empirical quantiles of the matched outcomes {Z_i : A_i = rule(X_i)}.
std::optional<std::map<double, double>> matched_quantiles(const DecisionFn& rule,
                                                          const Dataset& test,
                                                          const std::vector<double>& probs);
std::optional<std::map<double, double>> matched_quantiles(const RuleParams& rule,
                                                          const Dataset& test,
                                                          const std::vector<double>& probs);

struct EvalReport {
    std::optional<double> empirical_value;
    std::optional<double> empirical_cde;
    std::optional<double> misclassification;
    std::map<double, double> quantiles;
    std::size_t n_matched = 0;

    std::string to_json() const;
};

EvalReport evaluate(const RuleParams& rule, const AllocParams& alloc, const UtilitySpec& u,
                    const Dataset& test, const DecisionFn* truth = nullptr);

struct FoldRecord {
    double lambda_alloc = 0.0;
    double lambda_rule = 0.0;
    int fold = 0;
    std::optional<double> ocde;
};

struct CvResult {
    double lambda_alloc = 0.0;
    double lambda_rule = 0.0;
    std::vector<FoldRecord> table;
    FittedIDR refit;

    std::string table_csv() const;  ///< header lambda_alloc,lambda_rule,fold,ocde
};

/// k-fold cross-validation over the (lambda_alloc, lambda_rule) grid,
/// maximizing the held-out empirical certainty-equivalent value. Fold
/// assignment is a seeded shuffle; an undefined fold sinks its grid point.
/// Ties pick the lexicographically smaller pair. Refits on all data.
CvResult cross_validate(const FitSpec& tmpl, const std::vector<std::pair<double, double>>& grid,
                        int k, std::uint64_t seed, int jobs = 1);

/// Default tuning grid {0, 1e-3, 1e-2, 1e-1, 1} x same.
std::vector<std::pair<double, double>> default_lambda_grid();

}  // namespace idrcde
