#pragma once

#include <map>
#include <optional>

#include "idrcde/core.hpp"

namespace idrcde {

/// Weighted empirical distribution of outcomes. Weights default to uniform
/// and must be positive and sum to 1 (within 1e-12).
struct SampleSet {
    Vector values;
    Vector weights;  ///< empty means uniform

    SampleSet() = default;
    explicit SampleSet(Vector vals, Vector w = {});

    std::size_t size() const { return values.size(); }
    double weight(std::size_t i) const {
        return weights.empty() ? 1.0 / static_cast<double>(values.size()) : weights[i];
    }
    double min() const;
    double max() const;
    double mean() const;
};

/// Smallest v with cumulative weight >= gamma (left-continuous generalized inverse).
double empirical_quantile(const SampleSet& s, double gamma);

/// CVaR_gamma = sup_eta [eta - (1/gamma) * E(eta - Z)_+]; equals the weighted
/// average of the lower gamma-tail with fractional atom splitting.
double empirical_cvar(const SampleSet& s, double gamma);

struct OceResult {
    double value = 0.0;
    double maximizer = 0.0;  ///< smallest maximizing eta found
};

/// Certainty-equivalent value sup_eta [eta + sum_i w_i u(z_i - eta)].
/// Piecewise-linear utilities are solved exactly (the objective is concave
/// piecewise linear with breakpoints at the sample points); other utilities
/// by golden-section refinement over eta_bounds.
/// eta_bounds must contain [min(values), max(values)]; defaults to exactly that.
OceResult empirical_oce(const SampleSet& s, const UtilitySpec& u,
                        std::optional<std::pair<double, double>> eta_bounds = std::nullopt);

/// Weighted mean minus (population variance)/(2 tau). Requires
/// tau >= max(values) - min(values); agrees with empirical_oce under
/// truncated_quadratic(tau) within 1e-8.
double mean_variance_oce(const SampleSet& s, double tau);

/// Action whose certainty-equivalent value is larger; ties go to +1.
/// Both actions -1 and +1 must be present with nonempty samples.
int explicit_optimal_action(const std::map<int, SampleSet>& per_action, const UtilitySpec& u);

}  // namespace idrcde
