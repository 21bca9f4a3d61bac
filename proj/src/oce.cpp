#include "idrcde/oce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idrcde {

SampleSet::SampleSet(Vector vals, Vector w) : values(std::move(vals)), weights(std::move(w)) {
    if (values.empty()) throw DataError("SampleSet: empty sample");
    if (!all_finite(values)) throw DataError("SampleSet: non-finite value");
    if (!weights.empty()) {
        if (weights.size() != values.size())
            throw DataError("SampleSet: weight length mismatch");
        double total = 0.0;
        for (double w_i : weights) {
            if (!(w_i > 0.0)) throw DataError("SampleSet: nonpositive weight");
            total += w_i;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw DataError("SampleSet: weights must sum to 1 (got " + std::to_string(total) + ")");
    }
}

double SampleSet::min() const { return *std::min_element(values.begin(), values.end()); }
double SampleSet::max() const { return *std::max_element(values.begin(), values.end()); }

double SampleSet::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += weight(i) * values[i];
    return m;
}

namespace {

std::vector<std::size_t> order_by_value(const SampleSet& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s.values[a] < s.values[b]; });
    return idx;
}

void require_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("gamma must lie in (0, 1)");
}

}  // namespace

double empirical_quantile(const SampleSet& s, double gamma) {
    require_gamma(gamma);
    auto idx = order_by_value(s);
    double cum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        cum += s.weight(idx[k]);
        if (cum >= gamma - 1e-15) return s.values[idx[k]];
    }
    return s.values[idx.back()];
}

double empirical_cvar(const SampleSet& s, double gamma) {
    require_gamma(gamma);
    auto idx = order_by_value(s);
    double cum = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        double w = s.weight(idx[k]);
        double take = std::min(w, gamma - cum);
        if (take <= 0.0) break;
        acc += take * s.values[idx[k]];
        cum += take;
        if (cum >= gamma) break;
    }
    // cum < gamma can only happen through roundoff; normalize by what was taken
    return acc / std::max(cum, gamma);
}

namespace {

/// eta + sum_i w_i u(z_i - eta)
double oce_objective(const SampleSet& s, const UtilitySpec& u, double eta) {
    double v = eta;
    for (std::size_t i = 0; i < s.size(); ++i) v += s.weight(i) * utility_eval(u, s.values[i] - eta);
    return v;
}

/// Exact maximization for piecewise-linear u: candidates are the sample points.
OceResult oce_piecewise_linear(const SampleSet& s, const UtilitySpec& u) {
    auto idx = order_by_value(s);
    const std::size_t n = idx.size();
    // prefix sums over the sorted order
    Vector wsum(n + 1, 0.0), wzsum(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double w = s.weight(idx[k]);
        wsum[k + 1] = wsum[k] + w;
        wzsum[k + 1] = wzsum[k] + w * s.values[idx[k]];
    }
    OceResult best{-kInf, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        double eta = s.values[idx[k]];
        // below eta: u contributes -xi2 * (eta - z); above: xi1 * (z - eta)
        double below = u.xi2 * (wsum[k + 1] * eta - wzsum[k + 1]);
        double above = u.xi1 * ((wzsum[n] - wzsum[k + 1]) - (wsum[n] - wsum[k + 1]) * eta);
        double val = eta - below + above;
        if (val > best.value + 1e-15 * (1.0 + std::abs(val))) {
            best = {val, eta};
        } else if (val > best.value) {
            best.value = val;  // tie: keep the earlier (smaller) eta
        }
    }
    return best;
}

/// Golden-section maximization of a concave function on [lo, hi], biased to
/// return the smallest maximizer on flat stretches.
OceResult oce_golden(const SampleSet& s, const UtilitySpec& u, double lo, double hi) {
    const double gr = 0.6180339887498948482;
    double a = lo, b = hi;
    // coarse scan first so the bracket sits on the global maximum
    const int grid = 128;
    double best_val = -kInf, best_eta = lo;
    for (int k = 0; k <= grid; ++k) {
        double eta = lo + (hi - lo) * k / grid;
        double v = oce_objective(s, u, eta);
        if (v > best_val + 1e-14 * (1.0 + std::abs(v))) {
            best_val = v;
            best_eta = eta;
        }
    }
    double step = (hi - lo) / grid;
    a = std::max(lo, best_eta - step);
    b = std::min(hi, best_eta + step);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = oce_objective(s, u, x1), f2 = oce_objective(s, u, x2);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = oce_objective(s, u, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = oce_objective(s, u, x2);
        }
    }
    double eta = 0.5 * (a + b);
    double val = oce_objective(s, u, eta);
    if (best_val > val) {
        val = best_val;
        eta = best_eta;
    }
    // prefer the smallest eta among near-maximizers (flat objectives)
    double tol = 1e-12 * (1.0 + std::abs(val));
    if (oce_objective(s, u, lo) >= val - tol) return {oce_objective(s, u, lo), lo};
    return {val, eta};
}

}  // namespace

OceResult empirical_oce(const SampleSet& s, const UtilitySpec& u,
                        std::optional<std::pair<double, double>> eta_bounds) {
    u.validate();
    double lo = s.min(), hi = s.max();
    if (eta_bounds) {
        if (!(eta_bounds->first <= lo && eta_bounds->second >= hi) ||
            !(eta_bounds->first <= eta_bounds->second))
            throw ConfigError("empirical_oce: eta bounds must contain [min, max] of the sample");
        lo = eta_bounds->first;
        hi = eta_bounds->second;
    }
    if (u.kind == UtilityKind::piecewise_linear) return oce_piecewise_linear(s, u);
    if (lo == hi) return {oce_objective(s, u, lo), lo};
    return oce_golden(s, u, lo, hi);
}

double mean_variance_oce(const SampleSet& s, double tau) {
    double range = s.max() - s.min();
    if (!(tau >= range))
        throw ConfigError("mean_variance_oce: tau must be at least the sample range");
    double m = s.mean();
    double var = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double d = s.values[i] - m;
        var += s.weight(i) * d * d;
    }
    return m - var / (2.0 * tau);
}

int explicit_optimal_action(const std::map<int, SampleSet>& per_action, const UtilitySpec& u) {
    auto plus = per_action.find(1);
    auto minus = per_action.find(-1);
    if (plus == per_action.end() || minus == per_action.end())
        throw DataError("explicit_optimal_action: both actions -1 and +1 must be present");
    double v_plus = empirical_oce(plus->second, u).value;
    double v_minus = empirical_oce(minus->second, u).value;
    return v_plus >= v_minus ? 1 : -1;
}

}  // namespace idrcde
