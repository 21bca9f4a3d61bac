#pragma once

#include "idrcde/linalg.hpp"

namespace idrcde {

/// Sparse affine function c^T x + offset over a fixed variable space.
struct AffineTerm {
    std::vector<int> idx;
    Vector coef;
    double offset = 0.0;

    void push(int i, double c) {
        idx.push_back(i);
        coef.push_back(c);
    }
    double value(const Vector& x) const {
        double v = offset;
        for (std::size_t k = 0; k < idx.size(); ++k) v += coef[k] * x[idx[k]];
        return v;
    }
};

/// Term-wise difference a - b on a merged sparse support.
AffineTerm affine_sub(const AffineTerm& a, const AffineTerm& b);

/// Constraint max_j (terms[j]) >= 0.
struct MaxAffineConstraint {
    std::vector<AffineTerm> terms;

    double value(const Vector& x) const {
        double m = -kInf;
        for (const auto& t : terms) m = std::max(m, t.value(x));
        return m;
    }
    bool satisfied(const Vector& x, double eps) const { return value(x) >= -eps; }
};

/// Constraint max(plus_terms) - max(minus_terms) <= 0.
struct DCConstraint {
    std::vector<AffineTerm> plus_terms;
    std::vector<AffineTerm> minus_terms;

    double violation(const Vector& x) const {
        double p = -kInf, m = -kInf;
        for (const auto& t : plus_terms) p = std::max(p, t.value(x));
        for (const auto& t : minus_terms) m = std::max(m, t.value(x));
        return p - m;
    }
};

/// Signed violation of (t, s) membership in the epigraph of the indicator
/// of (. > 0): returns max(-t, s) - max(t+s-1, 0), which is <= 0 exactly
/// when t >= 1 if s > 0, t >= 0 otherwise.
double epi_violation(double t, double s);

/// Signed violation of (t, s) membership in the hypograph of the indicator
/// of (. >= 0): returns max(t+s-1, 0) - max(-t, s), which is <= 0 exactly
/// when t <= 1 if s >= 0, t <= 0 otherwise.
double hypo_violation(double t, double s);

/// Rewrites max(plus) - max(minus) <= 0 as the conjunction of reverse convex
/// constraints: one max-affine constraint per plus-term j1, with terms
/// { minus_j2 - plus_j1 }. The conjunction is pointwise equivalent to the input.
std::vector<MaxAffineConstraint> expand_to_reverse_convex(const DCConstraint& c);

}  // namespace idrcde
