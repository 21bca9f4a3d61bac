#include "idrcde/epigraph.hpp"

#include <map>
#include <stdexcept>

namespace idrcde {

AffineTerm affine_sub(const AffineTerm& a, const AffineTerm& b) {
    std::map<int, double> merged;
    for (std::size_t k = 0; k < a.idx.size(); ++k) merged[a.idx[k]] += a.coef[k];
    for (std::size_t k = 0; k < b.idx.size(); ++k) merged[b.idx[k]] -= b.coef[k];
    AffineTerm r;
    r.offset = a.offset - b.offset;
    for (auto& [i, c] : merged) {
        if (c != 0.0) {
            r.idx.push_back(i);
            r.coef.push_back(c);
        }
    }
    return r;
}

double epi_violation(double t, double s) {
    return std::max(-t, s) - std::max(t + s - 1.0, 0.0);
}

double hypo_violation(double t, double s) {
    return std::max(t + s - 1.0, 0.0) - std::max(-t, s);
}

std::vector<MaxAffineConstraint> expand_to_reverse_convex(const DCConstraint& c) {
    if (c.plus_terms.empty() || c.minus_terms.empty())
        throw std::invalid_argument("expand_to_reverse_convex: both term lists must be nonempty");
    std::vector<MaxAffineConstraint> out;
    out.reserve(c.plus_terms.size());
    for (const auto& plus : c.plus_terms) {
        MaxAffineConstraint mc;
        mc.terms.reserve(c.minus_terms.size());
        for (const auto& minus : c.minus_terms) mc.terms.push_back(affine_sub(minus, plus));
        out.push_back(std::move(mc));
    }
    return out;
}

}  // namespace idrcde
