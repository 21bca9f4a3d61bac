#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "idrcde/epigraph.hpp"
#include "idrcde/rng.hpp"

using namespace idrcde;

namespace {

bool in_epi(double t, double s) { return t >= (s > 0.0 ? 1.0 : 0.0); }
bool in_hypo(double t, double s) { return t <= (s >= 0.0 ? 1.0 : 0.0); }

/// The two indicator-graph constraints over variables (t, s) = (x0, x1).
DCConstraint epi_constraint() {
    DCConstraint c;
    AffineTerm minus_t;
    minus_t.push(0, -1.0);
    AffineTerm s;
    s.push(1, 1.0);
    AffineTerm sum;  // t + s - 1
    sum.push(0, 1.0);
    sum.push(1, 1.0);
    sum.offset = -1.0;
    c.plus_terms = {minus_t, s};
    c.minus_terms = {sum, AffineTerm{}};
    return c;
}

DCConstraint hypo_constraint() {
    DCConstraint c = epi_constraint();
    std::swap(c.plus_terms, c.minus_terms);
    return c;
}

}  // namespace

TEST_CASE("epi/hypo violation values") {
    CHECK(epi_violation(1.0, 0.5) == doctest::Approx(0.0));
    CHECK(epi_violation(0.0, -1.0) == doctest::Approx(0.0));
    CHECK(epi_violation(0.0, 0.5) == doctest::Approx(0.5));
    CHECK(hypo_violation(1.0, 0.0) == doctest::Approx(0.0));
    CHECK(hypo_violation(1.0, -0.5) == doctest::Approx(0.5));
    CHECK(hypo_violation(-3.0, -1.0) == doctest::Approx(-3.0));
}

TEST_CASE("indicator graph equivalence on the grid") {
    // grid {-2, -1.9, ..., 2}^2: membership by formula must match the
    // indicator definition with zero mismatches
    int mism = 0;
    for (int a = 0; a <= 40; ++a) {
        for (int b = 0; b <= 40; ++b) {
            double t = -2.0 + 0.1 * a;
            double s = -2.0 + 0.1 * b;
            if ((epi_violation(t, s) <= 0.0) != in_epi(t, s)) ++mism;
            if ((hypo_violation(t, s) <= 0.0) != in_hypo(t, s)) ++mism;
        }
    }
    CHECK(mism == 0);
}

TEST_CASE("expand_to_reverse_convex on the epigraph constraint") {
    auto out = expand_to_reverse_convex(epi_constraint());
    REQUIRE(out.size() == 2);
    // expected: { max(2t+s-1, t) >= 0, max(t-1, -s) >= 0 } with (t,s)=(x0,x1)
    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
        Vector x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        double t = x[0], s = x[1];
        CHECK(out[0].value(x) ==
              doctest::Approx(std::max(2 * t + s - 1, t)).epsilon(1e-12));
        CHECK(out[1].value(x) == doctest::Approx(std::max(t - 1, -s)).epsilon(1e-12));
    }
}

TEST_CASE("expand_to_reverse_convex on the hypograph constraint") {
    auto out = expand_to_reverse_convex(hypo_constraint());
    REQUIRE(out.size() == 2);
    Rng rng(4);
    for (int k = 0; k < 500; ++k) {
        Vector x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        double t = x[0], s = x[1];
        CHECK(out[0].value(x) ==
              doctest::Approx(std::max(1 - 2 * t - s, 1 - t)).epsilon(1e-12));
        CHECK(out[1].value(x) == doctest::Approx(std::max(-t, s)).epsilon(1e-12));
    }
}

TEST_CASE("single plus-term expansion is a direct rearrangement") {
    DCConstraint c;
    AffineTerm a1;
    a1.push(0, 1.0);  // x0
    AffineTerm b1;
    b1.push(1, 1.0);  // x1
    AffineTerm b2;
    b2.push(0, -2.0);
    b2.offset = 3.0;  // -2 x0 + 3
    c.plus_terms = {a1};
    c.minus_terms = {b1, b2};
    auto out = expand_to_reverse_convex(c);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].terms.size() == 2);
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        Vector x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        CHECK(out[0].value(x) ==
              doctest::Approx(std::max(x[1] - x[0], -2 * x[0] + 3 - x[0])).epsilon(1e-12));
    }
}

TEST_CASE("expansion preserves feasibility pointwise") {
    Rng rng(17);
    for (int cons = 0; cons < 50; ++cons) {
        // random dc constraint in 3 variables
        DCConstraint c;
        int np = 1 + static_cast<int>(rng.below(3));
        int nm = 1 + static_cast<int>(rng.below(3));
        auto rnd_term = [&]() {
            AffineTerm t;
            for (int j = 0; j < 3; ++j) t.push(j, std::round(rng.uniform(-2, 2) * 4) / 4.0);
            t.offset = std::round(rng.uniform(-2, 2) * 4) / 4.0;
            return t;
        };
        for (int k = 0; k < np; ++k) c.plus_terms.push_back(rnd_term());
        for (int k = 0; k < nm; ++k) c.minus_terms.push_back(rnd_term());
        auto out = expand_to_reverse_convex(c);
        REQUIRE(out.size() == c.plus_terms.size());
        for (int pt = 0; pt < 200; ++pt) {
            Vector x = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
            double viol = c.violation(x);
            if (std::abs(viol) <= 1e-9) continue;  // roundoff boundary band
            bool orig = viol <= 0.0;
            bool expanded = true;
            for (const auto& mc : out) expanded = expanded && (mc.value(x) >= -1e-12);
            CHECK(orig == expanded);
        }
    }
}

TEST_CASE("empty term lists are rejected") {
    DCConstraint c;
    c.plus_terms.push_back(AffineTerm{});
    CHECK_THROWS(expand_to_reverse_convex(c));
}
