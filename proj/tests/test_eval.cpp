#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "idrcde/bench.hpp"
#include "idrcde/eval.hpp"
#include "idrcde/rng.hpp"

using namespace idrcde;

namespace {

Dataset make_rows(std::vector<std::array<double, 2>> x, std::vector<int> a, Vector z,
                  Vector prop) {
    Dataset d;
    d.n = x.size();
    d.p = 2;
    d.x = Matrix(d.n, 2);
    for (std::size_t i = 0; i < d.n; ++i) {
        d.x(i, 0) = x[i][0];
        d.x(i, 1) = x[i][1];
    }
    d.a = std::move(a);
    d.z = std::move(z);
    d.propensity = std::move(prop);
    return d;
}

}  // namespace

TEST_CASE("empirical_value weighted averages") {
    DecisionFn always_plus = [](const Vector&) { return 1; };

    // single matched sample
    Dataset d1 = make_rows({{0, 0}}, {1}, {3.0}, {0.5});
    CHECK(*empirical_value(always_plus, d1) == doctest::Approx(3.0));

    // two matched samples with different propensities: (4+16)/(2+4) = 10/3
    Dataset d2 = make_rows({{0, 0}, {0, 0}}, {1, 1}, {2.0, 4.0}, {0.5, 0.25});
    CHECK(*empirical_value(always_plus, d2) == doctest::Approx(10.0 / 3.0));

    // all matched with equal propensity: plain mean
    Dataset d3 = make_rows({{0, 0}, {0, 0}, {0, 0}}, {1, 1, 1}, {1.0, 2.0, 6.0},
                           {0.5, 0.5, 0.5});
    CHECK(*empirical_value(always_plus, d3) == doctest::Approx(3.0));

    // no matches -> undefined, not a number
    Dataset d4 = make_rows({{0, 0}}, {-1}, {3.0}, {0.5});
    CHECK_FALSE(empirical_value(always_plus, d4).has_value());
}

TEST_CASE("empirical_value agrees under an independent accumulation order") {
    Rng rng(21);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t n = 5 + rng.below(40);
        Dataset d;
        d.n = n;
        d.p = 2;
        d.x = Matrix(n, 2);
        d.a.resize(n);
        d.z.resize(n);
        d.propensity.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            d.x(i, 0) = rng.uniform(-1, 1);
            d.x(i, 1) = rng.uniform(-1, 1);
            d.a[i] = rng.sign();
            d.z[i] = rng.normal() * 3;
            d.propensity[i] = rng.uniform(0.1, 1.0);
        }
        RuleParams rule{{1.0, -1.0}, 1};
        auto v1 = empirical_value(rule, d);
        // reversed row order
        std::vector<std::size_t> rev(n);
        for (std::size_t i = 0; i < n; ++i) rev[i] = n - 1 - i;
        auto v2 = empirical_value(rule, subset(d, rev));
        REQUIRE(v1.has_value() == v2.has_value());
        if (v1) CHECK(*v1 == doctest::Approx(*v2).epsilon(1e-12));
    }
}

TEST_CASE("empirical_cde reductions") {
    DecisionFn always_plus = [](const Vector&) { return 1; };
    AllocParams alloc{{0.5, -1.0}, 0.25};

    // identity utility makes the allocation cancel exactly
    Rng rng(23);
    Dataset d;
    d.n = 25;
    d.p = 2;
    d.x = Matrix(25, 2);
    d.a.resize(25);
    d.z.resize(25);
    d.propensity.resize(25);
    for (std::size_t i = 0; i < 25; ++i) {
        d.x(i, 0) = rng.uniform(-1, 1);
        d.x(i, 1) = rng.uniform(-1, 1);
        d.a[i] = rng.sign();
        d.z[i] = rng.normal();
        d.propensity[i] = rng.uniform(0.2, 1.0);
    }
    auto v = empirical_value(always_plus, d);
    auto c = empirical_cde(always_plus, alloc, UtilitySpec::identity(), d);
    CHECK(*c == doctest::Approx(*v).epsilon(1e-12));

    // single match, alpha = 1, z = 1, pw(0,2): 1 + u(0) = 1
    Dataset one = make_rows({{2.0, 0.0}}, {1}, {1.0}, {0.5});
    AllocParams unit{{0.5, 0.0}, 0.0};  // alpha(x) = 0.5 * 2 = 1
    auto c1 = empirical_cde(always_plus, unit, UtilitySpec::piecewise_linear(0, 2), one);
    CHECK(*c1 == doctest::Approx(1.0));

    // two matches, hand-computed weighted average
    Dataset two = make_rows({{1.0, 0.0}, {3.0, 0.0}}, {1, 1}, {2.0, -1.0}, {0.5, 0.25});
    AllocParams aa{{1.0, 0.0}, 0.0};  // alpha = x1
    auto u = UtilitySpec::piecewise_linear(0.0, 2.0);
    // sample 1: alpha=1, u(1)=0 -> 1; weight 2       -> 2
    // sample 2: alpha=3, u(-4)=-8 -> -5; weight 4    -> -20
    double expect = (2.0 * 1.0 + 4.0 * (-5.0)) / (2.0 + 4.0);
    auto c2 = empirical_cde(always_plus, aa, u, two);
    CHECK(*c2 == doctest::Approx(expect));
}

TEST_CASE("misclassification rates") {
    DecisionFn truth = [](const Vector& x) { return true_rule(x); };
    DecisionFn anti = [&](const Vector& x) { return -true_rule(x); };
    DecisionFn constant = [](const Vector&) { return 1; };
    Rng rng(29);
    Matrix x(500, 3);
    std::size_t truth_minus = 0;
    for (std::size_t i = 0; i < 500; ++i) {
        Vector row(3);
        for (int j = 0; j < 3; ++j) {
            row[j] = rng.uniform(-1, 1);
            x(i, j) = row[j];
        }
        if (true_rule(row) == -1) ++truth_minus;
    }
    CHECK(misclassification(truth, truth, x) == 0.0);
    CHECK(misclassification(anti, truth, x) == 1.0);
    CHECK(misclassification(constant, truth, x) ==
          doctest::Approx(static_cast<double>(truth_minus) / 500.0));
}

TEST_CASE("matched_quantiles") {
    DecisionFn always_plus = [](const Vector&) { return 1; };
    Dataset d = make_rows({{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}},
                          {1, 1, -1, 1, 1}, {1.0, 2.0, 99.0, 3.0, 4.0},
                          {0.5, 0.5, 0.5, 0.5, 0.5});
    auto q = matched_quantiles(always_plus, d, {0.5});
    REQUIRE(q.has_value());
    CHECK(q->at(0.5) == doctest::Approx(2.0));

    Dataset single = make_rows({{0, 0}}, {1}, {7.0}, {0.5});
    auto qs = matched_quantiles(always_plus, single, {0.1, 0.5, 0.9});
    for (auto& [p, v] : *qs) CHECK(v == 7.0);

    Dataset constant = make_rows({{0, 0}, {0, 0}}, {1, 1}, {5.0, 5.0}, {0.5, 0.5});
    auto qc = matched_quantiles(always_plus, constant, {0.25, 0.75});
    for (auto& [p, v] : *qc) CHECK(v == 5.0);

    // median lies between the min and max of matched outcomes
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Dataset r;
        r.n = 10;
        r.p = 2;
        r.x = Matrix(10, 2);
        r.a.resize(10);
        r.z.resize(10);
        r.propensity.assign(10, 0.5);
        for (std::size_t i = 0; i < 10; ++i) {
            r.x(i, 0) = rng.uniform(-1, 1);
            r.x(i, 1) = rng.uniform(-1, 1);
            r.a[i] = rng.sign();
            r.z[i] = rng.normal();
        }
        auto qq = matched_quantiles(always_plus, r, {0.5});
        if (!qq) continue;
        double zmin = kInf, zmax = -kInf;
        for (std::size_t i = 0; i < r.n; ++i)
            if (r.a[i] == 1) {
                zmin = std::min(zmin, r.z[i]);
                zmax = std::max(zmax, r.z[i]);
            }
        CHECK(qq->at(0.5) >= zmin);
        CHECK(qq->at(0.5) <= zmax);
    }

    Dataset none = make_rows({{0, 0}}, {-1}, {1.0}, {0.5});
    CHECK_FALSE(matched_quantiles(always_plus, none, {0.5}).has_value());
}

TEST_CASE("cross_validate basics") {
    Dataset d = simulate({1, 24, 3, 99});
    FitSpec tmpl;
    tmpl.data = d;
    tmpl.utility = UtilitySpec::piecewise_linear(0.0, 2.0);

    // one grid point is returned as-is
    auto cv1 = cross_validate(tmpl, {{0.05, 0.05}}, 4, 7);
    CHECK(cv1.lambda_alloc == 0.05);
    CHECK(cv1.lambda_rule == 0.05);
    CHECK(cv1.table.size() == 4);

    // identical grid points tie-break lexicographically (same pair back)
    auto cv2 = cross_validate(tmpl, {{0.1, 0.1}, {0.1, 0.1}}, 3, 7);
    CHECK(cv2.lambda_alloc == 0.1);
    CHECK(cv2.lambda_rule == 0.1);

    // reproducible: same seed gives the identical fold table
    auto cv3 = cross_validate(tmpl, {{0.05, 0.05}}, 4, 7);
    REQUIRE(cv3.table.size() == cv1.table.size());
    for (std::size_t i = 0; i < cv1.table.size(); ++i) {
        CHECK(cv1.table[i].fold == cv3.table[i].fold);
        REQUIRE(cv1.table[i].ocde.has_value() == cv3.table[i].ocde.has_value());
        if (cv1.table[i].ocde) CHECK(*cv1.table[i].ocde == *cv3.table[i].ocde);
    }

    // csv export shape
    std::string csv = cv1.table_csv();
    CHECK(csv.rfind("lambda_alloc,lambda_rule,fold,ocde\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    CHECK_THROWS_AS(cross_validate(tmpl, {}, 4, 7), ConfigError);
    CHECK_THROWS_AS(cross_validate(tmpl, {{0.0, 0.0}}, 1, 7), ConfigError);
    CHECK_THROWS_AS(cross_validate(tmpl, {{0.0, 0.0}}, 100, 7), ConfigError);
}

TEST_CASE("cross_validate leave-one-out on a 10-point dataset") {
    Dataset d = simulate({1, 10, 3, 5});
    FitSpec tmpl;
    tmpl.data = d;
    tmpl.utility = UtilitySpec::piecewise_linear(0.0, 2.0);
    auto cv = cross_validate(tmpl, {{0.0, 0.0}, {0.1, 0.1}}, 10, 11);
    CHECK(cv.table.size() == 20);  // every fold has exactly one held-out point
    bool found = (cv.lambda_alloc == 0.0 && cv.lambda_rule == 0.0) ||
                 (cv.lambda_alloc == 0.1 && cv.lambda_rule == 0.1);
    CHECK(found);
}

TEST_CASE("parallel cross_validate matches serial") {
    Dataset d = simulate({2, 20, 3, 123});
    FitSpec tmpl;
    tmpl.data = d;
    tmpl.utility = UtilitySpec::piecewise_linear(0.0, 2.0);
    std::vector<std::pair<double, double>> grid = {{0.0, 0.0}, {0.1, 0.1}};
    auto serial = cross_validate(tmpl, grid, 4, 3, 1);
    auto parallel = cross_validate(tmpl, grid, 4, 3, 2);
    CHECK(serial.lambda_alloc == parallel.lambda_alloc);
    CHECK(serial.lambda_rule == parallel.lambda_rule);
    REQUIRE(serial.table.size() == parallel.table.size());
    for (std::size_t i = 0; i < serial.table.size(); ++i) {
        REQUIRE(serial.table[i].ocde.has_value() == parallel.table[i].ocde.has_value());
        if (serial.table[i].ocde) CHECK(*serial.table[i].ocde == *parallel.table[i].ocde);
    }
}
