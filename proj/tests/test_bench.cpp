#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "idrcde/bench.hpp"
#include "idrcde/rng.hpp"

using namespace idrcde;

TEST_CASE("simulate respects scenario structure") {
    for (int id : {1, 2, 3}) {
        Dataset d = simulate({id, 200, 10, 42});
        CHECK(d.n == 200);
        CHECK(d.p == 10);
        for (std::size_t i = 0; i < d.n; ++i) {
            for (std::size_t j = 0; j < d.p; ++j) CHECK(std::abs(d.x(i, j)) <= 1.0);
            CHECK(d.propensity[i] == 0.5);
            double main = 1.0 + d.x(i, 0) + d.x(i, 1);
            double inter = 0.5 + d.x(i, 0) - d.x(i, 1) + d.x(i, 2);
            double eps = d.z[i] - main - inter * d.a[i];
            if (id == 2)
                CHECK(eps >= 0.0);  // Weibull support
            else
                CHECK(eps > 0.0);  // exponentials are strictly positive
        }
    }
}

TEST_CASE("simulate is deterministic in the seed") {
    Dataset a = simulate({1, 50, 5, 7});
    Dataset b = simulate({1, 50, 5, 7});
    Dataset c = simulate({1, 50, 5, 8});
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.n; ++i) {
        all_equal = all_equal && a.z[i] == b.z[i] && a.a[i] == b.a[i];
        any_diff = any_diff || a.z[i] != c.z[i];
        for (std::size_t j = 0; j < a.p; ++j) {
            all_equal = all_equal && a.x(i, j) == b.x(i, j);
        }
    }
    CHECK(all_equal);
    CHECK(any_diff);
    CHECK_THROWS_AS(simulate({1, 10, 2, 1}), ConfigError);  // p >= 3
    CHECK_THROWS_AS(simulate({4, 10, 5, 1}), ConfigError);
}

TEST_CASE("true_rule") {
    CHECK(true_rule({0, 0, 0, 0}) == 1);           // sign(0.5)
    CHECK(true_rule({-1, 1, -1}) == -1);           // sign(-2.5)
    CHECK(true_rule({0.25, 0.5, -0.25}) == 1);     // sign(0) -> +1
}

TEST_CASE("fit_penalized_ls basics and subgradient oracle") {
    // one sample, design [1], lambda = 0: coefficient equals the response
    Matrix d1(1, 1);
    d1(0, 0) = 1.0;
    auto r1 = fit_penalized_ls(d1, {3.5}, {1.0}, 0.0, {0});
    CHECK(r1.coef[0] == doctest::Approx(3.5));

    // lambda at least the max absolute correlation kills every penalized coef
    Rng rng(55);
    Matrix d2(20, 3);
    Vector y2(20), w2(20, 1.0);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 3; ++j) d2(i, j) = rng.uniform(-1, 1);
        y2[i] = rng.normal();
    }
    double max_corr = 0.0;
    for (int j = 0; j < 3; ++j) {
        double c = 0.0;
        for (int i = 0; i < 20; ++i) c += d2(i, j) * y2[i];
        max_corr = std::max(max_corr, std::abs(c) / 20.0);
    }
    auto r2 = fit_penalized_ls(d2, y2, w2, max_corr + 1e-9, {1, 1, 1});
    for (double c : r2.coef) CHECK(c == 0.0);

    // random problems against the subgradient optimality conditions
    for (int rep = 0; rep < 50; ++rep) {
        int n = 5, p = 3;
        Matrix dd(n, p);
        Vector yy(n), ww(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < p; ++j) dd(i, j) = rng.normal();
            yy[i] = rng.normal();
            ww[i] = rng.uniform(0.2, 2.0);
        }
        double lambda = rng.uniform(0.0, 0.5);
        std::vector<char> mask = {1, 1, 0};
        auto res = fit_penalized_ls(dd, yy, ww, lambda, mask);
        // check 0 in the subdifferential coordinatewise
        for (int j = 0; j < p; ++j) {
            double grad = 0.0;
            for (int i = 0; i < n; ++i) {
                double pred = 0.0;
                for (int k = 0; k < p; ++k) pred += res.coef[k] * dd(i, k);
                grad -= ww[i] * dd(i, j) * (yy[i] - pred);
            }
            grad /= n;
            if (mask[j] && res.coef[j] == 0.0)
                CHECK(std::abs(grad) <= lambda + 1e-7);
            else if (mask[j])
                CHECK(grad + (res.coef[j] > 0 ? lambda : -lambda) ==
                      doctest::Approx(0.0).epsilon(1e-6));
            else
                CHECK(grad == doctest::Approx(0.0).epsilon(1e-6));
        }
    }

    // zero-variance penalized column is pinned with a warning
    Matrix d3(4, 2);
    for (int i = 0; i < 4; ++i) {
        d3(i, 0) = 1.0;
        d3(i, 1) = 0.0;
    }
    auto r3 = fit_penalized_ls(d3, {1, 2, 3, 4}, {1, 1, 1, 1}, 0.1, {0, 1});
    CHECK(r3.coef[1] == 0.0);
    CHECK(r3.warnings.size() == 1);
}

TEST_CASE("l1-pls rules") {
    // constant positive treatment effect: rule is constant +1
    Rng rng(66);
    Dataset d;
    d.n = 400;
    d.p = 3;
    d.x = Matrix(d.n, 3);
    d.a.resize(d.n);
    d.z.resize(d.n);
    d.propensity.assign(d.n, 0.5);
    for (std::size_t i = 0; i < d.n; ++i) {
        for (int j = 0; j < 3; ++j) d.x(i, j) = rng.uniform(-1, 1);
        d.a[i] = rng.sign();
        d.z[i] = 1.0 * d.a[i] + 0.02 * rng.normal();
    }
    LinearRule r = fit_l1pls(d, 0.0);
    CHECK(r.intercept > 0.5);
    for (int k = 0; k < 20; ++k) {
        Vector x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        CHECK(r.decide(x) == 1);
    }

    // pure interaction z = x1 * a: rule approaches sign(x1)
    Dataset d2 = d;
    for (std::size_t i = 0; i < d2.n; ++i) d2.z[i] = d2.x(i, 0) * d2.a[i];
    LinearRule r2 = fit_l1pls(d2, 0.0);
    int agree = 0, total = 0;
    for (int k = 0; k < 500; ++k) {
        Vector x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (std::abs(x[0]) < 0.05) continue;
        ++total;
        if (r2.decide(x) == (x[0] >= 0 ? 1 : -1)) ++agree;
    }
    CHECK(agree == total);

    // huge lambda: constant rule by the intercept sign
    LinearRule r3 = fit_l1pls(d, 1e6);
    CHECK(norm_inf(r3.beta) == 0.0);
}

TEST_CASE("dlearn rules") {
    Rng rng(77);
    Dataset d;
    d.n = 500;
    d.p = 3;
    d.x = Matrix(d.n, 3);
    d.a.resize(d.n);
    d.z.resize(d.n);
    d.propensity.assign(d.n, 0.5);
    // z = a exactly: za = 1, intercept-dominated fit, rule constant +1
    for (std::size_t i = 0; i < d.n; ++i) {
        for (int j = 0; j < 3; ++j) d.x(i, j) = rng.uniform(-1, 1);
        d.a[i] = rng.sign();
        d.z[i] = static_cast<double>(d.a[i]);
    }
    LinearRule r = fit_dlearn(d, 0.0);
    CHECK(r.intercept == doctest::Approx(1.0).epsilon(1e-6));
    for (int k = 0; k < 20; ++k) {
        Vector x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        CHECK(r.decide(x) == 1);
    }

    // pure interaction
    Dataset d2 = d;
    for (std::size_t i = 0; i < d2.n; ++i) d2.z[i] = d2.x(i, 0) * d2.a[i];
    LinearRule r2 = fit_dlearn(d2, 0.0);
    int agree = 0, total = 0;
    for (int k = 0; k < 500; ++k) {
        Vector x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (std::abs(x[0]) < 0.05) continue;
        ++total;
        if (r2.decide(x) == (x[0] >= 0 ? 1 : -1)) ++agree;
    }
    CHECK(agree == total);

    LinearRule r3 = fit_dlearn(d, 1e6);
    CHECK(norm_inf(r3.beta) == 0.0);
    CHECK(r3.intercept == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("run_benchmark structural smoke") {
    BenchConfig cfg;
    cfg.scenarios = {1};
    cfg.train_sizes = {50};
    cfg.replications = 2;
    cfg.test_size = 1000;
    cfg.methods = {"idr_cde", "dlearn", "l1pls", "oracle"};
    cfg.seed = 31;
    cfg.baseline_cv = false;
    cfg.baseline_grid = {0.01};
    auto report = run_benchmark(cfg);
    REQUIRE(report.cells.size() == 4);
    for (const auto& cell : report.cells) {
        CHECK(cell.failed_reps.empty());
        CHECK(cell.metrics.count("misclassification") == 1);
        CHECK(cell.metrics.count("value") == 1);
        CHECK(cell.metrics.count("q50") == 1);
        CHECK(cell.metrics.count("q25") == 1);
        CHECK(cell.metrics.at("misclassification").n == 2);
        if (cell.method == "oracle")
            CHECK(cell.metrics.at("misclassification").mean == 0.0);
        if (cell.method == "idr_cde") {
            CHECK(cell.solver.iterations.size() ==
                  2 * cfg.seed_scales.size() * cfg.replications);
            CHECK(cell.solver.max_descent_slack <= 1e-7);
            CHECK(cell.solver.max_feas_violation <= 1e-8);
        }
    }
    std::string csv = report.to_csv();
    CHECK(csv.rfind("scenario,n,method,metric,mean,stderr,n_reps\n", 0) == 0);
    for (const char* m : {"idr_cde", "dlearn", "l1pls", "oracle"})
        CHECK(csv.find(m) != std::string::npos);
    CHECK(csv.find("time_seconds") == std::string::npos);
    CHECK(report.to_csv(true).find("time_seconds") != std::string::npos);
    CHECK(report.cells[0].solver.total_seconds >= 0.0);
    std::string js = report.to_json();
    CHECK(js.find("\"cells\"") != std::string::npos);
    CHECK(js.find("RWL baseline not included") != std::string::npos);
}

TEST_CASE("random rule concentrates near one half") {
    BenchConfig cfg;
    cfg.scenarios = {1};
    cfg.train_sizes = {30};
    cfg.replications = 2;
    cfg.test_size = 10000;
    cfg.methods = {"random"};
    cfg.seed = 17;
    auto report = run_benchmark(cfg);
    double m = report.cells[0].metrics.at("misclassification").mean;
    CHECK(std::abs(m - 0.5) <= 0.05);
}

TEST_CASE("deterministic across reruns and parallelism") {
    BenchConfig cfg;
    cfg.scenarios = {2};
    cfg.train_sizes = {30};
    cfg.replications = 3;
    cfg.test_size = 400;
    cfg.methods = {"idr_cde", "dlearn", "l1pls"};
    cfg.seed = 5;
    cfg.baseline_cv = false;
    cfg.baseline_grid = {0.05};
    auto a = run_benchmark(cfg);
    auto b = run_benchmark(cfg);
    CHECK(a.to_csv() == b.to_csv());
    cfg.jobs = 2;
    auto c = run_benchmark(cfg);
    CHECK(a.to_csv() == c.to_csv());
}

TEST_CASE("standard errors shrink with more replications") {
    BenchConfig base;
    base.scenarios = {1};
    base.train_sizes = {30};
    base.test_size = 400;
    base.methods = {"random"};
    base.seed = 9;

    base.replications = 4;
    auto r4 = run_benchmark(base);
    base.replications = 16;
    auto r16 = run_benchmark(base);
    double s4 = r4.cells[0].metrics.at("misclassification").stderr_;
    double s16 = r16.cells[0].metrics.at("misclassification").stderr_;
    CHECK(s16 < s4);
    CHECK(s16 / s4 > 0.1);  // roughly the 1/2 predicted by 1/sqrt(R)
}

TEST_CASE("fitted rules do not depend on the test data") {
    Dataset train = simulate({1, 40, 5, 13});
    LinearRule r1 = fit_dlearn(train, 0.05);
    // permuting the test set obviously cannot change the fitted rule; check
    // bit-identical coefficients after a second fit from the same data
    LinearRule r2 = fit_dlearn(train, 0.05);
    CHECK(r1.intercept == r2.intercept);
    for (std::size_t j = 0; j < r1.beta.size(); ++j) CHECK(r1.beta[j] == r2.beta[j]);
}
