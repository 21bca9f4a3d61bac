#include "idrcde/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

#include "idrcde/oce.hpp"
#include "idrcde/rng.hpp"
#include "json.hpp"

namespace idrcde {

DecisionFn as_decision(const RuleParams& rule) {
    RuleParams copy = rule;
    return [copy](const Vector& x) { return decide(copy, x); };
}

Vector covariate_row(const Dataset& d, std::size_t i) {
    Vector x(d.p);
    for (std::size_t j = 0; j < d.p; ++j) x[j] = d.x(i, j);
    return x;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows) {
    Dataset s;
    s.n = rows.size();
    s.p = d.p;
    s.x = Matrix(s.n, s.p);
    s.a.resize(s.n);
    s.z.resize(s.n);
    s.propensity.resize(s.n);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t j = 0; j < d.p; ++j) s.x(k, j) = d.x(rows[k], j);
        s.a[k] = d.a[rows[k]];
        s.z[k] = d.z[rows[k]];
        s.propensity[k] = d.propensity[rows[k]];
    }
    return s;
}

std::optional<double> empirical_value(const DecisionFn& rule, const Dataset& test) {
    if (test.n == 0) throw DataError("empirical_value: empty test set");
    double num = 0.0, den = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < test.n; ++i) {
        if (rule(covariate_row(test, i)) != test.a[i]) continue;
        any = true;
        num += test.z[i] / test.propensity[i];
        den += 1.0 / test.propensity[i];
    }
    if (!any) return std::nullopt;
    return num / den;
}

std::optional<double> empirical_value(const RuleParams& rule, const Dataset& test) {
    return empirical_value(as_decision(rule), test);
}

std::optional<double> empirical_cde(const DecisionFn& rule, const AllocParams& alloc,
                                    const UtilitySpec& u, const Dataset& data) {
    if (data.n == 0) throw DataError("empirical_cde: empty data");
    double num = 0.0, den = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < data.n; ++i) {
        Vector x = covariate_row(data, i);
        if (rule(x) != data.a[i]) continue;
        any = true;
        double a = alloc_eval(alloc, x);
        num += (a + utility_eval(u, data.z[i] - a)) / data.propensity[i];
        den += 1.0 / data.propensity[i];
    }
    if (!any) return std::nullopt;
    return num / den;
}

std::optional<double> empirical_cde(const RuleParams& rule, const AllocParams& alloc,
                                    const UtilitySpec& u, const Dataset& data) {
    return empirical_cde(as_decision(rule), alloc, u, data);
}

double misclassification(const DecisionFn& rule, const DecisionFn& truth, const Matrix& x_test) {
    if (x_test.rows() == 0) throw DataError("misclassification: empty test covariates");
    std::size_t wrong = 0;
    Vector x(x_test.cols());
    for (std::size_t i = 0; i < x_test.rows(); ++i) {
        for (std::size_t j = 0; j < x_test.cols(); ++j) x[j] = x_test(i, j);
        if (rule(x) != truth(x)) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(x_test.rows());
}

std::optional<std::map<double, double>> matched_quantiles(const DecisionFn& rule,
                                                          const Dataset& test,
                                                          const std::vector<double>& probs) {
    for (double q : probs)
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("matched_quantiles: probs must be in (0,1)");
    Vector matched;
    for (std::size_t i = 0; i < test.n; ++i)
        if (rule(covariate_row(test, i)) == test.a[i]) matched.push_back(test.z[i]);
    if (matched.empty()) return std::nullopt;
    SampleSet s(matched);
    std::map<double, double> out;
    for (double q : probs) out[q] = empirical_quantile(s, q);
    return out;
}

std::optional<std::map<double, double>> matched_quantiles(const RuleParams& rule,
                                                          const Dataset& test,
                                                          const std::vector<double>& probs) {
    return matched_quantiles(as_decision(rule), test, probs);
}

EvalReport evaluate(const RuleParams& rule, const AllocParams& alloc, const UtilitySpec& u,
                    const Dataset& test, const DecisionFn* truth) {
    EvalReport rep;
    DecisionFn fn = as_decision(rule);
    rep.empirical_value = empirical_value(fn, test);
    rep.empirical_cde = empirical_cde(fn, alloc, u, test);
    auto qs = matched_quantiles(fn, test, {0.25, 0.5});
    if (qs) rep.quantiles = *qs;
    for (std::size_t i = 0; i < test.n; ++i)
        if (fn(covariate_row(test, i)) == test.a[i]) ++rep.n_matched;
    if (truth) rep.misclassification = misclassification(fn, *truth, test.x);
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v)
            j[key] = *v;
        else
            j[key] = "undefined";
    };
    put("empirical_value", empirical_value);
    put("empirical_cde", empirical_cde);
    if (misclassification) j["misclassification"] = *misclassification;
    nlohmann::json q;
    for (auto& [p, v] : quantiles) q[std::to_string(p)] = v;
    j["quantiles"] = q;
    j["n_matched"] = n_matched;
    j["status"] = empirical_value ? "ok" : "undefined";
    return j.dump(2);
}

std::vector<std::pair<double, double>> default_lambda_grid() {
    std::vector<double> axis = {0.0, 1e-3, 1e-2, 1e-1, 1.0};
    std::vector<std::pair<double, double>> grid;
    for (double a : axis)
        for (double r : axis) grid.emplace_back(a, r);
    return grid;
}

std::string CvResult::table_csv() const {
    std::ostringstream os;
    os << "lambda_alloc,lambda_rule,fold,ocde\n";
    char buf[64];
    for (const auto& r : table) {
        std::snprintf(buf, sizeof buf, "%.17g", r.lambda_alloc);
        os << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", r.lambda_rule);
        os << buf << "," << r.fold << ",";
        if (r.ocde) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.ocde);
            os << buf;
        } else {
            os << "nan";
        }
        os << "\n";
    }
    return os.str();
}

CvResult cross_validate(const FitSpec& tmpl, const std::vector<std::pair<double, double>>& grid,
                        int k, std::uint64_t seed, int jobs) {
    tmpl.validate();
    if (grid.empty()) throw ConfigError("cross_validate: empty grid");
    const std::size_t n = tmpl.data.n;
    if (k < 2 || static_cast<std::size_t>(k) > n)
        throw ConfigError("cross_validate: need 2 <= k <= n");

    // seeded shuffle, then round-robin fold assignment
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, "cv-folds"));
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % k);

    std::vector<std::vector<std::size_t>> train_rows(k), test_rows(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (int f = 0; f < k; ++f)
            (fold_of[i] == f ? test_rows[f] : train_rows[f]).push_back(i);
    }

    struct Task {
        std::size_t grid_idx;
        int fold;
    };
    std::vector<Task> tasks;
    for (std::size_t gi = 0; gi < grid.size(); ++gi)
        for (int f = 0; f < k; ++f) tasks.push_back({gi, f});
    std::vector<std::optional<double>> ocde(tasks.size());

    auto run_task = [&](std::size_t ti) {
        const Task& t = tasks[ti];
        FitSpec fs = tmpl;
        fs.data = subset(tmpl.data, train_rows[t.fold]);
        fs.lambda_alloc = grid[t.grid_idx].first;
        fs.lambda_rule = grid[t.grid_idx].second;
        FittedIDR fitted = fit(fs);
        Dataset holdout = subset(tmpl.data, test_rows[t.fold]);
        ocde[ti] = empirical_cde(fitted.theta, fitted.alloc, tmpl.utility, holdout);
    };

    if (jobs <= 1) {
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                std::size_t ti = next.fetch_add(1);
                if (ti >= tasks.size()) return;
                run_task(ti);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    CvResult out;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti)
        out.table.push_back({grid[tasks[ti].grid_idx].first, grid[tasks[ti].grid_idx].second,
                             tasks[ti].fold, ocde[ti]});

    std::vector<double> avg(grid.size(), 0.0);
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        double acc = 0.0;
        bool ok = true;
        for (int f = 0; f < k; ++f) {
            const auto& v = ocde[gi * k + f];
            if (!v) {
                ok = false;
                break;
            }
            acc += *v;
        }
        avg[gi] = ok ? acc / k : -kInf;
    }
    std::size_t best = 0;
    for (std::size_t gi = 1; gi < grid.size(); ++gi) {
        bool better = avg[gi] > avg[best] ||
                      (avg[gi] == avg[best] && grid[gi] < grid[best]);
        if (better) best = gi;
    }
    out.lambda_alloc = grid[best].first;
    out.lambda_rule = grid[best].second;

    FitSpec full = tmpl;
    full.lambda_alloc = out.lambda_alloc;
    full.lambda_rule = out.lambda_rule;
    out.refit = fit(full);
    return out;
}

}  // namespace idrcde
