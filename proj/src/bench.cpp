#include "idrcde/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>

#include "idrcde/rng.hpp"
#include "json.hpp"

namespace idrcde {

DecisionFn as_decision(const LinearRule& rule) {
    LinearRule copy = rule;
    return [copy](const Vector& x) { return copy.decide(x); };
}

Dataset simulate(const ScenarioSpec& s) {
    if (s.id < 1 || s.id > 3) throw ConfigError("simulate: scenario must be 1, 2 or 3");
    if (s.p < 3) throw ConfigError("simulate: p >= 3 required");
    if (s.n < 1) throw ConfigError("simulate: n >= 1 required");

    Rng rng(derive_seed(s.seed, "simulate", static_cast<std::uint64_t>(s.id)));
    Dataset d;
    d.n = s.n;
    d.p = s.p;
    d.x = Matrix(s.n, s.p);
    d.a.resize(s.n);
    d.z.resize(s.n);
    d.propensity.assign(s.n, 0.5);
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = 0; j < s.p; ++j) d.x(i, j) = rng.uniform(-1.0, 1.0);
        d.a[i] = rng.sign();
        double main = 1.0 + d.x(i, 0) + d.x(i, 1);
        double inter = 0.5 + d.x(i, 0) - d.x(i, 1) + d.x(i, 2);
        double eps = 0.0;
        switch (s.id) {
            case 1:
                eps = std::exp(2.0 * rng.normal());
                break;
            case 2:
                eps = rng.weibull(0.5, 0.3);
                break;
            case 3:
                eps = std::exp(2.0 * std::abs(main) * rng.normal());
                break;
        }
        d.z[i] = main + inter * static_cast<double>(d.a[i]) + eps;
    }
    return d;
}

int true_rule(const Vector& x) {
    if (x.size() < 3) throw ConfigError("true_rule: needs at least 3 covariates");
    return 0.5 + x[0] - x[1] + x[2] >= 0.0 ? 1 : -1;
}

PenalizedLsResult fit_penalized_ls(const Matrix& design, const Vector& response,
                                   const Vector& weights, double lambda,
                                   const std::vector<char>& penalized) {
    const std::size_t n = design.rows(), d = design.cols();
    if (response.size() != n || weights.size() != n || penalized.size() != d)
        throw ConfigError("fit_penalized_ls: dimension mismatch");
    if (lambda < 0.0) throw ConfigError("fit_penalized_ls: lambda must be nonnegative");

    PenalizedLsResult out;
    out.coef.assign(d, 0.0);
    Vector nu(d, 0.0);
    std::vector<char> dropped(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += weights[i] * design(i, j) * design(i, j);
        nu[j] = s / static_cast<double>(n);
        if (nu[j] <= 0.0) {
            dropped[j] = 1;
            out.warnings.push_back("column " + std::to_string(j) +
                                   " has zero weighted variance; coefficient pinned to 0");
        }
    }

    Vector resid = response;  // residual y - c.d, with c = 0
    auto sweep = [&]() {
        double max_change = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (dropped[j]) continue;
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += weights[i] * design(i, j) * resid[i];
            rho = rho / static_cast<double>(n) + nu[j] * out.coef[j];
            double cj;
            if (penalized[j]) {
                double soft = std::abs(rho) - lambda;
                cj = soft > 0.0 ? (rho > 0.0 ? soft : -soft) / nu[j] : 0.0;
            } else {
                cj = rho / nu[j];
            }
            double delta = cj - out.coef[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * design(i, j);
                out.coef[j] = cj;
                max_change = std::max(max_change, std::abs(delta) * std::sqrt(nu[j]));
            }
        }
        return max_change;
    };
    for (int it = 0; it < 10000; ++it)
        if (sweep() <= 1e-12) break;

    // subgradient optimality check; one extra pass if it fails
    for (int rounds = 0; rounds < 4; ++rounds) {
        double worst = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (dropped[j]) continue;
            double gradj = 0.0;
            for (std::size_t i = 0; i < n; ++i) gradj -= weights[i] * design(i, j) * resid[i];
            gradj /= static_cast<double>(n);
            if (penalized[j]) {
                if (out.coef[j] != 0.0)
                    worst = std::max(worst, std::abs(gradj + (out.coef[j] > 0 ? lambda : -lambda)));
                else
                    worst = std::max(worst, std::max(0.0, std::abs(gradj) - lambda));
            } else {
                worst = std::max(worst, std::abs(gradj));
            }
        }
        if (worst <= 1e-8) break;
        for (int it = 0; it < 1000; ++it)
            if (sweep() <= 1e-14) break;
    }
    return out;
}

LinearRule fit_l1pls(const Dataset& data, double lambda) {
    require_valid(data);
    const std::size_t n = data.n, p = data.p, d = 2 * p + 2;
    Matrix design(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) design(i, 1 + j) = data.x(i, j);
        design(i, 1 + p) = static_cast<double>(data.a[i]);
        for (std::size_t j = 0; j < p; ++j)
            design(i, 2 + p + j) = data.x(i, j) * static_cast<double>(data.a[i]);
    }
    Vector w(n, 1.0);
    std::vector<char> mask(d, 1);
    mask[0] = 0;  // intercept unpenalized
    auto res = fit_penalized_ls(design, data.z, w, lambda, mask);
    LinearRule rule;
    rule.intercept = res.coef[1 + p];
    rule.beta.assign(res.coef.begin() + 2 + p, res.coef.end());
    return rule;
}

LinearRule fit_dlearn(const Dataset& data, double lambda) {
    require_valid(data);
    const std::size_t n = data.n, p = data.p, d = p + 1;
    Matrix design(n, d);
    Vector y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) design(i, j) = data.x(i, j);
        design(i, p) = 1.0;
        y[i] = data.z[i] * static_cast<double>(data.a[i]);
        w[i] = 1.0 / data.propensity[i];
    }
    std::vector<char> mask(d, 1);
    mask[p] = 0;  // intercept unpenalized
    auto res = fit_penalized_ls(design, y, w, lambda, mask);
    LinearRule rule;
    rule.beta.assign(res.coef.begin(), res.coef.begin() + p);
    rule.intercept = res.coef[p];
    return rule;
}

Vector robust_dlearn_direction(const Dataset& data, double lambda, double winsor_q) {
    Dataset capped = data;
    Vector sorted = data.z;
    std::sort(sorted.begin(), sorted.end());
    double cap = sorted[static_cast<std::size_t>(winsor_q * (sorted.size() - 1))];
    for (double& z : capped.z) z = std::min(z, cap);
    LinearRule r = fit_dlearn(capped, lambda);
    Vector beta = r.beta;
    double norm = std::max(norm_inf(beta), 1e-9);
    for (double& b : beta) b /= norm;
    return beta;
}

FittedIDR fit_with_restarts(const FitSpec& base, const Vector& direction,
                            const std::vector<double>& scales, SolveStats* stats) {
    if (scales.empty()) throw ConfigError("fit_with_restarts: no seed scales");
    FittedIDR best;
    bool first = true;
    for (double g : scales) {
        FitSpec fs = base;
        fs.beta_init = direction;
        for (double& b : fs.beta_init) b *= g;
        FittedIDR cand = fit(fs);
        if (stats) {
            for (const BiasRun* run : {&cand.run_plus, &cand.run_minus}) {
                stats->iterations.push_back(run->trace.iterations());
                stats->max_descent_slack =
                    std::max(stats->max_descent_slack, run->trace.max_descent_slack());
                stats->max_feas_violation =
                    std::max(stats->max_feas_violation, run->trace.max_feas_violation());
                for (const auto& st : run->trace.steps)
                    stats->max_split_product = std::max(stats->max_split_product,
                                                        st.split_product);
                if (run->trace.hit_iteration_limit) ++stats->hit_limit;
            }
        }
        if (first || cand.objective_phi < best.objective_phi) {
            best = std::move(cand);
            first = false;
        }
    }
    return best;
}

namespace {

/// k-fold CV for a penalized LS baseline on its own weighted prediction
/// error. Ties pick the smaller lambda.
double cv_baseline_lambda(const Matrix& design, const Vector& y, const Vector& w,
                          const std::vector<char>& mask, const std::vector<double>& grid, int k,
                          std::uint64_t seed) {
    const std::size_t n = design.rows();
    int folds = std::min<int>(k, static_cast<int>(n));
    if (folds < 2 || grid.size() <= 1) return grid.empty() ? 0.0 : grid.front();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, "baseline-cv"));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % folds);

    double best_err = kInf, best_lambda = grid.front();
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    for (double lambda : sorted) {
        double err = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? te : tr).push_back(i);
            Matrix dtr(tr.size(), design.cols());
            Vector ytr(tr.size()), wtr(tr.size());
            for (std::size_t r = 0; r < tr.size(); ++r) {
                for (std::size_t j = 0; j < design.cols(); ++j) dtr(r, j) = design(tr[r], j);
                ytr[r] = y[tr[r]];
                wtr[r] = w[tr[r]];
            }
            auto res = fit_penalized_ls(dtr, ytr, wtr, lambda, mask);
            for (std::size_t ri : te) {
                double pred = 0.0;
                for (std::size_t j = 0; j < design.cols(); ++j)
                    pred += res.coef[j] * design(ri, j);
                double e = y[ri] - pred;
                err += w[ri] * e * e;
            }
        }
        if (err < best_err - 1e-12) {
            best_err = err;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

LinearRule fit_l1pls_cv(const Dataset& data, const std::vector<double>& grid, int k,
                        std::uint64_t seed) {
    const std::size_t n = data.n, p = data.p, d = 2 * p + 2;
    Matrix design(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) design(i, 1 + j) = data.x(i, j);
        design(i, 1 + p) = static_cast<double>(data.a[i]);
        for (std::size_t j = 0; j < p; ++j)
            design(i, 2 + p + j) = data.x(i, j) * static_cast<double>(data.a[i]);
    }
    Vector w(n, 1.0);
    std::vector<char> mask(d, 1);
    mask[0] = 0;
    double lambda = cv_baseline_lambda(design, data.z, w, mask, grid, k, seed);
    return fit_l1pls(data, lambda);
}

LinearRule fit_dlearn_cv(const Dataset& data, const std::vector<double>& grid, int k,
                         std::uint64_t seed) {
    const std::size_t n = data.n, p = data.p, d = p + 1;
    Matrix design(n, d);
    Vector y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) design(i, j) = data.x(i, j);
        design(i, p) = 1.0;
        y[i] = data.z[i] * static_cast<double>(data.a[i]);
        w[i] = 1.0 / data.propensity[i];
    }
    std::vector<char> mask(d, 1);
    mask[p] = 0;
    double lambda = cv_baseline_lambda(design, y, w, mask, grid, k, seed);
    return fit_dlearn(data, lambda);
}

DecisionFn random_rule(std::uint64_t seed) {
    return [seed](const Vector& x) {
        std::uint64_t h = seed;
        for (double v : x) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h ^= bits;
            h = splitmix64(h);
        }
        return (h >> 17) & 1 ? 1 : -1;
    };
}

struct RepOutcome {
    bool failed = false;
    std::string error;
    std::map<std::string, double> metrics;  // nan = undefined
    SolveStats solver;
};

MetricStats aggregate(const std::vector<RepOutcome>& reps, const std::string& key) {
    MetricStats st;
    for (const auto& r : reps) {
        if (r.failed) {
            st.values.push_back(std::nan(""));
            continue;
        }
        auto it = r.metrics.find(key);
        double v = it == r.metrics.end() ? std::nan("") : it->second;
        st.values.push_back(v);
        if (!std::isnan(v)) {
            st.mean += v;
            ++st.n;
        }
    }
    if (st.n > 0) st.mean /= st.n;
    if (st.n > 1) {
        double ss = 0.0;
        for (double v : st.values)
            if (!std::isnan(v)) ss += (v - st.mean) * (v - st.mean);
        st.stderr_ = std::sqrt(ss / (st.n - 1)) / std::sqrt(static_cast<double>(st.n));
    }
    return st;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchConfig& config) {
    if (config.replications < 1) throw ConfigError("run_benchmark: replications >= 1 required");
    BenchmarkReport report;
    report.notes = "RWL baseline not included";

    for (int scenario : config.scenarios) {
        for (std::size_t nsize : config.train_sizes) {
            std::string tag = "s" + std::to_string(scenario) + "/n" + std::to_string(nsize);
            std::map<std::string, std::vector<RepOutcome>> by_method;
            for (const auto& m : config.methods)
                by_method[m].resize(config.replications);

            auto run_rep = [&](int rep) {
                Dataset train = simulate({scenario, nsize, config.p,
                                          derive_seed(config.seed, "train/" + tag,
                                                      static_cast<std::uint64_t>(rep))});
                Dataset test = simulate({scenario, config.test_size, config.p,
                                         derive_seed(config.seed, "test/" + tag,
                                                     static_cast<std::uint64_t>(rep))});
                DecisionFn truth = [](const Vector& x) { return true_rule(x); };

                for (const auto& method : config.methods) {
                    RepOutcome& out = by_method[method][rep];
                    try {
                        DecisionFn fn;
                        auto t0 = std::chrono::steady_clock::now();
                        if (method == "idr_cde") {
                            FitSpec fs;
                            fs.data = train;
                            fs.utility = config.utility;
                            fs.prox_c = config.prox_c;
                            Vector dir = config.warm_start
                                             ? robust_dlearn_direction(train, config.lambda_rule,
                                                                       config.winsor_q)
                                             : Vector(train.p, 0.0);
                            std::vector<double> scales =
                                config.warm_start ? config.seed_scales : std::vector<double>{1.0};
                            FittedIDR fitted;
                            if (config.idr_cv) {
                                auto grid = config.idr_grid.empty() ? default_lambda_grid()
                                                                    : config.idr_grid;
                                fs.beta_init = dir;
                                auto cv = cross_validate(fs, grid, config.cv_folds,
                                                         derive_seed(config.seed, "cv/" + tag,
                                                                     rep));
                                fitted = std::move(cv.refit);
                                for (const BiasRun* run : {&fitted.run_plus, &fitted.run_minus}) {
                                    out.solver.iterations.push_back(run->trace.iterations());
                                    if (run->trace.hit_iteration_limit) ++out.solver.hit_limit;
                                }
                            } else {
                                fs.lambda_alloc = config.lambda_alloc;
                                fs.lambda_rule = config.lambda_rule;
                                fitted = fit_with_restarts(fs, dir, scales, &out.solver);
                            }
                            fn = as_decision(fitted.theta);
                        } else if (method == "dlearn") {
                            LinearRule r = config.baseline_cv
                                               ? fit_dlearn_cv(train, config.baseline_grid,
                                                               config.cv_folds,
                                                               derive_seed(config.seed,
                                                                           "dlcv/" + tag, rep))
                                               : fit_dlearn(train, config.baseline_grid.front());
                            fn = as_decision(r);
                        } else if (method == "l1pls") {
                            LinearRule r = config.baseline_cv
                                               ? fit_l1pls_cv(train, config.baseline_grid,
                                                              config.cv_folds,
                                                              derive_seed(config.seed,
                                                                          "plscv/" + tag, rep))
                                               : fit_l1pls(train, config.baseline_grid.front());
                            fn = as_decision(r);
                        } else if (method == "oracle") {
                            fn = truth;
                        } else if (method == "random") {
                            fn = random_rule(derive_seed(config.seed, "random/" + tag, rep));
                        } else {
                            throw ConfigError("run_benchmark: unknown method '" + method + "'");
                        }
                        auto t1 = std::chrono::steady_clock::now();
                        out.solver.total_seconds =
                            std::chrono::duration<double>(t1 - t0).count();

                        out.metrics["misclassification"] = misclassification(fn, truth, test.x);
                        auto val = empirical_value(fn, test);
                        out.metrics["value"] = val ? *val : std::nan("");
                        auto qs = matched_quantiles(fn, test, {0.25, 0.5});
                        out.metrics["q25"] = qs ? qs->at(0.25) : std::nan("");
                        out.metrics["q50"] = qs ? qs->at(0.5) : std::nan("");
                        out.metrics["time_seconds"] = out.solver.total_seconds;
                        if (method == "idr_cde") {
                            double iters = 0.0;
                            for (int k : out.solver.iterations) iters += k;
                            out.metrics["dc_iterations"] =
                                out.solver.iterations.empty()
                                    ? std::nan("")
                                    : iters / out.solver.iterations.size();
                        }
                    } catch (const std::exception& e) {
                        out.failed = true;
                        out.error = e.what();
                    }
                }
            };

            if (config.jobs <= 1) {
                for (int rep = 0; rep < config.replications; ++rep) run_rep(rep);
            } else {
                std::atomic<int> next{0};
                auto worker = [&] {
                    for (;;) {
                        int rep = next.fetch_add(1);
                        if (rep >= config.replications) return;
                        run_rep(rep);
                    }
                };
                std::vector<std::thread> pool;
                for (int t = 0; t < config.jobs; ++t) pool.emplace_back(worker);
                for (auto& th : pool) th.join();
            }

            for (const auto& method : config.methods) {
                BenchmarkReport::Cell cell;
                cell.scenario = scenario;
                cell.n = nsize;
                cell.method = method;
                const auto& reps = by_method[method];
                std::vector<std::string> keys = {"misclassification", "value", "q50", "q25",
                                                 "time_seconds"};
                if (method == "idr_cde") keys.push_back("dc_iterations");
                for (const auto& k : keys) cell.metrics[k] = aggregate(reps, k);
                for (int rep = 0; rep < config.replications; ++rep) {
                    if (reps[rep].failed) cell.failed_reps.push_back(rep);
                    for (int it : reps[rep].solver.iterations)
                        cell.solver.iterations.push_back(it);
                    cell.solver.max_descent_slack = std::max(
                        cell.solver.max_descent_slack, reps[rep].solver.max_descent_slack);
                    cell.solver.max_feas_violation = std::max(
                        cell.solver.max_feas_violation, reps[rep].solver.max_feas_violation);
                    cell.solver.max_split_product = std::max(
                        cell.solver.max_split_product, reps[rep].solver.max_split_product);
                    cell.solver.hit_limit += reps[rep].solver.hit_limit;
                    cell.solver.total_seconds += reps[rep].solver.total_seconds;
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }
    return report;
}

std::string BenchmarkReport::to_csv(bool include_timing) const {
    std::ostringstream os;
    os << "scenario,n,method,metric,mean,stderr,n_reps\n";
    char buf[64];
    for (const auto& cell : cells) {
        for (const auto& [metric, st] : cell.metrics) {
            if (!include_timing && metric == "time_seconds") continue;
            os << cell.scenario << "," << cell.n << "," << cell.method << "," << metric << ",";
            std::snprintf(buf, sizeof buf, "%.10g", st.mean);
            os << buf << ",";
            std::snprintf(buf, sizeof buf, "%.10g", st.stderr_);
            os << buf << "," << st.n << "\n";
        }
    }
    return os.str();
}

std::string BenchmarkReport::to_json(bool include_timing) const {
    nlohmann::json j;
    j["notes"] = notes;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cell : cells) {
        nlohmann::json c;
        c["scenario"] = cell.scenario;
        c["n"] = cell.n;
        c["method"] = cell.method;
        for (const auto& [metric, st] : cell.metrics) {
            if (!include_timing && metric == "time_seconds") continue;
            nlohmann::json m;
            m["mean"] = st.mean;
            m["stderr"] = st.stderr_;
            m["n_reps"] = st.n;
            nlohmann::json vals = nlohmann::json::array();
            for (double v : st.values)
                vals.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
            m["values"] = vals;
            c["metrics"][metric] = m;
        }
        if (!cell.failed_reps.empty()) c["failed_reps"] = cell.failed_reps;
        if (cell.method == "idr_cde") {
            c["dc_iterations"] = cell.solver.iterations;
            c["max_descent_slack"] = cell.solver.max_descent_slack;
            c["max_feas_violation"] = cell.solver.max_feas_violation;
            c["hit_iteration_limit"] = cell.solver.hit_limit;
        }
        arr.push_back(std::move(c));
    }
    j["cells"] = std::move(arr);
    return j.dump(2);
}

}  // namespace idrcde
