// Command-line frontend: simulate / fit / cv / eval / bench.
#include <chrono>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "idrcde/bench.hpp"

namespace {

using namespace idrcde;
using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open output file: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

UtilitySpec utility_from_json(const json& j) {
    std::string kind = j.value("kind", "piecewise_linear");
    if (kind == "identity") return UtilitySpec::identity();
    if (kind == "piecewise_linear")
        return UtilitySpec::piecewise_linear(j.value("xi1", 0.0), j.value("xi2", 2.0));
    if (kind == "truncated_quadratic")
        return UtilitySpec::truncated_quadratic(j.value("tau", 1.0));
    throw ConfigError("unknown utility kind: " + kind);
}

FitSpec fit_spec_from_json(const json& cfg, Dataset data) {
    FitSpec fs;
    fs.data = std::move(data);
    if (cfg.contains("utility")) fs.utility = utility_from_json(cfg["utility"]);
    fs.lambda_alloc = cfg.value("lambda_alloc", 0.0);
    fs.lambda_rule = cfg.value("lambda_rule", 0.0);
    if (cfg.contains("phi_alloc")) fs.phi_alloc = cfg["phi_alloc"].get<Vector>();
    if (cfg.contains("phi_rule")) fs.phi_rule = cfg["phi_rule"].get<Vector>();
    std::string sur = cfg.value("surrogate", "plain_l1");
    if (sur == "plain_l1")
        fs.surrogate = SurrogateKind::plain_l1;
    else if (sur == "mcp_like")
        fs.surrogate = SurrogateKind::mcp_like;
    else
        throw ConfigError("unknown surrogate: " + sur);
    fs.mcp_a = cfg.value("mcp_a", 3.0);
    fs.box_bound = cfg.value("box_bound", 1e3);
    fs.prox_c = cfg.value("prox_c", 1e-2);
    fs.eps_step = cfg.value("eps_step", 1e-6);
    fs.max_iterations = cfg.value("max_iterations", 200);
    fs.eps_obj = cfg.value("eps_obj", 3e-5);
    std::string init = cfg.value("init", "zeros");
    if (cfg.contains("beta_init")) {
        fs.beta_init = cfg["beta_init"].get<Vector>();
    } else if (init == "dlearn") {
        LinearRule warm = fit_dlearn(fs.data, fs.lambda_rule);
        double denom = std::abs(warm.intercept);
        fs.beta_init = warm.beta;
        if (denom > 1e-8)
            for (double& b : fs.beta_init) b /= denom;
        else if (norm_inf(fs.beta_init) > 1.0)
            for (double& b : fs.beta_init) b /= norm_inf(warm.beta);
    } else if (init != "zeros") {
        throw ConfigError("init must be zeros or dlearn");
    }
    return fs;
}

std::string maybe_timestamped(std::string body, bool timestamp) {
    if (!timestamp) return body;
    json j = json::parse(body);
    auto now = std::chrono::system_clock::now().time_since_epoch();
    j["timestamp_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    return j.dump(2);
}

int cmd_simulate(int scenario, std::size_t n, std::size_t p, std::uint64_t seed,
                 const std::string& out) {
    Dataset d = simulate({scenario, n, p, seed});
    write_dataset_csv(d, out);
    std::cout << "wrote " << d.n << " rows to " << out << "\n";
    return 0;
}

int cmd_fit(const std::string& data_path, const std::string& config_path, const std::string& out,
            double lambda_alloc, double lambda_rule, bool have_la, bool have_lr, bool timestamp) {
    Dataset data = read_dataset_csv(data_path);
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    FitSpec fs = fit_spec_from_json(cfg, std::move(data));
    if (have_la) fs.lambda_alloc = lambda_alloc;  // flags override the config file
    if (have_lr) fs.lambda_rule = lambda_rule;
    FittedIDR fitted = fit(fs);
    json model = json::parse(fitted.to_json());
    json uj;
    switch (fs.utility.kind) {
        case UtilityKind::identity:
            uj["kind"] = "identity";
            break;
        case UtilityKind::piecewise_linear:
            uj["kind"] = "piecewise_linear";
            uj["xi1"] = fs.utility.xi1;
            uj["xi2"] = fs.utility.xi2;
            break;
        case UtilityKind::truncated_quadratic:
            uj["kind"] = "truncated_quadratic";
            uj["tau"] = fs.utility.tau;
            break;
    }
    model["utility"] = uj;
    write_file(out, maybe_timestamped(model.dump(2), timestamp));
    std::cout << "objective " << fitted.objective_phi << " (bias " << fitted.bias << ", "
              << (fitted.certificate ? "certified" : "uncertified") << ")\n";
    return 0;
}

int cmd_cv(const std::string& data_path, const std::string& config_path,
           const std::string& out_table, const std::string& out_winner, std::uint64_t seed,
           int jobs, bool timestamp) {
    Dataset data = read_dataset_csv(data_path);
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    FitSpec fs = fit_spec_from_json(cfg, std::move(data));
    std::vector<std::pair<double, double>> grid;
    if (cfg.contains("grid")) {
        for (const auto& cell : cfg["grid"]) {
            if (!cell.is_array() || cell.size() != 2)
                throw ConfigError("grid entries must be [lambda_alloc, lambda_rule]");
            grid.emplace_back(cell[0].get<double>(), cell[1].get<double>());
        }
    } else {
        grid = default_lambda_grid();
    }
    int k = cfg.value("k", 10);
    CvResult cv = cross_validate(fs, grid, k, seed, jobs);
    write_file(out_table, cv.table_csv());
    json winner;
    winner["lambda_alloc"] = cv.lambda_alloc;
    winner["lambda_rule"] = cv.lambda_rule;
    winner["model"] = json::parse(cv.refit.to_json());
    write_file(out_winner, maybe_timestamped(winner.dump(2), timestamp));
    std::cout << "winner lambda_alloc=" << cv.lambda_alloc << " lambda_rule=" << cv.lambda_rule
              << "\n";
    return 0;
}

int cmd_eval(const std::string& data_path, const std::string& model_path, const std::string& out,
             bool with_truth, bool timestamp) {
    Dataset data = read_dataset_csv(data_path);
    json m = load_json(model_path);
    RuleParams rule;
    rule.beta = m.at("beta").get<Vector>();
    rule.beta0 = m.at("bias").get<int>();
    AllocParams alloc;
    alloc.b = m.at("alloc_b").get<Vector>();
    alloc.b0 = m.at("alloc_b0").get<double>();
    UtilitySpec u = m.contains("utility") ? utility_from_json(m["utility"])
                                          : UtilitySpec::piecewise_linear(0.0, 2.0);
    if (rule.beta.size() != data.p)
        throw DataError("model dimension " + std::to_string(rule.beta.size()) +
                        " does not match data p=" + std::to_string(data.p));
    DecisionFn truth = [](const Vector& x) { return true_rule(x); };
    EvalReport rep = evaluate(rule, alloc, u, data, with_truth ? &truth : nullptr);
    write_file(out, maybe_timestamped(rep.to_json(), timestamp));
    std::cout << (rep.empirical_value ? "ok" : "undefined (no matched samples)") << "\n";
    return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_prefix, std::uint64_t seed,
              bool have_seed, int jobs, bool have_jobs, bool timing) {
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    BenchConfig bc;
    if (cfg.contains("scenarios")) bc.scenarios = cfg["scenarios"].get<std::vector<int>>();
    if (cfg.contains("train_sizes"))
        bc.train_sizes = cfg["train_sizes"].get<std::vector<std::size_t>>();
    bc.replications = cfg.value("replications", 20);
    bc.test_size = cfg.value("test_size", std::size_t{10000});
    bc.p = cfg.value("p", std::size_t{10});
    if (cfg.contains("methods")) bc.methods = cfg["methods"].get<std::vector<std::string>>();
    bc.seed = cfg.value("seed", std::uint64_t{1});
    if (have_seed) bc.seed = seed;
    bc.jobs = cfg.value("jobs", 1);
    if (have_jobs) bc.jobs = jobs;
    if (cfg.contains("utility")) bc.utility = utility_from_json(cfg["utility"]);
    bc.lambda_alloc = cfg.value("lambda_alloc", 0.1);
    bc.lambda_rule = cfg.value("lambda_rule", 0.1);
    bc.idr_cv = cfg.value("idr_cv", false);
    bc.cv_folds = cfg.value("cv_folds", 10);
    bc.warm_start = cfg.value("warm_start", true);
    bc.prox_c = cfg.value("prox_c", 1e-2);
    bc.baseline_cv = cfg.value("baseline_cv", true);
    if (cfg.contains("baseline_grid"))
        bc.baseline_grid = cfg["baseline_grid"].get<std::vector<double>>();

    BenchmarkReport report = run_benchmark(bc);
    write_file(out_prefix + ".csv", report.to_csv(timing));
    write_file(out_prefix + ".json", report.to_json(timing));
    std::cout << "wrote " << out_prefix << ".csv and " << out_prefix << ".json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-aware individualized decision rules via dc programming"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset CSV");
    int scenario = 1;
    std::size_t sim_n = 100, sim_p = 10;
    std::uint64_t sim_seed = 1;
    std::string sim_out = "data.csv";
    sim->add_option("--scenario", scenario, "scenario id (1, 2 or 3)");
    sim->add_option("--n", sim_n, "sample count");
    sim->add_option("--p", sim_p, "covariate dimension (>= 3)");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--out", sim_out, "output CSV path")->required();

    // fit
    auto* fitc = app.add_subcommand("fit", "estimate a decision rule from a dataset");
    std::string fit_data, fit_cfg, fit_out = "fitted.json";
    double la = 0.0, lr = 0.0;
    bool timestamp = false;
    fitc->add_option("--data", fit_data, "dataset CSV")->required();
    fitc->add_option("--config", fit_cfg, "fit config JSON");
    fitc->add_option("--out", fit_out, "output model JSON")->required();
    auto* la_opt = fitc->add_option("--lambda-alloc", la, "allocation penalty weight");
    auto* lr_opt = fitc->add_option("--lambda-rule", lr, "rule penalty weight");
    fitc->add_flag("--timestamp", timestamp, "add a timestamp field to outputs");

    // cv
    auto* cvc = app.add_subcommand("cv", "cross-validate the penalty weights");
    std::string cv_data, cv_cfg, cv_table = "folds.csv", cv_out = "winner.json";
    std::uint64_t cv_seed = 1;
    int jobs = 1;
    cvc->add_option("--data", cv_data, "dataset CSV")->required();
    cvc->add_option("--config", cv_cfg, "cv config JSON (grid, k, fit settings)");
    cvc->add_option("--out-table", cv_table, "fold table CSV path");
    cvc->add_option("--out", cv_out, "winner JSON path");
    cvc->add_option("--seed", cv_seed, "fold assignment seed");
    cvc->add_option("--jobs", jobs, "parallel workers");
    cvc->add_flag("--timestamp", timestamp, "add a timestamp field to outputs");

    // eval
    auto* evc = app.add_subcommand("eval", "evaluate a fitted rule on a dataset");
    std::string ev_data, ev_model, ev_out = "report.json";
    bool with_truth = false;
    evc->add_option("--data", ev_data, "dataset CSV")->required();
    evc->add_option("--model", ev_model, "fitted model JSON")->required();
    evc->add_option("--out", ev_out, "report JSON path");
    evc->add_flag("--with-truth", with_truth, "also report misclassification against the synthetic truth");
    evc->add_flag("--timestamp", timestamp, "add a timestamp field to outputs");

    // bench
    auto* bnc = app.add_subcommand("bench", "run the replication benchmark");
    std::string bn_cfg, bn_out = "bench";
    std::uint64_t bn_seed = 1;
    int bn_jobs = 1;
    bnc->add_option("--config", bn_cfg, "benchmark config JSON");
    bnc->add_option("--out-prefix", bn_out, "output prefix for .csv/.json");
    auto* bn_seed_opt = bnc->add_option("--seed", bn_seed, "base seed");
    auto* bn_jobs_opt = bnc->add_option("--jobs", bn_jobs, "parallel replications");
    bool bn_timing = false;
    bnc->add_flag("--timing", bn_timing, "include wall-clock timing rows (not byte-reproducible)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(scenario, sim_n, sim_p, sim_seed, sim_out);
        if (fitc->parsed())
            return cmd_fit(fit_data, fit_cfg, fit_out, la, lr, la_opt->count() > 0,
                           lr_opt->count() > 0, timestamp);
        if (cvc->parsed()) return cmd_cv(cv_data, cv_cfg, cv_table, cv_out, cv_seed, jobs, timestamp);
        if (evc->parsed()) return cmd_eval(ev_data, ev_model, ev_out, with_truth, timestamp);
        if (bnc->parsed())
            return cmd_bench(bn_cfg, bn_out, bn_seed, bn_seed_opt->count() > 0, bn_jobs,
                             bn_jobs_opt->count() > 0, bn_timing);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
