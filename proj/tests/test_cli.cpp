#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(IDRCDE_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

struct TempFiles {
    std::vector<std::string> names;
    ~TempFiles() {
        for (const auto& n : names) std::remove(n.c_str());
        std::remove("cli_stdout.txt");
        std::remove("cli_stderr.txt");
    }
    const char* add(const std::string& n) {
        names.push_back(n);
        return names.back().c_str();
    }
};

}  // namespace

TEST_CASE("simulate writes a schema-correct, reproducible csv") {
    TempFiles tmp;
    tmp.add("cli_sim_a.csv");
    tmp.add("cli_sim_b.csv");
    CHECK(run_cli("simulate --scenario 1 --n 10 --p 10 --seed 7 --out cli_sim_a.csv") == 0);
    CHECK(run_cli("simulate --scenario 1 --n 10 --p 10 --seed 7 --out cli_sim_b.csv") == 0);
    std::string a = slurp("cli_sim_a.csv");
    CHECK(a == slurp("cli_sim_b.csv"));  // byte-identical reruns

    std::istringstream is(a);
    std::string header;
    std::getline(is, header);
    CHECK(header == "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,a,z,prop");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 10);

    // p < 3 is a config error (exit 2)
    CHECK(run_cli("simulate --scenario 1 --n 10 --p 2 --seed 7 --out cli_sim_a.csv") == 2);
}

TEST_CASE("fit on the single-sample example reaches objective zero") {
    TempFiles tmp;
    tmp.add("cli_fit_data.csv");
    tmp.add("cli_fit_out.json");
    {
        std::ofstream out("cli_fit_data.csv");
        out << "x1,a,z,prop\n0.5,1,-1,0.5\n";
    }
    CHECK(run_cli("fit --data cli_fit_data.csv --out cli_fit_out.json") == 0);
    auto j = nlohmann::json::parse(slurp("cli_fit_out.json"));
    CHECK(std::abs(j["objective"].get<double>()) <= 1e-7);
    CHECK(j.contains("runs"));
    CHECK(j["runs"].size() == 2);  // both bias runs reported

    // malformed csv -> data error (exit 3)
    tmp.add("cli_bad.csv");
    {
        std::ofstream out("cli_bad.csv");
        out << "x1,a,z,prop\noops,1,3,0.5\n";
    }
    CHECK(run_cli("fit --data cli_bad.csv --out cli_fit_out.json") == 3);

    // missing propensity column -> schema error (exit 3)
    {
        std::ofstream out("cli_bad.csv");
        out << "x1,a,z\n0.5,1,3\n";
    }
    CHECK(run_cli("fit --data cli_bad.csv --out cli_fit_out.json") == 3);

    // unknown flag -> usage error (exit 2)
    CHECK(run_cli("fit --data cli_fit_data.csv --out x.json --no-such-flag") == 2);
}

TEST_CASE("fit reruns are byte-identical without the timestamp flag") {
    TempFiles tmp;
    tmp.add("cli_fix.csv");
    tmp.add("cli_fit1.json");
    tmp.add("cli_fit2.json");
    CHECK(run_cli("simulate --scenario 2 --n 25 --p 3 --seed 3 --out cli_fix.csv") == 0);
    CHECK(run_cli("fit --data cli_fix.csv --lambda-alloc 0.05 --lambda-rule 0.05 --out cli_fit1.json") == 0);
    CHECK(run_cli("fit --data cli_fix.csv --lambda-alloc 0.05 --lambda-rule 0.05 --out cli_fit2.json") == 0);
    CHECK(slurp("cli_fit1.json") == slurp("cli_fit2.json"));

    CHECK(run_cli("fit --data cli_fix.csv --out cli_fit2.json --timestamp") == 0);
    CHECK(slurp("cli_fit2.json").find("timestamp_ms") != std::string::npos);
}

TEST_CASE("eval reports both criteria and identity utility collapses them") {
    TempFiles tmp;
    tmp.add("cli_ev.csv");
    tmp.add("cli_ev_model.json");
    tmp.add("cli_ev_report.json");
    CHECK(run_cli("simulate --scenario 1 --n 60 --p 3 --seed 11 --out cli_ev.csv") == 0);
    {
        nlohmann::json m;
        m["beta"] = {0.4, -0.2, 0.1};
        m["bias"] = 1;
        m["alloc_b"] = {0.0, 0.0, 0.0};
        m["alloc_b0"] = 0.5;
        m["utility"] = {{"kind", "identity"}};
        std::ofstream out("cli_ev_model.json");
        out << m.dump(2);
    }
    CHECK(run_cli("eval --data cli_ev.csv --model cli_ev_model.json --out cli_ev_report.json "
                  "--with-truth") == 0);
    auto rep = nlohmann::json::parse(slurp("cli_ev_report.json"));
    REQUIRE(rep["status"] == "ok");
    CHECK(rep["empirical_value"].get<double>() ==
          doctest::Approx(rep["empirical_cde"].get<double>()).epsilon(1e-12));
    CHECK(rep.contains("misclassification"));
    CHECK(rep["n_matched"].get<int>() > 0);
}

TEST_CASE("eval with no matched samples reports undefined and exits zero") {
    TempFiles tmp;
    tmp.add("cli_und.csv");
    tmp.add("cli_und_model.json");
    tmp.add("cli_und_report.json");
    {
        std::ofstream out("cli_und.csv");
        out << "x1,x2,x3,a,z,prop\n0.1,0.2,0.3,1,5.0,0.5\n-0.4,0.0,0.2,1,2.0,0.5\n";
    }
    {
        nlohmann::json m;
        m["beta"] = {0.0, 0.0, 0.0};
        m["bias"] = -1;  // decides -1 everywhere; every observed action is +1
        m["alloc_b"] = {0.0, 0.0, 0.0};
        m["alloc_b0"] = 0.0;
        std::ofstream out("cli_und_model.json");
        out << m.dump();
    }
    CHECK(run_cli("eval --data cli_und.csv --model cli_und_model.json --out cli_und_report.json") ==
          0);
    auto rep = nlohmann::json::parse(slurp("cli_und_report.json"));
    CHECK(rep["status"] == "undefined");
    CHECK(rep["empirical_value"] == "undefined");
    CHECK(rep["n_matched"] == 0);
}

TEST_CASE("cv returns the single grid point and writes the fold table") {
    TempFiles tmp;
    tmp.add("cli_cv.csv");
    tmp.add("cli_cv_cfg.json");
    tmp.add("cli_cv_folds.csv");
    tmp.add("cli_cv_win.json");
    CHECK(run_cli("simulate --scenario 1 --n 20 --p 3 --seed 5 --out cli_cv.csv") == 0);
    {
        nlohmann::json cfg;
        cfg["grid"] = {{0.05, 0.05}};
        cfg["k"] = 4;
        std::ofstream out("cli_cv_cfg.json");
        out << cfg.dump();
    }
    CHECK(run_cli("cv --data cli_cv.csv --config cli_cv_cfg.json --out-table cli_cv_folds.csv "
                  "--out cli_cv_win.json --seed 9") == 0);
    auto win = nlohmann::json::parse(slurp("cli_cv_win.json"));
    CHECK(win["lambda_alloc"].get<double>() == 0.05);
    CHECK(win["lambda_rule"].get<double>() == 0.05);
    std::string folds = slurp("cli_cv_folds.csv");
    CHECK(folds.rfind("lambda_alloc,lambda_rule,fold,ocde\n", 0) == 0);
}

TEST_CASE("bench emits rows for every method and metric") {
    TempFiles tmp;
    tmp.add("cli_bench_cfg.json");
    tmp.add("cli_bench.csv");
    tmp.add("cli_bench.json");
    {
        nlohmann::json cfg;
        cfg["scenarios"] = {2};
        cfg["train_sizes"] = {40};
        cfg["replications"] = 2;
        cfg["test_size"] = 300;
        cfg["methods"] = {"idr_cde", "dlearn", "l1pls"};
        cfg["baseline_cv"] = false;
        cfg["baseline_grid"] = {0.05};
        std::ofstream out("cli_bench_cfg.json");
        out << cfg.dump();
    }
    CHECK(run_cli("bench --config cli_bench_cfg.json --out-prefix cli_bench --seed 4 --jobs 2") ==
          0);
    std::string csv = slurp("cli_bench.csv");
    for (const char* needle : {"idr_cde", "dlearn", "l1pls", "misclassification", "value", "q50",
                               "q25"})
        CHECK(csv.find(needle) != std::string::npos);
    auto js = nlohmann::json::parse(slurp("cli_bench.json"));
    CHECK(js["cells"].size() == 3);
}
