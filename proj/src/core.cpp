#include "idrcde/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace idrcde {

std::vector<std::string> validate_dataset(const Dataset& d) {
    std::vector<std::string> bad;
    if (d.n < 1) bad.push_back("dataset empty (n >= 1 required)");
    if (d.p < 1) bad.push_back("no covariates (p >= 1 required)");
    if (d.x.rows() != d.n || d.x.cols() != d.p) bad.push_back("covariate matrix shape mismatch");
    if (d.a.size() != d.n) bad.push_back("action vector length mismatch");
    if (d.z.size() != d.n) bad.push_back("outcome vector length mismatch");
    if (d.propensity.size() != d.n) bad.push_back("propensity vector length mismatch");
    if (!bad.empty()) return bad;

    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < d.p; ++j)
            if (!std::isfinite(d.x(i, j)))
                bad.push_back("row " + std::to_string(i) + ": non-finite covariate x" + std::to_string(j + 1));
        if (d.a[i] != 1 && d.a[i] != -1)
            bad.push_back("row " + std::to_string(i) + ": action not in {-1,+1}");
        if (!std::isfinite(d.z[i]))
            bad.push_back("row " + std::to_string(i) + ": non-finite outcome");
        if (!std::isfinite(d.propensity[i]) || d.propensity[i] <= 0.0)
            bad.push_back("row " + std::to_string(i) + ": nonpositive propensity");
        else if (d.propensity[i] > 1.0)
            bad.push_back("row " + std::to_string(i) + ": propensity above 1");
    }
    return bad;
}

void require_valid(const Dataset& d) {
    auto bad = validate_dataset(d);
    if (!bad.empty()) {
        std::string msg = "invalid dataset:";
        std::size_t shown = std::min<std::size_t>(bad.size(), 8);
        for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + bad[i];
        if (bad.size() > shown)
            msg += "\n  ... and " + std::to_string(bad.size() - shown) + " more";
        throw DataError(msg);
    }
}

UtilitySpec UtilitySpec::piecewise_linear(double xi1, double xi2) {
    UtilitySpec u{UtilityKind::piecewise_linear, xi1, xi2, 0.0};
    u.validate();
    return u;
}

UtilitySpec UtilitySpec::truncated_quadratic(double tau) {
    UtilitySpec u{UtilityKind::truncated_quadratic, 0.0, 0.0, tau};
    u.validate();
    return u;
}

void UtilitySpec::validate() const {
    switch (kind) {
        case UtilityKind::identity:
            return;
        case UtilityKind::piecewise_linear:
            if (!(xi1 >= 0.0 && xi1 < 1.0 && xi2 > 1.0))
                throw ConfigError("piecewise_linear utility requires 0 <= xi1 < 1 < xi2");
            return;
        case UtilityKind::truncated_quadratic:
            if (!(tau > 0.0) || !std::isfinite(tau))
                throw ConfigError("truncated_quadratic utility requires tau > 0");
            return;
    }
    throw ConfigError("unknown utility kind");
}

double utility_eval(const UtilitySpec& u, double t) {
    switch (u.kind) {
        case UtilityKind::identity:
            return t;
        case UtilityKind::piecewise_linear:
            return u.xi1 * std::max(0.0, t) - u.xi2 * std::max(0.0, -t);
        case UtilityKind::truncated_quadratic:
            return t <= u.tau ? t - t * t / (2.0 * u.tau) : u.tau / 2.0;
    }
    return t;
}

int decide(const RuleParams& rule, const Vector& x) {
    if (rule.beta0 != 1 && rule.beta0 != -1)
        throw ConfigError("decide: bias must be exactly -1 or +1");
    if (x.size() != rule.beta.size())
        throw ConfigError("decide: covariate dimension mismatch");
    double margin = dot(rule.beta, x) + static_cast<double>(rule.beta0);
    return margin >= 0.0 ? 1 : -1;
}

double alloc_eval(const AllocParams& w, const Vector& x) {
    if (x.size() != w.b.size())
        throw ConfigError("alloc_eval: covariate dimension mismatch");
    return dot(w.b, x) + w.b0;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& tok, std::size_t row, std::size_t col) {
    const char* b = tok.data();
    const char* e = b + tok.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e)
        throw DataError("CSV parse error at row " + std::to_string(row) + ", column " +
                        std::to_string(col + 1) + ": '" + tok + "'");
    return v;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
    auto header = split_csv_line(line);
    if (header.size() < 4)
        throw DataError("dataset header must be x1,...,xp,a,z,prop (got " +
                        std::to_string(header.size()) + " columns)");
    std::size_t p = header.size() - 3;
    for (std::size_t j = 0; j < p; ++j) {
        std::string want = "x" + std::to_string(j + 1);
        if (header[j] != want)
            throw DataError("dataset header column " + std::to_string(j + 1) + " must be '" +
                            want + "', got '" + header[j] + "'");
    }
    if (header[p] != "a" || header[p + 1] != "z" || header[p + 2] != "prop")
        throw DataError("dataset header must end with a,z,prop");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto toks = split_csv_line(line);
        if (toks.size() != header.size())
            throw DataError("row " + std::to_string(lineno) + " has " +
                            std::to_string(toks.size()) + " columns, expected " +
                            std::to_string(header.size()));
        std::vector<double> vals(toks.size());
        for (std::size_t j = 0; j < toks.size(); ++j) vals[j] = parse_number(toks[j], lineno, j);
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw DataError("dataset has a header but no rows: " + path);

    Dataset d;
    d.n = rows.size();
    d.p = p;
    d.x = Matrix(d.n, d.p);
    d.a.resize(d.n);
    d.z.resize(d.n);
    d.propensity.resize(d.n);
    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < p; ++j) d.x(i, j) = rows[i][j];
        double av = rows[i][p];
        if (av != 1.0 && av != -1.0)
            throw DataError("row " + std::to_string(i + 2) + ": action must be -1 or 1, got " +
                            std::to_string(av));
        d.a[i] = static_cast<int>(av);
        d.z[i] = rows[i][p + 1];
        d.propensity[i] = rows[i][p + 2];
    }
    require_valid(d);
    return d;
}

void write_dataset_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open output file: " + path);
    for (std::size_t j = 0; j < d.p; ++j) out << "x" << (j + 1) << ",";
    out << "a,z,prop\n";
    char buf[64];
    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < d.p; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", d.x(i, j));
            out << buf << ",";
        }
        out << d.a[i] << ",";
        std::snprintf(buf, sizeof buf, "%.17g", d.z[i]);
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", d.propensity[i]);
        out << buf << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace idrcde
