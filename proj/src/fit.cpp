#include "idrcde/fit.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "json.hpp"

namespace idrcde {

namespace {

struct Surrogate {
    SurrogateKind kind;
    double a;  // mcp width parameter

    double rho(double weight, double x) const {
        if (kind == SurrogateKind::plain_l1 || weight <= 0.0) return 0.0;
        double thr = a * weight;
        if (std::abs(x) <= thr) return x * x / (2.0 * a);
        return weight * std::abs(x) - a * weight * weight / 2.0;
    }
    double drho(double weight, double x) const {
        if (kind == SurrogateKind::plain_l1 || weight <= 0.0) return 0.0;
        double thr = a * weight;
        if (std::abs(x) <= thr) return x / a;
        return x > 0.0 ? weight : -weight;
    }
    /// full penalty weight*|x| - rho(x)
    double penalty(double weight, double x) const { return weight * std::abs(x) - rho(weight, x); }
};

/// Shared problem data captured by the objective callbacks.
struct FitData {
    FitLayout lay;
    int bias = 1;
    double cp = 0.0, cm = 0.0;  // 1 - xi1, xi2 - 1
    Vector zvals;               // outcomes
    Vector hweight;             // 1 / (N pi_i)
    Vector cminus;              // Z-_i / (N pi_i)
    Vector cplus;               // Z+_j / (|Npos| pi_j), per sigma+ slot
    Matrix xhat;                // n x (p+1), covariates with trailing 1
    Vector l1_alloc, l1_rule;   // lambda * phi per coefficient
    Surrogate sur;

    double margin_t(const Vector& z, std::size_t i) const {
        double t = zvals[i];
        for (std::size_t j = 0; j <= lay.p; ++j) t -= xhat(i, j) * z[lay.w_index(j)];
        return t;
    }
    double hinge_a(double t) const { return cp * std::max(t, 0.0) + cm * std::max(-t, 0.0); }
};

std::shared_ptr<FitData> make_fit_data(const FitSpec& spec, int bias) {
    auto d = std::make_shared<FitData>();
    const Dataset& data = spec.data;
    d->bias = bias;
    d->cp = 1.0 - spec.utility.xi1;
    d->cm = spec.utility.xi2 - 1.0;
    d->lay.p = data.p;
    d->lay.n = data.n;
    for (std::size_t i = 0; i < data.n; ++i)
        if (data.z[i] > 0.0) d->lay.pos_index.push_back(i);
    d->lay.n_pos = d->lay.pos_index.size();

    d->zvals = data.z;
    d->hweight.resize(data.n);
    d->cminus.resize(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
        d->hweight[i] = 1.0 / (static_cast<double>(data.n) * data.propensity[i]);
        d->cminus[i] = std::max(-data.z[i], 0.0) * d->hweight[i];
    }
    d->cplus.resize(d->lay.n_pos);
    for (std::size_t k = 0; k < d->lay.n_pos; ++k) {
        std::size_t j = d->lay.pos_index[k];
        d->cplus[k] = data.z[j] / (static_cast<double>(d->lay.n_pos) * data.propensity[j]);
    }
    d->xhat = Matrix(data.n, data.p + 1);
    for (std::size_t i = 0; i < data.n; ++i) {
        for (std::size_t j = 0; j < data.p; ++j) d->xhat(i, j) = data.x(i, j);
        d->xhat(i, data.p) = 1.0;
    }
    d->l1_alloc.assign(data.p, 0.0);
    d->l1_rule.assign(data.p, 0.0);
    for (std::size_t j = 0; j < data.p; ++j) {
        double pa = spec.phi_alloc.empty() ? 1.0 : spec.phi_alloc[j];
        double pr = spec.phi_rule.empty() ? 1.0 : spec.phi_rule[j];
        d->l1_alloc[j] = spec.lambda_alloc * pa;
        d->l1_rule[j] = spec.lambda_rule * pr;
    }
    d->sur = Surrogate{spec.surrogate, spec.mcp_a};
    return d;
}

/// Margin s_i = A_i (beta^T X^i + bias) as an affine term over z.
AffineTerm margin_term(const FitData& d, const Dataset& data, std::size_t i) {
    AffineTerm t;
    double ai = static_cast<double>(data.a[i]);
    for (std::size_t j = 0; j < d.lay.p; ++j) {
        double c = ai * data.x(i, j);
        if (c != 0.0) t.push(d.lay.beta_index(j), c);
    }
    t.offset = ai * static_cast<double>(d.bias);
    return t;
}

double f_value(const FitData& d, const Vector& z) {
    double v = 0.0;
    for (std::size_t j = 0; j < d.lay.p; ++j) {
        v += d.l1_alloc[j] * std::abs(z[d.lay.w_index(j)]);
        v += d.l1_rule[j] * std::abs(z[d.lay.beta_index(j)]);
    }
    for (std::size_t i = 0; i < d.lay.n; ++i) {
        double sig = z[d.lay.sigma_minus_index(i)];
        double a = d.hinge_a(d.margin_t(z, i)) + sig;
        v += d.cminus[i] * sig + 0.5 * d.hweight[i] * a * a;
    }
    for (std::size_t k = 0; k < d.lay.n_pos; ++k) v -= d.cplus[k] * z[d.lay.sigma_plus_index(k)];
    return v;
}

double g_value(const FitData& d, const Vector& z) {
    double v = 0.0;
    for (std::size_t j = 0; j < d.lay.p; ++j) {
        v += d.sur.rho(d.l1_alloc[j], z[d.lay.w_index(j)]);
        v += d.sur.rho(d.l1_rule[j], z[d.lay.beta_index(j)]);
    }
    for (std::size_t i = 0; i < d.lay.n; ++i) {
        double sig = z[d.lay.sigma_minus_index(i)];
        double a = d.hinge_a(d.margin_t(z, i));
        v += 0.5 * d.hweight[i] * (sig * sig + a * a);
    }
    return v;
}

Vector g_gradient(const FitData& d, const Vector& z) {
    Vector g(d.lay.n_z(), 0.0);
    for (std::size_t j = 0; j < d.lay.p; ++j) {
        g[d.lay.w_index(j)] += d.sur.drho(d.l1_alloc[j], z[d.lay.w_index(j)]);
        g[d.lay.beta_index(j)] += d.sur.drho(d.l1_rule[j], z[d.lay.beta_index(j)]);
    }
    for (std::size_t i = 0; i < d.lay.n; ++i) {
        double t = d.margin_t(z, i);
        double a = d.hinge_a(t);
        double aprime = t > 0.0 ? d.cp : (t < 0.0 ? -d.cm : 0.0);
        double coef = d.hweight[i] * a * aprime;  // d/dt of (1/2) h a(t)^2
        if (coef != 0.0)
            for (std::size_t j = 0; j <= d.lay.p; ++j)
                g[d.lay.w_index(j)] -= coef * d.xhat(i, j);  // dt/dw = -xhat
        g[d.lay.sigma_minus_index(i)] = d.hweight[i] * z[d.lay.sigma_minus_index(i)];
    }
    return g;
}

SubproblemIngredients make_ingredients(const FitData& d, double split_ridge, const Polyhedron& dom,
                                       const Vector& zbar, double c,
                                       const std::vector<AffineTerm>& rows) {
    SubproblemIngredients ing;
    ing.n_z = d.lay.n_z();
    ing.center = zbar;
    ing.prox_c = c;
    ing.split_ridge = split_ridge;
    ing.lin.assign(ing.n_z, 0.0);
    for (std::size_t i = 0; i < d.lay.n; ++i) ing.lin[d.lay.sigma_minus_index(i)] = d.cminus[i];
    for (std::size_t k = 0; k < d.lay.n_pos; ++k)
        ing.lin[d.lay.sigma_plus_index(k)] = -d.cplus[k];
    Vector grad = g_gradient(d, zbar);
    ing.constant = -g_value(d, zbar) + dot(grad, zbar);
    for (int i = 0; i < ing.n_z; ++i) ing.lin[i] -= grad[i];

    for (std::size_t j = 0; j < d.lay.p; ++j) {
        if (d.l1_alloc[j] > 0.0) ing.l1.emplace_back(d.lay.w_index(j), d.l1_alloc[j]);
        if (d.l1_rule[j] > 0.0) ing.l1.emplace_back(d.lay.beta_index(j), d.l1_rule[j]);
    }
    for (std::size_t i = 0; i < d.lay.n; ++i) {
        HingeSquare hs;
        hs.weight = d.hweight[i];
        hs.coef_pos = d.cp;
        hs.coef_neg = d.cm;
        hs.t_offset = d.zvals[i];
        for (std::size_t j = 0; j <= d.lay.p; ++j)
            if (d.xhat(i, j) != 0.0) hs.t_coef.push(d.lay.w_index(j), -d.xhat(i, j));
        hs.sigma_index = d.lay.sigma_minus_index(i);
        ing.hinges.push_back(std::move(hs));
    }
    for (const auto& row : rows) {
        SpRow r;
        for (std::size_t k = 0; k < row.idx.size(); ++k) r.push(row.idx[k], row.coef[k]);
        ing.rows_ge.push_back(std::move(r));
        ing.rows_ge_rhs.push_back(-row.offset);
    }
    ing.lo = dom.lo;
    ing.hi = dom.hi;
    return ing;
}

}  // namespace

void FitSpec::validate() const {
    require_valid(data);
    if (utility.kind != UtilityKind::piecewise_linear)
        throw ConfigError("fit: utility must be piecewise_linear");
    utility.validate();
    if (lambda_alloc < 0.0 || lambda_rule < 0.0)
        throw ConfigError("fit: penalty weights must be nonnegative");
    auto check_phi = [&](const Vector& phi, const char* which) {
        if (phi.empty()) return;
        if (phi.size() != data.p) throw ConfigError(std::string("fit: ") + which + " size mismatch");
        for (double v : phi)
            if (!(v > 0.0)) throw ConfigError(std::string("fit: ") + which + " must be positive");
    };
    check_phi(phi_alloc, "phi_alloc");
    check_phi(phi_rule, "phi_rule");
    if (!(box_bound > 0.0)) throw ConfigError("fit: box bound must be positive");
    if (!(prox_c > 0.0)) throw ConfigError("fit: proximal weight must be positive");
    if (!beta_init.empty() && beta_init.size() != data.p)
        throw ConfigError("fit: beta_init size mismatch");
    if (!beta_init.empty() && !all_finite(beta_init))
        throw ConfigError("fit: beta_init must be finite");
}

BuiltProgram build_program(const FitSpec& spec, int bias) {
    spec.validate();
    if (bias != 1 && bias != -1) throw ConfigError("build_program: bias must be -1 or +1");
    auto d = make_fit_data(spec, bias);
    const Dataset& data = spec.data;

    BuiltProgram built;
    built.bias = bias;
    built.layout = d->lay;
    ReverseConvexDCProgram& prog = built.program;
    prog.dim = d->lay.n_z();

    prog.domain.lo.assign(prog.dim, -kInf);
    prog.domain.hi.assign(prog.dim, kInf);
    for (std::size_t j = 0; j <= d->lay.p; ++j) {
        prog.domain.lo[d->lay.w_index(j)] = -spec.box_bound;
        prog.domain.hi[d->lay.w_index(j)] = spec.box_bound;
    }
    for (std::size_t i = 0; i < d->lay.n; ++i) {
        prog.domain.lo[d->lay.sigma_minus_index(i)] = 0.0;
        prog.domain.hi[d->lay.sigma_minus_index(i)] = 1.0;
    }
    for (std::size_t k = 0; k < d->lay.n_pos; ++k) {
        prog.domain.lo[d->lay.sigma_plus_index(k)] = 0.0;
        prog.domain.hi[d->lay.sigma_plus_index(k)] = 1.0;
    }

    // one epigraph constraint per sample, one hypograph constraint per
    // positive outcome, expanded to reverse convex max-affine form
    for (std::size_t i = 0; i < data.n; ++i) {
        AffineTerm s = margin_term(*d, data, i);
        AffineTerm sigma;
        sigma.push(d->lay.sigma_minus_index(i), 1.0);
        AffineTerm minus_sigma;
        minus_sigma.push(d->lay.sigma_minus_index(i), -1.0);
        AffineTerm sum = s;  // sigma + s - 1
        sum.push(d->lay.sigma_minus_index(i), 1.0);
        sum.offset -= 1.0;
        DCConstraint epi;
        epi.plus_terms = {minus_sigma, s};
        epi.minus_terms = {sum, AffineTerm{}};
        for (auto& mc : expand_to_reverse_convex(epi)) prog.constraints.push_back(std::move(mc));
    }
    for (std::size_t k = 0; k < d->lay.n_pos; ++k) {
        std::size_t j = d->lay.pos_index[k];
        AffineTerm s = margin_term(*d, data, j);
        AffineTerm sigma;
        sigma.push(d->lay.sigma_plus_index(k), 1.0);
        AffineTerm minus_sigma;
        minus_sigma.push(d->lay.sigma_plus_index(k), -1.0);
        AffineTerm sum = s;
        sum.push(d->lay.sigma_plus_index(k), 1.0);
        sum.offset -= 1.0;
        DCConstraint hypo;
        hypo.plus_terms = {sum, AffineTerm{}};
        hypo.minus_terms = {minus_sigma, s};
        for (auto& mc : expand_to_reverse_convex(hypo)) prog.constraints.push_back(std::move(mc));
    }

    prog.f = [d](const Vector& z) { return f_value(*d, z); };
    prog.g = [d](const Vector& z) { return g_value(*d, z); };
    prog.grad_g = [d](const Vector& z) { return g_gradient(*d, z); };

    Polyhedron dom = prog.domain;
    double qp_tol = spec.qp_tol;
    prog.subproblem = [d, dom, qp_tol](const Vector& zbar, double c,
                                       const std::vector<AffineTerm>& rows) {
        SubproblemIngredients ing = make_ingredients(*d, 1e-12, dom, zbar, c, rows);
        QPSolveOptions opts;
        opts.tol = qp_tol;
        opts.warm_start = &zbar;
        SubproblemSolution sol = solve_subproblem(ing, opts);
        SubproblemOutcome out;
        out.x = std::move(sol.z);
        out.objective = sol.objective;
        out.qp_iterations = sol.qp.iterations;
        out.qp_kkt = sol.qp.kkt.max();
        out.split_product = sol.max_split_product;
        return out;
    };
    return built;
}

Vector initial_point(const FitSpec& spec, int bias, const Vector& beta_start) {
    spec.validate();
    auto d = make_fit_data(spec, bias);
    Vector beta = beta_start.empty() ? Vector(spec.data.p, 0.0) : beta_start;
    if (beta.size() != spec.data.p) throw ConfigError("initial_point: beta_start size mismatch");

    Vector z(d->lay.n_z(), 0.0);
    for (std::size_t j = 0; j < d->lay.p; ++j) z[d->lay.beta_index(j)] = beta[j];
    for (std::size_t i = 0; i < d->lay.n; ++i) {
        double margin = static_cast<double>(bias);
        for (std::size_t j = 0; j < d->lay.p; ++j) margin += beta[j] * spec.data.x(i, j);
        double s = static_cast<double>(spec.data.a[i]) * margin;
        z[d->lay.sigma_minus_index(i)] = s > 0.0 ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < d->lay.n_pos; ++k) {
        std::size_t i = d->lay.pos_index[k];
        double margin = static_cast<double>(bias);
        for (std::size_t j = 0; j < d->lay.p; ++j) margin += beta[j] * spec.data.x(i, j);
        double s = static_cast<double>(spec.data.a[i]) * margin;
        z[d->lay.sigma_plus_index(k)] = s >= 0.0 ? 1.0 : 0.0;
    }
    return z;
}

double objective_direct(const FitSpec& spec, const RuleParams& theta, const AllocParams& alloc) {
    spec.validate();
    auto d = make_fit_data(spec, theta.beta0);
    const Dataset& data = spec.data;
    Surrogate sur{spec.surrogate, spec.mcp_a};

    double v = 0.0;
    for (std::size_t j = 0; j < data.p; ++j) {
        v += sur.penalty(d->l1_alloc[j], alloc.b[j]);
        v += sur.penalty(d->l1_rule[j], theta.beta[j]);
    }
    for (std::size_t i = 0; i < data.n; ++i) {
        double margin = static_cast<double>(theta.beta0);
        for (std::size_t j = 0; j < data.p; ++j) margin += theta.beta[j] * data.x(i, j);
        double s = static_cast<double>(data.a[i]) * margin;
        double t = data.z[i] - alloc.b0;
        for (std::size_t j = 0; j < data.p; ++j) t -= alloc.b[j] * data.x(i, j);
        double bracket = t - utility_eval(spec.utility, t);  // equals hinge_a(t)
        if (s > 0.0) v += (d->cminus[i] + d->hweight[i] * bracket) * 1.0;
    }
    for (std::size_t k = 0; k < d->lay.n_pos; ++k) {
        std::size_t i = d->lay.pos_index[k];
        double margin = static_cast<double>(theta.beta0);
        for (std::size_t j = 0; j < data.p; ++j) margin += theta.beta[j] * data.x(i, j);
        double s = static_cast<double>(data.a[i]) * margin;
        if (s >= 0.0) v -= d->cplus[k];
    }
    return v;
}

RuleParams unpack_rule(const FitLayout& layout, int bias, const Vector& z) {
    RuleParams r;
    r.beta0 = bias;
    r.beta.resize(layout.p);
    for (std::size_t j = 0; j < layout.p; ++j) r.beta[j] = z[layout.beta_index(j)];
    return r;
}

AllocParams unpack_alloc(const FitLayout& layout, const Vector& z, double box_bound) {
    AllocParams w;
    w.box_bound = box_bound;
    w.b.resize(layout.p);
    for (std::size_t j = 0; j < layout.p; ++j) w.b[j] = z[layout.w_index(j)];
    w.b0 = z[layout.w_index(layout.p)];
    return w;
}

namespace {

BiasRun run_one_bias(const FitSpec& spec, int bias, StationarityCertificate* cert) {
    BuiltProgram built = build_program(spec, bias);
    // orient the seed with the bias sign so both runs start from a coherent
    // margin pattern (the -1 run explores the seed rule's complement)
    Vector beta_start = spec.beta_init;
    if (bias < 0)
        for (double& b : beta_start) b = -b;
    Vector z0 = initial_point(spec, bias, beta_start);
    DCOptions opts;
    opts.prox_c = spec.prox_c;
    opts.eps_step = spec.eps_step;
    opts.max_iterations = spec.max_iterations;
    opts.eps_feas = spec.eps_feas;
    opts.eps_obj = spec.eps_obj;
    opts.obj_window = spec.obj_window;
    DCResult res = solve(built.program, z0, opts);

    BiasRun run;
    run.bias = bias;
    run.final_phi = built.program.h(res.x);
    run.theta = unpack_rule(built.layout, bias, res.x);
    run.alloc = unpack_alloc(built.layout, res.x, spec.box_bound);
    run.final_direct = objective_direct(spec, run.theta, run.alloc);
    run.trace = std::move(res.trace);
    if (cert) {
        double tol = 1e-6 * (1.0 + std::abs(run.final_phi));
        *cert = check_a_stationarity(built.program, res.x, tol);
    }
    return run;
}

}  // namespace

FittedIDR fit(const FitSpec& spec) {
    spec.validate();
    BiasRun plus = run_one_bias(spec, 1, nullptr);
    BiasRun minus = run_one_bias(spec, -1, nullptr);

    FittedIDR out;
    bool keep_plus = plus.final_phi <= minus.final_phi;  // tie -> +1
    const BiasRun& win = keep_plus ? plus : minus;
    out.theta = win.theta;
    out.alloc = win.alloc;
    out.bias = win.bias;
    out.objective_phi = win.final_phi;
    out.objective_direct_value = win.final_direct;

    // certify the winner at its final iterate
    {
        BuiltProgram built = build_program(spec, win.bias);
        const Vector& final_z = win.trace.iterates.back();
        double tol = 1e-6 * (1.0 + std::abs(win.final_phi));
        StationarityCertificate cert = check_a_stationarity(built.program, final_z, tol);
        out.certificate = cert.certified;
        out.certificate_partial = cert.partial;
    }

    out.run_plus = std::move(plus);
    out.run_minus = std::move(minus);
    return out;
}

std::string FittedIDR::to_json() const {
    nlohmann::json j;
    j["bias"] = bias;
    j["beta"] = theta.beta;
    j["alloc_b"] = alloc.b;
    j["alloc_b0"] = alloc.b0;
    j["objective"] = objective_phi;
    j["objective_direct"] = objective_direct_value;
    j["certificate"] = certificate;
    j["certificate_partial"] = certificate_partial;
    auto run_json = [](const BiasRun& r) {
        nlohmann::json o;
        o["bias"] = r.bias;
        o["objective"] = r.final_phi;
        o["objective_direct"] = r.final_direct;
        o["iterations"] = r.trace.iterations();
        o["hit_iteration_limit"] = r.trace.hit_iteration_limit;
        return o;
    };
    j["runs"] = {run_json(run_plus), run_json(run_minus)};
    return j.dump(2);
}

}  // namespace idrcde
