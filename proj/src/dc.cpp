#include "idrcde/dc.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace idrcde {

bool Polyhedron::contains(const Vector& x, double eps) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (x[i] < lo[i] - eps || x[i] > hi[i] + eps) return false;
    for (std::size_t r = 0; r < rows_ge.size(); ++r)
        if (rows_ge[r].dot(x) < rows_rhs[r] - eps) return false;
    return true;
}

bool ReverseConvexDCProgram::feasible(const Vector& x, double eps) const {
    if (!domain.contains(x, eps)) return false;
    for (const auto& c : constraints)
        if (!c.satisfied(x, eps)) return false;
    return true;
}

double SolverTrace::max_descent_slack() const {
    double m = 0.0;
    for (const auto& s : steps) m = std::max(m, s.descent_slack);
    return m;
}

double SolverTrace::max_feas_violation() const {
    double m = 0.0;
    for (const auto& s : steps) m = std::max(m, s.feas_violation);
    return m;
}

std::string SolverTrace::to_json() const {
    nlohmann::json j;
    j["prox_c"] = prox_c;
    j["iterations"] = iterations();
    j["hit_iteration_limit"] = hit_iteration_limit;
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t k = 0; k < steps.size(); ++k) {
        nlohmann::json s;
        s["iteration"] = k + 1;
        s["objective"] = steps[k].objective;
        s["step_norm"] = steps[k].step_norm2;
        s["step_norm_inf"] = steps[k].step_norm_inf;
        s["tuple"] = steps[k].chosen;
        s["qp_iterations"] = steps[k].qp_iterations;
        arr.push_back(std::move(s));
    }
    j["steps"] = std::move(arr);
    return j.dump(2);
}

std::vector<int> argmax_indices(const MaxAffineConstraint& c, const Vector& x, double eps_tie) {
    if (eps_tie < 0.0) throw ConfigError("argmax_indices: eps_tie must be nonnegative");
    double best = -kInf;
    for (const auto& t : c.terms) best = std::max(best, t.value(x));
    std::vector<int> out;
    for (std::size_t j = 0; j < c.terms.size(); ++j)
        if (c.terms[j].value(x) >= best - eps_tie) out.push_back(static_cast<int>(j));
    return out;
}

std::vector<int> active_set(const ReverseConvexDCProgram& prog, const Vector& x, double eps_feas) {
    std::vector<int> out;
    for (std::size_t i = 0; i < prog.constraints.size(); ++i) {
        double v = prog.constraints[i].value(x);
        if (v < -eps_feas)
            throw SolverError("active_set: point infeasible at constraint " + std::to_string(i) +
                              " (value " + std::to_string(v) + ")");
        if (v <= eps_feas) out.push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

std::vector<AffineTerm> chosen_rows(const ReverseConvexDCProgram& prog, const Vector& x,
                                    double eps_tie, const std::vector<int>* prefer,
                                    std::vector<int>* chosen_out) {
    std::vector<AffineTerm> rows;
    rows.reserve(prog.constraints.size());
    for (std::size_t i = 0; i < prog.constraints.size(); ++i) {
        const auto& c = prog.constraints[i];
        auto ids = argmax_indices(c, x, eps_tie);
        int j = ids.front();  // deterministic lowest tied index
        if (prefer && i < prefer->size()) {
            for (int cand : ids)
                if (cand == (*prefer)[i]) {
                    j = cand;
                    break;
                }
        }
        if (chosen_out) chosen_out->push_back(j);
        rows.push_back(c.terms[j]);
    }
    return rows;
}

double worst_violation(const ReverseConvexDCProgram& prog, const Vector& x) {
    double v = 0.0;
    for (const auto& c : prog.constraints) v = std::max(v, -c.value(x));
    for (std::size_t i = 0; i < prog.domain.lo.size(); ++i) {
        v = std::max(v, prog.domain.lo[i] - x[i]);
        v = std::max(v, x[i] - prog.domain.hi[i]);
    }
    for (std::size_t r = 0; r < prog.domain.rows_ge.size(); ++r)
        v = std::max(v, prog.domain.rows_rhs[r] - prog.domain.rows_ge[r].dot(x));
    return v;
}

}  // namespace

StepOutcome dc_step(const ReverseConvexDCProgram& prog, const Vector& x, double c,
                    double eps_tie, const std::vector<int>* prefer) {
    if (!(c > 0.0)) throw ConfigError("dc_step: proximal weight must be positive");
    StepOutcome out;
    auto rows = chosen_rows(prog, x, eps_tie, prefer, &out.info.chosen);
    SubproblemOutcome sp = prog.subproblem(x, c, rows);
    out.x_next = std::move(sp.x);
    Vector step = sub(out.x_next, x);
    out.info.objective = prog.h(out.x_next);
    out.info.step_norm2 = norm2(step);
    out.info.step_norm_inf = norm_inf(step);
    out.info.descent_slack =
        out.info.objective + 0.5 * c * dot(step, step) - prog.h(x);
    out.info.feas_violation = worst_violation(prog, out.x_next);
    out.info.qp_iterations = sp.qp_iterations;
    out.info.split_product = sp.split_product;
    return out;
}

double default_prox_weight(const ReverseConvexDCProgram& prog, const Vector& x0) {
    return 1e-4 * (1.0 + norm_inf(prog.grad_g(x0)));
}

DCResult solve(const ReverseConvexDCProgram& prog, const Vector& x0, const DCOptions& opts) {
    if (static_cast<int>(x0.size()) != prog.dim)
        throw ConfigError("solve: initial point dimension mismatch");
    if (!prog.feasible(x0, opts.eps_feas))
        throw SolverError("solve: infeasible initial point");
    double c = opts.prox_c > 0.0 ? opts.prox_c : default_prox_weight(prog, x0);

    DCResult res;
    res.trace.prox_c = c;
    res.trace.iterates.push_back(x0);
    Vector x = x0;
    std::vector<int> prev_tuple;
    std::vector<double> h_hist = {prog.h(x0)};
    for (int it = 0; it < opts.max_iterations; ++it) {
        StepOutcome step = dc_step(prog, x, c, opts.eps_tie,
                                   prev_tuple.empty() ? nullptr : &prev_tuple);
        prev_tuple = step.info.chosen;
        if (step.info.feas_violation > 1e2 * opts.eps_feas)
            throw SolverError("solve: iterate left the feasible set (violation " +
                              std::to_string(step.info.feas_violation) + ")");
        if (step.info.descent_slack > 1e-6)
            throw SolverError("solve: descent inequality violated (slack " +
                              std::to_string(step.info.descent_slack) + ")");
        x = step.x_next;
        res.trace.iterates.push_back(x);
        res.trace.steps.push_back(step.info);
        h_hist.push_back(step.info.objective);
        if (step.info.step_norm_inf <= opts.eps_step) {
            res.x = x;
            return res;
        }
        if (opts.eps_obj > 0.0 && static_cast<int>(h_hist.size()) > opts.obj_window) {
            double before = h_hist[h_hist.size() - 1 - opts.obj_window];
            double now = h_hist.back();
            if (before - now <= opts.eps_obj * (1.0 + std::abs(now))) {
                res.x = x;
                return res;
            }
        }
    }
    res.trace.hit_iteration_limit = true;
    res.x = x;
    return res;
}

StationarityCertificate check_a_stationarity(const ReverseConvexDCProgram& prog,
                                             const Vector& xbar, double tol, int tuple_cap) {
    if (!prog.feasible(xbar, 1e-6))
        throw SolverError("check_a_stationarity: infeasible point");
    const double c_tiny = 1e-10;
    const std::size_t m = prog.constraints.size();
    std::vector<std::vector<int>> cand(m);
    double tuple_count = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        cand[i] = argmax_indices(prog.constraints[i], xbar, 1e-9);
        tuple_count *= static_cast<double>(cand[i].size());
    }
    bool capped = tuple_count > static_cast<double>(tuple_cap);

    const double target = prog.f(xbar) - prog.g(xbar) - tol;
    Vector grad = prog.grad_g(xbar);

    StationarityCertificate cert;
    std::vector<std::size_t> odo(m, 0);
    while (true) {
        std::vector<AffineTerm> rows;
        rows.reserve(m);
        for (std::size_t i = 0; i < m; ++i) rows.push_back(prog.constraints[i].terms[cand[i][odo[i]]]);
        SubproblemOutcome sp = prog.subproblem(xbar, c_tiny, rows);
        ++cert.tuples_checked;
        // evaluate the linearized objective (prox excluded) at the minimizer
        Vector d = sub(sp.x, xbar);
        double lin_obj = prog.f(sp.x) - prog.g(xbar) - dot(grad, d);
        if (lin_obj >= target) {
            cert.certified = true;
            return cert;
        }
        if (capped && cert.tuples_checked >= 1) {
            cert.partial = true;
            return cert;
        }
        if (cert.tuples_checked >= tuple_cap) {
            cert.partial = true;
            return cert;
        }
        // odometer advance
        std::size_t pos = m;
        while (pos > 0) {
            --pos;
            if (odo[pos] + 1 < cand[pos].size()) {
                ++odo[pos];
                std::fill(odo.begin() + pos + 1, odo.end(), 0);
                break;
            }
            if (pos == 0) return cert;
        }
        if (m == 0) return cert;
    }
}

}  // namespace idrcde
