#include "idrcde/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace idrcde {

ConvexQP ConvexQP::make(int n) {
    ConvexQP qp;
    qp.n = n;
    qp.Q = Matrix(n, n);
    qp.q.assign(n, 0.0);
    qp.lo.assign(n, -kInf);
    qp.hi.assign(n, kInf);
    return qp;
}

double ConvexQP::objective(const Vector& x) const {
    double v = obj_const + dot(q, x);
    for (int i = 0; i < n; ++i) {
        const double* qr = Q.row_ptr(i);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += qr[j] * x[j];
        v += 0.5 * x[i] * s;
    }
    return v;
}

void dump_qp_triplets(const ConvexQP& qp, std::ostream& os) {
    char buf[96];
    os << "qp " << qp.n << " " << qp.ineq.size() << " " << qp.eq.size() << "\n";
    std::snprintf(buf, sizeof buf, "const %.17g\n", qp.obj_const);
    os << buf;
    for (int i = 0; i < qp.n; ++i)
        for (int j = 0; j <= i; ++j)
            if (qp.Q(i, j) != 0.0) {
                std::snprintf(buf, sizeof buf, "Q %d %d %.17g\n", i, j, qp.Q(i, j));
                os << buf;
            }
    for (int i = 0; i < qp.n; ++i)
        if (qp.q[i] != 0.0) {
            std::snprintf(buf, sizeof buf, "q %d %.17g\n", i, qp.q[i]);
            os << buf;
        }
    for (std::size_t r = 0; r < qp.ineq.size(); ++r) {
        for (std::size_t k = 0; k < qp.ineq[r].idx.size(); ++k) {
            std::snprintf(buf, sizeof buf, "G %zu %d %.17g\n", r, qp.ineq[r].idx[k],
                          qp.ineq[r].val[k]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "h %zu %.17g\n", r, qp.ineq_rhs[r]);
        os << buf;
    }
    for (std::size_t r = 0; r < qp.eq.size(); ++r) {
        for (std::size_t k = 0; k < qp.eq[r].idx.size(); ++k) {
            std::snprintf(buf, sizeof buf, "A %zu %d %.17g\n", r, qp.eq[r].idx[k], qp.eq[r].val[k]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "b %zu %.17g\n", r, qp.eq_rhs[r]);
        os << buf;
    }
    for (int i = 0; i < qp.n; ++i) {
        if (std::isfinite(qp.lo[i])) {
            std::snprintf(buf, sizeof buf, "lo %d %.17g\n", i, qp.lo[i]);
            os << buf;
        }
        if (std::isfinite(qp.hi[i])) {
            std::snprintf(buf, sizeof buf, "hi %d %.17g\n", i, qp.hi[i]);
            os << buf;
        }
    }
}

// ===========================================================================
// Internal machinery
// ===========================================================================

namespace {

// ---- small dense Cholesky helpers (in-place lower factor) -----------------

bool cholesky_in_place(Matrix& a) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double* aj = a.row_ptr(j);
        double d = aj[j];
        for (std::size_t k = 0; k < j; ++k) d -= aj[k] * aj[k];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        d = std::sqrt(d);
        aj[j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double* ai = a.row_ptr(i);
            double s = ai[j];
            for (std::size_t k = 0; k < j; ++k) s -= ai[k] * aj[k];
            ai[j] = s / d;
        }
    }
    return true;
}

void chol_forward(const Matrix& l, double* x) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* li = l.row_ptr(i);
        double s = x[i];
        for (std::size_t k = 0; k < i; ++k) s -= li[k] * x[k];
        x[i] = s / li[i];
    }
}

void chol_backward(const Matrix& l, double* x) {
    const std::size_t n = l.rows();
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
}

// ---- two-level (block-arrow) SPD factorization ----------------------------
//
// Variables are split into small connected components plus a separator of
// high-degree variables; components couple only to the separator, so the
// factorization reduces to tiny per-component Cholesky blocks and one dense
// Schur complement on the separator.

class StructuredSpd {
  public:
    void analyze(int n, const std::vector<std::vector<int>>& cliques, const Matrix& q_pattern) {
        n_ = n;
        std::vector<std::vector<int>> adj(n);
        auto add_edge = [&](int a, int b) {
            if (a != b) {
                adj[a].push_back(b);
                adj[b].push_back(a);
            }
        };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j)
                if (q_pattern(i, j) != 0.0) add_edge(i, j);
        for (const auto& c : cliques)
            for (std::size_t a = 0; a < c.size(); ++a)
                for (std::size_t b = a + 1; b < c.size(); ++b) add_edge(c[a], c[b]);
        for (auto& v : adj) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }

        std::vector<char> in_sep(n, 0);
        for (int v = 0; v < n; ++v)
            if (static_cast<int>(adj[v].size()) > kSepDegree) in_sep[v] = 1;

        // connected components among non-separator vertices; oversized
        // components promote their highest-degree member until small enough
        auto build_comp = [&](int start, std::vector<char>& seen) {
            std::vector<int> comp, stack{start};
            seen[start] = 1;
            while (!stack.empty()) {
                int v = stack.back();
                stack.pop_back();
                comp.push_back(v);
                for (int w : adj[v])
                    if (!in_sep[w] && !seen[w]) {
                        seen[w] = 1;
                        stack.push_back(w);
                    }
            }
            std::sort(comp.begin(), comp.end());
            return comp;
        };
        for (bool changed = true; changed;) {
            changed = false;
            std::vector<char> seen(n, 0);
            comps_.clear();
            for (int v = 0; v < n; ++v) {
                if (in_sep[v] || seen[v]) continue;
                auto comp = build_comp(v, seen);
                if (static_cast<int>(comp.size()) > kCompCap) {
                    int best = comp[0];
                    for (int w : comp)
                        if (adj[w].size() > adj[best].size()) best = w;
                    in_sep[best] = 1;
                    changed = true;
                    break;
                }
                comps_.push_back(std::move(comp));
            }
        }

        sep_.clear();
        for (int v = 0; v < n; ++v)
            if (in_sep[v]) sep_.push_back(v);
        sep_pos_.assign(n, -1);
        for (std::size_t k = 0; k < sep_.size(); ++k) sep_pos_[sep_[k]] = static_cast<int>(k);
        comp_of_.assign(n, -1);
        local_pos_.assign(n, -1);
        for (std::size_t c = 0; c < comps_.size(); ++c)
            for (std::size_t k = 0; k < comps_[c].size(); ++k) {
                comp_of_[comps_[c][k]] = static_cast<int>(c);
                local_pos_[comps_[c][k]] = static_cast<int>(k);
            }

        comp_cols_.assign(comps_.size(), {});
        for (std::size_t c = 0; c < comps_.size(); ++c) {
            std::vector<int> cols;
            for (int v : comps_[c])
                for (int w : adj[v])
                    if (sep_pos_[w] >= 0) cols.push_back(sep_pos_[w]);
            std::sort(cols.begin(), cols.end());
            cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
            comp_cols_[c] = std::move(cols);
        }
        dblock_.assign(comps_.size(), Matrix());
        wblock_.assign(comps_.size(), Matrix());
    }

    /// Factors the dense SPD matrix m (whose pattern must be covered by the
    /// analyzed pattern). Returns false when a pivot fails.
    bool factor(const Matrix& m) {
        const std::size_t ns = sep_.size();
        schur_ = Matrix(ns, ns);
        for (std::size_t a = 0; a < ns; ++a)
            for (std::size_t b = 0; b < ns; ++b) schur_(a, b) = m(sep_[a], sep_[b]);

        for (std::size_t c = 0; c < comps_.size(); ++c) {
            const auto& comp = comps_[c];
            const auto& cols = comp_cols_[c];
            const std::size_t bs = comp.size(), cs = cols.size();
            Matrix d(bs, bs), w(bs, cs);
            for (std::size_t a = 0; a < bs; ++a) {
                for (std::size_t b = 0; b < bs; ++b) d(a, b) = m(comp[a], comp[b]);
                for (std::size_t k = 0; k < cs; ++k) w(a, k) = m(comp[a], sep_[cols[k]]);
            }
            if (!cholesky_in_place(d)) return false;
            // w <- L^{-1} w, column by column through the rows
            for (std::size_t i = 0; i < bs; ++i) {
                for (std::size_t k = 0; k < cs; ++k) {
                    double s = w(i, k);
                    for (std::size_t t = 0; t < i; ++t) s -= d(i, t) * w(t, k);
                    w(i, k) = s / d(i, i);
                }
            }
            for (std::size_t a = 0; a < cs; ++a)
                for (std::size_t b = 0; b < cs; ++b) {
                    double s = 0.0;
                    for (std::size_t t = 0; t < bs; ++t) s += w(t, a) * w(t, b);
                    schur_(cols[a], cols[b]) -= s;
                }
            dblock_[c] = std::move(d);
            wblock_[c] = std::move(w);
        }
        return cholesky_in_place(schur_);
    }

    void solve(Vector& x) const {
        const std::size_t ns = sep_.size();
        Vector rs(ns);
        for (std::size_t k = 0; k < ns; ++k) rs[k] = x[sep_[k]];
        std::vector<Vector> u(comps_.size());
        for (std::size_t c = 0; c < comps_.size(); ++c) {
            const auto& comp = comps_[c];
            const auto& cols = comp_cols_[c];
            Vector uc(comp.size());
            for (std::size_t a = 0; a < comp.size(); ++a) uc[a] = x[comp[a]];
            chol_forward(dblock_[c], uc.data());
            for (std::size_t k = 0; k < cols.size(); ++k) {
                double s = 0.0;
                for (std::size_t t = 0; t < comp.size(); ++t) s += wblock_[c](t, k) * uc[t];
                rs[cols[k]] -= s;
            }
            u[c] = std::move(uc);
        }
        chol_forward(schur_, rs.data());
        chol_backward(schur_, rs.data());
        for (std::size_t c = 0; c < comps_.size(); ++c) {
            const auto& comp = comps_[c];
            const auto& cols = comp_cols_[c];
            Vector uc = std::move(u[c]);
            for (std::size_t t = 0; t < comp.size(); ++t) {
                double s = uc[t];
                for (std::size_t k = 0; k < cols.size(); ++k) s -= wblock_[c](t, k) * rs[cols[k]];
                uc[t] = s;
            }
            chol_backward(dblock_[c], uc.data());
            for (std::size_t a = 0; a < comp.size(); ++a) x[comp[a]] = uc[a];
        }
        for (std::size_t k = 0; k < ns; ++k) x[sep_[k]] = rs[k];
    }

  private:
    static constexpr int kSepDegree = 48;
    static constexpr int kCompCap = 16;

    int n_ = 0;
    std::vector<std::vector<int>> comps_;
    std::vector<int> sep_, sep_pos_, comp_of_, local_pos_;
    std::vector<std::vector<int>> comp_cols_;
    std::vector<Matrix> dblock_, wblock_;
    Matrix schur_;
};

// ---- reduced problem after equality presolve -------------------------------

struct WorkQP {
    int n = 0;
    Matrix Q;
    Vector q;
    double c0 = 0.0;
    std::vector<SpRow> G;
    Vector h;
    std::vector<SpRow> A;
    Vector b;
    Vector lo, hi;
};

struct BoundRowOrigin {
    int var = -1;     // eliminated variable whose bound produced this row
    bool upper = false;
};

struct Elimination {
    int var = -1;
    double alpha = 0.0;
    SpRow expr;  // x[var] = alpha + expr . x   (original numbering)
    int eq_row = -1;
    double pivot = 0.0;
};

struct Presolved {
    WorkQP red;                       // reduced problem (compacted numbering)
    std::vector<int> alive;           // reduced index -> original index
    std::vector<int> old_to_new;      // original -> reduced (-1 if eliminated)
    std::vector<Elimination> elims;   // in elimination order
    std::vector<std::pair<int, double>> fixed;   // variables pinned by lo == hi
    std::vector<int> g_origin;        // reduced G row -> original G row (-1 if synthesized)
    std::vector<BoundRowOrigin> g_bound_origin;  // parallel to red.G
    std::vector<int> eq_work;         // reduced eq row -> working eq index
    std::vector<int> a_orig;          // working eq index -> original eq row (-1 if merged)
    std::vector<std::pair<int, int>> a_pair;  // working eq index -> merged (<=, >=) G rows
    int n_eq_work = 0;
    bool contradiction = false;
    double contradiction_gap = 0.0;
};

Presolved presolve_equalities(const WorkQP& in) {
    Presolved out;
    const int n = in.n;
    Matrix Q = in.Q;
    Vector q = in.q;
    double c0 = in.c0;
    std::vector<SpRow> G = in.G;
    Vector h = in.h;
    Vector lo = in.lo, hi = in.hi;
    std::vector<int> g_origin(G.size());
    std::iota(g_origin.begin(), g_origin.end(), 0);
    std::vector<BoundRowOrigin> g_bound(G.size());

    std::vector<SpRow> A = in.A;
    Vector b = in.b;
    std::vector<char> row_alive(A.size(), 1), var_alive(n, 1);

    // pin variables whose bounds coincide; the interior-point method needs
    // strictly slack bounds
    for (int v = 0; v < n; ++v) {
        if (!(std::isfinite(lo[v]) && lo[v] == hi[v])) continue;
        double val = lo[v];
        var_alive[v] = 0;
        out.fixed.emplace_back(v, val);
        c0 += 0.5 * Q(v, v) * val * val + q[v] * val;
        for (int j = 0; j < n; ++j) {
            if (j != v && Q(j, v) != 0.0) q[j] += Q(j, v) * val;
            Q(v, j) = 0.0;
            Q(j, v) = 0.0;
        }
        q[v] = 0.0;
        for (std::size_t r = 0; r < G.size(); ++r) {
            SpRow nr;
            for (std::size_t k = 0; k < G[r].idx.size(); ++k) {
                if (G[r].idx[k] == v)
                    h[r] -= G[r].val[k] * val;
                else
                    nr.push(G[r].idx[k], G[r].val[k]);
            }
            G[r] = std::move(nr);
        }
        for (std::size_t r = 0; r < A.size(); ++r) {
            SpRow nr;
            for (std::size_t k = 0; k < A[r].idx.size(); ++k) {
                if (A[r].idx[k] == v)
                    b[r] -= A[r].val[k] * val;
                else
                    nr.push(A[r].idx[k], A[r].val[k]);
            }
            A[r] = std::move(nr);
        }
    }

    // exact opposing inequality pairs (g.x <= h and -g.x <= -h) leave the
    // feasible set without interior; rewrite each pair as one equality row
    std::vector<char> g_alive(G.size(), 1);
    std::vector<int> a_orig(A.size());
    std::iota(a_orig.begin(), a_orig.end(), 0);
    std::vector<std::pair<int, int>> a_pair(A.size(), {-1, -1});
    for (std::size_t r1 = 0; r1 < G.size(); ++r1) {
        if (!g_alive[r1] || G[r1].idx.empty()) continue;
        for (std::size_t r2 = r1 + 1; r2 < G.size(); ++r2) {
            if (!g_alive[r2] || G[r2].idx != G[r1].idx) continue;
            if (h[r2] != -h[r1]) continue;
            bool neg = true;
            for (std::size_t k = 0; k < G[r1].val.size() && neg; ++k)
                neg = G[r2].val[k] == -G[r1].val[k];
            if (!neg) continue;
            g_alive[r1] = 0;
            g_alive[r2] = 0;
            A.push_back(G[r1]);
            b.push_back(h[r1]);
            row_alive.push_back(1);
            a_orig.push_back(-1);
            a_pair.emplace_back(static_cast<int>(r1), static_cast<int>(r2));
            break;
        }
    }

    std::vector<int> eq_count(n, 0);
    for (const auto& row : A)
        for (int v : row.idx) ++eq_count[v];

    auto q_col_nnz = [&](int v) {
        int c = 0;
        for (int i = 0; i < n; ++i)
            if (var_alive[i] && Q(i, v) != 0.0) ++c;
        return c;
    };

    bool progress = true;
    while (progress) {
        progress = false;
        for (std::size_t r = 0; r < A.size(); ++r) {
            if (!row_alive[r]) continue;
            double maxabs = 0.0;
            for (std::size_t k = 0; k < A[r].idx.size(); ++k)
                if (var_alive[A[r].idx[k]]) maxabs = std::max(maxabs, std::abs(A[r].val[k]));
            if (maxabs == 0.0) {
                // empty row: contradiction when rhs is materially nonzero
                double rhs = b[r];
                row_alive[r] = 0;
                if (std::abs(rhs) > 1e-9 * (1.0 + std::abs(in.b[r]))) {
                    out.contradiction = true;
                    out.contradiction_gap = std::max(out.contradiction_gap, std::abs(rhs));
                }
                continue;
            }
            int pick = -1, pick_nnz = 0;
            double pick_coef = 0.0;
            for (std::size_t k = 0; k < A[r].idx.size(); ++k) {
                int v = A[r].idx[k];
                double cf = A[r].val[k];
                if (!var_alive[v] || eq_count[v] != 1) continue;
                if (std::abs(cf) < 1e-11 * maxabs) continue;
                int nnz = q_col_nnz(v);
                bool better = pick < 0 || nnz < pick_nnz ||
                              (nnz == pick_nnz && std::abs(cf) > std::abs(pick_coef)) ||
                              (nnz == pick_nnz && std::abs(cf) == std::abs(pick_coef) && v < pick);
                if (better) {
                    pick = v;
                    pick_nnz = nnz;
                    pick_coef = cf;
                }
            }
            if (pick < 0) continue;

            // x[pick] = alpha + expr . x
            Elimination el;
            el.var = pick;
            el.eq_row = static_cast<int>(r);
            el.pivot = pick_coef;
            el.alpha = b[r] / pick_coef;
            for (std::size_t k = 0; k < A[r].idx.size(); ++k) {
                int v = A[r].idx[k];
                if (v == pick || !var_alive[v] || A[r].val[k] == 0.0) continue;
                el.expr.push(v, -A[r].val[k] / pick_coef);
            }

            // objective substitution: terms with x_pick
            const double qkk = Q(pick, pick);
            SpRow qrow;  // Q[pick, j] over alive j != pick
            for (int j = 0; j < n; ++j)
                if (j != pick && var_alive[j] && Q(pick, j) != 0.0) qrow.push(j, Q(pick, j));
            // (1/2) qkk x_k^2 with x_k = alpha + e.x
            c0 += 0.5 * qkk * el.alpha * el.alpha;
            for (std::size_t a = 0; a < el.expr.idx.size(); ++a) {
                q[el.expr.idx[a]] += qkk * el.alpha * el.expr.val[a];
                for (std::size_t bb = 0; bb < el.expr.idx.size(); ++bb)
                    Q(el.expr.idx[a], el.expr.idx[bb]) += qkk * el.expr.val[a] * el.expr.val[bb];
            }
            // x_k * (qrow . x)
            c0 += 0.0;
            for (std::size_t a = 0; a < qrow.idx.size(); ++a) {
                q[qrow.idx[a]] += el.alpha * qrow.val[a];
                for (std::size_t bb = 0; bb < el.expr.idx.size(); ++bb) {
                    Q(qrow.idx[a], el.expr.idx[bb]) += qrow.val[a] * el.expr.val[bb];
                    Q(el.expr.idx[bb], qrow.idx[a]) += qrow.val[a] * el.expr.val[bb];
                }
            }
            // q_k x_k
            c0 += q[pick] * el.alpha;
            for (std::size_t a = 0; a < el.expr.idx.size(); ++a)
                q[el.expr.idx[a]] += q[pick] * el.expr.val[a];
            for (int j = 0; j < n; ++j) {
                Q(pick, j) = 0.0;
                Q(j, pick) = 0.0;
            }
            q[pick] = 0.0;

            // inequality rows containing x_pick
            for (std::size_t gr = 0; gr < G.size(); ++gr) {
                if (!g_alive[gr]) continue;
                double coef = 0.0;
                SpRow nr;
                bool has = false;
                for (std::size_t k = 0; k < G[gr].idx.size(); ++k) {
                    if (G[gr].idx[k] == pick) {
                        coef = G[gr].val[k];
                        has = true;
                    } else {
                        nr.push(G[gr].idx[k], G[gr].val[k]);
                    }
                }
                if (!has || coef == 0.0) continue;
                for (std::size_t a = 0; a < el.expr.idx.size(); ++a) {
                    bool merged = false;
                    for (std::size_t k = 0; k < nr.idx.size(); ++k)
                        if (nr.idx[k] == el.expr.idx[a]) {
                            nr.val[k] += coef * el.expr.val[a];
                            merged = true;
                            break;
                        }
                    if (!merged) nr.push(el.expr.idx[a], coef * el.expr.val[a]);
                }
                h[gr] -= coef * el.alpha;
                G[gr] = std::move(nr);
            }
            // bounds of x_pick become rows over expr
            if (std::isfinite(lo[pick])) {
                SpRow nr;  // -(alpha + e.x) <= -lo  i.e. -e.x <= alpha - lo
                for (std::size_t a = 0; a < el.expr.idx.size(); ++a)
                    nr.push(el.expr.idx[a], -el.expr.val[a]);
                G.push_back(std::move(nr));
                h.push_back(el.alpha - lo[pick]);
                g_origin.push_back(-1);
                g_bound.push_back({pick, false});
                g_alive.push_back(1);
            }
            if (std::isfinite(hi[pick])) {
                SpRow nr;
                for (std::size_t a = 0; a < el.expr.idx.size(); ++a)
                    nr.push(el.expr.idx[a], el.expr.val[a]);
                G.push_back(std::move(nr));
                h.push_back(hi[pick] - el.alpha);
                g_origin.push_back(-1);
                g_bound.push_back({pick, true});
                g_alive.push_back(1);
            }

            var_alive[pick] = 0;
            row_alive[r] = 0;
            for (int v : A[r].idx) --eq_count[v];
            out.elims.push_back(std::move(el));
            progress = true;
        }
    }

    // compact
    out.old_to_new.assign(n, -1);
    for (int v = 0; v < n; ++v)
        if (var_alive[v]) {
            out.old_to_new[v] = static_cast<int>(out.alive.size());
            out.alive.push_back(v);
        }
    const int nr = static_cast<int>(out.alive.size());
    out.red.n = nr;
    out.red.Q = Matrix(nr, nr);
    out.red.q.assign(nr, 0.0);
    out.red.c0 = c0;
    out.red.lo.assign(nr, 0.0);
    out.red.hi.assign(nr, 0.0);
    for (int a = 0; a < nr; ++a) {
        out.red.q[a] = q[out.alive[a]];
        out.red.lo[a] = lo[out.alive[a]];
        out.red.hi[a] = hi[out.alive[a]];
        for (int bb = 0; bb < nr; ++bb) out.red.Q(a, bb) = Q(out.alive[a], out.alive[bb]);
    }
    for (std::size_t r = 0; r < G.size(); ++r) {
        if (!g_alive[r]) continue;
        SpRow nr2;
        for (std::size_t k = 0; k < G[r].idx.size(); ++k) {
            int v = out.old_to_new[G[r].idx[k]];
            if (v >= 0 && G[r].val[k] != 0.0) nr2.push(v, G[r].val[k]);
        }
        out.red.G.push_back(std::move(nr2));
        out.red.h.push_back(h[r]);
        out.g_origin.push_back(g_origin[r]);
        out.g_bound_origin.push_back(g_bound[r]);
    }
    for (std::size_t r = 0; r < A.size(); ++r) {
        if (!row_alive[r]) continue;
        SpRow nr2;
        for (std::size_t k = 0; k < A[r].idx.size(); ++k) {
            int v = out.old_to_new[A[r].idx[k]];
            if (v >= 0 && A[r].val[k] != 0.0) nr2.push(v, A[r].val[k]);
        }
        out.red.A.push_back(std::move(nr2));
        out.red.b.push_back(b[r]);
        out.eq_work.push_back(static_cast<int>(r));
    }
    out.a_orig = std::move(a_orig);
    out.a_pair = std::move(a_pair);
    out.n_eq_work = static_cast<int>(A.size());
    return out;
}

// ---- Mehrotra predictor-corrector on the reduced problem ------------------

struct IpmPoint {
    Vector x, y;
    Vector s, z;      // inequality slacks/duals
    Vector sl, zl;    // lower-bound slacks/duals (finite lower bounds only)
    Vector su, zu;    // upper-bound slacks/duals
};

struct IpmOutcome {
    IpmPoint pt;
    bool converged = false;
    int iterations = 0;
};

class Ipm {
  public:
    Ipm(const WorkQP& p, const QPSolveOptions& opts) : p_(p), opts_(opts) {
        n_ = p.n;
        mg_ = static_cast<int>(p.G.size());
        ma_ = static_cast<int>(p.A.size());
        for (int i = 0; i < n_; ++i) {
            if (std::isfinite(p.lo[i])) lo_idx_.push_back(i);
            if (std::isfinite(p.hi[i])) hi_idx_.push_back(i);
        }
        nl_ = static_cast<int>(lo_idx_.size());
        nu_ = static_cast<int>(hi_idx_.size());
        std::vector<std::vector<int>> cliques;
        for (const auto& r : p.G) cliques.push_back(r.idx);
        spd_.analyze(n_, cliques, p.Q);
        reg_base_ = 0.0;
        for (int i = 0; i < n_; ++i) reg_base_ = std::max(reg_base_, std::abs(p.Q(i, i)));
        reg_base_ = 1e-12 * (1.0 + reg_base_);
    }

    IpmOutcome run() {
        IpmPoint w = initial_point();
        IpmOutcome out;
        double best_err = kInf;
        IpmPoint best = w;
        int stall = 0;
        for (int it = 0; it < opts_.max_iterations; ++it) {
            Residuals r = residuals(w);
            double mu = complementarity_mu(w);
            double comp = complementarity_max(w);
            double err = std::max({r.rd_scaled, r.rp_scaled, comp / mu_scale(w)});
            if (err < best_err * (1.0 - 1e-3)) {
                best_err = err;
                best = w;
                stall = 0;
            } else {
                if (err < best_err) {
                    best_err = err;
                    best = w;
                }
                if (++stall > 25) break;
            }
            out.iterations = it;
            if (r.rd_scaled <= 0.1 * opts_.tol && r.rp_scaled <= 0.1 * opts_.tol &&
                comp <= mu_stop(w)) {
                out.converged = true;
                out.pt = w;
                out.iterations = it;
                return out;
            }
            if (!step(w, r, mu)) break;
        }
        Residuals r = residuals(best);
        double comp = complementarity_max(best);
        out.converged = r.rd_scaled <= 0.1 * opts_.tol && r.rp_scaled <= 0.1 * opts_.tol &&
                        comp <= 10.0 * mu_stop(best);
        out.pt = best;
        return out;
    }

    double primal_infeasibility(const IpmPoint& w) const {
        double v = 0.0;
        for (int r = 0; r < mg_; ++r) v = std::max(v, p_.G[r].dot(w.x) - p_.h[r]);
        for (int r = 0; r < ma_; ++r) v = std::max(v, std::abs(p_.A[r].dot(w.x) - p_.b[r]));
        for (int k = 0; k < nl_; ++k) v = std::max(v, p_.lo[lo_idx_[k]] - w.x[lo_idx_[k]]);
        for (int k = 0; k < nu_; ++k) v = std::max(v, w.x[hi_idx_[k]] - p_.hi[hi_idx_[k]]);
        return v;
    }

  private:
    struct Residuals {
        Vector rd, rb, rg, rl, ru;
        double rd_scaled = 0.0, rp_scaled = 0.0;
    };

    Vector multiply_q(const Vector& x) const {
        Vector y(n_, 0.0);
        for (int i = 0; i < n_; ++i) {
            const double* qr = p_.Q.row_ptr(i);
            double s = 0.0;
            for (int j = 0; j < n_; ++j) s += qr[j] * x[j];
            y[i] = s;
        }
        return y;
    }

    double objective(const Vector& x) const {
        Vector qx = multiply_q(x);
        return 0.5 * dot(x, qx) + dot(p_.q, x) + p_.c0;
    }

    double mu_scale(const IpmPoint& w) const { return 1.0 + std::abs(objective(w.x)); }

    double mu_stop(const IpmPoint& w) const {
        double scale = 1.0 + 1e-3 * std::abs(objective(w.x));
        return std::max(1e-13, std::min(1e-10, 1e-3 * opts_.tol)) * scale;
    }

    double complementarity_mu(const IpmPoint& w) const {
        double acc = 0.0;
        int m = mg_ + nl_ + nu_;
        if (m == 0) return 0.0;
        for (int i = 0; i < mg_; ++i) acc += w.s[i] * w.z[i];
        for (int i = 0; i < nl_; ++i) acc += w.sl[i] * w.zl[i];
        for (int i = 0; i < nu_; ++i) acc += w.su[i] * w.zu[i];
        return acc / m;
    }

    double complementarity_max(const IpmPoint& w) const {
        double m = 0.0;
        for (int i = 0; i < mg_; ++i) m = std::max(m, w.s[i] * w.z[i]);
        for (int i = 0; i < nl_; ++i) m = std::max(m, w.sl[i] * w.zl[i]);
        for (int i = 0; i < nu_; ++i) m = std::max(m, w.su[i] * w.zu[i]);
        return m;
    }

    IpmPoint initial_point() const {
        IpmPoint w;
        w.x.assign(n_, 0.0);
        if (opts_.warm_start && static_cast<int>(opts_.warm_start->size()) == n_)
            w.x = *opts_.warm_start;
        for (int i = 0; i < n_; ++i) {
            double lo = p_.lo[i], hi = p_.hi[i];
            if (std::isfinite(lo) && std::isfinite(hi)) {
                double pad = 0.25 * (hi - lo);
                w.x[i] = std::min(std::max(w.x[i], lo + std::min(1.0, pad)),
                                  hi - std::min(1.0, pad));
                if (hi == lo) w.x[i] = lo;
            } else if (std::isfinite(lo)) {
                w.x[i] = std::max(w.x[i], lo + 1.0);
            } else if (std::isfinite(hi)) {
                w.x[i] = std::min(w.x[i], hi - 1.0);
            }
        }
        w.y.assign(ma_, 0.0);
        w.s.assign(mg_, 0.0);
        w.z.assign(mg_, 1.0);
        for (int r = 0; r < mg_; ++r) w.s[r] = std::max(p_.h[r] - p_.G[r].dot(w.x), 1.0);
        w.sl.assign(nl_, 0.0);
        w.zl.assign(nl_, 1.0);
        for (int k = 0; k < nl_; ++k) w.sl[k] = std::max(w.x[lo_idx_[k]] - p_.lo[lo_idx_[k]], 1.0);
        w.su.assign(nu_, 0.0);
        w.zu.assign(nu_, 1.0);
        for (int k = 0; k < nu_; ++k) w.su[k] = std::max(p_.hi[hi_idx_[k]] - w.x[hi_idx_[k]], 1.0);
        return w;
    }

    Residuals residuals(const IpmPoint& w) const {
        Residuals r;
        r.rd = multiply_q(w.x);
        double qx_inf = norm_inf(r.rd);
        for (int i = 0; i < n_; ++i) r.rd[i] += p_.q[i];
        for (int j = 0; j < ma_; ++j)
            for (std::size_t k = 0; k < p_.A[j].idx.size(); ++k)
                r.rd[p_.A[j].idx[k]] += p_.A[j].val[k] * w.y[j];
        for (int j = 0; j < mg_; ++j)
            for (std::size_t k = 0; k < p_.G[j].idx.size(); ++k)
                r.rd[p_.G[j].idx[k]] += p_.G[j].val[k] * w.z[j];
        for (int k = 0; k < nl_; ++k) r.rd[lo_idx_[k]] -= w.zl[k];
        for (int k = 0; k < nu_; ++k) r.rd[hi_idx_[k]] += w.zu[k];

        r.rb.resize(ma_);
        for (int j = 0; j < ma_; ++j) r.rb[j] = p_.A[j].dot(w.x) - p_.b[j];
        r.rg.resize(mg_);
        for (int j = 0; j < mg_; ++j) r.rg[j] = p_.G[j].dot(w.x) + w.s[j] - p_.h[j];
        r.rl.resize(nl_);
        for (int k = 0; k < nl_; ++k) r.rl[k] = w.sl[k] - w.x[lo_idx_[k]] + p_.lo[lo_idx_[k]];
        r.ru.resize(nu_);
        for (int k = 0; k < nu_; ++k) r.ru[k] = w.x[hi_idx_[k]] + w.su[k] - p_.hi[hi_idx_[k]];

        double rhs_scale = 1.0;
        for (double v : p_.h) rhs_scale = std::max(rhs_scale, std::abs(v));
        for (double v : p_.b) rhs_scale = std::max(rhs_scale, std::abs(v));
        for (int k = 0; k < nl_; ++k) rhs_scale = std::max(rhs_scale, std::abs(p_.lo[lo_idx_[k]]));
        for (int k = 0; k < nu_; ++k) rhs_scale = std::max(rhs_scale, std::abs(p_.hi[hi_idx_[k]]));
        double rp = std::max(std::max(norm_inf(r.rb), norm_inf(r.rg)),
                             std::max(norm_inf(r.rl), norm_inf(r.ru)));
        r.rp_scaled = rp / (1.0 + rhs_scale);
        r.rd_scaled = norm_inf(r.rd) / (1.0 + norm_inf(p_.q) + qx_inf);
        return r;
    }

    /// Solves [M A^T; A 0] (dx, dy) = (f, g) with M = Q + G^T D G + Dl + Du + reg.
    bool assemble_and_factor(const IpmPoint& w, double reg) {
        m_ = p_.Q;
        auto clamp_d = [](double d) { return std::min(d, 1e18); };
        for (int i = 0; i < n_; ++i) m_(i, i) += reg;
        for (int j = 0; j < mg_; ++j) {
            double d = clamp_d(w.z[j] / w.s[j]);
            const auto& row = p_.G[j];
            for (std::size_t a = 0; a < row.idx.size(); ++a)
                for (std::size_t b = 0; b < row.idx.size(); ++b)
                    m_(row.idx[a], row.idx[b]) += d * row.val[a] * row.val[b];
        }
        for (int k = 0; k < nl_; ++k)
            m_(lo_idx_[k], lo_idx_[k]) += clamp_d(w.zl[k] / w.sl[k]);
        for (int k = 0; k < nu_; ++k)
            m_(hi_idx_[k], hi_idx_[k]) += clamp_d(w.zu[k] / w.su[k]);
        if (!spd_.factor(m_)) return false;

        if (ma_ > 0) {
            // Schur complement over the equality rows
            eq_cols_.assign(ma_, Vector(n_, 0.0));
            Matrix se(ma_, ma_);
            for (int j = 0; j < ma_; ++j) {
                Vector col(n_, 0.0);
                for (std::size_t k = 0; k < p_.A[j].idx.size(); ++k)
                    col[p_.A[j].idx[k]] = p_.A[j].val[k];
                spd_.solve(col);
                eq_cols_[j] = std::move(col);
            }
            for (int a = 0; a < ma_; ++a)
                for (int b = 0; b < ma_; ++b) se(a, b) = p_.A[a].dot(eq_cols_[b]);
            for (int a = 0; a < ma_; ++a) se(a, a) += reg;
            eq_schur_ = std::move(se);
            if (!cholesky_in_place(eq_schur_)) return false;
        }
        return true;
    }

    void kkt_solve(const Vector& f, const Vector& g, Vector& dx, Vector& dy) const {
        dx = f;
        spd_.solve(dx);
        if (ma_ == 0) {
            dy.clear();
            return;
        }
        Vector rhs(ma_);
        for (int j = 0; j < ma_; ++j) rhs[j] = p_.A[j].dot(dx) - g[j];
        chol_forward(eq_schur_, rhs.data());
        chol_backward(eq_schur_, rhs.data());
        dy = rhs;
        Vector corr(n_, 0.0);
        for (int j = 0; j < ma_; ++j)
            for (std::size_t k = 0; k < p_.A[j].idx.size(); ++k)
                corr[p_.A[j].idx[k]] += p_.A[j].val[k] * dy[j];
        spd_.solve(corr);
        for (int i = 0; i < n_; ++i) dx[i] -= corr[i];
    }

    struct Direction {
        Vector dx, dy, ds, dz, dsl, dzl, dsu, dzu;
    };

    Direction solve_direction(const IpmPoint& w, const Residuals& r, const Vector& rcs,
                              const Vector& rcl, const Vector& rcu) const {
        Vector f(n_);
        for (int i = 0; i < n_; ++i) f[i] = -r.rd[i];
        for (int j = 0; j < mg_; ++j) {
            double t = (-rcs[j] + w.z[j] * r.rg[j]) / w.s[j];
            for (std::size_t k = 0; k < p_.G[j].idx.size(); ++k)
                f[p_.G[j].idx[k]] -= p_.G[j].val[k] * t;
        }
        for (int k = 0; k < nl_; ++k)
            f[lo_idx_[k]] += (-rcl[k] + w.zl[k] * r.rl[k]) / w.sl[k];
        for (int k = 0; k < nu_; ++k)
            f[hi_idx_[k]] -= (-rcu[k] + w.zu[k] * r.ru[k]) / w.su[k];
        Vector g(ma_);
        for (int j = 0; j < ma_; ++j) g[j] = -r.rb[j];

        Direction d;
        kkt_solve(f, g, d.dx, d.dy);
        d.ds.resize(mg_);
        d.dz.resize(mg_);
        for (int j = 0; j < mg_; ++j) {
            d.ds[j] = -r.rg[j] - p_.G[j].dot(d.dx);
            d.dz[j] = (-rcs[j] - w.z[j] * d.ds[j]) / w.s[j];
        }
        d.dsl.resize(nl_);
        d.dzl.resize(nl_);
        for (int k = 0; k < nl_; ++k) {
            d.dsl[k] = -r.rl[k] + d.dx[lo_idx_[k]];
            d.dzl[k] = (-rcl[k] - w.zl[k] * d.dsl[k]) / w.sl[k];
        }
        d.dsu.resize(nu_);
        d.dzu.resize(nu_);
        for (int k = 0; k < nu_; ++k) {
            d.dsu[k] = -r.ru[k] - d.dx[hi_idx_[k]];
            d.dzu[k] = (-rcu[k] - w.zu[k] * d.dsu[k]) / w.su[k];
        }
        return d;
    }

    static double max_step(const Vector& v, const Vector& dv) {
        double a = 1.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
        return a;
    }

    bool step(IpmPoint& w, const Residuals& r, double mu) {
        double reg = reg_base_;
        bool ok = false;
        for (int attempt = 0; attempt < 6 && !ok; ++attempt, reg *= 100.0)
            ok = assemble_and_factor(w, reg);
        if (!ok) return false;

        Vector rcs(mg_), rcl(nl_), rcu(nu_);
        for (int j = 0; j < mg_; ++j) rcs[j] = w.s[j] * w.z[j];
        for (int k = 0; k < nl_; ++k) rcl[k] = w.sl[k] * w.zl[k];
        for (int k = 0; k < nu_; ++k) rcu[k] = w.su[k] * w.zu[k];
        Direction aff = solve_direction(w, r, rcs, rcl, rcu);

        double ap = std::min({max_step(w.s, aff.ds), max_step(w.sl, aff.dsl),
                              max_step(w.su, aff.dsu)});
        double ad = std::min({max_step(w.z, aff.dz), max_step(w.zl, aff.dzl),
                              max_step(w.zu, aff.dzu)});
        double mu_aff = 0.0;
        int m = mg_ + nl_ + nu_;
        for (int j = 0; j < mg_; ++j)
            mu_aff += (w.s[j] + ap * aff.ds[j]) * (w.z[j] + ad * aff.dz[j]);
        for (int k = 0; k < nl_; ++k)
            mu_aff += (w.sl[k] + ap * aff.dsl[k]) * (w.zl[k] + ad * aff.dzl[k]);
        for (int k = 0; k < nu_; ++k)
            mu_aff += (w.su[k] + ap * aff.dsu[k]) * (w.zu[k] + ad * aff.dzu[k]);
        mu_aff = m > 0 ? mu_aff / m : 0.0;
        double sigma = mu > 0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
        sigma = std::min(std::max(sigma, 1e-8), 0.999);

        for (int j = 0; j < mg_; ++j) rcs[j] += aff.ds[j] * aff.dz[j] - sigma * mu;
        for (int k = 0; k < nl_; ++k) rcl[k] += aff.dsl[k] * aff.dzl[k] - sigma * mu;
        for (int k = 0; k < nu_; ++k) rcu[k] += aff.dsu[k] * aff.dzu[k] - sigma * mu;
        Direction d = solve_direction(w, r, rcs, rcl, rcu);

        bool tail = mu < 1e-6 && r.rd_scaled < 1e-6 && r.rp_scaled < 1e-6;
        double tau = tail ? 0.99995 : 0.995;
        if (!all_finite(d.dx)) return false;
        double sp = tau * std::min({max_step(w.s, d.ds), max_step(w.sl, d.dsl),
                                    max_step(w.su, d.dsu)});
        double sd = tau * std::min({max_step(w.z, d.dz), max_step(w.zl, d.dzl),
                                    max_step(w.zu, d.dzu)});
        sp = std::min(sp, 1.0);
        sd = std::min(sd, 1.0);
        if (sp < 1e-12 && sd < 1e-12) return false;

        for (int i = 0; i < n_; ++i) w.x[i] += sp * d.dx[i];
        for (int j = 0; j < ma_; ++j) w.y[j] += sd * d.dy[j];
        for (int j = 0; j < mg_; ++j) {
            w.s[j] = std::max(w.s[j] + sp * d.ds[j], 1e-300);
            w.z[j] = std::max(w.z[j] + sd * d.dz[j], 1e-300);
        }
        for (int k = 0; k < nl_; ++k) {
            w.sl[k] = std::max(w.sl[k] + sp * d.dsl[k], 1e-300);
            w.zl[k] = std::max(w.zl[k] + sd * d.dzl[k], 1e-300);
        }
        for (int k = 0; k < nu_; ++k) {
            w.su[k] = std::max(w.su[k] + sp * d.dsu[k], 1e-300);
            w.zu[k] = std::max(w.zu[k] + sd * d.dzu[k], 1e-300);
        }
        return true;
    }

  public:
    const std::vector<int>& lo_index() const { return lo_idx_; }
    const std::vector<int>& hi_index() const { return hi_idx_; }

  private:
    const WorkQP& p_;
    QPSolveOptions opts_;
    int n_ = 0, mg_ = 0, ma_ = 0, nl_ = 0, nu_ = 0;
    std::vector<int> lo_idx_, hi_idx_;
    StructuredSpd spd_;
    Matrix m_;
    Matrix eq_schur_;
    std::vector<Vector> eq_cols_;
    double reg_base_ = 1e-12;
};

WorkQP to_work(const ConvexQP& qp) {
    WorkQP w;
    w.n = qp.n;
    w.Q = qp.Q;
    w.q = qp.q;
    w.c0 = qp.obj_const;
    w.G = qp.ineq;
    w.h = qp.ineq_rhs;
    w.A = qp.eq;
    w.b = qp.eq_rhs;
    w.lo = qp.lo;
    w.hi = qp.hi;
    return w;
}

/// Phase-1 feasibility check: min sum(u) + sum(v+ + v-) over relaxed rows.
/// Returns the minimal total violation (within solver accuracy).
double phase1_violation(const WorkQP& p) {
    const int n = p.n;
    const int mg = static_cast<int>(p.G.size());
    const int ma = static_cast<int>(p.A.size());
    ConvexQP ph = ConvexQP::make(n + mg + 2 * ma);
    for (int i = 0; i < n; ++i) {
        ph.Q(i, i) = 1e-10;
        ph.lo[i] = p.lo[i];
        ph.hi[i] = p.hi[i];
    }
    for (int r = 0; r < mg; ++r) {
        int u = n + r;
        ph.q[u] = 1.0;
        ph.lo[u] = 0.0;
        ph.Q(u, u) = 1e-10;
        SpRow row = p.G[r];
        row.push(u, -1.0);
        ph.ineq.push_back(std::move(row));
        ph.ineq_rhs.push_back(p.h[r]);
    }
    for (int r = 0; r < ma; ++r) {
        int vp = n + mg + 2 * r, vm = vp + 1;
        ph.q[vp] = 1.0;
        ph.q[vm] = 1.0;
        ph.lo[vp] = 0.0;
        ph.lo[vm] = 0.0;
        ph.Q(vp, vp) = 1e-10;
        ph.Q(vm, vm) = 1e-10;
        SpRow row = p.A[r];
        row.push(vp, 1.0);
        row.push(vm, -1.0);
        ph.eq.push_back(std::move(row));
        ph.eq_rhs.push_back(p.b[r]);
    }
    WorkQP wp = to_work(ph);
    QPSolveOptions o;
    o.tol = 1e-7;
    o.max_iterations = 100;
    Ipm ipm(wp, o);
    auto res = ipm.run();
    double total = 0.0;
    for (int r = 0; r < mg; ++r) total += std::max(res.pt.x[n + r], 0.0);
    for (int r = 0; r < 2 * ma; ++r) total += std::max(res.pt.x[n + mg + r], 0.0);
    return total;
}

}  // namespace

KktResiduals verify_kkt(const ConvexQP& qp, const QPSolution& sol) {
    KktResiduals rr;
    const int n = qp.n;
    if (static_cast<int>(sol.x.size()) != n) return rr;
    if (!all_finite(sol.x) || !all_finite(sol.dual_ineq) || !all_finite(sol.dual_eq) ||
        !all_finite(sol.dual_lo) || !all_finite(sol.dual_hi))
        return rr;  // non-finite point: infinite residuals

    Vector qx(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = qp.Q.row_ptr(i);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += row[j] * sol.x[j];
        qx[i] = s;
    }
    Vector stat = qx;
    for (int i = 0; i < n; ++i) stat[i] += qp.q[i];
    for (std::size_t r = 0; r < qp.eq.size(); ++r)
        for (std::size_t k = 0; k < qp.eq[r].idx.size(); ++k)
            stat[qp.eq[r].idx[k]] += qp.eq[r].val[k] * sol.dual_eq[r];
    for (std::size_t r = 0; r < qp.ineq.size(); ++r)
        for (std::size_t k = 0; k < qp.ineq[r].idx.size(); ++k)
            stat[qp.ineq[r].idx[k]] += qp.ineq[r].val[k] * sol.dual_ineq[r];
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(qp.lo[i])) stat[i] -= sol.dual_lo[i];
        if (std::isfinite(qp.hi[i])) stat[i] += sol.dual_hi[i];
    }
    rr.stationarity = norm_inf(stat) / (1.0 + norm_inf(qp.q) + norm_inf(qx));

    double prim = 0.0, rhs_scale = 0.0;
    for (std::size_t r = 0; r < qp.eq.size(); ++r) {
        prim = std::max(prim, std::abs(qp.eq[r].dot(sol.x) - qp.eq_rhs[r]));
        rhs_scale = std::max(rhs_scale, std::abs(qp.eq_rhs[r]));
    }
    for (std::size_t r = 0; r < qp.ineq.size(); ++r) {
        prim = std::max(prim, qp.ineq[r].dot(sol.x) - qp.ineq_rhs[r]);
        rhs_scale = std::max(rhs_scale, std::abs(qp.ineq_rhs[r]));
    }
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(qp.lo[i])) {
            prim = std::max(prim, qp.lo[i] - sol.x[i]);
            rhs_scale = std::max(rhs_scale, std::abs(qp.lo[i]));
        }
        if (std::isfinite(qp.hi[i])) {
            prim = std::max(prim, sol.x[i] - qp.hi[i]);
            rhs_scale = std::max(rhs_scale, std::abs(qp.hi[i]));
        }
    }
    rr.primal = prim / (1.0 + rhs_scale);

    double comp = 0.0;
    for (std::size_t r = 0; r < qp.ineq.size(); ++r)
        comp = std::max(comp, std::abs(sol.dual_ineq[r] * (qp.ineq_rhs[r] - qp.ineq[r].dot(sol.x))));
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(qp.lo[i]))
            comp = std::max(comp, std::abs(sol.dual_lo[i] * (sol.x[i] - qp.lo[i])));
        if (std::isfinite(qp.hi[i]))
            comp = std::max(comp, std::abs(sol.dual_hi[i] * (qp.hi[i] - sol.x[i])));
    }
    rr.complementarity = comp / (1.0 + std::abs(qp.objective(sol.x)));
    return rr;
}

QPSolution solve_qp(const ConvexQP& qp, const QPSolveOptions& opts) {
    if (qp.n <= 0) throw ConfigError("solve_qp: empty problem");
    for (int i = 0; i < qp.n; ++i)
        if (std::isfinite(qp.lo[i]) && std::isfinite(qp.hi[i]) && qp.lo[i] > qp.hi[i])
            throw SolverError("solve_qp: infeasible (lo > hi at variable " + std::to_string(i) +
                              ")");

    WorkQP work = to_work(qp);
    Presolved pre = presolve_equalities(work);
    if (pre.contradiction)
        throw SolverError("solve_qp: infeasible equality system (gap " +
                          std::to_string(pre.contradiction_gap) + ")");

    QPSolveOptions ropts = opts;
    Vector warm_red;
    if (opts.warm_start && static_cast<int>(opts.warm_start->size()) == qp.n) {
        warm_red.resize(pre.red.n);
        for (int a = 0; a < pre.red.n; ++a) warm_red[a] = (*opts.warm_start)[pre.alive[a]];
        ropts.warm_start = &warm_red;
    } else {
        ropts.warm_start = nullptr;
    }

    Ipm ipm(pre.red, ropts);
    IpmOutcome res = ipm.run();

    if (!res.converged) {
        double infeas = ipm.primal_infeasibility(res.pt);
        double rhs_scale = 1.0;
        for (double v : pre.red.h) rhs_scale = std::max(rhs_scale, std::abs(v));
        if (infeas > 1e-7 * rhs_scale) {
            double certificate = phase1_violation(pre.red);
            if (certificate > 1e-6 * rhs_scale) {
                QPSolution bad;
                bad.status = QPStatus::infeasible;
                bad.infeasibility = certificate;
                throw SolverError("solve_qp: infeasible (phase-1 violation " +
                                  std::to_string(certificate) + ")");
            }
        }
    }

    // postsolve: primal
    QPSolution sol;
    sol.x.assign(qp.n, 0.0);
    for (int a = 0; a < pre.red.n; ++a) sol.x[pre.alive[a]] = res.pt.x[a];
    for (const auto& [var, val] : pre.fixed) sol.x[var] = val;
    for (auto it = pre.elims.rbegin(); it != pre.elims.rend(); ++it)
        sol.x[it->var] = it->alpha + it->expr.dot(sol.x);

    // postsolve: duals
    sol.dual_ineq.assign(qp.ineq.size(), 0.0);
    sol.dual_eq.assign(qp.eq.size(), 0.0);
    sol.dual_lo.assign(qp.n, 0.0);
    sol.dual_hi.assign(qp.n, 0.0);
    for (std::size_t r = 0; r < pre.red.G.size(); ++r) {
        double zr = res.pt.z[r];
        if (pre.g_origin[r] >= 0) {
            sol.dual_ineq[pre.g_origin[r]] = zr;
        } else {
            const auto& bo = pre.g_bound_origin[r];
            if (bo.upper)
                sol.dual_hi[bo.var] = zr;
            else
                sol.dual_lo[bo.var] = zr;
        }
    }
    {
        const auto& lo_idx = ipm.lo_index();
        const auto& hi_idx = ipm.hi_index();
        for (std::size_t k = 0; k < lo_idx.size(); ++k)
            sol.dual_lo[pre.alive[lo_idx[k]]] = res.pt.zl[k];
        for (std::size_t k = 0; k < hi_idx.size(); ++k)
            sol.dual_hi[pre.alive[hi_idx[k]]] = res.pt.zu[k];
    }
    // distribute the surviving equality multipliers, then recover the
    // eliminated ones in elimination order from the stationarity of their
    // pivot variables. A pivot can only appear in rows whose multipliers are
    // already distributed (its row count was one when it was eliminated), so
    // one forward pass suffices. Merged opposing pairs split the sign parts.
    auto distribute = [&](int work_row, double y) {
        if (pre.a_orig[work_row] >= 0) {
            sol.dual_eq[pre.a_orig[work_row]] = y;
        } else {
            auto [le, ge] = pre.a_pair[work_row];
            sol.dual_ineq[le] = std::max(y, 0.0);
            sol.dual_ineq[ge] = std::max(-y, 0.0);
        }
    };
    for (std::size_t r = 0; r < pre.red.A.size(); ++r)
        distribute(pre.eq_work[r], res.pt.y[r]);
    for (const auto& el : pre.elims) {
        double grad = qp.q[el.var];
        for (int j = 0; j < qp.n; ++j) grad += qp.Q(el.var, j) * sol.x[j];
        for (std::size_t r = 0; r < qp.ineq.size(); ++r)
            for (std::size_t k = 0; k < qp.ineq[r].idx.size(); ++k)
                if (qp.ineq[r].idx[k] == el.var) grad += qp.ineq[r].val[k] * sol.dual_ineq[r];
        for (std::size_t r = 0; r < qp.eq.size(); ++r)
            for (std::size_t k = 0; k < qp.eq[r].idx.size(); ++k)
                if (qp.eq[r].idx[k] == el.var) grad += qp.eq[r].val[k] * sol.dual_eq[r];
        grad -= sol.dual_lo[el.var];
        grad += sol.dual_hi[el.var];
        distribute(el.eq_row, -grad / el.pivot);
    }
    // pinned variables absorb their stationarity residual into bound duals
    for (const auto& [var, val] : pre.fixed) {
        double grad = qp.q[var];
        for (int j = 0; j < qp.n; ++j) grad += qp.Q(var, j) * sol.x[j];
        for (std::size_t r = 0; r < qp.ineq.size(); ++r)
            for (std::size_t k = 0; k < qp.ineq[r].idx.size(); ++k)
                if (qp.ineq[r].idx[k] == var) grad += qp.ineq[r].val[k] * sol.dual_ineq[r];
        for (std::size_t r = 0; r < qp.eq.size(); ++r)
            for (std::size_t k = 0; k < qp.eq[r].idx.size(); ++k)
                if (qp.eq[r].idx[k] == var) grad += qp.eq[r].val[k] * sol.dual_eq[r];
        sol.dual_lo[var] = std::max(grad, 0.0);
        sol.dual_hi[var] = std::max(-grad, 0.0);
    }

    sol.objective = qp.objective(sol.x);
    sol.iterations = res.iterations;
    sol.kkt = verify_kkt(qp, sol);
    sol.status = sol.kkt.max() <= opts.tol ? QPStatus::optimal : QPStatus::max_iterations;
    if (sol.status != QPStatus::optimal) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "solve_qp: no point meeting tolerance %.1e after %d iterations "
                      "(stationarity %.2e, primal %.2e, complementarity %.2e)",
                      opts.tol, sol.iterations, sol.kkt.stationarity, sol.kkt.primal,
                      sol.kkt.complementarity);
        throw SolverError(msg);
    }
    return sol;
}

QPSolution solve_qp(const ConvexQP& qp, double tol) {
    QPSolveOptions o;
    o.tol = tol;
    return solve_qp(qp, o);
}

// ===========================================================================
// Variable-split subproblem assembly
// ===========================================================================

double SubproblemIngredients::objective(const Vector& x) const {
    double v = constant + dot(lin, x);
    for (const auto& [k, w] : l1) v += w * std::abs(x[k]);
    for (const auto& hs : hinges) {
        double t = hs.t_offset + hs.t_coef.dot(x);
        double a = hs.coef_pos * std::max(t, 0.0) + hs.coef_neg * std::max(-t, 0.0);
        if (hs.sigma_index >= 0) a += x[hs.sigma_index];
        v += 0.5 * hs.weight * a * a;
    }
    for (int i = 0; i < n_z; ++i) {
        double d = x[i] - center[i];
        v += 0.5 * prox_c * d * d;
    }
    return v;
}

SplitQP split_variables(const SubproblemIngredients& ing) {
    const int nz = ing.n_z;
    const int nh = static_cast<int>(ing.hinges.size());
    const int nl = static_cast<int>(ing.l1.size());
    SplitQP s;
    s.n_z = nz;
    const int n = nz + 2 * nh + 2 * nl;
    s.qp = ConvexQP::make(n);
    ConvexQP& qp = s.qp;

    for (int i = 0; i < nz; ++i) {
        qp.lo[i] = ing.lo.empty() ? -kInf : ing.lo[i];
        qp.hi[i] = ing.hi.empty() ? kInf : ing.hi[i];
        qp.q[i] = ing.lin[i];
        qp.Q(i, i) += ing.prox_c;
        qp.q[i] -= ing.prox_c * ing.center[i];
    }
    qp.obj_const = ing.constant;
    for (int i = 0; i < nz; ++i)
        qp.obj_const += 0.5 * ing.prox_c * ing.center[i] * ing.center[i];

    s.t_plus.resize(nh);
    s.t_minus.resize(nh);
    for (int hidx = 0; hidx < nh; ++hidx) {
        const auto& hs = ing.hinges[hidx];
        int tp = nz + 2 * hidx, tm = tp + 1;
        s.t_plus[hidx] = tp;
        s.t_minus[hidx] = tm;
        qp.lo[tp] = 0.0;
        qp.lo[tm] = 0.0;
        qp.Q(tp, tp) += ing.split_ridge;
        qp.Q(tm, tm) += ing.split_ridge;
        // (weight/2) (cp t+ + cm t- + x_sigma)^2
        struct Entry {
            int var;
            double coef;
        };
        Entry ent[3] = {{tp, hs.coef_pos}, {tm, hs.coef_neg}, {hs.sigma_index, 1.0}};
        int ne = hs.sigma_index >= 0 ? 3 : 2;
        for (int a = 0; a < ne; ++a)
            for (int b = 0; b < ne; ++b)
                qp.Q(ent[a].var, ent[b].var) += hs.weight * ent[a].coef * ent[b].coef;
        // equality: t_coef . x - t+ + t- = -t_offset
        SpRow row = hs.t_coef;
        row.push(tp, -1.0);
        row.push(tm, 1.0);
        qp.eq.push_back(std::move(row));
        qp.eq_rhs.push_back(-hs.t_offset);
    }

    s.abs_plus.resize(nl);
    s.abs_minus.resize(nl);
    for (int k = 0; k < nl; ++k) {
        auto [var, w] = ing.l1[k];
        int ap = nz + 2 * nh + 2 * k, am = ap + 1;
        s.abs_plus[k] = ap;
        s.abs_minus[k] = am;
        qp.lo[ap] = 0.0;
        qp.lo[am] = 0.0;
        qp.q[ap] = w;
        qp.q[am] = w;
        qp.Q(ap, ap) += ing.split_ridge;
        qp.Q(am, am) += ing.split_ridge;
        SpRow row;
        row.push(var, 1.0);
        row.push(ap, -1.0);
        row.push(am, 1.0);
        qp.eq.push_back(std::move(row));
        qp.eq_rhs.push_back(0.0);
    }

    for (std::size_t r = 0; r < ing.rows_ge.size(); ++r) {
        const SpRow& row = ing.rows_ge[r];
        double rhs = ing.rows_ge_rhs[r];
        if (row.idx.empty()) {
            if (rhs > 0.0) throw SolverError("split_variables: constant row is infeasible");
            continue;
        }
        if (row.idx.size() == 1) {
            // single-variable rows tighten the box instead of duplicating it
            // as a general row, which would leave the interior empty
            int var = row.idx[0];
            double c = row.val[0];
            if (c > 0.0)
                qp.lo[var] = std::max(qp.lo[var], rhs / c);
            else
                qp.hi[var] = std::min(qp.hi[var], rhs / c);
            continue;
        }
        // row . x >= rhs  ->  -row . x <= -rhs
        SpRow neg;
        for (std::size_t k = 0; k < row.idx.size(); ++k) neg.push(row.idx[k], -row.val[k]);
        qp.ineq.push_back(std::move(neg));
        qp.ineq_rhs.push_back(-rhs);
    }
    return s;
}

SubproblemSolution solve_subproblem(const SubproblemIngredients& ing, const QPSolveOptions& opts) {
    SplitQP sq = split_variables(ing);

    QPSolveOptions o = opts;
    Vector warm;
    if (opts.warm_start && static_cast<int>(opts.warm_start->size()) == ing.n_z) {
        // extend the base-variable warm start with consistent splits
        warm.assign(sq.qp.n, 0.0);
        for (int i = 0; i < ing.n_z; ++i) warm[i] = (*opts.warm_start)[i];
        for (std::size_t hh = 0; hh < ing.hinges.size(); ++hh) {
            double t = ing.hinges[hh].t_offset + ing.hinges[hh].t_coef.dot(*opts.warm_start);
            warm[sq.t_plus[hh]] = std::max(t, 0.0);
            warm[sq.t_minus[hh]] = std::max(-t, 0.0);
        }
        for (std::size_t k = 0; k < ing.l1.size(); ++k) {
            double v = (*opts.warm_start)[ing.l1[k].first];
            warm[sq.abs_plus[k]] = std::max(v, 0.0);
            warm[sq.abs_minus[k]] = std::max(-v, 0.0);
        }
        o.warm_start = &warm;
    }

    SubproblemSolution out;
    out.qp = solve_qp(sq.qp, o);
    for (std::size_t hh = 0; hh < ing.hinges.size(); ++hh)
        out.max_split_product = std::max(
            out.max_split_product, out.qp.x[sq.t_plus[hh]] * out.qp.x[sq.t_minus[hh]]);
    for (std::size_t k = 0; k < ing.l1.size(); ++k)
        out.max_split_product = std::max(
            out.max_split_product, out.qp.x[sq.abs_plus[k]] * out.qp.x[sq.abs_minus[k]]);

    out.z.assign(out.qp.x.begin(), out.qp.x.begin() + ing.n_z);
    out.objective = ing.objective(out.z);
    return out;
}

}  // namespace idrcde
