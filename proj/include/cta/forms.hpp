#pragma once

#include "cta/linalg.hpp"
#include "cta/manifold.hpp"

namespace cta {

// Discrete forms on the staggered complex. 1-form components are edge
// averages (cochain value divided by edge length), 2-form components are
// face averages. With this convention exterior_d is a plain difference
// quotient and d(d p) vanishes up to rounding.

struct ScalarField0 {
    Grid2 grid;
    std::vector<cplx> v;

    static ScalarField0 zeros(const Grid2& g) { return {g, std::vector<cplx>(g.n_nodes(), 0.0)}; }
    cplx& at(int i, int j) { return v[grid.node(i, j)]; }
    cplx at(int i, int j) const { return v[grid.node(i, j)]; }
};

struct OneForm0 {
    Grid2 grid;
    std::vector<cplx> ex;  // x-edges
    std::vector<cplx> ey;  // y-edges

    static OneForm0 zeros(const Grid2& g) {
        return {g, std::vector<cplx>(g.n_xedges(), 0.0), std::vector<cplx>(g.n_yedges(), 0.0)};
    }
};

struct TwoForm0 {
    Grid2 grid;
    std::vector<cplx> c;  // cells

    static TwoForm0 zeros(const Grid2& g) { return {g, std::vector<cplx>(g.n_cells(), 0.0)}; }
};

struct ScalarField3 {
    Grid3 grid;
    std::vector<cplx> v;

    static ScalarField3 zeros(const Grid3& g) { return {g, std::vector<cplx>(g.n_nodes(), 0.0)}; }
};

struct OneForm3 {
    Grid3 grid;
    std::vector<cplx> a1;  // x1-edges
    std::vector<cplx> a2;  // chart x-edges
    std::vector<cplx> a3;  // chart y-edges

    static OneForm3 zeros(const Grid3& g) {
        return {g, std::vector<cplx>(g.n_e1(), 0.0), std::vector<cplx>(g.n_e2(), 0.0),
                std::vector<cplx>(g.n_e3(), 0.0)};
    }
};

struct TwoForm3 {
    Grid3 grid;
    std::vector<cplx> f12;
    std::vector<cplx> f13;
    std::vector<cplx> f23;

    static TwoForm3 zeros(const Grid3& g) {
        return {g, std::vector<cplx>(g.n_f12(), 0.0), std::vector<cplx>(g.n_f13(), 0.0),
                std::vector<cplx>(g.n_f23(), 0.0)};
    }
};

namespace detail {
inline void add_scaled(std::vector<cplx>& a, const std::vector<cplx>& b, cplx s) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}
inline void scale(std::vector<cplx>& a, cplx s) {
    for (auto& z : a) z *= s;
}
}  // namespace detail

inline OneForm0 operator+(OneForm0 a, const OneForm0& b) {
    detail::add_scaled(a.ex, b.ex, 1.0);
    detail::add_scaled(a.ey, b.ey, 1.0);
    return a;
}
inline OneForm0 operator*(cplx s, OneForm0 a) {
    detail::scale(a.ex, s);
    detail::scale(a.ey, s);
    return a;
}
inline OneForm3 operator+(OneForm3 a, const OneForm3& b) {
    detail::add_scaled(a.a1, b.a1, 1.0);
    detail::add_scaled(a.a2, b.a2, 1.0);
    detail::add_scaled(a.a3, b.a3, 1.0);
    return a;
}
inline OneForm3 operator*(cplx s, OneForm3 a) {
    detail::scale(a.a1, s);
    detail::scale(a.a2, s);
    detail::scale(a.a3, s);
    return a;
}
inline ScalarField0 operator+(ScalarField0 a, const ScalarField0& b) {
    detail::add_scaled(a.v, b.v, 1.0);
    return a;
}
inline ScalarField0 operator*(cplx s, ScalarField0 a) {
    detail::scale(a.v, s);
    return a;
}
inline ScalarField3 operator*(cplx s, ScalarField3 a) {
    detail::scale(a.v, s);
    return a;
}

// ---------------------------------------------------------------- exterior d

inline OneForm0 exterior_d(const ScalarField0& p) {
    const Grid2& g = p.grid;
    OneForm0 out = OneForm0::zeros(g);
    const double ih = 1.0 / g.h;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) out.ex[g.xedge(i, j)] = (p.at(i + 1, j) - p.at(i, j)) * ih;
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) out.ey[g.yedge(i, j)] = (p.at(i, j + 1) - p.at(i, j)) * ih;
    return out;
}

inline TwoForm0 exterior_d(const OneForm0& a) {
    const Grid2& g = a.grid;
    TwoForm0 out = TwoForm0::zeros(g);
    const double ih = 1.0 / g.h;
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            out.c[g.cell(i, j)] = (a.ey[g.yedge(i + 1, j)] - a.ey[g.yedge(i, j)]) * ih -
                                  (a.ex[g.xedge(i, j + 1)] - a.ex[g.xedge(i, j)]) * ih;
    return out;
}

inline OneForm3 exterior_d(const ScalarField3& p) {
    const Grid3& G = p.grid;
    const Grid2& g = G.chart;
    OneForm3 out = OneForm3::zeros(G);
    const double ih1 = 1.0 / G.h1(), ih = 1.0 / g.h;
    for (std::size_t k = 0; k < g.n_nodes(); ++k)
        for (int m = 0; m + 1 < G.n1; ++m) out.a1[G.e1(m, k)] = (p.v[G.node(m + 1, k)] - p.v[G.node(m, k)]) * ih1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m)
                out.a2[G.e2(m, g.xedge(i, j))] = (p.v[G.node(m, g.node(i + 1, j))] - p.v[G.node(m, g.node(i, j))]) * ih;
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m)
                out.a3[G.e3(m, g.yedge(i, j))] = (p.v[G.node(m, g.node(i, j + 1))] - p.v[G.node(m, g.node(i, j))]) * ih;
    return out;
}

inline TwoForm3 exterior_d(const OneForm3& A) {
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    TwoForm3 out = TwoForm3::zeros(G);
    const double ih1 = 1.0 / G.h1(), ih = 1.0 / g.h;
    // f12 = d1 a2 - d2 a1 on (x1-edge x chart x-edge) faces
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            const std::size_t kx = g.xedge(i, j);
            for (int m = 0; m + 1 < G.n1; ++m)
                out.f12[G.f12(m, kx)] = (A.a2[G.e2(m + 1, kx)] - A.a2[G.e2(m, kx)]) * ih1 -
                                        (A.a1[G.e1(m, g.node(i + 1, j))] - A.a1[G.e1(m, g.node(i, j))]) * ih;
        }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t ky = g.yedge(i, j);
            for (int m = 0; m + 1 < G.n1; ++m)
                out.f13[G.f13(m, ky)] = (A.a3[G.e3(m + 1, ky)] - A.a3[G.e3(m, ky)]) * ih1 -
                                        (A.a1[G.e1(m, g.node(i, j + 1))] - A.a1[G.e1(m, g.node(i, j))]) * ih;
        }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            const std::size_t kc = g.cell(i, j);
            for (int m = 0; m < G.n1; ++m)
                out.f23[G.f23(m, kc)] = (A.a3[G.e3(m, g.yedge(i + 1, j))] - A.a3[G.e3(m, g.yedge(i, j))]) * ih -
                                        (A.a2[G.e2(m, g.xedge(i, j + 1))] - A.a2[G.e2(m, g.xedge(i, j))]) * ih;
        }
    return out;
}

// ------------------------------------------------------------ metric weights

/// Quadrature weights of the discrete L2 inner products under g0:
/// <p, q>_0 = sum node * p conj(q), <A, B>_1 = sum edge * A conj(B) plus the
/// off-diagonal g^12 coupling, evaluated with cell averages.
struct HodgeWeights2 {
    Grid2 grid;
    std::vector<double> node, xedge, yedge, cell_off;
    std::vector<double> cell;  // 2-form weights |g|^{-1/2} h^2
    bool diagonal = true;

    explicit HodgeWeights2(const MetricChart& chart) : grid(chart.grid) {
        const Grid2& g = grid;
        const double area = g.h * g.h;
        node.resize(g.n_nodes());
        xedge.resize(g.n_xedges());
        yedge.resize(g.n_yedges());
        cell_off.resize(g.n_cells());
        cell.resize(g.n_cells());
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) node[g.node(i, j)] = std::sqrt(chart.g(g.node_pos(i, j)).det()) * area;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i) {
                const Mat2 m = chart.g(g.xedge_pos(i, j));
                xedge[g.xedge(i, j)] = std::sqrt(m.det()) * m.inverse().a * area;
            }
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Mat2 m = chart.g(g.yedge_pos(i, j));
                yedge[g.yedge(i, j)] = std::sqrt(m.det()) * m.inverse().d * area;
            }
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i) {
                const Mat2 m = chart.g(g.cell_pos(i, j));
                cell_off[g.cell(i, j)] = std::sqrt(m.det()) * m.inverse().b * area;
                cell[g.cell(i, j)] = area / std::sqrt(m.det());
                if (cell_off[g.cell(i, j)] != 0.0) diagonal = false;
            }
    }

    //! W1 A
    OneForm0 apply(const OneForm0& a) const {
        const Grid2& g = grid;
        OneForm0 out = OneForm0::zeros(g);
        for (std::size_t e = 0; e < g.n_xedges(); ++e) out.ex[e] = xedge[e] * a.ex[e];
        for (std::size_t e = 0; e < g.n_yedges(); ++e) out.ey[e] = yedge[e] * a.ey[e];
        if (!diagonal) {
            for (int j = 0; j + 1 < g.ny; ++j)
                for (int i = 0; i + 1 < g.nx; ++i) {
                    const double w = 0.5 * cell_off[g.cell(i, j)];
                    if (w == 0.0) continue;
                    const std::size_t b = g.xedge(i, j), t = g.xedge(i, j + 1);
                    const std::size_t l = g.yedge(i, j), r = g.yedge(i + 1, j);
                    const cplx ax = 0.5 * (a.ex[b] + a.ex[t]);
                    const cplx ay = 0.5 * (a.ey[l] + a.ey[r]);
                    out.ex[b] += w * ay;
                    out.ex[t] += w * ay;
                    out.ey[l] += w * ax;
                    out.ey[r] += w * ax;
                }
        }
        return out;
    }

    //! inverse of W1 (exact for diagonal metrics, conjugate gradients otherwise)
    OneForm0 apply_inverse(const OneForm0& a) const {
        const Grid2& g = grid;
        OneForm0 out = OneForm0::zeros(g);
        for (std::size_t e = 0; e < g.n_xedges(); ++e) out.ex[e] = a.ex[e] / xedge[e];
        for (std::size_t e = 0; e < g.n_yedges(); ++e) out.ey[e] = a.ey[e] / yedge[e];
        if (diagonal) return out;
        const std::size_t nx = g.n_xedges();
        CVec b(nx + g.n_yedges()), x(b.size());
        std::vector<double> pre(b.size());
        for (std::size_t e = 0; e < nx; ++e) {
            b[e] = a.ex[e];
            x[e] = out.ex[e];
            pre[e] = 1.0 / xedge[e];
        }
        for (std::size_t e = 0; e < g.n_yedges(); ++e) {
            b[nx + e] = a.ey[e];
            x[nx + e] = out.ey[e];
            pre[nx + e] = 1.0 / yedge[e];
        }
        auto op = [&](const CVec& in, CVec& res) {
            OneForm0 t{g, CVec(in.begin(), in.begin() + nx), CVec(in.begin() + nx, in.end())};
            OneForm0 w = apply(t);
            res.resize(in.size());
            std::copy(w.ex.begin(), w.ex.end(), res.begin());
            std::copy(w.ey.begin(), w.ey.end(), res.begin() + nx);
        };
        const SolveReport rep = conjugate_gradient(op, b, x, pre, 1e-13, 2000);
        if (!rep.converged) throw NumericError("hodge inverse did not converge", rep.rel_residual);
        out.ex.assign(x.begin(), x.begin() + nx);
        out.ey.assign(x.begin() + nx, x.end());
        return out;
    }
};

/// Weights for the product metric c (e + g0) on a Grid3.
struct HodgeWeights3 {
    Grid3 grid;
    std::vector<double> node, e1, e2, e3, cell_off;
    bool diagonal = true;

    HodgeWeights3(const Grid3& G, const MetricChart& chart) : grid(G) {
        const Grid2& g = G.chart;
        const double vol = G.h1() * g.h * g.h;
        node.resize(G.n_nodes());
        e1.resize(G.n_e1());
        e2.resize(G.n_e2());
        e3.resize(G.n_e3());
        cell_off.resize(G.n_f23());
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec2 x = g.node_pos(i, j);
                const double sg = std::sqrt(chart.g(x).det());
                for (int m = 0; m < G.n1; ++m) {
                    const double c = chart.conformal(G.x1(m), x);
                    node[G.node(m, g.node(i, j))] = c * std::sqrt(c) * sg * vol;
                    if (m + 1 < G.n1) {
                        const double cm = chart.conformal(G.x1_mid(m), x);
                        e1[G.e1(m, g.node(i, j))] = std::sqrt(cm) * sg * vol;
                    }
                }
            }
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i) {
                const Vec2 x = g.xedge_pos(i, j);
                const Mat2 mt = chart.g(x);
                const double w = std::sqrt(mt.det()) * mt.inverse().a;
                for (int m = 0; m < G.n1; ++m) e2[G.e2(m, g.xedge(i, j))] = std::sqrt(chart.conformal(G.x1(m), x)) * w * vol;
            }
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec2 x = g.yedge_pos(i, j);
                const Mat2 mt = chart.g(x);
                const double w = std::sqrt(mt.det()) * mt.inverse().d;
                for (int m = 0; m < G.n1; ++m) e3[G.e3(m, g.yedge(i, j))] = std::sqrt(chart.conformal(G.x1(m), x)) * w * vol;
            }
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i) {
                const Vec2 x = g.cell_pos(i, j);
                const Mat2 mt = chart.g(x);
                const double w = std::sqrt(mt.det()) * mt.inverse().b;
                if (w != 0.0) diagonal = false;
                for (int m = 0; m < G.n1; ++m)
                    cell_off[G.f23(m, g.cell(i, j))] = std::sqrt(chart.conformal(G.x1(m), x)) * w * vol;
            }
    }

    OneForm3 apply(const OneForm3& A) const {
        const Grid3& G = grid;
        const Grid2& g = G.chart;
        OneForm3 out = OneForm3::zeros(G);
        for (std::size_t e = 0; e < e1.size(); ++e) out.a1[e] = e1[e] * A.a1[e];
        for (std::size_t e = 0; e < e2.size(); ++e) out.a2[e] = e2[e] * A.a2[e];
        for (std::size_t e = 0; e < e3.size(); ++e) out.a3[e] = e3[e] * A.a3[e];
        if (!diagonal) {
            for (int j = 0; j + 1 < g.ny; ++j)
                for (int i = 0; i + 1 < g.nx; ++i)
                    for (int m = 0; m < G.n1; ++m) {
                        const double w = 0.5 * cell_off[G.f23(m, g.cell(i, j))];
                        const std::size_t b = G.e2(m, g.xedge(i, j)), t = G.e2(m, g.xedge(i, j + 1));
                        const std::size_t l = G.e3(m, g.yedge(i, j)), r = G.e3(m, g.yedge(i + 1, j));
                        const cplx ax = 0.5 * (A.a2[b] + A.a2[t]);
                        const cplx ay = 0.5 * (A.a3[l] + A.a3[r]);
                        out.a2[b] += w * ay;
                        out.a2[t] += w * ay;
                        out.a3[l] += w * ax;
                        out.a3[r] += w * ax;
                    }
        }
        return out;
    }
};

// ---------------------------------------------------- transposed difference

//! D^T applied to an edge field (no metric)
inline ScalarField0 d_transpose(const OneForm0& b) {
    const Grid2& g = b.grid;
    ScalarField0 out = ScalarField0::zeros(g);
    const double ih = 1.0 / g.h;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            const cplx v = b.ex[g.xedge(i, j)] * ih;
            out.at(i, j) -= v;
            out.at(i + 1, j) += v;
        }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const cplx v = b.ey[g.yedge(i, j)] * ih;
            out.at(i, j) -= v;
            out.at(i, j + 1) += v;
        }
    return out;
}

inline ScalarField3 d_transpose(const OneForm3& B) {
    const Grid3& G = B.grid;
    const Grid2& g = G.chart;
    ScalarField3 out = ScalarField3::zeros(G);
    const double ih1 = 1.0 / G.h1(), ih = 1.0 / g.h;
    for (std::size_t k = 0; k < g.n_nodes(); ++k)
        for (int m = 0; m + 1 < G.n1; ++m) {
            const cplx v = B.a1[G.e1(m, k)] * ih1;
            out.v[G.node(m, k)] -= v;
            out.v[G.node(m + 1, k)] += v;
        }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const cplx v = B.a2[G.e2(m, g.xedge(i, j))] * ih;
                out.v[G.node(m, g.node(i, j))] -= v;
                out.v[G.node(m, g.node(i + 1, j))] += v;
            }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const cplx v = B.a3[G.e3(m, g.yedge(i, j))] * ih;
                out.v[G.node(m, g.node(i, j))] -= v;
                out.v[G.node(m, g.node(i, j + 1))] += v;
            }
    return out;
}

// ------------------------------------------------------------ codifferential

/// d*A = W0^{-1} D^T W1 A, the exact adjoint of exterior_d under the
/// metric inner products. Approximates -|g|^{-1/2} d_i(|g|^{1/2} g^ij A_j).
inline ScalarField0 codifferential(const OneForm0& a, const HodgeWeights2& w) {
    ScalarField0 out = d_transpose(w.apply(a));
    for (std::size_t n = 0; n < out.v.size(); ++n) out.v[n] /= w.node[n];
    return out;
}

inline ScalarField0 codifferential(const OneForm0& a, const MetricChart& chart) {
    return codifferential(a, HodgeWeights2(chart));
}

inline ScalarField3 codifferential(const OneForm3& A, const HodgeWeights3& w) {
    ScalarField3 out = d_transpose(w.apply(A));
    for (std::size_t n = 0; n < out.v.size(); ++n) out.v[n] /= w.node[n];
    return out;
}

inline ScalarField3 codifferential(const OneForm3& A, const MetricChart& chart) {
    return codifferential(A, HodgeWeights3(A.grid, chart));
}

//! weighted inner products used by the adjointness checks
inline cplx inner0(const ScalarField0& p, const ScalarField0& q, const HodgeWeights2& w) {
    cplx s = 0.0;
    for (std::size_t n = 0; n < p.v.size(); ++n) s += w.node[n] * p.v[n] * std::conj(q.v[n]);
    return s;
}

inline cplx inner1(const OneForm0& a, const OneForm0& b, const HodgeWeights2& w) {
    const OneForm0 wa = w.apply(a);
    cplx s = 0.0;
    for (std::size_t e = 0; e < a.ex.size(); ++e) s += wa.ex[e] * std::conj(b.ex[e]);
    for (std::size_t e = 0; e < a.ey.size(); ++e) s += wa.ey[e] * std::conj(b.ey[e]);
    return s;
}

// ------------------------------------------------------------ pairings

namespace detail {
//! average of the available edge values adjacent to a node along one axis
inline cplx node_avg(const cplx* lo, const cplx* hi) {
    if (lo && hi) return 0.5 * (*lo + *hi);
    if (lo) return *lo;
    if (hi) return *hi;
    return 0.0;
}

inline std::array<cplx, 2> node_components(const OneForm0& a, int i, int j) {
    const Grid2& g = a.grid;
    const cplx* xl = i > 0 ? &a.ex[g.xedge(i - 1, j)] : nullptr;
    const cplx* xr = i + 1 < g.nx ? &a.ex[g.xedge(i, j)] : nullptr;
    const cplx* yl = j > 0 ? &a.ey[g.yedge(i, j - 1)] : nullptr;
    const cplx* yr = j + 1 < g.ny ? &a.ey[g.yedge(i, j)] : nullptr;
    return {node_avg(xl, xr), node_avg(yl, yr)};
}

inline std::array<cplx, 3> node_components(const OneForm3& A, int m, int i, int j) {
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    const std::size_t k = g.node(i, j);
    const cplx* a1l = m > 0 ? &A.a1[G.e1(m - 1, k)] : nullptr;
    const cplx* a1r = m + 1 < G.n1 ? &A.a1[G.e1(m, k)] : nullptr;
    const cplx* xl = i > 0 ? &A.a2[G.e2(m, g.xedge(i - 1, j))] : nullptr;
    const cplx* xr = i + 1 < g.nx ? &A.a2[G.e2(m, g.xedge(i, j))] : nullptr;
    const cplx* yl = j > 0 ? &A.a3[G.e3(m, g.yedge(i, j - 1))] : nullptr;
    const cplx* yr = j + 1 < g.ny ? &A.a3[G.e3(m, g.yedge(i, j))] : nullptr;
    return {node_avg(a1l, a1r), node_avg(xl, xr), node_avg(yl, yr)};
}
}  // namespace detail

/// Pointwise g^{ij} A_i conj(B_j) at the nodes, with edge components
/// averaged onto the nodes.
inline ScalarField0 metric_pairing(const OneForm0& a, const OneForm0& b, const MetricChart& chart) {
    const Grid2& g = a.grid;
    ScalarField0 out = ScalarField0::zeros(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const auto ca = detail::node_components(a, i, j);
            const auto cb = detail::node_components(b, i, j);
            const Mat2 gi = chart.g(g.node_pos(i, j)).inverse();
            out.at(i, j) = gi.a * ca[0] * std::conj(cb[0]) + gi.b * (ca[0] * std::conj(cb[1]) + ca[1] * std::conj(cb[0])) +
                           gi.d * ca[1] * std::conj(cb[1]);
        }
    return out;
}

//! pairing under the product metric c (e + g0)
inline ScalarField3 metric_pairing(const OneForm3& A, const OneForm3& B, const MetricChart& chart) {
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    ScalarField3 out = ScalarField3::zeros(G);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const Vec2 x = g.node_pos(i, j);
            const Mat2 gi = chart.g(x).inverse();
            for (int m = 0; m < G.n1; ++m) {
                const auto ca = detail::node_components(A, m, i, j);
                const auto cb = detail::node_components(B, m, i, j);
                const double c = chart.conformal(G.x1(m), x);
                out.v[G.node(m, g.node(i, j))] =
                    (ca[0] * std::conj(cb[0]) + gi.a * ca[1] * std::conj(cb[1]) +
                     gi.b * (ca[1] * std::conj(cb[2]) + ca[2] * std::conj(cb[1])) + gi.d * ca[2] * std::conj(cb[2])) /
                    c;
            }
        }
    return out;
}

// ------------------------------------------------------------ gauge fixing

struct GaugeSolveOptions {
    double tol = 1e-8;
    int max_iter = 0;  // 0: 10 * sqrt(unknowns)
};

/// Dirichlet solve Delta_g p = d*A, p = 0 on the grid boundary, in the
/// adjoint form (D^T W1 D) p = -D^T W1 A at interior nodes.
inline ScalarField0 solve_gauge(const OneForm0& a, const HodgeWeights2& w, const GaugeSolveOptions& opt = {},
                                SolveReport* report = nullptr) {
    const Grid2& g = a.grid;
    std::vector<std::size_t> interior;
    for (int j = 1; j + 1 < g.ny; ++j)
        for (int i = 1; i + 1 < g.nx; ++i) interior.push_back(g.node(i, j));
    const ScalarField0 rhs_full = d_transpose(w.apply(a));
    CVec b(interior.size()), x(interior.size(), 0.0);
    for (std::size_t k = 0; k < interior.size(); ++k) b[k] = -rhs_full.v[interior[k]];
    std::vector<double> pre(interior.size());
    OneForm0 probe = OneForm0::zeros(g);
    {
        const double ih2 = 1.0 / (g.h * g.h);
        for (std::size_t k = 0; k < interior.size(); ++k) {
            const int i = int(interior[k] % g.nx), j = int(interior[k] / g.nx);
            const double d = (w.xedge[g.xedge(i - 1, j)] + w.xedge[g.xedge(i, j)] + w.yedge[g.yedge(i, j - 1)] +
                              w.yedge[g.yedge(i, j)]) *
                             ih2;
            pre[k] = 1.0 / d;
        }
    }
    ScalarField0 p = ScalarField0::zeros(g);
    auto op = [&](const CVec& in, CVec& out) {
        std::fill(p.v.begin(), p.v.end(), cplx(0.0));
        for (std::size_t k = 0; k < interior.size(); ++k) p.v[interior[k]] = in[k];
        const ScalarField0 y = d_transpose(w.apply(exterior_d(p)));
        out.resize(in.size());
        for (std::size_t k = 0; k < interior.size(); ++k) out[k] = y.v[interior[k]];
    };
    const int cap = opt.max_iter > 0 ? opt.max_iter : int(10.0 * std::sqrt(double(interior.size())));
    const SolveReport rep = conjugate_gradient(op, b, x, pre, opt.tol, cap);
    if (report) *report = rep;
    if (!rep.converged)
        throw NumericError("solve_gauge: no convergence, relative residual " + std::to_string(rep.rel_residual),
                           rep.rel_residual, rep.condition);
    ScalarField0 out = ScalarField0::zeros(g);
    for (std::size_t k = 0; k < interior.size(); ++k) out.v[interior[k]] = x[k];
    return out;
}

inline ScalarField0 solve_gauge(const OneForm0& a, const MetricChart& chart, const GaugeSolveOptions& opt = {}) {
    return solve_gauge(a, HodgeWeights2(chart), opt);
}

inline ScalarField3 solve_gauge(const OneForm3& A, const HodgeWeights3& w, const GaugeSolveOptions& opt = {},
                                SolveReport* report = nullptr) {
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    std::vector<std::size_t> interior;
    for (int j = 1; j + 1 < g.ny; ++j)
        for (int i = 1; i + 1 < g.nx; ++i)
            for (int m = 1; m + 1 < G.n1; ++m) interior.push_back(G.node(m, g.node(i, j)));
    const ScalarField3 rhs_full = d_transpose(w.apply(A));
    CVec b(interior.size()), x(interior.size(), 0.0);
    for (std::size_t k = 0; k < interior.size(); ++k) b[k] = -rhs_full.v[interior[k]];
    std::vector<double> pre(interior.size());
    const double ih1 = 1.0 / (G.h1() * G.h1()), ih2 = 1.0 / (g.h * g.h);
    for (std::size_t k = 0; k < interior.size(); ++k) {
        const std::size_t n = interior[k];
        const int m = int(n % G.n1);
        const std::size_t kc = n / G.n1;
        const int i = int(kc % g.nx), j = int(kc / g.nx);
        const double d = (w.e1[G.e1(m - 1, kc)] + w.e1[G.e1(m, kc)]) * ih1 +
                         (w.e2[G.e2(m, g.xedge(i - 1, j))] + w.e2[G.e2(m, g.xedge(i, j))] +
                          w.e3[G.e3(m, g.yedge(i, j - 1))] + w.e3[G.e3(m, g.yedge(i, j))]) *
                             ih2;
        pre[k] = 1.0 / d;
    }
    ScalarField3 p = ScalarField3::zeros(G);
    auto op = [&](const CVec& in, CVec& out) {
        std::fill(p.v.begin(), p.v.end(), cplx(0.0));
        for (std::size_t k = 0; k < interior.size(); ++k) p.v[interior[k]] = in[k];
        const ScalarField3 y = d_transpose(w.apply(exterior_d(p)));
        out.resize(in.size());
        for (std::size_t k = 0; k < interior.size(); ++k) out[k] = y.v[interior[k]];
    };
    const int cap = opt.max_iter > 0 ? opt.max_iter : int(10.0 * std::sqrt(double(interior.size())));
    const SolveReport rep = conjugate_gradient(op, b, x, pre, opt.tol, cap);
    if (report) *report = rep;
    if (!rep.converged)
        throw NumericError("solve_gauge: no convergence, relative residual " + std::to_string(rep.rel_residual),
                           rep.rel_residual, rep.condition);
    ScalarField3 out = ScalarField3::zeros(G);
    for (std::size_t k = 0; k < interior.size(); ++k) out.v[interior[k]] = x[k];
    return out;
}

inline ScalarField3 solve_gauge(const OneForm3& A, const MetricChart& chart, const GaugeSolveOptions& opt = {}) {
    return solve_gauge(A, HodgeWeights3(A.grid, chart), opt);
}

/// A + dp with p = solve_gauge(A); d of the result equals d of A.
inline OneForm3 coulomb_project(const OneForm3& A, const MetricChart& chart, const GaugeSolveOptions& opt = {}) {
    const HodgeWeights3 w(A.grid, chart);
    return A + exterior_d(solve_gauge(A, w, opt));
}

inline OneForm0 coulomb_project(const OneForm0& a, const MetricChart& chart, const GaugeSolveOptions& opt = {}) {
    const HodgeWeights2 w(chart);
    return a + exterior_d(solve_gauge(a, w, opt));
}

}  // namespace cta
