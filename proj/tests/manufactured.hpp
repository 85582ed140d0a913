#pragma once

// Closed-form fields and a continuum reference for the magnetic Schrodinger
// operator, shared by the unit tests and the acceptance gate.

#include <functional>

#include "cta/schrodinger.hpp"

namespace cta::manufactured {

struct P3 {
    double x1, x, y;
};

using CFn = std::function<cplx(P3)>;
using RFn = std::function<double(P3)>;

// smooth closed-form data for manufactured-solution checks
struct Fields {
    CFn u;
    std::array<RFn, 3> A;
    CFn q;
};

inline MetricChart curved_chart(int n) {
    MetricFn g0 = [](Vec2 p) { return Mat2{1.0 + 0.2 * p.x * p.x, 0.1 * p.x * p.y, 1.0 + 0.1 * p.y * p.y}; };
    auto c = MetricChart::square(2.0, n, g0, false);
    c.conformal = [](double x1, Vec2 p) { return std::exp(0.1 * x1 + 0.05 * p.x - 0.04 * p.y * x1); };
    return c;
}

inline MetricChart flat_chart(int n) { return MetricChart::square(2.0, n); }

inline Fields generic_fields() {
    Fields f;
    f.u = [](P3 p) { return (1.0 + 0.5 * std::sin(p.x1 + 0.7 * p.x)) * std::exp(I * (0.4 * p.x1 - 0.3 * p.x * p.y)); };
    f.A = {[](P3 p) { return 0.3 * std::cos(p.x); }, [](P3 p) { return 0.5 * p.x1 * p.y; },
           [](P3 p) { return -0.4 * std::sin(p.x1 * p.x); }};
    f.q = [](P3 p) { return cplx(1.0 + 0.2 * p.x1 * p.x1, 0.0); };
    return f;
}

// continuum evaluation of the four terms by nested fourth-order differencing
struct Continuum {
    const MetricChart& chart;
    double step = 2e-3;

    std::array<std::array<double, 3>, 3> ginv(P3 p) const {
        const double c = chart.conformal(p.x1, {p.x, p.y});
        const Mat2 gi = chart.g({p.x, p.y}).inverse();
        return {{{1.0 / c, 0.0, 0.0}, {0.0, gi.a / c, gi.b / c}, {0.0, gi.b / c, gi.d / c}}};
    }
    double sqrtg(P3 p) const {
        const double c = chart.conformal(p.x1, {p.x, p.y});
        return c * std::sqrt(c) * std::sqrt(chart.g({p.x, p.y}).det());
    }
    static P3 shift(P3 p, int axis, double s) {
        if (axis == 0) p.x1 += s;
        if (axis == 1) p.x += s;
        if (axis == 2) p.y += s;
        return p;
    }
    template <class F>
    auto deriv(F&& f, P3 p, int axis) const {
        const double h = step;
        return (-f(shift(p, axis, 2 * h)) + 8.0 * f(shift(p, axis, h)) - 8.0 * f(shift(p, axis, -h)) +
                f(shift(p, axis, -2 * h))) /
               (12.0 * h);
    }
    // (1 / sqrt g) d_i (sqrt g g^ij F_j)
    cplx divergence(const std::function<std::array<cplx, 3>(P3)>& F, P3 p) const {
        cplx s = 0.0;
        for (int i = 0; i < 3; ++i)
            s += deriv(
                [&](P3 r) {
                    const auto gi = ginv(r);
                    const auto v = F(r);
                    cplx acc = 0.0;
                    for (int j = 0; j < 3; ++j) acc += gi[i][j] * v[j];
                    return cplx(sqrtg(r) * acc);
                },
                p, i);
        return s / sqrtg(p);
    }
    std::array<cplx, 3> grad(const CFn& u, P3 p) const { return {deriv(u, p, 0), deriv(u, p, 1), deriv(u, p, 2)}; }

    std::array<cplx, 4> terms(const Fields& f, P3 p) const {
        const cplx lap = -divergence([&](P3 r) { return grad(f.u, r); }, p);
        const cplx div = -I * divergence(
                                  [&](P3 r) {
                                      const cplx ur = f.u(r);
                                      return std::array<cplx, 3>{f.A[0](r) * ur, f.A[1](r) * ur, f.A[2](r) * ur};
                                  },
                                  p);
        const auto gi = ginv(p);
        const auto du = grad(f.u, p);
        const double a[3] = {f.A[0](p), f.A[1](p), f.A[2](p)};
        cplx adv = 0.0;
        double aa = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                adv += gi[i][j] * a[i] * du[j];
                aa += gi[i][j] * a[i] * a[j];
            }
        return {lap, div, -I * adv, (aa + f.q(p)) * f.u(p)};
    }
};

inline P3 node_point(const Grid3& G, std::size_t n) {
    const int m = int(n % std::size_t(G.n1));
    const std::size_t kc = n / std::size_t(G.n1);
    const Vec2 x = G.chart.node_pos(int(kc % std::size_t(G.chart.nx)), int(kc / std::size_t(G.chart.nx)));
    return {G.x1(m), x.x, x.y};
}

inline ScalarField3 sample(const Grid3& G, const CFn& f) {
    auto s = ScalarField3::zeros(G);
    for (std::size_t n = 0; n < s.v.size(); ++n) s.v[n] = f(node_point(G, n));
    return s;
}

// edge values sampled at edge midpoints
inline OneForm3 sample(const Grid3& G, const std::array<RFn, 3>& A) {
    const Grid2& g = G.chart;
    auto out = OneForm3::zeros(G);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const Vec2 x = g.node_pos(i, j);
            for (int m = 0; m < G.n1; ++m) {
                if (m + 1 < G.n1) out.a1[G.e1(m, g.node(i, j))] = A[0]({G.x1_mid(m), x.x, x.y});
                if (i + 1 < g.nx) out.a2[G.e2(m, g.xedge(i, j))] = A[1]({G.x1(m), x.x + 0.5 * g.h, x.y});
                if (j + 1 < g.ny) out.a3[G.e3(m, g.yedge(i, j))] = A[2]({G.x1(m), x.x, x.y + 0.5 * g.h});
            }
        }
    return out;
}

// max error of each operator term over the nodes shared with the 17^3 grid
inline std::array<double, 4> term_errors(int n, const Fields& f) {
    const auto chart = curved_chart(n);
    const Grid3 G = cube_grid(chart);
    const auto t = operator_terms(sample(G, f.u), sample(G, f.A), sample(G, f.q), chart);
    const Continuum ref{chart};
    const ProductGrid pg(G);
    std::array<double, 4> e{};
    const int stride = (n - 1) / 16;
    for (std::size_t nd : pg.interior_nodes) {
        const auto c = pg.coords(nd);
        if (c[0] % stride || c[1] % stride || c[2] % stride) continue;
        const auto want = ref.terms(f, node_point(G, nd));
        const cplx got[4] = {t.laplace.v[nd], t.div_term.v[nd], t.adv_term.v[nd], t.potential.v[nd]};
        for (int k = 0; k < 4; ++k) e[std::size_t(k)] = std::max(e[std::size_t(k)], std::abs(got[k] - want[std::size_t(k)]));
    }
    return e;
}


inline ScalarField3 gauge_p(const Grid3& G) {
    return sample(G, [](P3 p) {
        return cplx(0.8 * (1 - p.x1 * p.x1) * (1 - p.x * p.x) * (1 - p.y * p.y));
    });
}

inline ScalarField3 gauge_boundary(const Grid3& G) {
    return sample(G, [](P3 p) { return std::exp(0.5 * p.x1) * std::cos(p.x) * cplx(1.0, 0.3 * p.y); });
}


}  // namespace cta::manufactured
