#pragma once

#include <Eigen/Sparse>
#include <Eigen/IterativeLinearSolvers>

#include "cta/forms.hpp"

namespace cta {

// Magnetic Schroedinger operator
//   L u = -Lap_g u + i d*(A u) - i <A, du>_g + (<A, A>_g + q) u
// on a product grid with metric c (e + g0). Every term is built from the
// same staggered pieces as the forms module:
//   W0 L = D^T W1 D + i D^T W1 [A] M - i M^T [A] W1 D + diag(M^T (A W1 A) + W0 q)
// where D is the edge difference, M averages the two endpoints of an edge and
// W0, W1 are the metric node and edge weights. For real A the matrix W0 L is
// Hermitian, and for A = 0 it is real symmetric.

using SpMatC = Eigen::SparseMatrix<cplx>;
using SpMatR = Eigen::SparseMatrix<double>;

/// Boundary/interior classification of product-grid nodes.
struct ProductGrid {
    Grid3 grid;
    std::vector<std::uint8_t> boundary;  // 1 on the topological boundary of the box
    std::vector<std::size_t> interior_nodes, boundary_nodes;

    explicit ProductGrid(const Grid3& G) : grid(G), boundary(G.n_nodes(), 0) {
        const Grid2& g = G.chart;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                for (int m = 0; m < G.n1; ++m) {
                    const std::size_t n = G.node(m, g.node(i, j));
                    const bool b = m == 0 || m == G.n1 - 1 || i == 0 || i == g.nx - 1 || j == 0 || j == g.ny - 1;
                    boundary[n] = b;
                    (b ? boundary_nodes : interior_nodes).push_back(n);
                }
    }

    //! (m, i, j) for a node index
    std::array<int, 3> coords(std::size_t n) const {
        const int m = int(n % std::size_t(grid.n1));
        const std::size_t kc = n / std::size_t(grid.n1);
        return {m, int(kc % std::size_t(grid.chart.nx)), int(kc / std::size_t(grid.chart.nx))};
    }
};

namespace detail {

struct EdgeLayout {
    std::size_t o2, o3, n;
    explicit EdgeLayout(const Grid3& G) : o2(G.n_e1()), o3(G.n_e1() + G.n_e2()), n(G.n_e1() + G.n_e2() + G.n_e3()) {}
};

//! difference D (edges x nodes) and endpoint average M (edges x nodes)
inline std::pair<SpMatR, SpMatR> difference_and_average(const Grid3& G) {
    const Grid2& g = G.chart;
    const EdgeLayout L(G);
    std::vector<Eigen::Triplet<double>> td, ta;
    auto add = [&](std::size_t e, std::size_t n0, std::size_t n1, double h) {
        td.emplace_back(Eigen::Index(e), Eigen::Index(n0), -1.0 / h);
        td.emplace_back(Eigen::Index(e), Eigen::Index(n1), 1.0 / h);
        ta.emplace_back(Eigen::Index(e), Eigen::Index(n0), 0.5);
        ta.emplace_back(Eigen::Index(e), Eigen::Index(n1), 0.5);
    };
    for (std::size_t k = 0; k < g.n_nodes(); ++k)
        for (int m = 0; m + 1 < G.n1; ++m) add(G.e1(m, k), G.node(m, k), G.node(m + 1, k), G.h1());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m)
                add(L.o2 + G.e2(m, g.xedge(i, j)), G.node(m, g.node(i, j)), G.node(m, g.node(i + 1, j)), g.h);
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m)
                add(L.o3 + G.e3(m, g.yedge(i, j)), G.node(m, g.node(i, j)), G.node(m, g.node(i, j + 1)), g.h);
    SpMatR D(Eigen::Index(L.n), Eigen::Index(G.n_nodes())), M(Eigen::Index(L.n), Eigen::Index(G.n_nodes()));
    D.setFromTriplets(td.begin(), td.end());
    M.setFromTriplets(ta.begin(), ta.end());
    return {D, M};
}

//! W1 as a sparse symmetric matrix, including the g0 off-diagonal coupling
inline SpMatR hodge1_matrix(const HodgeWeights3& w) {
    const Grid3& G = w.grid;
    const Grid2& g = G.chart;
    const EdgeLayout L(G);
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t e = 0; e < w.e1.size(); ++e) t.emplace_back(Eigen::Index(e), Eigen::Index(e), w.e1[e]);
    for (std::size_t e = 0; e < w.e2.size(); ++e) t.emplace_back(Eigen::Index(L.o2 + e), Eigen::Index(L.o2 + e), w.e2[e]);
    for (std::size_t e = 0; e < w.e3.size(); ++e) t.emplace_back(Eigen::Index(L.o3 + e), Eigen::Index(L.o3 + e), w.e3[e]);
    if (!w.diagonal)
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i)
                for (int m = 0; m < G.n1; ++m) {
                    const double c = 0.25 * w.cell_off[G.f23(m, g.cell(i, j))];
                    for (std::size_t x : {G.e2(m, g.xedge(i, j)), G.e2(m, g.xedge(i, j + 1))})
                        for (std::size_t y : {G.e3(m, g.yedge(i, j)), G.e3(m, g.yedge(i + 1, j))}) {
                            t.emplace_back(Eigen::Index(L.o2 + x), Eigen::Index(L.o3 + y), c);
                            t.emplace_back(Eigen::Index(L.o3 + y), Eigen::Index(L.o2 + x), c);
                        }
                }
    SpMatR W(Eigen::Index(L.n), Eigen::Index(L.n));
    W.setFromTriplets(t.begin(), t.end());
    return W;
}

inline Eigen::VectorXcd stack(const OneForm3& A) {
    const EdgeLayout L(A.grid);
    Eigen::VectorXcd v(Eigen::Index(L.n));
    for (std::size_t e = 0; e < A.a1.size(); ++e) v[Eigen::Index(e)] = A.a1[e];
    for (std::size_t e = 0; e < A.a2.size(); ++e) v[Eigen::Index(L.o2 + e)] = A.a2[e];
    for (std::size_t e = 0; e < A.a3.size(); ++e) v[Eigen::Index(L.o3 + e)] = A.a3[e];
    return v;
}

inline Eigen::VectorXcd to_vec(const ScalarField3& u) { return Eigen::Map<const Eigen::VectorXcd>(u.v.data(), Eigen::Index(u.v.size())); }

inline ScalarField3 to_field(const Grid3& G, const Eigen::VectorXcd& v) {
    ScalarField3 out = ScalarField3::zeros(G);
    for (std::size_t n = 0; n < out.v.size(); ++n) out.v[n] = v[Eigen::Index(n)];
    return out;
}

}  // namespace detail

/// Assembled pieces of W0 L for one (A, q).
struct MagneticOperator {
    Grid3 grid;
    std::vector<double> w0;
    SpMatC laplace;   // D^T W1 D
    SpMatC div_term;  // i D^T W1 [A] M
    SpMatC adv_term;  // -i M^T [A] W1 D
    SpMatC potential; // diag(M^T (A W1 A) + W0 q)

    SpMatC total() const { return laplace + div_term + adv_term + potential; }

    MagneticOperator(const OneForm3& A, const ScalarField3& q, const MetricChart& chart) : grid(A.grid) {
        if (!q.grid.same_shape(A.grid)) throw std::invalid_argument("MagneticOperator: A and q are on different grids");
        const HodgeWeights3 w(grid, chart);
        w0 = w.node;
        const auto [Dr, Mr] = detail::difference_and_average(grid);
        const SpMatR W1 = detail::hodge1_matrix(w);
        const SpMatC D = Dr.cast<cplx>(), M = Mr.cast<cplx>(), W = W1.cast<cplx>();
        const Eigen::VectorXcd a = detail::stack(A);
        const SpMatC Ad = SpMatC(a.asDiagonal());
        laplace = SpMatC(D.transpose() * W * D);
        div_term = SpMatC(I * (D.transpose() * W * Ad * M));
        adv_term = SpMatC(-I * (M.transpose() * Ad * W * D));
        const Eigen::VectorXcd aa = M.transpose() * a.cwiseProduct(W * a);
        Eigen::VectorXcd dv(aa.size());
        for (Eigen::Index n = 0; n < aa.size(); ++n) dv[n] = aa[n] + w0[std::size_t(n)] * q.v[std::size_t(n)];
        potential = SpMatC(dv.asDiagonal());
    }
};

/// The four terms of L u separately, each divided by W0; boundary-node
/// values are not meaningful and are set to zero.
struct OperatorTerms {
    ScalarField3 laplace, div_term, adv_term, potential;
    ScalarField3 sum() const {
        ScalarField3 s = laplace;
        for (std::size_t n = 0; n < s.v.size(); ++n) s.v[n] += div_term.v[n] + adv_term.v[n] + potential.v[n];
        return s;
    }
};

inline OperatorTerms operator_terms(const ScalarField3& u, const OneForm3& A, const ScalarField3& q, const MetricChart& chart) {
    if (!u.grid.same_shape(A.grid)) throw std::invalid_argument("operator_terms: u and A are on different grids");
    const MagneticOperator op(A, q, chart);
    const ProductGrid pg(u.grid);
    const Eigen::VectorXcd x = detail::to_vec(u);
    auto apply = [&](const SpMatC& K) {
        Eigen::VectorXcd y = K * x;
        for (Eigen::Index n = 0; n < y.size(); ++n) y[n] = pg.boundary[std::size_t(n)] ? cplx(0.0) : y[n] / op.w0[std::size_t(n)];
        return detail::to_field(u.grid, y);
    };
    return {apply(op.laplace), apply(op.div_term), apply(op.adv_term), apply(op.potential)};
}

//! L u at interior nodes (zero on the boundary)
inline ScalarField3 apply_operator(const ScalarField3& u, const OneForm3& A, const ScalarField3& q, const MetricChart& chart) {
    return operator_terms(u, A, q, chart).sum();
}

struct DirichletOptions {
    double tol = 1e-10;       // iterative tolerance
    double accept = 1e-8;     // required relative residual
    int max_iter = 0;         // 0: 4 sqrt(N) + 200
    double ilut_drop = 1e-5;
    int ilut_fill = 20;
};

struct DirichletResult {
    ScalarField3 u;
    double rel_residual = 0.0;
    int iterations = 0;
};

/// Solve L u = 0 at interior nodes with u = boundary values on the boundary.
/// BiCGSTAB with an incomplete LU preconditioner; a stalled or failed solve
/// is reported as near-singular, since the usual cause is 0 sitting close to
/// a Dirichlet eigenvalue.
inline DirichletResult solve_dirichlet(const OneForm3& A, const ScalarField3& q, const ScalarField3& boundary_values,
                                       const MetricChart& chart, const DirichletOptions& opt = {}) {
    const Grid3& G = A.grid;
    if (!boundary_values.grid.same_shape(G)) throw std::invalid_argument("solve_dirichlet: boundary data on a different grid");
    const ProductGrid pg(G);
    const SpMatC K = MagneticOperator(A, q, chart).total();
    const std::size_t ni = pg.interior_nodes.size();
    std::vector<Eigen::Index> pos(G.n_nodes(), -1);
    for (std::size_t k = 0; k < ni; ++k) pos[pg.interior_nodes[k]] = Eigen::Index(k);
    std::vector<Eigen::Triplet<cplx>> tri;
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(Eigen::Index(ni));
    for (int c = 0; c < K.outerSize(); ++c)
        for (SpMatC::InnerIterator it(K, c); it; ++it) {
            const Eigen::Index r = pos[std::size_t(it.row())];
            if (r < 0) continue;
            const Eigen::Index cc = pos[std::size_t(it.col())];
            if (cc >= 0)
                tri.emplace_back(r, cc, it.value());
            else
                rhs[r] -= it.value() * boundary_values.v[std::size_t(it.col())];
        }
    const auto nidx = static_cast<Eigen::Index>(ni);
    SpMatC Kii(nidx, nidx);
    Kii.setFromTriplets(tri.begin(), tri.end());
    DirichletResult res;
    res.u = ScalarField3::zeros(G);
    for (std::size_t n : pg.boundary_nodes) res.u.v[n] = boundary_values.v[n];
    if (rhs.norm() == 0.0) return res;

    Eigen::BiCGSTAB<SpMatC, Eigen::IncompleteLUT<cplx>> solver;
    solver.preconditioner().setDroptol(opt.ilut_drop);
    solver.preconditioner().setFillfactor(opt.ilut_fill);
    solver.setTolerance(opt.tol);
    solver.setMaxIterations(opt.max_iter > 0 ? opt.max_iter : int(4.0 * std::sqrt(double(ni))) + 200);
    solver.compute(Kii);
    if (solver.info() != Eigen::Success)
        throw NumericError("solve_dirichlet: preconditioner factorization failed; the system may be singular, "
                           "try adding a constant shift to q");
    const Eigen::VectorXcd x = solver.solve(rhs);
    res.iterations = int(solver.iterations());
    res.rel_residual = (Kii * x - rhs).norm() / rhs.norm();
    if (!std::isfinite(res.rel_residual) || res.rel_residual > opt.accept)
        throw NumericError("solve_dirichlet: solver stalled at relative residual " + std::to_string(res.rel_residual) +
                               "; 0 is likely close to a Dirichlet eigenvalue, try adding a constant shift to q",
                           res.rel_residual);
    for (std::size_t k = 0; k < ni; ++k) res.u.v[pg.interior_nodes[k]] = x[Eigen::Index(k)];
    return res;
}

// ------------------------------------------------------------ Cauchy data

struct CauchyData {
    std::vector<std::size_t> nodes;
    std::vector<cplx> dirichlet;
    std::vector<cplx> magnetic_neumann;
};

namespace detail {

//! covariant derivative (d + iA) u along one axis at node `at` of a line of n nodes.
//! Neighbouring values are parallel-transported to `at` with the edge phases
//! exp(i h A_e) before differencing: one-sided at the ends, centered otherwise.
template <class U, class E>
cplx covariant_derivative(U&& u, E&& edge, int at, int n, double h) {
    auto moved = [&](int k) {
        cplx s = 0.0;
        for (int e = at; e < k; ++e) s += edge(e);
        for (int e = k; e < at; ++e) s -= edge(e);
        return u(k) * std::exp(I * h * s);
    };
    if (at == 0) return (-3.0 * moved(0) + 4.0 * moved(1) - moved(2)) / (2.0 * h);
    if (at == n - 1) return (3.0 * moved(n - 1) - 4.0 * moved(n - 2) + moved(n - 3)) / (2.0 * h);
    return (moved(at + 1) - moved(at - 1)) / (2.0 * h);
}

}  // namespace detail

/// Dirichlet trace and d_nu u + i <A, nu>_g u at every boundary node. The
/// derivative and the potential enter together through covariant differences
/// with second-order one-sided stencils in the normal direction, so a gauge
/// change with p = 0 on the boundary changes the trace only through u. On box
/// edges and corners the conormal is the sum of the adjacent face conormals.
inline CauchyData magnetic_neumann(const ScalarField3& u, const OneForm3& A, const MetricChart& chart) {
    const Grid3& G = u.grid;
    const Grid2& g = G.chart;
    const ProductGrid pg(G);
    CauchyData out;
    for (std::size_t n : pg.boundary_nodes) {
        const auto [m, i, j] = pg.coords(n);
        const std::size_t kc = g.node(i, j);
        const Vec2 xp = g.node_pos(i, j);
        const double x1 = G.x1(m);
        const std::array<double, 3> cn = {m == 0 ? -1.0 : (m == G.n1 - 1 ? 1.0 : 0.0),
                                          i == 0 ? -1.0 : (i == g.nx - 1 ? 1.0 : 0.0),
                                          j == 0 ? -1.0 : (j == g.ny - 1 ? 1.0 : 0.0)};
        const std::array<cplx, 3> du = {
            detail::covariant_derivative([&](int mm) { return u.v[G.node(mm, kc)]; },
                                         [&](int mm) { return A.a1[G.e1(mm, kc)]; }, m, G.n1, G.h1()),
            detail::covariant_derivative([&](int ii) { return u.v[G.node(m, g.node(ii, j))]; },
                                         [&](int ii) { return A.a2[G.e2(m, g.xedge(ii, j))]; }, i, g.nx, g.h),
            detail::covariant_derivative([&](int jj) { return u.v[G.node(m, g.node(i, jj))]; },
                                         [&](int jj) { return A.a3[G.e3(m, g.yedge(i, jj))]; }, j, g.ny, g.h)};
        // inverse metric of c (e + g0)
        const double c = chart.conformal(x1, xp);
        const Mat2 gi = chart.g(xp).inverse();
        const double ginv[3][3] = {{1.0 / c, 0.0, 0.0}, {0.0, gi.a / c, gi.b / c}, {0.0, gi.b / c, gi.d / c}};
        std::array<double, 3> nu{0.0, 0.0, 0.0};
        double nn = 0.0;
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) nn += ginv[r][s] * cn[r] * cn[s];
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) nu[r] += ginv[r][s] * cn[s] / std::sqrt(nn);
        cplx dnu = 0.0;
        for (int r = 0; r < 3; ++r) dnu += nu[r] * du[r];
        out.nodes.push_back(n);
        out.dirichlet.push_back(u.v[n]);
        out.magnetic_neumann.push_back(dnu);
    }
    return out;
}

// ------------------------------------------------------------ gauge check

struct GaugeReport {
    double interior_discrepancy = 0.0;  // max |u_{A+dp} - e^{-ip} u_A| / max |u_A|
    double neumann_discrepancy = 0.0;   // max |N_{A+dp} - N_A| / max |N_A|
    double dirichlet_discrepancy = 0.0; // max |u_{A+dp} - u_A| on the boundary
    double residual_a = 0.0, residual_b = 0.0;
};

/// Solve with (A, q) and (A + dp, q) for the same Dirichlet data and compare
/// the solutions and the magnetic Neumann traces.
inline GaugeReport gauge_equiv_check(const OneForm3& A, const ScalarField3& q, const ScalarField3& p,
                                     const ScalarField3& boundary_values, const MetricChart& chart,
                                     const DirichletOptions& opt = {}) {
    const ProductGrid pg(A.grid);
    for (std::size_t n : pg.boundary_nodes)
        if (std::abs(p.v[n]) > 1e-12 * std::max(1.0, max_abs(p.v)))
            throw std::invalid_argument("gauge_equiv_check: p must vanish on the boundary");
    const OneForm3 Ap = A + exterior_d(p);
    const DirichletResult ra = solve_dirichlet(A, q, boundary_values, chart, opt);
    const DirichletResult rb = solve_dirichlet(Ap, q, boundary_values, chart, opt);
    GaugeReport rep;
    rep.residual_a = ra.rel_residual;
    rep.residual_b = rb.rel_residual;
    double num = 0.0;
    for (std::size_t n : pg.interior_nodes) num = std::max(num, std::abs(rb.u.v[n] - std::exp(-I * p.v[n]) * ra.u.v[n]));
    const double ua = max_abs(ra.u.v);
    rep.interior_discrepancy = ua > 0.0 ? num / ua : num;
    const CauchyData ca = magnetic_neumann(ra.u, A, chart), cb = magnetic_neumann(rb.u, Ap, chart);
    const double na = max_abs(ca.magnetic_neumann);
    const double dn = max_abs_diff(ca.magnetic_neumann, cb.magnetic_neumann);
    rep.neumann_discrepancy = na > 0.0 ? dn / na : dn;
    rep.dirichlet_discrepancy = max_abs_diff(ca.dirichlet, cb.dirichlet);
    return rep;
}

//! product grid [-a, a] x chart of the square chart, with the chart's resolution along x1 too
inline Grid3 cube_grid(const MetricChart& chart) {
    if (chart.kind != DomainKind::square) throw ConfigError("cube_grid: the forward-solve chart must be a square");
    return Grid3::make(chart.grid.nx, 0.5 * chart.size, chart.grid);
}

}  // namespace cta
