#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <map>

#include "cta/forms.hpp"

namespace cta {

/// Sinogram D(lambda, ray): values[l][r] for lambda_grid[l] and ray r.
struct Sinogram {
    std::vector<double> lambda_grid;
    std::vector<std::vector<cplx>> values;
    std::string ray_set_id;
    double step = 0.0;
    std::map<std::string, std::string> metadata;

    std::size_t n_lambda() const { return lambda_grid.size(); }
    std::size_t n_rays() const { return values.empty() ? 0 : values.front().size(); }

    double max_abs() const {
        double m = 0.0;
        for (const auto& row : values) m = std::max(m, cta::max_abs(row));
        return m;
    }

    //! largest |D(-lambda) - conj D(lambda)| over mirrored grid pairs
    double conjugate_symmetry_defect() const {
        double m = 0.0;
        const std::size_t n = lambda_grid.size();
        for (std::size_t l = 0; l < n; ++l) {
            const std::size_t k = n - 1 - l;
            if (std::abs(lambda_grid[l] + lambda_grid[k]) > 1e-12 * (1.0 + std::abs(lambda_grid[l]))) continue;
            for (std::size_t r = 0; r < values[l].size(); ++r)
                m = std::max(m, std::abs(values[k][r] - std::conj(values[l][r])));
        }
        return m;
    }
};

// ------------------------------------------------------------ quadrature

/// Piece of a ray polyline lying in a single grid cell.
struct RayPiece {
    std::uint32_t ci = 0, cj = 0;  // cell
    double t0 = 0.0, t1 = 0.0;
    Vec2 p0, p1;
    Vec2 vel;  // chord velocity dx/dt
};

/// Each ray polyline split at grid lines. On every piece the integrand is
/// approximated by its quadratic interpolant through the two ends and the
/// midpoint and integrated against the weight exactly (Gauss-Legendre on the
/// product). With bilinear f and Whitney-interpolated 1-forms this integrates
/// a discrete gradient as an exact total derivative.
struct RayQuadrature {
    Grid2 grid;
    std::vector<std::vector<RayPiece>> pieces;
    std::vector<double> exit_time;

    std::size_t n_rays() const { return pieces.size(); }
    std::size_t n_unknowns() const { return grid.n_nodes() + grid.n_xedges() + grid.n_yedges(); }
};

namespace detail {

inline void check_hull(const Grid2& g, Vec2 p) {
    const double tol = 1e-9 * g.h;
    if (p.x < g.x0 - tol || p.x > g.x_max() + tol || p.y < g.y0 - tol || p.y > g.y_max() + tol)
        throw InterpolationError("ray sample outside the grid hull");
}

inline std::vector<RayPiece> split_path(const Grid2& g, const GeodesicPath& path) {
    std::vector<RayPiece> out;
    const auto& s = path.samples;
    std::vector<double> cuts;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        const Vec2 P = s[k].x, Q = s[k + 1].x;
        const double tP = s[k].t, tQ = s[k + 1].t;
        if (!(tQ > tP)) continue;
        check_hull(g, P);
        check_hull(g, Q);
        cuts.assign({0.0, 1.0});
        for (int ax = 0; ax < 2; ++ax) {
            const double a = P[ax], b = Q[ax];
            if (a == b) continue;
            const double o = ax == 0 ? g.x0 : g.y0;
            const double lo = std::min(a, b), hi = std::max(a, b);
            for (int m = int(std::ceil((lo - o) / g.h)); o + m * g.h <= hi; ++m) {
                const double c = (o + m * g.h - a) / (b - a);
                if (c > 0.0 && c < 1.0) cuts.push_back(c);
            }
        }
        std::sort(cuts.begin(), cuts.end());
        const Vec2 vel = (1.0 / (tQ - tP)) * (Q - P);
        for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double c0 = cuts[c], c1 = cuts[c + 1];
            if (!(c1 > c0)) continue;
            RayPiece rp;
            rp.p0 = P + c0 * (Q - P);
            rp.p1 = P + c1 * (Q - P);
            rp.t0 = tP + c0 * (tQ - tP);
            rp.t1 = tP + c1 * (tQ - tP);
            rp.vel = vel;
            const Vec2 mid = 0.5 * (rp.p0 + rp.p1);
            const int ci = std::clamp(int(std::floor((mid.x - g.x0) / g.h)), 0, g.nx - 2);
            const int cj = std::clamp(int(std::floor((mid.y - g.y0) / g.h)), 0, g.ny - 2);
            rp.ci = std::uint32_t(ci);
            rp.cj = std::uint32_t(cj);
            out.push_back(rp);
        }
    }
    return out;
}

// 8-point Gauss-Legendre on [0, 1]
inline constexpr std::array<double, 8> gl_x = {0.019855071751231856, 0.10166676129318664, 0.2372337950418355,
                                               0.4082826787521751,   0.5917173212478249,  0.7627662049581645,
                                               0.8983332387068134,   0.9801449282487681};
inline constexpr std::array<double, 8> gl_w = {0.05061426814518813, 0.11119051722668724, 0.15685332293894363,
                                               0.18134189168918100, 0.18134189168918100, 0.15685332293894363,
                                               0.11119051722668724, 0.05061426814518813};

//! weights of the ends and midpoint for int_{t0}^{t1} w(t) P(t) dt, P quadratic
template <class Weight>
std::array<double, 3> piece_weights(double t0, double t1, Weight&& w) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    const double len = t1 - t0;
    for (int q = 0; q < 8; ++q) {
        const double s = gl_x[q];
        const double ww = gl_w[q] * w(t0 + s * len);
        out[0] += ww * (2.0 * s - 1.0) * (s - 1.0);
        out[1] += ww * 4.0 * s * (1.0 - s);
        out[2] += ww * s * (2.0 * s - 1.0);
    }
    for (auto& x : out) x *= len;
    return out;
}

struct RowEntry {
    std::uint32_t col;
    double coef;
};

//! stencil of f(p) + <beta(p), vel> in cell (ci, cj) into combined columns
inline void emit_point(const Grid2& g, const RayPiece& rp, Vec2 p, double w, std::vector<RowEntry>& row) {
    const int i = int(rp.ci), j = int(rp.cj);
    const double u = std::clamp((p.x - (g.x0 + i * g.h)) / g.h, 0.0, 1.0);
    const double v = std::clamp((p.y - (g.y0 + j * g.h)) / g.h, 0.0, 1.0);
    const std::uint32_t nn = std::uint32_t(g.n_nodes());
    const std::uint32_t ny0 = nn + std::uint32_t(g.n_xedges());
    row.push_back({std::uint32_t(g.node(i, j)), w * (1 - u) * (1 - v)});
    row.push_back({std::uint32_t(g.node(i + 1, j)), w * u * (1 - v)});
    row.push_back({std::uint32_t(g.node(i, j + 1)), w * (1 - u) * v});
    row.push_back({std::uint32_t(g.node(i + 1, j + 1)), w * u * v});
    row.push_back({nn + std::uint32_t(g.xedge(i, j)), w * (1 - v) * rp.vel.x});
    row.push_back({nn + std::uint32_t(g.xedge(i, j + 1)), w * v * rp.vel.x});
    row.push_back({ny0 + std::uint32_t(g.yedge(i, j)), w * (1 - u) * rp.vel.y});
    row.push_back({ny0 + std::uint32_t(g.yedge(i + 1, j)), w * u * rp.vel.y});
}

template <class Weight>
void ray_row(const RayQuadrature& Q, std::size_t r, Weight&& w, std::vector<RowEntry>& row) {
    row.clear();
    for (const RayPiece& rp : Q.pieces[r]) {
        const auto pw = piece_weights(rp.t0, rp.t1, w);
        emit_point(Q.grid, rp, rp.p0, pw[0], row);
        emit_point(Q.grid, rp, 0.5 * (rp.p0 + rp.p1), pw[1], row);
        emit_point(Q.grid, rp, rp.p1, pw[2], row);
    }
}

//! combined field vector [f nodes, beta x-edges, beta y-edges]
inline std::vector<cplx> stack(const ScalarField0& f, const OneForm0& beta) {
    std::vector<cplx> v;
    v.reserve(f.v.size() + beta.ex.size() + beta.ey.size());
    v.insert(v.end(), f.v.begin(), f.v.end());
    v.insert(v.end(), beta.ex.begin(), beta.ex.end());
    v.insert(v.end(), beta.ey.begin(), beta.ey.end());
    return v;
}

template <class Weight>
std::vector<cplx> transform_core(const RayQuadrature& Q, const std::vector<cplx>& field, Weight&& w,
                                 unsigned workers) {
    std::vector<cplx> out(Q.n_rays());
    parallel_for(Q.n_rays(), workers, [&](std::size_t r) {
        std::vector<RowEntry> row;
        ray_row(Q, r, w, row);
        cplx s = 0.0;
        for (const auto& e : row) s += e.coef * field[e.col];
        out[r] = s;
    });
    return out;
}

inline void check_fields(const RayQuadrature& Q, const ScalarField0& f, const OneForm0& a) {
    if (!f.grid.same_shape(Q.grid) || !a.grid.same_shape(Q.grid))
        throw std::invalid_argument("ray transform: field grid does not match the quadrature grid");
}

inline OneForm0 times_minus_i(const OneForm0& a) {
    OneForm0 b = a;
    for (auto& z : b.ex) z *= -I;
    for (auto& z : b.ey) z *= -I;
    return b;
}

}  // namespace detail

inline RayQuadrature build_quadrature(const MetricChart& chart, const RaySet& rays, unsigned workers = default_workers()) {
    RayQuadrature Q;
    Q.grid = chart.grid;
    Q.pieces.resize(rays.size());
    Q.exit_time.resize(rays.size());
    parallel_for(rays.size(), workers, [&](std::size_t r) {
        Q.pieces[r] = detail::split_path(chart.grid, rays.entries[r].path);
        Q.exit_time[r] = rays.entries[r].path.exit_time;
    });
    return Q;
}

/// I(f, alpha) = int f(gamma) + <alpha(gamma), gamma'> dt on every ray.
inline std::vector<cplx> xray_transform(const RayQuadrature& Q, const ScalarField0& f, const OneForm0& alpha,
                                        unsigned workers = default_workers()) {
    detail::check_fields(Q, f, alpha);
    return detail::transform_core(Q, detail::stack(f, alpha), [](double) { return 1.0; }, workers);
}

/// int [f - i alpha(gamma')] exp(-lambda t) dt.
inline std::vector<cplx> attenuated_transform(const RayQuadrature& Q, const ScalarField0& f, const OneForm0& alpha,
                                              double lambda, unsigned workers = default_workers()) {
    detail::check_fields(Q, f, alpha);
    return detail::transform_core(Q, detail::stack(f, detail::times_minus_i(alpha)),
                                  [lambda](double t) { return std::exp(-lambda * t); }, workers);
}

/// int [f - i alpha(gamma')] t^k dt.
inline std::vector<cplx> moment_transform(const RayQuadrature& Q, const ScalarField0& f, const OneForm0& alpha, int k,
                                          unsigned workers = default_workers()) {
    if (k < 0) throw std::invalid_argument("moment_transform: k must be nonnegative");
    detail::check_fields(Q, f, alpha);
    return detail::transform_core(Q, detail::stack(f, detail::times_minus_i(alpha)),
                                  [k](double t) { return std::pow(t, k); }, workers);
}

inline std::vector<cplx> xray_transform(const MetricChart& chart, const ScalarField0& f, const OneForm0& alpha,
                                        const RaySet& rays) {
    return xray_transform(build_quadrature(chart, rays), f, alpha);
}

inline std::vector<cplx> attenuated_transform(const MetricChart& chart, const ScalarField0& f, const OneForm0& alpha,
                                              const RaySet& rays, double lambda) {
    return attenuated_transform(build_quadrature(chart, rays), f, alpha, lambda);
}

inline std::vector<cplx> moment_transform(const MetricChart& chart, const ScalarField0& f, const OneForm0& alpha,
                                          const RaySet& rays, int k) {
    return moment_transform(build_quadrature(chart, rays), f, alpha, k);
}

// ------------------------------------------------------------ inversion

enum class InversionMode { plain, attenuated };

struct InversionOptions {
    InversionMode mode = InversionMode::plain;
    double lambda = 0.0;
    double reg = -1.0;              // < 0: reg_scale times the largest function-column norm squared
    double reg_scale = 1e-6;
    bool function_only = false;     // constrain alpha = 0
    double tol = 1e-9;              // relative residual of the normal equations
    double support_radius = -1.0;   // < 0: every node of a cell meeting the chart domain
    unsigned workers = default_workers();
};

struct InversionResult {
    ScalarField0 f;
    OneForm0 alpha;
    TwoForm0 stream;  // psi on cells, alpha = W1^{-1} C^T W2 psi
    SolveReport report;
    double reg = 0.0;
    double data_residual = 0.0;  // relative
    std::size_t n_unknowns = 0;
};

/// Unknown layout for the Coulomb-constrained inversion: nodes and cells
/// strictly inside the support region, stream potential on the cells.
struct InversionSpace {
    Grid2 grid;
    std::vector<std::uint32_t> nodes;
    std::vector<std::uint32_t> cells;
    Eigen::SparseMatrix<double> S;  // cells -> combined edge vector [ex, ey]

    InversionSpace(const MetricChart& chart, double radius, bool with_stream) : grid(chart.grid) {
        const Grid2& g = grid;
        auto in = [&](Vec2 x) {
            if (chart.kind == DomainKind::disk) return norm(x) < radius;
            return std::max(std::abs(x.x), std::abs(x.y)) < radius;
        };
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                if (in(g.node_pos(i, j))) nodes.push_back(std::uint32_t(g.node(i, j)));
        if (!with_stream) return;
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i)
                if (in(g.cell_pos(i, j))) cells.push_back(std::uint32_t(g.cell(i, j)));
        const HodgeWeights2 w(chart);
        const std::size_t nxe = g.n_xedges(), ne = nxe + g.n_yedges();
        S.resize(Eigen::Index(ne), Eigen::Index(cells.size()));
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const int i = int(cells[c] % (g.nx - 1)), j = int(cells[c] / (g.nx - 1));
            const double wc = w.cell[cells[c]] / g.h;
            OneForm0 ct = OneForm0::zeros(g);
            // C^T W2 e_cell
            ct.ey[g.yedge(i + 1, j)] += wc;
            ct.ey[g.yedge(i, j)] -= wc;
            ct.ex[g.xedge(i, j + 1)] -= wc;
            ct.ex[g.xedge(i, j)] += wc;
            const OneForm0 a = w.diagonal ? OneForm0{} : w.apply_inverse(ct);
            if (w.diagonal) {
                auto put_x = [&](int ii, int jj, double s) {
                    trip.emplace_back(Eigen::Index(g.xedge(ii, jj)), Eigen::Index(c), s / w.xedge[g.xedge(ii, jj)]);
                };
                auto put_y = [&](int ii, int jj, double s) {
                    trip.emplace_back(Eigen::Index(nxe + g.yedge(ii, jj)), Eigen::Index(c),
                                      s / w.yedge[g.yedge(ii, jj)]);
                };
                put_y(i + 1, j, wc);
                put_y(i, j, -wc);
                put_x(i, j + 1, -wc);
                put_x(i, j, wc);
            } else {
                for (std::size_t e = 0; e < nxe; ++e)
                    if (std::abs(a.ex[e]) > 1e-14 * max_abs(a.ex))
                        trip.emplace_back(Eigen::Index(e), Eigen::Index(c), a.ex[e].real());
                for (std::size_t e = 0; e < g.n_yedges(); ++e)
                    if (std::abs(a.ey[e]) > 1e-14 * max_abs(a.ey))
                        trip.emplace_back(Eigen::Index(nxe + e), Eigen::Index(c), a.ey[e].real());
            }
        }
        S.setFromTriplets(trip.begin(), trip.end());
        (void)ne;
    }

    std::size_t n_f() const { return nodes.size(); }
    std::size_t n_psi() const { return cells.size(); }
};

/// alpha = W1^{-1} C^T W2 psi for a cell field psi: the discrete analogue of
/// the rotated gradient of a stream function, divergence free by construction.
inline OneForm0 stream_to_form(const TwoForm0& psi, const MetricChart& chart) {
    const Grid2& g = psi.grid;
    const HodgeWeights2 w(chart);
    OneForm0 ct = OneForm0::zeros(g);
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            const cplx p = psi.c[g.cell(i, j)] * w.cell[g.cell(i, j)] / g.h;
            ct.ey[g.yedge(i + 1, j)] += p;
            ct.ey[g.yedge(i, j)] -= p;
            ct.ex[g.xedge(i, j + 1)] -= p;
            ct.ex[g.xedge(i, j)] += p;
        }
    return w.apply_inverse(ct);
}

namespace detail {

template <class Weight>
Eigen::SparseMatrix<double, Eigen::RowMajor> ray_matrix(const RayQuadrature& Q, Weight&& w,
                                                        const std::vector<double>& row_scale, unsigned workers) {
    std::vector<std::vector<RowEntry>> rows(Q.n_rays());
    parallel_for(Q.n_rays(), workers, [&](std::size_t r) { ray_row(Q, r, w, rows[r]); });
    std::vector<Eigen::Triplet<double>> trip;
    std::size_t nnz = 0;
    for (const auto& r : rows) nnz += r.size();
    trip.reserve(nnz);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& e : rows[r]) trip.emplace_back(Eigen::Index(r), Eigen::Index(e.col), e.coef * row_scale[r]);
    Eigen::SparseMatrix<double, Eigen::RowMajor> T(Eigen::Index(Q.n_rays()), Eigen::Index(Q.n_unknowns()));
    T.setFromTriplets(trip.begin(), trip.end());
    return T;
}

/// Symmetric positive definite solve of the dense normal equations:
/// Jacobi scaling, Cholesky, iterative refinement, and power-iteration
/// estimates of the extreme eigenvalues for the condition report.
inline Eigen::VectorXcd solve_normal(const Eigen::MatrixXd& N, const Eigen::VectorXcd& rhs, double tol,
                                     SolveReport& rep) {
    const Eigen::Index n = N.rows();
    Eigen::VectorXd s(n);
    for (Eigen::Index k = 0; k < n; ++k) s[k] = N(k, k) > 0.0 ? 1.0 / std::sqrt(N(k, k)) : 1.0;
    const Eigen::MatrixXd Ns = s.asDiagonal() * N * s.asDiagonal();
    const Eigen::LLT<Eigen::MatrixXd> llt(Ns);
    rep = SolveReport{};
    if (llt.info() != Eigen::Success) {
        rep.condition = std::numeric_limits<double>::infinity();
        rep.rel_residual = 1.0;
        return Eigen::VectorXcd::Zero(n);
    }
    auto solve = [&](const Eigen::VectorXcd& b) {
        const Eigen::VectorXd re = b.real(), im = b.imag();
        Eigen::VectorXcd y(n);
        y.real() = llt.solve(re);
        y.imag() = llt.solve(im);
        return y;
    };
    auto mul = [&](const Eigen::VectorXcd& v) {
        const Eigen::VectorXd re = v.real(), im = v.imag();
        Eigen::VectorXcd y(n);
        y.real() = Ns * re;
        y.imag() = Ns * im;
        return y;
    };
    const Eigen::VectorXcd bs = s.cast<cplx>().cwiseProduct(rhs);
    const double bn = bs.norm();
    Eigen::VectorXcd y = solve(bs);
    double rr = bn > 0.0 ? (mul(y) - bs).norm() / bn : 0.0;
    int it = 0;
    while (rr > tol && it < 3) {
        y += solve(bs - mul(y));
        rr = (mul(y) - bs).norm() / bn;
        ++it;
    }
    // extreme eigenvalues of the scaled matrix
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized(), w = v;
    double lmax = 1.0, lmin_inv = 1.0;
    for (int k = 0; k < 40; ++k) {
        const Eigen::VectorXd nv = Ns * v;
        lmax = nv.norm();
        v = nv / lmax;
        const Eigen::VectorXd nw = llt.solve(w);
        lmin_inv = nw.norm();
        w = nw / lmin_inv;
    }
    rep.iterations = it;
    rep.rel_residual = rr;
    rep.converged = rr <= std::max(tol, 1e-12);
    rep.condition = lmax * lmin_inv;
    return s.cast<cplx>().cwiseProduct(y);
}

}  // namespace detail

/// Regularized least squares for (f, alpha) with alpha parametrized by a
/// stream potential so that d*alpha = 0 holds by construction. The normal
/// equations are assembled densely and solved by a scaled Cholesky factorization.
inline InversionResult invert_transform(const std::vector<cplx>& values, const RayQuadrature& Q,
                                        const MetricChart& chart, const InversionOptions& opt = {}) {
    if (Q.n_rays() == 0) throw ConfigError("invert_transform: empty ray set");
    if (values.size() != Q.n_rays()) throw std::invalid_argument("invert_transform: data size does not match rays");
    const Grid2& g = Q.grid;
    const double radius = opt.support_radius > 0.0
                              ? opt.support_radius
                              : (chart.kind == DomainKind::disk ? chart.size : 0.5 * chart.size) + 1.5 * g.h;
    const InversionSpace space(chart, radius, !opt.function_only);
    const std::size_t nf = space.n_f(), np = space.n_psi(), n = nf + np;

    const bool att = opt.mode == InversionMode::attenuated;
    const double lam = att ? opt.lambda : 0.0;
    std::vector<double> scale(Q.n_rays(), 1.0);
    if (att)
        for (std::size_t r = 0; r < Q.n_rays(); ++r) scale[r] = 1.0 / std::max(1.0, std::exp(-lam * Q.exit_time[r]));
    const auto T = att ? detail::ray_matrix(Q, [lam](double t) { return std::exp(-lam * t); }, scale, opt.workers)
                       : detail::ray_matrix(Q, [](double) { return 1.0; }, scale, opt.workers);

    // B = T P with P: (f interior, psi) -> [f, beta]
    Eigen::SparseMatrix<double> P(Eigen::Index(Q.n_unknowns()), Eigen::Index(n));
    {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t k = 0; k < nf; ++k) trip.emplace_back(Eigen::Index(space.nodes[k]), Eigen::Index(k), 1.0);
        const Eigen::Index off = Eigen::Index(g.n_nodes());
        for (int c = 0; c < space.S.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(space.S, c); it; ++it)
                trip.emplace_back(off + it.row(), Eigen::Index(nf) + c, it.value());
        P.setFromTriplets(trip.begin(), trip.end());
    }
    const Eigen::SparseMatrix<double> B = Eigen::SparseMatrix<double>(T) * P;
    Eigen::MatrixXd N = Eigen::MatrixXd(Eigen::SparseMatrix<double>(B.transpose() * B));

    double dmax = 0.0;
    for (std::size_t k = 0; k < nf; ++k) dmax = std::max(dmax, N(Eigen::Index(k), Eigen::Index(k)));
    const double reg = opt.reg >= 0.0 ? opt.reg : opt.reg_scale * dmax;
    for (std::size_t k = 0; k < nf; ++k) N(Eigen::Index(k), Eigen::Index(k)) += reg;
    if (np > 0) {
        const Eigen::MatrixXd StS = Eigen::MatrixXd(Eigen::SparseMatrix<double>(space.S.transpose() * space.S));
        N.bottomRightCorner(Eigen::Index(np), Eigen::Index(np)) += reg * StS;
    }

    Eigen::VectorXcd b(Eigen::Index(Q.n_rays()));
    for (std::size_t r = 0; r < Q.n_rays(); ++r) b[Eigen::Index(r)] = values[r] * scale[r];
    const Eigen::VectorXcd rhs = B.transpose() * b;
    InversionResult res;
    res.reg = reg;
    res.n_unknowns = n;
    const Eigen::VectorXcd xs = detail::solve_normal(N, rhs, opt.tol, res.report);
    if (!res.report.converged)
        throw NumericError("invert_transform: normal equations did not converge (condition estimate " +
                               std::to_string(res.report.condition) + ")",
                           res.report.rel_residual, res.report.condition);
    const CVec x(xs.data(), xs.data() + xs.size());

    res.f = ScalarField0::zeros(g);
    for (std::size_t k = 0; k < nf; ++k) res.f.v[space.nodes[k]] = x[k];
    res.stream = TwoForm0::zeros(g);
    for (std::size_t k = 0; k < np; ++k) res.stream.c[space.cells[k]] = x[nf + k];
    res.alpha = OneForm0::zeros(g);
    if (np > 0) {
        Eigen::VectorXcd psi{Eigen::Index(np)};
        for (std::size_t k = 0; k < np; ++k) psi[Eigen::Index(k)] = x[nf + k];
        const Eigen::VectorXcd beta = space.S * psi;
        const std::size_t nxe = g.n_xedges();
        const cplx to_alpha = att ? I : cplx(1.0);  // beta = -i alpha in attenuated mode
        for (std::size_t e = 0; e < nxe; ++e) res.alpha.ex[e] = to_alpha * beta[Eigen::Index(e)];
        for (std::size_t e = 0; e < g.n_yedges(); ++e) res.alpha.ey[e] = to_alpha * beta[Eigen::Index(nxe + e)];
    }
    {
        Eigen::Map<const Eigen::VectorXcd> xv(x.data(), Eigen::Index(n));
        const Eigen::VectorXcd r = B * xv - b;
        const double bn = b.norm();
        res.data_residual = bn > 0.0 ? r.norm() / bn : r.norm();
    }
    return res;
}

inline InversionResult invert_transform(const std::vector<cplx>& values, const RaySet& rays, const MetricChart& chart,
                                        const InversionOptions& opt = {}) {
    return invert_transform(values, build_quadrature(chart, rays, opt.workers), chart, opt);
}

// ------------------------------------------------------------ FBP oracle

/// Filtered backprojection for the Euclidean disk from fan-sampled rays,
/// with a band-limited ramp filter of cutoff `band`. Only used as an
/// independent check of the function part.
inline ScalarField0 fbp_reference(const std::vector<cplx>& values, const RaySet& rays, const MetricChart& chart,
                                  double band) {
    if (chart.kind != DomainKind::disk || !chart.flat) throw ConfigError("fbp_reference needs the Euclidean disk");
    const double R = chart.size;
    const double dth = 2.0 * pi / rays.n_points, dbeta = pi / rays.n_directions;
    auto kernel = [band](double u) {
        if (std::abs(u) * band < 1e-4) return band * band * (1.0 - (band * u) * (band * u) / 4.0);
        return 2.0 * (band * std::sin(band * u) / u + (std::cos(band * u) - 1.0) / (u * u));
    };
    const Grid2& g = chart.grid;
    ScalarField0 out = ScalarField0::zeros(g);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const Ray& ray = rays.entries[r];
        const Vec2 nin = -1.0 * chart.outward_normal(ray.x);
        const double cb = dot(nin, ray.xi);
        const double w = dth * dbeta * R * cb;
        const Vec2 n{-ray.xi.y, ray.xi.x};
        const double s = dot(ray.x, n);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec2 x = g.node_pos(i, j);
                if (norm(x) >= R) continue;
                out.at(i, j) += w * values[r] * kernel(dot(x, n) - s);
            }
    }
    for (auto& z : out.v) z /= 8.0 * pi * pi;
    return out;
}

}  // namespace cta
