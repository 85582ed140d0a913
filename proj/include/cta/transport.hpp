#pragma once

#include <unsupported/Eigen/FFT>

#include "cta/forms.hpp"

namespace cta {

/// Rectangle grid in (x1, t): x1 in [-a_ext, a_ext], t in [0, L], x1 index fastest.
struct RectGrid {
    int nx = 0;
    int nt = 0;
    double x0 = 0.0;
    double hx = 1.0;
    double ht = 1.0;

    std::size_t size() const { return std::size_t(nx) * nt; }
    std::size_t idx(int i, int k) const { return std::size_t(i) + std::size_t(nx) * k; }
    double x(int i) const { return x0 + i * hx; }
    double t(int k) const { return k * ht; }

    static RectGrid make(double a_ext, double L, int nx, int nt) {
        if (nx < 3 || nt < 3) throw ConfigError("rectangle grid needs at least 3 samples per axis");
        if (!(a_ext > 0.0) || !(L > 0.0)) throw ConfigError("rectangle extents must be positive");
        return RectGrid{nx, nt, -a_ext, 2.0 * a_ext / (nx - 1), L / (nt - 1)};
    }
};

enum class AmplitudeKind { phi1, phi2, eta, rhs, weight };

struct AmplitudeField {
    RectGrid grid;
    std::vector<cplx> values;
    AmplitudeKind which = AmplitudeKind::rhs;

    static AmplitudeField zeros(const RectGrid& g, AmplitudeKind k) { return {g, std::vector<cplx>(g.size(), 0.0), k}; }
    cplx& at(int i, int k) { return values[grid.idx(i, k)]; }
    cplx at(int i, int k) const { return values[grid.idx(i, k)]; }
};

enum class TransportSign { minus_i, plus_i };

// ------------------------------------------------------------ restriction

namespace detail {

//! position and velocity at time t by cubic Hermite interpolation of the RK4 samples
inline std::pair<Vec2, Vec2> path_state(const GeodesicPath& p, double t) {
    const auto& s = p.samples;
    if (s.size() < 2) throw InterpolationError("path_state: path has fewer than two samples");
    t = std::clamp(t, s.front().t, s.back().t);
    std::size_t k = std::size_t(std::upper_bound(s.begin(), s.end(), t, [](double v, const GeodesicSample& g) { return v < g.t; }) -
                                s.begin());
    k = std::clamp<std::size_t>(k, 1, s.size() - 1);
    const auto& a = s[k - 1];
    const auto& b = s[k];
    const double dt = b.t - a.t;
    if (dt <= 0.0) return {a.x, a.xi};
    const double u = (t - a.t) / dt, u2 = u * u, u3 = u2 * u;
    const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u, h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
    const Vec2 x = h00 * a.x + (h10 * dt) * a.xi + h01 * b.x + (h11 * dt) * b.xi;
    const double d00 = (6 * u2 - 6 * u) / dt, d10 = 3 * u2 - 4 * u + 1, d01 = (-6 * u2 + 6 * u) / dt, d11 = 3 * u2 - 2 * u;
    const Vec2 v = d00 * a.x + d10 * a.xi + d01 * b.x + d11 * b.xi;
    return {x, v};
}

//! cell containing x and local coordinates, or false outside the grid hull
inline bool locate(const Grid2& g, Vec2 x, int& i, int& j, double& u, double& v) {
    const double fx = (x.x - g.x0) / g.h, fy = (x.y - g.y0) / g.h;
    const double tol = 1e-9;
    if (fx < -tol || fy < -tol || fx > g.nx - 1 + tol || fy > g.ny - 1 + tol) return false;
    i = std::clamp(int(std::floor(fx)), 0, g.nx - 2);
    j = std::clamp(int(std::floor(fy)), 0, g.ny - 2);
    u = fx - i;
    v = fy - j;
    return true;
}

}  // namespace detail

struct RayRestriction {
    AmplitudeField a1;  // A_1(x1, gamma(t))
    AmplitudeField at;  // <A', gamma'(t)>
};

/// Restrict a product-grid 1-form to the cylinder over one geodesic.
/// Edge components are averaged onto the nodes and interpolated
/// trilinearly, so both restrictions are continuous in (x1, t). Outside
/// [-a, a] the potential is taken to vanish.
inline RayRestriction restrict_to_ray(const OneForm3& A, const GeodesicPath& path, const RectGrid& rect) {
    if (!path.nontangential) throw std::invalid_argument("restrict_to_ray: path is not nontangential");
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    RayRestriction out{AmplitudeField::zeros(rect, AmplitudeKind::rhs), AmplitudeField::zeros(rect, AmplitudeKind::rhs)};
    std::vector<std::array<cplx, 3>> nodal(G.n_nodes());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) nodal[G.node(m, g.node(i, j))] = detail::node_components(A, m, i, j);
    const double h1 = G.h1();
    for (int k = 0; k < rect.nt; ++k) {
        const auto [x, v] = detail::path_state(path, std::min(rect.t(k), path.exit_time));
        int ci, cj;
        double u, w;
        if (!detail::locate(g, x, ci, cj, u, w)) throw InterpolationError("restrict_to_ray: geodesic leaves the chart grid");
        const std::array<std::size_t, 4> corner = {g.node(ci, cj), g.node(ci + 1, cj), g.node(ci, cj + 1),
                                                   g.node(ci + 1, cj + 1)};
        const std::array<double, 4> wt = {(1 - u) * (1 - w), u * (1 - w), (1 - u) * w, u * w};
        for (int i = 0; i < rect.nx; ++i) {
            const double x1 = rect.x(i);
            if (x1 < -G.a || x1 > G.a) continue;
            const double fn = (x1 + G.a) / h1;
            const int m = std::clamp(int(std::floor(fn)), 0, G.n1 - 2);
            const double s = fn - m;
            std::array<cplx, 3> c{0.0, 0.0, 0.0};
            for (int q = 0; q < 4; ++q) {
                const auto& lo = nodal[G.node(m, corner[q])];
                const auto& hi = nodal[G.node(m + 1, corner[q])];
                for (int d = 0; d < 3; ++d) c[d] += wt[q] * ((1 - s) * lo[d] + s * hi[d]);
            }
            out.a1.at(i, k) = c[0];
            out.at.at(i, k) = c[1] * v.x + c[2] * v.y;
        }
    }
    return out;
}

//! right-hand sides of the two amplitude equations
inline AmplitudeField transport_rhs(const RayRestriction& r, AmplitudeKind which) {
    AmplitudeField out = AmplitudeField::zeros(r.a1.grid, AmplitudeKind::rhs);
    for (std::size_t n = 0; n < out.values.size(); ++n) {
        if (which == AmplitudeKind::phi1)
            out.values[n] = -I * r.a1.values[n] - r.at.values[n];
        else if (which == AmplitudeKind::phi2)
            out.values[n] = -I * std::conj(r.a1.values[n]) + std::conj(r.at.values[n]);
        else
            throw std::invalid_argument("transport_rhs: which must be phi1 or phi2");
    }
    return out;
}

// ------------------------------------------------------------ operator

/// Centered-difference (d/dx1 -+ i d/dt) at interior nodes; boundary rows are zero.
inline AmplitudeField apply_transport_operator(const AmplitudeField& phi, TransportSign sign) {
    const RectGrid& r = phi.grid;
    AmplitudeField out = AmplitudeField::zeros(r, AmplitudeKind::rhs);
    const cplx s = sign == TransportSign::minus_i ? -I : I;
    for (int k = 1; k + 1 < r.nt; ++k)
        for (int i = 1; i + 1 < r.nx; ++i)
            out.at(i, k) = (phi.at(i + 1, k) - phi.at(i - 1, k)) / (2 * r.hx) +
                           s * (phi.at(i, k + 1) - phi.at(i, k - 1)) / (2 * r.ht);
    return out;
}

//! relative L2 residual over interior nodes
inline double transport_residual(const AmplitudeField& phi, const AmplitudeField& rhs, TransportSign sign) {
    const AmplitudeField op = apply_transport_operator(phi, sign);
    const RectGrid& r = phi.grid;
    double num = 0.0, den = 0.0;
    for (int k = 1; k + 1 < r.nt; ++k)
        for (int i = 1; i + 1 < r.nx; ++i) {
            num += std::norm(op.at(i, k) - rhs.at(i, k));
            den += std::norm(rhs.at(i, k));
        }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ------------------------------------------------------------ solver

namespace detail {

inline void fft2(std::vector<cplx>& a, int nx, int ny, bool inverse) {
    Eigen::FFT<double> fft;
    for (int j = 0; j < ny; ++j) {
        std::vector<cplx> row(a.begin() + std::ptrdiff_t(j) * nx, a.begin() + std::ptrdiff_t(j + 1) * nx), res;
        if (inverse)
            fft.inv(res, row);
        else
            fft.fwd(res, row);
        std::copy(res.begin(), res.end(), a.begin() + std::ptrdiff_t(j) * nx);
    }
    for (int i = 0; i < nx; ++i) {
        std::vector<cplx> col(static_cast<std::size_t>(ny)), res;
        for (int j = 0; j < ny; ++j) col[std::size_t(j)] = a[std::size_t(i) + std::size_t(nx) * j];
        if (inverse)
            fft.inv(res, col);
        else
            fft.fwd(res, col);
        for (int j = 0; j < ny; ++j) a[std::size_t(i) + std::size_t(nx) * j] = res[std::size_t(j)];
    }
}

//! number of samples spanned by the support of rhs along each axis
inline std::pair<int, int> support_samples(const AmplitudeField& f) {
    const double m = max_abs(f.values);
    if (m == 0.0) return {0, 0};
    int i0 = f.grid.nx, i1 = -1, k0 = f.grid.nt, k1 = -1;
    for (int k = 0; k < f.grid.nt; ++k)
        for (int i = 0; i < f.grid.nx; ++i)
            if (std::abs(f.at(i, k)) > 1e-12 * m) {
                i0 = std::min(i0, i), i1 = std::max(i1, i);
                k0 = std::min(k0, k), k1 = std::max(k1, k);
            }
    return {i1 - i0 + 1, k1 - k0 + 1};
}

}  // namespace detail

/// Particular solution of the centered-difference equation
/// (d/dx1 -+ i d/dt) phi = rhs, the discrete counterpart of convolving with
/// 1/(2 pi (x1 -+ i t)).
///
/// The rhs is zero-padded to a torus of twice the rectangle's extent and
/// divided by the stencil symbol i sin(theta_x)/hx +- sin(theta_t)/ht. The
/// symbol vanishes at the four frequencies in {0, pi}^2; those components of
/// rhs are carried by the exact solutions +-(-1)^(i p + k q) x1 instead, so
/// the equation holds at every interior node up to rounding. The result
/// differs from the continuum convolution by a discrete holomorphic
/// function, which the amplitude equations leave free.
inline AmplitudeField solve_transport(const AmplitudeField& rhs, TransportSign sign,
                                      AmplitudeKind which = AmplitudeKind::phi1) {
    const RectGrid& r = rhs.grid;
    AmplitudeField out = AmplitudeField::zeros(r, which);
    const auto [sx, st] = detail::support_samples(rhs);
    if (sx == 0) return out;
    if (sx < 8 || st < 8)
        throw ConfigError("solve_transport: support spans fewer than 8 samples; refine the rectangle grid");
    const int px = 2 * (r.nx - 1), pt = 2 * (r.nt - 1);
    std::vector<cplx> F(std::size_t(px) * pt, 0.0);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) F[std::size_t(i) + std::size_t(px) * k] = rhs.at(i, k);
    detail::fft2(F, px, pt, false);
    const double st_sign = sign == TransportSign::minus_i ? 1.0 : -1.0;
    // amplitudes of the null modes (p, q) in {0, px/2} x {0, pt/2}
    std::array<cplx, 4> null{};
    for (int q = 0; q < pt; ++q)
        for (int p = 0; p < px; ++p) {
            const std::size_t n = std::size_t(p) + std::size_t(px) * q;
            const bool px0 = p == 0, pxh = 2 * p == px, qt0 = q == 0, qth = 2 * q == pt;
            if ((px0 || pxh) && (qt0 || qth)) {
                null[std::size_t(int(pxh) + 2 * int(qth))] = F[n] / double(F.size());
                F[n] = 0.0;
                continue;
            }
            const double tx = 2.0 * pi * p / px, tt = 2.0 * pi * q / pt;
            F[n] /= cplx(st_sign * std::sin(tt) / r.ht, std::sin(tx) / r.hx);
        }
    detail::fft2(F, px, pt, true);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) {
            const double ci = (i % 2) ? -1.0 : 1.0, ck = (k % 2) ? -1.0 : 1.0;
            // D(s x1) = s for s = 1 and (-1)^k, D(-(-1)^i x1) = (-1)^i, likewise for (-1)^(i+k)
            const cplx lin = null[0] + ck * null[2] - ci * null[1] - ci * ck * null[3];
            out.at(i, k) = F[std::size_t(i) + std::size_t(px) * k] + lin * r.x(i);
        }
    return out;
}

//! eta = sum_k coeffs[k] (x1 - i t)^k, a solution of the homogeneous minus-i equation
inline AmplitudeField make_eta(const RectGrid& r, int degree, const std::vector<cplx>& coeffs) {
    if (degree < 0 || degree > 6) throw std::invalid_argument("make_eta: degree must be in 0..6");
    if (coeffs.size() != std::size_t(degree) + 1) throw std::invalid_argument("make_eta: need degree + 1 coefficients");
    AmplitudeField out = AmplitudeField::zeros(r, AmplitudeKind::eta);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) {
            const cplx z(r.x(i), -r.t(k));
            cplx s = 0.0;
            for (int d = degree; d >= 0; --d) s = s * z + coeffs[std::size_t(d)];
            out.at(i, k) = s;
        }
    return out;
}

//! w = exp(-2 lambda t) eta exp(phi1 + conj(phi2)) pointwise
inline AmplitudeField pairing_weight(const AmplitudeField& phi1, const AmplitudeField& phi2, const AmplitudeField& eta,
                                     double lambda) {
    const RectGrid& r = phi1.grid;
    if (phi2.values.size() != r.size() || eta.values.size() != r.size())
        throw std::invalid_argument("pairing_weight: fields are on different grids");
    AmplitudeField out = AmplitudeField::zeros(r, AmplitudeKind::weight);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i)
            out.at(i, k) = std::exp(-2.0 * lambda * r.t(k)) * eta.at(i, k) * std::exp(phi1.at(i, k) + std::conj(phi2.at(i, k)));
    return out;
}

/// Both amplitudes for one geodesic when A1 = A2 = A.
struct AmplitudePair {
    AmplitudeField phi1, phi2;
    double residual1 = 0.0, residual2 = 0.0;
    double cancellation = 0.0;  // max |phi1 + conj phi2| / max |phi1|
};

inline AmplitudePair solve_amplitudes(const OneForm3& A, const GeodesicPath& path, int nx = 128, int nt = 128) {
    const RectGrid rect = RectGrid::make(2.0 * A.grid.a, path.exit_time, nx, nt);
    const RayRestriction res = restrict_to_ray(A, path, rect);
    const AmplitudeField r1 = transport_rhs(res, AmplitudeKind::phi1), r2 = transport_rhs(res, AmplitudeKind::phi2);
    AmplitudePair out{solve_transport(r1, TransportSign::minus_i, AmplitudeKind::phi1),
                      solve_transport(r2, TransportSign::plus_i, AmplitudeKind::phi2)};
    out.residual1 = transport_residual(out.phi1, r1, TransportSign::minus_i);
    out.residual2 = transport_residual(out.phi2, r2, TransportSign::plus_i);
    double num = 0.0;
    for (std::size_t n = 0; n < rect.size(); ++n) num = std::max(num, std::abs(out.phi1.values[n] + std::conj(out.phi2.values[n])));
    const double den = max_abs(out.phi1.values);
    out.cancellation = den > 0.0 ? num / den : num;
    return out;
}

}  // namespace cta
