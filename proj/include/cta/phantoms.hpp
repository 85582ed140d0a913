#pragma once

#include <random>

#include "cta/xray.hpp"

namespace cta {

/// Deterministic uniform doubles in [0, 1) from the raw 64-bit engine
/// output, so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 eng_;
};

/// Smooth compactly supported bump amp * exp(1 - 1/(1 - r^2/rho^2)).
struct Bump2 {
    Vec2 center{0.0, 0.0};
    double radius = 0.5;
    double amp = 1.0;

    double operator()(Vec2 x) const {
        const double s = r2(x);
        if (s >= 1.0) return 0.0;
        return amp * std::exp(1.0 - 1.0 / (1.0 - s));
    }

    Vec2 grad(Vec2 x) const {
        const double s = r2(x);
        if (s >= 1.0) return {0.0, 0.0};
        const double f = (*this)(x);
        const double ds = -f / ((1.0 - s) * (1.0 - s));  // d f / d s
        const double k = 2.0 / (radius * radius);
        return {ds * k * (x.x - center.x), ds * k * (x.y - center.y)};
    }

    double r2(Vec2 x) const {
        const double dx = x.x - center.x, dy = x.y - center.y;
        return (dx * dx + dy * dy) / (radius * radius);
    }
};

/// Profile in x1: a Gaussian of standard deviation `width`, or with
/// `compact` set the bump exp(1 - 1/(1 - x^2/width^2)) supported in |x| < width.
struct Profile1 {
    double center = 0.0;
    double width = 1.0;
    double amp = 1.0;
    bool compact = false;

    double operator()(double x) const {
        const double u = (x - center) / width;
        if (!compact) return amp * std::exp(-0.5 * u * u);
        if (std::abs(u) >= 1.0) return 0.0;
        return amp * std::exp(1.0 - 1.0 / (1.0 - u * u));
    }
    double deriv(double x) const {
        const double u = (x - center) / width;
        if (!compact) return -u / width * (*this)(x);
        if (std::abs(u) >= 1.0) return 0.0;
        return -2.0 * u / (width * (1.0 - u * u) * (1.0 - u * u)) * (*this)(x);
    }
    //! continuum Fourier transform int exp(-i l x) g(x) dx (Gaussian only)
    cplx hat(double l) const {
        if (compact) throw std::logic_error("Profile1::hat: no closed form for the compact profile");
        return amp * width * std::sqrt(2.0 * pi) * std::exp(-0.5 * l * l * width * width) * std::exp(-I * l * center);
    }
    //! half-width of the region where the profile is not negligible
    double extent() const { return compact ? width : 6.0 * width; }
};

// ------------------------------------------------------------ sampling

template <class Fn>
ScalarField0 sample_nodes(const Grid2& g, Fn&& fn) {
    ScalarField0 out = ScalarField0::zeros(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) out.at(i, j) = fn(g.node_pos(i, j));
    return out;
}

template <class Fn>
TwoForm0 sample_cells(const Grid2& g, Fn&& fn) {
    TwoForm0 out = TwoForm0::zeros(g);
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) out.c[g.cell(i, j)] = fn(g.cell_pos(i, j));
    return out;
}

namespace detail {
inline constexpr std::array<double, 3> g3_x = {0.1127016653792583, 0.5, 0.8872983346207417};
inline constexpr std::array<double, 3> g3_w = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
}  // namespace detail

/// Edge averages of an analytic covector field (3-point Gauss along each edge).
template <class Fn>
OneForm0 sample_edges(const Grid2& g, Fn&& fn) {
    OneForm0 out = OneForm0::zeros(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            cplx s = 0.0;
            for (int q = 0; q < 3; ++q) s += detail::g3_w[q] * cplx(fn(g.node_pos(i, j) + Vec2{detail::g3_x[q] * g.h, 0.0})[0]);
            out.ex[g.xedge(i, j)] = s;
        }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            cplx s = 0.0;
            for (int q = 0; q < 3; ++q) s += detail::g3_w[q] * cplx(fn(g.node_pos(i, j) + Vec2{0.0, detail::g3_x[q] * g.h})[1]);
            out.ey[g.yedge(i, j)] = s;
        }
    return out;
}

template <class Fn>
ScalarField3 sample_nodes3(const Grid3& G, Fn&& fn) {
    ScalarField3 out = ScalarField3::zeros(G);
    const Grid2& g = G.chart;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) out.v[G.node(m, g.node(i, j))] = fn(G.x1(m), g.node_pos(i, j));
    return out;
}

//! n random bumps inside the disk of radius rmax, each vanishing near the boundary
inline std::vector<Bump2> random_bumps(Rng& rng, int n, double rmax) {
    std::vector<Bump2> out;
    for (int k = 0; k < n; ++k) {
        Bump2 b;
        b.radius = rng.uniform(0.15, 0.4) * rmax;
        const double r = rng.uniform(0.0, rmax - b.radius);
        const double th = rng.uniform(0.0, 2.0 * pi);
        b.center = {r * std::cos(th), r * std::sin(th)};
        b.amp = rng.uniform(-1.0, 1.0);
        out.push_back(b);
    }
    return out;
}

// ------------------------------------------------------------ 3-D phantoms

/// Product-grid potentials built from analytic pieces.
namespace phantoms {

//! phi0(x1, x') = g(x1) b(x') sampled at nodes
inline ScalarField3 product_scalar(const Grid3& G, const Profile1& g1, const Bump2& b) {
    return sample_nodes3(G, [&](double x1, Vec2 x) { return cplx(g1(x1) * b(x)); });
}

//! exact discrete gradient d(phi0): the gauge-trivial difference potential
inline OneForm3 gradient(const Grid3& G, const Profile1& g1, const Bump2& b) {
    return exterior_d(product_scalar(G, g1, b));
}

/// Transversally Coulomb potential: A1 = edge average of g1(x1) b1(x'),
/// A'(x1, .) = g2(x1) W1^{-1} C^T psi with psi = b2 sampled at cells.
inline OneForm3 coulomb(const Grid3& G, const MetricChart& chart, const Profile1& g1, const Bump2& b1, const Profile1& g2,
                        const Bump2& b2) {
    const Grid2& g = G.chart;
    OneForm3 A = OneForm3::zeros(G);
    const double h1 = G.h1();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.node(i, j);
            const double bv = b1(g.node_pos(i, j));
            for (int m = 0; m + 1 < G.n1; ++m) {
                double s = 0.0;
                for (int q = 0; q < 3; ++q) s += detail::g3_w[q] * g1(G.x1(m) + detail::g3_x[q] * h1);
                A.a1[G.e1(m, k)] = s * bv;
            }
        }
    const OneForm0 sol = stream_to_form(sample_cells(g, [&](Vec2 x) { return cplx(b2(x)); }), chart);
    for (int m = 0; m < G.n1; ++m) {
        const double s = g2(G.x1(m));
        for (std::size_t e = 0; e < g.n_xedges(); ++e) A.a2[G.e2(m, e)] = s * sol.ex[e];
        for (std::size_t e = 0; e < g.n_yedges(); ++e) A.a3[G.e3(m, e)] = s * sol.ey[e];
    }
    return A;
}

}  // namespace phantoms

}  // namespace cta
