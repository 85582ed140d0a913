#pragma once

#include "cta/phantoms.hpp"
#include "cta/xray.hpp"

namespace cta {

// Reduction in x1 uses the transform  f(lambda, x') = int exp(-i lambda x1) F(x1, x') dx1,
// evaluated by the trapezoid rule on the x1 samples of a field supported in
// (-a, a). Node fields use the node positions. Edge fields (the A1 part of a
// 1-form) hold averages over x1-edges, so their sums carry an extra factor
// sinc(lambda h1 / 2) that is divided out. With this correction an exact
// discrete gradient d(phi) reduces to (i lambda phi^, d' phi^) exactly.

/// Data not covered by the vanishing theorem that the certification needs.
struct CertificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-lambda slices f(lambda, .) and alpha(lambda, .) of a product-grid field.
struct FourierSlices {
    std::vector<double> lambda_grid;
    std::vector<ScalarField0> f_slices;
    std::vector<OneForm0> alpha_slices;

    std::size_t size() const { return lambda_grid.size(); }

    //! largest |s(-lambda) - conj s(lambda)| over mirrored grid pairs and all entries
    double conjugate_symmetry_defect() const {
        double m = 0.0;
        const std::size_t n = lambda_grid.size();
        for (std::size_t l = 0; l < n; ++l) {
            const std::size_t k = n - 1 - l;
            if (std::abs(lambda_grid[l] + lambda_grid[k]) > 1e-12 * (1.0 + std::abs(lambda_grid[l]))) continue;
            auto cmp = [&](const std::vector<cplx>& a, const std::vector<cplx>& b) {
                for (std::size_t e = 0; e < a.size(); ++e) m = std::max(m, std::abs(b[e] - std::conj(a[e])));
            };
            cmp(f_slices[l].v, f_slices[k].v);
            cmp(alpha_slices[l].ex, alpha_slices[k].ex);
            cmp(alpha_slices[l].ey, alpha_slices[k].ey);
        }
        return m;
    }
};

//! x / sin(x), continued by 1 at x = 0
inline double inverse_sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 + x * x / 6.0 : x / std::sin(x); }

/// Symmetric DFT frequency grid 2 pi k / (2a), |k| <= (n - 1) / 2. The
/// largest frequency must stay within half the Nyquist limit pi n1 / (4a).
inline std::vector<double> dft_lambda_grid(const Grid3& G, int n) {
    if (n < 1 || n % 2 == 0) throw ConfigError("lambda grid needs an odd number of points (got " + std::to_string(n) + ")");
    const int K = (n - 1) / 2;
    const double dl = pi / G.a;
    const double lmax = 0.5 * pi * G.n1 / (2.0 * G.a);
    if (K * dl > lmax * (1.0 + 1e-12))
        throw ConfigError("lambda grid of " + std::to_string(n) + " points exceeds half the Nyquist limit for n1 = " +
                          std::to_string(G.n1));
    std::vector<double> out;
    for (int k = -K; k <= K; ++k) out.push_back(k * dl);
    return out;
}

namespace detail {

inline void check_x1_support(const std::vector<cplx>& v, int n1, int last, const char* what) {
    double big = 0.0, ends = 0.0;
    for (std::size_t e = 0; e < v.size(); ++e) {
        big = std::max(big, std::abs(v[e]));
        const int m = int(e % std::size_t(n1));
        if (m == 0 || m == last) ends = std::max(ends, std::abs(v[e]));
    }
    if (ends > 1e-12 * std::max(big, 1e-300))
        throw ConfigError(std::string("fourier_reduce: ") + what +
                          " is nonzero at the x1 ends; the field must be supported inside (-a, a)");
}

//! h sum_m exp(-i lambda x_m) v[m + stride k] for each transversal index k
inline std::vector<cplx> x1_transform(const std::vector<cplx>& v, int stride, int count, double x0, double h,
                                      double lambda) {
    std::vector<cplx> ph(static_cast<std::size_t>(count));
    for (int m = 0; m < count; ++m) ph[std::size_t(m)] = h * std::exp(-I * lambda * (x0 + m * h));
    const std::size_t nk = v.size() / std::size_t(stride);
    std::vector<cplx> out(nk, 0.0);
    for (std::size_t k = 0; k < nk; ++k) {
        cplx s = 0.0;
        const cplx* row = v.data() + k * std::size_t(stride);
        for (int m = 0; m < count; ++m) s += ph[std::size_t(m)] * row[m];
        out[k] = s;
    }
    return out;
}

}  // namespace detail

/// Slices of a scalar field (alpha slices are zero).
inline FourierSlices fourier_reduce(const ScalarField3& F, const std::vector<double>& lambdas) {
    const Grid3& G = F.grid;
    detail::check_x1_support(F.v, G.n1, G.n1 - 1, "scalar field");
    FourierSlices out;
    out.lambda_grid = lambdas;
    for (double l : lambdas) {
        ScalarField0 f = ScalarField0::zeros(G.chart);
        f.v = detail::x1_transform(F.v, G.n1, G.n1, -G.a, G.h1(), l);
        out.f_slices.push_back(std::move(f));
        out.alpha_slices.push_back(OneForm0::zeros(G.chart));
    }
    return out;
}

/// Slices of a 1-form: f from the x1 component, alpha from the transversal ones.
inline FourierSlices fourier_reduce(const OneForm3& A, const std::vector<double>& lambdas) {
    const Grid3& G = A.grid;
    detail::check_x1_support(A.a1, G.n1 - 1, G.n1 - 2, "x1 component");
    detail::check_x1_support(A.a2, G.n1, G.n1 - 1, "transversal component");
    detail::check_x1_support(A.a3, G.n1, G.n1 - 1, "transversal component");
    const double h = G.h1();
    FourierSlices out;
    out.lambda_grid = lambdas;
    for (double l : lambdas) {
        ScalarField0 f = ScalarField0::zeros(G.chart);
        f.v = detail::x1_transform(A.a1, G.n1 - 1, G.n1 - 1, -G.a + 0.5 * h, h, l);
        const double c = inverse_sinc(0.5 * l * h);
        for (auto& z : f.v) z *= c;
        OneForm0 al = OneForm0::zeros(G.chart);
        al.ex = detail::x1_transform(A.a2, G.n1, G.n1, -G.a, h, l);
        al.ey = detail::x1_transform(A.a3, G.n1, G.n1, -G.a, h, l);
        out.f_slices.push_back(std::move(f));
        out.alpha_slices.push_back(std::move(al));
    }
    return out;
}

template <class Field>
FourierSlices fourier_reduce(const Field& F, int n_lambda = 17) {
    return fourier_reduce(F, dft_lambda_grid(F.grid, n_lambda));
}

// ------------------------------------------------------------ Taylor data

/// lambda-derivatives at 0 of the slices, orders 0..L: exact derivatives of
/// the discrete sums including the sinc correction on the x1 component.
struct TaylorData {
    std::vector<ScalarField0> f;   // d^l f(0, .)
    std::vector<OneForm0> alpha;   // d^l alpha(0, .)
};

namespace detail {

//! h sum_m (-i x_m)^l v[m + stride k]
inline std::vector<cplx> x1_moment(const std::vector<cplx>& v, int stride, int count, double x0, double h, int l) {
    std::vector<cplx> w(static_cast<std::size_t>(count));
    for (int m = 0; m < count; ++m) w[std::size_t(m)] = h * std::pow(-I * (x0 + m * h), l);
    const std::size_t nk = v.size() / std::size_t(stride);
    std::vector<cplx> out(nk, 0.0);
    for (std::size_t k = 0; k < nk; ++k) {
        cplx s = 0.0;
        for (int m = 0; m < count; ++m) s += w[std::size_t(m)] * v[k * std::size_t(stride) + std::size_t(m)];
        out[k] = s;
    }
    return out;
}

//! j-th derivative at 0 of lambda -> inverse_sinc(lambda h / 2), j <= 8
inline double inverse_sinc_derivative(int j, double h) {
    // z / sin z = 1 + z^2/6 + 7 z^4/360 + 31 z^6/15120 + 127 z^8/604800 + ...
    static constexpr double c[5] = {1.0, 1.0 / 6.0, 7.0 / 360.0, 31.0 / 15120.0, 127.0 / 604800.0};
    if (j > 8) throw std::invalid_argument("inverse_sinc_derivative: order above 8");
    if (j % 2) return 0.0;
    return std::tgamma(j + 1.0) * c[j / 2] * std::pow(0.5 * h, j);
}

inline double binom(int n, int k) { return std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)); }

}  // namespace detail

inline TaylorData taylor_data(const OneForm3& A, int order_max) {
    const Grid3& G = A.grid;
    const double h = G.h1();
    TaylorData t;
    std::vector<std::vector<cplx>> raw;
    for (int l = 0; l <= order_max; ++l) raw.push_back(detail::x1_moment(A.a1, G.n1 - 1, G.n1 - 1, -G.a + 0.5 * h, h, l));
    for (int l = 0; l <= order_max; ++l) {
        ScalarField0 f = ScalarField0::zeros(G.chart);
        for (int j = 0; j <= l; j += 2) {
            const double c = detail::binom(l, j) * detail::inverse_sinc_derivative(j, h);
            detail::add_scaled(f.v, raw[std::size_t(l - j)], c);
        }
        OneForm0 al = OneForm0::zeros(G.chart);
        al.ex = detail::x1_moment(A.a2, G.n1, G.n1, -G.a, h, l);
        al.ey = detail::x1_moment(A.a3, G.n1, G.n1, -G.a, h, l);
        t.f.push_back(std::move(f));
        t.alpha.push_back(std::move(al));
    }
    return t;
}

//! d^l/dlambda^l of the attenuated data at lambda = 0, assembled from moment transforms
inline std::vector<cplx> lambda_derivative_from_moments(const TaylorData& t, const RayQuadrature& Q, int l,
                                                        unsigned workers = default_workers()) {
    std::vector<cplx> out(Q.n_rays(), 0.0);
    for (int k = 0; k <= l; ++k) {
        const double c = detail::binom(l, k) * ((l - k) % 2 ? -1.0 : 1.0);
        detail::add_scaled(out, moment_transform(Q, t.f[std::size_t(k)], t.alpha[std::size_t(k)], l - k, workers), c);
    }
    return out;
}

// ------------------------------------------------------------ synthesis

/// D(lambda, ray) = int [f(lambda) - i alpha(lambda)(gamma')] exp(-lambda t) dt.
inline Sinogram synthesize_data(const OneForm3& A, const RayQuadrature& Q, const std::vector<double>& lambdas,
                                unsigned workers = default_workers()) {
    const FourierSlices s = fourier_reduce(A, lambdas);
    Sinogram D;
    D.lambda_grid = lambdas;
    for (std::size_t l = 0; l < s.size(); ++l)
        D.values.push_back(attenuated_transform(Q, s.f_slices[l], s.alpha_slices[l], lambdas[l], workers));
    D.metadata["kind"] = "magnetic";
    D.metadata["fourier_kernel"] = "exp(-i lambda x1), trapezoid in x1";
    return D;
}

//! q~ c sampled on the product grid
inline ScalarField3 weighted_potential(const ScalarField3& q, const MetricChart& chart) {
    const Grid3& G = q.grid;
    ScalarField3 out = q;
    const Grid2& g = G.chart;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) out.v[G.node(m, g.node(i, j))] *= chart.conformal(G.x1(m), g.node_pos(i, j));
    return out;
}

/// D_q(lambda, ray) = int exp(-lambda t) (q~ c)^(lambda, gamma(t)) dt. The
/// attenuation and the Fourier variable share lambda (the 2 lambda -> lambda
/// substitution of the electric step).
inline Sinogram synthesize_q_data(const ScalarField3& q, const MetricChart& chart, const RayQuadrature& Q,
                                  const std::vector<double>& lambdas, unsigned workers = default_workers()) {
    const FourierSlices s = fourier_reduce(weighted_potential(q, chart), lambdas);
    Sinogram D;
    D.lambda_grid = lambdas;
    const OneForm0 zero = OneForm0::zeros(chart.grid);
    for (std::size_t l = 0; l < s.size(); ++l)
        D.values.push_back(attenuated_transform(Q, s.f_slices[l], zero, lambdas[l], workers));
    D.metadata["kind"] = "electric";
    D.metadata["fourier_kernel"] = "exp(-i lambda x1), trapezoid in x1";
    D.metadata["lambda_convention"] = "attenuation and Fourier variable coincide after 2 lambda -> lambda";
    return D;
}

// ------------------------------------------------------------ reports

struct LambdaDiagnostics {
    double lambda = 0.0;
    double condition = 0.0;
    double data_residual = 0.0;
    double reg = 0.0;
};

struct RecoveryReport {
    std::map<std::string, double> metrics;
    std::vector<LambdaDiagnostics> per_lambda;
    std::vector<ScalarField0> p;   // gauge potentials p_l (certification)
    ScalarField3 phi;              // antiderivative potential (certification)
    OneForm3 A;                    // reconstructed potential (reconstruction)
    TwoForm3 dA;                   // its exterior derivative
    ScalarField3 q;                // reconstructed q~
};

namespace detail {

//! nodes of the product domain [-a, a] x (chart domain) lying on its boundary
inline std::vector<std::size_t> domain_boundary_nodes(const Grid3& G, const MetricChart& chart) {
    const Grid2& g = G.chart;
    std::vector<std::uint8_t> in(g.n_nodes(), 0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) in[g.node(i, j)] = chart.inside(g.node_pos(i, j));
    std::vector<std::size_t> out;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.node(i, j);
            if (!in[k]) continue;
            const bool edge = i == 0 || j == 0 || i == g.nx - 1 || j == g.ny - 1 || !in[g.node(i - 1, j)] ||
                              !in[g.node(i + 1, j)] || !in[g.node(i, j - 1)] || !in[g.node(i, j + 1)];
            for (int m = 0; m < G.n1; ++m)
                if (edge || m == 0 || m == G.n1 - 1) out.push_back(G.node(m, k));
        }
    return out;
}

inline double rel_l2(const std::vector<cplx>& got, const std::vector<cplx>& want) {
    const double n = l2(want);
    return n > 0.0 ? l2_diff(got, want) / n : l2(got);
}

inline double form_l2(const OneForm3& A) {
    const double a = l2(A.a1), b = l2(A.a2), c = l2(A.a3);
    return std::sqrt(a * a + b * b + c * c);
}

inline OneForm0 times(cplx s, OneForm0 a) {
    for (auto& z : a.ex) z *= s;
    for (auto& z : a.ey) z *= s;
    return a;
}

}  // namespace detail

// ------------------------------------------------------------ certification

struct CertifyOptions {
    int order_max = 4;
    double vanishing_tol = -1.0;  // < 0: 1e-4 * max|A~| * diam
    unsigned workers = default_workers();
};

/// Run the uniqueness recursion on data that should vanish identically.
/// For l = 0..L the Taylor data (d^l f(0), d^l alpha(0)) of the reference
/// potential are tested against the kernel of the plain transform: the pair
/// (d^l f(0) + l p_{l-1}, d^l alpha(0)) has plain transform zero, its
/// inversion returns zero, and p_l is the Dirichlet-Poisson solution with
/// d^l alpha(0) = i dp_l. phi is then built as the x1-antiderivative of A~_1
/// and shifted by its mean boundary value.
inline RecoveryReport certify_uniqueness(const Sinogram& D, const RayQuadrature& Q, const MetricChart& chart,
                                         const OneForm3& A, const CertifyOptions& opt = {}) {
    const Grid3& G = A.grid;
    if (opt.order_max < 0) throw ConfigError("certify_uniqueness: order_max must be nonnegative");
    if (D.n_rays() != Q.n_rays()) throw std::invalid_argument("certify_uniqueness: sinogram and rays differ");
    const double amax = std::max({max_abs(A.a1), max_abs(A.a2), max_abs(A.a3)});
    const double tol = opt.vanishing_tol >= 0.0 ? opt.vanishing_tol : 1e-4 * amax * chart.diameter();
    RecoveryReport rep;
    const double dmax = D.max_abs();
    rep.metrics["data_max_abs"] = dmax;
    rep.metrics["vanishing_tolerance"] = tol;
    if (dmax > tol)
        throw CertificationError("certify_uniqueness: data do not vanish (max |D| = " + std::to_string(dmax) +
                                 " > " + std::to_string(tol) + "); the input is not a gauge-trivial difference");

    const TaylorData t = taylor_data(A, opt.order_max);
    const HodgeWeights2 w(chart);
    double worst_kernel = 0.0, worst_alpha = 0.0, worst_f = 0.0, worst_rel = 0.0;
    for (int l = 0; l <= opt.order_max; ++l) {
        const auto L = std::size_t(l);
        const std::string tag = "order" + std::to_string(l) + "_";
        // the recursion's function part
        ScalarField0 F = t.f[L];
        if (l > 0) detail::add_scaled(F.v, rep.p[L - 1].v, double(l));
        // floored by the size an x1 moment of A~_1 can reach, so exact zeros do not produce 0/0
        const double fscale = std::max({max_abs(t.f[L].v), l > 0 ? double(l) * max_abs(rep.p[L - 1].v) : 0.0,
                                        max_abs(A.a1) * std::pow(G.a, double(l + 1))});
        // moment relation: the l-th lambda-derivative of the data
        const auto dl = lambda_derivative_from_moments(t, Q, l, opt.workers);
        // plain transform of the recursion pair and its inversion
        const auto g = xray_transform(Q, F, detail::times(-I, t.alpha[L]), opt.workers);
        InversionResult inv;
        try {
            InversionOptions io;
            io.workers = opt.workers;
            inv = invert_transform(g, Q, chart, io);
        } catch (const NumericError& e) {
            throw NumericError("certify_uniqueness: inversion failed at order " + std::to_string(l) + ": " + e.what(),
                               e.residual, e.condition);
        }
        // the 1-form part is a gradient: -i alpha_l = d p_l
        SolveReport srep;
        ScalarField0 pl = solve_gauge(detail::times(-I, t.alpha[L]), w, {}, &srep);
        for (auto& z : pl.v) z = -z;
        const OneForm0 idp = detail::times(I, exterior_d(pl));
        const double an = std::max(max_abs(t.alpha[L].ex), max_abs(t.alpha[L].ey));
        const double ares = std::max(max_abs_diff(idp.ex, t.alpha[L].ex), max_abs_diff(idp.ey, t.alpha[L].ey));
        const double kscale = std::max(fscale, an) * chart.diameter();
        const double kern = std::max(max_abs(inv.f.v), std::max(max_abs(inv.alpha.ex), max_abs(inv.alpha.ey)));
        rep.metrics[tag + "moment_relation_max"] = max_abs(dl);
        rep.metrics[tag + "plain_transform_max"] = max_abs(g);
        rep.metrics[tag + "inverted_max"] = kern;
        rep.metrics[tag + "f_residual"] = max_abs(F.v);
        rep.metrics[tag + "alpha_residual"] = ares;
        rep.metrics[tag + "alpha_rel_residual"] = an > 0.0 ? ares / an : ares;
        worst_kernel = std::max(worst_kernel, kscale > 0.0 ? max_abs(g) / kscale : max_abs(g));
        worst_alpha = std::max(worst_alpha, an > 0.0 ? ares / an : ares);
        worst_f = std::max(worst_f, fscale > 0.0 ? max_abs(F.v) / fscale : max_abs(F.v));
        worst_rel = std::max(worst_rel, kern);
        rep.p.push_back(std::move(pl));
    }
    rep.metrics["kernel_rel_max"] = worst_kernel;
    rep.metrics["alpha_rel_residual_max"] = worst_alpha;
    rep.metrics["f_rel_residual_max"] = worst_f;
    rep.metrics["inverted_max"] = worst_rel;

    // phi(x1, x') = int_{-a}^{x1} A~_1
    rep.phi = ScalarField3::zeros(G);
    const double h = G.h1();
    for (std::size_t k = 0; k < G.chart.n_nodes(); ++k) {
        cplx s = 0.0;
        for (int m = 1; m < G.n1; ++m) {
            s += h * A.a1[G.e1(m - 1, k)];
            rep.phi.v[G.node(m, k)] = s;
        }
    }
    const auto bnodes = detail::domain_boundary_nodes(G, chart);
    cplx mean = 0.0;
    for (std::size_t n : bnodes) mean += rep.phi.v[n];
    if (!bnodes.empty()) mean /= double(bnodes.size());
    // the shift acts on the domain only; nodes outside the chart domain stay at zero
    const Grid2& g = G.chart;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (chart.inside(g.node_pos(i, j)))
                for (int m = 0; m < G.n1; ++m) rep.phi.v[G.node(m, g.node(i, j))] -= mean;

    const OneForm3 dphi = exterior_d(rep.phi);
    OneForm3 diff = dphi;
    detail::add_scaled(diff.a1, A.a1, -1.0);
    detail::add_scaled(diff.a2, A.a2, -1.0);
    detail::add_scaled(diff.a3, A.a3, -1.0);
    const double an = detail::form_l2(A);
    rep.metrics["dphi_rel_l2"] = an > 0.0 ? detail::form_l2(diff) / an : detail::form_l2(diff);
    double pb = 0.0;
    for (std::size_t n : bnodes) pb = std::max(pb, std::abs(rep.phi.v[n]));
    const double pm = max_abs(rep.phi.v);
    rep.metrics["phi_boundary_max"] = pb;
    rep.metrics["phi_max"] = pm;
    rep.metrics["phi_boundary_rel"] = pm > 0.0 ? pb / pm : pb;

    // series check: d^l phi^(0) = i p_l at the retained orders
    double series = 0.0;
    for (int l = 0; l <= opt.order_max; ++l) {
        const auto mom = detail::x1_moment(rep.phi.v, G.n1, G.n1, -G.a, h, l);
        double e = 0.0, sc = 0.0;
        for (std::size_t k = 0; k < mom.size(); ++k) {
            if (!chart.inside(g.node_pos(int(k % std::size_t(g.nx)), int(k / std::size_t(g.nx))))) continue;
            e = std::max(e, std::abs(mom[k] - I * rep.p[std::size_t(l)].v[k]));
            sc = std::max(sc, std::abs(mom[k]));
        }
        rep.metrics["order" + std::to_string(l) + "_series_residual"] = sc > 0.0 ? e / sc : e;
        series = std::max(series, sc > 0.0 ? e / sc : e);
    }
    rep.metrics["series_rel_residual_max"] = series;
    return rep;
}

// ------------------------------------------------------------ reconstruction

struct ReconstructOptions {
    double symmetry_tol = 0.25;  // relative conjugate-symmetry defect of the inverted slices
    double reg_scale = 1e-10;    // per-slice Tikhonov weight relative to the largest column norm squared
    unsigned workers = default_workers();
};

namespace detail {

//! inverse of the x1 transform over the retained frequencies, written into v[m + stride k]
inline void x1_inverse(const std::vector<std::vector<cplx>>& slices, const std::vector<double>& lambdas, double period,
                       std::vector<cplx>& v, int stride, int count, double x0, double h,
                       const std::vector<double>& factor) {
    const std::size_t nk = v.size() / std::size_t(stride);
    for (int m = 0; m < count; ++m) {
        const double x = x0 + m * h;
        std::vector<cplx> ph(lambdas.size());
        for (std::size_t l = 0; l < lambdas.size(); ++l) ph[l] = factor[l] * std::exp(I * lambdas[l] * x) / period;
        for (std::size_t k = 0; k < nk; ++k) {
            cplx s = 0.0;
            for (std::size_t l = 0; l < lambdas.size(); ++l) s += ph[l] * slices[l][k];
            v[k * std::size_t(stride) + std::size_t(m)] = s;
        }
    }
}

//! replace each mirrored pair by its conjugate-symmetric part; returns the relative defect
inline double symmetrize(std::vector<std::vector<cplx>>& s, const std::vector<double>& lambdas) {
    double defect = 0.0, scale = 0.0;
    const std::size_t n = lambdas.size();
    for (const auto& row : s) scale = std::max(scale, max_abs(row));
    for (std::size_t l = 0; l < n; ++l) {
        const std::size_t k = n - 1 - l;
        if (k < l) break;
        for (std::size_t e = 0; e < s[l].size(); ++e) {
            const cplx a = s[l][e], b = std::conj(s[k][e]);
            defect = std::max(defect, std::abs(a - b));
            const cplx m = 0.5 * (a + b);
            s[l][e] = m;
            s[k][e] = std::conj(m);
        }
    }
    return scale > 0.0 ? defect / scale : 0.0;
}

inline void check_grid(const std::vector<double>& lambdas, const Grid3& G) {
    const double dl = pi / G.a;
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
        const double k = lambdas[l] / dl;
        if (std::abs(k - std::round(k)) > 1e-9 || std::abs(lambdas[l] + lambdas[lambdas.size() - 1 - l]) > 1e-9 * dl)
            throw ConfigError("reconstruction needs the symmetric DFT lambda grid of the product grid");
    }
}

inline std::vector<InversionResult> invert_slices(const Sinogram& D, const RayQuadrature& Q, const MetricChart& chart,
                                                  bool function_only, RecoveryReport& rep,
                                                  const ReconstructOptions& opt) {
    std::vector<InversionResult> out;
    for (std::size_t l = 0; l < D.n_lambda(); ++l) {
        InversionOptions io;
        io.mode = InversionMode::attenuated;
        io.lambda = D.lambda_grid[l];
        io.function_only = function_only;
        io.reg_scale = opt.reg_scale;
        io.workers = opt.workers;
        try {
            out.push_back(invert_transform(D.values[l], Q, chart, io));
        } catch (const NumericError& e) {
            throw NumericError("reconstruction: inversion failed at lambda = " + std::to_string(io.lambda) + ": " +
                                   e.what(),
                               e.residual, e.condition);
        }
        rep.per_lambda.push_back({io.lambda, out.back().report.condition, out.back().data_residual, out.back().reg});
    }
    return out;
}

}  // namespace detail

/// Per-lambda attenuated inversion for (f, alpha) with alpha in Coulomb
/// form, inverse transform in x1, and dA from the reconstructed potential.
/// `reference` (optional) is used only to report relative errors.
inline RecoveryReport reconstruct_dA(const Sinogram& D, const RayQuadrature& Q, const MetricChart& chart,
                                     const Grid3& G, const OneForm3* reference = nullptr,
                                     const ReconstructOptions& opt = {}) {
    detail::check_grid(D.lambda_grid, G);
    RecoveryReport rep;
    const auto inv = detail::invert_slices(D, Q, chart, false, rep, opt);
    std::vector<std::vector<cplx>> f, ex, ey;
    for (const auto& r : inv) {
        f.push_back(r.f.v);
        ex.push_back(r.alpha.ex);
        ey.push_back(r.alpha.ey);
    }
    const auto& L = D.lambda_grid;
    const double sf = detail::symmetrize(f, L), sx = detail::symmetrize(ex, L), sy = detail::symmetrize(ey, L);
    const double defect = std::max({sf, sx, sy});
    rep.metrics["slice_symmetry_defect"] = defect;
    if (defect > opt.symmetry_tol)
        throw NumericError("reconstruct_dA: reconstructed slices violate conjugate symmetry (relative defect " +
                           std::to_string(defect) + "); the data were not synthesized from a real potential");
    const double h = G.h1(), P = 2.0 * G.a;
    std::vector<double> sinc(L.size()), one(L.size(), 1.0);
    for (std::size_t l = 0; l < L.size(); ++l) sinc[l] = 1.0 / inverse_sinc(0.5 * L[l] * h);
    rep.A = OneForm3::zeros(G);
    detail::x1_inverse(f, L, P, rep.A.a1, G.n1 - 1, G.n1 - 1, -G.a + 0.5 * h, h, sinc);
    detail::x1_inverse(ex, L, P, rep.A.a2, G.n1, G.n1, -G.a, h, one);
    detail::x1_inverse(ey, L, P, rep.A.a3, G.n1, G.n1, -G.a, h, one);
    for (auto* v : {&rep.A.a1, &rep.A.a2, &rep.A.a3})
        for (auto& z : *v) z = z.real();
    rep.dA = exterior_d(rep.A);
    double worst_res = 0.0;
    for (const auto& d : rep.per_lambda) worst_res = std::max(worst_res, d.data_residual);
    rep.metrics["data_residual_max"] = worst_res;
    if (reference) {
        const TwoForm3 want = exterior_d(*reference);
        rep.metrics["dA_f12_rel_l2"] = detail::rel_l2(rep.dA.f12, want.f12);
        rep.metrics["dA_f13_rel_l2"] = detail::rel_l2(rep.dA.f13, want.f13);
        rep.metrics["dA_f23_rel_l2"] = detail::rel_l2(rep.dA.f23, want.f23);
        rep.metrics["dA_rel_l2_max"] =
            std::max({rep.metrics["dA_f12_rel_l2"], rep.metrics["dA_f13_rel_l2"], rep.metrics["dA_f23_rel_l2"]});
    }
    return rep;
}

/// Function-only attenuated inversion per lambda, inverse transform in x1,
/// then division by c.
inline RecoveryReport reconstruct_q(const Sinogram& D, const RayQuadrature& Q, const MetricChart& chart, const Grid3& G,
                                    const ScalarField3* reference = nullptr, const ReconstructOptions& opt = {}) {
    detail::check_grid(D.lambda_grid, G);
    RecoveryReport rep;
    const auto inv = detail::invert_slices(D, Q, chart, true, rep, opt);
    std::vector<std::vector<cplx>> f;
    for (const auto& r : inv) f.push_back(r.f.v);
    const auto& L = D.lambda_grid;
    const double defect = detail::symmetrize(f, L);
    rep.metrics["slice_symmetry_defect"] = defect;
    if (defect > opt.symmetry_tol)
        throw NumericError("reconstruct_q: reconstructed slices violate conjugate symmetry (relative defect " +
                           std::to_string(defect) + "); the data were not synthesized from a real potential");
    ScalarField3 qc = ScalarField3::zeros(G);
    detail::x1_inverse(f, L, 2.0 * G.a, qc.v, G.n1, G.n1, -G.a, G.h1(), std::vector<double>(L.size(), 1.0));
    const Grid2& g = G.chart;
    rep.q = ScalarField3::zeros(G);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const std::size_t n = G.node(m, g.node(i, j));
                rep.q.v[n] = qc.v[n].real() / chart.conformal(G.x1(m), g.node_pos(i, j));
            }
    double worst_res = 0.0;
    for (const auto& d : rep.per_lambda) worst_res = std::max(worst_res, d.data_residual);
    rep.metrics["data_residual_max"] = worst_res;
    if (reference) rep.metrics["q_rel_l2"] = detail::rel_l2(rep.q.v, reference->v);
    return rep;
}

}  // namespace cta
