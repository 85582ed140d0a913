#include <gtest/gtest.h>

#include "cta/recovery.hpp"

using namespace cta;

namespace {

struct Setup {
    MetricChart chart;
    Grid3 G;
    RaySet rays;
    RayQuadrature Q;
    std::vector<double> lambdas;
};

// unit disk chart of 32 x 32 nodes, 33 x1 samples on [-2, 2], 2048 rays
const Setup& setup() {
    static const Setup s = [] {
        Setup s;
        s.chart = MetricChart::disk(1.0, 32);
        s.G = Grid3::make(33, 2.0, s.chart.grid);
        s.rays = sample_inflow_boundary(s.chart, 64, 32, 1e-3);
        s.Q = build_quadrature(s.chart, s.rays);
        s.lambdas = dft_lambda_grid(s.G, 17);
        return s;
    }();
    return s;
}

OneForm3 coulomb_phantom(const Grid3& G, const MetricChart& chart) {
    const Profile1 g1{0.2, 1.6, 1.0, true}, g2{-0.2, 1.44, 0.8, true};
    const Bump2 b1{{0.15, 0.1}, 0.6, 1.0}, b2{{-0.1, 0.05}, 0.55, 1.0};
    return phantoms::coulomb(G, chart, g1, b1, g2, b2);
}

OneForm3 gradient_phantom(const Grid3& G) {
    return phantoms::gradient(G, Profile1{0.1, 1.5, 1.0, true}, Bump2{{0.1, -0.15}, 0.6, 1.0});
}

double form_max(const OneForm3& A) { return std::max({max_abs(A.a1), max_abs(A.a2), max_abs(A.a3)}); }

OneForm3 zero_like(const Grid3& G) { return OneForm3::zeros(G); }

}  // namespace

// ------------------------------------------------------------ reduction

TEST(FourierReduce, ZeroFieldGivesZeroSlices) {
    const auto& s = setup();
    const auto S = fourier_reduce(zero_like(s.G), s.lambdas);
    ASSERT_EQ(S.size(), 17u);
    for (std::size_t l = 0; l < S.size(); ++l) {
        EXPECT_EQ(max_abs(S.f_slices[l].v), 0.0);
        EXPECT_EQ(max_abs(S.alpha_slices[l].ex), 0.0);
    }
}

TEST(FourierReduce, LambdaGridIsSymmetricAndBounded) {
    const auto& s = setup();
    ASSERT_EQ(s.lambdas.size(), 17u);
    EXPECT_EQ(s.lambdas[8], 0.0);
    for (std::size_t l = 0; l < 17; ++l) EXPECT_DOUBLE_EQ(s.lambdas[l], -s.lambdas[16 - l]);
    EXPECT_NEAR(s.lambdas[1] - s.lambdas[0], pi / s.G.a, 1e-12);
    EXPECT_THROW(dft_lambda_grid(s.G, 19), ConfigError);
    EXPECT_THROW(dft_lambda_grid(s.G, 16), ConfigError);
}

TEST(FourierReduce, SeparableGaussianMatchesOneDimensionalTransform) {
    const auto& s = setup();
    const Profile1 g{0.1, 0.22, 1.0, false};
    const Bump2 psi{{0.2, -0.1}, 0.5, 1.0};
    auto A = zero_like(s.G);
    const Grid2& c = s.G.chart;
    const double h1 = s.G.h1();
    // exact cell average of the Gaussian over each x1 edge
    const auto cdf = [&](double x) { return std::erf((x - g.center) / (g.width * std::sqrt(2.0))); };
    for (int j = 0; j < c.ny; ++j)
        for (int i = 0; i < c.nx; ++i)
            for (int m = 0; m + 1 < s.G.n1; ++m) {
                const double avg = g.width * std::sqrt(pi / 2) * (cdf(s.G.x1(m + 1)) - cdf(s.G.x1(m))) / h1;
                A.a1[s.G.e1(m, c.node(i, j))] = avg * psi(c.node_pos(i, j));
            }
    const auto S = fourier_reduce(A, s.lambdas);
    for (std::size_t l = 0; l < S.size(); ++l) {
        const cplx gh = g.hat(s.lambdas[l]);
        double err = 0.0;
        for (int j = 0; j < c.ny; ++j)
            for (int i = 0; i < c.nx; ++i) err = std::max(err, std::abs(S.f_slices[l].at(i, j) - gh * psi(c.node_pos(i, j))));
        EXPECT_LE(err, 1e-8 * std::abs(g.hat(0.0))) << s.lambdas[l];
    }
}

TEST(FourierReduce, RealFieldIsConjugateSymmetric) {
    const auto& s = setup();
    const auto S = fourier_reduce(coulomb_phantom(s.G, s.chart), s.lambdas);
    EXPECT_LE(S.conjugate_symmetry_defect(), 1e-10);
    auto q = phantoms::product_scalar(s.G, Profile1{0.0, 1.5, 1.0, true}, Bump2{{0.0, 0.0}, 0.7, 1.0});
    EXPECT_LE(fourier_reduce(q, s.lambdas).conjugate_symmetry_defect(), 1e-10);
}

TEST(FourierReduce, SupportViolationIsConfigError) {
    const auto& s = setup();
    auto A = zero_like(s.G);
    A.a2[s.G.e2(0, 10)] = 1.0;
    EXPECT_THROW(fourier_reduce(A, s.lambdas), ConfigError);
    auto q = ScalarField3::zeros(s.G);
    q.v[s.G.node(s.G.n1 - 1, 5)] = 1.0;
    EXPECT_THROW(fourier_reduce(q, s.lambdas), ConfigError);
}

TEST(FourierReduce, ExactGradientReducesToLambdaPhiAndGradient) {
    const auto& s = setup();
    const auto phi = phantoms::product_scalar(s.G, Profile1{0.1, 1.5, 1.0, true}, Bump2{{0.1, -0.15}, 0.6, 1.0});
    const auto S = fourier_reduce(exterior_d(phi), s.lambdas);
    const auto P = fourier_reduce(phi, s.lambdas);
    for (std::size_t l = 0; l < S.size(); ++l) {
        const double lam = s.lambdas[l];
        double ef = 0.0;
        for (std::size_t k = 0; k < P.f_slices[l].v.size(); ++k)
            ef = std::max(ef, std::abs(S.f_slices[l].v[k] - I * lam * P.f_slices[l].v[k]));
        const auto dp = exterior_d(P.f_slices[l]);
        EXPECT_LE(ef, 1e-12 * (1 + std::abs(lam)) * max_abs(P.f_slices[8].v)) << lam;
        EXPECT_LE(max_abs_diff(S.alpha_slices[l].ex, dp.ex), 1e-11) << lam;
        EXPECT_LE(max_abs_diff(S.alpha_slices[l].ey, dp.ey), 1e-11) << lam;
    }
}

// ------------------------------------------------------------ synthesis

TEST(SynthesizeData, ZeroPotentialGivesZero) {
    const auto& s = setup();
    const auto D = synthesize_data(zero_like(s.G), s.Q, s.lambdas);
    EXPECT_EQ(D.values.size(), 17u);
    EXPECT_EQ(D.max_abs(), 0.0);
}

TEST(SynthesizeData, ExactGradientDataVanish) {
    const auto& s = setup();
    const auto A = gradient_phantom(s.G);
    const auto D = synthesize_data(A, s.Q, s.lambdas);
    EXPECT_LE(D.max_abs(), 1e-4 * form_max(A) * s.chart.diameter());
    // the analytic identity leaves only rounding
    EXPECT_LE(D.max_abs(), 1e-7 * form_max(A));
}

TEST(SynthesizeData, TransversalProductAtZeroFrequency) {
    const auto& s = setup();
    const Profile1 g{0.0, 1.5, 1.0, true};
    const OneForm0 beta = stream_to_form(sample_cells(s.chart.grid, [](Vec2 x) { return cplx(Bump2{{0.1, 0.0}, 0.6, 1.0}(x)); }), s.chart);
    auto A = zero_like(s.G);
    double gsum = 0.0;
    for (int m = 0; m < s.G.n1; ++m) {
        const double gv = g(s.G.x1(m));
        gsum += s.G.h1() * gv;
        for (std::size_t e = 0; e < beta.ex.size(); ++e) A.a2[s.G.e2(m, e)] = gv * beta.ex[e];
        for (std::size_t e = 0; e < beta.ey.size(); ++e) A.a3[s.G.e3(m, e)] = gv * beta.ey[e];
    }
    const auto D = synthesize_data(A, s.Q, {0.0});
    const auto want = xray_transform(s.Q, ScalarField0::zeros(s.chart.grid), beta);
    for (std::size_t r = 0; r < want.size(); ++r)
        EXPECT_NEAR(std::abs(D.values[0][r] - (-I) * gsum * want[r]), 0.0, 1e-12 * (1 + std::abs(want[r])));
}

TEST(SynthesizeData, LambdaDerivativesMatchMomentRelations) {
    const auto& s = setup();
    const auto A = coulomb_phantom(s.G, s.chart);
    const auto t = taylor_data(A, 2);
    const auto d1 = lambda_derivative_from_moments(t, s.Q, 1);
    const auto d2 = lambda_derivative_from_moments(t, s.Q, 2);
    std::vector<double> e1, e2;
    for (double dl : {0.2, 0.1}) {
        const auto D = synthesize_data(A, s.Q, {-dl, 0.0, dl});
        std::vector<cplx> c1(d1.size()), c2(d2.size());
        for (std::size_t r = 0; r < d1.size(); ++r) {
            c1[r] = (D.values[2][r] - D.values[0][r]) / (2 * dl);
            c2[r] = (D.values[2][r] - 2.0 * D.values[1][r] + D.values[0][r]) / (dl * dl);
        }
        e1.push_back(max_abs_diff(c1, d1));
        e2.push_back(max_abs_diff(c2, d2));
    }
    EXPECT_LE(e1[1], 1e-2 * max_abs(d1));
    EXPECT_GT(e1[0] / e1[1], 3.5);
    EXPECT_GT(e2[0] / e2[1], 3.5);
}

TEST(SynthesizeQData, ZeroPotentialGivesZero) {
    const auto& s = setup();
    const auto D = synthesize_q_data(ScalarField3::zeros(s.G), s.chart, s.Q, s.lambdas);
    EXPECT_EQ(D.max_abs(), 0.0);
    EXPECT_TRUE(D.metadata.count("lambda_convention"));
}

TEST(SynthesizeQData, SeparableGaussianMatchesNestedQuadrature) {
    const auto& s = setup();
    const Profile1 g{-0.1, 0.25, 1.0, false};
    const Bump2 b{{0.1, 0.2}, 0.6, 1.0};
    const auto q = sample_nodes3(s.G, [&](double x1, Vec2 x) { return cplx(g(x1) * b(x)); });
    const std::vector<double> lams = {-3.0 * pi / 2, 0.0, pi / 2, 2 * pi};
    const auto D = synthesize_q_data(q, s.chart, s.Q, lams);
    for (std::size_t l = 0; l < lams.size(); ++l) {
        // the x1 Fourier integral by trapezoid on a fine grid
        const int nx = 4000;
        cplx ghat = 0.0;
        for (int k = 0; k <= nx; ++k) {
            const double x1 = -2.0 + 4.0 * k / nx;
            ghat += (k == 0 || k == nx ? 0.5 : 1.0) * (4.0 / nx) * std::exp(-I * lams[l] * x1) * g(x1);
        }
        double err = 0.0, scale = 0.0;
        for (std::size_t r = 0; r < s.rays.size(); r += 37) {
            const auto& ray = s.rays.entries[r];
            const double L = ray.path.exit_time;
            const Vec2 x0 = ray.path.samples.front().x, v = ray.path.direction;
            // composite Simpson along the chord
            const int nt = 2000;
            double tint = 0.0;
            for (int k = 0; k <= nt; ++k) {
                const double tt = L * k / nt;
                const double wgt = (k == 0 || k == nt) ? 1.0 : (k % 2 ? 4.0 : 2.0);
                tint += wgt * std::exp(-lams[l] * tt) * b(x0 + tt * v);
            }
            tint *= L / (3.0 * nt);
            err = std::max(err, std::abs(D.values[l][r] - ghat * tint));
            scale = std::max(scale, std::abs(ghat * tint));
        }
        // bilinear sampling of the bump at h = 2/31 limits the agreement to about a percent
        EXPECT_LE(err, 3e-2 * scale) << lams[l];
    }
}

TEST(SynthesizeQData, ConformalFactorWeightsThePotential) {
    const auto& s = setup();
    MetricChart c = s.chart;
    c.conformal = [](double x1, Vec2 x) { return 1.0 + 0.1 * x1 * x1 + 0.2 * x.x; };
    const auto q = phantoms::product_scalar(s.G, Profile1{0.0, 1.5, 1.0, true}, Bump2{{0.0, 0.1}, 0.6, 1.0});
    const auto D1 = synthesize_q_data(q, c, s.Q, {pi});
    const auto D2 = synthesize_q_data(weighted_potential(q, c), s.chart, s.Q, {pi});
    EXPECT_LE(max_abs_diff(D1.values[0], D2.values[0]), 1e-14 * (1 + D1.max_abs()));
}

// ------------------------------------------------------------ certification

TEST(CertifyUniqueness, ZeroPotentialGivesZeroGauges) {
    const auto& s = setup();
    const auto A = zero_like(s.G);
    const auto rep = certify_uniqueness(synthesize_data(A, s.Q, s.lambdas), s.Q, s.chart, A);
    ASSERT_EQ(rep.p.size(), 5u);
    for (const auto& p : rep.p) EXPECT_EQ(max_abs(p.v), 0.0);
    EXPECT_EQ(max_abs(rep.phi.v), 0.0);
}

TEST(CertifyUniqueness, GradientPhantomRecoversPhi) {
    const auto& s = setup();
    const auto A = gradient_phantom(s.G);
    const auto rep = certify_uniqueness(synthesize_data(A, s.Q, s.lambdas), s.Q, s.chart, A);
    EXPECT_LE(rep.metrics.at("dphi_rel_l2"), 0.10);
    EXPECT_LE(rep.metrics.at("phi_boundary_rel"), 1e-3);
    EXPECT_LE(rep.metrics.at("alpha_rel_residual_max"), 1e-6);
    EXPECT_LE(rep.metrics.at("f_rel_residual_max"), 1e-6);
    EXPECT_LE(rep.metrics.at("series_rel_residual_max"), 1e-6);
    EXPECT_LE(rep.metrics.at("kernel_rel_max"), 1e-6);
    // phi agrees with the generating potential
    const auto phi0 = phantoms::product_scalar(s.G, Profile1{0.1, 1.5, 1.0, true}, Bump2{{0.1, -0.15}, 0.6, 1.0});
    EXPECT_LE(max_abs_diff(rep.phi.v, phi0.v), 1e-6 * max_abs(phi0.v));
}

TEST(CertifyUniqueness, OrderZeroReportsConsistency) {
    const auto& s = setup();
    const auto A = gradient_phantom(s.G);
    CertifyOptions opt;
    opt.order_max = 0;
    const auto rep = certify_uniqueness(synthesize_data(A, s.Q, s.lambdas), s.Q, s.chart, A, opt);
    ASSERT_EQ(rep.p.size(), 1u);
    ASSERT_TRUE(rep.metrics.count("order0_alpha_rel_residual"));
    EXPECT_LE(rep.metrics.at("order0_alpha_rel_residual"), 1e-6);
    EXPECT_GT(max_abs(rep.p[0].v), 0.0);
}

TEST(CertifyUniqueness, NonvanishingDataIsRejected) {
    const auto& s = setup();
    const auto A = coulomb_phantom(s.G, s.chart);
    EXPECT_THROW(certify_uniqueness(synthesize_data(A, s.Q, s.lambdas), s.Q, s.chart, A), CertificationError);
}

// ------------------------------------------------------------ reconstruction

namespace {

struct RoundTrips {
    OneForm3 A, Ag;
    RecoveryReport base, gauged;
};

const RoundTrips& round_trips() {
    static const RoundTrips r = [] {
        const auto& s = setup();
        RoundTrips r;
        r.A = coulomb_phantom(s.G, s.chart);
        const auto p = phantoms::product_scalar(s.G, Profile1{-0.1, 1.4, 0.7, true}, Bump2{{-0.1, 0.2}, 0.6, 1.0});
        r.Ag = r.A + exterior_d(p);
        r.base = reconstruct_dA(synthesize_data(r.A, s.Q, s.lambdas), s.Q, s.chart, s.G, &r.A);
        r.gauged = reconstruct_dA(synthesize_data(r.Ag, s.Q, s.lambdas), s.Q, s.chart, s.G, &r.Ag);
        return r;
    }();
    return r;
}

}  // namespace

TEST(ReconstructDA, ZeroDataGivesZero) {
    const auto& s = setup();
    const std::vector<double> lams = {-pi / 2, 0.0, pi / 2};
    const auto rep = reconstruct_dA(synthesize_data(zero_like(s.G), s.Q, lams), s.Q, s.chart, s.G);
    EXPECT_EQ(max_abs(rep.dA.f12), 0.0);
    EXPECT_EQ(max_abs(rep.dA.f23), 0.0);
}

TEST(ReconstructDA, CoulombPhantomRoundTrip) {
    const auto& r = round_trips();
    EXPECT_LE(r.base.metrics.at("dA_f12_rel_l2"), 0.15);
    EXPECT_LE(r.base.metrics.at("dA_f13_rel_l2"), 0.15);
    EXPECT_LE(r.base.metrics.at("dA_f23_rel_l2"), 0.15);
    EXPECT_EQ(r.base.per_lambda.size(), 17u);
}

TEST(ReconstructDA, GaugeTransformLeavesFieldUnchanged) {
    const auto& r = round_trips();
    for (const char* k : {"dA_f12_rel_l2", "dA_f13_rel_l2", "dA_f23_rel_l2"})
        EXPECT_LE(r.gauged.metrics.at(k), 2.0 * r.base.metrics.at(k)) << k;
    EXPECT_LE(l2_diff(r.gauged.dA.f23, r.base.dA.f23), 1e-6 * l2(r.base.dA.f23));
}

TEST(ReconstructDA, RejectsForeignLambdaGrid) {
    const auto& s = setup();
    const auto D = synthesize_data(zero_like(s.G), s.Q, {-0.3, 0.0, 0.3});
    EXPECT_THROW(reconstruct_dA(D, s.Q, s.chart, s.G), ConfigError);
}

TEST(ReconstructQ, ZeroDataGivesZero) {
    const auto& s = setup();
    const std::vector<double> lams = {-pi / 2, 0.0, pi / 2};
    const auto rep = reconstruct_q(synthesize_q_data(ScalarField3::zeros(s.G), s.chart, s.Q, lams), s.Q, s.chart, s.G);
    EXPECT_EQ(max_abs(rep.q.v), 0.0);
}

TEST(ReconstructQ, RoundTripWithConstantAndVaryingConformalFactor) {
    const auto& s = setup();
    const auto q = phantoms::product_scalar(s.G, Profile1{0.15, 1.6, 1.0, true}, Bump2{{0.1, 0.15}, 0.65, 1.0});
    MetricChart c = s.chart;
    const Profile1 gc{0.0, 1.7, 1.0, true};
    const Bump2 bc{{0.1, -0.1}, 0.8, 0.2};
    c.conformal = [=](double x1, Vec2 x) { return 1.0 + gc(x1) * bc(x); };
    for (const MetricChart* ch : std::vector<const MetricChart*>{&s.chart, &c}) {
        const auto rep = reconstruct_q(synthesize_q_data(q, *ch, s.Q, s.lambdas), s.Q, *ch, s.G, &q);
        EXPECT_LE(rep.metrics.at("q_rel_l2"), 0.10);
    }
}

TEST(ReconstructQ, ZeroSliceMatchesPlainInversion) {
    const auto& s = setup();
    const auto q = phantoms::product_scalar(s.G, Profile1{0.0, 1.5, 1.0, true}, Bump2{{0.0, 0.1}, 0.6, 1.0});
    const auto D = synthesize_q_data(q, s.chart, s.Q, {0.0});
    InversionOptions att, plain;
    att.mode = InversionMode::attenuated;
    att.function_only = plain.function_only = true;
    att.reg_scale = plain.reg_scale = ReconstructOptions{}.reg_scale;
    const auto ra = invert_transform(D.values[0], s.Q, s.chart, att);
    const auto rp = invert_transform(D.values[0], s.Q, s.chart, plain);
    EXPECT_EQ(max_abs_diff(ra.f.v, rp.f.v), 0.0);
}
