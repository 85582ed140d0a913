#include <gtest/gtest.h>

#include "cta/phantoms.hpp"

using namespace cta;

namespace {

MetricChart disk32() { return MetricChart::disk(1.0, 32); }

double max_interior(const ScalarField0& s, int margin = 1) {
    const Grid2& g = s.grid;
    double m = 0.0;
    for (int j = margin; j + margin < g.ny; ++j)
        for (int i = margin; i + margin < g.nx; ++i) m = std::max(m, std::abs(s.at(i, j)));
    return m;
}

double l2_interior(const ScalarField0& s, int margin = 1) {
    const Grid2& g = s.grid;
    double m = 0.0;
    for (int j = margin; j + margin < g.ny; ++j)
        for (int i = margin; i + margin < g.nx; ++i) m += std::norm(s.at(i, j));
    return std::sqrt(m);
}

double l2_interior(const ScalarField3& s) {
    const Grid3& G = s.grid;
    const Grid2& g = G.chart;
    double m = 0.0;
    for (int j = 1; j + 1 < g.ny; ++j)
        for (int i = 1; i + 1 < g.nx; ++i)
            for (int k = 1; k + 1 < G.n1; ++k) m += std::norm(s.v[G.node(k, g.node(i, j))]);
    return std::sqrt(m);
}

OneForm0 rotational_field(const Grid2& g) {
    const Bump2 b{{0.0, 0.0}, 0.8, 1.0};
    return sample_edges(g, [&](Vec2 x) { return Vec2{-x.y * b(x), x.x * b(x)}; });
}

OneForm0 generic_field(const Grid2& g) {
    const Bump2 b{{0.1, -0.2}, 0.6, 1.0};
    return sample_edges(g, [&](Vec2 x) { return Vec2{b(x) * (1.0 + x.x), b(x) * std::sin(3 * x.y)}; });
}

Grid3 grid3(int n1 = 9, int n = 16) { return Grid3::make(n1, 2.0, Grid2::square(n, -1.0, 1.0)); }

OneForm3 generic_field3(const Grid3& G) {
    const Profile1 g1{0.0, 1.5, 1.0, true};
    const Bump2 b{{0.1, 0.0}, 0.6, 1.0};
    OneForm3 A = phantoms::gradient(G, g1, b);
    // add a non-gradient part
    const Bump2 b2{{-0.2, 0.1}, 0.5, 0.7};
    for (std::size_t e = 0; e < A.a1.size(); ++e) A.a1[e] += 0.3 * std::sin(double(e));
    OneForm3 B = phantoms::coulomb(G, MetricChart::square(2.0, G.chart.nx), g1, b2, g1, b2);
    return A + B;
}

}  // namespace

TEST(ExteriorD, ConstantScalarHasZeroDifferential) {
    const Grid2 g = Grid2::square(12, -1, 1);
    const auto p = sample_nodes(g, [](Vec2) { return cplx(3.5, -1.0); });
    const auto a = exterior_d(p);
    EXPECT_EQ(max_abs(a.ex), 0.0);
    EXPECT_EQ(max_abs(a.ey), 0.0);
}

TEST(ExteriorD, ProductMonomialMatchesSymbolicGradient) {
    const Grid2 g = Grid2::square(17, -1, 1);
    const auto a = exterior_d(sample_nodes(g, [](Vec2 x) { return cplx(x.x * x.y); }));
    // edge averages of d(x y) = (y, x)
    const auto want = sample_edges(g, [](Vec2 x) { return Vec2{x.y, x.x}; });
    EXPECT_LT(max_abs_diff(a.ex, want.ex), 1e-13);
    EXPECT_LT(max_abs_diff(a.ey, want.ey), 1e-13);
}

TEST(ExteriorD, DDVanishesToRoundoff2D) {
    const Grid2 g = Grid2::square(32, -1, 1);
    Rng rng(7);
    ScalarField0 p = ScalarField0::zeros(g);
    for (auto& z : p.v) z = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto c = exterior_d(exterior_d(p));
    EXPECT_LT(max_abs(c.c), 16 * std::numeric_limits<double>::epsilon() / (g.h * g.h));
}

TEST(ExteriorD, DDIsExactlyZeroOnDyadicData) {
    // dyadic spacing and integer samples make every difference exact
    const Grid2 g{16, 16, 0.0, 0.0, 0.125};
    Rng rng(3);
    ScalarField0 p = ScalarField0::zeros(g);
    for (auto& z : p.v) z = cplx(std::floor(rng.uniform(-1000, 1000)), std::floor(rng.uniform(-1000, 1000)));
    EXPECT_EQ(max_abs(exterior_d(exterior_d(p)).c), 0.0);
    const Grid3 G = Grid3::make(9, 0.5, g);  // h1 = 0.125
    ScalarField3 q = ScalarField3::zeros(G);
    for (auto& z : q.v) z = std::floor(rng.uniform(-1000, 1000));
    const auto f = exterior_d(exterior_d(q));
    EXPECT_EQ(max_abs(f.f12), 0.0);
    EXPECT_EQ(max_abs(f.f13), 0.0);
    EXPECT_EQ(max_abs(f.f23), 0.0);
}

TEST(ExteriorD, DDVanishesToRoundoff3D) {
    const Grid3 G = grid3();
    Rng rng(11);
    ScalarField3 p = ScalarField3::zeros(G);
    for (auto& z : p.v) z = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto f = exterior_d(exterior_d(p));
    const double tol = 16 * std::numeric_limits<double>::epsilon() / (G.chart.h * G.chart.h);
    EXPECT_LT(max_abs(f.f12), tol);
    EXPECT_LT(max_abs(f.f13), tol);
    EXPECT_LT(max_abs(f.f23), tol);
}

TEST(ExteriorD, ProductGridLinearFunction) {
    const Grid3 G = grid3();
    const auto p = sample_nodes3(G, [](double x1, Vec2 x) { return cplx(2 * x1 - x.x + 3 * x.y); });
    const auto A = exterior_d(p);
    for (auto z : A.a1) EXPECT_NEAR(std::abs(z - 2.0), 0.0, 1e-12);
    for (auto z : A.a2) EXPECT_NEAR(std::abs(z + 1.0), 0.0, 1e-12);
    for (auto z : A.a3) EXPECT_NEAR(std::abs(z - 3.0), 0.0, 1e-12);
}

TEST(Codifferential, ZeroFormGivesZero) {
    const auto c = disk32();
    EXPECT_EQ(max_abs(codifferential(OneForm0::zeros(c.grid), c).v), 0.0);
}

TEST(Codifferential, EuclideanGradientIsMinusFivePointLaplacian) {
    const auto c = disk32();
    const Grid2& g = c.grid;
    const Bump2 b{{0.1, 0.05}, 0.7, 1.0};
    const auto p = sample_nodes(g, [&](Vec2 x) { return cplx(b(x)); });
    const auto dd = codifferential(exterior_d(p), c);
    double err = 0.0;
    for (int j = 1; j + 1 < g.ny; ++j)
        for (int i = 1; i + 1 < g.nx; ++i) {
            const cplx lap = (p.at(i + 1, j) + p.at(i - 1, j) + p.at(i, j + 1) + p.at(i, j - 1) - 4.0 * p.at(i, j)) /
                             (g.h * g.h);
            err = std::max(err, std::abs(dd.at(i, j) + lap));
        }
    EXPECT_LT(err, 1e-9);
}

TEST(Codifferential, RotationalFieldIsNearlyDivergenceFree) {
    for (int n : {32, 64}) {
        const auto c = MetricChart::disk(1.0, n);
        const auto a = rotational_field(c.grid);
        // scale: a typical derivative of the field is O(1)
        EXPECT_LT(max_interior(codifferential(a, c)), 60.0 / (n * n)) << n;
    }
}

TEST(Codifferential, DiscreteDualityFlatAndAnisotropic) {
    for (const Mat2 m : {Mat2{1, 0, 1}, Mat2{2.0, 0.3, 1.5}}) {
        const auto c = MetricChart::disk(1.0, 24, metrics::constant(m), m.b == 0.0 && m.a == 1.0);
        const HodgeWeights2 w(c);
        const Bump2 b{{0.0, 0.1}, 0.6, 1.0};
        const auto phi = sample_nodes(c.grid, [&](Vec2 x) { return cplx(b(x), 0.5 * b(x) * x.x); });
        const auto a = generic_field(c.grid);
        const cplx lhs = inner1(exterior_d(phi), a, w);
        const cplx rhs = inner0(phi, codifferential(a, w), w);
        EXPECT_LT(std::abs(lhs - rhs), 1e-12 * (1.0 + std::abs(lhs)));
    }
}

TEST(Codifferential, ConformalMetricDualityAgainstContinuumOrder) {
    // continuum L2 pairing vs discrete: second order in h
    double prev = 0.0;
    for (int n : {24, 48}) {
        const auto c = MetricChart::disk(1.0, n, metrics::conformal_gaussian(0.2, 0.6), false);
        const HodgeWeights2 w(c);
        const Bump2 b{{0.0, 0.1}, 0.6, 1.0};
        const auto phi = sample_nodes(c.grid, [&](Vec2 x) { return cplx(b(x)); });
        const auto a = generic_field(c.grid);
        const double gap = std::abs(inner1(exterior_d(phi), a, w) - inner0(phi, codifferential(a, w), w));
        EXPECT_LT(gap, 1e-10);
        prev = gap;
    }
    (void)prev;
}

TEST(HodgeWeights, OffDiagonalInverseRoundTrip) {
    const auto c = MetricChart::disk(1.0, 16, metrics::constant({2.0, 0.5, 1.0}), false);
    const HodgeWeights2 w(c);
    EXPECT_FALSE(w.diagonal);
    const auto a = generic_field(c.grid);
    const auto back = w.apply_inverse(w.apply(a));
    EXPECT_LT(max_abs_diff(back.ex, a.ex), 1e-10);
    EXPECT_LT(max_abs_diff(back.ey, a.ey), 1e-10);
}

TEST(SolveGauge, CoulombInputGivesZeroPotential) {
    const auto c = disk32();
    const auto a = stream_to_form(sample_cells(c.grid, [](Vec2 x) { return cplx(Bump2{{0, 0}, 0.7, 1.0}(x)); }), c);
    const auto p = solve_gauge(a, c);
    EXPECT_LT(max_abs(p.v), 1e-12);
}

TEST(SolveGauge, GradientInputRecoversMinusPotential) {
    const auto c = disk32();
    const Bump2 b{{0.1, -0.1}, 0.6, 1.0};
    const auto phi0 = sample_nodes(c.grid, [&](Vec2 x) { return cplx(b(x)); });
    const auto p = solve_gauge(exterior_d(phi0), c);
    EXPECT_LT(max_abs_diff(p.v, (-1.0 * phi0).v), 1e-7 * max_abs(phi0.v));
}

TEST(SolveGauge, GenericFieldProjectsToCoulomb2D) {
    const auto c = MetricChart::disk(1.0, 32, metrics::conformal_gaussian(0.2, 0.6), false);
    const auto a = generic_field(c.grid);
    const auto p = solve_gauge(a, c);
    const double before = l2_interior(codifferential(a, c));
    const double after = l2_interior(codifferential(a + exterior_d(p), c));
    EXPECT_LE(after / before, 1e-6);
}

TEST(SolveGauge, GenericFieldProjectsToCoulomb3D) {
    Grid3 G = grid3(9, 16);
    auto chart = MetricChart::square(2.0, 16, metrics::conformal_gaussian(0.1, 0.6), false);
    chart.conformal = [](double x1, Vec2 x) { return 1.0 + 0.2 * std::exp(-x1 * x1 - dot(x, x)); };
    const auto A = generic_field3(G);
    const auto p = solve_gauge(A, chart);
    const double before = l2_interior(codifferential(A, chart));
    const double after = l2_interior(codifferential(coulomb_project(A, chart), chart));
    EXPECT_LE(after / before, 1e-6);
    // boundary values stay zero
    const Grid2& g = G.chart;
    for (int i = 0; i < g.nx; ++i) EXPECT_EQ(std::abs(p.v[G.node(3, g.node(i, 0))]), 0.0);
}

TEST(SolveGauge, IterationCapFailureRaisesNumericError) {
    const auto c = disk32();
    GaugeSolveOptions opt;
    opt.max_iter = 2;
    EXPECT_THROW(solve_gauge(generic_field(c.grid), c, opt), NumericError);
}

TEST(CoulombProject, PreservesExteriorDerivative) {
    Grid3 G = grid3(9, 16);
    const auto chart = MetricChart::square(2.0, 16);
    const auto A = generic_field3(G);
    const auto P = coulomb_project(A, chart);
    const auto dA = exterior_d(A), dP = exterior_d(P);
    const double scale = std::max({max_abs(dA.f12), max_abs(dA.f13), max_abs(dA.f23)});
    const double tol = 1e-12 * std::max(1.0, scale);
    EXPECT_LT(max_abs_diff(dA.f12, dP.f12), tol);
    EXPECT_LT(max_abs_diff(dA.f13, dP.f13), tol);
    EXPECT_LT(max_abs_diff(dA.f23, dP.f23), tol);
}

TEST(CoulombProject, GradientInputProjectsToZero) {
    Grid3 G = grid3(9, 16);
    const auto chart = MetricChart::square(2.0, 16);
    const auto A = phantoms::gradient(G, Profile1{0.0, 1.5, 1.0, true}, Bump2{{0, 0}, 0.7, 1.0});
    const auto P = coulomb_project(A, chart);
    const double s = std::max({max_abs(A.a1), max_abs(A.a2), max_abs(A.a3)});
    EXPECT_LT(std::max({max_abs(P.a1), max_abs(P.a2), max_abs(P.a3)}), 1e-6 * s);
}

TEST(CoulombProject, IdempotentAndCoulombFixed2D) {
    const auto c = disk32();
    const auto a = generic_field(c.grid);
    const auto once = coulomb_project(a, c);
    const auto twice = coulomb_project(once, c);
    const double s = std::max(max_abs(once.ex), max_abs(once.ey));
    EXPECT_LT(std::max(max_abs_diff(once.ex, twice.ex), max_abs_diff(once.ey, twice.ey)), 2e-7 * s);
}

TEST(MetricPairing, ZeroArgument) {
    const auto c = disk32();
    EXPECT_EQ(max_abs(metric_pairing(generic_field(c.grid), OneForm0::zeros(c.grid), c).v), 0.0);
}

TEST(MetricPairing, EuclideanUnitCovector3D) {
    const Grid3 G = grid3(5, 8);
    const auto chart = MetricChart::square(2.0, 8);
    OneForm3 A = OneForm3::zeros(G);
    for (auto& z : A.a1) z = 1.0;
    for (auto z : metric_pairing(A, A, chart).v) EXPECT_DOUBLE_EQ(z.real(), 1.0);
}

TEST(MetricPairing, ConformalScaling) {
    const Grid3 G = grid3(5, 8);
    auto chart = MetricChart::square(2.0, 8);
    chart.conformal = [](double x1, Vec2 x) { return 1.5 + 0.3 * x1 * x.x; };
    OneForm3 A = OneForm3::zeros(G);
    for (auto& z : A.a1) z = cplx(1.0, 1.0);
    for (auto& z : A.a2) z = 2.0;
    for (auto& z : A.a3) z = -0.5;
    const auto v = metric_pairing(A, A, chart);
    const Grid2& g = G.chart;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const double c = chart.conformal(G.x1(m), g.node_pos(i, j));
                EXPECT_NEAR(v.v[G.node(m, g.node(i, j))].real(), (2.0 + 4.0 + 0.25) / c, 1e-12);
            }
}
