#include <gtest/gtest.h>

#include "cta/phantoms.hpp"
#include "cta/transport.hpp"

using namespace cta;

namespace {

// smooth compactly supported test function on the rectangle and its image under the operator
struct Manufactured {
    AmplitudeField psi, rhs;
};

Manufactured manufactured(const RectGrid& r, TransportSign sign) {
    const double cx = 0.3, ct = 0.5 * r.t(r.nt - 1), rx = 2.5, rt = 0.9;
    Manufactured m{AmplitudeField::zeros(r, AmplitudeKind::phi1), AmplitudeField::zeros(r, AmplitudeKind::rhs)};
    const cplx s = sign == TransportSign::minus_i ? -I : I;
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) {
            const double dx = (r.x(i) - cx) / rx, dt = (r.t(k) - ct) / rt;
            const double q = dx * dx + dt * dt;
            if (q >= 1.0) continue;
            const double b = std::exp(1.0 - 1.0 / (1.0 - q));
            const double dq = -b / ((1.0 - q) * (1.0 - q));
            const cplx amp(1.0, 0.5);
            m.psi.at(i, k) = amp * b;
            m.rhs.at(i, k) = amp * (2.0 * dq * dx / rx + s * (2.0 * dq * dt / rt));
        }
    return m;
}

RectGrid rect(int n = 128) { return RectGrid::make(4.0, 2.0, n, n); }

// a ray across the unit disk and a transversal potential on the product grid
struct Cylinder {
    MetricChart chart;
    Grid3 G;
    GeodesicPath path;
};

const Cylinder& cylinder() {
    static const Cylinder c = [] {
        Cylinder c;
        c.chart = MetricChart::disk(1.0, 32);
        c.G = Grid3::make(33, 2.0, c.chart.grid);
        const double rho = 0.2;
        c.path = trace_geodesic(c.chart, {-std::sqrt(1 - rho * rho), rho}, {1.0, 0.0}, 0.01);
        return c;
    }();
    return c;
}

OneForm3 smooth_potential(const Grid3& G, const MetricChart& chart) {
    const Profile1 g1{0.2, 1.5, 1.0, true}, g2{-0.1, 1.4, 0.8, true};
    const Bump2 b1{{0.1, 0.1}, 0.7, 1.0}, b2{{-0.1, 0.0}, 0.6, 1.0};
    return phantoms::coulomb(G, chart, g1, b1, g2, b2);
}

}  // namespace

TEST(RestrictToRay, ZeroPotential) {
    const auto& c = cylinder();
    const auto r = restrict_to_ray(OneForm3::zeros(c.G), c.path, RectGrid::make(4.0, c.path.exit_time, 32, 32));
    EXPECT_EQ(max_abs(r.a1.values), 0.0);
    EXPECT_EQ(max_abs(r.at.values), 0.0);
}

TEST(RestrictToRay, ConstantX1Component) {
    const auto& c = cylinder();
    auto A = OneForm3::zeros(c.G);
    std::fill(A.a1.begin(), A.a1.end(), cplx(1.0));
    const auto r = restrict_to_ray(A, c.path, RectGrid::make(2.0, c.path.exit_time, 33, 40));
    for (int k = 0; k < r.a1.grid.nt; ++k)
        for (int i = 0; i < r.a1.grid.nx; ++i) {
            EXPECT_NEAR(std::abs(r.a1.at(i, k) - 1.0), 0.0, 1e-12);
            EXPECT_EQ(r.at.at(i, k), 0.0);
        }
}

TEST(RestrictToRay, ConstantTransversalFormPairsWithDirection) {
    const auto& c = cylinder();
    const double rho = -0.3, th = 0.7;
    const Vec2 v{std::cos(th), std::sin(th)};
    const Vec2 n{-v.y, v.x};
    // entry point of the chord with direction v at offset rho
    const double s = std::sqrt(1 - rho * rho);
    const auto path = trace_geodesic(c.chart, rho * n - s * v, v, 0.01);
    auto A = OneForm3::zeros(c.G);
    std::fill(A.a2.begin(), A.a2.end(), cplx(0.4));
    std::fill(A.a3.begin(), A.a3.end(), cplx(-1.1));
    const auto r = restrict_to_ray(A, path, RectGrid::make(2.0, path.exit_time, 17, 30));
    const double want = 0.4 * v.x - 1.1 * v.y;
    for (const auto& z : r.at.values) EXPECT_NEAR(std::abs(z - want), 0.0, 1e-9);
}

TEST(SolveTransport, ZeroRhsGivesZero) {
    const auto r = rect(32);
    const auto phi = solve_transport(AmplitudeField::zeros(r, AmplitudeKind::rhs), TransportSign::minus_i);
    EXPECT_EQ(max_abs(phi.values), 0.0);
}

TEST(SolveTransport, ManufacturedResidualBothSigns) {
    for (auto sign : {TransportSign::minus_i, TransportSign::plus_i}) {
        const auto m = manufactured(rect(), sign);
        const auto phi = solve_transport(m.rhs, sign);
        EXPECT_LE(transport_residual(phi, m.rhs, sign), 1e-10);
    }
}

TEST(SolveTransport, DifferenceFromTestFunctionIsNearlyHolomorphic) {
    // phi - psi solves the homogeneous equation up to the stencil truncation of psi
    double prev = 0.0;
    for (int n : {64, 128, 256}) {
        const auto m = manufactured(rect(n), TransportSign::minus_i);
        auto diff = solve_transport(m.rhs, TransportSign::minus_i);
        for (std::size_t k = 0; k < diff.values.size(); ++k) diff.values[k] -= m.psi.values[k];
        const double rel = l2(apply_transport_operator(diff, TransportSign::minus_i).values) / l2(m.rhs.values);
        if (n == 128) { EXPECT_LE(rel, 2e-2); }
        if (prev > 0.0) {
            EXPECT_GT(prev / rel, 3.5) << n;
        }
        prev = rel;
    }
}

TEST(SolveTransport, SolutionConvergesAtSecondOrder) {
    // nested grids with 2^k + 1 samples share nodes; the torus extent is fixed
    std::vector<AmplitudeField> sols;
    for (int n : {65, 129, 257}) {
        const auto m = manufactured(rect(n), TransportSign::minus_i);
        sols.push_back(solve_transport(m.rhs, TransportSign::minus_i));
    }
    auto gap = [&](const AmplitudeField& c, const AmplitudeField& f) {
        double e = 0.0;
        for (int k = 0; k < c.grid.nt; ++k)
            for (int i = 0; i < c.grid.nx; ++i) e = std::max(e, std::abs(c.at(i, k) - f.at(2 * i, 2 * k)));
        return e;
    };
    const double e1 = gap(sols[0], sols[1]), e2 = gap(sols[1], sols[2]);
    EXPECT_GT(e1 / e2, 3.5) << e1 << " " << e2;
}

TEST(SolveTransport, CoarseSupportIsConfigError) {
    const auto r = RectGrid::make(4.0, 2.0, 16, 16);
    auto f = AmplitudeField::zeros(r, AmplitudeKind::rhs);
    f.at(8, 8) = 1.0;
    EXPECT_THROW(solve_transport(f, TransportSign::minus_i), ConfigError);
}

TEST(SolveTransport, RealPotentialPairCancels) {
    const auto& c = cylinder();
    const auto A = smooth_potential(c.G, c.chart);
    const auto pair = solve_amplitudes(A, c.path);
    EXPECT_LE(pair.residual1, 1e-10);
    EXPECT_LE(pair.residual2, 1e-10);
    EXPECT_LE(pair.cancellation, 1e-3);
    // -conj(phi1) solves the second equation
    const RectGrid r = pair.phi1.grid;
    auto alt = AmplitudeField::zeros(r, AmplitudeKind::phi2);
    for (std::size_t n = 0; n < r.size(); ++n) alt.values[n] = -std::conj(pair.phi1.values[n]);
    const auto rhs2 = transport_rhs(restrict_to_ray(A, c.path, r), AmplitudeKind::phi2);
    EXPECT_LE(transport_residual(alt, rhs2, TransportSign::plus_i), 1e-10);
}

TEST(MakeEta, ConstantIsExact) {
    const auto r = rect(32);
    const auto eta = make_eta(r, 0, {1.0});
    for (const auto& z : eta.values) EXPECT_EQ(z, 1.0);
    EXPECT_EQ(max_abs(apply_transport_operator(eta, TransportSign::minus_i).values), 0.0);
}

TEST(MakeEta, LowDegreesAnnihilatedUpToRounding) {
    const auto r = rect(64);
    for (int d : {1, 2}) {
        std::vector<cplx> c(std::size_t(d) + 1, 0.0);
        c.back() = 1.0;
        const auto eta = make_eta(r, d, c);
        EXPECT_LT(max_abs(apply_transport_operator(eta, TransportSign::minus_i).values), 1e-10) << d;
    }
}

TEST(MakeEta, HigherDegreesWithinStencilTruncation) {
    const auto r = rect(64);
    const double h = std::max(r.hx, r.ht);
    for (int d : {3, 4, 6}) {
        std::vector<cplx> c(std::size_t(d) + 1, 0.0);
        c.back() = 1.0;
        const auto eta = make_eta(r, d, c);
        const double zmax = std::hypot(4.0, 2.0);
        // centered differences of z^d err by at most d(d-1)(d-2)/6 |z|^(d-3) h^2 per axis
        const double bound = 2.0 * d * (d - 1) * (d - 2) / 6.0 * std::pow(zmax + h, d - 3) * h * h;
        EXPECT_LE(max_abs(apply_transport_operator(eta, TransportSign::minus_i).values), bound) << d;
    }
    EXPECT_THROW(make_eta(r, 7, std::vector<cplx>(8, 1.0)), std::invalid_argument);
}

TEST(PairingWeight, CancellingPairGivesOne) {
    const auto r = rect(32);
    auto p1 = AmplitudeField::zeros(r, AmplitudeKind::phi1), p2 = AmplitudeField::zeros(r, AmplitudeKind::phi2);
    Rng rng(3);
    for (std::size_t n = 0; n < r.size(); ++n) {
        p1.values[n] = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
        p2.values[n] = -std::conj(p1.values[n]);
    }
    const auto w = pairing_weight(p1, p2, make_eta(r, 0, {1.0}), 0.0);
    for (const auto& z : w.values) EXPECT_NEAR(std::abs(z - 1.0), 0.0, 1e-14);
}

TEST(PairingWeight, ZeroAmplitudesGiveAttenuation) {
    const auto r = rect(16);
    const auto z = AmplitudeField::zeros(r, AmplitudeKind::phi1);
    const auto w = pairing_weight(z, z, make_eta(r, 0, {1.0}), 0.7);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) EXPECT_NEAR(std::abs(w.at(i, k) - std::exp(-1.4 * r.t(k))), 0.0, 1e-15);
}

TEST(PairingWeight, ModulusIdentity) {
    const auto r = rect(16);
    auto p1 = AmplitudeField::zeros(r, AmplitudeKind::phi1), p2 = p1;
    Rng rng(9);
    for (std::size_t n = 0; n < r.size(); ++n) {
        p1.values[n] = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
        p2.values[n] = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    const auto eta = make_eta(r, 2, {0.5, cplx(0, 1), 0.25});
    const double lam = -0.4;
    const auto w = pairing_weight(p1, p2, eta, lam);
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) {
            const double want = std::exp(-2 * lam * r.t(k)) * std::abs(eta.at(i, k)) *
                                std::exp((p1.at(i, k) + std::conj(p2.at(i, k))).real());
            EXPECT_NEAR(std::abs(w.at(i, k)), want, 1e-12 * want);
        }
}
