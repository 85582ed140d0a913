#pragma once

#include <memory>
#include <ostream>
#include <sstream>

#include "cta/grid.hpp"

namespace cta {

enum class DomainKind { disk, square };

using MetricFn = std::function<Mat2(Vec2)>;
using ConformalFn = std::function<double(double, Vec2)>;

namespace metrics {

inline MetricFn euclidean() {
    return [](Vec2) { return Mat2{1.0, 0.0, 1.0}; };
}

inline MetricFn constant(Mat2 g) {
    return [g](Vec2) { return g; };
}

//! g0 = exp(2 u) * identity
inline MetricFn conformal(std::function<double(Vec2)> u) {
    return [u = std::move(u)](Vec2 x) {
        const double s = std::exp(2.0 * u(x));
        return Mat2{s, 0.0, s};
    };
}

//! conformal metric exp(2 u) e with u a centred Gaussian of given amplitude
inline MetricFn conformal_gaussian(double amplitude, double width) {
    return conformal([amplitude, width](Vec2 x) {
        return amplitude * std::exp(-(x.x * x.x + x.y * x.y) / (2.0 * width * width));
    });
}

}  // namespace metrics

/// Transversal surface (M0, g0) on a single global chart together with the
/// conformal factor c(x1, x') of the product metric c (e + g0).
struct MetricChart {
    DomainKind kind = DomainKind::disk;
    double size = 1.0;  // disk radius or square side
    Grid2 grid;
    MetricFn metric = metrics::euclidean();
    ConformalFn conformal = [](double, Vec2) { return 1.0; };
    std::vector<Mat2> metric_nodes;
    bool flat = true;  // metric is the identity everywhere

    static MetricChart disk(double radius, int n, MetricFn g0 = metrics::euclidean(), bool is_flat = true) {
        MetricChart c;
        c.kind = DomainKind::disk;
        c.size = radius;
        c.grid = Grid2::square(n, -radius, radius);
        c.metric = std::move(g0);
        c.flat = is_flat;
        c.sample();
        return c;
    }

    static MetricChart square(double side, int n, MetricFn g0 = metrics::euclidean(), bool is_flat = true) {
        MetricChart c;
        c.kind = DomainKind::square;
        c.size = side;
        c.grid = Grid2::square(n, -0.5 * side, 0.5 * side);
        c.metric = std::move(g0);
        c.flat = is_flat;
        c.sample();
        return c;
    }

    void sample() {
        metric_nodes.resize(grid.n_nodes());
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) metric_nodes[grid.node(i, j)] = metric(grid.node_pos(i, j));
    }

    Mat2 g(Vec2 x) const { return metric(x); }

    //! signed level function, negative strictly inside
    double level(Vec2 x) const {
        if (kind == DomainKind::disk) return std::hypot(x.x, x.y) - size;
        return std::max(std::abs(x.x), std::abs(x.y)) - 0.5 * size;
    }

    //! differential of the level function (outer conormal direction)
    Vec2 level_grad(Vec2 x) const {
        if (kind == DomainKind::disk) {
            const double r = std::hypot(x.x, x.y);
            if (r == 0.0) return {1.0, 0.0};
            return {x.x / r, x.y / r};
        }
        if (std::abs(x.x) >= std::abs(x.y)) return {x.x >= 0 ? 1.0 : -1.0, 0.0};
        return {0.0, x.y >= 0 ? 1.0 : -1.0};
    }

    //! distance from a square corner; infinite for the disk
    double corner_distance(Vec2 x) const {
        if (kind == DomainKind::disk) return std::numeric_limits<double>::infinity();
        return std::abs(std::abs(x.x) - std::abs(x.y)) + std::abs(std::max(std::abs(x.x), std::abs(x.y)) - 0.5 * size);
    }

    bool inside(Vec2 x) const { return level(x) < 0.0; }

    double diameter() const { return kind == DomainKind::disk ? 2.0 * size : std::sqrt(2.0) * size; }

    //! g0-unit outward normal vector at a boundary point
    Vec2 outward_normal(Vec2 x) const {
        const Vec2 dr = level_grad(x);
        const Mat2 gi = g(x).inverse();
        const Vec2 v = gi.apply(dr);
        return (1.0 / std::sqrt(gi.quad(dr, dr))) * v;
    }

    //! <xi, nu>_g for the outward unit normal; negative for inflow
    double normal_component(Vec2 x, Vec2 xi) const {
        const Vec2 dr = level_grad(x);
        const Mat2 gi = g(x).inverse();
        return dot(dr, xi) / std::sqrt(gi.quad(dr, dr));
    }

    double speed(Vec2 x, Vec2 v) const { return std::sqrt(g(x).quad(v, v)); }

    /// Check positivity of g0 and c and a finite-difference smoothness
    /// bound on both. Throws ConfigError naming the first violation.
    void validate(double smoothness_bound = 1e3) const {
        const double h = grid.h;
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                const Mat2& m = metric_nodes[grid.node(i, j)];
                const auto ev = m.eigenvalues();
                if (!(ev[0] > 0.0)) {
                    std::ostringstream os;
                    os << "metric not positive definite at node (" << i << "," << j << ")";
                    throw ConfigError(os.str());
                }
                const Vec2 x = grid.node_pos(i, j);
                const double c0 = conformal(0.0, x);
                if (!(c0 > 0.0)) throw ConfigError("conformal factor must be positive");
                if (i + 1 < grid.nx) {
                    const Mat2& mr = metric_nodes[grid.node(i + 1, j)];
                    const double dg = std::max({std::abs(mr.a - m.a), std::abs(mr.b - m.b), std::abs(mr.d - m.d)}) / h;
                    const double dc = std::abs(conformal(0.0, grid.node_pos(i + 1, j)) - c0) / h;
                    if (dg > smoothness_bound || dc > smoothness_bound)
                        throw ConfigError("metric or conformal factor exceeds smoothness bound");
                }
                if (j + 1 < grid.ny) {
                    const Mat2& mu = metric_nodes[grid.node(i, j + 1)];
                    const double dg = std::max({std::abs(mu.a - m.a), std::abs(mu.b - m.b), std::abs(mu.d - m.d)}) / h;
                    const double dc = std::abs(conformal(0.0, grid.node_pos(i, j + 1)) - c0) / h;
                    if (dg > smoothness_bound || dc > smoothness_bound)
                        throw ConfigError("metric or conformal factor exceeds smoothness bound");
                }
            }
        }
    }
};

using Christoffel = std::array<std::array<std::array<double, 2>, 2>, 2>;  // [i][j][k] = Gamma^i_jk

namespace detail {

inline Christoffel christoffel_unchecked(const MetricChart& chart, Vec2 x) {
    Christoffel G{};
    if (chart.flat) return G;
    const double d = 1e-5 * chart.size;
    // dg[l] = partial_l g
    std::array<Mat2, 2> dg;
    for (int l = 0; l < 2; ++l) {
        Vec2 e{l == 0 ? d : 0.0, l == 1 ? d : 0.0};
        const Mat2 gp = chart.g(x + e);
        const Mat2 gm = chart.g(x - e);
        dg[l] = Mat2{(gp.a - gm.a) / (2 * d), (gp.b - gm.b) / (2 * d), (gp.d - gm.d) / (2 * d)};
    }
    const Mat2 gi = chart.g(x).inverse();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = j; k < 2; ++k) {
                double s = 0.0;
                for (int l = 0; l < 2; ++l) s += gi(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
                G[i][j][k] = G[i][k][j] = 0.5 * s;
            }
    return G;
}

struct GeoState {
    Vec2 x;
    Vec2 v;
};

inline GeoState geodesic_rhs(const MetricChart& chart, const GeoState& s) {
    const Christoffel G = christoffel_unchecked(chart, s.x);
    Vec2 acc;
    double a[2] = {0.0, 0.0};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) a[i] -= G[i][j][k] * s.v[j] * s.v[k];
    acc = {a[0], a[1]};
    return {s.v, acc};
}

inline GeoState rk4_step(const MetricChart& chart, const GeoState& s, double dt) {
    if (chart.flat) return {s.x + dt * s.v, s.v};
    auto add = [](const GeoState& a, const GeoState& b, double f) { return GeoState{a.x + f * b.x, a.v + f * b.v}; };
    const GeoState k1 = geodesic_rhs(chart, s);
    const GeoState k2 = geodesic_rhs(chart, add(s, k1, 0.5 * dt));
    const GeoState k3 = geodesic_rhs(chart, add(s, k2, 0.5 * dt));
    const GeoState k4 = geodesic_rhs(chart, add(s, k3, dt));
    return {s.x + (dt / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            s.v + (dt / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}

}  // namespace detail

/// Christoffel symbols of g0 at an interior point, from centred differences
/// of the metric. Symmetric in the lower indices.
inline Christoffel christoffel(const MetricChart& chart, Vec2 x) {
    if (!chart.inside(x)) throw DomainError("christoffel: point outside chart domain");
    return detail::christoffel_unchecked(chart, x);
}

struct GeodesicSample {
    double t = 0.0;
    Vec2 x;
    Vec2 xi;
};

struct GeodesicPath {
    Vec2 start;
    Vec2 direction;
    std::vector<GeodesicSample> samples;
    double exit_time = 0.0;
    bool nontangential = false;
};

struct TraceOptions {
    double eps_exit = 1e-10;   // bisection tolerance on the exit time
    double t_max_factor = 50;  // trapped-ray cap in units of the diameter
    double eps_tan = 1e-3;
    double corner_tol = 1e-3;  // relative to chart size, square charts only
};

/// Nontangential iff tau > 0, both endpoint velocities make |<xi, nu>| above
/// eps_tan with the boundary and every interior sample is strictly inside.
inline bool is_nontangential(const MetricChart& chart, const GeodesicPath& path, double eps_tan,
                             double corner_tol = 1e-3) {
    if (path.samples.size() < 2 || !(path.exit_time > 0.0)) return false;
    const auto& first = path.samples.front();
    const auto& last = path.samples.back();
    if (chart.corner_distance(first.x) < corner_tol * chart.size) return false;
    if (chart.corner_distance(last.x) < corner_tol * chart.size) return false;
    const double cin = chart.normal_component(first.x, first.xi) / chart.speed(first.x, first.xi);
    const double cout = chart.normal_component(last.x, last.xi) / chart.speed(last.x, last.xi);
    if (!(std::abs(cin) > eps_tan && std::abs(cout) > eps_tan)) return false;
    for (std::size_t k = 1; k + 1 < path.samples.size(); ++k)
        if (!(chart.level(path.samples[k].x) < 0.0)) return false;
    return true;
}

/// Trace the unit-speed geodesic from boundary point x with inflow direction
/// xi using fixed-step RK4; the exit time is located by bisection on the
/// boundary crossing bracket and the path ends exactly there.
inline GeodesicPath trace_geodesic(const MetricChart& chart, Vec2 x, Vec2 xi, double step,
                                   const TraceOptions& opt = {}) {
    if (!(step > 0.0)) throw std::invalid_argument("trace_geodesic: step must be positive");
    const double sp = chart.speed(x, xi);
    if (std::abs(sp - 1.0) > 1e-8) throw std::invalid_argument("trace_geodesic: direction is not g0-unit");
    if (chart.normal_component(x, xi) > 1e-12) throw std::invalid_argument("trace_geodesic: direction is not inflow");

    GeodesicPath path;
    path.start = x;
    path.direction = xi;
    path.samples.push_back({0.0, x, xi});

    const double t_max = opt.t_max_factor * chart.diameter();
    detail::GeoState s{x, xi};
    double t = 0.0;
    bool at_start = true;
    while (true) {
        const detail::GeoState trial = detail::rk4_step(chart, s, step);
        if (chart.level(trial.x) < 0.0) {
            s = trial;
            t += step;
            at_start = false;
            path.samples.push_back({t, s.x, s.v});
            if (t > t_max) throw TrappedRayError("trace_geodesic: ray does not exit within arc-length cap");
            continue;
        }
        // exit inside (0, step]: bracket [lo (inside), hi (outside)]
        double lo = 0.0, hi = step;
        if (at_start) {
            double sig = 0.5 * step;
            bool found = false;
            while (sig > 1e-14 * step) {
                if (chart.level(detail::rk4_step(chart, s, sig).x) < 0.0) {
                    found = true;
                    break;
                }
                hi = sig;
                sig *= 0.5;
            }
            if (!found) {
                path.exit_time = 0.0;
                path.nontangential = false;
                return path;  // tangent start
            }
            lo = sig;
        }
        while (hi - lo > opt.eps_exit) {
            const double mid = 0.5 * (lo + hi);
            if (chart.level(detail::rk4_step(chart, s, mid).x) < 0.0)
                lo = mid;
            else
                hi = mid;
        }
        const double sig = 0.5 * (lo + hi);
        const detail::GeoState e = detail::rk4_step(chart, s, sig);
        t += sig;
        path.samples.push_back({t, e.x, e.v});
        path.exit_time = t;
        break;
    }
    path.nontangential = is_nontangential(chart, path, opt.eps_tan, opt.corner_tol);
    return path;
}

struct Ray {
    Vec2 x;
    Vec2 xi;
    GeodesicPath path;
};

/// Sampled subset of the inflow boundary with traced, nontangential rays.
struct RaySet {
    std::vector<Ray> entries;
    int n_points = 0;
    int n_directions = 0;
    double eps_tan = 1e-3;
    double step = 0.0;
    int dropped_trapped = 0;
    int dropped_tangential = 0;
    std::string id;

    std::size_t size() const { return entries.size(); }
};

//! boundary point with parameter s in [0, 1) going counter-clockwise
inline Vec2 boundary_point(const MetricChart& chart, double s) {
    if (chart.kind == DomainKind::disk) {
        const double th = 2.0 * pi * s;
        return {chart.size * std::cos(th), chart.size * std::sin(th)};
    }
    const double half = 0.5 * chart.size;
    const double u = 4.0 * s;  // perimeter in units of the side
    const int side = std::min(3, int(u));
    const double f = u - side;
    switch (side) {
        case 0: return {-half + f * chart.size, -half};
        case 1: return {half, -half + f * chart.size};
        case 2: return {half - f * chart.size, half};
        default: return {-half, half - f * chart.size};
    }
}

/// g0-unit inflow direction making angle beta with the inward normal.
inline Vec2 inflow_direction(const MetricChart& chart, Vec2 x, double beta) {
    const Vec2 nout = chart.outward_normal(x);
    const Vec2 dr = chart.level_grad(x);
    Vec2 tang{-dr.y, dr.x};
    tang = (1.0 / chart.speed(x, tang)) * tang;
    return std::cos(beta) * (-1.0 * nout) + std::sin(beta) * tang;
}

/// Deterministic fan sampling: n_pts boundary points, n_dirs inflow angles
/// at each. Trapped and tangential rays are dropped and counted.
inline RaySet sample_inflow_boundary(const MetricChart& chart, int n_pts, int n_dirs, double eps_tan,
                                     double step = 0.0, unsigned workers = default_workers()) {
    if (n_pts < 1 || n_dirs < 1) throw ConfigError("sample_inflow_boundary: counts must be >= 1");
    if (step <= 0.0) step = 0.25 * chart.grid.h;
    TraceOptions opt;
    opt.eps_tan = eps_tan;
    const std::size_t total = std::size_t(n_pts) * n_dirs;
    std::vector<Ray> rays(total);
    std::vector<int> status(total, 0);  // 0 ok, 1 trapped, 2 tangential
    parallel_for(total, workers, [&](std::size_t idx) {
        const int i = int(idx) / n_dirs;
        const int j = int(idx) % n_dirs;
        const double s = chart.kind == DomainKind::disk ? double(i) / n_pts : (i + 0.5) / n_pts;
        const Vec2 x = boundary_point(chart, s);
        const double beta = -0.5 * pi + pi * (j + 0.5) / n_dirs;
        const Vec2 xi = inflow_direction(chart, x, beta);
        try {
            GeodesicPath p = trace_geodesic(chart, x, xi, step, opt);
            if (!p.nontangential) status[idx] = 2;
            rays[idx] = Ray{x, xi, std::move(p)};
        } catch (const TrappedRayError&) {
            status[idx] = 1;
        }
    });
    RaySet set;
    set.n_points = n_pts;
    set.n_directions = n_dirs;
    set.eps_tan = eps_tan;
    set.step = step;
    for (std::size_t k = 0; k < total; ++k) {
        if (status[k] == 0)
            set.entries.push_back(std::move(rays[k]));
        else if (status[k] == 1)
            ++set.dropped_trapped;
        else
            ++set.dropped_tangential;
    }
    if (set.entries.empty()) throw ConfigError("sample_inflow_boundary: no admissible rays");
    std::ostringstream os;
    os << (chart.kind == DomainKind::disk ? "disk" : "square") << "-" << n_pts << "x" << n_dirs << "-" << set.entries.size();
    set.id = os.str();
    return set;
}

}  // namespace cta
