#pragma once

#include "cta/core.hpp"

namespace cta {

/// Uniform node grid on a square patch of the chart plane.
///
/// Staggered layout: 0-forms at nodes (i, j), x-edges at (i+1/2, j),
/// y-edges at (i, j+1/2) and cells at (i+1/2, j+1/2). Linear indices run with
/// i fastest.
struct Grid2 {
    int nx = 0;
    int ny = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double h = 1.0;

    std::size_t n_nodes() const { return std::size_t(nx) * ny; }
    std::size_t n_xedges() const { return std::size_t(nx - 1) * ny; }
    std::size_t n_yedges() const { return std::size_t(nx) * (ny - 1); }
    std::size_t n_cells() const { return std::size_t(nx - 1) * (ny - 1); }

    std::size_t node(int i, int j) const { return std::size_t(i) + std::size_t(nx) * j; }
    std::size_t xedge(int i, int j) const { return std::size_t(i) + std::size_t(nx - 1) * j; }
    std::size_t yedge(int i, int j) const { return std::size_t(i) + std::size_t(nx) * j; }
    std::size_t cell(int i, int j) const { return std::size_t(i) + std::size_t(nx - 1) * j; }

    Vec2 node_pos(int i, int j) const { return {x0 + i * h, y0 + j * h}; }
    Vec2 xedge_pos(int i, int j) const { return {x0 + (i + 0.5) * h, y0 + j * h}; }
    Vec2 yedge_pos(int i, int j) const { return {x0 + i * h, y0 + (j + 0.5) * h}; }
    Vec2 cell_pos(int i, int j) const { return {x0 + (i + 0.5) * h, y0 + (j + 0.5) * h}; }

    double x_max() const { return x0 + (nx - 1) * h; }
    double y_max() const { return y0 + (ny - 1) * h; }

    bool same_shape(const Grid2& o) const {
        return nx == o.nx && ny == o.ny && x0 == o.x0 && y0 == o.y0 && h == o.h;
    }

    //! grid of n x n nodes covering [lo, hi]^2
    static Grid2 square(int n, double lo, double hi) {
        if (n < 3) throw ConfigError("grid needs at least 3 nodes per axis");
        if (!(hi > lo)) throw ConfigError("grid extent must be positive");
        return Grid2{n, n, lo, lo, (hi - lo) / (n - 1)};
    }
};

/// Product grid {x1 samples on [-a, a]} x chart grid.
///
/// Node (m, k) with m the x1 index and k a chart node index is stored at
/// m + n1 * k so that x1 lines are contiguous. Edges in the x1 direction sit
/// at (m+1/2, k) and are stored at m + (n1-1) * k.
struct Grid3 {
    int n1 = 0;
    double a = 1.0;
    Grid2 chart;

    double h1() const { return 2.0 * a / (n1 - 1); }
    double x1(int m) const { return -a + m * h1(); }
    double x1_mid(int m) const { return -a + (m + 0.5) * h1(); }

    std::size_t n_nodes() const { return std::size_t(n1) * chart.n_nodes(); }
    std::size_t n_e1() const { return std::size_t(n1 - 1) * chart.n_nodes(); }
    std::size_t n_e2() const { return std::size_t(n1) * chart.n_xedges(); }
    std::size_t n_e3() const { return std::size_t(n1) * chart.n_yedges(); }
    std::size_t n_f12() const { return std::size_t(n1 - 1) * chart.n_xedges(); }
    std::size_t n_f13() const { return std::size_t(n1 - 1) * chart.n_yedges(); }
    std::size_t n_f23() const { return std::size_t(n1) * chart.n_cells(); }

    std::size_t node(int m, std::size_t k) const { return std::size_t(m) + std::size_t(n1) * k; }
    std::size_t e1(int m, std::size_t k) const { return std::size_t(m) + std::size_t(n1 - 1) * k; }
    std::size_t e2(int m, std::size_t kx) const { return std::size_t(m) + std::size_t(n1) * kx; }
    std::size_t e3(int m, std::size_t ky) const { return std::size_t(m) + std::size_t(n1) * ky; }
    std::size_t f12(int m, std::size_t kx) const { return std::size_t(m) + std::size_t(n1 - 1) * kx; }
    std::size_t f13(int m, std::size_t ky) const { return std::size_t(m) + std::size_t(n1 - 1) * ky; }
    std::size_t f23(int m, std::size_t kc) const { return std::size_t(m) + std::size_t(n1) * kc; }

    bool same_shape(const Grid3& o) const { return n1 == o.n1 && a == o.a && chart.same_shape(o.chart); }

    static Grid3 make(int n1, double a, const Grid2& chart) {
        if (n1 < 3) throw ConfigError("product grid needs at least 3 x1 samples");
        if (!(a > 0.0)) throw ConfigError("x1 half-width must be positive");
        return Grid3{n1, a, chart};
    }
};

}  // namespace cta
