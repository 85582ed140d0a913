#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cta {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

//! error raised when a point lies outside the chart domain
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//! error raised for inconsistent or insufficient configuration
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//! error raised by iterative solvers that fail to reach tolerance
struct NumericError : std::runtime_error {
    NumericError(const std::string& what, double residual_ = 0.0, double condition_ = 0.0)
        : std::runtime_error(what), residual(residual_), condition(condition_) {}
    double residual;
    double condition;
};

//! geodesic that does not leave the manifold within the arc-length cap
struct TrappedRayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

//! field interpolation requested outside the grid hull
struct InterpolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
    double operator[](int i) const { return i == 0 ? x : y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

//! symmetric 2x2 matrix (metric tensor components g_11, g_12, g_22)
struct Mat2 {
    double a = 1.0;  // g_11
    double b = 0.0;  // g_12 = g_21
    double d = 1.0;  // g_22

    double det() const { return a * d - b * b; }
    Mat2 inverse() const {
        const double dt = det();
        return {d / dt, -b / dt, a / dt};
    }
    Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, b * v.x + d * v.y}; }
    double quad(Vec2 u, Vec2 v) const { return dot(u, apply(v)); }
    std::array<double, 2> eigenvalues() const {
        const double tr = 0.5 * (a + d);
        const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
        return {tr - disc, tr + disc};
    }
    double operator()(int i, int j) const {
        if (i == 0 && j == 0) return a;
        if (i == 1 && j == 1) return d;
        return b;
    }
};

//! Run fn(i) for i in [0, n) on up to `workers` threads. Each index is
//! processed exactly once and fn must only write to slot i, so results do not
//! depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t nw = std::min<std::size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(nw);
    std::exception_ptr err;
    std::mutex err_mutex;
    for (std::size_t w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += nw) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

//! global default worker count used by the pipelines
inline unsigned& default_workers() {
    static unsigned w = 1;
    return w;
}

inline double max_abs(const std::vector<cplx>& v) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
}

inline double l2(const std::vector<cplx>& v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s);
}

inline double l2_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s);
}

inline double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace cta
