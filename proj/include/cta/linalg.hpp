#pragma once

#include <Eigen/Eigenvalues>

#include "cta/core.hpp"

namespace cta {

using CVec = std::vector<cplx>;

inline cplx inner(const CVec& a, const CVec& b) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline void axpy(cplx alpha, const CVec& x, CVec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

struct SolveReport {
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    double condition = 1.0;  // Lanczos estimate of the operator condition number
};

namespace detail {

//! extreme eigenvalue ratio of the CG Lanczos tridiagonal
inline double lanczos_condition(const std::vector<double>& alphas, const std::vector<double>& betas) {
    const std::size_t k = alphas.size();
    if (k == 0) return 1.0;
    Eigen::VectorXd diag(k);
    Eigen::VectorXd sub(k > 1 ? k - 1 : 1);
    for (std::size_t i = 0; i < k; ++i) {
        diag[i] = 1.0 / alphas[i] + (i > 0 ? betas[i - 1] / alphas[i - 1] : 0.0);
        if (i + 1 < k) sub[i] = std::sqrt(betas[i]) / alphas[i];
    }
    if (k == 1) return 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub.head(k - 1), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Preconditioned conjugate gradients for a Hermitian positive definite
/// operator given as apply(x, y) computing y = A x. `precond` holds the
/// inverse Jacobi diagonal (empty for none). x is used as the initial guess.
template <class Apply>
SolveReport conjugate_gradient(Apply&& apply, const CVec& b, CVec& x, const std::vector<double>& precond,
                               double tol, int max_iter) {
    const std::size_t n = b.size();
    SolveReport rep;
    const double bnorm = std::sqrt(std::real(inner(b, b)));
    if (x.size() != n) x.assign(n, 0.0);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), cplx(0.0));
        rep.converged = true;
        return rep;
    }
    CVec r(n), z(n), p(n), q(n);
    apply(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
    auto prec = [&](const CVec& in, CVec& out) {
        if (precond.empty())
            out = in;
        else
            for (std::size_t i = 0; i < n; ++i) out[i] = precond[i] * in[i];
    };
    prec(r, z);
    p = z;
    double rz = std::real(inner(r, z));
    std::vector<double> alphas, betas;
    double rnorm = std::sqrt(std::real(inner(r, r)));
    int it = 0;
    while (rnorm > tol * bnorm && it < max_iter) {
        apply(p, q);
        const double pq = std::real(inner(p, q));
        if (!(pq > 0.0)) break;
        const double alpha = rz / pq;
        axpy(alpha, p, x);
        axpy(-alpha, q, r);
        prec(r, z);
        const double rz_new = std::real(inner(r, z));
        const double beta = rz_new / rz;
        alphas.push_back(alpha);
        betas.push_back(beta);
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rz = rz_new;
        rnorm = std::sqrt(std::real(inner(r, r)));
        ++it;
    }
    // true residual
    apply(x, q);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::norm(b[i] - q[i]);
    rep.iterations = it;
    rep.rel_residual = std::sqrt(s) / bnorm;
    rep.converged = rep.rel_residual <= tol * 1.0001 || rnorm <= tol * bnorm;
    rep.condition = detail::lanczos_condition(alphas, betas);
    return rep;
}

}  // namespace cta
