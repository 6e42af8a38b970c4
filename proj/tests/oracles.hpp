// Test-only oracles, independent of the library code paths they check:
// finite differences of kernel evaluations, Vandermonde-solve finite
// difference weights, Gauss-Legendre quadrature of the process-noise
// integral, and brute-force joint-Gaussian conditioning over a state chain.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pnmol/kernels.hpp"

namespace oracles {

using Bivariate = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Central second-difference Laplacian in the first argument.
inline double fd_laplacian_left(const Bivariate& f, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, double h) {
    double out = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        out += (f(xp, y) - 2.0 * f(x, y) + f(xm, y)) / (h * h);
    }
    return out;
}

/// Central first difference along v in the first argument.
inline double fd_directional_left(const Bivariate& f, const Eigen::VectorXd& v,
                                  const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
    return (f(x + h * v, y) - f(x - h * v, y)) / (2.0 * h);
}

/// Same differences applied to the second argument.
inline double fd_laplacian_right(const Bivariate& f, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, double h) {
    return fd_laplacian_left([&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return f(b, a); },
                             y, x, h);
}

inline double fd_directional_right(const Bivariate& f, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
    return (f(x, y + h * v) - f(x, y - h * v)) / (2.0 * h);
}

/// Classical finite-difference weights: solve the Vandermonde system so the
/// weights reproduce the m-th derivative of all monomials up to degree n-1
/// at the evaluation point.
inline Eigen::VectorXd fd_weights_1d(const Eigen::VectorXd& points, double center, int deriv) {
    const Eigen::Index n = points.size();
    Eigen::MatrixXd V(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (Eigen::Index row = 0; row < n; ++row) {
        for (Eigen::Index j = 0; j < n; ++j)
            V(row, j) = std::pow(points(j) - center, static_cast<double>(row));
        if (row == deriv) {
            double fact = 1.0;
            for (int i = 2; i <= deriv; ++i) fact *= i;
            rhs(row) = fact;
        }
    }
    return V.fullPivLu().solve(rhs);
}

/// 10-node Gauss-Legendre quadrature of M(tau) over [0, h].
inline Eigen::MatrixXd gauss_legendre(const std::function<Eigen::MatrixXd(double)>& integrand,
                                      double h, Eigen::Index dim) {
    static const double nodes[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                    0.8650633666889845, 0.9739065285171717};
    static const double weights[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                      0.1494513491505806, 0.0666713443086881};
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < 5; ++i) {
        const double a = 0.5 * h * (1.0 - nodes[i]);
        const double b = 0.5 * h * (1.0 + nodes[i]);
        acc += weights[i] * (integrand(a) + integrand(b));
    }
    return 0.5 * h * acc;
}

/// exp(A t) for nilpotent A via the (finite) Taylor series.
inline Eigen::MatrixXd expm_nilpotent(const Eigen::MatrixXd& A, double t) {
    const Eigen::Index n = A.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        term = term * (A * t) / static_cast<double>(k);
        out += term;
    }
    return out;
}

/// Quadrature route to the process-noise covariance of a linear SDE:
/// Sigma(h) = int_0^h exp(A (h-tau)) B B^T exp(A (h-tau))^T dtau.
inline Eigen::MatrixXd process_noise_quadrature(const Eigen::MatrixXd& A,
                                                const Eigen::VectorXd& B, double h) {
    return gauss_legendre(
        [&](double tau) {
            const Eigen::MatrixXd phi = expm_nilpotent(A, h - tau);
            const Eigen::VectorXd v = phi * B;
            return Eigen::MatrixXd(v * v.transpose());
        },
        h, A.rows());
}

inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_cutoff = 1e-12) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rel_cutoff * sv(0) : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Gaussian over the stacked states (x_0, ..., x_K) of a linear chain, with
/// batch conditioning on affine observations. This is the brute-force route
/// against which filtering and smoothing are checked.
struct JointGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::Index state_dim = 0;
    Eigen::Index num_times = 0;

    static JointGaussian from_chain(const Eigen::VectorXd& m0, const Eigen::MatrixXd& C0,
                                    const std::vector<Eigen::MatrixXd>& phis,
                                    const std::vector<Eigen::MatrixXd>& sigmas) {
        const Eigen::Index d = m0.size();
        const auto T = static_cast<Eigen::Index>(phis.size()) + 1;
        JointGaussian jg;
        jg.state_dim = d;
        jg.num_times = T;
        jg.mean = Eigen::VectorXd::Zero(d * T);
        jg.cov = Eigen::MatrixXd::Zero(d * T, d * T);
        jg.mean.head(d) = m0;
        jg.cov.topLeftCorner(d, d) = C0;
        for (Eigen::Index k = 1; k < T; ++k) {
            const Eigen::MatrixXd& phi = phis[static_cast<std::size_t>(k - 1)];
            const Eigen::MatrixXd& sig = sigmas[static_cast<std::size_t>(k - 1)];
            jg.mean.segment(k * d, d) = phi * jg.mean.segment((k - 1) * d, d);
            jg.cov.block(k * d, k * d, d, d) =
                phi * jg.cov.block((k - 1) * d, (k - 1) * d, d, d) * phi.transpose() + sig;
            for (Eigen::Index j = 0; j < k; ++j) {
                jg.cov.block(j * d, k * d, d, d) =
                    jg.cov.block(j * d, (k - 1) * d, d, d) * phi.transpose();
                jg.cov.block(k * d, j * d, d, d) = jg.cov.block(j * d, k * d, d, d).transpose();
            }
        }
        return jg;
    }

    /// Condition on H z + b = 0 with Gaussian noise R (possibly singular);
    /// the pseudo-inverse handles exactly redundant rows.
    void condition(const Eigen::MatrixXd& H, const Eigen::VectorXd& b, const Eigen::MatrixXd& R) {
        const Eigen::MatrixXd S = H * cov * H.transpose() + R;
        const Eigen::MatrixXd gain = cov * H.transpose() * pinv(S);
        mean -= gain * (H * mean + b);
        cov = cov - gain * H * cov;
        cov = 0.5 * (cov + cov.transpose());
    }

    Eigen::VectorXd marginal_mean(Eigen::Index k) const {
        return mean.segment(k * state_dim, state_dim);
    }
    Eigen::MatrixXd marginal_cov(Eigen::Index k) const {
        return cov.block(k * state_dim, k * state_dim, state_dim, state_dim);
    }
};

inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    const double scale = std::max(1e-15, want.cwiseAbs().maxCoeff());
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline Eigen::MatrixXd random_points(int n, int d, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out(i, j) = unif(rng);
    return out;
}

}  // namespace oracles
