#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <stdexcept>

#include "pnmol/linalg.hpp"

namespace pnmol::statespace {

/// Linear time-invariant SDE d v(t) = A v(t) dt + B dw(t) for the stack of a
/// scalar process and its first nu time-derivatives.
struct LtiSde {
    Eigen::MatrixXd drift;       // (nu+1) x (nu+1)
    Eigen::VectorXd dispersion;  // (nu+1)
    Eigen::VectorXd init_mean;   // (nu+1)
    Eigen::MatrixXd init_cov;    // (nu+1) x (nu+1), unscaled
    int num_derivatives = 0;
};

/// One-step discrete transition x_{k+1} | x_k ~ N(Phi x_k, gamma^2 Sigma).
struct DiscreteTransition {
    Eigen::MatrixXd transition;     // Phi
    Eigen::MatrixXd process_noise;  // Sigma, unscaled
    double step = 0.0;
};

/// nu-times integrated Wiener process. The initial covariance is the
/// identity: any full-rank choice works because the solver conditions the
/// initial state on the initial values and the t0 residual immediately.
inline LtiSde iwp_sde(int nu) {
    if (nu < 0) throw std::invalid_argument("iwp_sde: nu must be non-negative");
    const int n = nu + 1;
    LtiSde sde;
    sde.drift = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) sde.drift(i, i + 1) = 1.0;
    sde.dispersion = Eigen::VectorXd::Zero(n);
    sde.dispersion(n - 1) = 1.0;
    sde.init_mean = Eigen::VectorXd::Zero(n);
    sde.init_cov = Eigen::MatrixXd::Identity(n, n);
    sde.num_derivatives = nu;
    return sde;
}

/// Matrix-fraction discretization: with the block matrix
///   C = [[A, B B^T], [0, -A^T]],
/// exp(C h) = [[Phi, G], [0, exp(-A^T h)]] and Sigma = G exp(A^T h).
inline DiscreteTransition discretize_sde(const LtiSde& sde, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("discretize_sde: step must be positive");
    const Eigen::Index n = sde.drift.rows();
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = sde.drift;
    block.topRightCorner(n, n) = sde.dispersion * sde.dispersion.transpose();
    block.bottomRightCorner(n, n) = -sde.drift.transpose();
    const Eigen::MatrixXd expm = (block * h).exp();

    DiscreteTransition out;
    out.transition = expm.topLeftCorner(n, n);
    out.process_noise =
        linalg::symmetrized(expm.topRightCorner(n, n) * out.transition.transpose());
    out.step = h;
    return out;
}

/// Kronecker lift onto q spatial dimensions: Phi ⊗ I_q and Sigma ⊗ M.
inline DiscreteTransition kron_lift(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& sigma,
                                    const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw std::invalid_argument("kron_lift: M must be square");
    DiscreteTransition out;
    out.transition =
        linalg::kron(phi, Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    out.process_noise = linalg::kron(sigma, M);
    return out;
}

inline DiscreteTransition kron_lift(const DiscreteTransition& tr, const Eigen::MatrixXd& M) {
    DiscreteTransition out = kron_lift(tr.transition, tr.process_noise, M);
    out.step = tr.step;
    return out;
}

/// Initial moments of the lifted process: mean m0 ⊗ 1_q, covariance C0 ⊗ M.
struct LiftedInitial {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov_unscaled;
};

inline LiftedInitial lift_initial(const LtiSde& sde, const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw std::invalid_argument("lift_initial: M must be square");
    LiftedInitial out;
    out.mean = linalg::kron_vec(sde.init_mean, Eigen::VectorXd::Ones(M.rows()));
    out.cov_unscaled = linalg::kron(sde.init_cov, M);
    return out;
}

}  // namespace pnmol::statespace
