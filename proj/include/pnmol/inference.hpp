#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

#include "pnmol/linalg.hpp"
#include "pnmol/statespace.hpp"

namespace pnmol::inference {

/// Gaussian state with unscaled covariance: the true covariance is
/// gamma^2 * cov_unscaled, with the global output scale gamma applied at
/// read-out after calibration.
struct GaussianBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov_unscaled;

    Eigen::Index dim() const { return mean.size(); }
};

/// Affine observation of the full state: residual = H x + b with Gaussian
/// noise gamma^2 * noise_unscaled (zero rows/cols for Dirac information).
struct LinearizedObservation {
    Eigen::MatrixXd H;
    Eigen::VectorXd b;
    Eigen::MatrixXd noise_unscaled;

    Eigen::Index rows() const { return H.rows(); }
};

/// Filter-time innovation moments kept for output-scale calibration.
struct ResidualRecord {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov_unscaled;
    double time = 0.0;
};

/// Block layout of the solver state. The state stacks, per time-derivative
/// 0..nu, the function values on all fields and grid points (field-major);
/// optionally followed by the same structure for the latent force xi and the
/// boundary latent force theta.
struct StateLayout {
    int nu = 1;
    Eigen::Index num_fields = 1;
    Eigen::Index num_points = 0;    // grid points carried in the state
    Eigen::Index num_boundary = 0;  // boundary points (theta block only)
    bool has_xi = false;
    bool has_theta = false;

    Eigen::Index field_dim() const { return num_fields * num_points; }
    Eigen::Index u_dim() const { return (nu + 1) * field_dim(); }
    Eigen::Index xi_dim() const { return has_xi ? u_dim() : 0; }
    Eigen::Index theta_dim() const {
        return has_theta ? (nu + 1) * num_fields * num_boundary : 0;
    }
    Eigen::Index dim() const { return u_dim() + xi_dim() + theta_dim(); }

    /// Offset of the i-th derivative block of u.
    Eigen::Index u_block(int deriv) const { return deriv * field_dim(); }
    Eigen::Index xi_block(int deriv) const {
        if (!has_xi) throw std::logic_error("StateLayout: no xi block");
        return u_dim() + deriv * field_dim();
    }
    Eigen::Index theta_block(int deriv) const {
        if (!has_theta) throw std::logic_error("StateLayout: no theta block");
        return u_dim() + xi_dim() + deriv * num_fields * num_boundary;
    }
};

/// Time-dependent PDE right-hand side restricted to the grid, with closed
/// form Jacobians with respect to the function values and the operator
/// values. All vectors are field-major of length num_fields * num_points.
struct GridVectorField {
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)> value;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
        jacobian_u;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
        jacobian_du;
};

inline GaussianBelief predict(const GaussianBelief& belief,
                              const statespace::DiscreteTransition& tr) {
    if (tr.transition.cols() != belief.dim())
        throw std::invalid_argument("predict: dimension mismatch");
    GaussianBelief out;
    out.mean = tr.transition * belief.mean;
    out.cov_unscaled = linalg::symmetrized(
        tr.transition * belief.cov_unscaled * tr.transition.transpose() + tr.process_noise);
    return out;
}

/// First-order linearization of the PDE residual r = u_dot - F(t, u, D u + xi)
/// at the point (eta_u, eta_xi), assembled over the full state layout.
///
/// The chain rule gives H_u = dF/du + dF/dDu * D and H_xi = dF/dDu; the
/// residual in observation form is
///   r = [I over u-dot block] - H_u [u block] - H_xi [xi block] + b.
/// For layouts without a xi block (white-noise variant) the xi contribution
/// moves into the measurement noise, which the caller assembles.
struct PdeLinearization {
    Eigen::MatrixXd H_u;   // on function values
    Eigen::MatrixXd H_xi;  // on latent force values
    Eigen::VectorXd b;     // affine remainder of -F
};

inline PdeLinearization linearize_pde(const GridVectorField& field, double t,
                                      const Eigen::VectorXd& eta_u,
                                      const Eigen::VectorXd& eta_xi,
                                      const Eigen::MatrixXd& D_full) {
    const Eigen::VectorXd du = D_full * eta_u + eta_xi;
    const Eigen::VectorXd f0 = field.value(t, eta_u, du);
    const Eigen::MatrixXd ju = field.jacobian_u(t, eta_u, du);
    const Eigen::MatrixXd jdu = field.jacobian_du(t, eta_u, du);
    if (ju.rows() != f0.size() || jdu.rows() != f0.size())
        throw std::invalid_argument("linearize: Jacobian shape mismatch");
    PdeLinearization lin;
    lin.H_u = ju + jdu * D_full;
    lin.H_xi = jdu;
    lin.b = -(f0 - lin.H_u * eta_u - lin.H_xi * eta_xi);
    return lin;
}

inline LinearizedObservation linearize(const GridVectorField& field, double t,
                                       const Eigen::VectorXd& eta_u,
                                       const Eigen::VectorXd& eta_xi,
                                       const Eigen::MatrixXd& D_full, const StateLayout& layout,
                                       const Eigen::MatrixXd& E_full) {
    const PdeLinearization lin = linearize_pde(field, t, eta_u, eta_xi, D_full);
    const Eigen::Index m = layout.field_dim();
    LinearizedObservation obs;
    obs.H = Eigen::MatrixXd::Zero(m, layout.dim());
    obs.H.middleCols(layout.u_block(1), m) = Eigen::MatrixXd::Identity(m, m);
    obs.H.middleCols(layout.u_block(0), m) = -lin.H_u;
    if (layout.has_xi) {
        obs.H.middleCols(layout.xi_block(0), m) = -lin.H_xi;
        obs.noise_unscaled = Eigen::MatrixXd::Zero(m, m);
    } else {
        obs.noise_unscaled = linalg::symmetrized(lin.H_xi * E_full * lin.H_xi.transpose());
    }
    obs.b = lin.b;
    return obs;
}

/// Gaussian conditioning on {H x + b = 0}. Observation rows whose innovation
/// variance is degenerate relative to the rest carry no new information
/// (e.g. boundary rows that repeat an exact previous conditioning); they are
/// dropped if their innovation mean is consistent with zero and rejected as
/// singular otherwise.
inline std::pair<GaussianBelief, ResidualRecord> update(const GaussianBelief& belief,
                                                        const LinearizedObservation& obs,
                                                        double time = 0.0) {
    if (obs.H.cols() != belief.dim()) throw std::invalid_argument("update: dimension mismatch");
    if (obs.rows() == 0) return {belief, ResidualRecord{{}, {}, time}};

    const Eigen::VectorXd innov = obs.H * belief.mean + obs.b;
    const Eigen::MatrixXd S_all = linalg::symmetrized(
        obs.H * belief.cov_unscaled * obs.H.transpose() + obs.noise_unscaled);

    const double s_max = S_all.diagonal().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < S_all.rows(); ++i) {
        if (S_all(i, i) > 1e-10 * s_max) {
            keep.push_back(i);
        } else if (std::abs(innov(i)) > 1e-6 * (1.0 + std::abs(obs.b(i)))) {
            throw linalg::FactorizationError(
                "update: singular innovation with inconsistent mean (redundant observation "
                "rows contradict the state)");
        }
    }
    if (keep.empty()) return {belief, ResidualRecord{{}, {}, time}};

    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd H(m, belief.dim());
    Eigen::VectorXd iota(m);
    Eigen::MatrixXd S(m, m);
    Eigen::MatrixXd R(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        H.row(i) = obs.H.row(keep[static_cast<std::size_t>(i)]);
        iota(i) = innov(keep[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m; ++j) {
            S(i, j) = S_all(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
            R(i, j) = obs.noise_unscaled(keep[static_cast<std::size_t>(i)],
                                         keep[static_cast<std::size_t>(j)]);
        }
    }

    linalg::PsdSolver solver(S);
    const Eigen::MatrixXd gain = solver.solve(H * belief.cov_unscaled).transpose();

    GaussianBelief post;
    post.mean = belief.mean - gain * iota;
    const Eigen::MatrixXd ikh =
        Eigen::MatrixXd::Identity(belief.dim(), belief.dim()) - gain * H;
    post.cov_unscaled = linalg::symmetrized(ikh * belief.cov_unscaled * ikh.transpose() +
                                            gain * R * gain.transpose());
    if (linalg::has_nan(post.mean) || linalg::has_nan(post.cov_unscaled))
        throw linalg::FactorizationError("update: non-finite posterior");
    return {post, ResidualRecord{iota, S, time}};
}

/// Fixed-interval Rauch-Tung-Striebel smoothing. transitions[k] carries the
/// step from time k to k+1; the final belief is returned unchanged.
inline std::vector<GaussianBelief> smooth(
    const std::vector<GaussianBelief>& filtered,
    const std::vector<statespace::DiscreteTransition>& transitions) {
    if (filtered.empty()) return {};
    if (transitions.size() + 1 != filtered.size())
        throw std::invalid_argument("smooth: need one transition per adjacent belief pair");
    std::vector<GaussianBelief> out(filtered.size());
    out.back() = filtered.back();
    for (auto k = static_cast<std::ptrdiff_t>(filtered.size()) - 2; k >= 0; --k) {
        const auto& tr = transitions[static_cast<std::size_t>(k)];
        const GaussianBelief& flt = filtered[static_cast<std::size_t>(k)];
        const Eigen::VectorXd mean_pred = tr.transition * flt.mean;
        const Eigen::MatrixXd cov_pred = linalg::symmetrized(
            tr.transition * flt.cov_unscaled * tr.transition.transpose() + tr.process_noise);
        linalg::PsdSolver solver(cov_pred);
        const Eigen::MatrixXd gain =
            solver.solve(tr.transition * flt.cov_unscaled).transpose();
        const GaussianBelief& next = out[static_cast<std::size_t>(k) + 1];
        GaussianBelief& cur = out[static_cast<std::size_t>(k)];
        cur.mean = flt.mean + gain * (next.mean - mean_pred);
        cur.cov_unscaled = linalg::symmetrized(
            flt.cov_unscaled +
            gain * (next.cov_unscaled - cov_pred) * gain.transpose());
        if (linalg::has_nan(cur.mean)) throw linalg::FactorizationError("smooth: non-finite mean");
    }
    return out;
}

/// Quasi-MLE of the squared output scale: the average Mahalanobis norm of
/// the filter-time innovations under their unscaled covariances, normalized
/// by the total residual dimension summed over time.
inline double calibrate(const std::vector<ResidualRecord>& records) {
    double quad = 0.0;
    Eigen::Index total_dim = 0;
    for (const auto& rec : records) {
        if (rec.mean.size() == 0) continue;
        linalg::PsdSolver solver(rec.cov_unscaled);
        quad += solver.quad_form(rec.mean);
        total_dim += rec.mean.size();
    }
    if (total_dim == 0) return 0.0;
    return quad / static_cast<double>(total_dim);
}

}  // namespace pnmol::inference
