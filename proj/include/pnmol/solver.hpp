#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pnmol/discretize.hpp"
#include "pnmol/inference.hpp"
#include "pnmol/kernels.hpp"
#include "pnmol/problems.hpp"
#include "pnmol/statespace.hpp"

namespace pnmol::solver {

enum class Variant { Latent, White, MolBaseline };

struct SolverConfig {
    static constexpr Eigen::Index kGlobalStencil = -1;

    Variant variant = Variant::Latent;
    kernels::Kernel kernel = kernels::Kernel::squared_exponential(0.25, 1);
    int nu = 1;
    Eigen::Index stencil_radius = 1;  // kGlobalStencil selects global collocation
    double dx = 0.2;
    double dt = 1e-2;
    bool calibrate = true;
    double e_scale = 1.0;  // multiplies E in the information model (diagnostics)

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("SolverConfig: dt must be positive");
        if (nu < 1 || nu > 2) throw std::invalid_argument("SolverConfig: nu must be 1 or 2");
    }
};

/// Grid-time marginals of the PDE posterior. Covariances are stored
/// unscaled; the calibrated posterior covariance is gamma_sq * cov.
/// u_mean/u_cov read out the function-value block on the full grid; for the
/// MOL baseline this re-embeds the interior state via the boundary
/// elimination map.
struct SolutionPosterior {
    std::vector<double> times;
    discretize::Grid grid;
    inference::StateLayout layout;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs_unscaled;
    double gamma_sq = 1.0;
    Eigen::MatrixXd embed;         // (L n) x state_dim
    Eigen::VectorXd embed_offset;  // (L n)
    std::string metadata;

    std::size_t num_times() const { return times.size(); }

    Eigen::VectorXd u_mean(std::size_t k) const { return embed * means[k] + embed_offset; }

    Eigen::MatrixXd u_cov_unscaled(std::size_t k) const {
        return linalg::symmetrized(embed * covs_unscaled[k] * embed.transpose());
    }

    /// Calibrated marginal standard deviations of the function values.
    Eigen::VectorXd u_std(std::size_t k) const {
        Eigen::VectorXd var = gamma_sq * u_cov_unscaled(k).diagonal();
        return var.cwiseMax(0.0).cwiseSqrt();
    }
};

/// Uniform time grid from dt; a trailing partial step is merged into the
/// final step so the grid always ends exactly at t_max.
inline std::vector<double> time_grid(double t0, double t_max, double dt) {
    if (!(t_max > t0)) throw std::invalid_argument("time_grid: empty time span");
    const auto full = static_cast<Eigen::Index>(std::floor((t_max - t0) / dt + 1e-9));
    if (full == 0) return {t0, t_max};
    std::vector<double> out;
    for (Eigen::Index k = 0; k < full; ++k) out.push_back(t0 + dt * static_cast<double>(k));
    out.push_back(t_max);  // final step absorbs any trailing partial step
    return out;
}

namespace detail {

inline Eigen::MatrixXd block_diag(const std::vector<Eigen::MatrixXd>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r, c);
    Eigen::Index ro = 0, co = 0;
    for (const auto& b : blocks) {
        out.block(ro, co, b.rows(), b.cols()) = b;
        ro += b.rows();
        co += b.cols();
    }
    return out;
}

}  // namespace detail

/// Discretized model pieces shared by all variants.
struct ModelOperators {
    discretize::Grid grid;
    Eigen::MatrixXd D_full;  // I_L (x) D
    Eigen::MatrixXd E_full;  // I_L (x) E
    Eigen::MatrixXd K_full;  // I_L (x) k(X, X)
    Eigen::MatrixXd B_rows;  // boundary rows of I_L (x) B
    Eigen::MatrixXd R_bb;    // I_L (x) R restricted to boundary points
    Eigen::VectorXd g_b;     // boundary data, field-major
    Eigen::Index num_boundary = 0;
};

inline ModelOperators build_operators(const problems::PdeProblem& p, const SolverConfig& cfg) {
    cfg.validate();
    ModelOperators ops;
    ops.grid = discretize::Grid::from_spacing_1d(p.domain_lo, p.domain_hi, cfg.dx);
    if (cfg.kernel.dimension != ops.grid.dim())
        throw std::invalid_argument("solver: kernel dimension does not match grid");

    const auto approx =
        cfg.stencil_radius == SolverConfig::kGlobalStencil
            ? discretize::collocate_global(cfg.kernel, p.spatial_op, ops.grid)
            : discretize::collocate_local(cfg.kernel, p.spatial_op, ops.grid,
                                          cfg.stencil_radius);

    // Boundary operator: identity for Dirichlet, first derivative along the
    // coordinate direction for Neumann (sign-invariant for zero-flux data).
    const auto bop = p.boundary_kind == problems::BoundaryKind::Dirichlet
                         ? kernels::DiffOperator::identity()
                         : kernels::DiffOperator::directional(Eigen::VectorXd::Ones(1));
    const auto bapprox = discretize::collocate_boundary(cfg.kernel, bop, ops.grid);

    const Eigen::Index L = p.num_fields;
    const Eigen::MatrixXd eye_L = Eigen::MatrixXd::Identity(L, L);
    const Eigen::MatrixXd K =
        kernels::gram(kernels::as_fn(cfg.kernel), ops.grid.points, ops.grid.points);
    ops.D_full = linalg::kron(eye_L, approx.D);
    ops.E_full = cfg.e_scale * linalg::kron(eye_L, approx.E);
    ops.K_full = linalg::kron(eye_L, K);

    const auto bidx = ops.grid.boundary_indices();
    ops.num_boundary = static_cast<Eigen::Index>(bidx.size());
    Eigen::MatrixXd B_b(ops.num_boundary, ops.grid.size());
    Eigen::MatrixXd R_b(ops.num_boundary, ops.num_boundary);
    for (Eigen::Index i = 0; i < ops.num_boundary; ++i) {
        B_b.row(i) = bapprox.D.row(bidx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < ops.num_boundary; ++j)
            R_b(i, j) = bapprox.E(bidx[static_cast<std::size_t>(i)],
                                  bidx[static_cast<std::size_t>(j)]);
    }
    ops.B_rows = linalg::kron(eye_L, B_b);
    ops.R_bb = linalg::symmetrized(linalg::kron(eye_L, R_b));
    ops.g_b = p.boundary_values(ops.grid);
    return ops;
}

inline inference::StateLayout make_layout(const problems::PdeProblem& p,
                                          const ModelOperators& ops, const SolverConfig& cfg) {
    inference::StateLayout layout;
    layout.nu = cfg.nu;
    layout.num_fields = p.num_fields;
    layout.num_points = ops.grid.size();
    layout.num_boundary = ops.num_boundary;
    layout.has_xi = cfg.variant == Variant::Latent;
    layout.has_theta = cfg.variant == Variant::Latent;
    return layout;
}

/// Lifted prior over the joint state (U; xi; theta as applicable).
inline inference::GaussianBelief make_prior(const inference::StateLayout& layout,
                                            const statespace::LtiSde& sde,
                                            const ModelOperators& ops) {
    std::vector<Eigen::MatrixXd> cov_blocks;
    const auto u0 = statespace::lift_initial(sde, ops.K_full);
    cov_blocks.push_back(u0.cov_unscaled);
    if (layout.has_xi) cov_blocks.push_back(statespace::lift_initial(sde, ops.E_full).cov_unscaled);
    if (layout.has_theta) cov_blocks.push_back(statespace::lift_initial(sde, ops.R_bb).cov_unscaled);
    inference::GaussianBelief belief;
    belief.mean = Eigen::VectorXd::Zero(layout.dim());
    belief.mean.head(u0.mean.size()) = u0.mean;
    belief.cov_unscaled = detail::block_diag(cov_blocks);
    return belief;
}

inline statespace::DiscreteTransition make_transition(const inference::StateLayout& layout,
                                                      const statespace::LtiSde& sde,
                                                      const ModelOperators& ops, double h,
                                                      const Eigen::MatrixXd& spatial_noise) {
    const auto scalar = statespace::discretize_sde(sde, h);
    std::vector<Eigen::MatrixXd> phis, sigmas;
    phis.push_back(linalg::kron(scalar.transition,
                                Eigen::MatrixXd::Identity(layout.field_dim(), layout.field_dim())));
    sigmas.push_back(linalg::kron(scalar.process_noise, spatial_noise));
    if (layout.has_xi) {
        phis.push_back(phis.front());
        sigmas.push_back(linalg::kron(scalar.process_noise, ops.E_full));
    }
    if (layout.has_theta) {
        const Eigen::Index q = layout.num_fields * layout.num_boundary;
        phis.push_back(linalg::kron(scalar.transition, Eigen::MatrixXd::Identity(q, q)));
        sigmas.push_back(linalg::kron(scalar.process_noise, ops.R_bb));
    }
    statespace::DiscreteTransition tr;
    tr.transition = detail::block_diag(phis);
    tr.process_noise = detail::block_diag(sigmas);
    tr.step = h;
    return tr;
}

/// Residual observation at one time point: the PDE rows (linearized at the
/// predicted mean) stacked with the boundary-condition rows.
inline inference::LinearizedObservation assemble_observation(
    const inference::GridVectorField& field, double t, const inference::GaussianBelief& predicted,
    const inference::StateLayout& layout, const ModelOperators& ops) {
    const Eigen::Index m = layout.field_dim();
    const Eigen::VectorXd eta_u = predicted.mean.segment(layout.u_block(0), m);
    const Eigen::VectorXd eta_xi = layout.has_xi
                                       ? predicted.mean.segment(layout.xi_block(0), m).eval()
                                       : Eigen::VectorXd::Zero(m).eval();
    inference::LinearizedObservation pde =
        inference::linearize(field, t, eta_u, eta_xi, ops.D_full, layout, ops.E_full);

    const Eigen::Index nb = layout.num_fields * layout.num_boundary;
    inference::LinearizedObservation obs;
    obs.H = Eigen::MatrixXd::Zero(m + nb, layout.dim());
    obs.b = Eigen::VectorXd::Zero(m + nb);
    obs.noise_unscaled = Eigen::MatrixXd::Zero(m + nb, m + nb);
    obs.H.topRows(m) = pde.H;
    obs.b.head(m) = pde.b;
    obs.noise_unscaled.topLeftCorner(m, m) = pde.noise_unscaled;

    obs.H.block(m, layout.u_block(0), nb, m) = ops.B_rows;
    obs.b.tail(nb) = -ops.g_b;
    if (layout.has_theta) {
        obs.H.block(m, layout.theta_block(0), nb, nb) = -Eigen::MatrixXd::Identity(nb, nb);
    } else {
        obs.noise_unscaled.bottomRightCorner(nb, nb) = ops.R_bb;
    }
    return obs;
}

/// Dirac conditioning of the U-block on the initial values h(X).
inline inference::GaussianBelief observe_initial_values(const inference::GaussianBelief& belief,
                                                        const inference::StateLayout& layout,
                                                        const Eigen::VectorXd& h_vals) {
    const Eigen::Index m = layout.field_dim();
    inference::LinearizedObservation obs;
    obs.H = Eigen::MatrixXd::Zero(m, layout.dim());
    obs.H.middleCols(layout.u_block(0), m) = Eigen::MatrixXd::Identity(m, m);
    obs.b = -h_vals;
    obs.noise_unscaled = Eigen::MatrixXd::Zero(m, m);
    return inference::update(belief, obs).first;
}

/// Prior lift, conditioning on the initial values, and the t0 residual
/// update, so that the derivative block starts consistent with the PDE.
inline std::pair<inference::GaussianBelief, inference::ResidualRecord> initialize(
    const problems::PdeProblem& p, const inference::GridVectorField& field,
    const inference::StateLayout& layout, const statespace::LtiSde& sde,
    const ModelOperators& ops) {
    inference::GaussianBelief belief = make_prior(layout, sde, ops);
    belief = observe_initial_values(belief, layout, p.initial_on_grid(ops.grid));
    const auto obs = assemble_observation(field, p.t0, belief, layout, ops);
    return inference::update(belief, obs, p.t0);
}

namespace detail {

inline SolutionPosterior run_filter_smoother(const problems::PdeProblem& p,
                                             const SolverConfig& cfg,
                                             const inference::GridVectorField& field,
                                             const inference::StateLayout& layout,
                                             const ModelOperators& ops,
                                             const Eigen::MatrixXd& spatial_noise,
                                             Eigen::MatrixXd embed, Eigen::VectorXd embed_offset) {
    const auto sde = statespace::iwp_sde(cfg.nu);
    const std::vector<double> times = time_grid(p.t0, p.t_max, cfg.dt);

    std::vector<inference::GaussianBelief> filtered;
    std::vector<statespace::DiscreteTransition> transitions;
    std::vector<inference::ResidualRecord> records;
    filtered.reserve(times.size());

    auto [belief, rec0] = initialize(p, field, layout, sde, ops);
    filtered.push_back(belief);
    records.push_back(rec0);

    // at most two distinct step sizes (dt plus a merged final step)
    statespace::DiscreteTransition tr_cached;
    double cached_h = -1.0;
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double h = times[k] - times[k - 1];
        if (std::abs(h - cached_h) > 1e-14 * std::max(1.0, h)) {
            tr_cached = make_transition(layout, sde, ops, h, spatial_noise);
            cached_h = h;
        }
        transitions.push_back(tr_cached);
        const auto predicted = inference::predict(filtered.back(), tr_cached);
        const auto obs = assemble_observation(field, times[k], predicted, layout, ops);
        auto [post, rec] = inference::update(predicted, obs, times[k]);
        filtered.push_back(post);
        records.push_back(rec);
    }

    const auto smoothed = inference::smooth(filtered, transitions);

    SolutionPosterior out;
    out.times = times;
    out.grid = ops.grid;
    out.layout = layout;
    out.means.reserve(smoothed.size());
    out.covs_unscaled.reserve(smoothed.size());
    for (const auto& b : smoothed) {
        out.means.push_back(b.mean);
        out.covs_unscaled.push_back(b.cov_unscaled);
    }
    out.gamma_sq = cfg.calibrate ? inference::calibrate(records) : 1.0;
    out.embed = std::move(embed);
    out.embed_offset = std::move(embed_offset);
    out.metadata = "marginals=smoothed";
    return out;
}

}  // namespace detail

/// PNMOL with the latent-force model: the state carries U, the interior
/// discretization error xi, and the boundary error theta; all residual rows
/// are Dirac.
inline SolutionPosterior solve_latent(const problems::PdeProblem& p, const SolverConfig& cfg) {
    if (cfg.variant != Variant::Latent)
        throw std::invalid_argument("solve_latent: config variant mismatch");
    const ModelOperators ops = build_operators(p, cfg);
    const auto layout = make_layout(p, ops, cfg);
    const auto field = p.make_field(ops.grid.size());
    Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(layout.field_dim(), layout.dim());
    embed.middleCols(layout.u_block(0), layout.field_dim()) =
        Eigen::MatrixXd::Identity(layout.field_dim(), layout.field_dim());
    return detail::run_filter_smoother(p, cfg, field, layout, ops, ops.K_full, std::move(embed),
                                       Eigen::VectorXd::Zero(layout.field_dim()));
}

/// PNMOL with the white-noise approximation: only U is tracked and the
/// discretization error covariance enters as measurement noise.
inline SolutionPosterior solve_white(const problems::PdeProblem& p, const SolverConfig& cfg) {
    if (cfg.variant != Variant::White)
        throw std::invalid_argument("solve_white: config variant mismatch");
    const ModelOperators ops = build_operators(p, cfg);
    const auto layout = make_layout(p, ops, cfg);
    const auto field = p.make_field(ops.grid.size());
    Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(layout.field_dim(), layout.dim());
    embed.middleCols(layout.u_block(0), layout.field_dim()) =
        Eigen::MatrixXd::Identity(layout.field_dim(), layout.field_dim());
    return detail::run_filter_smoother(p, cfg, field, layout, ops, ops.K_full, std::move(embed),
                                       Eigen::VectorXd::Zero(layout.field_dim()));
}

/// Conventional method of lines with a probabilistic ODE solver: the state
/// holds interior values only, boundary conditions are eliminated by
/// substitution, the discretization error E is discarded, and the posterior
/// is re-embedded onto the full grid for metric parity.
inline SolutionPosterior solve_mol_baseline(const problems::PdeProblem& p,
                                            const SolverConfig& cfg) {
    if (cfg.variant != Variant::MolBaseline)
        throw std::invalid_argument("solve_mol_baseline: config variant mismatch");
    const ModelOperators ops = build_operators(p, cfg);
    const Eigen::Index n = ops.grid.size();
    const Eigen::Index L = p.num_fields;
    const auto interior = ops.grid.interior_indices();
    const auto boundary = ops.grid.boundary_indices();
    const auto ni = static_cast<Eigen::Index>(interior.size());

    // u_full = S u_interior + c, with Dirichlet values substituted and
    // Neumann boundary values copied from the nearest interior neighbour.
    Eigen::MatrixXd S_one = Eigen::MatrixXd::Zero(n, ni);
    Eigen::VectorXd c_one = Eigen::VectorXd::Zero(n);
    std::vector<double> lambda_b;  // per boundary point, Neumann only
    for (Eigen::Index j = 0; j < ni; ++j) S_one(interior[static_cast<std::size_t>(j)], j) = 1.0;
    for (std::size_t bi = 0; bi < boundary.size(); ++bi) {
        const Eigen::Index b = boundary[bi];
        if (p.boundary_kind == problems::BoundaryKind::Dirichlet) continue;
        Eigen::Index nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < ni; ++j) {
            const double d =
                (ops.grid.points.row(interior[static_cast<std::size_t>(j)]) - ops.grid.points.row(b))
                    .norm();
            if (d < best) {
                best = d;
                nearest = j;
            }
        }
        S_one(b, nearest) = 1.0;
        lambda_b.push_back(best);
    }

    Eigen::MatrixXd S = linalg::kron(Eigen::MatrixXd::Identity(L, L), S_one);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(L * n);
    for (Eigen::Index l = 0; l < L; ++l) {
        for (std::size_t bi = 0; bi < boundary.size(); ++bi) {
            const double g = ops.g_b(l * static_cast<Eigen::Index>(boundary.size()) +
                                     static_cast<Eigen::Index>(bi));
            const double value = p.boundary_kind == problems::BoundaryKind::Dirichlet
                                     ? g
                                     : lambda_b[bi] * g;
            c(l * n + boundary[bi]) += value;
        }
    }

    // interior ODE right-hand side and Jacobian through the embedding
    const Eigen::MatrixXd D_full = ops.D_full;
    const auto field_full = p.make_field(n);
    const auto rows_interior = [interior, L, n, ni](const Eigen::VectorXd& full) {
        Eigen::VectorXd out(L * ni);
        for (Eigen::Index l = 0; l < L; ++l)
            for (Eigen::Index j = 0; j < ni; ++j)
                out(l * ni + j) = full(l * n + interior[static_cast<std::size_t>(j)]);
        return out;
    };
    inference::GridVectorField field;
    field.value = [rows_interior, field_full, S, c, D_full](double t, const Eigen::VectorXd& ui,
                                                            const Eigen::VectorXd&) {
        const Eigen::VectorXd uf = S * ui + c;
        return rows_interior(field_full.value(t, uf, D_full * uf));
    };
    field.jacobian_u = [interior, field_full, S, c, D_full, L, n, ni](
                           double t, const Eigen::VectorXd& ui, const Eigen::VectorXd&) {
        const Eigen::VectorXd uf = S * ui + c;
        const Eigen::VectorXd duf = D_full * uf;
        const Eigen::MatrixXd j_full = field_full.jacobian_u(t, uf, duf) +
                                       field_full.jacobian_du(t, uf, duf) * D_full;
        Eigen::MatrixXd out(L * ni, L * n);
        for (Eigen::Index l = 0; l < L; ++l)
            for (Eigen::Index j = 0; j < ni; ++j)
                out.row(l * ni + j) = j_full.row(l * n + interior[static_cast<std::size_t>(j)]);
        return (out * S).eval();
    };
    field.jacobian_du = [L, ni](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return Eigen::MatrixXd::Zero(L * ni, L * ni).eval();
    };

    // interior sub-grid and a plain ODE-filter model on it
    discretize::Grid igrid;
    igrid.points.resize(ni, ops.grid.dim());
    for (Eigen::Index j = 0; j < ni; ++j)
        igrid.points.row(j) = ops.grid.points.row(interior[static_cast<std::size_t>(j)]);
    igrid.boundary_mask.assign(static_cast<std::size_t>(ni), false);

    problems::PdeProblem p_int = p;
    p_int.make_field = [field](Eigen::Index) { return field; };
    p_int.initial = p.initial;

    ModelOperators iops;
    iops.grid = igrid;
    iops.D_full = Eigen::MatrixXd::Zero(L * ni, L * ni);  // folded into the vector field
    iops.E_full = Eigen::MatrixXd::Zero(L * ni, L * ni);
    iops.K_full = Eigen::MatrixXd::Identity(L * ni, L * ni);
    iops.B_rows = Eigen::MatrixXd::Zero(0, L * ni);
    iops.R_bb = Eigen::MatrixXd::Zero(0, 0);
    iops.g_b = Eigen::VectorXd::Zero(0);
    iops.num_boundary = 0;

    inference::StateLayout layout;
    layout.nu = cfg.nu;
    layout.num_fields = L;
    layout.num_points = ni;
    layout.num_boundary = 0;
    layout.has_xi = false;
    layout.has_theta = false;

    Eigen::MatrixXd embed = Eigen::MatrixXd::Zero(L * n, layout.dim());
    embed.middleCols(layout.u_block(0), L * ni) = S;

    SolutionPosterior post = detail::run_filter_smoother(p_int, cfg, field, layout, iops,
                                                         iops.K_full, std::move(embed), c);
    post.grid = ops.grid;  // report on the full grid
    return post;
}

inline SolutionPosterior solve(const problems::PdeProblem& p, const SolverConfig& cfg) {
    switch (cfg.variant) {
        case Variant::Latent:
            return solve_latent(p, cfg);
        case Variant::White:
            return solve_white(p, cfg);
        case Variant::MolBaseline:
            return solve_mol_baseline(p, cfg);
    }
    throw std::invalid_argument("solve: unknown variant");
}

}  // namespace pnmol::solver
