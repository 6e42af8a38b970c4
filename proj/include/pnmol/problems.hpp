#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pnmol/discretize.hpp"
#include "pnmol/inference.hpp"
#include "pnmol/kernels.hpp"

namespace pnmol::problems {

enum class BoundaryKind { Dirichlet, Neumann };

/// A time-dependent PDE du/dt = F(t, x, u, Du) on an interval, with initial
/// function h, boundary operator/value, and closed-form Jacobians. Vectors
/// over the grid are field-major: all grid values of field 0, then field 1,
/// and so on.
struct PdeProblem {
    std::string name;
    Eigen::Index num_fields = 1;
    kernels::DiffOperator spatial_op = kernels::DiffOperator::laplacian();
    BoundaryKind boundary_kind = BoundaryKind::Dirichlet;
    double domain_lo = 0.0;
    double domain_hi = 1.0;
    double t0 = 0.0;
    double t_max = 1.0;
    double max_diffusion = 0.0;  // stability bound for explicit reference integration

    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> initial;         // x -> R^L
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> boundary_value;  // x -> R^L
    std::function<inference::GridVectorField(Eigen::Index)> make_field;     // grid size -> field

    Eigen::VectorXd initial_on_grid(const discretize::Grid& grid) const {
        return stack_on_grid(initial, grid);
    }

    /// Boundary values g, field-major over the boundary points only.
    Eigen::VectorXd boundary_values(const discretize::Grid& grid) const {
        const auto bidx = grid.boundary_indices();
        Eigen::VectorXd out(num_fields * static_cast<Eigen::Index>(bidx.size()));
        for (Eigen::Index l = 0; l < num_fields; ++l)
            for (std::size_t j = 0; j < bidx.size(); ++j)
                out(l * static_cast<Eigen::Index>(bidx.size()) + static_cast<Eigen::Index>(j)) =
                    boundary_value(grid.points.row(bidx[j]).transpose())(l);
        return out;
    }

private:
    Eigen::VectorXd stack_on_grid(
        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
        const discretize::Grid& grid) const {
        Eigen::VectorXd out(num_fields * grid.size());
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            const Eigen::VectorXd vals = fn(grid.points.row(i).transpose());
            for (Eigen::Index l = 0; l < num_fields; ++l) out(l * grid.size() + i) = vals(l);
        }
        return out;
    }
};

struct HeatParams {
    double alpha = 0.1;
    double t_max = 1.0;
    BoundaryKind boundary = BoundaryKind::Dirichlet;
    std::function<double(double)> initial;  // defaults to a Gaussian bump
};

/// Linear heat equation du/dt = alpha * Lap u on [0,1] with homogeneous
/// boundary data. The default initial profile is a bump that vanishes at the
/// boundary so Dirichlet g = 0 is consistent.
inline PdeProblem heat_1d(HeatParams params = {}) {
    PdeProblem p;
    p.name = "heat";
    p.num_fields = 1;
    p.boundary_kind = params.boundary;
    p.t_max = params.t_max;
    p.max_diffusion = params.alpha;
    auto h = params.initial
                 ? params.initial
                 : [](double x) { return std::exp(-(x - 0.5) * (x - 0.5) / 0.01); };
    p.initial = [h](const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, h(x(0)));
    };
    p.boundary_value = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
    const double alpha = params.alpha;
    p.make_field = [alpha](Eigen::Index n) {
        inference::GridVectorField f;
        f.value = [alpha](double, const Eigen::VectorXd&, const Eigen::VectorXd& du) {
            return (alpha * du).eval();
        };
        f.jacobian_u = [n](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Zero(n, n).eval();
        };
        f.jacobian_du = [alpha, n](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return (alpha * Eigen::MatrixXd::Identity(n, n)).eval();
        };
        return f;
    };
    return p;
}

struct LotkaVolterraParams {
    double a = 1.0, b = 1.0, c = 1.0, e = 1.0;
    double delta_u = 0.1, delta_v = 0.1;
    double t_max = 1.0;
};

/// Spatial predator-prey dynamics with diffusion and zero-flux boundaries:
///   du/dt = a u - b u v + delta_u Lap u
///   dv/dt = -c v + e u v + delta_v Lap v
inline PdeProblem lotka_volterra_spatial(LotkaVolterraParams prm = {}) {
    PdeProblem p;
    p.name = "lotka-volterra";
    p.num_fields = 2;
    p.boundary_kind = BoundaryKind::Neumann;
    p.t_max = prm.t_max;
    p.max_diffusion = std::max(prm.delta_u, prm.delta_v);
    // prey mass near the left end, predators near the right; both profiles
    // have exactly zero flux at the boundary
    p.initial = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd out(2);
        out(0) = 1.0 + 0.5 * std::cos(M_PI * x(0));
        out(1) = 1.0 - 0.5 * std::cos(M_PI * x(0));
        return out;
    };
    p.boundary_value = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2); };
    p.make_field = [prm](Eigen::Index n) {
        inference::GridVectorField f;
        f.value = [prm, n](double, const Eigen::VectorXd& u, const Eigen::VectorXd& du) {
            Eigen::VectorXd out(2 * n);
            const auto prey = u.head(n).array();
            const auto pred = u.segment(n, n).array();
            out.head(n) = prm.a * prey - prm.b * prey * pred + prm.delta_u * du.head(n).array();
            out.segment(n, n) =
                -prm.c * pred + prm.e * prey * pred + prm.delta_v * du.segment(n, n).array();
            return out;
        };
        f.jacobian_u = [prm, n](double, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
            const auto prey = u.head(n).array();
            const auto pred = u.segment(n, n).array();
            j.topLeftCorner(n, n).diagonal() = prm.a - prm.b * pred;
            j.topRightCorner(n, n).diagonal() = -prm.b * prey;
            j.bottomLeftCorner(n, n).diagonal() = prm.e * pred;
            j.bottomRightCorner(n, n).diagonal() = -prm.c + prm.e * prey;
            return j;
        };
        f.jacobian_du = [prm, n](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
            j.topLeftCorner(n, n).diagonal().setConstant(prm.delta_u);
            j.bottomRightCorner(n, n).diagonal().setConstant(prm.delta_v);
            return j;
        };
        return f;
    };
    return p;
}

struct SirParams {
    double beta = 3.0;
    double gamma_r = 1.0;
    double delta = 0.05;
    double t_max = 1.0;
};

/// Spatial SIR epidemic with diffusion and zero-flux boundaries:
///   dS/dt = -beta S I + delta Lap S
///   dI/dt = beta S I - gamma_r I + delta Lap I
///   dR/dt = gamma_r I + delta Lap R
inline PdeProblem sir_spatial(SirParams prm = {}) {
    PdeProblem p;
    p.name = "sir";
    p.num_fields = 3;
    p.boundary_kind = BoundaryKind::Neumann;
    p.t_max = prm.t_max;
    p.max_diffusion = prm.delta;
    p.initial = [](const Eigen::VectorXd& x) {
        const double bump = std::exp(-(x(0) - 0.5) * (x(0) - 0.5) / 0.05);
        Eigen::VectorXd out(3);
        out(0) = 1.0 - 0.2 * bump;
        out(1) = 0.2 * bump;
        out(2) = 0.0;
        return out;
    };
    p.boundary_value = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(3); };
    p.make_field = [prm](Eigen::Index n) {
        inference::GridVectorField f;
        f.value = [prm, n](double, const Eigen::VectorXd& u, const Eigen::VectorXd& du) {
            Eigen::VectorXd out(3 * n);
            const auto s = u.head(n).array();
            const auto infected = u.segment(n, n).array();
            out.head(n) = -prm.beta * s * infected + prm.delta * du.head(n).array();
            out.segment(n, n) = prm.beta * s * infected - prm.gamma_r * infected +
                                prm.delta * du.segment(n, n).array();
            out.tail(n) = prm.gamma_r * infected + prm.delta * du.tail(n).array();
            return out;
        };
        f.jacobian_u = [prm, n](double, const Eigen::VectorXd& u, const Eigen::VectorXd&) {
            Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3 * n, 3 * n);
            const auto s = u.head(n).array();
            const auto infected = u.segment(n, n).array();
            j.block(0, 0, n, n).diagonal() = -prm.beta * infected;
            j.block(0, n, n, n).diagonal() = -prm.beta * s;
            j.block(n, 0, n, n).diagonal() = prm.beta * infected;
            j.block(n, n, n, n).diagonal() = prm.beta * s - prm.gamma_r;
            j.block(2 * n, n, n, n).diagonal().setConstant(prm.gamma_r);
            return j;
        };
        f.jacobian_du = [prm, n](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return (prm.delta * Eigen::MatrixXd::Identity(3 * n, 3 * n)).eval();
        };
        return f;
    };
    return p;
}

inline PdeProblem problem_by_name(const std::string& name) {
    if (name == "heat") return heat_1d();
    if (name == "lotka-volterra") return lotka_volterra_spatial();
    if (name == "sir") return sir_spatial();
    throw std::invalid_argument("unknown problem: " + name);
}

/// High-accuracy reference computed by classical (non-probabilistic) MOL:
/// second-order finite differences on a finer mesh, boundary conditions
/// eliminated, integrated with fixed-step RK4. Evaluation interpolates
/// linearly in space and time.
class ReferenceSolution {
public:
    ReferenceSolution(Eigen::VectorXd fine_points, std::vector<double> times,
                      std::vector<Eigen::VectorXd> states, Eigen::Index num_fields,
                      std::string provenance)
        : fine_points_(std::move(fine_points)),
          times_(std::move(times)),
          states_(std::move(states)),
          num_fields_(num_fields),
          provenance_(std::move(provenance)) {}

    const std::string& provenance() const { return provenance_; }
    double t_begin() const { return times_.front(); }
    double t_end() const { return times_.back(); }

    /// Field-major values on the requested grid at time t.
    Eigen::VectorXd evaluate(double t, const discretize::Grid& grid) const {
        const Eigen::VectorXd full = at_time(t);
        const Eigen::Index nf = fine_points_.size();
        Eigen::VectorXd out(num_fields_ * grid.size());
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            const double x = grid.points(i, 0);
            const auto [j, w] = bracket(x);
            for (Eigen::Index l = 0; l < num_fields_; ++l) {
                const double lo = full(l * nf + j);
                const double hi = full(l * nf + std::min(j + 1, nf - 1));
                out(l * grid.size() + i) = (1.0 - w) * lo + w * hi;
            }
        }
        return out;
    }

private:
    Eigen::VectorXd at_time(double t) const {
        if (t <= times_.front()) return states_.front();
        if (t >= times_.back()) return states_.back();
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto k = static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
        const double w = (t - times_[k]) / (times_[k + 1] - times_[k]);
        return (1.0 - w) * states_[k] + w * states_[k + 1];
    }

    std::pair<Eigen::Index, double> bracket(double x) const {
        const Eigen::Index nf = fine_points_.size();
        if (x <= fine_points_(0)) return {0, 0.0};
        if (x >= fine_points_(nf - 1)) return {nf - 1, 0.0};
        Eigen::Index j = 0;
        while (j + 1 < nf && fine_points_(j + 1) < x) ++j;
        const double w = (x - fine_points_(j)) / (fine_points_(j + 1) - fine_points_(j));
        return {j, w};
    }

    Eigen::VectorXd fine_points_;
    std::vector<double> times_;
    std::vector<Eigen::VectorXd> states_;
    Eigen::Index num_fields_;
    std::string provenance_;
};

/// Classical MOL reference on a mesh refined by the given factor relative to
/// base_dx. Dirichlet boundary values are substituted; Neumann conditions
/// are eliminated through the nearest interior neighbour.
inline ReferenceSolution reference_solve(const PdeProblem& p, int refinement,
                                         double base_dx) {
    if (refinement < 2) throw std::invalid_argument("reference_solve: refinement must be >= 2");
    const double dx = base_dx / refinement;
    const auto grid = discretize::Grid::from_spacing_1d(p.domain_lo, p.domain_hi, dx);
    const Eigen::Index n = grid.size();
    const Eigen::Index L = p.num_fields;
    const double h2 = dx * dx;
    const auto field = p.make_field(n);
    const Eigen::VectorXd g_vals = [&] {
        Eigen::VectorXd g(L * 2);
        for (Eigen::Index l = 0; l < L; ++l) {
            g(2 * l) = p.boundary_value(grid.points.row(0).transpose())(l);
            g(2 * l + 1) = p.boundary_value(grid.points.row(n - 1).transpose())(l);
        }
        return g;
    }();

    // boundary elimination: fill u at the two endpoints from the interior
    const auto impose_bc = [&](Eigen::VectorXd& u) {
        for (Eigen::Index l = 0; l < L; ++l) {
            if (p.boundary_kind == BoundaryKind::Dirichlet) {
                u(l * n + 0) = g_vals(2 * l);
                u(l * n + n - 1) = g_vals(2 * l + 1);
            } else {  // u(x) = lambda g(x) + u(x - lambda n), outward normal, lambda = dx
                u(l * n + 0) = u(l * n + 1) + dx * g_vals(2 * l);
                u(l * n + n - 1) = u(l * n + n - 2) + dx * g_vals(2 * l + 1);
            }
        }
    };

    const auto rhs = [&](double t, const Eigen::VectorXd& u_full) {
        Eigen::VectorXd du(L * n);
        for (Eigen::Index l = 0; l < L; ++l) {
            du(l * n + 0) = 0.0;
            du(l * n + n - 1) = 0.0;
            for (Eigen::Index i = 1; i + 1 < n; ++i)
                du(l * n + i) =
                    (u_full(l * n + i - 1) - 2.0 * u_full(l * n + i) + u_full(l * n + i + 1)) / h2;
        }
        return field.value(t, u_full, du);
    };

    double dt = std::min(1e-3, p.t_max - p.t0);
    if (p.max_diffusion > 0.0) dt = std::min(dt, 0.25 * h2 / p.max_diffusion);
    const auto steps = static_cast<Eigen::Index>(std::ceil((p.t_max - p.t0) / dt - 1e-12));
    dt = (p.t_max - p.t0) / static_cast<double>(steps);
    const Eigen::Index stride = std::max<Eigen::Index>(1, (steps + 1) / 2000);

    Eigen::VectorXd u = p.initial_on_grid(grid);
    impose_bc(u);
    std::vector<double> times{p.t0};
    std::vector<Eigen::VectorXd> snaps{u};
    double t = p.t0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const Eigen::VectorXd k1 = rhs(t, u);
        Eigen::VectorXd stage = u + 0.5 * dt * k1;
        impose_bc(stage);
        const Eigen::VectorXd k2 = rhs(t + 0.5 * dt, stage);
        stage = u + 0.5 * dt * k2;
        impose_bc(stage);
        const Eigen::VectorXd k3 = rhs(t + 0.5 * dt, stage);
        stage = u + dt * k3;
        impose_bc(stage);
        const Eigen::VectorXd k4 = rhs(t + dt, stage);
        u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        impose_bc(u);
        t = p.t0 + dt * static_cast<double>(k + 1);
        if (!u.allFinite() || u.lpNorm<Eigen::Infinity>() > 1e8)
            throw std::runtime_error("reference_solve: integration unstable (step too large)");
        if ((k + 1) % stride == 0 || k + 1 == steps) {
            times.push_back(t);
            snaps.push_back(u);
        }
    }

    std::string prov = "classical MOL, RK4, dx=" + std::to_string(dx) +
                       ", dt=" + std::to_string(dt) + ", refinement=" + std::to_string(refinement);
    return ReferenceSolution(grid.points.col(0), std::move(times), std::move(snaps), L,
                             std::move(prov));
}

}  // namespace pnmol::problems
