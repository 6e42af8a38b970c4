#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pnmol/kernels.hpp"
#include "pnmol/linalg.hpp"

namespace pnmol::discretize {

/// Spatial grid: an ordered set of d-dimensional points (rows) together with
/// a mask marking which points lie on the domain boundary.
struct Grid {
    Eigen::MatrixXd points;           // n x d, pairwise distinct
    std::vector<bool> boundary_mask;  // length n

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }

    std::vector<Eigen::Index> boundary_indices() const {
        std::vector<Eigen::Index> out;
        for (Eigen::Index i = 0; i < size(); ++i)
            if (boundary_mask[static_cast<std::size_t>(i)]) out.push_back(i);
        return out;
    }

    std::vector<Eigen::Index> interior_indices() const {
        std::vector<Eigen::Index> out;
        for (Eigen::Index i = 0; i < size(); ++i)
            if (!boundary_mask[static_cast<std::size_t>(i)]) out.push_back(i);
        return out;
    }

    void validate() const {
        if (boundary_mask.size() != static_cast<std::size_t>(size()))
            throw std::invalid_argument("Grid: boundary mask length mismatch");
        for (Eigen::Index i = 0; i < size(); ++i)
            for (Eigen::Index j = i + 1; j < size(); ++j)
                if ((points.row(i) - points.row(j)).norm() == 0.0)
                    throw std::invalid_argument("Grid: points must be pairwise distinct");
    }

    static Grid equispaced_1d(double lo, double hi, Eigen::Index n) {
        if (n < 2) throw std::invalid_argument("Grid: need at least two points");
        Grid g;
        g.points = Eigen::VectorXd::LinSpaced(n, lo, hi);
        g.boundary_mask.assign(static_cast<std::size_t>(n), false);
        g.boundary_mask.front() = true;
        g.boundary_mask.back() = true;
        return g;
    }

    /// Equispaced grid on [lo, hi] with spacing dx (endpoint included).
    static Grid from_spacing_1d(double lo, double hi, double dx) {
        if (!(dx > 0.0)) throw std::invalid_argument("Grid: dx must be positive");
        const auto n = static_cast<Eigen::Index>(std::lround((hi - lo) / dx)) + 1;
        if (n < 3) throw std::invalid_argument("Grid: dx generates fewer than 3 points");
        return equispaced_1d(lo, hi, n);
    }
};

struct Stencil {
    Eigen::Index center_index;
    std::vector<Eigen::Index> neighbor_indices;  // 2k+1 entries, includes center
};

enum class ApproxKind { Global, Localized };

/// Differentiation matrix D with error covariance E: D u(X) estimates the
/// differential operator applied to u on the grid, wrong with covariance
/// gamma^2 E. E is dense for the global approximation and diagonal for the
/// localized one.
struct OperatorApprox {
    Eigen::MatrixXd D;
    Eigen::MatrixXd E;
    Grid grid;
    ApproxKind kind = ApproxKind::Global;
    Eigen::Index radius = 0;  // localized only
};

namespace detail {

// Minimal KD-tree for k-nearest-neighbour stencil queries on scattered
// points. Ties in distance are broken by ascending grid index so stencils
// are deterministic on equispaced grids.
class KdTree {
public:
    explicit KdTree(const Eigen::MatrixXd& pts) : pts_(pts) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(pts.rows()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        root_ = build(idx, 0);
    }

    std::vector<Eigen::Index> nearest(const Eigen::VectorXd& query, Eigen::Index count) const {
        Heap heap;
        search(root_.get(), query, count, heap);
        std::vector<std::pair<double, Eigen::Index>> items;
        while (!heap.empty()) {
            items.push_back(heap.top());
            heap.pop();
        }
        std::sort(items.begin(), items.end());
        std::vector<Eigen::Index> out;
        out.reserve(items.size());
        for (const auto& [d, i] : items) out.push_back(i);
        return out;
    }

private:
    struct Node {
        Eigen::Index point;
        int axis;
        std::unique_ptr<Node> left, right;
    };
    // max-heap on (distance, index): worst candidate on top
    using Heap = std::priority_queue<std::pair<double, Eigen::Index>>;

    std::unique_ptr<Node> build(std::vector<Eigen::Index>& idx, int depth) {
        if (idx.empty()) return nullptr;
        const int axis = depth % static_cast<int>(pts_.cols());
        std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
            if (pts_(a, axis) != pts_(b, axis)) return pts_(a, axis) < pts_(b, axis);
            return a < b;
        });
        const std::size_t mid = idx.size() / 2;
        auto node = std::make_unique<Node>();
        node->point = idx[mid];
        node->axis = axis;
        std::vector<Eigen::Index> left(idx.begin(), idx.begin() + static_cast<long>(mid));
        std::vector<Eigen::Index> right(idx.begin() + static_cast<long>(mid) + 1, idx.end());
        node->left = build(left, depth + 1);
        node->right = build(right, depth + 1);
        return node;
    }

    void consider(Eigen::Index i, const Eigen::VectorXd& query, Eigen::Index count,
                  Heap& heap) const {
        const double dist = (pts_.row(i).transpose() - query).norm();
        const std::pair<double, Eigen::Index> cand{dist, i};
        if (static_cast<Eigen::Index>(heap.size()) < count) {
            heap.push(cand);
        } else if (cand < heap.top()) {
            heap.pop();
            heap.push(cand);
        }
    }

    void search(const Node* node, const Eigen::VectorXd& query, Eigen::Index count,
                Heap& heap) const {
        if (node == nullptr) return;
        consider(node->point, query, count, heap);
        const double delta = query(node->axis) - pts_(node->point, node->axis);
        const Node* near = delta < 0.0 ? node->left.get() : node->right.get();
        const Node* far = delta < 0.0 ? node->right.get() : node->left.get();
        search(near, query, count, heap);
        // The far side may still hold candidates: closer than the current
        // worst, or equally distant with a smaller index.
        if (static_cast<Eigen::Index>(heap.size()) < count ||
            std::abs(delta) <= heap.top().first) {
            search(far, query, count, heap);
        }
    }

    const Eigen::MatrixXd& pts_;
    std::unique_ptr<Node> root_;
};

inline std::vector<Eigen::Index> nearest_by_scan(const Eigen::MatrixXd& pts,
                                                 const Eigen::VectorXd& query,
                                                 Eigen::Index count) {
    std::vector<std::pair<double, Eigen::Index>> items;
    items.reserve(static_cast<std::size_t>(pts.rows()));
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        items.emplace_back((pts.row(i).transpose() - query).norm(), i);
    std::sort(items.begin(), items.end());
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < count; ++i) out.push_back(items[static_cast<std::size_t>(i)].second);
    return out;
}

/// Solve X * G = B row-wise, i.e. X = B G^{-1}, choosing the inversion path
/// by kernel family: polynomial Grams are singular beyond their feature rank
/// and go through a cutoff pseudo-inverse, all others through the jittered
/// Cholesky ladder.
inline Eigen::MatrixXd right_solve(const Eigen::MatrixXd& B, const Eigen::MatrixXd& G,
                                   const kernels::Kernel& k) {
    if (k.family == kernels::KernelFamily::Polynomial) return B * linalg::pinv(G);
    linalg::PsdSolver solver(G);
    return solver.solve(B.transpose()).transpose();
}

}  // namespace detail

/// The 2k+1 grid points nearest to grid point n (including n itself),
/// deterministic under distance ties.
inline Stencil select_stencil(const Grid& grid, Eigen::Index n, Eigen::Index radius) {
    const Eigen::Index count = 2 * radius + 1;
    if (count > grid.size())
        throw std::invalid_argument("select_stencil: radius too large for grid");
    const Eigen::VectorXd query = grid.points.row(n).transpose();
    std::vector<Eigen::Index> nbrs;
    if (grid.dim() == 1) {
        nbrs = detail::nearest_by_scan(grid.points, query, count);
    } else {
        detail::KdTree tree(grid.points);
        nbrs = tree.nearest(query, count);
    }
    std::sort(nbrs.begin(), nbrs.end());  // grid order, so a full stencil is the grid itself
    return Stencil{n, std::move(nbrs)};
}

/// Global collocation: D = (Dk)(X,X) k(X,X)^{-1} and the Schur-complement
/// error covariance E = (D^2 k)(X,X) - D k(X,X) D^T.
inline OperatorApprox collocate_global(const kernels::Kernel& k, const kernels::DiffOperator& op,
                                       const Grid& grid) {
    if (grid.size() == 0) throw std::invalid_argument("collocate_global: empty grid");
    OperatorApprox out;
    out.grid = grid;
    out.kind = ApproxKind::Global;
    if (op.kind == kernels::OperatorKind::Identity) {
        // conditioning on the function itself is exact for any kernel
        out.D = Eigen::MatrixXd::Identity(grid.size(), grid.size());
        out.E = Eigen::MatrixXd::Zero(grid.size(), grid.size());
        return out;
    }
    const Eigen::MatrixXd& X = grid.points;
    const Eigen::MatrixXd K = kernels::gram(kernels::as_fn(k), X, X);
    const Eigen::MatrixXd G_left = kernels::gram(kernels::apply_left(op, k), X, X);
    const Eigen::MatrixXd G_both = kernels::gram(kernels::apply_both(op, k), X, X);
    out.D = detail::right_solve(G_left, K, k);
    // Schur complement, PSD in exact arithmetic; roundoff negativity clamped
    out.E = linalg::clamp_psd(linalg::symmetrized(G_both - out.D * G_left.transpose()));
    return out;
}

/// Localized probabilistic finite differences: row n of D is built from the
/// 2k+1 point stencil around x_n, and E collapses to a diagonal of
/// per-point error variances e_n (clamped at zero from below when
/// floating-point cancellation makes them slightly negative).
inline OperatorApprox collocate_local(const kernels::Kernel& k, const kernels::DiffOperator& op,
                                      const Grid& grid, Eigen::Index radius) {
    const Eigen::Index n = grid.size();
    if (n == 0) throw std::invalid_argument("collocate_local: empty grid");
    const auto kfun = kernels::as_fn(k);
    const auto left = kernels::apply_left(op, k);
    const auto both = kernels::apply_both(op, k);

    OperatorApprox out;
    out.D = Eigen::MatrixXd::Zero(n, n);
    out.E = Eigen::MatrixXd::Zero(n, n);
    out.grid = grid;
    out.kind = ApproxKind::Localized;
    out.radius = radius;
    if (op.kind == kernels::OperatorKind::Identity) {
        out.D = Eigen::MatrixXd::Identity(n, n);
        return out;
    }

    for (Eigen::Index row = 0; row < n; ++row) {
        const Stencil st = select_stencil(grid, row, radius);
        const auto m = static_cast<Eigen::Index>(st.neighbor_indices.size());
        Eigen::MatrixXd Xloc(m, grid.dim());
        for (Eigen::Index j = 0; j < m; ++j)
            Xloc.row(j) = grid.points.row(st.neighbor_indices[static_cast<std::size_t>(j)]);
        const Eigen::VectorXd center = grid.points.row(row).transpose();

        const Eigen::MatrixXd K_loc = kernels::gram(kfun, Xloc, Xloc);
        Eigen::MatrixXd g_left(1, m);
        for (Eigen::Index j = 0; j < m; ++j) g_left(0, j) = left(center, Xloc.row(j).transpose());
        const Eigen::MatrixXd d_row = detail::right_solve(g_left, K_loc, k);

        const double db = both(center, center);
        double e = db - (d_row * g_left.transpose())(0, 0);
        const double tol = 1e-8 * std::max(1.0, std::abs(db));
        if (e < -tol)
            throw linalg::FactorizationError(
                "collocate_local: negative error variance beyond cancellation tolerance");
        if (e < 0.0) e = 0.0;

        for (Eigen::Index j = 0; j < m; ++j)
            out.D(row, st.neighbor_indices[static_cast<std::size_t>(j)]) = d_row(0, j);
        out.E(row, row) = e;
    }
    return out;
}

/// Boundary-operator discretization B, R: same construction as
/// collocate_global; the solver restricts rows to boundary indices.
inline OperatorApprox collocate_boundary(const kernels::Kernel& k,
                                         const kernels::DiffOperator& bop, const Grid& grid) {
    if (bop.kind == kernels::OperatorKind::Laplacian)
        throw std::invalid_argument(
            "collocate_boundary: boundary operator must be Identity (Dirichlet) or "
            "DirectionalDerivative (Neumann)");
    return collocate_global(k, bop, grid);
}

}  // namespace pnmol::discretize
