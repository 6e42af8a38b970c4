#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pnmol/discretize.hpp"
#include "pnmol/linalg.hpp"

using namespace pnmol;
using Catch::Approx;

TEST_CASE("grid construction and validation") {
    const auto g = discretize::Grid::from_spacing_1d(0.0, 1.0, 0.2);
    REQUIRE(g.size() == 6);
    CHECK(g.points(1, 0) == Approx(0.2));
    CHECK(g.boundary_mask.front());
    CHECK(g.boundary_mask.back());
    CHECK(g.boundary_indices() == std::vector<Eigen::Index>{0, 5});
    CHECK(g.interior_indices().size() == 4);

    discretize::Grid bad;
    bad.points = Eigen::MatrixXd::Zero(2, 1);  // duplicate points
    bad.boundary_mask = {true, true};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    discretize::Grid short_mask = g;
    short_mask.boundary_mask.pop_back();
    CHECK_THROWS_AS(short_mask.validate(), std::invalid_argument);
}

TEST_CASE("stencil selection on a line") {
    const auto g = discretize::Grid::equispaced_1d(0.0, 1.0, 9);

    auto sorted = [](std::vector<Eigen::Index> v) {
        std::sort(v.begin(), v.end());
        return v;
    };

    const auto interior = discretize::select_stencil(g, 4, 1);
    CHECK(sorted(interior.neighbor_indices) == std::vector<Eigen::Index>{3, 4, 5});
    CHECK(interior.center_index == 4);

    const auto edge = discretize::select_stencil(g, 0, 1);
    CHECK(sorted(edge.neighbor_indices) == std::vector<Eigen::Index>{0, 1, 2});

    const auto full = discretize::select_stencil(g, 3, 4);
    CHECK(sorted(full.neighbor_indices) ==
          std::vector<Eigen::Index>{0, 1, 2, 3, 4, 5, 6, 7, 8});

    CHECK_THROWS_AS(discretize::select_stencil(g, 0, 5), std::invalid_argument);
}

TEST_CASE("KD-tree stencils match a brute-force scan in 2-D") {
    discretize::Grid g;
    g.points = oracles::random_points(40, 2, 99);
    g.boundary_mask.assign(40, false);
    for (Eigen::Index n : {0, 7, 19, 39}) {
        for (Eigen::Index radius : {1, 3, 6}) {
            const auto st = discretize::select_stencil(g, n, radius);
            auto scan = [&] {
                std::vector<std::pair<double, Eigen::Index>> items;
                for (Eigen::Index i = 0; i < g.size(); ++i)
                    items.emplace_back((g.points.row(i) - g.points.row(n)).norm(), i);
                std::sort(items.begin(), items.end());
                std::vector<Eigen::Index> out;
                for (Eigen::Index i = 0; i < 2 * radius + 1; ++i)
                    out.push_back(items[static_cast<std::size_t>(i)].second);
                return out;
            }();
            std::sort(scan.begin(), scan.end());
            CHECK(st.neighbor_indices == scan);
        }
    }
}

TEST_CASE("global collocation with the identity operator is exact") {
    const auto id = kernels::DiffOperator::identity();
    {
        const auto g = discretize::Grid::equispaced_1d(0.0, 1.0, 5);
        const auto k = kernels::Kernel::squared_exponential(1.0, 1);
        const auto a = discretize::collocate_global(k, id, g);
        CHECK((a.D - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(a.E.cwiseAbs().maxCoeff() < 1e-8);
    }
    {
        const auto g = discretize::Grid::equispaced_1d(-0.1, 0.1, 3);
        const auto k = kernels::Kernel::polynomial(2, 1);
        const auto a = discretize::collocate_global(k, id, g);
        CHECK((a.D - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(a.E.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("polynomial kernels cancel the error covariance") {
    const auto lap = kernels::DiffOperator::laplacian();
    for (int degree : {2, 3}) {
        const auto g = discretize::Grid::equispaced_1d(0.0, 1.0, 6);
        const auto k = kernels::Kernel::polynomial(degree, 1);
        const auto a = discretize::collocate_global(k, lap, g);
        CAPTURE(degree);
        CHECK(a.E.cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("degree-2 polynomial kernel recovers classical FD weights") {
    const double h = 0.1;
    const auto g = discretize::Grid::equispaced_1d(-h, h, 3);
    const auto k = kernels::Kernel::polynomial(2, 1);
    const auto a = discretize::collocate_local(k, kernels::DiffOperator::laplacian(), g, 1);

    const Eigen::VectorXd oracle = oracles::fd_weights_1d(g.points.col(0), 0.0, 2);
    for (int j = 0; j < 3; ++j)
        CHECK(a.D(1, j) == Approx(oracle(j)).epsilon(1e-6));
    CHECK(a.D(1, 0) == Approx(1.0 / (h * h)).epsilon(1e-6));
    CHECK(a.D(1, 1) == Approx(-2.0 / (h * h)).epsilon(1e-6));
    CHECK(a.D(1, 2) == Approx(1.0 / (h * h)).epsilon(1e-6));
}

TEST_CASE("localized collocation structure") {
    const auto g = discretize::Grid::equispaced_1d(0.0, 2.0, 9);
    const auto k = kernels::Kernel::squared_exponential(1.0, 1);
    const auto lap = kernels::DiffOperator::laplacian();

    SECTION("identity operator gives D = I, E = 0") {
        const auto a = discretize::collocate_local(k, kernels::DiffOperator::identity(), g, 1);
        CHECK((a.D - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(a.E.cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("radius 1 gives bandwidth 3 with one-sided edge stencils") {
        const auto a = discretize::collocate_local(k, lap, g, 1);
        for (Eigen::Index i = 1; i + 1 < 9; ++i)
            for (Eigen::Index j = 0; j < 9; ++j)
                if (std::abs(i - j) > 1) CHECK(a.D(i, j) == 0.0);
        for (Eigen::Index j = 3; j < 9; ++j) CHECK(a.D(0, j) == 0.0);
        for (Eigen::Index j = 0; j < 6; ++j) CHECK(a.D(8, j) == 0.0);
        for (Eigen::Index i = 0; i < 9; ++i) {
            CHECK((a.D.row(i).array() != 0.0).count() <= 3);
            for (Eigen::Index j = 0; j < 9; ++j)
                if (i != j) CHECK(a.E(i, j) == 0.0);
        }
    }

    SECTION("full radius reproduces the global approximation row-wise") {
        const auto local = discretize::collocate_local(k, lap, g, 4);
        const auto global = discretize::collocate_global(k, lap, g);
        CHECK((local.D - global.D).cwiseAbs().maxCoeff() < 1e-8);
        for (Eigen::Index i = 0; i < 9; ++i)
            CHECK(local.E(i, i) == Approx(global.E(i, i)).margin(1e-8));
    }

    SECTION("error variances are largest at the boundary") {
        const auto a = discretize::collocate_local(k, lap, g, 1);
        Eigen::Index argmax = 0;
        a.E.diagonal().maxCoeff(&argmax);
        CHECK((argmax == 0 || argmax == 8));
        CHECK(a.E(0, 0) > a.E(4, 4));
    }

    SECTION("E is PSD") {
        const auto a = discretize::collocate_local(k, lap, g, 2);
        CHECK(linalg::is_psd(a.E));
        CHECK((a.E.diagonal().array() >= 0.0).all());
    }
}

TEST_CASE("global error covariance is PSD") {
    const auto lap = kernels::DiffOperator::laplacian();
    for (double r : {0.25, 1.0}) {
        const auto g = discretize::Grid::equispaced_1d(0.0, 1.0, 7);
        const auto k = kernels::Kernel::squared_exponential(r, 1);
        const auto a = discretize::collocate_global(k, lap, g);
        CAPTURE(r);
        CHECK(linalg::is_psd(a.E));
    }
}

TEST_CASE("stencil growth improves the Laplacian approximation") {
    // target: Lap of u(x) = sin(x^2) on 25 points, well-conditioned input scale
    const auto g = discretize::Grid::equispaced_1d(0.0, 2.0, 25);
    const auto k = kernels::Kernel::squared_exponential(1.0, 1);
    const auto lap = kernels::DiffOperator::laplacian();
    Eigen::VectorXd u(25), target(25);
    for (int i = 0; i < 25; ++i) {
        const double x = g.points(i, 0);
        u(i) = std::sin(x * x);
        target(i) = 2.0 * std::cos(x * x) - 4.0 * x * x * std::sin(x * x);
    }
    const auto rmse = [&](Eigen::Index radius) {
        const auto a = discretize::collocate_local(k, lap, g, radius);
        return std::sqrt((a.D * u - target).squaredNorm() / 25.0);
    };
    CHECK(rmse(2) < rmse(1));
}

TEST_CASE("boundary collocation") {
    const auto g = discretize::Grid::equispaced_1d(0.0, 1.0, 6);

    SECTION("Dirichlet gives the identity with zero error") {
        const auto k = kernels::Kernel::squared_exponential(0.25, 1);
        const auto b = discretize::collocate_boundary(k, kernels::DiffOperator::identity(), g);
        CHECK((b.D - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(b.E.cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("Neumann with SE kernel has nonzero PSD error") {
        const auto k = kernels::Kernel::squared_exponential(1.0, 1);
        const auto b = discretize::collocate_boundary(
            k, kernels::DiffOperator::directional(Eigen::VectorXd::Ones(1)), g);
        CHECK(b.E.diagonal().maxCoeff() > 1e-12);
        CHECK(linalg::is_psd(b.E));
    }

    SECTION("Neumann with polynomial kernel cancels the error") {
        const auto k = kernels::Kernel::polynomial(2, 1);
        const auto b = discretize::collocate_boundary(
            k, kernels::DiffOperator::directional(Eigen::VectorXd::Ones(1)), g);
        CHECK(b.E.cwiseAbs().maxCoeff() < 1e-7);
    }

    SECTION("Laplacian boundary operator is rejected") {
        const auto k = kernels::Kernel::squared_exponential(0.25, 1);
        CHECK_THROWS_AS(
            discretize::collocate_boundary(k, kernels::DiffOperator::laplacian(), g),
            std::invalid_argument);
    }
}

TEST_CASE("error covariance equals the kernel-route Schur complement") {
    const auto g = discretize::Grid::equispaced_1d(0.0, 2.0, 8);
    const auto k = kernels::Kernel::squared_exponential(1.0, 1);
    const auto lap = kernels::DiffOperator::laplacian();
    const auto a = discretize::collocate_global(k, lap, g);
    const auto G_both = kernels::gram(kernels::apply_both(lap, k), g.points, g.points);
    const auto K = kernels::gram(kernels::as_fn(k), g.points, g.points);
    const Eigen::MatrixXd residual = G_both - a.D * K * a.D.transpose();
    CHECK(oracles::rel_err(a.E, residual) < 1e-6);
    CHECK(linalg::is_psd(linalg::symmetrized(residual), 1e-10));
}
