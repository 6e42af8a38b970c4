#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "pnmol/kernels.hpp"
#include "pnmol/linalg.hpp"

using namespace pnmol;
using Catch::Approx;

namespace {
Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }
}  // namespace

TEST_CASE("kernel evaluation matches closed forms") {
    const auto se1 = kernels::Kernel::squared_exponential(1.0, 1);
    CHECK(kernels::eval(se1, vec1(0.3), vec1(0.3)) == Approx(1.0));

    const auto se = kernels::Kernel::squared_exponential(0.25, 1);
    CHECK(kernels::eval(se, vec1(0.0), vec1(2.0)) == Approx(std::exp(-0.25)).epsilon(1e-12));

    const auto poly = kernels::Kernel::polynomial(1, 1);
    CHECK(kernels::eval(poly, vec1(0.0), vec1(0.0)) == Approx(1.0));
}

TEST_CASE("kernel evaluation rejects dimension mismatch") {
    const auto se = kernels::Kernel::squared_exponential(1.0, 2);
    CHECK_THROWS_AS(kernels::eval(se, vec1(0.0), vec1(1.0)), std::invalid_argument);
}

TEST_CASE("kernel symmetry and PSD gram on random points") {
    const auto pts = oracles::random_points(8, 2, 7);
    for (const auto& k : {kernels::Kernel::squared_exponential(0.7, 2),
                          kernels::Kernel::polynomial(2, 2)}) {
        for (int i = 0; i < pts.rows(); ++i)
            for (int j = 0; j < pts.rows(); ++j)
                CHECK(kernels::eval(k, pts.row(i), pts.row(j)) ==
                      Approx(kernels::eval(k, pts.row(j), pts.row(i))).margin(1e-14));
        const auto G = kernels::gram(kernels::as_fn(k), pts, pts);
        CHECK(linalg::is_psd(G));
        CHECK((G - G.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("gram matrix shapes and values") {
    const auto se = kernels::Kernel::squared_exponential(1.0, 1);
    Eigen::MatrixXd single(1, 1);
    single << 0.4;
    const auto g1 = kernels::gram(kernels::as_fn(se), single, single);
    REQUIRE(g1.rows() == 1);
    CHECK(g1(0, 0) == Approx(1.0));

    Eigen::MatrixXd X(2, 1);
    X << 0.0, 1.0;
    const auto g2 = kernels::gram(kernels::as_fn(se), X, X);
    CHECK(g2(0, 0) == Approx(1.0));
    CHECK(g2(0, 1) == Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(g2(1, 0) == Approx(std::exp(-1.0)).epsilon(1e-12));

    Eigen::MatrixXd Y(3, 1);
    Y << 0.1, 0.5, 0.9;
    const auto g3 = kernels::gram(kernels::as_fn(se), Y, X);
    CHECK(g3.rows() == 3);
    CHECK(g3.cols() == 2);
}

TEST_CASE("identity operator leaves kernels unchanged") {
    const auto id = kernels::DiffOperator::identity();
    const auto pts = oracles::random_points(4, 1, 11);
    for (const auto& k :
         {kernels::Kernel::squared_exponential(0.25, 1), kernels::Kernel::polynomial(3, 1)}) {
        const auto left = kernels::apply_left(id, k);
        const auto both = kernels::apply_both(id, k);
        for (int i = 0; i < pts.rows(); ++i)
            for (int j = 0; j < pts.rows(); ++j) {
                const double want = kernels::eval(k, pts.row(i), pts.row(j));
                CHECK(left(pts.row(i), pts.row(j)) == Approx(want));
                CHECK(both(pts.row(i), pts.row(j)) == Approx(want));
            }
    }
}

TEST_CASE("SE derivative values at zero distance") {
    const double r = 0.25;
    const auto se = kernels::Kernel::squared_exponential(r, 1);
    const auto lap = kernels::DiffOperator::laplacian();
    const auto dir = kernels::DiffOperator::directional(Eigen::VectorXd::Ones(1));

    // second derivative of exp(-r^2 t^2) at t=0
    CHECK(kernels::apply_left(lap, se)(vec1(0.5), vec1(0.5)) ==
          Approx(-2.0 * r * r).epsilon(1e-12));
    // fourth derivative of exp(-r^2 t^2) at t=0
    CHECK(kernels::apply_both(lap, se)(vec1(0.5), vec1(0.5)) ==
          Approx(12.0 * r * r * r * r).epsilon(1e-12));
    // odd function at zero distance
    CHECK(kernels::apply_left(dir, se)(vec1(0.5), vec1(0.5)) == Approx(0.0).margin(1e-15));
}

TEST_CASE("operator application agrees with finite differences of eval") {
    const double h = 1e-4;
    for (int dim : {1, 2}) {
        const auto pts = oracles::random_points(3, dim, 23 + dim);
        Eigen::VectorXd d1 = Eigen::VectorXd::Zero(dim);
        d1(0) = 1.0;
        Eigen::VectorXd d2 = Eigen::VectorXd::Ones(dim);
        for (const auto& k : {kernels::Kernel::squared_exponential(0.25, dim),
                              kernels::Kernel::squared_exponential(1.5, dim),
                              kernels::Kernel::polynomial(2, dim),
                              kernels::Kernel::polynomial(4, dim)}) {
            for (const auto& op : {kernels::DiffOperator::laplacian(),
                                   kernels::DiffOperator::directional(d1),
                                   kernels::DiffOperator::directional(d2)}) {
                const auto base = kernels::as_fn(k);
                const auto left = kernels::apply_left(op, k);
                const auto both = kernels::apply_both(op, k);
                for (int i = 0; i < pts.rows(); ++i) {
                    for (int j = 0; j < pts.rows(); ++j) {
                        const Eigen::VectorXd x = pts.row(i), y = pts.row(j);
                        double fd_left, fd_both;
                        if (op.kind == kernels::OperatorKind::Laplacian) {
                            fd_left = oracles::fd_laplacian_left(base, x, y, h);
                            fd_both = oracles::fd_laplacian_right(left, x, y, h);
                        } else {
                            fd_left = oracles::fd_directional_left(base, op.direction, x, y, h);
                            fd_both = oracles::fd_directional_right(left, op.direction, x, y, h);
                        }
                        const double scale_l = std::max(1e-6, std::abs(fd_left));
                        const double scale_b = std::max(1e-6, std::abs(fd_both));
                        CHECK(std::abs(left(x, y) - fd_left) / scale_l < 1e-5);
                        CHECK(std::abs(both(x, y) - fd_both) / scale_b < 1e-5);
                    }
                }
            }
        }
    }
}

TEST_CASE("apply_both gram is symmetric") {
    const auto pts = oracles::random_points(6, 1, 3);
    const auto k = kernels::Kernel::squared_exponential(0.8, 1);
    const auto G =
        kernels::gram(kernels::apply_both(kernels::DiffOperator::laplacian(), k), pts, pts);
    CHECK((G - G.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("polynomial gram is rank-deficient beyond the feature rank") {
    // degree p in d dimensions spans (p+d choose d) monomial features
    const auto poly = kernels::Kernel::polynomial(2, 1);
    Eigen::MatrixXd X(5, 1);
    X << 0.0, 0.25, 0.5, 0.75, 1.0;
    const auto G = kernels::gram(kernels::as_fn(poly), X, X);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
    const auto& sv = svd.singularValues();
    CHECK(sv(3) < 1e-10 * sv(0));
    CHECK(sv(2) > 1e-10 * sv(0));  // rank exactly 3
}
