#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace pnmol::kernels {

/// Bivariate function of two points, e.g. a kernel or a kernel with a
/// differential operator applied to one or both arguments.
using BivariateFn = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

enum class KernelFamily { SquaredExponential, Polynomial };

/// Covariance kernel as a pure value object. The global output scale gamma
/// is deliberately not part of the kernel: it factors out of every
/// covariance produced downstream and is applied at read-out.
struct Kernel {
    KernelFamily family;
    double input_scale = 1.0;  // SE: k(x,y) = exp(-r^2 ||x-y||^2)
    int degree = 0;            // Polynomial: k(x,y) = (1 + x.y)^degree
    int dimension = 1;

    static Kernel squared_exponential(double r, int dim) {
        if (!(r > 0.0)) throw std::invalid_argument("Kernel: input scale must be positive");
        if (dim < 1) throw std::invalid_argument("Kernel: dimension must be positive");
        return Kernel{KernelFamily::SquaredExponential, r, 0, dim};
    }

    static Kernel polynomial(int degree, int dim) {
        if (degree < 0) throw std::invalid_argument("Kernel: degree must be non-negative");
        if (dim < 1) throw std::invalid_argument("Kernel: dimension must be positive");
        return Kernel{KernelFamily::Polynomial, 0.0, degree, dim};
    }
};

enum class OperatorKind { Identity, Laplacian, DirectionalDerivative };

struct DiffOperator {
    OperatorKind kind;
    Eigen::VectorXd direction;  // unit vector, DirectionalDerivative only

    static DiffOperator identity() { return DiffOperator{OperatorKind::Identity, {}}; }
    static DiffOperator laplacian() { return DiffOperator{OperatorKind::Laplacian, {}}; }
    static DiffOperator directional(Eigen::VectorXd dir) {
        const double n = dir.norm();
        if (!(n > 0.0)) throw std::invalid_argument("DiffOperator: direction must be nonzero");
        dir /= n;
        return DiffOperator{OperatorKind::DirectionalDerivative, std::move(dir)};
    }
};

namespace detail {

inline double ipow(double base, int e) {
    double out = 1.0;
    for (int i = 0; i < e; ++i) out *= base;
    return out;
}

inline void check_dims(const Kernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != k.dimension || y.size() != k.dimension)
        throw std::invalid_argument("kernel eval: point dimension mismatch");
}

[[noreturn]] inline void unsupported_pair() {
    throw std::invalid_argument(
        "no closed-form derivative for this (operator, kernel family) pair");
}

}  // namespace detail

inline double eval(const Kernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    detail::check_dims(k, x, y);
    switch (k.family) {
        case KernelFamily::SquaredExponential: {
            const double r2 = k.input_scale * k.input_scale;
            return std::exp(-r2 * (x - y).squaredNorm());
        }
        case KernelFamily::Polynomial:
            return detail::ipow(1.0 + x.dot(y), k.degree);
    }
    detail::unsupported_pair();
}

/// Gram matrix G[i][j] = kfun(X.row(i), Y.row(j)). Points are rows.
inline Eigen::MatrixXd gram(const BivariateFn& kfun, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y) {
    if (X.cols() != Y.cols()) throw std::invalid_argument("gram: point dimension mismatch");
    Eigen::MatrixXd out(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j)
            out(i, j) = kfun(X.row(i).transpose(), Y.row(j).transpose());
    return out;
}

inline BivariateFn as_fn(const Kernel& k) {
    return [k](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return eval(k, x, y); };
}

/// (D_z k)(z, z'): operator applied to the first argument, closed form.
///
/// SE derivatives are in terms of u = z - z', s = ||u||^2:
///   grad_z k   = -2 r^2 u k
///   lap_z  k   = (-2 r^2 d + 4 r^4 s) k
/// Polynomial derivatives in terms of t = 1 + z.z'.
inline BivariateFn apply_left(const DiffOperator& op, const Kernel& k) {
    if (op.kind == OperatorKind::Identity) return as_fn(k);
    switch (k.family) {
        case KernelFamily::SquaredExponential: {
            const double r2 = k.input_scale * k.input_scale;
            if (op.kind == OperatorKind::Laplacian) {
                return [k, r2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                    detail::check_dims(k, x, y);
                    const double s = (x - y).squaredNorm();
                    const double d = static_cast<double>(k.dimension);
                    return (-2.0 * r2 * d + 4.0 * r2 * r2 * s) * std::exp(-r2 * s);
                };
            }
            const Eigen::VectorXd v = op.direction;
            return [k, r2, v](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                detail::check_dims(k, x, y);
                const Eigen::VectorXd u = x - y;
                return -2.0 * r2 * v.dot(u) * std::exp(-r2 * u.squaredNorm());
            };
        }
        case KernelFamily::Polynomial: {
            const int p = k.degree;
            if (op.kind == OperatorKind::Laplacian) {
                return [k, p](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                    detail::check_dims(k, x, y);
                    if (p < 2) return 0.0;
                    const double t = 1.0 + x.dot(y);
                    return static_cast<double>(p) * (p - 1) * detail::ipow(t, p - 2) *
                           y.squaredNorm();
                };
            }
            const Eigen::VectorXd v = op.direction;
            return [k, p, v](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                detail::check_dims(k, x, y);
                if (p < 1) return 0.0;
                const double t = 1.0 + x.dot(y);
                return static_cast<double>(p) * detail::ipow(t, p - 1) * v.dot(y);
            };
        }
    }
    detail::unsupported_pair();
}

/// (D_z D_{z'} k)(z, z'): operator applied to both arguments, closed form.
inline BivariateFn apply_both(const DiffOperator& op, const Kernel& k) {
    if (op.kind == OperatorKind::Identity) return as_fn(k);
    switch (k.family) {
        case KernelFamily::SquaredExponential: {
            const double r2 = k.input_scale * k.input_scale;
            if (op.kind == OperatorKind::Laplacian) {
                // lap_z lap_{z'} k = [4 r^4 d (d+2) - 16 r^6 (d+2) s + 16 r^8 s^2] k
                return [k, r2](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                    detail::check_dims(k, x, y);
                    const double s = (x - y).squaredNorm();
                    const double d = static_cast<double>(k.dimension);
                    const double r4 = r2 * r2;
                    const double poly = 4.0 * r4 * d * (d + 2.0) -
                                        16.0 * r4 * r2 * (d + 2.0) * s + 16.0 * r4 * r4 * s * s;
                    return poly * std::exp(-r2 * s);
                };
            }
            const Eigen::VectorXd v = op.direction;
            return [k, r2, v](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                detail::check_dims(k, x, y);
                const Eigen::VectorXd u = x - y;
                const double proj = v.dot(u);
                return 2.0 * r2 * (1.0 - 2.0 * r2 * proj * proj) *
                       std::exp(-r2 * u.squaredNorm());
            };
        }
        case KernelFamily::Polynomial: {
            const int p = k.degree;
            if (op.kind == OperatorKind::Laplacian) {
                return [k, p](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                    detail::check_dims(k, x, y);
                    const double t = 1.0 + x.dot(y);
                    const double d = static_cast<double>(k.dimension);
                    double out = 0.0;
                    if (p >= 2) out += 2.0 * d * p * (p - 1) * detail::ipow(t, p - 2);
                    if (p >= 3) out += 4.0 * p * (p - 1) * (p - 2) * detail::ipow(t, p - 3) * x.dot(y);
                    if (p >= 4)
                        out += static_cast<double>(p) * (p - 1) * (p - 2) * (p - 3) *
                               detail::ipow(t, p - 4) * x.squaredNorm() * y.squaredNorm();
                    return out;
                };
            }
            const Eigen::VectorXd v = op.direction;
            return [k, p, v](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                detail::check_dims(k, x, y);
                const double t = 1.0 + x.dot(y);
                double out = 0.0;
                if (p >= 1) out += static_cast<double>(p) * detail::ipow(t, p - 1);
                if (p >= 2)
                    out += static_cast<double>(p) * (p - 1) * detail::ipow(t, p - 2) * v.dot(x) *
                           v.dot(y);
                return out;
            };
        }
    }
    detail::unsupported_pair();
}

}  // namespace pnmol::kernels
