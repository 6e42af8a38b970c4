#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <sstream>
#include <stdexcept>
#include <string>

namespace pnmol::linalg {

/// Raised when a Gram or innovation matrix cannot be factorized even after
/// the full jitter ladder has been exhausted.
class FactorizationError : public std::runtime_error {
public:
    explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

inline bool has_nan(const Eigen::MatrixXd& m) { return !m.allFinite(); }

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// PSD within tolerance: smallest eigenvalue >= -(1e-8 * trace/dim + abs_slack).
inline bool is_psd(const Eigen::MatrixXd& sym, double abs_slack = 1e-12) {
    if (sym.rows() == 0) return true;
    const double scale = sym.trace() / static_cast<double>(sym.rows());
    return min_eigenvalue(sym) >= -(1e-8 * std::abs(scale) + abs_slack);
}

/// Symmetric factorization with an escalating diagonal nugget.
///
/// Tries nugget 0, then 1e-12 * mean(diag) escalating by factors of 10 up to
/// 1e-6 * mean(diag), and fails afterwards. A factorization is accepted only
/// if its Cholesky pivots are positive and not degenerate relative to the
/// largest pivot, so that solves stay meaningful for nearly singular input.
class PsdSolver {
public:
    explicit PsdSolver(const Eigen::MatrixXd& mat) : dim_(mat.rows()) {
        if (mat.rows() != mat.cols()) throw std::invalid_argument("PsdSolver: matrix not square");
        double scale = dim_ > 0 ? mat.diagonal().mean() : 1.0;
        if (!(scale > 0.0)) scale = 1.0;
        for (double rel : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
            const double nugget = rel * scale;
            llt_.compute(mat + nugget * Eigen::MatrixXd::Identity(dim_, dim_));
            if (acceptable()) {
                nugget_ = nugget;
                return;
            }
        }
        std::ostringstream oss;
        oss << "PsdSolver: " << dim_ << "x" << dim_
            << " matrix not factorizable after jitter escalation (ill-conditioned Gram or innovation)";
        throw FactorizationError(oss.str());
    }

    template <typename Derived>
    auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
        return llt_.solve(rhs).eval();
    }

    /// x^T M^{-1} x for the factorized M.
    double quad_form(const Eigen::VectorXd& x) const {
        return x.dot(llt_.solve(x));
    }

    double nugget() const { return nugget_; }

private:
    bool acceptable() const {
        if (llt_.info() != Eigen::Success) return false;
        if (dim_ == 0) return true;
        const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal();
        if (!pivots.allFinite()) return false;
        const double lo = pivots.minCoeff();
        const double hi = pivots.maxCoeff();
        return lo > 0.0 && lo >= 1e-8 * hi;
    }

    Eigen::Index dim_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double nugget_ = 0.0;
};

/// Nearest PSD matrix: negative eigenvalues produced by floating-point
/// cancellation are clamped to zero.
inline Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    return symmetrized(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
}

/// Moore-Penrose pseudo-inverse with singular values below
/// rel_cutoff * sigma_max treated as zero.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_cutoff = 1e-10) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rel_cutoff * sv(0) : 0.0;
    Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) inv_sv(i) = 1.0 / sv(i);
    }
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return Eigen::kroneckerProduct(a, b).eval();
}

inline Eigen::VectorXd kron_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

}  // namespace pnmol::linalg
