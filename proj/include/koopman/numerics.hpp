#pragma once

// Dense real-matrix kernels shared by every other module. Everything here is a
// pure function of its inputs.

#include <algorithm>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "koopman/errors.hpp"

namespace koopman {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// How a least-squares solve treats a numerically rank-deficient design matrix.
enum class RankPolicy {
    Strict,       ///< throw RankDeficient
    MinimumNorm,  ///< return the Moore-Penrose (minimum-norm) minimiser
};

/// Relative pivot threshold used for rank decisions: max(rows, cols) * eps.
template <typename Scalar>
Scalar rank_threshold(Index rows, Index cols) {
    return static_cast<Scalar>(std::max(rows, cols)) * std::numeric_limits<Scalar>::epsilon();
}

/// argmin_X ||B - A X||_F via column-pivoted Householder QR.
///
/// With RankPolicy::Strict a rank-deficient A raises RankDeficient carrying
/// the estimated rank; with RankPolicy::MinimumNorm the minimum-norm solution
/// A^+ B is returned instead (complete orthogonal decomposition).
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> least_squares(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
    RankPolicy policy = RankPolicy::Strict) {
    using Scalar = typename DerivedA::Scalar;
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (a.rows() != b.rows()) {
        throw InvalidArgument("least_squares: A has " + std::to_string(a.rows()) +
                              " rows but B has " + std::to_string(b.rows()));
    }
    const Scalar threshold = rank_threshold<Scalar>(a.rows(), a.cols());
    Eigen::ColPivHouseholderQR<Dense> qr(a);
    qr.setThreshold(threshold);
    if (qr.rank() == a.cols()) {
        return qr.solve(b);
    }
    if (policy == RankPolicy::Strict) {
        throw RankDeficient(qr.rank(), a.cols());
    }
    // the threshold must be set before compute() so Z matches the rank
    Eigen::CompleteOrthogonalDecomposition<Dense> cod(a.rows(), a.cols());
    cod.setThreshold(threshold);
    cod.compute(a);
    return cod.solve(b);
}

template <typename Derived>
typename Derived::Scalar inf_norm(const Eigen::MatrixBase<Derived>& a) {
    if (a.size() == 0) return 0;
    return a.cwiseAbs().rowwise().sum().maxCoeff();
}

template <typename Derived>
typename Derived::Scalar min_abs_row_sum(const Eigen::MatrixBase<Derived>& a) {
    if (a.size() == 0) return 0;
    return a.cwiseAbs().rowwise().sum().minCoeff();
}

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& a) {
    return a.norm();
}

/// (I - alpha Q)^{-1} for a nonnegative Q with ||Q||_inf <= 1 and alpha < 1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> resolvent(
    const Eigen::MatrixBase<Derived>& q, typename Derived::Scalar alpha) {
    using Scalar = typename Derived::Scalar;
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (q.rows() != q.cols()) throw InvalidArgument("resolvent: matrix is not square");
    const Index n = q.rows();
    Dense system = Dense::Identity(n, n) - alpha * q;
    Eigen::FullPivLU<Dense> lu(system);
    if (!lu.isInvertible()) throw SolveFailed("resolvent: I - alpha*Q is singular");
    Dense r = lu.inverse();
    if (!r.allFinite()) throw SolveFailed("resolvent: non-finite entries");
    return r;
}

/// Row-vector PPR solve: returns (1 - alpha) s (I - alpha Q)^{-1}.
///
/// Solved as the transposed system (I - alpha Q^T) x = s with a dense LU.
template <typename DerivedS, typename DerivedQ>
Eigen::Matrix<typename DerivedQ::Scalar, 1, Eigen::Dynamic> solve_row_resolvent(
    const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedQ>& q,
    typename DerivedQ::Scalar alpha) {
    using Scalar = typename DerivedQ::Scalar;
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Col = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    constexpr Scalar tol = Scalar(1e-9);
    if (q.rows() != q.cols() || s.size() != q.rows()) {
        throw InvalidArgument("solve_row_resolvent: dimension mismatch");
    }
    if (!(alpha >= 0 && alpha < 1)) {
        throw InvalidArgument("solve_row_resolvent: alpha must lie in [0,1)");
    }
    if (q.size() > 0 && (q.minCoeff() < 0 || inf_norm(q) > 1 + tol)) {
        throw InvalidArgument("solve_row_resolvent: Q must be nonnegative with ||Q||_inf <= 1");
    }
    const Index n = q.rows();
    Col rhs = s.derived().reshaped();
    if (alpha == 0) return rhs.transpose();
    Dense system = Dense::Identity(n, n) - alpha * q.transpose();
    Eigen::PartialPivLU<Dense> lu(system);
    Col x = lu.solve(rhs);
    if (!x.allFinite()) throw SolveFailed("solve_row_resolvent: non-finite solution");
    return ((1 - alpha) * x).transpose();
}

/// One eigenpair of a real matrix.
struct EigenPair {
    std::complex<double> value;
    Eigen::VectorXcd vector;
};

/// Eigen-decomposition of a real square matrix, sorted by modulus descending
/// (ties by descending imaginary part). Each pair satisfies
/// ||A v - lambda v|| <= 1e-8 ||A||_F with ||v|| = 1.
std::vector<EigenPair> eig(const Matrix& a);

/// Extreme eigenvalues of a symmetric matrix.
struct SymmetricSpectrum {
    double min_abs;  ///< smallest eigenvalue modulus
    double norm2;    ///< largest eigenvalue modulus (spectral norm)
};
SymmetricSpectrum symmetric_spectrum(const Matrix& a);

}  // namespace koopman
