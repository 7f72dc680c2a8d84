#include "koopman/numerics.hpp"

namespace koopman {

namespace {
constexpr int kEigMaxIterationsPerRow = 40;
}

std::vector<EigenPair> eig(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("eig: matrix is not square");
    if (!a.allFinite()) throw InvalidArgument("eig: non-finite entries");
    const Index n = a.rows();
    std::vector<EigenPair> pairs;
    if (n == 0) return pairs;

    const int max_iterations = kEigMaxIterationsPerRow * static_cast<int>(n);
    Eigen::EigenSolver<Matrix> solver;
    solver.setMaxIterations(max_iterations);  // a total, not per row
    solver.compute(a, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success) throw EigFailed(max_iterations);

    const Eigen::VectorXcd values = solver.eigenvalues();
    const Eigen::MatrixXcd vectors = solver.eigenvectors();
    const Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
    const double tolerance = 1e-8 * std::max(a.norm(), std::numeric_limits<double>::min());

    pairs.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Eigen::VectorXcd v = vectors.col(i);
        const double vnorm = v.norm();
        if (vnorm > 0) v /= vnorm;
        const double residual = (ac * v - values(i) * v).norm();
        if (!(residual <= tolerance)) throw EigFailed(max_iterations);
        pairs.push_back({values(i), std::move(v)});
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const EigenPair& x, const EigenPair& y) {
        const double mx = std::abs(x.value);
        const double my = std::abs(y.value);
        if (mx != my) return mx > my;
        return x.value.imag() > y.value.imag();
    });
    return pairs;
}

SymmetricSpectrum symmetric_spectrum(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("symmetric_spectrum: matrix is not square");
    if (a.size() == 0) return {0.0, 0.0};
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw EigFailed(30 * static_cast<int>(a.rows()));
    const Vector abs_values = solver.eigenvalues().cwiseAbs();
    return {abs_values.minCoeff(), abs_values.maxCoeff()};
}

}  // namespace koopman
