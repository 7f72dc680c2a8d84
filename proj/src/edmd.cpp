#include "koopman/edmd.hpp"

#include <cmath>

namespace koopman {

KoopmanMatrix edmd(const Matrix& psi_x, const Matrix& psi_y, RankPolicy policy,
                   std::vector<std::string> names) {
    if (psi_x.rows() != psi_y.rows() || psi_x.cols() != psi_y.cols()) {
        throw InvalidArgument("edmd: Psi(X) and Psi(Y) shapes differ");
    }
    if (!names.empty() && static_cast<Index>(names.size()) != psi_x.cols()) {
        throw InvalidArgument("edmd: name list does not match the dictionary size");
    }
    KoopmanMatrix out;
    try {
        out.k = least_squares(psi_x, psi_y, policy);
    } catch (const RankDeficient& e) {
        Eigen::ColPivHouseholderQR<Matrix> qr(psi_x);
        qr.setThreshold(rank_threshold<double>(psi_x.rows(), psi_x.cols()));
        std::string detail = "dependent columns:";
        const auto& perm = qr.colsPermutation().indices();
        for (Index i = qr.rank(); i < psi_x.cols(); ++i) {
            const Index col = perm(i);
            detail += " " + (names.empty() ? std::to_string(col)
                                           : names[static_cast<std::size_t>(col)]);
        }
        throw RankDeficient(e.rank(), psi_x.cols(), detail);
    }
    out.residual = (psi_y - psi_x * out.k).norm();
    out.names = std::move(names);
    return out;
}

std::vector<Index> inverse_permutation(const std::vector<Index>& perm) {
    const auto n = static_cast<Index>(perm.size());
    std::vector<Index> inv(perm.size(), -1);
    for (Index a = 0; a < n; ++a) {
        const Index p = perm[static_cast<std::size_t>(a)];
        if (p < 0 || p >= n || inv[static_cast<std::size_t>(p)] != -1) {
            throw InvalidPermutation("not a permutation of 0.." + std::to_string(n - 1));
        }
        inv[static_cast<std::size_t>(p)] = a;
    }
    return inv;
}

KoopmanMatrix permute(const KoopmanMatrix& k, const std::vector<Index>& perm) {
    if (static_cast<Index>(perm.size()) != k.size()) {
        throw InvalidPermutation("permutation length " + std::to_string(perm.size()) +
                                 " != matrix size " + std::to_string(k.size()));
    }
    inverse_permutation(perm);  // validates
    const Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>> idx(perm.data(), k.size());
    KoopmanMatrix out = k;
    out.k = k.k(idx, idx);
    if (!k.names.empty()) {
        for (std::size_t a = 0; a < perm.size(); ++a) {
            out.names[a] = k.names[static_cast<std::size_t>(perm[a])];
        }
    }
    return out;
}

KoopmanMatrix zero_bottom_left(const KoopmanMatrix& k, Index n) {
    check_split(n, k.size());
    KoopmanMatrix out = k;
    out.k.bottomLeftCorner(k.size() - n, n).setZero();
    out.split = n;
    return out;
}

double leakage_eps0(const Matrix& k, Index n) {
    // rows i <= N of K^T are columns of K; their entries j > N sit in K21
    return inf_norm(block(k, n).k21.transpose());
}

BlockReport block_report(const Matrix& k, Index n) {
    const auto b = block(k, n);
    BlockReport r;
    r.n = n;
    r.rows = b.k21.rows();
    r.cols = b.k21.cols();
    r.offdiag_frobenius = b.k21.norm();
    r.max_abs = b.k21.cwiseAbs().maxCoeff();
    r.threshold = 1e-10 * k.norm();
    r.structural_zero = r.max_abs <= r.threshold;
    r.eps0 = leakage_eps0(k, n);
    return r;
}

void FiniteSampleParams::validate() const {
    if (!(rho > 0 && rho < 0.5)) {
        throw InvalidProbability("rho = " + std::to_string(rho) + " is outside (0, 1/2)");
    }
    if (!(n_tilde >= 1 && bound_d > 0 && lambda_min > 0 && gram_norm2 > 0 && r0_min > 0 &&
          r_max > 0 && eps0 >= 0) ||
        !std::isfinite(n_tilde + bound_d + lambda_min + gram_norm2 + r0_min + r_max + eps0)) {
        throw InvalidArgument("finite-sample parameters must be finite and positive");
    }
}

FiniteSampleEpsilon finite_sample_epsilon(const FiniteSampleParams& p, double m) {
    p.validate();
    if (!(m > 0)) throw InvalidArgument("finite_sample_epsilon: M must be positive");
    const double log_term = std::log(2.0 * p.n_tilde / p.rho);
    const double d2 = p.bound_d * p.bound_d;
    const double c = 4.0 * std::pow(p.n_tilde, 1.5) * d2 * (1.0 + p.gram_norm2 / p.lambda_min) /
                     p.lambda_min;
    FiniteSampleEpsilon out;
    out.c_edmd = c;
    out.eps_m = c * std::sqrt(2.0 * log_term / m);
    out.m_min = 32.0 * p.n_tilde * p.n_tilde * d2 * d2 * log_term / (p.lambda_min * p.lambda_min);
    return out;
}

double end_to_end_bound(const FiniteSampleParams& p, double alpha, double m) {
    if (!(alpha >= 0 && alpha < 1)) throw InvalidArgument("alpha must lie in [0,1)");
    const auto e = finite_sample_epsilon(p, m);
    return 2.0 * alpha * (p.eps0 + e.eps_m) / ((1.0 - alpha) * p.r0_min);
}

double sample_complexity(const FiniteSampleParams& p, double alpha, double gap0, double p12_inf) {
    if (!(alpha > 0 && alpha < 1)) throw InvalidArgument("alpha must lie in (0,1)");
    const auto e = finite_sample_epsilon(p, 1.0);
    const double effective = gap0 - 4.0 * alpha * p.r_max * p12_inf / ((1.0 - alpha) * p.r0_min);
    if (!(gap0 > 0) || !(effective > 0)) return std::numeric_limits<double>::infinity();
    const double log_term = std::log(2.0 * p.n_tilde / p.rho);
    const double ratio = alpha / (1.0 - alpha);
    const double second = 32.0 * ratio * ratio * log_term * e.c_edmd * e.c_edmd /
                          (p.r0_min * p.r0_min * effective * effective);
    return std::max(e.m_min, second);
}

double finite_sample_leakage_bound(const FiniteSampleParams& p, double alpha, double gamma,
                                   double ppr_mass_in_set, double m) {
    if (!(alpha >= 0 && alpha < 1)) throw InvalidArgument("alpha must lie in [0,1)");
    const auto e = finite_sample_epsilon(p, m);
    return (1.0 - gamma) / (1.0 - alpha) *
           (1.0 - ppr_mass_in_set + 2.0 * alpha * e.eps_m / ((1.0 - alpha) * p.r0_min));
}

FiniteSampleParams estimate_finite_sample_params(const Matrix& psi_x, const Matrix& k, Index n,
                                                 double bound_d, double rho) {
    if (psi_x.cols() != k.rows()) throw InvalidArgument("estimate: size mismatch");
    const Matrix gram = psi_x.transpose() * psi_x / static_cast<double>(psi_x.rows());
    const auto spectrum = symmetric_spectrum(gram);
    Matrix k0 = k;
    if (n < k.rows()) k0.bottomLeftCorner(k.rows() - n, n).setZero();
    FiniteSampleParams p;
    p.n_tilde = static_cast<double>(k.rows());
    p.bound_d = bound_d;
    p.lambda_min = spectrum.min_abs;
    p.gram_norm2 = spectrum.norm2;
    p.rho = rho;
    p.r0_min = min_abs_row_sum(k0.transpose());
    p.r_max = inf_norm(k.transpose());
    p.eps0 = n < k.rows() ? leakage_eps0(k, n) : 0.0;
    return p;
}

std::vector<double> prediction_error(const Matrix& k_sub, const Matrix& psi_start,
                                     const std::vector<Matrix>& psi_future,
                                     const std::vector<Index>& targets) {
    if (k_sub.rows() != k_sub.cols() || psi_start.cols() != k_sub.rows()) {
        throw InvalidArgument("prediction_error: K and Psi sizes differ");
    }
    for (Index t : targets) {
        if (t < 0 || t >= k_sub.rows()) throw InvalidArgument("prediction_error: bad target index");
    }
    const auto m = static_cast<double>(psi_start.rows());
    std::vector<double> errors;
    errors.reserve(psi_future.size());
    Matrix pred = psi_start;
    for (const Matrix& truth : psi_future) {
        if (truth.rows() != psi_start.rows() || truth.cols() != psi_start.cols()) {
            throw InvalidArgument("prediction_error: future block has the wrong shape");
        }
        pred = pred * k_sub;
        double total = 0;
        for (Index t : targets) total += (pred.col(t) - truth.col(t)).squaredNorm() / m;
        errors.push_back(std::sqrt(total));
    }
    return errors;
}

Matrix heatmap_rescale(const Matrix& k) {
    return k.unaryExpr([](double a) { return -1.0 + 2.0 / (1.0 + std::exp(-a)); });
}

}  // namespace koopman
