#pragma once

// EDMD estimation, block structure of the Koopman matrix and finite-sample
// constants.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "koopman/numerics.hpp"

namespace koopman {

/// EDMD matrix K with Psi(Y) ~ Psi(X) K: column i holds the coefficients of
/// K psi_i in the dictionary.
struct KoopmanMatrix {
    Matrix k;
    std::vector<std::string> names;
    std::optional<Index> split;
    double residual = std::numeric_limits<double>::quiet_NaN();

    Index size() const { return k.rows(); }
};

/// K = argmin ||Psi(Y) - Psi(X) K||_F. A rank-deficient Psi(X) raises
/// RankDeficient naming the columns the pivoted QR found dependent, unless
/// `policy` is MinimumNorm (K = Psi(X)^+ Psi(Y)).
KoopmanMatrix edmd(const Matrix& psi_x, const Matrix& psi_y, RankPolicy policy = RankPolicy::Strict,
                   std::vector<std::string> names = {});

/// Views of the 2x2 partition at N (top-left block N x N).
template <typename Derived>
struct Blocks {
    using View = Eigen::Block<const Derived>;
    View k11, k12, k21, k22;
};

inline void check_split(Index n, Index total) {
    if (n < 1 || n >= total) {
        throw InvalidSplit("split " + std::to_string(n) + " outside [1, " +
                           std::to_string(total - 1) + "]");
    }
}

template <typename Derived>
Blocks<Derived> block(const Eigen::MatrixBase<Derived>& k, Index n) {
    if (k.rows() != k.cols()) throw InvalidArgument("block: matrix is not square");
    check_split(n, k.rows());
    const Derived& d = k.derived();
    const Index rest = k.rows() - n;
    return {d.block(0, 0, n, n), d.block(0, n, n, rest), d.block(n, 0, rest, n),
            d.block(n, n, rest, rest)};
}

/// ||K21||_F, the computable surrogate of the projection error.
template <typename Derived>
typename Derived::Scalar offdiag_frobenius(const Eigen::MatrixBase<Derived>& k, Index n) {
    return block(k, n).k21.norm();
}

/// Simultaneous row/column relabelling: entry (a, b) of the result is
/// K[perm[a], perm[b]].
KoopmanMatrix permute(const KoopmanMatrix& k, const std::vector<Index>& perm);
std::vector<Index> inverse_permutation(const std::vector<Index>& perm);

/// Copy with K21 = 0 and the split set to N.
KoopmanMatrix zero_bottom_left(const KoopmanMatrix& k, Index n);

/// Operator-level leakage max_{i<=N} sum_{j>N} |K^T[i, j]|.
double leakage_eps0(const Matrix& k, Index n);

/// Summary of the off-diagonal block at a split.
struct BlockReport {
    Index n = 0;
    Index rows = 0;  ///< Ntilde - N
    Index cols = 0;  ///< N
    double offdiag_frobenius = 0;
    double max_abs = 0;
    double threshold = 0;  ///< 1e-10 ||K||_F
    bool structural_zero = false;
    double eps0 = 0;
};
BlockReport block_report(const Matrix& k, Index n);

/// Population-level constants entering the finite-sample bounds.
struct FiniteSampleParams {
    double n_tilde = 0;
    double bound_d = 0;
    double lambda_min = 0;
    double gram_norm2 = 0;
    double rho = 0.05;
    double r0_min = 0;
    double r_max = 0;
    double eps0 = 0;

    /// InvalidProbability for rho outside (0, 1/2); InvalidArgument otherwise.
    void validate() const;
};

struct FiniteSampleEpsilon {
    double eps_m;
    double c_edmd;
    double m_min;
};

/// C_EDMD = 4 Ntilde^{3/2} D^2 (1 + ||G||_2 / lambda_min) / lambda_min,
/// eps_M = C_EDMD sqrt(2 log(2 Ntilde / rho) / M),
/// M_min = 32 Ntilde^2 D^4 log(2 Ntilde / rho) / lambda_min^2.
FiniteSampleEpsilon finite_sample_epsilon(const FiniteSampleParams& p, double m);

/// 2 alpha (eps0 + eps_M) / ((1 - alpha) r0_min).
double end_to_end_bound(const FiniteSampleParams& p, double alpha, double m);

/// Samples sufficient for detection at damping alpha given the auxiliary gap
/// and the population leakage ||P12||_inf; +inf when the leakage condition
/// ||P12|| < (1 - alpha) r0_min gap / (4 alpha r_max) fails or gap <= 0.
double sample_complexity(const FiniteSampleParams& p, double alpha, double gap0, double p12_inf);
/// The alpha = 1/2 PPR specialisation.
inline double ppr_sample_complexity(const FiniteSampleParams& p, double gap0, double p12_inf) {
    return sample_complexity(p, 0.5, gap0, p12_inf);
}

/// (1 - gamma)/(1 - alpha) (1 - pi_M(S_N) + 2 alpha eps_M / ((1 - alpha) r0_min)).
double finite_sample_leakage_bound(const FiniteSampleParams& p, double alpha, double gamma,
                                   double ppr_mass_in_set, double m);

/// Empirical stand-ins: G = Psi(X)^T Psi(X) / M and K in place of the
/// population Gram matrix and operator. `bound_d` is supplied by the caller.
FiniteSampleParams estimate_finite_sample_params(const Matrix& psi_x, const Matrix& k, Index n,
                                                 double bound_d, double rho);

/// Per-step prediction error on target observables. psi_future[h] holds the
/// dictionary evaluated at the true states h + 1 steps ahead; step h compares
/// them with psi_start * K^{h+1}:
///   E_h = sqrt( sum_{j in targets} mean_i (pred - true)^2 ).
std::vector<double> prediction_error(const Matrix& k_sub, const Matrix& psi_start,
                                     const std::vector<Matrix>& psi_future,
                                     const std::vector<Index>& targets);

/// Display rescale a -> -1 + 2 / (1 + exp(-a)).
Matrix heatmap_rescale(const Matrix& k);

}  // namespace koopman
