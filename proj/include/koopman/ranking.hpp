#pragma once

// Markov-chain view of an EDMD matrix: row normalization, PageRank scores,
// detection gaps and the perturbation bounds that certify them.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "koopman/edmd.hpp"
#include "koopman/numerics.hpp"
#include "koopman/rng.hpp"

namespace koopman {

/// Row-stochastic matrix over the kept indices of a source matrix A, with
/// P[i, j] = |A[i, j]| / r_i. Zero rows of A (and the matching columns) are
/// dropped.
struct StochasticMatrix {
    Matrix p;
    std::vector<Index> kept;     ///< original index of each row of p
    std::vector<Index> dropped;  ///< original indices removed
    Vector source_r;             ///< absolute row sums r_i of A, original indexing
    double r_max = 0;
    Index original_size = 0;
    std::vector<std::string> names;  ///< kept observables, when known

    Index size() const { return p.rows(); }
    /// Position of an original index among the kept rows, or -1.
    Index local_index(Index original) const;
    /// Number of kept indices below the original split N.
    Index local_split(Index n_original) const;
};

/// R(|A|) with zero-row dropping; EmptyChain if every row is zero.
StochasticMatrix row_normalize(const Matrix& a, std::vector<std::string> names = {});

/// P = R(|K^T|): P[i, j] = |K[j, i]| / sum_k |K[k, i]|.
StochasticMatrix transition_matrix(const KoopmanMatrix& k);
StochasticMatrix transition_matrix(const Matrix& k);

/// Wraps a matrix that is already row-stochastic (|row sum - 1| <= 1e-12).
StochasticMatrix stochastic_from(const Matrix& p);

/// P0: zero P12, renormalize the top rows, keep the bottom rows. `n` counts
/// kept indices. DegenerateRow if a top row lives entirely in block 2.
StochasticMatrix renormalized_reference(const StochasticMatrix& p, Index n);
Matrix renormalized_reference(const Matrix& p, Index n);

/// Uniform preference over `seeds`, or over all n indices when empty.
RowVector preference(Index n, const std::vector<Index>& seeds);

/// (1 - alpha) s (I - alpha P)^{-1} with s = preference(seeds).
RowVector ppr_vector(const Matrix& p, double alpha, const std::vector<Index>& seeds = {});

struct PprResult {
    RowVector scores;             ///< original indexing, 0 on dropped indices
    double alpha = 0;
    std::vector<Index> seed_set;  ///< original indices; empty = standard PR
    std::vector<Index> ranking;   ///< score descending, ties by index; dropped last
    std::vector<Index> dropped;   ///< original indices absent from the chain
};

/// PageRank (no seeds) or multi-seed PPR on the chain. Seeds are original
/// indices. InvalidSeedSet for an explicit empty set, out-of-range seeds or
/// seeds that were dropped from the chain.
PprResult pagerank(const StochasticMatrix& p, double alpha,
                   const std::optional<std::vector<Index>>& seeds = std::nullopt);

/// Indices sorted by score descending, ties by ascending index.
std::vector<Index> rank_order(const RowVector& scores);

struct GapValues {
    double delta;      ///< block_min - tail_max
    double block_min;  ///< min over i < N
    double tail_max;   ///< max over j >= N
};
GapValues detection_gaps(const RowVector& scores, Index n);
/// Split in original indices; dropped block members are ignored in the
/// minimum and count as 0 in the tail.
GapValues detection_gaps(const PprResult& pi, Index n);

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Gaps, thresholds and flags of the detection theory at one (N, alpha, S).
struct GapReport {
    Index n = 0;
    Index n_tilde = 0;
    double alpha = 0;
    std::vector<Index> seeds;

    double delta_pr = kNaN;    ///< actual gap on P
    double delta_ppr = kNaN;
    double delta0_pr = kNaN;   ///< closed-form gap on P0
    double delta0_ppr = kNaN;
    double mixing_lower_bound = kNaN;  ///< mixing relaxation of delta0_pr

    double p12_inf = 0;
    double eta = 0;
    double q_min = kNaN;
    Vector q;
    Vector s_eff;

    double threshold_pr = kNaN;             ///< PR condition RHS (mixing form)
    double threshold_ppr = kNaN;            ///< PPR condition RHS
    double abstract_threshold_pr = kNaN;    ///< (1-alpha)/(4 alpha) delta0_pr
    double abstract_threshold_ppr = kNaN;   ///< (1-alpha)/(4 alpha) delta0_ppr
    double perturbation_bound = kNaN;       ///< 2 alpha ||P12|| / (1 - alpha)

    bool mixing_ok = false;
    bool reachability_ok = false;
    bool seeds_in_block = false;
    bool pr_condition = false;           ///< ||P12|| < threshold_pr
    bool ppr_condition = false;          ///< reachability and ||P12|| < threshold_ppr
    bool pr_abstract_condition = false;  ///< delta0_pr > 0 and ||P12|| < abstract_threshold_pr
};

/// Closed-form auxiliary gaps on a block lower-triangular P0 (top-right block
/// zero). Seeds are local indices; PPR fields stay NaN without seeds.
GapReport auxiliary_gaps(const Matrix& p0, Index n, double alpha,
                         const std::vector<Index>& seeds = {});

/// Sufficient detection conditions for P together with the actual gaps on P.
GapReport detection_certificate(const Matrix& p, Index n, double alpha,
                                const std::vector<Index>& seeds = {});

/// The two three-state chains with N = 2 and leakage eps = ||P12||_inf.
///   A: well-mixed block, PPR seed {0};  B: starved node, PPR seed {1}.
struct ExampleSpec {
    enum class Kind { A, B };
    Kind kind = Kind::A;
    double beta = 0.5;

    static ExampleSpec a(double beta = 0.5) { return {Kind::A, beta}; }
    static ExampleSpec b(double beta = 0.5) { return {Kind::B, beta}; }

    Matrix p(double eps) const;
    Index n() const { return 2; }
    std::vector<Index> ppr_seeds() const;
    std::string name() const { return kind == Kind::A ? "example-a" : "example-b"; }

    /// Closed-form windows; NaN where no closed form is known for this beta.
    double alpha_star_pr(double eps) const;
    double alpha_star_ppr(double eps) const;
    /// Closed-form auxiliary gaps.
    double delta0_pr(double alpha) const;
    double delta0_ppr(double alpha) const;
};

struct WindowPoint {
    double epsilon = 0;
    double alpha_star_pr = 0;
    double alpha_star_ppr = 0;
    double alpha_star_pr_closed = kNaN;
    double alpha_star_ppr_closed = kNaN;
    double alpha_star_pr_mixing = 0;  ///< window of the mixing-form PR condition
};

struct WindowOptions {
    Index grid = 400;        ///< alpha scan points before bisection
    double tolerance = 1e-12;
    unsigned threads = 1;
};

/// alpha*(eps) = sup{alpha : eps < (1-alpha)/(4 alpha) delta0(alpha)} for PR
/// and PPR, found by an alpha scan refined by bisection.
std::vector<WindowPoint> detection_window(const ExampleSpec& spec,
                                          const std::vector<double>& eps_grid,
                                          const WindowOptions& options = {});
/// Same on a general chain: P0 is taken from `p` and each eps acts as a
/// hypothetical leakage level.
std::vector<WindowPoint> detection_window(const Matrix& p, Index n, const std::vector<Index>& seeds,
                                          const std::vector<double>& eps_grid,
                                          const WindowOptions& options = {});

/// Largest tolerable leakage: lim_{alpha -> 0} (1-alpha) delta0(alpha) / (4 alpha).
struct WindowClosure {
    double pr;
    double ppr;
};
WindowClosure window_closure(const Matrix& p, Index n, const std::vector<Index>& seeds);

/// One evaluated inequality lhs <= rhs.
struct BoundCheck {
    std::string lemma;
    Index instance = 0;
    double lhs = 0;
    double rhs = 0;
    /// (rhs - lhs) / max(1, |rhs|)
    double margin() const;
};

struct BlockInstance {
    Matrix k;  ///< signed EDMD-like matrix
    Index n = 1;
    double alpha = 0.5;
};

/// Random Ntilde x Ntilde signed matrix (Ntilde in [3, 10]) with a K21 block
/// scaled down by a random leakage factor, random sparsity and scale.
BlockInstance random_block_instance(Rng& rng);

struct PerturbationReport {
    std::vector<BoundCheck> worst;  ///< smallest margin per lemma
    Index instances = 0;
    Index evaluations = 0;
    std::optional<BoundCheck> first_violation;  ///< margin < -tolerance
    double tolerance = 1e-10;
    double max_equality_error = 0;  ///< | ||P - P0|| - 2 ||P12|| |

    bool ok() const { return !first_violation && max_equality_error <= 1e-12; }
};

/// Both sides of the coupling (k <= k_max), row-normalization, resolvent,
/// shared-perturbation and leakage inequalities on each instance.
PerturbationReport perturbation_suite(const std::vector<BlockInstance>& instances, int k_max = 8,
                                      std::uint64_t seed = 0, unsigned threads = 1);

struct LeakageReport {
    double lambda = 0;        ///< truncated series
    double tail = 0;          ///< bound on the omitted terms
    double bound = 0;         ///< (1-gamma)/(1-alpha) (1 - pi_s(S_N))
    double gamma = 0;
    double r_max = 0;
    double ppr_mass_in_set = 0;
    int terms = 0;
    bool holds = false;       ///< lambda + tail <= bound + 1e-10
};

/// Discounted multi-step leakage of |K^T| from preference s (original
/// indexing, supported on `set`) and its PPR bound. PreconditionUnsatisfiable
/// when alpha >= r_max or the chain dropped rows. k_max <= 0 picks the
/// smallest k with alpha^k < 1e-13.
LeakageReport leakage(const Matrix& k, const std::vector<Index>& set, const RowVector& s,
                      double alpha, int k_max = 0);

/// Population-side inputs of the finite-sample corollaries.
struct PopulationQuantities {
    double p12_inf = 0;
    double delta0_ppr_half = 0;  ///< PPR auxiliary gap at alpha = 1/2
    double delta0_pr = 0;        ///< PR auxiliary gap at the working alpha
    double gamma = 0;
    double ppr_mass_in_set = 1;  ///< pi_{s,M}(S_N)
};

struct EndToEndReport {
    FiniteSampleEpsilon eps;
    double end_to_end = 0;
    double m_ppr = 0;  ///< +inf when not satisfiable
    double m_pr = 0;
    bool ppr_satisfiable = false;
    bool pr_satisfiable = false;
    double finite_sample_leakage = 0;
};

EndToEndReport end_to_end_report(const FiniteSampleParams& params, const PopulationQuantities& pop,
                                 double alpha, double m);

}  // namespace koopman
