#pragma once

// Dictionary selection end to end, the ordering baselines and the named
// experiments.

#include <complex>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/io.hpp"
#include "koopman/ranking.hpp"
#include "koopman/systems.hpp"

namespace koopman {

struct SelectionResult {
    std::vector<std::string> sub_dictionary;  ///< names, ascending original index
    std::vector<Index> indices;               ///< original indices, ascending
    KoopmanMatrix k_sub;                      ///< EDMD recomputed on the selected columns
    PprResult ppr;
    GapReport gap_report;  ///< chain permuted so the selection comes first
    bool certificate_available = false;
    std::vector<Index> forced_includes;
    std::vector<Index> substituted;  ///< forced indices that were not ranked in the top N
    std::vector<Index> displaced;    ///< ranked picks they replaced
};

/// Selects N observables: P = R(|K^T|), PPR from the named seeds (standard
/// PR when there are none), top-N scores with forced includes replacing the
/// lowest-ranked other picks, then EDMD on the selected columns.
SelectionResult select(const KoopmanMatrix& k_full, const Matrix& psi_x, const Matrix& psi_y,
                       Index n, double alpha, const std::vector<std::string>& seed_names,
                       const std::vector<Index>& forced_includes = {},
                       RankPolicy policy = RankPolicy::Strict);

enum class OrderingMethod { Ppr, Pr, Random, Incremental };
std::string to_string(OrderingMethod m);
OrderingMethod ordering_from_string(const std::string& name);

struct OrderingContext {
    const KoopmanMatrix* k = nullptr;  ///< needed by ppr and pr
    Index size = 0;                    ///< dictionary size when k is absent
    double alpha = 0.85;
    std::vector<Index> seeds;   ///< ppr seeds; empty falls back to pr
    std::vector<Index> forced;  ///< pinned to the front, in this order
    std::uint64_t seed = 0;     ///< random permutation seed
};

/// Full permutation of the dictionary, best first.
std::vector<Index> ordering(OrderingMethod method, const OrderingContext& ctx);

struct PseudoEigenfunction {
    std::complex<double> eigenvalue;
    double omega = 0;  ///< Im(log lambda) / dt
    Vector values;     ///< real part of Psi(x) v along the samples
};

/// Eigenpair of K_sub whose continuous frequency is closest to target_omega,
/// with the eigenfunction Psi v evaluated on the rows of psi.
PseudoEigenfunction pseudo_eigenfunction(const Matrix& k_sub, const Matrix& psi, double target_omega,
                                         double dt);

struct ExperimentConfig {
    std::string name;
    std::string kind = "sweep";  ///< "sweep" or "window"

    SystemSpec system;
    std::string dictionary = "monomials";
    std::map<std::string, double> dictionary_params;

    std::string sampling = "iid";  ///< "iid" or "trajectory"
    Box box = Box::square(-2, 2);
    Index m = 100;       ///< iid: training pairs; trajectory: all pairs after burn-in
    Index m_test = 0;    ///< iid test pairs
    double test_fraction = 0;  ///< trajectory: held-out tail fraction
    Vector x0;
    double x0_jitter = 0;  ///< per-replicate normal perturbation of x0
    Index burn_in = 0;

    Index replicates = 1;
    std::uint64_t seed = 0;
    double alpha = 0.85;
    std::vector<std::string> seed_observables;
    std::vector<std::string> forced_observables;
    std::vector<std::string> target_observables;  ///< defaults to forced
    std::vector<Index> sizes;
    Index horizon = 1;
    std::vector<OrderingMethod> methods = {OrderingMethod::Ppr};
    RankPolicy rank_policy = RankPolicy::Strict;
    std::optional<Index> block_split;
    std::optional<double> target_omega;
    bool write_matrices = true;

    // window experiments
    std::string example = "a";
    double beta = 0.5;
    std::vector<double> eps_grid;

    /// InvalidArgument on inconsistent settings.
    void validate() const;
};

ExperimentConfig config_from_json(const io::json& j);
io::json to_json(const ExperimentConfig& c);

/// Preset name (looked up as <presets_dir>/<name>.json) or a path to a file.
ExperimentConfig load_preset(const std::string& name_or_path, const std::filesystem::path& presets_dir);

struct SpectralHit {
    Index n = 0;
    std::complex<double> eigenvalue;
    double omega = 0;
};

struct ReplicateResult {
    Index replicate = 0;
    std::uint64_t seed = 0;
    /// errors[method][size][step]; NaN where a size exceeds the dictionary
    std::map<OrderingMethod, std::vector<std::vector<double>>> errors;
    std::map<OrderingMethod, std::vector<Index>> orders;
    PprResult ppr;
    std::optional<BlockReport> block;
    std::optional<BlockReport> block_ppr_ordered;
    std::vector<SpectralHit> spectral;
    double residual_full = 0;
};

struct CurvePoint {
    OrderingMethod method;
    Index n = 0;
    Index step = 0;
    double mean = 0;
    double sd = 0;  ///< unbiased; 0 for a single replicate
    Index count = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    Dictionary dictionary;
    std::vector<ReplicateResult> replicates;
    std::vector<CurvePoint> curves;
    std::vector<WindowPoint> window;
    std::vector<std::filesystem::path> files;  ///< everything written
};

/// Runs every replicate and ordering method. Outputs go under
/// <out>/<name>/<replicate>/ when `out` is given.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& out = std::nullopt,
                                unsigned threads = 1);

}  // namespace koopman
