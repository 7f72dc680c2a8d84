#pragma once

// Observable dictionaries and their evaluation on snapshot data.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "koopman/numerics.hpp"

namespace koopman {

enum class ObservableTag : unsigned {
    None = 0,
    SeedCandidate = 1u << 0,
    StateCoordinate = 1u << 1,
};

constexpr ObservableTag operator|(ObservableTag a, ObservableTag b) {
    return static_cast<ObservableTag>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}
constexpr bool has_tag(ObservableTag set, ObservableTag tag) {
    return (static_cast<unsigned>(set) & static_cast<unsigned>(tag)) != 0;
}

using Evaluator = std::function<double(std::span<const double>)>;

struct Observable {
    std::string name;
    std::string group;
    ObservableTag tags = ObservableTag::None;
    Evaluator evaluator;
    // delay observables only: read `coordinate` at `level * stride` steps back
    Index coordinate = -1;
    Index level = 0;

    bool is_delay() const { return coordinate >= 0; }
};

struct Dictionary {
    std::vector<Observable> observables;
    std::string builder;
    std::map<std::string, double> parameters;
    Index input_dim = 0;
    Index delay_stride = 0;  ///< > 0 only for delay embeddings

    Index size() const { return static_cast<Index>(observables.size()); }
    const Observable& operator[](Index i) const { return observables[static_cast<std::size_t>(i)]; }
    bool is_delay() const { return delay_stride > 0; }

    std::vector<std::string> names() const;
    /// Index of the observable called `name`; InvalidArgument when absent.
    Index index_of(const std::string& name) const;
    std::vector<Index> indices_of(const std::vector<std::string>& names) const;
    std::vector<Index> tagged(ObservableTag tag) const;
    /// Sub-dictionary in the given index order.
    Dictionary subset(const std::vector<Index>& indices) const;
    /// Throws InvalidArgument on duplicate names or missing evaluators.
    void validate() const;
};

/// Monomials x1^i x2^j by total degree, then descending power of x1.
Dictionary build_monomials_2d(int max_total_degree, bool include_constant = false);

/// Laguerre polynomial L_n(t) by the three-term recurrence.
double laguerre(int n, double t);

/// Products L_i(x) L_j(y) with 1 <= i + j <= max_total_order, by total order
/// then descending i. Order 12 gives 90 observables starting 1-x, 1-y.
Dictionary build_laguerre_2d(int max_total_order);

/// The 236-term torus dictionary on (phi, psi):
///   coord     sin phi, cos phi, sin psi, cos psi
///   fourier   sin/cos(k phi), k = 2..8, then sin/cos(l psi), l = 2..8
///   cross     {sin,cos}(k phi) * {sin,cos}(l psi), k, l = 1..4
///   diagonal  sin/cos(k phi + l psi) over the 20 pairs
///             k = 1..4, l = -(4-k)..(4-k), then k = 0, l = 1..4
///   rbf       10 x 10 cell-centred grid on [-pi, pi)^2, sigma = 0.45,
///             geodesic distance
Dictionary build_ramachandran_dict();

/// Delay coordinates delay(c, k) for c < dim and k < n_delay, at index
/// k * dim + c. Level 0 holds the current state.
Dictionary build_delay_embedding(Index dim, Index n_delay, Index stride);

/// Builds a dictionary from its builder name and parameters, as recorded in
/// configs: "monomials" {degree, constant}, "laguerre" {order},
/// "ramachandran" {}, "delay" {dim, n_delay, stride}, "identity" {dim}.
Dictionary build_dictionary(const std::string& builder,
                            const std::map<std::string, double>& parameters);

/// Coordinate observables x1..xd (or x, y, z for d = 3).
Dictionary build_identity(Index dim);

/// Psi(X): entry (i, j) = psi_j(x_i). Rows are split across `threads`.
Matrix evaluate(const Dictionary& dict, const Matrix& points, unsigned threads = 1);

/// Delay-embedded data matrices from a trajectory (rows = consecutive
/// states). Row r of Psi(X) is taken at time t = r + (n_delay-1)*stride and
/// Psi(Y) at t + 1.
std::pair<Matrix, Matrix> evaluate_delay(const Dictionary& dict, const Matrix& trajectory);

/// Largest |psi_i| over a grid of `per_axis`^d points covering the box.
double sup_bound_on_grid(const Dictionary& dict, const Vector& lower, const Vector& upper,
                         Index per_axis = 201);

}  // namespace koopman
