#include "koopman/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "koopman/parallel.hpp"

namespace koopman {

namespace {

void check_alpha_open(double alpha) {
    if (!(alpha > 0 && alpha < 1)) {
        throw InvalidArgument("alpha = " + std::to_string(alpha) + " must lie in (0,1)");
    }
}

// Row normalization of |a| without dropping; every row must be nonzero.
Matrix normalize_rows(const Matrix& a) {
    const Vector r = a.cwiseAbs().rowwise().sum();
    if (r.size() > 0 && !(r.minCoeff() > 0)) throw InvalidArgument("normalize_rows: zero row");
    return r.cwiseInverse().asDiagonal() * a.cwiseAbs();
}

std::vector<bool> reachable_from(const Matrix& p11, const std::vector<Index>& seeds) {
    const Index n = p11.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::deque<Index> queue;
    for (Index v : seeds) {
        if (!seen[static_cast<std::size_t>(v)]) {
            seen[static_cast<std::size_t>(v)] = true;
            queue.push_back(v);
        }
    }
    while (!queue.empty()) {
        const Index v = queue.front();
        queue.pop_front();
        for (Index w = 0; w < n; ++w) {
            if (p11(v, w) > 0 && !seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                queue.push_back(w);
            }
        }
    }
    return seen;
}

double margin_of(double lhs, double rhs) { return (rhs - lhs) / std::max(1.0, std::abs(rhs)); }

}  // namespace

Index StochasticMatrix::local_index(Index original) const {
    const auto it = std::lower_bound(kept.begin(), kept.end(), original);
    if (it == kept.end() || *it != original) return -1;
    return static_cast<Index>(it - kept.begin());
}

Index StochasticMatrix::local_split(Index n_original) const {
    return static_cast<Index>(std::lower_bound(kept.begin(), kept.end(), n_original) -
                              kept.begin());
}

StochasticMatrix row_normalize(const Matrix& a, std::vector<std::string> names) {
    if (a.rows() != a.cols()) throw InvalidArgument("row_normalize: matrix is not square");
    if (!a.allFinite()) throw InvalidArgument("row_normalize: non-finite entries");
    if (!names.empty() && static_cast<Index>(names.size()) != a.rows()) {
        throw InvalidArgument("row_normalize: name list does not match the matrix");
    }
    const Index n = a.rows();
    const Matrix abs_a = a.cwiseAbs();
    StochasticMatrix out;
    out.original_size = n;
    out.source_r = abs_a.rowwise().sum();
    out.r_max = n > 0 ? out.source_r.maxCoeff() : 0.0;

    // dropping a row also drops its column, which can empty further rows
    std::vector<bool> alive(static_cast<std::size_t>(n), true);
    for (bool changed = true; changed;) {
        changed = false;
        for (Index i = 0; i < n; ++i) {
            if (!alive[static_cast<std::size_t>(i)]) continue;
            double r = 0;
            for (Index j = 0; j < n; ++j) {
                if (alive[static_cast<std::size_t>(j)]) r += abs_a(i, j);
            }
            if (!(r > 0)) {
                alive[static_cast<std::size_t>(i)] = false;
                changed = true;
            }
        }
    }
    for (Index i = 0; i < n; ++i) {
        (alive[static_cast<std::size_t>(i)] ? out.kept : out.dropped).push_back(i);
    }
    if (out.kept.empty()) throw EmptyChain("every row of |K^T| is zero");
    const Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>> idx(
        out.kept.data(), static_cast<Index>(out.kept.size()));
    out.p = normalize_rows(abs_a(idx, idx));
    if (!names.empty()) {
        for (Index i : out.kept) out.names.push_back(names[static_cast<std::size_t>(i)]);
    }
    return out;
}

StochasticMatrix transition_matrix(const KoopmanMatrix& k) {
    if (k.k.rows() != k.k.cols()) throw InvalidArgument("transition_matrix: K is not square");
    return row_normalize(k.k.transpose(), k.names);
}

StochasticMatrix transition_matrix(const Matrix& k) {
    if (k.rows() != k.cols()) throw InvalidArgument("transition_matrix: K is not square");
    return row_normalize(k.transpose());
}

StochasticMatrix stochastic_from(const Matrix& p) {
    if (p.rows() != p.cols() || p.rows() == 0) {
        throw InvalidArgument("stochastic_from: matrix must be square and nonempty");
    }
    if (!p.allFinite() || p.minCoeff() < 0) {
        throw InvalidArgument("stochastic_from: entries must be finite and nonnegative");
    }
    const Vector sums = p.rowwise().sum();
    if ((sums.array() - 1.0).abs().maxCoeff() > 1e-12) {
        throw InvalidArgument("stochastic_from: rows do not sum to 1");
    }
    StochasticMatrix out;
    out.p = p;
    out.original_size = p.rows();
    out.kept.resize(static_cast<std::size_t>(p.rows()));
    std::iota(out.kept.begin(), out.kept.end(), Index{0});
    out.source_r = sums;
    out.r_max = sums.maxCoeff();
    return out;
}

Matrix renormalized_reference(const Matrix& p, Index n) {
    if (p.rows() != p.cols()) throw InvalidArgument("renormalized_reference: not square");
    check_split(n, p.rows());
    Matrix p0 = p;
    for (Index i = 0; i < n; ++i) {
        const double s = p.row(i).head(n).sum();
        if (!(s > 0)) {
            throw DegenerateRow("row " + std::to_string(i) +
                                " has all of its mass outside the candidate block");
        }
        p0.row(i).head(n) = p.row(i).head(n) / s;
        p0.row(i).tail(p.rows() - n).setZero();
    }
    return p0;
}

StochasticMatrix renormalized_reference(const StochasticMatrix& p, Index n) {
    StochasticMatrix out = p;
    try {
        out.p = renormalized_reference(p.p, n);
    } catch (const DegenerateRow& e) {
        std::string who;
        for (Index i = 0; i < n; ++i) {
            if (!(p.p.row(i).head(n).sum() > 0)) {
                who = p.names.empty() ? "index " + std::to_string(p.kept[static_cast<std::size_t>(i)])
                                      : "'" + p.names[static_cast<std::size_t>(i)] + "'";
                break;
            }
        }
        throw DegenerateRow("observable " + who +
                            " sends all of its mass outside the candidate block");
    }
    return out;
}

RowVector preference(Index n, const std::vector<Index>& seeds) {
    RowVector s = RowVector::Zero(n);
    if (seeds.empty()) {
        s.setConstant(1.0 / static_cast<double>(n));
        return s;
    }
    for (Index v : seeds) {
        if (v < 0 || v >= n) throw InvalidSeedSet("seed " + std::to_string(v) + " out of range");
        s(v) = 1.0;
    }
    return s / s.sum();
}

RowVector ppr_vector(const Matrix& p, double alpha, const std::vector<Index>& seeds) {
    return solve_row_resolvent(preference(p.rows(), seeds), p, alpha);
}

std::vector<Index> rank_order(const RowVector& scores) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores(a) > scores(b); });
    return order;
}

PprResult pagerank(const StochasticMatrix& p, double alpha,
                   const std::optional<std::vector<Index>>& seeds) {
    std::vector<Index> local;
    PprResult out;
    out.alpha = alpha;
    if (seeds) {
        if (seeds->empty()) throw InvalidSeedSet("explicit seed set is empty");
        for (Index v : *seeds) {
            if (v < 0 || v >= p.original_size) {
                throw InvalidSeedSet("seed " + std::to_string(v) + " out of range");
            }
            const Index l = p.local_index(v);
            if (l < 0) {
                throw InvalidSeedSet("seed " + std::to_string(v) +
                                     " was dropped from the chain (zero row of |K^T|)");
            }
            local.push_back(l);
        }
        out.seed_set = *seeds;
    }
    const RowVector kept_scores = ppr_vector(p.p, alpha, local);
    out.scores = RowVector::Zero(p.original_size);
    for (std::size_t i = 0; i < p.kept.size(); ++i) {
        out.scores(p.kept[i]) = kept_scores(static_cast<Index>(i));
    }
    for (Index l : rank_order(kept_scores)) out.ranking.push_back(p.kept[static_cast<std::size_t>(l)]);
    out.ranking.insert(out.ranking.end(), p.dropped.begin(), p.dropped.end());
    out.dropped = p.dropped;
    return out;
}

GapValues detection_gaps(const RowVector& scores, Index n) {
    check_split(n, scores.size());
    const double block_min = scores.head(n).minCoeff();
    const double tail_max = scores.tail(scores.size() - n).maxCoeff();
    return {block_min - tail_max, block_min, tail_max};
}

GapValues detection_gaps(const PprResult& pi, Index n) {
    const Index total = pi.scores.size();
    check_split(n, total);
    double block_min = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
        if (std::find(pi.dropped.begin(), pi.dropped.end(), i) == pi.dropped.end()) {
            block_min = std::min(block_min, pi.scores(i));
        }
    }
    const double tail_max = pi.scores.tail(total - n).maxCoeff();
    return {block_min - tail_max, block_min, tail_max};
}

GapReport auxiliary_gaps(const Matrix& p0, Index n, double alpha, const std::vector<Index>& seeds) {
    check_alpha_open(alpha);
    if (p0.rows() != p0.cols()) throw InvalidArgument("auxiliary_gaps: P0 is not square");
    check_split(n, p0.rows());
    const Index nt = p0.rows();
    const Index rest = nt - n;
    if (p0.topRightCorner(n, rest).cwiseAbs().maxCoeff() > 0) {
        throw InvalidArgument("auxiliary_gaps: P0 must have a zero top-right block");
    }
    const Matrix p11 = p0.topLeftCorner(n, n);
    const Matrix p21 = p0.bottomLeftCorner(rest, n);
    const Matrix p22 = p0.bottomRightCorner(rest, rest);
    const Matrix r11 = resolvent(p11, alpha);
    const Matrix r22 = resolvent(p22, alpha);

    GapReport g;
    g.n = n;
    g.n_tilde = nt;
    g.alpha = alpha;
    g.seeds = seeds;
    const double a = alpha;
    const double ntd = static_cast<double>(nt);
    const double nd = static_cast<double>(n);
    const double restd = static_cast<double>(rest);

    g.s_eff = (a * (r22 * p21).colwise().sum()).transpose().array() + 1.0;
    const RowVector block_mass = g.s_eff.transpose() * r11;
    const RowVector tail_mass = r22.colwise().sum();
    g.delta0_pr = (1 - a) / ntd * (block_mass.minCoeff() - tail_mass.maxCoeff());

    g.q = ((1 - a) / nd) * r11.colwise().sum().transpose();
    g.q_min = g.q.minCoeff();
    g.eta = 1.0 - inf_norm(p22);
    const double coupling = restd * (1 - a) / (nd * (1 - a + a * g.eta));
    g.mixing_ok = g.q_min > coupling;
    g.mixing_lower_bound = nd / ntd * g.q_min - restd * (1 - a) / (ntd * (1 - a + a * g.eta));
    g.threshold_pr = (1 - a) * nd / (4 * a * ntd) * (g.q_min - coupling);
    g.abstract_threshold_pr = (1 - a) / (4 * a) * g.delta0_pr;

    if (!seeds.empty()) {
        for (Index v : seeds) {
            if (v < 0 || v >= nt) throw InvalidSeedSet("seed " + std::to_string(v) + " out of range");
        }
        g.seeds_in_block =
            std::all_of(seeds.begin(), seeds.end(), [n](Index v) { return v < n; });
        if (g.seeds_in_block) {
            RowVector seed_mass = RowVector::Zero(n);
            for (Index v : seeds) seed_mass += r11.row(v);
            const double sd = static_cast<double>(seeds.size());
            g.delta0_ppr = (1 - a) / sd * seed_mass.minCoeff();
            g.threshold_ppr = (1 - a) * (1 - a) / (4 * a * sd) * seed_mass.minCoeff();
            const auto seen = reachable_from(p11, seeds);
            g.reachability_ok = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
        } else {
            g.delta0_ppr = detection_gaps(ppr_vector(p0, alpha, seeds), n).delta;
        }
        g.abstract_threshold_ppr = (1 - a) / (4 * a) * g.delta0_ppr;
    }
    return g;
}

GapReport detection_certificate(const Matrix& p, Index n, double alpha,
                                const std::vector<Index>& seeds) {
    const Matrix p0 = renormalized_reference(p, n);
    GapReport g = auxiliary_gaps(p0, n, alpha, seeds);
    g.p12_inf = inf_norm(p.topRightCorner(n, p.rows() - n));
    g.perturbation_bound = 2 * alpha * g.p12_inf / (1 - alpha);
    g.delta_pr = detection_gaps(ppr_vector(p, alpha), n).delta;
    if (!seeds.empty()) g.delta_ppr = detection_gaps(ppr_vector(p, alpha, seeds), n).delta;
    g.pr_condition = g.mixing_ok && g.p12_inf < g.threshold_pr;
    g.pr_abstract_condition = g.delta0_pr > 0 && g.p12_inf < g.abstract_threshold_pr;
    g.ppr_condition = g.seeds_in_block && g.reachability_ok && g.p12_inf < g.threshold_ppr;
    return g;
}

Matrix ExampleSpec::p(double eps) const {
    if (!(eps >= 0 && eps < 1)) throw InvalidArgument("example: eps must lie in [0,1)");
    if (!(beta > 0 && beta <= 0.5)) throw InvalidArgument("example: beta must lie in (0,1/2]");
    Matrix m(3, 3);
    if (kind == Kind::A) {
        m << 0, 1 - eps, eps, 1 - eps, 0, eps, beta, beta, 1 - 2 * beta;
    } else {
        m << 1 - eps, 0, eps, 1, 0, 0, beta, beta, 1 - 2 * beta;
    }
    return m;
}

std::vector<Index> ExampleSpec::ppr_seeds() const {
    return kind == Kind::A ? std::vector<Index>{0} : std::vector<Index>{1};
}

double ExampleSpec::alpha_star_pr(double eps) const {
    if (kind == Kind::A) {
        const double num = beta - 4 * eps;
        if (num <= 0) return 0.0;
        return num / (num + 8 * eps * beta);
    }
    if (beta != 0.5) return kNaN;
    return std::max(0.0, 1.0 - std::sqrt(24 * eps));
}

double ExampleSpec::alpha_star_ppr(double eps) const {
    if (kind == Kind::A) return std::max(0.0, (1 - 4 * eps) / (1 + 4 * eps));
    if (eps <= 0.125) return (1 + 2 * eps) - 2 * std::sqrt(eps * (1 + eps));
    return std::max(0.0, 1 - 4 * eps);
}

double ExampleSpec::delta0_pr(double alpha) const {
    const double denom = 1 - alpha + 2 * alpha * beta;
    if (kind == Kind::A) return alpha * beta / denom;
    return alpha * (1 - alpha) * (3 * beta - 1) / (3 * denom);
}

double ExampleSpec::delta0_ppr(double alpha) const {
    if (kind == Kind::A) return alpha / (1 + alpha);
    return std::min(alpha, 1 - alpha);
}

namespace {

template <typename Pred>
double sup_alpha(Pred&& holds, const WindowOptions& opt) {
    const Index grid = std::max<Index>(opt.grid, 2);
    double lo = -1;
    double hi = 1;
    for (Index k = grid - 1; k >= 1; --k) {
        const double a = static_cast<double>(k) / static_cast<double>(grid);
        if (holds(a)) {
            lo = a;
            break;
        }
        hi = a;
    }
    if (lo < 0) {
        // the window may still open below the first grid point
        const double tiny = 1e-12;
        if (!holds(tiny)) return 0.0;
        lo = tiny;
    }
    while (hi - lo > opt.tolerance) {
        const double mid = 0.5 * (lo + hi);
        (holds(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

WindowPoint window_point(const Matrix& p0, Index n, const std::vector<Index>& seeds, double eps,
                         const WindowOptions& opt) {
    WindowPoint w;
    w.epsilon = eps;
    w.alpha_star_pr = sup_alpha(
        [&](double a) {
            const auto g = auxiliary_gaps(p0, n, a);
            return g.delta0_pr > 0 && eps < g.abstract_threshold_pr;
        },
        opt);
    w.alpha_star_pr_mixing = sup_alpha(
        [&](double a) {
            const auto g = auxiliary_gaps(p0, n, a);
            return g.mixing_ok && eps < g.threshold_pr;
        },
        opt);
    if (!seeds.empty()) {
        w.alpha_star_ppr = sup_alpha(
            [&](double a) {
                const auto g = auxiliary_gaps(p0, n, a, seeds);
                return g.seeds_in_block && g.reachability_ok && eps < g.threshold_ppr;
            },
            opt);
    } else {
        w.alpha_star_ppr = kNaN;
    }
    return w;
}

}  // namespace

std::vector<WindowPoint> detection_window(const ExampleSpec& spec,
                                          const std::vector<double>& eps_grid,
                                          const WindowOptions& options) {
    if (eps_grid.empty()) throw InvalidArgument("detection_window: empty epsilon grid");
    std::vector<WindowPoint> out(eps_grid.size());
    parallel_for(eps_grid.size(), options.threads, [&](std::size_t i) {
        const double eps = eps_grid[i];
        const Matrix p = spec.p(eps);
        const Matrix p0 = renormalized_reference(p, spec.n());
        const double leak = inf_norm(p.topRightCorner(spec.n(), 1));
        out[i] = window_point(p0, spec.n(), spec.ppr_seeds(), leak, options);
        out[i].epsilon = eps;
        out[i].alpha_star_pr_closed = spec.alpha_star_pr(eps);
        out[i].alpha_star_ppr_closed = spec.alpha_star_ppr(eps);
    });
    return out;
}

std::vector<WindowPoint> detection_window(const Matrix& p, Index n, const std::vector<Index>& seeds,
                                          const std::vector<double>& eps_grid,
                                          const WindowOptions& options) {
    if (eps_grid.empty()) throw InvalidArgument("detection_window: empty epsilon grid");
    const Matrix p0 = renormalized_reference(p, n);
    std::vector<WindowPoint> out(eps_grid.size());
    parallel_for(eps_grid.size(), options.threads, [&](std::size_t i) {
        out[i] = window_point(p0, n, seeds, eps_grid[i], options);
    });
    return out;
}

WindowClosure window_closure(const Matrix& p, Index n, const std::vector<Index>& seeds) {
    const Matrix p0 = renormalized_reference(p, n);
    WindowClosure c{0.0, seeds.empty() ? kNaN : 0.0};
    std::vector<double> alphas = {1e-9};
    for (int k = 1; k < 1000; ++k) alphas.push_back(k / 1000.0);
    for (double a : alphas) {
        const auto g = auxiliary_gaps(p0, n, a, seeds);
        if (g.delta0_pr > 0) c.pr = std::max(c.pr, g.abstract_threshold_pr);
        if (!seeds.empty() && g.seeds_in_block && g.reachability_ok) {
            c.ppr = std::max(c.ppr, g.threshold_ppr);
        }
    }
    return c;
}

double BoundCheck::margin() const { return margin_of(lhs, rhs); }

BlockInstance random_block_instance(Rng& rng) {
    static const double kAlphas[] = {0.3, 0.5, 0.85};
    BlockInstance inst;
    const auto nt = static_cast<Index>(3 + rng.below(8));
    inst.n = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(nt - 1)));
    inst.alpha = kAlphas[rng.below(3)];
    const double leak = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 0.5);
    const double density = rng.uniform(0.4, 1.0);
    const double scale = std::exp(rng.uniform(std::log(0.3), std::log(3.0)));
    inst.k.resize(nt, nt);
    for (Index i = 0; i < nt; ++i) {
        for (Index j = 0; j < nt; ++j) {
            double v = rng.normal();
            if (i != j && rng.uniform() > density) v = 0.0;
            if (i >= inst.n && j < inst.n) v *= leak;  // K21 feeds P12
            inst.k(i, j) = scale * v;
        }
    }
    // a nonzero diagonal keeps every row of |K^T| and of P11 alive
    for (Index i = 0; i < nt; ++i) {
        if (inst.k(i, i) == 0.0) inst.k(i, i) = scale;
    }
    return inst;
}

PerturbationReport perturbation_suite(const std::vector<BlockInstance>& instances, int k_max,
                                      std::uint64_t seed, unsigned threads) {
    const std::vector<std::string> lemmas = {"coupling-triangle", "coupling-normalized",
                                             "row-normalization", "resolvent",
                                             "shared-perturbation", "leakage"};
    struct Local {
        std::vector<BoundCheck> checks;
        Index evaluations = 0;
        double equality_error = 0;
    };
    std::vector<Local> results(instances.size());

    parallel_for(instances.size(), threads, [&](std::size_t idx) {
        const BlockInstance& inst = instances[idx];
        Rng rng(seed, 1000 + idx);
        Local local;
        const auto id = static_cast<Index>(idx);
        auto keep_worst = [&](const std::string& lemma, double lhs, double rhs) {
            ++local.evaluations;
            BoundCheck c{lemma, id, lhs, rhs};
            for (auto& w : local.checks) {
                if (w.lemma == lemma) {
                    if (c.margin() < w.margin()) w = c;
                    return;
                }
            }
            local.checks.push_back(c);
        };

        const Matrix a = inst.k.transpose();
        const Index nt = a.rows();
        const Matrix abs_a = a.cwiseAbs();
        const Matrix hat = normalize_rows(a);
        const double r_max = inf_norm(a);

        // coupling: |A^k| <= |A|^k <= r_max^k hat(A)^k, entrywise
        Matrix ak = Matrix::Identity(nt, nt);
        Matrix absk = ak;
        Matrix hatk = ak;
        double rk = 1.0;
        for (int k = 0; k <= k_max; ++k) {
            if (k > 0) {
                ak = ak * a;
                absk = absk * abs_a;
                hatk = hatk * hat;
                rk *= r_max;
            }
            for (Index i = 0; i < nt; ++i) {
                for (Index j = 0; j < nt; ++j) {
                    keep_worst("coupling-triangle", std::abs(ak(i, j)), absk(i, j));
                    keep_worst("coupling-normalized", absk(i, j), rk * hatk(i, j));
                }
            }
        }

        // row normalization and resolvent stability under a random perturbation
        const double delta = std::pow(10.0, rng.uniform(-3.0, 0.0)) * r_max / static_cast<double>(nt);
        Matrix b = a;
        for (Index i = 0; i < nt; ++i) {
            for (Index j = 0; j < nt; ++j) b(i, j) += delta * rng.normal();
        }
        const Matrix rb = normalize_rows(b);
        const double r_min = min_abs_row_sum(a);
        keep_worst("row-normalization", inf_norm(hat - rb), 2.0 / r_min * inf_norm(a - b));

        RowVector s(nt);
        for (Index i = 0; i < nt; ++i) s(i) = rng.uniform() + 1e-3;
        s /= s.sum();
        const double alpha = inst.alpha;
        const RowVector q = solve_row_resolvent(s, hat, alpha);
        const RowVector q2 = solve_row_resolvent(s, rb, alpha);
        keep_worst("resolvent", (q - q2).lpNorm<1>(), alpha / (1 - alpha) * inf_norm(hat - rb));

        // shared perturbation between P and P0
        const Matrix p0 = renormalized_reference(hat, inst.n);
        const double p12 = inf_norm(hat.topRightCorner(inst.n, nt - inst.n));
        local.equality_error = std::abs(inf_norm(hat - p0) - 2 * p12);
        const RowVector pi = solve_row_resolvent(s, hat, alpha);
        const RowVector pi0 = solve_row_resolvent(s, p0, alpha);
        keep_worst("shared-perturbation", (pi - pi0).lpNorm<1>(), 2 * alpha / (1 - alpha) * p12);

        // leakage from a random set of size N
        std::vector<Index> all(static_cast<std::size_t>(nt));
        std::iota(all.begin(), all.end(), Index{0});
        rng.shuffle(all);
        std::vector<Index> set(all.begin(), all.begin() + inst.n);
        std::sort(set.begin(), set.end());
        RowVector pref = RowVector::Zero(nt);
        for (Index v : set) pref(v) = rng.uniform() + 1e-3;
        pref /= pref.sum();
        const double alpha_leak = std::min(alpha, 0.9 * r_max);
        const auto leak = leakage(inst.k, set, pref, alpha_leak);
        keep_worst("leakage", leak.lambda + leak.tail, leak.bound);

        results[idx] = std::move(local);
    });

    PerturbationReport report;
    report.instances = static_cast<Index>(instances.size());
    for (const auto& lemma : lemmas) report.worst.push_back({lemma, -1, 0.0, 0.0});
    for (std::size_t idx = 0; idx < results.size(); ++idx) {
        const Local& local = results[idx];
        report.evaluations += local.evaluations;
        report.max_equality_error = std::max(report.max_equality_error, local.equality_error);
        for (const auto& c : local.checks) {
            for (auto& w : report.worst) {
                if (w.lemma == c.lemma && (w.instance < 0 || c.margin() < w.margin())) w = c;
            }
            if (!report.first_violation && c.margin() < -report.tolerance) {
                report.first_violation = c;
            }
        }
    }
    return report;
}

LeakageReport leakage(const Matrix& k, const std::vector<Index>& set, const RowVector& s,
                      double alpha, int k_max) {
    const Index nt = k.rows();
    if (k.cols() != nt) throw InvalidArgument("leakage: K is not square");
    if (s.size() != nt) throw InvalidArgument("leakage: preference has the wrong length");
    if (set.empty()) throw InvalidArgument("leakage: empty observable set");
    std::vector<bool> in_set(static_cast<std::size_t>(nt), false);
    for (Index v : set) {
        if (v < 0 || v >= nt) throw InvalidArgument("leakage: set index out of range");
        in_set[static_cast<std::size_t>(v)] = true;
    }
    if (s.minCoeff() < 0 || std::abs(s.sum() - 1.0) > 1e-12) {
        throw InvalidArgument("leakage: preference must be a probability vector");
    }
    for (Index j = 0; j < nt; ++j) {
        if (s(j) > 0 && !in_set[static_cast<std::size_t>(j)]) {
            throw InvalidArgument("leakage: preference is not supported on the set");
        }
    }
    if (!(alpha >= 0 && alpha < 1)) throw InvalidArgument("leakage: alpha must lie in [0,1)");

    const Matrix abs_kt = k.transpose().cwiseAbs();
    const double r_max = inf_norm(abs_kt);
    if (!(alpha < r_max)) {
        throw PreconditionUnsatisfiable("alpha = " + std::to_string(alpha) +
                                        " is not below r_max = " + std::to_string(r_max));
    }
    const StochasticMatrix chain = transition_matrix(k);
    if (!chain.dropped.empty()) {
        throw PreconditionUnsatisfiable("|K^T| has zero rows; the coupling argument needs r_i > 0");
    }

    LeakageReport out;
    out.r_max = r_max;
    out.gamma = alpha / r_max;
    if (k_max <= 0) {
        k_max = 1;
        while (std::pow(alpha, k_max) >= 1e-13 && k_max < 100000) ++k_max;
    }
    out.terms = k_max;
    RowVector v = s;
    double series = 0;
    for (int step = 1; step <= k_max; ++step) {
        v = out.gamma * (v * abs_kt);
        for (Index j = 0; j < nt; ++j) {
            if (!in_set[static_cast<std::size_t>(j)]) series += v(j);
        }
    }
    out.lambda = (1 - out.gamma) * series;
    out.tail = (1 - out.gamma) * std::pow(alpha, k_max + 1) / (1 - alpha);

    const RowVector pi = solve_row_resolvent(s, chain.p, alpha);
    for (Index v_idx : set) out.ppr_mass_in_set += pi(v_idx);
    out.bound = (1 - out.gamma) / (1 - alpha) * (1 - out.ppr_mass_in_set);
    out.holds = out.lambda + out.tail <= out.bound + 1e-10;
    return out;
}

EndToEndReport end_to_end_report(const FiniteSampleParams& params, const PopulationQuantities& pop,
                                 double alpha, double m) {
    EndToEndReport r;
    r.eps = finite_sample_epsilon(params, m);
    r.end_to_end = end_to_end_bound(params, alpha, m);
    r.m_ppr = ppr_sample_complexity(params, pop.delta0_ppr_half, pop.p12_inf);
    r.m_pr = sample_complexity(params, alpha, pop.delta0_pr, pop.p12_inf);
    r.ppr_satisfiable = std::isfinite(r.m_ppr);
    r.pr_satisfiable = std::isfinite(r.m_pr);
    r.finite_sample_leakage =
        finite_sample_leakage_bound(params, alpha, pop.gamma, pop.ppr_mass_in_set, m);
    return r;
}

}  // namespace koopman
