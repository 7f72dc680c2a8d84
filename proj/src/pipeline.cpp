#include "koopman/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "koopman/parallel.hpp"
#include "koopman/rng.hpp"

namespace koopman {

namespace fs = std::filesystem;
using io::json;

namespace {

using IndexVec = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

IndexVec as_eigen(const std::vector<Index>& v) {
    IndexVec out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
}

Matrix columns(const Matrix& m, const std::vector<Index>& cols) { return m(Eigen::all, as_eigen(cols)); }

std::vector<std::string> pick(const std::vector<std::string>& names, const std::vector<Index>& idx) {
    std::vector<std::string> out;
    if (names.empty()) return out;
    for (Index i : idx) out.push_back(names[static_cast<std::size_t>(i)]);
    return out;
}

bool contains(const std::vector<Index>& v, Index x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::vector<Index> resolve_names(const KoopmanMatrix& k, const std::vector<std::string>& names,
                                 const char* what) {
    std::vector<Index> out;
    for (const auto& name : names) {
        const auto it = std::find(k.names.begin(), k.names.end(), name);
        if (it == k.names.end()) {
            throw InvalidSeedSet(std::string(what) + " '" + name + "' is not in the dictionary");
        }
        out.push_back(static_cast<Index>(it - k.names.begin()));
    }
    return out;
}

// Order `ranking` with `forced` pinned first.
std::vector<Index> pin_front(const std::vector<Index>& forced, const std::vector<Index>& ranking) {
    std::vector<Index> out = forced;
    for (Index i : ranking) {
        if (!contains(forced, i)) out.push_back(i);
    }
    return out;
}

}  // namespace

SelectionResult select(const KoopmanMatrix& k_full, const Matrix& psi_x, const Matrix& psi_y,
                       Index n, double alpha, const std::vector<std::string>& seed_names,
                       const std::vector<Index>& forced_includes, RankPolicy policy) {
    const Index nt = k_full.size();
    if (psi_x.cols() != nt || psi_y.cols() != nt) {
        throw InvalidArgument("select: Psi(X)/Psi(Y) columns do not match K");
    }
    if (n < 1 || n > nt) {
        throw InvalidArgument("select: N = " + std::to_string(n) + " outside [1, " + std::to_string(nt) + "]");
    }
    for (Index f : forced_includes) {
        if (f < 0 || f >= nt) throw InvalidArgument("select: forced index out of range");
    }
    if (static_cast<Index>(forced_includes.size()) > n) {
        throw InvalidArgument("select: more forced includes than N");
    }

    SelectionResult out;
    out.forced_includes = forced_includes;
    const std::vector<Index> seeds = resolve_names(k_full, seed_names, "seed");
    const StochasticMatrix chain = transition_matrix(k_full);
    out.ppr = pagerank(chain, alpha, seeds.empty() ? std::nullopt : std::optional(seeds));

    std::vector<Index> chosen(out.ppr.ranking.begin(), out.ppr.ranking.begin() + n);
    for (Index f : forced_includes) {
        if (contains(chosen, f)) continue;
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
            if (!contains(forced_includes, *it)) {
                out.displaced.push_back(*it);
                out.substituted.push_back(f);
                *it = f;
                break;
            }
        }
    }
    std::sort(chosen.begin(), chosen.end());
    out.indices = chosen;
    out.sub_dictionary = pick(k_full.names, chosen);

    if (n == nt) {
        out.k_sub = k_full;
    } else {
        out.k_sub = edmd(columns(psi_x, chosen), columns(psi_y, chosen), policy, out.sub_dictionary);
    }

    // certificate on the chain with the selection moved to the front
    std::vector<Index> local_sel;
    std::vector<Index> local_rest;
    for (std::size_t l = 0; l < chain.kept.size(); ++l) {
        (contains(chosen, chain.kept[l]) ? local_sel : local_rest).push_back(static_cast<Index>(l));
    }
    GapReport g;
    const auto n_local = static_cast<Index>(local_sel.size());
    if (n_local >= 1 && n_local < chain.size()) {
        std::vector<Index> perm = local_sel;
        perm.insert(perm.end(), local_rest.begin(), local_rest.end());
        const Matrix p = chain.p(as_eigen(perm), as_eigen(perm));
        std::vector<Index> seeds_perm;
        for (Index s : seeds) {
            const Index l = chain.local_index(s);
            seeds_perm.push_back(static_cast<Index>(std::find(perm.begin(), perm.end(), l) - perm.begin()));
        }
        try {
            g = detection_certificate(p, n_local, alpha, seeds_perm);
            out.certificate_available = true;
        } catch (const DegenerateRow&) {
            g.n = n_local;
            g.n_tilde = chain.size();
            g.alpha = alpha;
            g.delta_pr = detection_gaps(ppr_vector(p, alpha), n_local).delta;
            if (!seeds_perm.empty()) g.delta_ppr = detection_gaps(ppr_vector(p, alpha, seeds_perm), n_local).delta;
        }
    }
    g.seeds = seeds;
    out.gap_report = g;
    return out;
}

std::string to_string(OrderingMethod m) {
    switch (m) {
        case OrderingMethod::Ppr: return "ppr";
        case OrderingMethod::Pr: return "pr";
        case OrderingMethod::Random: return "random";
        case OrderingMethod::Incremental: return "incremental";
    }
    return "unknown";
}

OrderingMethod ordering_from_string(const std::string& name) {
    for (auto m : {OrderingMethod::Ppr, OrderingMethod::Pr, OrderingMethod::Random,
                   OrderingMethod::Incremental}) {
        if (to_string(m) == name) return m;
    }
    throw InvalidArgument("unknown ordering method '" + name + "'");
}

std::vector<Index> ordering(OrderingMethod method, const OrderingContext& ctx) {
    const Index n = ctx.k ? ctx.k->size() : ctx.size;
    if (n < 1) throw InvalidArgument("ordering: empty dictionary");
    std::vector<Index> base(static_cast<std::size_t>(n));
    std::iota(base.begin(), base.end(), Index{0});
    switch (method) {
        case OrderingMethod::Incremental: break;
        case OrderingMethod::Random: {
            Rng rng(ctx.seed, 0x5eed);
            rng.shuffle(base);
            break;
        }
        case OrderingMethod::Ppr:
        case OrderingMethod::Pr: {
            if (!ctx.k) throw InvalidArgument("ordering: " + to_string(method) + " needs K");
            const StochasticMatrix chain = transition_matrix(*ctx.k);
            const bool personalized = method == OrderingMethod::Ppr && !ctx.seeds.empty();
            base = pagerank(chain, ctx.alpha, personalized ? std::optional(ctx.seeds) : std::nullopt).ranking;
            break;
        }
    }
    return pin_front(ctx.forced, base);
}

PseudoEigenfunction pseudo_eigenfunction(const Matrix& k_sub, const Matrix& psi, double target_omega,
                                         double dt) {
    if (k_sub.rows() != k_sub.cols()) throw InvalidArgument("pseudo_eigenfunction: K is not square");
    if (psi.cols() != k_sub.rows()) throw InvalidArgument("pseudo_eigenfunction: Psi width differs");
    if (!(dt > 0)) throw InvalidArgument("pseudo_eigenfunction: dt must be > 0");
    const auto pairs = eig(k_sub);
    // numerically zero eigenvalues have no meaningful phase
    const double floor = pairs.empty() ? 0.0 : 1e-10 * std::abs(pairs.front().value);
    const EigenPair* best = nullptr;
    double best_gap = std::numeric_limits<double>::infinity();
    double best_omega = 0;
    for (const auto& p : pairs) {
        if (std::abs(p.value) <= floor) continue;
        const double omega = std::arg(p.value) / dt;
        const double gap = std::abs(omega - target_omega);
        if (gap < best_gap) {
            best_gap = gap;
            best = &p;
            best_omega = omega;
        }
    }
    if (!best) throw InvalidArgument("pseudo_eigenfunction: K has only zero eigenvalues");
    PseudoEigenfunction out;
    out.eigenvalue = best->value;
    out.omega = best_omega;
    out.values = (psi.cast<std::complex<double>>() * best->vector).real();
    return out;
}

void ExperimentConfig::validate() const {
    if (kind == "window") {
        if (example != "a" && example != "b") throw InvalidArgument("window.example must be a or b");
        if (eps_grid.empty()) throw InvalidArgument("window.eps must not be empty");
        return;
    }
    if (kind != "sweep") throw InvalidArgument("kind must be sweep or window");
    system.validate();
    if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
    if (m < 1) throw InvalidArgument("sampling.m must be >= 1");
    if (m_test < 0) throw InvalidArgument("sampling.m_test must be >= 0");
    if (!(alpha > 0 && alpha < 1)) throw InvalidArgument("alpha must lie in (0,1)");
    if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
    if (sampling != "iid" && sampling != "trajectory") {
        throw InvalidArgument("sampling.kind must be iid or trajectory");
    }
    if (!(test_fraction >= 0 && test_fraction < 1)) throw InvalidArgument("test_fraction must lie in [0,1)");
    if (sampling == "trajectory" && x0.size() != system.dim()) {
        throw InvalidArgument("sampling.x0 must have the system dimension");
    }
    if (sampling == "iid" && system.stochastic() && horizon > 1) {
        throw InvalidArgument("multi-step errors on i.i.d. samples need a deterministic system");
    }
    for (Index n : sizes) {
        if (n < 1) throw InvalidArgument("sizes must be >= 1");
    }
    if (methods.empty()) throw InvalidArgument("methods must not be empty");
}

namespace {

RankPolicy rank_policy_from_string(const std::string& s) {
    if (s == "strict") return RankPolicy::Strict;
    if (s == "minimum_norm") return RankPolicy::MinimumNorm;
    throw InvalidArgument("rank_policy must be strict or minimum_norm");
}

Vector vector_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json vector_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw InvalidArgument("unknown key '" + key + "' in " + where);
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    try {
        reject_unknown(j,
                       {"name", "description", "kind", "system", "dictionary", "sampling", "replicates",
                        "seed", "alpha", "seed_observables", "forced_observables",
                        "target_observables", "sizes", "horizon", "methods", "rank_policy",
                        "block_split", "target_omega", "write_matrices", "window"},
                       "config");
        ExperimentConfig c;
        c.name = j.value("name", std::string("experiment"));
        c.kind = j.value("kind", std::string("sweep"));
        if (c.kind == "window") {
            const auto& w = j.at("window");
            reject_unknown(w, {"example", "beta", "eps"}, "window");
            c.example = w.value("example", std::string("a"));
            c.beta = w.value("beta", 0.5);
            c.eps_grid = w.at("eps").get<std::vector<double>>();
            c.validate();
            return c;
        }
        c.system = io::system_from_json(j.at("system"));
        const auto& d = j.at("dictionary");
        reject_unknown(d, {"builder", "params"}, "dictionary");
        c.dictionary = d.at("builder").get<std::string>();
        if (d.contains("params")) c.dictionary_params = d["params"].get<std::map<std::string, double>>();
        const auto& s = j.at("sampling");
        reject_unknown(s, {"kind", "box", "m", "m_test", "test_fraction", "x0", "x0_jitter", "burn_in"},
                       "sampling");
        c.sampling = s.value("kind", std::string("iid"));
        if (s.contains("box")) {
            c.box.lower = vector_from(s["box"].at("lower"));
            c.box.upper = vector_from(s["box"].at("upper"));
        } else {
            c.box = Box::square(-2, 2, c.system.dim());
        }
        c.m = s.at("m").get<Index>();
        c.m_test = s.value("m_test", Index{0});
        c.test_fraction = s.value("test_fraction", 0.0);
        if (s.contains("x0")) c.x0 = vector_from(s["x0"]);
        c.x0_jitter = s.value("x0_jitter", 0.0);
        c.burn_in = s.value("burn_in", Index{0});
        c.replicates = j.value("replicates", Index{1});
        c.seed = j.value("seed", std::uint64_t{0});
        c.alpha = j.value("alpha", 0.85);
        c.seed_observables = j.value("seed_observables", std::vector<std::string>{});
        c.forced_observables = j.value("forced_observables", c.seed_observables);
        c.target_observables = j.value("target_observables", c.forced_observables);
        c.sizes = j.value("sizes", std::vector<Index>{});
        c.horizon = j.value("horizon", Index{1});
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(ordering_from_string(m.get<std::string>()));
        }
        c.rank_policy = rank_policy_from_string(j.value("rank_policy", std::string("strict")));
        if (j.contains("block_split")) c.block_split = j["block_split"].get<Index>();
        if (j.contains("target_omega")) c.target_omega = j["target_omega"].get<double>();
        c.write_matrices = j.value("write_matrices", true);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["kind"] = c.kind;
    if (c.kind == "window") {
        j["window"] = {{"example", c.example}, {"beta", c.beta}, {"eps", c.eps_grid}};
        return j;
    }
    j["system"] = io::to_json(c.system);
    j["dictionary"] = {{"builder", c.dictionary}, {"params", c.dictionary_params}};
    json s = {{"kind", c.sampling}, {"m", c.m}};
    if (c.sampling == "iid") {
        s["box"] = {{"lower", vector_json(c.box.lower)}, {"upper", vector_json(c.box.upper)}};
        s["m_test"] = c.m_test;
    } else {
        s["test_fraction"] = c.test_fraction;
        s["x0"] = vector_json(c.x0);
        s["x0_jitter"] = c.x0_jitter;
        s["burn_in"] = c.burn_in;
    }
    j["sampling"] = s;
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["alpha"] = c.alpha;
    j["seed_observables"] = c.seed_observables;
    j["forced_observables"] = c.forced_observables;
    j["target_observables"] = c.target_observables;
    j["sizes"] = c.sizes;
    j["horizon"] = c.horizon;
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    j["rank_policy"] = c.rank_policy == RankPolicy::Strict ? "strict" : "minimum_norm";
    if (c.block_split) j["block_split"] = *c.block_split;
    if (c.target_omega) j["target_omega"] = *c.target_omega;
    j["write_matrices"] = c.write_matrices;
    return j;
}

ExperimentConfig load_preset(const std::string& name_or_path, const fs::path& presets_dir) {
    fs::path path = name_or_path;
    if (!fs::exists(path)) path = presets_dir / (name_or_path + ".json");
    if (!fs::exists(path)) {
        throw InvalidArgument("no preset or config file '" + name_or_path + "' (looked in " +
                              presets_dir.string() + ")");
    }
    return config_from_json(io::read_json(path));
}

namespace {

struct ReplicateData {
    Matrix psi_x;
    Matrix psi_y;
    Matrix test_start;
    std::vector<Matrix> test_future;
};

ReplicateData generate(const ExperimentConfig& c, const Dictionary& dict, const CounterRng& keys,
                       unsigned threads) {
    ReplicateData d;
    if (c.sampling == "iid") {
        const auto train = sample_iid(c.system, c.box, c.m, keys.bits(0), threads);
        d.psi_x = evaluate(dict, train.x, threads);
        d.psi_y = evaluate(dict, train.y, threads);
        if (c.m_test > 0) {
            const auto test = sample_iid(c.system, c.box, c.m_test, keys.bits(1), threads);
            d.test_start = evaluate(dict, test.x, threads);
            Matrix states = test.y;
            for (Index h = 0; h < c.horizon; ++h) {
                if (h > 0) {
                    Matrix next(states.rows(), states.cols());
                    for (Index i = 0; i < states.rows(); ++i) {
                        next.row(i) = flow_map(c.system, states.row(i).transpose()).transpose();
                    }
                    states = std::move(next);
                }
                d.test_future.push_back(evaluate(dict, states, threads));
            }
        }
        return d;
    }

    Vector x0 = c.x0;
    if (c.x0_jitter > 0) {
        const CounterRng jitter = keys.derive(3);
        for (Index i = 0; i < x0.size(); ++i) x0(i) += c.x0_jitter * jitter.normal(static_cast<std::uint64_t>(i));
    }
    const Matrix traj = simulate(c.system, x0, c.burn_in + c.m + 1, keys.bits(2));
    const Matrix states = traj.bottomRows(c.m + 1);
    Matrix all;
    if (dict.is_delay()) {
        auto [px, py] = evaluate_delay(dict, states);
        all.resize(px.rows() + 1, px.cols());
        all << px, py.bottomRows(1);
    } else {
        all = evaluate(dict, states, threads);
    }
    const Index pairs = all.rows() - 1;
    const auto n_test = static_cast<Index>(std::floor(c.test_fraction * static_cast<double>(pairs)));
    const Index n_train = pairs - n_test;
    if (n_train < 1) throw InvalidArgument("trajectory too short for a training set");
    d.psi_x = all.topRows(n_train);
    d.psi_y = all.middleRows(1, n_train);
    if (n_test > 0) {
        const Index count = pairs - n_train - c.horizon + 1;
        if (count < 1) throw TrajectoryTooShort("test segment shorter than the horizon");
        d.test_start = all.middleRows(n_train, count);
        for (Index h = 1; h <= c.horizon; ++h) d.test_future.push_back(all.middleRows(n_train + h, count));
    }
    return d;
}

struct ReplicateOutput {
    ReplicateResult result;
    std::vector<fs::path> files;
};

ReplicateOutput run_replicate(const ExperimentConfig& c, const Dictionary& dict, Index rep,
                              const std::optional<fs::path>& dir, unsigned threads) {
    ReplicateOutput out;
    ReplicateResult& r = out.result;
    r.replicate = rep;
    const CounterRng keys(c.seed, static_cast<std::uint64_t>(rep));
    r.seed = keys.bits(0);

    const ReplicateData data = generate(c, dict, keys, threads);
    const KoopmanMatrix k = edmd(data.psi_x, data.psi_y, c.rank_policy, dict.names());
    r.residual_full = k.residual;
    const std::vector<Index> seeds = dict.indices_of(c.seed_observables);
    const std::vector<Index> forced = dict.indices_of(c.forced_observables);
    const std::vector<Index> targets = dict.indices_of(c.target_observables);

    const StochasticMatrix chain = transition_matrix(k);
    r.ppr = pagerank(chain, c.alpha, seeds.empty() ? std::nullopt : std::optional(seeds));

    OrderingContext ctx;
    ctx.k = &k;
    ctx.alpha = c.alpha;
    ctx.seeds = seeds;
    ctx.forced = forced;
    ctx.seed = keys.bits(4);

    if (c.block_split) {
        r.block = block_report(k.k, *c.block_split);
        const auto ppr_order = ordering(OrderingMethod::Ppr, ctx);
        r.block_ppr_ordered = block_report(permute(k, ppr_order).k, *c.block_split);
    }

    const bool have_test = data.test_start.rows() > 0 && !targets.empty();
    std::string errors_csv = "method,n,step,error\n";
    json selections = json::object();
    for (auto method : c.methods) {
        const auto order = ordering(method, ctx);
        r.orders[method] = order;
        auto& per_size = r.errors[method];
        json sel_json = json::object();
        for (Index n : c.sizes) {
            std::vector<double> errs;
            if (n <= k.size()) {
                std::vector<Index> sel(order.begin(), order.begin() + n);
                std::sort(sel.begin(), sel.end());
                sel_json[std::to_string(n)] = pick(k.names, sel);
                const Matrix sx = columns(data.psi_x, sel);
                const KoopmanMatrix k_sub =
                    n == k.size() ? k : edmd(sx, columns(data.psi_y, sel), c.rank_policy);
                if (have_test) {
                    std::vector<Index> pos;
                    for (Index t : targets) {
                        const auto it = std::find(sel.begin(), sel.end(), t);
                        if (it == sel.end()) {
                            throw InvalidArgument("target observable '" + dict[t].name +
                                                  "' is not in the " + to_string(method) +
                                                  " selection; add it to forced_observables");
                        }
                        pos.push_back(static_cast<Index>(it - sel.begin()));
                    }
                    std::vector<Matrix> future;
                    for (const auto& f : data.test_future) future.push_back(columns(f, sel));
                    errs = prediction_error(k_sub.k, columns(data.test_start, sel), future, pos);
                    for (std::size_t h = 0; h < errs.size(); ++h) {
                        errors_csv += to_string(method) + ',' + std::to_string(n) + ',' +
                                      std::to_string(h + 1) + ',' + io::format_double(errs[h]) + '\n';
                    }
                }
                if (c.target_omega && method == OrderingMethod::Ppr) {
                    const auto pe = pseudo_eigenfunction(k_sub.k, sx, *c.target_omega, c.system.dt);
                    r.spectral.push_back({n, pe.eigenvalue, pe.omega});
                }
            } else {
                errs.assign(static_cast<std::size_t>(c.horizon), std::nan(""));
            }
            per_size.push_back(std::move(errs));
        }
        selections[to_string(method)] = {{"order", pick(k.names, order)}, {"selected", sel_json}};
    }

    if (dir) {
        const fs::path rd = *dir / std::to_string(rep);
        auto add_json = [&](const std::string& file, const json& j) {
            io::write_json(rd / file, j);
            out.files.push_back(rd / file);
        };
        if (c.write_matrices) {
            io::write_koopman(rd / "k_full", k, io::manifest_hash(dict));
            out.files.push_back(rd / "k_full.csv");
            out.files.push_back(rd / "k_full.json");
            const auto ppr_order = ordering(OrderingMethod::Ppr, ctx);
            const KoopmanMatrix kp = permute(k, ppr_order);
            add_json("heatmap_original.json", io::heatmap_json(k.k, k.names, true));
            add_json("heatmap_ppr.json", io::heatmap_json(kp.k, kp.names, true));
        }
        add_json("ppr.json", io::to_json(r.ppr, k.names));
        add_json("selections.json", selections);
        if (have_test) {
            io::write_text(rd / "errors.csv", errors_csv);
            out.files.push_back(rd / "errors.csv");
        }
        if (r.block) {
            add_json("block_report.json", {{"dictionary_order", io::to_json(*r.block)},
                                           {"ppr_order", io::to_json(*r.block_ppr_ordered)}});
        }
        if (!r.spectral.empty()) {
            json s = json::array();
            for (const auto& h : r.spectral) {
                s.push_back({{"n", h.n},
                             {"eigenvalue_re", h.eigenvalue.real()},
                             {"eigenvalue_im", h.eigenvalue.imag()},
                             {"omega", h.omega}});
            }
            add_json("spectral.json", s);
        }
    }
    return out;
}

std::vector<CurvePoint> aggregate(const ExperimentConfig& c, const std::vector<ReplicateResult>& reps) {
    std::vector<CurvePoint> curves;
    for (auto method : c.methods) {
        for (std::size_t si = 0; si < c.sizes.size(); ++si) {
            for (Index h = 0; h < c.horizon; ++h) {
                std::vector<double> v;
                for (const auto& r : reps) {
                    const auto it = r.errors.find(method);
                    if (it == r.errors.end()) continue;
                    const auto& e = it->second[si];
                    if (static_cast<Index>(e.size()) > h && std::isfinite(e[static_cast<std::size_t>(h)])) {
                        v.push_back(e[static_cast<std::size_t>(h)]);
                    }
                }
                if (v.empty()) continue;
                CurvePoint p{method, c.sizes[si], h + 1, 0, 0, static_cast<Index>(v.size())};
                p.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
                if (v.size() > 1) {
                    double ss = 0;
                    for (double x : v) ss += (x - p.mean) * (x - p.mean);
                    p.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
                }
                curves.push_back(p);
            }
        }
    }
    return curves;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const std::optional<fs::path>& out,
                                unsigned threads) {
    config.validate();
    ExperimentReport report;
    report.config = config;
    const std::optional<fs::path> root = out ? std::optional(*out / config.name) : std::nullopt;

    if (config.kind == "window") {
        const ExampleSpec spec = config.example == "a" ? ExampleSpec::a(config.beta) : ExampleSpec::b(config.beta);
        WindowOptions opt;
        opt.threads = threads;
        report.window = detection_window(spec, config.eps_grid, opt);
        if (root) {
            io::write_text(*root / "window.csv", io::window_csv(report.window));
            report.files.push_back(*root / "window.csv");
            const auto closure = window_closure(spec.p(0.0), spec.n(), spec.ppr_seeds());
            io::write_json(*root / "closure.json", {{"pr", closure.pr}, {"ppr", closure.ppr}});
            report.files.push_back(*root / "closure.json");
        }
        return report;
    }

    report.dictionary = build_dictionary(config.dictionary, config.dictionary_params);
    const Dictionary& dict = report.dictionary;
    for (Index n : config.sizes) {
        if (n > dict.size()) {
            throw InvalidArgument("size " + std::to_string(n) + " exceeds the dictionary size " +
                                  std::to_string(dict.size()));
        }
    }
    if (config.block_split) check_split(*config.block_split, dict.size());
    dict.indices_of(config.seed_observables);
    dict.indices_of(config.forced_observables);
    dict.indices_of(config.target_observables);

    const auto reps = static_cast<std::size_t>(config.replicates);
    std::vector<ReplicateOutput> outputs(reps);
    const unsigned inner = reps > 1 ? 1u : threads;
    parallel_for(reps, threads, [&](std::size_t i) {
        try {
            outputs[i] = run_replicate(config, dict, static_cast<Index>(i), root, inner);
        } catch (const Error& e) {
            throw Error(e.kind(), "replicate " + std::to_string(i) + " of " + config.name + ": " +
                                      std::string(e.what()).substr(e.kind().size() + 2));
        }
    });
    for (auto& o : outputs) {
        report.replicates.push_back(std::move(o.result));
        report.files.insert(report.files.end(), o.files.begin(), o.files.end());
    }
    report.curves = aggregate(config, report.replicates);

    if (root) {
        io::write_json(*root / "dictionary.json", io::dictionary_manifest(dict));
        report.files.push_back(*root / "dictionary.json");
        io::write_json(*root / "config.json", to_json(config));
        report.files.push_back(*root / "config.json");
        if (!report.curves.empty()) {
            std::string csv = "method,n,step,mean,sd,count\n";
            for (const auto& p : report.curves) {
                csv += to_string(p.method) + ',' + std::to_string(p.n) + ',' + std::to_string(p.step) + ',' +
                       io::format_double(p.mean) + ',' + io::format_double(p.sd) + ',' +
                       std::to_string(p.count) + '\n';
            }
            io::write_text(*root / "curves.csv", csv);
            report.files.push_back(*root / "curves.csv");
        }
    }
    return report;
}

}  // namespace koopman
