// koopman: command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 numerical failure, 3 verification failure.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/io.hpp"
#include "koopman/pipeline.hpp"
#include "koopman/ranking.hpp"
#include "koopman/systems.hpp"

#ifndef KOOPMAN_VERSION
#define KOOPMAN_VERSION "0.0.0"
#endif
#ifndef KOOPMAN_PRESETS_DIR
#define KOOPMAN_PRESETS_DIR "presets"
#endif

namespace {

using namespace koopman;
namespace fs = std::filesystem;
using io::json;

constexpr int kUsage = 1;
constexpr int kNumerical = 2;
constexpr int kVerification = 3;

struct Globals {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = "out";
    std::string config;
    unsigned threads = 1;
};

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path presets_dir() {
    if (const char* env = std::getenv("KOOPMAN_PRESETS")) return env;
    return KOOPMAN_PRESETS_DIR;
}

fs::path out_root(const Globals& g) {
    if (const char* env = std::getenv("KOOPMAN_OUT")) return env;
    return g.out;
}

std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("parameter '" + item + "' is not key=value");
        out[item.substr(0, eq)] = io::parse_double(item.substr(eq + 1));
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ';') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void finish(const Globals& g, const std::string& command, const fs::path& dir,
            const std::vector<fs::path>& files, const json& config, const std::string& started) {
    io::RunManifest m;
    m.tool_version = KOOPMAN_VERSION;
    m.command = command;
    m.config_hash = io::fnv1a64(config.dump());
    m.seeds = {g.seed};
    m.started = started;
    for (const auto& f : files) m.add(dir, f);
    m.finished = io::utc_timestamp();
    io::write_json(dir / "manifest.json", m.to_json());
}

SystemSpec system_by_name(const std::string& name) {
    if (name == "toy") return SystemSpec::toy2d();
    if (name == "duffing") return SystemSpec::duffing();
    if (name == "vdp") return SystemSpec::van_der_pol();
    if (name == "lorenz") return SystemSpec::lorenz();
    if (name == "ramachandran") return SystemSpec::ramachandran();
    throw UsageError("unknown system '" + name + "'");
}

std::vector<Index> names_to_indices(const std::vector<std::string>& all, const std::vector<std::string>& names) {
    std::vector<Index> out;
    for (const auto& n : names) {
        const auto it = std::find(all.begin(), all.end(), n);
        if (it == all.end()) throw InvalidSeedSet("'" + n + "' is not a dictionary observable");
        out.push_back(static_cast<Index>(it - all.begin()));
    }
    return out;
}

// Random instances for the closed-form gap sweep; returns the worst
// mismatch and whether the mixing relaxation stayed below every PR gap.
struct GapSweep {
    double max_pr_mismatch = 0;
    double max_ppr_mismatch = 0;
    bool lower_bound_valid = true;
    Index instances = 0;
};

GapSweep gap_sweep(Index instances, std::uint64_t seed) {
    GapSweep s;
    Rng rng(seed, 77);
    while (s.instances < instances) {
        const auto inst = random_block_instance(rng);
        const auto chain = transition_matrix(inst.k);
        Matrix p0;
        try {
            p0 = renormalized_reference(chain.p, inst.n);
        } catch (const DegenerateRow&) {
            continue;
        }
        const std::vector<Index> seeds = {0};
        const auto g = auxiliary_gaps(p0, inst.n, inst.alpha, seeds);
        const double pr = detection_gaps(ppr_vector(p0, inst.alpha), inst.n).delta;
        const double ppr = detection_gaps(ppr_vector(p0, inst.alpha, seeds), inst.n).delta;
        s.max_pr_mismatch = std::max(s.max_pr_mismatch, std::abs(pr - g.delta0_pr));
        s.max_ppr_mismatch = std::max(s.max_ppr_mismatch, std::abs(ppr - g.delta0_ppr));
        if (g.mixing_lower_bound > pr + 1e-12) s.lower_bound_valid = false;
        ++s.instances;
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman dictionary selection by PageRank on EDMD matrices"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", KOOPMAN_VERSION);
    Globals g;
    app.add_option("--seed", g.seed, "RNG seed")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--out", g.out, "output directory (KOOPMAN_OUT overrides)");
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1u, 1024u));

    // simulate
    auto* sim = app.add_subcommand("simulate", "sample snapshot pairs of a system");
    std::string sim_system = "toy";
    Index sim_m = 100;
    double sim_lo = -2, sim_hi = 2;
    Index sim_burn = 0;
    std::string sim_name = "snapshots";
    bool sim_traj = false;
    std::vector<double> sim_x0;
    sim->add_option("--system", sim_system, "toy, duffing, vdp, lorenz, ramachandran or a kind name");
    sim->add_option("--m", sim_m, "number of pairs")->check(CLI::PositiveNumber);
    sim->add_option("--lower", sim_lo, "box lower bound (every axis)");
    sim->add_option("--upper", sim_hi, "box upper bound (every axis)");
    sim->add_flag("--trajectory", sim_traj, "consecutive pairs from one trajectory");
    sim->add_option("--x0", sim_x0, "trajectory start");
    sim->add_option("--burn-in", sim_burn, "trajectory burn-in steps");
    sim->add_option("--name", sim_name, "output base name");

    // edmd
    auto* ed = app.add_subcommand("edmd", "EDMD matrix from snapshots and a dictionary");
    std::string ed_snap;
    std::string ed_builder = "monomials";
    std::vector<std::string> ed_params;
    Index ed_split = 0;
    std::string ed_policy = "strict";
    ed->add_option("--snapshots", ed_snap, "snapshot base path (without .csv)")->required();
    ed->add_option("--dictionary", ed_builder, "monomials, laguerre, ramachandran, identity");
    ed->add_option("--param", ed_params, "dictionary parameter key=value");
    ed->add_option("--split", ed_split, "block split N for the report");
    ed->add_option("--rank-policy", ed_policy, "strict or minimum_norm");

    // rank
    auto* rk = app.add_subcommand("rank", "PageRank / PPR scores of an EDMD matrix");
    std::string rk_k;
    double rk_alpha = 0.85;
    std::string rk_seeds;
    rk->add_option("--koopman", rk_k, "Koopman base path (without .csv)")->required();
    rk->add_option("--alpha", rk_alpha, "damping factor")->check(CLI::Range(0.0, 1.0));
    rk->add_option("--seeds", rk_seeds, "seed observables separated by ';' (empty = PR)");

    // select
    auto* sl = app.add_subcommand("select", "select N observables and recompute EDMD");
    std::string sl_snap;
    std::string sl_builder = "monomials";
    std::vector<std::string> sl_params;
    Index sl_n = 3;
    double sl_alpha = 0.85;
    std::string sl_seeds, sl_force;
    std::string sl_policy = "strict";
    sl->add_option("--snapshots", sl_snap, "snapshot base path")->required();
    sl->add_option("--dictionary", sl_builder, "dictionary builder");
    sl->add_option("--param", sl_params, "dictionary parameter key=value");
    sl->add_option("--n", sl_n, "sub-dictionary size")->check(CLI::PositiveNumber);
    sl->add_option("--alpha", sl_alpha, "damping factor")->check(CLI::Range(0.0, 1.0));
    sl->add_option("--seeds", sl_seeds, "seed observables separated by ';'");
    sl->add_option("--force", sl_force, "observables always kept, separated by ';'");
    sl->add_option("--rank-policy", sl_policy, "strict or minimum_norm");

    // window
    auto* win = app.add_subcommand("window", "detection windows alpha*(eps)");
    std::string win_example;
    double win_beta = 0.5;
    std::vector<double> win_eps;
    std::string win_k;
    Index win_split = 0;
    std::string win_seeds;
    win->add_option("--example", win_example, "a or b");
    win->add_option("--beta", win_beta, "return probability beta");
    win->add_option("--eps", win_eps, "leakage levels")->required();
    win->add_option("--koopman", win_k, "use this EDMD matrix instead of an example");
    win->add_option("--split", win_split, "block split N (with --koopman)");
    win->add_option("--seeds", win_seeds, "PPR seeds (with --koopman), separated by ';'");

    // verify
    auto* ver = app.add_subcommand("verify", "randomised checks of the perturbation inequalities");
    Index ver_instances = 200;
    int ver_kmax = 8;
    ver->add_option("--instances", ver_instances, "random block instances")->check(CLI::PositiveNumber);
    ver->add_option("--k-max", ver_kmax, "largest power in the coupling check")->check(CLI::PositiveNumber);

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a named preset end to end");
    std::string exp_preset;
    exp->add_option("preset", exp_preset, "preset name or config path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    const std::string started = io::utc_timestamp();
    try {
        json file_config = json::object();
        if (!g.config.empty()) file_config = io::read_json(g.config);

        if (*sim) {
            SystemSpec spec = file_config.contains("system") ? io::system_from_json(file_config["system"])
                                                             : system_by_name(sim_system);
            SnapshotSet s;
            if (sim_traj) {
                Vector x0 = Vector::Zero(spec.dim());
                if (!sim_x0.empty()) {
                    if (static_cast<Index>(sim_x0.size()) != spec.dim()) throw UsageError("--x0 has the wrong length");
                    x0 = Eigen::Map<const Vector>(sim_x0.data(), spec.dim());
                }
                s = sample_trajectory(spec, x0, sim_burn + sim_m + 1, sim_burn, g.seed);
            } else {
                s = sample_iid(spec, Box::square(sim_lo, sim_hi, spec.dim()), sim_m, g.seed, g.threads);
            }
            const fs::path dir = out_root(g);
            io::write_snapshots(dir / sim_name, s);
            std::cout << "wrote " << s.size() << " pairs to " << (dir / sim_name).string() << ".csv\n";
            finish(g, "simulate", dir, {dir / (sim_name + ".csv"), dir / (sim_name + ".json")},
                   io::to_json(spec), started);
            return 0;
        }

        if (*ed) {
            const SnapshotSet s = io::read_snapshots(ed_snap);
            const Dictionary dict = build_dictionary(ed_builder, parse_params(ed_params));
            const Matrix px = evaluate(dict, s.x, g.threads);
            const Matrix py = evaluate(dict, s.y, g.threads);
            const RankPolicy policy = ed_policy == "minimum_norm" ? RankPolicy::MinimumNorm : RankPolicy::Strict;
            KoopmanMatrix k = edmd(px, py, policy, dict.names());
            const fs::path dir = out_root(g);
            std::vector<fs::path> files;
            if (ed_split > 0) k.split = ed_split;
            io::write_koopman(dir / "koopman", k, io::manifest_hash(dict));
            files = {dir / "koopman.csv", dir / "koopman.json"};
            io::write_json(dir / "dictionary.json", io::dictionary_manifest(dict));
            files.push_back(dir / "dictionary.json");
            if (ed_split > 0) {
                const auto rep = block_report(k.k, ed_split);
                io::write_json(dir / "block_report.json", io::to_json(rep));
                files.push_back(dir / "block_report.json");
                std::cout << "block " << rep.rows << "x" << rep.cols << " max|entry| "
                          << io::format_double(rep.max_abs)
                          << (rep.structural_zero ? " (structural zero)" : "") << "\n";
            }
            std::cout << "residual " << io::format_double(k.residual) << "\n";
            finish(g, "edmd", dir, files, io::dictionary_manifest(dict), started);
            return 0;
        }

        if (*rk) {
            const KoopmanMatrix k = io::read_koopman(rk_k);
            const auto seeds = names_to_indices(k.names, split_list(rk_seeds));
            const auto chain = transition_matrix(k);
            const auto pr = pagerank(chain, rk_alpha, seeds.empty() ? std::nullopt : std::optional(seeds));
            const fs::path dir = out_root(g);
            io::write_json(dir / "ppr.json", io::to_json(pr, k.names));
            for (std::size_t i = 0; i < std::min<std::size_t>(10, pr.ranking.size()); ++i) {
                const Index j = pr.ranking[i];
                std::cout << i + 1 << "\t" << (k.names.empty() ? std::to_string(j) : k.names[j]) << "\t"
                          << io::format_double(pr.scores(j)) << "\n";
            }
            finish(g, "rank", dir, {dir / "ppr.json"}, {{"alpha", rk_alpha}, {"seeds", rk_seeds}}, started);
            return 0;
        }

        if (*sl) {
            const SnapshotSet s = io::read_snapshots(sl_snap);
            const Dictionary dict = build_dictionary(sl_builder, parse_params(sl_params));
            const Matrix px = evaluate(dict, s.x, g.threads);
            const Matrix py = evaluate(dict, s.y, g.threads);
            const RankPolicy policy = sl_policy == "minimum_norm" ? RankPolicy::MinimumNorm : RankPolicy::Strict;
            const KoopmanMatrix k = edmd(px, py, policy, dict.names());
            const auto forced = dict.indices_of(split_list(sl_force));
            const auto r = select(k, px, py, sl_n, sl_alpha, split_list(sl_seeds), forced, policy);
            const fs::path dir = out_root(g);
            json j = {{"n", sl_n},
                      {"alpha", sl_alpha},
                      {"sub_dictionary", r.sub_dictionary},
                      {"indices", r.indices},
                      {"forced_includes", r.forced_includes},
                      {"substituted", r.substituted},
                      {"displaced", r.displaced},
                      {"certificate_available", r.certificate_available},
                      {"gap_report", io::to_json(r.gap_report)},
                      {"ppr", io::to_json(r.ppr, k.names)}};
            io::write_json(dir / "selection.json", j);
            io::write_koopman(dir / "k_sub", r.k_sub, io::manifest_hash(dict.subset(r.indices)));
            for (const auto& n : r.sub_dictionary) std::cout << n << "\n";
            finish(g, "select", dir, {dir / "selection.json", dir / "k_sub.csv", dir / "k_sub.json"},
                   {{"n", sl_n}, {"alpha", sl_alpha}, {"seeds", sl_seeds}}, started);
            return 0;
        }

        if (*win) {
            std::vector<WindowPoint> pts;
            WindowOptions opt;
            opt.threads = g.threads;
            if (!win_k.empty()) {
                const KoopmanMatrix k = io::read_koopman(win_k);
                if (win_split < 1) throw UsageError("--split is required with --koopman");
                const auto chain = transition_matrix(k);
                if (!chain.dropped.empty()) throw UsageError("chain dropped rows; windows need every observable");
                const auto seeds = names_to_indices(k.names, split_list(win_seeds));
                pts = detection_window(chain.p, win_split, seeds, win_eps, opt);
            } else {
                if (win_example != "a" && win_example != "b") throw UsageError("--example must be a or b");
                const ExampleSpec spec = win_example == "a" ? ExampleSpec::a(win_beta) : ExampleSpec::b(win_beta);
                pts = detection_window(spec, win_eps, opt);
            }
            const std::string csv = io::window_csv(pts);
            std::cout << csv;
            const fs::path dir = out_root(g);
            io::write_text(dir / "window.csv", csv);
            finish(g, "window", dir, {dir / "window.csv"},
                   {{"example", win_example}, {"beta", win_beta}, {"eps", win_eps}}, started);
            return 0;
        }

        if (*ver) {
            Rng rng(g.seed, 0);
            std::vector<BlockInstance> instances;
            for (Index i = 0; i < ver_instances; ++i) instances.push_back(random_block_instance(rng));
            const auto report = perturbation_suite(instances, ver_kmax, g.seed, g.threads);
            const auto sweep = gap_sweep(ver_instances, g.seed);
            const bool gaps_ok = sweep.max_pr_mismatch <= 1e-10 && sweep.max_ppr_mismatch <= 1e-10 && sweep.lower_bound_valid;
            const fs::path dir = out_root(g);
            json j = io::to_json(report);
            j["gap_sweep"] = {{"instances", sweep.instances},
                              {"max_pr_mismatch", sweep.max_pr_mismatch},
                              {"max_ppr_mismatch", sweep.max_ppr_mismatch},
                              {"lower_bound_valid", sweep.lower_bound_valid}};
            io::write_json(dir / "verify.json", j);
            for (const auto& w : report.worst) {
                std::cout << w.lemma << "\tworst margin " << io::format_double(w.margin()) << "\n";
            }
            std::cout << "||P-P0|| = 2||P12|| max error " << io::format_double(report.max_equality_error) << "\n";
            std::cout << "closed-form gaps max mismatch " << io::format_double(std::max(sweep.max_pr_mismatch, sweep.max_ppr_mismatch))
                      << (sweep.lower_bound_valid ? "" : " (mixing lower bound violated)") << "\n";
            finish(g, "verify", dir, {dir / "verify.json"}, {{"instances", ver_instances}, {"k_max", ver_kmax}}, started);
            if (report.first_violation) {
                const auto& c = *report.first_violation;
                std::cerr << "violated: " << c.lemma << " on instance " << c.instance << ": "
                          << io::format_double(c.lhs) << " > " << io::format_double(c.rhs) << "\n";
                return kVerification;
            }
            if (!report.ok()) {
                std::cerr << "violated: ||P - P0||_inf = 2 ||P12||_inf off by "
                          << io::format_double(report.max_equality_error) << "\n";
                return kVerification;
            }
            if (!gaps_ok) {
                std::cerr << "violated: closed-form auxiliary gaps disagree with direct gaps\n";
                return kVerification;
            }
            std::cout << "all inequalities hold\n";
            return 0;
        }

        if (*exp) {
            ExperimentConfig cfg;
            if (!exp_preset.empty()) {
                cfg = load_preset(exp_preset, presets_dir());
            } else if (!g.config.empty()) {
                cfg = config_from_json(file_config);
            } else {
                throw UsageError("experiment needs a preset name or --config");
            }
            if (g.seed_set) cfg.seed = g.seed;
            g.seed = cfg.seed;
            const fs::path root = out_root(g);
            const auto report = run_experiment(cfg, root, g.threads);
            const fs::path dir = root / cfg.name;
            for (const auto& r : report.replicates) {
                if (r.block) {
                    std::cout << "replicate " << r.replicate << ": K21 block " << r.block->rows << "x"
                              << r.block->cols << " max|entry| " << io::format_double(r.block->max_abs)
                              << (r.block->structural_zero ? " structural zero" : "") << "\n";
                }
            }
            for (const auto& p : report.curves) {
                if (p.step != 1) continue;
                std::cout << to_string(p.method) << "\tN=" << p.n << "\terror " << io::format_double(p.mean)
                          << " +- " << io::format_double(p.sd) << "\n";
            }
            for (const auto& w : report.window) {
                std::cout << "eps " << w.epsilon << "\talpha*_PR " << w.alpha_star_pr << "\talpha*_PPR "
                          << w.alpha_star_ppr << "\n";
            }
            finish(g, "experiment " + cfg.name, dir, report.files, to_json(cfg), started);
            std::cout << "outputs in " << dir.string() << "\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const koopman::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    } catch (const json::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
