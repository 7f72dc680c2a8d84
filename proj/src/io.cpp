#include "koopman/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace koopman::io {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InvalidArgument("not a number: '" + s + "'");
    }
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw InvalidArgument("not a number: '" + s + "'");
    return v;
}

std::string fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hash_file(const fs::path& path) { return fnv1a64(read_text(path)); }

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

// nlohmann prints doubles with the shortest round-trip form; NaN and inf
// become null, which we spell out instead.
json number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

json vec(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

template <typename T>
json list(const std::vector<T>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(x);
    return a;
}

// RFC 4180 cells: quotes around fields holding a comma or a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header) {
    std::string out;
    if (!header.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j) out += ',';
            out += csv_cell(header[j]);
        }
        out += '\n';
    }
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

Matrix parse_matrix_csv(const std::string& text, std::vector<std::string>* header) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        std::vector<double> row;
        try {
            for (const auto& c : cells) row.push_back(parse_double(c));
        } catch (const InvalidArgument&) {
            if (!first) throw;
            if (header) *header = cells;
            first = false;
            continue;
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InvalidArgument("ragged CSV: row " + std::to_string(rows.size() + 1));
        }
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        }
    }
    return m;
}

json to_json(const SystemSpec& spec) {
    json j;
    j["kind"] = to_string(spec.kind);
    j["dt"] = spec.dt;
    j["integrator"] = to_string(spec.integrator);
    json params = json::object();
    for (const auto& [k, v] : spec.parameters) params[k] = v;
    j["parameters"] = params;
    if (spec.kind == SystemKind::ExplicitMatrix) {
        json rows = json::array();
        for (Index i = 0; i < spec.matrix.rows(); ++i) rows.push_back(vec(spec.matrix.row(i).transpose()));
        j["matrix"] = rows;
    }
    return j;
}

SystemSpec system_from_json(const json& j) {
    const SystemKind kind = system_kind_from_string(j.at("kind").get<std::string>());
    SystemSpec spec;
    switch (kind) {
        case SystemKind::Toy2D: spec = SystemSpec::toy2d(); break;
        case SystemKind::Duffing: spec = SystemSpec::duffing(); break;
        case SystemKind::VanDerPol: spec = SystemSpec::van_der_pol(); break;
        case SystemKind::Lorenz: spec = SystemSpec::lorenz(); break;
        case SystemKind::RamachandranLangevin: spec = SystemSpec::ramachandran(); break;
        case SystemKind::ExplicitMatrix: {
            const auto& rows = j.at("matrix");
            Matrix a(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != static_cast<std::size_t>(a.cols())) {
                    throw InvalidArgument("system.matrix is ragged");
                }
                for (std::size_t c = 0; c < rows[r].size(); ++c) {
                    a(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c].get<double>();
                }
            }
            spec = SystemSpec::explicit_matrix(a);
            break;
        }
    }
    if (j.contains("dt")) spec.dt = j["dt"].get<double>();
    if (j.contains("integrator")) spec.integrator = integrator_from_string(j["integrator"].get<std::string>());
    if (j.contains("parameters")) {
        for (const auto& [k, v] : j["parameters"].items()) spec.parameters[k] = v.get<double>();
    }
    spec.validate();
    return spec;
}

json dictionary_manifest(const Dictionary& dict) {
    json j;
    j["builder"] = dict.builder;
    json params = json::object();
    for (const auto& [k, v] : dict.parameters) params[k] = v;
    j["parameters"] = params;
    json obs = json::array();
    for (Index i = 0; i < dict.size(); ++i) {
        const auto& o = dict[i];
        json tags = json::array();
        if (has_tag(o.tags, ObservableTag::SeedCandidate)) tags.push_back("seed-candidate");
        if (has_tag(o.tags, ObservableTag::StateCoordinate)) tags.push_back("state-coordinate");
        obs.push_back({{"index", i}, {"name", o.name}, {"group", o.group}, {"tags", tags}});
    }
    j["observables"] = obs;
    return j;
}

std::string manifest_hash(const Dictionary& dict) { return fnv1a64(dictionary_manifest(dict).dump()); }

void write_snapshots(const fs::path& base, const SnapshotSet& s) {
    const Index d = s.dim();
    std::vector<std::string> header;
    for (Index c = 0; c < d; ++c) header.push_back("x" + std::to_string(c + 1));
    for (Index c = 0; c < d; ++c) header.push_back("y" + std::to_string(c + 1));
    Matrix both(s.size(), 2 * d);
    both << s.x, s.y;
    write_text(fs::path(base).concat(".csv"), matrix_csv(both, header));

    json j;
    j["system"] = to_json(s.spec);
    j["seed"] = s.seed;
    j["count"] = s.size();
    j["dim"] = d;
    json sampling;
    if (s.sampling.kind == Sampling::Kind::IidUniform) {
        sampling["kind"] = "iid_uniform";
        sampling["lower"] = vec(s.sampling.box.lower);
        sampling["upper"] = vec(s.sampling.box.upper);
    } else {
        sampling["kind"] = "trajectory";
        sampling["burn_in"] = s.sampling.burn_in;
        sampling["stride"] = s.sampling.stride;
    }
    j["sampling"] = sampling;
    write_json(fs::path(base).concat(".json"), j);
}

SnapshotSet read_snapshots(const fs::path& base) {
    const json meta = read_json(fs::path(base).concat(".json"));
    const Matrix both = parse_matrix_csv(read_text(fs::path(base).concat(".csv")));
    SnapshotSet s;
    s.spec = system_from_json(meta.at("system"));
    const Index d = meta.at("dim").get<Index>();
    if (both.cols() != 2 * d) throw InvalidArgument("snapshot CSV does not have 2*dim columns");
    s.x = both.leftCols(d);
    s.y = both.rightCols(d);
    s.seed = meta.value("seed", std::uint64_t{0});
    const auto& sm = meta.at("sampling");
    if (sm.at("kind") == "iid_uniform") {
        s.sampling.kind = Sampling::Kind::IidUniform;
        const auto lo = sm.at("lower").get<std::vector<double>>();
        const auto hi = sm.at("upper").get<std::vector<double>>();
        s.sampling.box.lower = Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size()));
        s.sampling.box.upper = Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size()));
    } else {
        s.sampling.kind = Sampling::Kind::Trajectory;
        s.sampling.burn_in = sm.value("burn_in", Index{0});
        s.sampling.stride = sm.value("stride", Index{1});
    }
    return s;
}

void write_koopman(const fs::path& base, const KoopmanMatrix& k, const std::string& dict_hash) {
    write_text(fs::path(base).concat(".csv"), matrix_csv(k.k, k.names));
    json j;
    j["dictionary_hash"] = dict_hash;
    j["size"] = k.size();
    j["split"] = k.split ? json(*k.split) : json(nullptr);
    j["residual"] = number(k.residual);
    j["names"] = list(k.names);
    write_json(fs::path(base).concat(".json"), j);
}

KoopmanMatrix read_koopman(const fs::path& base) {
    KoopmanMatrix k;
    std::vector<std::string> header;
    k.k = parse_matrix_csv(read_text(fs::path(base).concat(".csv")), &header);
    if (k.k.rows() != k.k.cols()) throw InvalidArgument("Koopman CSV is not square");
    k.names = header;
    const fs::path side = fs::path(base).concat(".json");
    if (fs::exists(side)) {
        const json j = read_json(side);
        if (j.contains("split") && !j["split"].is_null()) k.split = j["split"].get<Index>();
        if (j.contains("residual") && j["residual"].is_number()) k.residual = j["residual"].get<double>();
        if (k.names.empty() && j.contains("names")) k.names = j["names"].get<std::vector<std::string>>();
    }
    if (!k.names.empty() && static_cast<Index>(k.names.size()) != k.size()) {
        throw InvalidArgument("Koopman header does not match the matrix size");
    }
    return k;
}

json heatmap_json(const Matrix& k, const std::vector<std::string>& names, bool rescale) {
    const Matrix m = rescale ? heatmap_rescale(k) : k;
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return {{"names", list(names)}, {"rescaled", rescale}, {"entries", rows}};
}

json to_json(const BlockReport& r) {
    return {{"n", r.n},
            {"rows", r.rows},
            {"cols", r.cols},
            {"offdiag_frobenius", number(r.offdiag_frobenius)},
            {"max_abs", number(r.max_abs)},
            {"threshold", number(r.threshold)},
            {"structural_zero", r.structural_zero},
            {"eps0", number(r.eps0)},
            {"bound_note", "offdiag_frobenius bounds the projection error only for an orthonormal initial dictionary"}};
}

json to_json(const GapReport& g) {
    return {{"n", g.n},
            {"n_tilde", g.n_tilde},
            {"alpha", g.alpha},
            {"seeds", list(g.seeds)},
            {"delta_pr", number(g.delta_pr)},
            {"delta_ppr", number(g.delta_ppr)},
            {"delta0_pr", number(g.delta0_pr)},
            {"delta0_ppr", number(g.delta0_ppr)},
            {"mixing_lower_bound", number(g.mixing_lower_bound)},
            {"p12_inf", number(g.p12_inf)},
            {"eta", number(g.eta)},
            {"q_min", number(g.q_min)},
            {"threshold_pr", number(g.threshold_pr)},
            {"threshold_ppr", number(g.threshold_ppr)},
            {"abstract_threshold_pr", number(g.abstract_threshold_pr)},
            {"abstract_threshold_ppr", number(g.abstract_threshold_ppr)},
            {"perturbation_bound", number(g.perturbation_bound)},
            {"mixing_ok", g.mixing_ok},
            {"reachability_ok", g.reachability_ok},
            {"seeds_in_block", g.seeds_in_block},
            {"pr_condition", g.pr_condition},
            {"ppr_condition", g.ppr_condition},
            {"pr_abstract_condition", g.pr_abstract_condition}};
}

json to_json(const PprResult& r, const std::vector<std::string>& names) {
    json scores = json::array();
    for (Index i = 0; i < r.scores.size(); ++i) {
        json e = {{"index", i}, {"score", number(r.scores(i))}};
        if (!names.empty()) e["name"] = names[static_cast<std::size_t>(i)];
        scores.push_back(e);
    }
    json ranking = json::array();
    for (Index i : r.ranking) {
        ranking.push_back(names.empty() ? json(i) : json(names[static_cast<std::size_t>(i)]));
    }
    return {{"alpha", r.alpha},
            {"seeds", list(r.seed_set)},
            {"dropped", list(r.dropped)},
            {"ranking", ranking},
            {"scores", scores}};
}

json to_json(const PerturbationReport& r) {
    json worst = json::array();
    for (const auto& c : r.worst) {
        worst.push_back({{"lemma", c.lemma},
                         {"instance", c.instance},
                         {"lhs", number(c.lhs)},
                         {"rhs", number(c.rhs)},
                         {"margin", number(c.margin())}});
    }
    json j = {{"instances", r.instances},
              {"evaluations", r.evaluations},
              {"tolerance", r.tolerance},
              {"max_equality_error", number(r.max_equality_error)},
              {"ok", r.ok()},
              {"worst", worst}};
    if (r.first_violation) {
        const auto& c = *r.first_violation;
        j["first_violation"] = {{"lemma", c.lemma}, {"instance", c.instance},
                                {"lhs", number(c.lhs)}, {"rhs", number(c.rhs)}};
    }
    return j;
}

json to_json(const LeakageReport& r) {
    return {{"lambda", number(r.lambda)},   {"tail", number(r.tail)},
            {"bound", number(r.bound)},     {"gamma", number(r.gamma)},
            {"r_max", number(r.r_max)},     {"ppr_mass_in_set", number(r.ppr_mass_in_set)},
            {"terms", r.terms},             {"holds", r.holds}};
}

json to_json(const FiniteSampleParams& p) {
    return {{"estimate", true},
            {"n_tilde", number(p.n_tilde)},
            {"bound_d", number(p.bound_d)},
            {"lambda_min", number(p.lambda_min)},
            {"gram_norm2", number(p.gram_norm2)},
            {"rho", number(p.rho)},
            {"r0_min", number(p.r0_min)},
            {"r_max", number(p.r_max)},
            {"eps0", number(p.eps0)}};
}

std::string window_csv(const std::vector<WindowPoint>& points) {
    std::string out =
        "epsilon,alpha_star_pr,alpha_star_ppr,alpha_star_pr_closed,alpha_star_ppr_closed,"
        "alpha_star_pr_mixing\n";
    for (const auto& p : points) {
        out += format_double(p.epsilon) + ',' + format_double(p.alpha_star_pr) + ',' +
               format_double(p.alpha_star_ppr) + ',' + format_double(p.alpha_star_pr_closed) + ',' +
               format_double(p.alpha_star_ppr_closed) + ',' + format_double(p.alpha_star_pr_mixing) +
               '\n';
    }
    return out;
}

void RunManifest::add(const fs::path& root, const fs::path& file) {
    files.push_back({fs::relative(file, root).generic_string(), hash_file(file)});
}

json RunManifest::to_json() const {
    json f = json::array();
    for (const auto& e : files) f.push_back({{"path", e.path}, {"fnv1a64", e.hash}});
    return {{"tool_version", tool_version}, {"command", command},
            {"config_hash", config_hash},   {"seeds", list(seeds)},
            {"started", started},           {"finished", finished},
            {"files", f}};
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace koopman::io
