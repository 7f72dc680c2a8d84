#include "koopman/dictionary.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "koopman/parallel.hpp"
#include "koopman/systems.hpp"

namespace koopman {

namespace {

constexpr double kPi = std::numbers::pi;

std::string power_name(const std::string& var, int p) {
    if (p == 1) return var;
    return var + "^" + std::to_string(p);
}

// "phi", "2phi", "-phi", "-3phi"
std::string multiple_name(int k, const std::string& var) {
    if (k == 1) return var;
    if (k == -1) return "-" + var;
    return std::to_string(k) + var;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Observable make(std::string name, std::string group, Evaluator f,
                ObservableTag tags = ObservableTag::None) {
    Observable o;
    o.name = std::move(name);
    o.group = std::move(group);
    o.tags = tags;
    o.evaluator = std::move(f);
    return o;
}

int integer_parameter(const std::map<std::string, double>& p, const std::string& key) {
    const auto it = p.find(key);
    if (it == p.end()) throw InvalidArgument("dictionary: missing parameter '" + key + "'");
    const double v = it->second;
    if (v != std::floor(v)) throw InvalidArgument("dictionary: '" + key + "' must be an integer");
    return static_cast<int>(v);
}

}  // namespace

std::vector<std::string> Dictionary::names() const {
    std::vector<std::string> out;
    out.reserve(observables.size());
    for (const auto& o : observables) out.push_back(o.name);
    return out;
}

Index Dictionary::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < observables.size(); ++i) {
        if (observables[i].name == name) return static_cast<Index>(i);
    }
    throw InvalidArgument("dictionary has no observable named '" + name + "'");
}

std::vector<Index> Dictionary::indices_of(const std::vector<std::string>& wanted) const {
    std::vector<Index> out;
    out.reserve(wanted.size());
    for (const auto& n : wanted) out.push_back(index_of(n));
    return out;
}

std::vector<Index> Dictionary::tagged(ObservableTag tag) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < observables.size(); ++i) {
        if (has_tag(observables[i].tags, tag)) out.push_back(static_cast<Index>(i));
    }
    return out;
}

Dictionary Dictionary::subset(const std::vector<Index>& indices) const {
    Dictionary out;
    out.builder = builder;
    out.parameters = parameters;
    out.input_dim = input_dim;
    out.delay_stride = delay_stride;
    out.observables.reserve(indices.size());
    for (Index i : indices) {
        if (i < 0 || i >= size()) {
            throw InvalidArgument("subset: index " + std::to_string(i) + " out of range");
        }
        out.observables.push_back((*this)[i]);
    }
    return out;
}

void Dictionary::validate() const {
    std::set<std::string> seen;
    for (const auto& o : observables) {
        if (!seen.insert(o.name).second) {
            throw InvalidArgument("dictionary: duplicate observable name '" + o.name + "'");
        }
        if (!o.is_delay() && !o.evaluator) {
            throw InvalidArgument("dictionary: observable '" + o.name + "' has no evaluator");
        }
    }
}

Dictionary build_monomials_2d(int max_total_degree, bool include_constant) {
    if (max_total_degree < 1) throw InvalidArgument("build_monomials_2d: degree must be >= 1");
    Dictionary dict;
    dict.builder = "monomials";
    dict.parameters = {{"degree", max_total_degree}, {"constant", include_constant ? 1.0 : 0.0}};
    dict.input_dim = 2;
    for (int total = include_constant ? 0 : 1; total <= max_total_degree; ++total) {
        for (int i = total; i >= 0; --i) {
            const int j = total - i;
            std::string name;
            if (total == 0) {
                name = "1";
            } else if (i == 0) {
                name = power_name("x2", j);
            } else if (j == 0) {
                name = power_name("x1", i);
            } else {
                name = power_name("x1", i) + "*" + power_name("x2", j);
            }
            const auto tags = (total == 1) ? (ObservableTag::SeedCandidate |
                                              ObservableTag::StateCoordinate)
                                           : ObservableTag::None;
            dict.observables.push_back(make(
                name, "degree" + std::to_string(total),
                [i, j](std::span<const double> x) {
                    double v = 1.0;
                    for (int p = 0; p < i; ++p) v *= x[0];
                    for (int p = 0; p < j; ++p) v *= x[1];
                    return v;
                },
                tags));
        }
    }
    return dict;
}

double laguerre(int n, double t) {
    if (n < 0) throw InvalidArgument("laguerre: negative order");
    if (n == 0) return 1.0;
    double prev = 1.0;
    double cur = 1.0 - t;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 - t) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

Dictionary build_laguerre_2d(int max_total_order) {
    if (max_total_order < 1) throw InvalidArgument("build_laguerre_2d: order must be >= 1");
    Dictionary dict;
    dict.builder = "laguerre";
    dict.parameters = {{"order", max_total_order}};
    dict.input_dim = 2;
    for (int total = 1; total <= max_total_order; ++total) {
        for (int i = total; i >= 0; --i) {
            const int j = total - i;
            std::string name;
            if (j == 0) {
                name = "L" + std::to_string(i) + "(x)";
            } else if (i == 0) {
                name = "L" + std::to_string(j) + "(y)";
            } else {
                name = "L" + std::to_string(i) + "(x)*L" + std::to_string(j) + "(y)";
            }
            const auto tags = (total == 1) ? (ObservableTag::SeedCandidate |
                                              ObservableTag::StateCoordinate)
                                           : ObservableTag::None;
            dict.observables.push_back(make(
                name, "order" + std::to_string(total),
                [i, j](std::span<const double> x) { return laguerre(i, x[0]) * laguerre(j, x[1]); },
                tags));
        }
    }
    return dict;
}

Dictionary build_ramachandran_dict() {
    Dictionary dict;
    dict.builder = "ramachandran";
    dict.input_dim = 2;
    auto& obs = dict.observables;
    const auto state = ObservableTag::SeedCandidate | ObservableTag::StateCoordinate;

    obs.push_back(make("sin(phi)", "coord", [](auto x) { return std::sin(x[0]); }, state));
    obs.push_back(make("cos(phi)", "coord", [](auto x) { return std::cos(x[0]); }, state));
    obs.push_back(make("sin(psi)", "coord", [](auto x) { return std::sin(x[1]); }, state));
    obs.push_back(make("cos(psi)", "coord", [](auto x) { return std::cos(x[1]); }, state));

    for (int axis = 0; axis < 2; ++axis) {
        const std::string var = axis == 0 ? "phi" : "psi";
        for (int k = 2; k <= 8; ++k) {
            const std::string arg = multiple_name(k, var);
            obs.push_back(make("sin(" + arg + ")", "fourier",
                               [axis, k](auto x) { return std::sin(k * x[axis]); }));
            obs.push_back(make("cos(" + arg + ")", "fourier",
                               [axis, k](auto x) { return std::cos(k * x[axis]); }));
        }
    }

    const char* fn_names[2] = {"sin", "cos"};
    for (int k = 1; k <= 4; ++k) {
        for (int l = 1; l <= 4; ++l) {
            for (int f = 0; f < 2; ++f) {
                for (int g = 0; g < 2; ++g) {
                    const std::string name = std::string(fn_names[f]) + "(" +
                                             multiple_name(k, "phi") + ")*" + fn_names[g] + "(" +
                                             multiple_name(l, "psi") + ")";
                    obs.push_back(make(name, "cross", [k, l, f, g](auto x) {
                        const double a = f == 0 ? std::sin(k * x[0]) : std::cos(k * x[0]);
                        const double b = g == 0 ? std::sin(l * x[1]) : std::cos(l * x[1]);
                        return a * b;
                    }));
                }
            }
        }
    }

    std::vector<std::pair<int, int>> pairs;
    for (int k = 1; k <= 4; ++k) {
        for (int l = -(4 - k); l <= 4 - k; ++l) pairs.emplace_back(k, l);
    }
    for (int l = 1; l <= 4; ++l) pairs.emplace_back(0, l);
    for (const auto& [k, l] : pairs) {
        // explicit coefficients keep (k,0) and (0,l) distinct from the coord/fourier names
        const std::string arg = std::to_string(k) + "phi" + (l >= 0 ? "+" : "") +
                                std::to_string(l) + "psi";
        obs.push_back(make("sin(" + arg + ")", "diagonal",
                           [k, l](auto x) { return std::sin(k * x[0] + l * x[1]); }));
        obs.push_back(make("cos(" + arg + ")", "diagonal",
                           [k, l](auto x) { return std::cos(k * x[0] + l * x[1]); }));
    }

    constexpr int kGrid = 10;
    constexpr double kSigma = 0.45;
    for (int a = 0; a < kGrid; ++a) {
        for (int b = 0; b < kGrid; ++b) {
            const double cphi = -kPi + (a + 0.5) * 2.0 * kPi / kGrid;
            const double cpsi = -kPi + (b + 0.5) * 2.0 * kPi / kGrid;
            const std::string name = "rbf(c=(" + format_number(cphi) + "," +
                                     format_number(cpsi) + "),s=" + format_number(kSigma) + ")";
            obs.push_back(make(name, "rbf", [cphi, cpsi](auto x) {
                const double dphi = circle_distance(x[0], cphi);
                const double dpsi = circle_distance(x[1], cpsi);
                return std::exp(-(dphi * dphi + dpsi * dpsi) / (2.0 * kSigma * kSigma));
            }));
        }
    }
    return dict;
}

Dictionary build_identity(Index dim) {
    if (dim < 1) throw InvalidArgument("build_identity: dim must be >= 1");
    Dictionary dict;
    dict.builder = "identity";
    dict.parameters = {{"dim", static_cast<double>(dim)}};
    dict.input_dim = dim;
    const auto state = ObservableTag::SeedCandidate | ObservableTag::StateCoordinate;
    for (Index c = 0; c < dim; ++c) {
        const std::string name = dim == 3 ? std::string(1, "xyz"[c]) : "x" + std::to_string(c + 1);
        dict.observables.push_back(
            make(name, "coord", [c](auto x) { return x[static_cast<std::size_t>(c)]; }, state));
    }
    return dict;
}

Dictionary build_delay_embedding(Index dim, Index n_delay, Index stride) {
    if (dim < 1 || n_delay < 1 || stride < 1) {
        throw InvalidArgument("build_delay_embedding: dim, n_delay and stride must be >= 1");
    }
    Dictionary dict;
    dict.builder = "delay";
    dict.parameters = {{"dim", static_cast<double>(dim)},
                       {"n_delay", static_cast<double>(n_delay)},
                       {"stride", static_cast<double>(stride)}};
    dict.input_dim = dim;
    dict.delay_stride = stride;
    const Dictionary coords = build_identity(dim);
    for (Index k = 0; k < n_delay; ++k) {
        for (Index c = 0; c < dim; ++c) {
            Observable o;
            o.name = "delay(" + coords[c].name + "," + std::to_string(k) + ")";
            o.group = "level" + std::to_string(k);
            o.tags = k == 0 ? (ObservableTag::SeedCandidate | ObservableTag::StateCoordinate)
                            : ObservableTag::None;
            o.coordinate = c;
            o.level = k;
            if (k == 0) o.evaluator = coords[c].evaluator;
            dict.observables.push_back(std::move(o));
        }
    }
    return dict;
}

Dictionary build_dictionary(const std::string& builder,
                            const std::map<std::string, double>& p) {
    if (builder == "monomials") {
        const auto it = p.find("constant");
        return build_monomials_2d(integer_parameter(p, "degree"),
                                  it != p.end() && it->second != 0.0);
    }
    if (builder == "laguerre") return build_laguerre_2d(integer_parameter(p, "order"));
    if (builder == "ramachandran") return build_ramachandran_dict();
    if (builder == "identity") return build_identity(integer_parameter(p, "dim"));
    if (builder == "delay") {
        return build_delay_embedding(integer_parameter(p, "dim"), integer_parameter(p, "n_delay"),
                                     integer_parameter(p, "stride"));
    }
    throw InvalidArgument("unknown dictionary builder '" + builder + "'");
}

Matrix evaluate(const Dictionary& dict, const Matrix& points, unsigned threads) {
    if (points.cols() != dict.input_dim) {
        throw InvalidArgument("evaluate: points have " + std::to_string(points.cols()) +
                              " columns, dictionary expects " + std::to_string(dict.input_dim));
    }
    for (const auto& o : dict.observables) {
        if (!o.evaluator) {
            throw InvalidArgument("evaluate: '" + o.name +
                                  "' needs trajectory context; use evaluate_delay");
        }
    }
    const Index m = points.rows();
    const Index n = dict.size();
    Matrix out(m, n);
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t r) {
        const auto row = static_cast<Index>(r);
        const Vector x = points.row(row).transpose();
        const std::span<const double> view(x.data(), static_cast<std::size_t>(x.size()));
        for (Index j = 0; j < n; ++j) out(row, j) = dict[j].evaluator(view);
    });
    return out;
}

std::pair<Matrix, Matrix> evaluate_delay(const Dictionary& dict, const Matrix& trajectory) {
    if (!dict.is_delay()) throw InvalidArgument("evaluate_delay: not a delay dictionary");
    if (trajectory.cols() != dict.input_dim) {
        throw InvalidArgument("evaluate_delay: trajectory dimension mismatch");
    }
    Index deepest = 0;
    for (const auto& o : dict.observables) deepest = std::max(deepest, o.level);
    const Index offset = deepest * dict.delay_stride;
    const Index rows = trajectory.rows() - offset - 1;
    if (rows < 1) {
        throw TrajectoryTooShort("evaluate_delay: need at least " + std::to_string(offset + 2) +
                                 " states, got " + std::to_string(trajectory.rows()));
    }
    const Index n = dict.size();
    Matrix psi_x(rows, n);
    Matrix psi_y(rows, n);
    for (Index j = 0; j < n; ++j) {
        const auto& o = dict[j];
        const Index start = offset - o.level * dict.delay_stride;
        psi_x.col(j) = trajectory.col(o.coordinate).segment(start, rows);
        psi_y.col(j) = trajectory.col(o.coordinate).segment(start + 1, rows);
    }
    return {std::move(psi_x), std::move(psi_y)};
}

double sup_bound_on_grid(const Dictionary& dict, const Vector& lower, const Vector& upper,
                         Index per_axis) {
    const Index d = dict.input_dim;
    if (lower.size() != d || upper.size() != d || per_axis < 2) {
        throw InvalidArgument("sup_bound_on_grid: bad grid");
    }
    Index total = 1;
    for (Index c = 0; c < d; ++c) total *= per_axis;
    Matrix points(total, d);
    for (Index p = 0; p < total; ++p) {
        Index rest = p;
        for (Index c = 0; c < d; ++c) {
            const Index step = rest % per_axis;
            rest /= per_axis;
            points(p, c) = lower(c) + (upper(c) - lower(c)) * static_cast<double>(step) /
                                          static_cast<double>(per_axis - 1);
        }
    }
    return evaluate(dict, points).cwiseAbs().maxCoeff();
}

}  // namespace koopman
