#include "koopman/systems.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "koopman/parallel.hpp"
#include "koopman/rng.hpp"

namespace koopman {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const std::map<SystemKind, std::vector<std::string>>& required_parameters() {
    static const std::map<SystemKind, std::vector<std::string>> table = {
        {SystemKind::Toy2D, {"a", "b"}},
        {SystemKind::Duffing, {"delta", "gamma", "beta"}},
        {SystemKind::VanDerPol, {"mu"}},
        {SystemKind::Lorenz, {"sigma", "rho", "beta"}},
        {SystemKind::RamachandranLangevin,
         {"A1", "A2", "A3", "sigma1", "sigma2", "sigma3", "phi1", "phi2", "phi3", "psi1", "psi2",
          "psi3", "beta_temp", "cos_amp"}},
        {SystemKind::ExplicitMatrix, {}},
    };
    return table;
}

template <typename Rhs>
Vector rk4_step(const Vector& x, double h, Rhs&& rhs) {
    const Vector k1 = rhs(x);
    const Vector k2 = rhs(x + 0.5 * h * k1);
    const Vector k3 = rhs(x + 0.5 * h * k2);
    const Vector k4 = rhs(x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector ode_rhs(const SystemSpec& spec, const Vector& s) {
    Vector d(s.size());
    switch (spec.kind) {
        case SystemKind::Duffing: {
            const double delta = spec.parameter("delta");
            const double gamma = spec.parameter("gamma");
            const double beta = spec.parameter("beta");
            d(0) = s(1);
            d(1) = -delta * s(1) + gamma * s(0) - beta * s(0) * s(0) * s(0);
            break;
        }
        case SystemKind::VanDerPol: {
            const double mu = spec.parameter("mu");
            d(0) = s(1);
            d(1) = mu * (1.0 - s(0) * s(0)) * s(1) - s(0);
            break;
        }
        case SystemKind::Lorenz: {
            const double sigma = spec.parameter("sigma");
            const double rho = spec.parameter("rho");
            const double beta = spec.parameter("beta");
            d(0) = sigma * (s(1) - s(0));
            d(1) = s(0) * (rho - s(2)) - s(1);
            d(2) = s(0) * s(1) - beta * s(2);
            break;
        }
        default:
            throw InvalidArgument("ode_rhs: " + to_string(spec.kind) + " is not an ODE system");
    }
    return d;
}

}  // namespace

std::string to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::Toy2D: return "Toy2D";
        case SystemKind::Duffing: return "Duffing";
        case SystemKind::VanDerPol: return "VanDerPol";
        case SystemKind::Lorenz: return "Lorenz";
        case SystemKind::RamachandranLangevin: return "RamachandranLangevin";
        case SystemKind::ExplicitMatrix: return "ExplicitMatrix";
    }
    return "unknown";
}

std::string to_string(Integrator integrator) {
    switch (integrator) {
        case Integrator::ExactMap: return "ExactMap";
        case Integrator::RK4: return "RK4";
        case Integrator::EulerMaruyama: return "EulerMaruyama";
    }
    return "unknown";
}

SystemKind system_kind_from_string(const std::string& name) {
    for (auto kind : {SystemKind::Toy2D, SystemKind::Duffing, SystemKind::VanDerPol,
                      SystemKind::Lorenz, SystemKind::RamachandranLangevin,
                      SystemKind::ExplicitMatrix}) {
        if (to_string(kind) == name) return kind;
    }
    throw InvalidArgument("unknown system kind '" + name + "'");
}

Integrator integrator_from_string(const std::string& name) {
    for (auto integrator : {Integrator::ExactMap, Integrator::RK4, Integrator::EulerMaruyama}) {
        if (to_string(integrator) == name) return integrator;
    }
    throw InvalidArgument("unknown integrator '" + name + "'");
}

Index SystemSpec::dim() const {
    switch (kind) {
        case SystemKind::Lorenz: return 3;
        case SystemKind::ExplicitMatrix: return matrix.rows();
        default: return 2;
    }
}

double SystemSpec::parameter(const std::string& name) const {
    const auto it = parameters.find(name);
    if (it == parameters.end()) {
        throw InvalidArgument(to_string(kind) + ": missing parameter '" + name + "'");
    }
    return it->second;
}

void SystemSpec::validate() const {
    if (!(dt > 0) || !std::isfinite(dt)) throw InvalidArgument("SystemSpec: dt must be > 0");
    for (const auto& name : required_parameters().at(kind)) {
        const double value = parameter(name);
        if (!std::isfinite(value)) {
            throw InvalidArgument(to_string(kind) + ": parameter '" + name + "' is not finite");
        }
    }
    switch (kind) {
        case SystemKind::Toy2D:
        case SystemKind::ExplicitMatrix:
            if (integrator != Integrator::ExactMap) {
                throw InvalidArgument(to_string(kind) + " requires the ExactMap integrator");
            }
            break;
        case SystemKind::RamachandranLangevin:
            if (integrator != Integrator::EulerMaruyama) {
                throw InvalidArgument("stochastic systems require EulerMaruyama");
            }
            if (!(parameter("beta_temp") > 0)) throw InvalidArgument("beta_temp must be > 0");
            break;
        default:
            if (integrator != Integrator::RK4) {
                throw InvalidArgument(to_string(kind) + " requires the RK4 integrator");
            }
    }
    if (kind == SystemKind::ExplicitMatrix &&
        (matrix.rows() == 0 || matrix.rows() != matrix.cols() || !matrix.allFinite())) {
        throw InvalidArgument("ExplicitMatrix needs a finite nonempty square matrix");
    }
}

SystemSpec SystemSpec::toy2d(double dt, double a, double b) {
    return {SystemKind::Toy2D, {{"a", a}, {"b", b}}, dt, Integrator::ExactMap, {}};
}

SystemSpec SystemSpec::duffing(double dt, double delta, double gamma, double beta) {
    return {SystemKind::Duffing,
            {{"delta", delta}, {"gamma", gamma}, {"beta", beta}},
            dt,
            Integrator::RK4,
            {}};
}

SystemSpec SystemSpec::van_der_pol(double dt, double mu) {
    return {SystemKind::VanDerPol, {{"mu", mu}}, dt, Integrator::RK4, {}};
}

SystemSpec SystemSpec::lorenz(double dt, double sigma, double rho, double beta) {
    return {SystemKind::Lorenz,
            {{"sigma", sigma}, {"rho", rho}, {"beta", beta}},
            dt,
            Integrator::RK4,
            {}};
}

SystemSpec SystemSpec::ramachandran(double dt, double beta_temp) {
    return {SystemKind::RamachandranLangevin,
            {{"A1", -6.0},
             {"A2", -6.0},
             {"A3", -4.0},
             {"sigma1", 0.55},
             {"sigma2", 0.55},
             {"sigma3", 0.65},
             {"phi1", -1.0},
             {"psi1", -1.0},
             {"phi2", -1.0},
             {"psi2", 1.2},
             {"phi3", 1.1},
             {"psi3", -0.3},
             {"beta_temp", beta_temp},
             {"cos_amp", 0.3}},
            dt,
            Integrator::EulerMaruyama,
            {}};
}

SystemSpec SystemSpec::explicit_matrix(const Matrix& a) {
    return {SystemKind::ExplicitMatrix, {}, 1.0, Integrator::ExactMap, a};
}

double wrap_angle(double a) {
    double w = std::fmod(a + std::numbers::pi, kTwoPi);
    if (w < 0) w += kTwoPi;
    return w - std::numbers::pi;
}

double circle_distance(double a, double b) {
    const double d = std::fabs(std::fmod(a - b, kTwoPi));
    return std::min(d, kTwoPi - d);
}

PotentialValue ramachandran_potential(const SystemSpec& spec, double phi, double psi) {
    PotentialValue out{0.0, {0.0, 0.0}};
    for (int k = 1; k <= 3; ++k) {
        const std::string id = std::to_string(k);
        const double depth = spec.parameter("A" + id);
        const double sigma = spec.parameter("sigma" + id);
        // wrapped signed offsets: their squares are the squared geodesic distances
        const double dphi = wrap_angle(phi - spec.parameter("phi" + id));
        const double dpsi = wrap_angle(psi - spec.parameter("psi" + id));
        const double s2 = sigma * sigma;
        const double g = depth * std::exp(-(dphi * dphi + dpsi * dpsi) / (2.0 * s2));
        out.value += g;
        out.gradient[0] -= g * dphi / s2;
        out.gradient[1] -= g * dpsi / s2;
    }
    const double amp = spec.parameter("cos_amp");
    out.value += amp * (std::cos(2.0 * phi) + std::cos(2.0 * psi));
    out.gradient[0] -= 2.0 * amp * std::sin(2.0 * phi);
    out.gradient[1] -= 2.0 * amp * std::sin(2.0 * psi);
    return out;
}

PotentialValue ramachandran_potential(double phi, double psi) {
    static const SystemSpec spec = SystemSpec::ramachandran();
    return ramachandran_potential(spec, phi, psi);
}

Vector flow_map(const SystemSpec& spec, const Vector& x, std::span<const double> noise) {
    if (x.size() != spec.dim()) {
        throw InvalidArgument("flow_map: state has dimension " + std::to_string(x.size()) +
                              ", system expects " + std::to_string(spec.dim()));
    }
    if (!x.allFinite()) throw NonFiniteState("flow_map: input state is not finite");
    Vector next(x.size());
    switch (spec.kind) {
        case SystemKind::Toy2D: {
            const double a = spec.parameter("a");
            const double b = spec.parameter("b");
            next(0) = x(0) - spec.dt * a * x(0);
            next(1) = x(1) - spec.dt * b * (x(1) - x(0) * x(0));
            break;
        }
        case SystemKind::ExplicitMatrix:
            next = spec.matrix * x;
            break;
        case SystemKind::RamachandranLangevin: {
            if (static_cast<Index>(noise.size()) != 2) {
                throw InvalidArgument("flow_map: Langevin step needs 2 noise draws");
            }
            const auto pot = ramachandran_potential(spec, x(0), x(1));
            const double scale = std::sqrt(2.0 * spec.dt / spec.parameter("beta_temp"));
            next(0) = wrap_angle(x(0) - pot.gradient[0] * spec.dt + scale * noise[0]);
            next(1) = wrap_angle(x(1) - pot.gradient[1] * spec.dt + scale * noise[1]);
            break;
        }
        default:
            next = rk4_step(x, spec.dt, [&](const Vector& s) { return ode_rhs(spec, s); });
    }
    if (!next.allFinite()) throw NonFiniteState("flow_map: state diverged");
    return next;
}

Box Box::square(double lo, double hi, Index dim) {
    return {Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
}

SnapshotSet sample_iid(const SystemSpec& spec, const Box& box, Index count, std::uint64_t seed,
                       unsigned threads) {
    spec.validate();
    const Index d = spec.dim();
    if (count < 1) throw InvalidArgument("sample_iid: need at least one sample");
    if (box.lower.size() != d || box.upper.size() != d || !box.lower.allFinite() ||
        !box.upper.allFinite() || (box.upper.array() <= box.lower.array()).any()) {
        throw InvalidRegion("sample_iid: box must have finite bounds with lower < upper in " +
                            std::to_string(d) + " dimensions");
    }
    SnapshotSet out;
    out.spec = spec;
    out.seed = seed;
    out.sampling.kind = Sampling::Kind::IidUniform;
    out.sampling.box = box;
    out.x.resize(count, d);
    out.y.resize(count, d);
    const CounterRng points(seed, 1);
    const CounterRng noise(seed, 2);
    parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
        const auto row = static_cast<Index>(i);
        const auto base = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(d);
        Vector x(d);
        for (Index c = 0; c < d; ++c) {
            const double u = points.uniform(base + static_cast<std::uint64_t>(c));
            x(c) = box.lower(c) + (box.upper(c) - box.lower(c)) * u;
        }
        std::vector<double> xi;
        if (spec.stochastic()) {
            for (Index c = 0; c < d; ++c) xi.push_back(noise.normal(base + static_cast<std::uint64_t>(c)));
        }
        out.x.row(row) = x.transpose();
        out.y.row(row) = flow_map(spec, x, xi).transpose();
    });
    return out;
}

Matrix simulate(const SystemSpec& spec, const Vector& x0, Index total_steps, std::uint64_t seed) {
    spec.validate();
    const Index d = spec.dim();
    if (x0.size() != d) throw InvalidArgument("simulate: initial state has wrong dimension");
    if (total_steps < 1) throw InvalidArgument("simulate: need at least one state");
    Matrix states(total_steps, d);
    const CounterRng noise(seed, 3);
    std::vector<double> xi(spec.stochastic() ? static_cast<std::size_t>(d) : 0);
    Vector x = x0;
    states.row(0) = x.transpose();
    for (Index k = 1; k < total_steps; ++k) {
        const auto base = static_cast<std::uint64_t>(k - 1) * static_cast<std::uint64_t>(d);
        for (std::size_t c = 0; c < xi.size(); ++c) xi[c] = noise.normal(base + c);
        x = flow_map(spec, x, xi);
        states.row(k) = x.transpose();
    }
    return states;
}

SnapshotSet pairs_from_trajectory(const SystemSpec& spec, const Matrix& states, Index burn_in,
                                  std::uint64_t seed) {
    if (burn_in < 0 || states.rows() <= burn_in + 1) {
        throw InvalidArgument("sample_trajectory: total_steps must exceed burn_in");
    }
    const Index pairs = states.rows() - burn_in - 1;
    SnapshotSet out;
    out.spec = spec;
    out.seed = seed;
    out.sampling.kind = Sampling::Kind::Trajectory;
    out.sampling.burn_in = burn_in;
    out.sampling.stride = 1;
    out.x = states.middleRows(burn_in, pairs);
    out.y = states.middleRows(burn_in + 1, pairs);
    return out;
}

SnapshotSet sample_trajectory(const SystemSpec& spec, const Vector& x0, Index total_steps,
                              Index burn_in, std::uint64_t seed) {
    if (burn_in < 0 || total_steps <= burn_in) {
        throw InvalidArgument("sample_trajectory: total_steps must exceed burn_in");
    }
    return pairs_from_trajectory(spec, simulate(spec, x0, total_steps, seed), burn_in, seed);
}

}  // namespace koopman
