#pragma once

// Benchmark dynamical systems and seeded snapshot generation.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "koopman/numerics.hpp"

namespace koopman {

enum class SystemKind { Toy2D, Duffing, VanDerPol, Lorenz, RamachandranLangevin, ExplicitMatrix };
enum class Integrator { ExactMap, RK4, EulerMaruyama };

std::string to_string(SystemKind kind);
std::string to_string(Integrator integrator);
SystemKind system_kind_from_string(const std::string& name);
Integrator integrator_from_string(const std::string& name);

/// A discrete-time system x_{k+1} = F(x_k).
///
/// Parameter names per kind:
///   Toy2D         a, b
///   Duffing       delta, gamma, beta
///   VanDerPol     mu
///   Lorenz        sigma, rho, beta
///   Ramachandran  A1..A3, sigma1..sigma3, phi1..phi3, psi1..psi3, beta_temp, cos_amp
///   ExplicitMatrix uses `matrix` (x -> A x) and no parameters.
struct SystemSpec {
    SystemKind kind = SystemKind::Toy2D;
    std::map<std::string, double> parameters;
    double dt = 0.2;
    Integrator integrator = Integrator::ExactMap;
    Matrix matrix;

    Index dim() const;
    bool stochastic() const { return kind == SystemKind::RamachandranLangevin; }
    double parameter(const std::string& name) const;

    /// Throws InvalidArgument when dt, the parameter set or the integrator do
    /// not fit the kind.
    void validate() const;

    static SystemSpec toy2d(double dt = 0.2, double a = 0.4, double b = 1.0);
    static SystemSpec duffing(double dt = 0.1, double delta = 0.3, double gamma = 1.0,
                              double beta = 1.0);
    static SystemSpec van_der_pol(double dt = 0.1, double mu = 1.1);
    static SystemSpec lorenz(double dt = 0.001, double sigma = 10.0, double rho = 28.0,
                             double beta = 8.0 / 3.0);
    /// Three-well landscape: centres (-1,-1), (-1,1.2), (1.1,-0.3); depths
    /// -6, -6, -4; widths 0.55, 0.55, 0.65; beta_temp = 1; dt = 0.005.
    static SystemSpec ramachandran(double dt = 0.005, double beta_temp = 1.0);
    static SystemSpec explicit_matrix(const Matrix& a);
};

/// Angle wrapped to [-pi, pi).
double wrap_angle(double a);
/// Geodesic distance on the circle: min(|a-b|, 2pi - |a-b|).
double circle_distance(double a, double b);

struct PotentialValue {
    double value;
    std::array<double, 2> gradient;
};

/// Three-well torus potential with analytic gradient.
PotentialValue ramachandran_potential(const SystemSpec& spec, double phi, double psi);
/// Same landscape with the default parameters.
PotentialValue ramachandran_potential(double phi, double psi);

/// One step of the discrete flow. Stochastic systems need `noise` to hold dim()
/// standard normal draws; deterministic systems ignore it.
Vector flow_map(const SystemSpec& spec, const Vector& x, std::span<const double> noise = {});

/// Axis-aligned sampling region.
struct Box {
    Vector lower;
    Vector upper;
    static Box square(double lo, double hi, Index dim = 2);
};

struct Sampling {
    enum class Kind { IidUniform, Trajectory };
    Kind kind = Kind::IidUniform;
    Box box;
    Index burn_in = 0;
    Index stride = 1;
};

/// Paired samples (x_i, y_i = F(x_i)).
struct SnapshotSet {
    SystemSpec spec;
    Matrix x;
    Matrix y;
    Sampling sampling;
    std::uint64_t seed = 0;

    Index dim() const { return x.cols(); }
    Index size() const { return x.rows(); }
};

/// i.i.d. uniform samples on `box`; sample i is drawn from its own counter
/// stream so the result does not depend on `threads`.
SnapshotSet sample_iid(const SystemSpec& spec, const Box& box, Index count, std::uint64_t seed,
                       unsigned threads = 1);

/// States x_0, ..., x_{total_steps-1} starting from x0. Step k of a stochastic
/// system uses the noise stream (seed, k).
Matrix simulate(const SystemSpec& spec, const Vector& x0, Index total_steps, std::uint64_t seed);

/// Consecutive pairs of a simulated trajectory after discarding `burn_in`
/// states: total_steps - burn_in - 1 pairs.
SnapshotSet sample_trajectory(const SystemSpec& spec, const Vector& x0, Index total_steps,
                              Index burn_in, std::uint64_t seed);

/// Splits a trajectory (rows = consecutive states) into pairs.
SnapshotSet pairs_from_trajectory(const SystemSpec& spec, const Matrix& states, Index burn_in,
                                  std::uint64_t seed);

}  // namespace koopman
