#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "generators.hpp"
#include "koopman/dictionary.hpp"
#include "koopman/systems.hpp"

using namespace koopman;

namespace {

// Laguerre oracle from the explicit sum L_n(t) = sum_k C(n,k) (-t)^k / k!.
double laguerre_sum(int n, double t) {
    double sum = 0, binom = 1, fact = 1, power = 1;
    for (int k = 0; k <= n; ++k) {
        if (k > 0) {
            binom *= static_cast<double>(n - k + 1) / k;
            fact *= k;
            power *= -t;
        }
        sum += binom * power / fact;
    }
    return sum;
}

}  // namespace

TEST_CASE("monomials") {
    const auto d9 = build_monomials_2d(3);
    const std::vector<std::string> expected = {"x1", "x2", "x1^2", "x1*x2", "x2^2",
                                               "x1^3", "x1^2*x2", "x1*x2^2", "x2^3"};
    CHECK(d9.names() == expected);
    CHECK(build_monomials_2d(1).names() == std::vector<std::string>{"x1", "x2"});
    for (int deg = 1; deg <= 8; ++deg) {
        CHECK(build_monomials_2d(deg).size() == (deg + 1) * (deg + 2) / 2 - 1);
        CHECK(build_monomials_2d(deg, true).size() == (deg + 1) * (deg + 2) / 2);
    }
    Matrix p(1, 2);
    p << 1, 2;
    const Matrix row = evaluate(d9, p);
    Matrix expected_row(1, 9);
    expected_row << 1, 2, 1, 2, 4, 1, 2, 4, 8;
    CHECK(row == expected_row);
}

TEST_CASE("Laguerre polynomials") {
    CHECK(laguerre(1, 0.0) == 1.0);
    CHECK(laguerre(0, 3.7) == 1.0);
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        const double t = rng.uniform(-2, 2);
        CHECK(std::abs(laguerre(5, t) - laguerre_sum(5, t)) <= 1e-10);
        for (int n = 1; n < 12; ++n) {
            const double lhs = (n + 1) * laguerre(n + 1, t);
            const double rhs = (2 * n + 1 - t) * laguerre(n, t) - n * laguerre(n - 1, t);
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
}

TEST_CASE("Laguerre dictionary") {
    const auto d = build_laguerre_2d(12);
    CHECK(d.size() == 90);
    CHECK(d[0].name == "L1(x)");
    CHECK(d[1].name == "L1(y)");
    CHECK(has_tag(d[0].tags, ObservableTag::StateCoordinate));
    Matrix p(2, 2);
    p << 0.3, -1.2, 1.5, 0.0;
    const Matrix v = evaluate(d, p);
    CHECK(v(0, 0) == doctest::Approx(0.7));
    CHECK(v(0, 1) == doctest::Approx(2.2));
    // product structure L_i(x) L_j(y)
    CHECK(v(0, d.index_of("L1(x)*L1(y)")) == doctest::Approx(0.7 * 2.2));
    CHECK(v(1, d.index_of("L2(x)*L1(y)")) == doctest::Approx(laguerre_sum(2, 1.5) * 1.0));
    const auto all = d.names();
    std::set<std::string> names(all.begin(), all.end());
    CHECK(names.size() == 90);
}

TEST_CASE("Ramachandran dictionary") {
    const auto d = build_ramachandran_dict();
    CHECK(d.size() == 236);
    std::map<std::string, int> groups;
    std::vector<std::string> order;
    for (const auto& o : d.observables) {
        if (groups[o.group]++ == 0) order.push_back(o.group);
    }
    CHECK(order == std::vector<std::string>{"coord", "fourier", "cross", "diagonal", "rbf"});
    CHECK(groups["coord"] == 4);
    CHECK(groups["fourier"] == 28);
    CHECK(groups["cross"] == 64);
    CHECK(groups["diagonal"] == 40);
    CHECK(groups["rbf"] == 100);
    for (Index i = 0; i < 4; ++i) CHECK(has_tag(d[i].tags, ObservableTag::SeedCandidate));

    Matrix origin = Matrix::Zero(1, 2);
    const Matrix v = evaluate(d, origin);
    CHECK(v(0, 0) == 0.0);
    CHECK(v(0, 1) == 1.0);
    CHECK(v(0, 2) == 0.0);
    CHECK(v(0, 3) == 1.0);

    // each RBF is 1 at its own centre: the 100 centres are found by the
    // argmax of each column over the cell-centre grid
    const double h = 2 * std::numbers::pi / 10;
    Matrix grid(100, 2);
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) grid.row(a * 10 + b) << -std::numbers::pi + (a + 0.5) * h, -std::numbers::pi + (b + 0.5) * h;
    const Matrix g = evaluate(d, grid);
    for (Index j = 136; j < 236; ++j) CHECK(g.col(j).maxCoeff() == doctest::Approx(1.0).epsilon(1e-14));

    // diagonal terms are distinct functions up to sign
    Rng rng(5);
    const Matrix w = evaluate(d, gen::uniform(rng, 300, 2, -3, 3));
    for (Index i = 96; i < 136; ++i)
        for (Index j = i + 1; j < 136; ++j)
            CHECK(std::min((w.col(i) - w.col(j)).norm(), (w.col(i) + w.col(j)).norm()) > 1e-6);
}

TEST_CASE("delay embedding") {
    CHECK(build_delay_embedding(3, 100, 100).size() == 300);
    const auto d = build_delay_embedding(3, 10, 10);
    CHECK(d.size() == 30);
    Rng rng(1);
    const Matrix traj = gen::gaussian(rng, 200, 3);
    const auto [px, py] = evaluate_delay(d, traj);
    const Index rows = 200 - 90 - 1;
    REQUIRE(px.rows() == rows);
    REQUIRE(py.rows() == rows);
    for (Index k = 0; k < 10; ++k)
        for (Index c = 0; c < 3; ++c) {
            // level k reads 10k steps before the current time t = r + 90
            CHECK(px.col(k * 3 + c) == traj.col(c).segment(90 - 10 * k, rows));
            CHECK(py.col(k * 3 + c) == traj.col(c).segment(91 - 10 * k, rows));
        }
    const auto one = build_delay_embedding(3, 1, 1);
    const auto [ix, iy] = evaluate_delay(one, traj);
    CHECK(ix == evaluate(build_identity(3), traj.topRows(199)));
    CHECK(iy == traj.bottomRows(199));
    CHECK_THROWS_AS(evaluate_delay(d, traj.topRows(91)), TrajectoryTooShort);
}

TEST_CASE("evaluation") {
    const auto d = build_monomials_2d(3);
    Rng rng(2);
    const Matrix pts = gen::uniform(rng, 1000, 2, -2, 2);
    const Matrix a = evaluate(d, pts);
    CHECK(a.rows() == 1000);
    CHECK(a.cols() == 9);
    CHECK(evaluate(d, pts) == a);
    CHECK(evaluate(d, pts, 3) == a);
    CHECK_THROWS_AS(evaluate(d, Matrix::Zero(3, 3)), InvalidArgument);
}

TEST_CASE("toy D9 is linearly independent on the data") {
    const auto s = sample_iid(SystemSpec::toy2d(), Box::square(-2, 2), 100, 0);
    const Matrix psi = evaluate(build_monomials_2d(3), s.x);
    const Matrix gram = psi.transpose() * psi / 100.0;
    CHECK(symmetric_spectrum(gram).min_abs > 1e-8);
}

TEST_CASE("lookup, subset, builder names") {
    const auto d = build_monomials_2d(2);
    CHECK(d.index_of("x1*x2") == 3);
    CHECK_THROWS_AS(d.index_of("x3"), InvalidArgument);
    const auto sub = d.subset({4, 0});
    CHECK(sub.names() == std::vector<std::string>{"x2^2", "x1"});
    CHECK(build_dictionary("laguerre", {{"order", 12}}).size() == 90);
    CHECK(build_dictionary("monomials", {{"degree", 3}}).names() == build_monomials_2d(3).names());
    CHECK(build_dictionary("delay", {{"dim", 3}, {"n_delay", 10}, {"stride", 10}}).size() == 30);
    CHECK_THROWS_AS(build_dictionary("wavelets", {}), InvalidArgument);
}

TEST_CASE("sup bound on a grid") {
    const auto d = build_monomials_2d(3);
    CHECK(sup_bound_on_grid(d, Vector::Constant(2, -2), Vector::Constant(2, 2), 21) == doctest::Approx(8.0));
}
