#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "generators.hpp"
#include "koopman/numerics.hpp"

using namespace koopman;

TEST_CASE("least squares: identity design returns B") {
    Rng rng(3);
    const Matrix b = gen::gaussian(rng, 3, 2);
    const Matrix x = least_squares(Matrix::Identity(3, 3), b);
    CHECK((x - b).norm() == 0.0);
}

TEST_CASE("least squares: one column gives the mean") {
    Matrix a(2, 1), b(2, 1);
    a << 1, 1;
    b << 1, 3;
    const Matrix x = least_squares(a, b);
    CHECK(x(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("least squares: recovers a planted solution") {
    Rng rng(11);
    const Matrix a = gen::gaussian(rng, 50, 5);
    const Matrix x0 = gen::gaussian(rng, 5, 3);
    const Matrix x = least_squares(a, a * x0);
    CHECK((x - x0).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("least squares: rank deficiency") {
    Rng rng(5);
    Matrix a = gen::gaussian(rng, 20, 4);
    a.col(3) = a.col(0) + 2 * a.col(1);
    const Matrix b = gen::gaussian(rng, 20, 2);

    SUBCASE("strict policy reports the rank") {
        try {
            (void)least_squares(a, b);
            FAIL("expected RankDeficient");
        } catch (const RankDeficient& e) {
            CHECK(e.rank() == 3);
            CHECK(e.kind() == "RankDeficient");
        }
    }
    SUBCASE("minimum norm matches the pseudo-inverse") {
        const Matrix x = least_squares(a, b, RankPolicy::MinimumNorm);
        // independent oracle: pseudo-inverse from a thin SVD
        Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vector inv = svd.singularValues();
        for (Index i = 0; i < inv.size(); ++i) inv(i) = inv(i) > 1e-10 * inv(0) ? 1 / inv(i) : 0;
        const Matrix pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
        CHECK((x - pinv * b).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("mismatched rows") {
        CHECK_THROWS_AS((void)least_squares(a, Matrix::Zero(3, 1)), InvalidArgument);
    }
}

TEST_CASE("resolvent: zero damping returns the preference") {
    Rng rng(1);
    const Matrix q = gen::stochastic(rng, 4);
    RowVector s(4);
    s << 0.1, 0.2, 0.3, 0.4;
    CHECK((solve_row_resolvent(s, q, 0.0) - s).norm() == 0.0);
}

TEST_CASE("resolvent: swap matrix") {
    Matrix q(2, 2);
    q << 0, 1, 1, 0;
    RowVector s(2);
    s << 1, 0;
    const RowVector pi = solve_row_resolvent(s, q, 0.5);
    CHECK(pi(0) == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(pi(1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
    // (I - alpha Q)^{-1} = 1/(1 - alpha^2) [[1, alpha], [alpha, 1]]
    const Matrix r = resolvent(q, 0.5);
    CHECK(r(0, 0) == doctest::Approx(4.0 / 3));
    CHECK(r(0, 1) == doctest::Approx(2.0 / 3));
}

TEST_CASE("resolvent: Neumann series oracle on random chains") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed, 7);
        const Matrix q = gen::stochastic(rng, 6, 0.3);
        const double alpha = 0.85;
        const RowVector s = RowVector::Constant(6, 1.0 / 6);
        RowVector term = s, sum = s;
        double power = 1;
        while (power >= 1e-14) {
            term = alpha * term * q;
            sum += term;
            power *= alpha;
        }
        const RowVector oracle = (1 - alpha) * sum;
        CHECK((solve_row_resolvent(s, q, alpha) - oracle).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("resolvent: rejects invalid inputs") {
    const Matrix q = Matrix::Constant(2, 2, 0.5);
    const RowVector s = RowVector::Constant(2, 0.5);
    CHECK_THROWS_AS(solve_row_resolvent(s, q, 1.0), InvalidArgument);
    CHECK_THROWS_AS(solve_row_resolvent(s, Matrix::Constant(2, 2, 0.9), 0.5), InvalidArgument);
    CHECK_THROWS_AS(solve_row_resolvent(RowVector::Ones(3), q, 0.5), InvalidArgument);
}

TEST_CASE("norms") {
    Matrix a(2, 2);
    a << 1, -2, 0, 3;
    CHECK(inf_norm(a) == 3.0);
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(14.0)));
    CHECK(min_abs_row_sum(a) == 3.0);

    const Matrix z = Matrix::Zero(3, 3);
    CHECK(inf_norm(z) == 0.0);
    CHECK(frobenius_norm(z) == 0.0);
    CHECK(min_abs_row_sum(z) == 0.0);

    Rng rng(2);
    CHECK(inf_norm(gen::stochastic(rng, 5)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("eig: known spectra") {
    const Matrix d = Vector((Vector(3) << 3, 1, 2).finished()).asDiagonal();
    const auto pairs = eig(d);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].value.real() == doctest::Approx(3));
    CHECK(pairs[1].value.real() == doctest::Approx(2));
    CHECK(pairs[2].value.real() == doctest::Approx(1));

    Matrix s(2, 2);
    s << 2, 1, 1, 2;
    const auto sp = eig(s);
    CHECK(sp[0].value.real() == doctest::Approx(3));
    CHECK(sp[1].value.real() == doctest::Approx(1));
    const auto sym = symmetric_spectrum(s);
    CHECK(sym.min_abs == doctest::Approx(1));
    CHECK(sym.norm2 == doctest::Approx(3));
}

TEST_CASE("eig: residual oracle on random matrices") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed, 8);
        const Matrix a = gen::gaussian(rng, 8, 8);
        const auto pairs = eig(a);
        REQUIRE(pairs.size() == 8);
        const Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
        for (const auto& p : pairs) {
            CHECK(std::abs(p.vector.norm() - 1) <= 1e-12);
            CHECK((ac * p.vector - p.value * p.vector).norm() <= 1e-8);
        }
        for (std::size_t i = 1; i < pairs.size(); ++i) {
            CHECK(std::abs(pairs[i - 1].value) >= std::abs(pairs[i].value) - 1e-12);
        }
    }
}

TEST_CASE("eig: larger matrices converge") {
    Rng rng(4);
    const Matrix a = gen::gaussian(rng, 60, 60);
    CHECK(eig(a).size() == 60);
    CHECK_THROWS_AS(eig(Matrix::Zero(2, 3)), InvalidArgument);
}
