#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/systems.hpp"

using namespace koopman;

namespace {

Matrix toy_k3() {
    Matrix k(3, 3);
    k << 0.92, 0, 0, 0, 0.8, 0, 0, 0.2, 0.8464;
    return k;
}

struct ToyData {
    Matrix px, py;
};

ToyData toy(const Dictionary& d, Index m, std::uint64_t seed) {
    const auto s = sample_iid(SystemSpec::toy2d(), Box::square(-2, 2), m, seed);
    return {evaluate(d, s.x), evaluate(d, s.y)};
}

// relabelling {x1, x1x2, x1^3, x2, x1^2, x2^2, x1^2x2, x1x2^2, x2^3}
const std::vector<Index> kBlockPerm = {0, 3, 5, 1, 2, 4, 6, 7, 8};

}  // namespace

TEST_CASE("toy D3 reproduces the analytic matrix") {
    const auto d3 = build_monomials_2d(2).subset({0, 1, 2});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = toy(d3, 100, seed);
        const auto k = edmd(t.px, t.py);
        CHECK((k.k - toy_k3()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(k.residual <= 1e-10);
    }
}

TEST_CASE("zero-block theorem on D9") {
    const auto d9 = build_monomials_2d(3);
    for (Index m : {50, 100, 500}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto t = toy(d9, m, seed);
            const auto k = edmd(t.px, t.py, RankPolicy::Strict, d9.names());
            CHECK(offdiag_frobenius(k.k, 3) <= 1e-10);
            // top-left block equals EDMD on the sub-dictionary alone
            const auto sub = edmd(t.px.leftCols(3), t.py.leftCols(3));
            CHECK((block(k.k, 3).k11 - sub.k).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("permutation exposes both invariant blocks") {
    const auto d9 = build_monomials_2d(3);
    const auto t = toy(d9, 100, 0);
    const auto k = edmd(t.px, t.py, RankPolicy::Strict, d9.names());
    const auto p = permute(k, kBlockPerm);
    CHECK(p.names[1] == "x1*x2");
    CHECK(p.names[2] == "x1^3");
    CHECK(offdiag_frobenius(p.k, 3) <= 1e-10);
    CHECK(offdiag_frobenius(p.k, 5) <= 1e-10);
    // the columns of the invariant sub-dictionary are data independent
    CHECK(p.k(1, 1) == doctest::Approx(0.736).epsilon(1e-10));
    CHECK(p.k(2, 1) == doctest::Approx(0.184).epsilon(1e-10));
    CHECK(p.k(2, 2) == doctest::Approx(0.778688).epsilon(1e-10));
    CHECK(p.k(4, 3) == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(p.k(4, 4) == doctest::Approx(0.8464).epsilon(1e-10));
}

TEST_CASE("explicit linear map gives the transpose") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix a = gen::gaussian(rng, 4, 4) / 2.0;
        const auto spec = SystemSpec::explicit_matrix(a);
        const auto s = sample_iid(spec, Box::square(-1, 1, 4), 20, trial);
        const auto id = build_identity(4);
        const auto k = edmd(evaluate(id, s.x), evaluate(id, s.y));
        CHECK((k.k - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    }
    const auto s = sample_iid(SystemSpec::explicit_matrix(Matrix::Identity(2, 2)), Box::square(-1, 1), 30, 1);
    const auto d = build_monomials_2d(2);
    const auto k = edmd(evaluate(d, s.x), evaluate(d, s.y));
    CHECK((k.k - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rank deficiency is reported") {
    const auto d = build_monomials_2d(3);
    const auto t = toy(d, 5, 0);
    CHECK_THROWS_AS(edmd(t.px, t.py), RankDeficient);
    const auto k = edmd(t.px, t.py, RankPolicy::MinimumNorm);
    CHECK(k.k.allFinite());
}

TEST_CASE("blocks and views") {
    Rng rng(3);
    const Matrix k = gen::gaussian(rng, 6, 6);
    CHECK(offdiag_frobenius(k, 1) == doctest::Approx(k.col(0).tail(5).norm()));
    const auto b = block(k, 2);
    CHECK(b.k11.rows() == 2);
    CHECK(b.k12.cols() == 4);
    CHECK(b.k21.rows() == 4);
    CHECK(b.k22(0, 0) == k(2, 2));
    CHECK_THROWS_AS(block(k, 0), InvalidSplit);
    CHECK_THROWS_AS(block(k, 6), InvalidSplit);
}

TEST_CASE("permutations") {
    Rng rng(4);
    KoopmanMatrix k{gen::gaussian(rng, 5, 5), {"a", "b", "c", "d", "e"}, std::nullopt, 0.0};
    const std::vector<Index> id = {0, 1, 2, 3, 4};
    CHECK(permute(k, id).k == k.k);
    for (int t = 0; t < 10; ++t) {
        std::vector<Index> perm = id;
        rng.shuffle(perm);
        const auto p = permute(k, perm);
        for (Index a = 0; a < 5; ++a) {
            CHECK(p.names[a] == k.names[perm[a]]);
            for (Index b = 0; b < 5; ++b) CHECK(p.k(a, b) == k.k(perm[a], perm[b]));
        }
        const auto back = permute(p, inverse_permutation(perm));
        CHECK(back.k == k.k);
        CHECK(back.names == k.names);
    }
    CHECK_THROWS_AS(permute(k, {0, 1, 1, 3, 4}), InvalidPermutation);
    CHECK_THROWS_AS(permute(k, {0, 1, 2}), InvalidPermutation);
}

TEST_CASE("zeroing and leakage") {
    Rng rng(5);
    const Matrix z = gen::zero_block(rng, 6, 2);
    KoopmanMatrix kz{z, {}, std::nullopt, 0.0};
    CHECK(zero_bottom_left(kz, 2).k == z);
    CHECK(leakage_eps0(z, 2) == 0.0);

    const Matrix k = gen::gaussian(rng, 6, 6);
    const auto k0 = zero_bottom_left(KoopmanMatrix{k, {}, std::nullopt, 0.0}, 2);
    CHECK(*k0.split == 2);
    // eps0 = ||(K0 - K)^T||_inf = max_{i<=N} sum_{j>N} |K^T[i,j]|
    CHECK(leakage_eps0(k, 2) == doctest::Approx(inf_norm((k0.k - k).transpose())));
    double direct = 0;
    for (Index i = 0; i < 2; ++i) direct = std::max(direct, k.col(i).tail(4).cwiseAbs().sum());
    CHECK(leakage_eps0(k, 2) == doctest::Approx(direct));

    const auto d9 = build_monomials_2d(3);
    const auto t = toy(d9, 100, 2);
    const auto k9 = edmd(t.px, t.py);
    CHECK((zero_bottom_left(k9, 3).k - k9.k).cwiseAbs().maxCoeff() <= 1e-10);
    const auto rep = block_report(k9.k, 3);
    CHECK(rep.rows == 6);
    CHECK(rep.cols == 3);
    CHECK(rep.structural_zero);
    CHECK(rep.threshold == doctest::Approx(1e-10 * k9.k.norm()));
}

TEST_CASE("finite-sample constants") {
    FiniteSampleParams p;
    p.n_tilde = 2;
    p.bound_d = 1;
    p.lambda_min = 1;
    p.gram_norm2 = 1;
    p.rho = 0.05;
    p.r0_min = 1;
    p.r_max = 1;
    const auto e = finite_sample_epsilon(p, 100);
    CHECK(e.c_edmd == doctest::Approx(16 * std::sqrt(2.0)).epsilon(1e-14));
    CHECK(e.eps_m == doctest::Approx(e.c_edmd * std::sqrt(2 * std::log(2 * 2 / 0.05) / 100)));
    CHECK(e.m_min == doctest::Approx(32 * 4 * std::log(80.0)));
    CHECK(finite_sample_epsilon(p, 400).eps_m == doctest::Approx(e.eps_m / 2).epsilon(1e-15));

    // end-to-end bound vanishes with eps0 = 0 and M -> infinity
    CHECK(end_to_end_bound(p, 0.5, 1e300) <= 1e-140);
    CHECK(end_to_end_bound(p, 0.5, 100) == doctest::Approx(2 * 0.5 * e.eps_m / 0.5));

    // PR at 0.85 versus PPR at 1/2: prefactor (alpha/(1-alpha))^2
    p.lambda_min = 0.01;
    const double ppr = ppr_sample_complexity(p, 0.1, 0.0);
    const double pr = sample_complexity(p, 0.85, 0.1, 0.0);
    CHECK(pr / ppr == doctest::Approx(std::pow(0.85 / 0.15, 2)).epsilon(1e-12));
    CHECK(std::isinf(sample_complexity(p, 0.5, 0.1, 1.0)));
    CHECK(std::isinf(sample_complexity(p, 0.5, -0.1, 0.0)));

    p.rho = 0.5;
    CHECK_THROWS_AS(finite_sample_epsilon(p, 10), InvalidProbability);
    p.rho = 0;
    CHECK_THROWS_AS(finite_sample_epsilon(p, 10), InvalidProbability);
}

TEST_CASE("estimated finite-sample parameters") {
    const auto d9 = build_monomials_2d(3);
    const auto t = toy(d9, 100, 0);
    const auto k = edmd(t.px, t.py);
    const auto p = estimate_finite_sample_params(t.px, k.k, 3, 8.0, 0.05);
    CHECK(p.n_tilde == 9);
    CHECK(p.eps0 <= 1e-10);
    CHECK(p.lambda_min > 1e-8);
    CHECK(p.r_max == doctest::Approx(inf_norm(k.k.transpose())));
}

TEST_CASE("prediction error") {
    const auto d3 = build_monomials_2d(2).subset({0, 1, 2});
    const auto spec = SystemSpec::toy2d();
    const auto s = sample_iid(spec, Box::square(-2, 2), 200, 8);
    const Matrix px = evaluate(d3, s.x);
    std::vector<Matrix> future;
    Matrix x = s.x;
    for (int h = 0; h < 20; ++h) {
        for (Index i = 0; i < x.rows(); ++i) x.row(i) = flow_map(spec, x.row(i).transpose()).transpose();
        future.push_back(evaluate(d3, x));
    }
    const auto e = prediction_error(toy_k3(), px, future, {0, 1});
    REQUIRE(e.size() == 20);
    for (double v : e) CHECK(v <= 1e-10);

    // one step equals the residual on the target columns
    Rng rng(9);
    const Matrix kr = toy_k3() + 0.01 * gen::gaussian(rng, 3, 3);
    const auto one = prediction_error(kr, px, {future[0]}, {0, 2});
    const Matrix r = px * kr - future[0];
    const double direct = std::sqrt((r.col(0).squaredNorm() + r.col(2).squaredNorm()) / 200.0);
    CHECK(one[0] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("heatmap rescale") {
    Matrix a(1, 3);
    a << 0, 100, -100;
    const Matrix r = heatmap_rescale(a);
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == doctest::Approx(1.0));
    CHECK(r(0, 2) == doctest::Approx(-1.0));
}
