#include <doctest.h>

#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "koopman/pipeline.hpp"

using namespace koopman;
namespace fs = std::filesystem;

namespace {

struct ToyFixture {
    Dictionary d9 = build_monomials_2d(3);
    Matrix px, py;
    KoopmanMatrix k;

    explicit ToyFixture(std::uint64_t seed = 0) {
        const auto s = sample_iid(SystemSpec::toy2d(), Box::square(-2, 2), 100, seed);
        px = evaluate(d9, s.x);
        py = evaluate(d9, s.y);
        k = edmd(px, py, RankPolicy::Strict, d9.names());
    }
};

std::vector<std::vector<Index>> combinations(Index n, Index r) {
    std::vector<std::vector<Index>> out;
    std::vector<Index> cur;
    auto rec = [&](auto&& self, Index start) -> void {
        if (static_cast<Index>(cur.size()) == r) {
            out.push_back(cur);
            return;
        }
        for (Index i = start; i < n; ++i) {
            cur.push_back(i);
            self(self, i + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
    return out;
}

double leak_of_subset(const Matrix& k, const std::vector<Index>& subset) {
    std::vector<Index> perm = subset;
    for (Index i = 0; i < k.rows(); ++i)
        if (std::find(subset.begin(), subset.end(), i) == subset.end()) perm.push_back(i);
    KoopmanMatrix km{k, {}, std::nullopt, 0.0};
    return offdiag_frobenius(permute(km, perm).k, static_cast<Index>(subset.size()));
}

std::string slurp(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST_CASE("selection recovers the invariant subspace of the toy model") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ToyFixture t(seed);
        const auto sel = select(t.k, t.px, t.py, 3, 0.85, {"x1", "x2"});
        CHECK(sel.sub_dictionary == std::vector<std::string>{"x1", "x2", "x1^2"});
        CHECK(sel.indices == std::vector<Index>{0, 1, 2});
        Matrix k3(3, 3);
        k3 << 0.92, 0, 0, 0, 0.8, 0, 0, 0.2, 0.8464;
        CHECK((sel.k_sub.k - k3).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(sel.certificate_available);
        CHECK(sel.gap_report.p12_inf <= 1e-10);
        CHECK(sel.gap_report.ppr_condition);

        // no other 3-subset leaks less
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : combinations(9, 3)) best = std::min(best, leak_of_subset(t.k.k, c));
        CHECK(leak_of_subset(t.k.k, sel.indices) <= best + 1e-10);
    }
}

TEST_CASE("selection edge cases") {
    ToyFixture t;
    const auto all = select(t.k, t.px, t.py, 9, 0.85, {"x1"});
    CHECK(all.k_sub.k == t.k.k);
    CHECK(all.indices.size() == 9);

    const auto pr = select(t.k, t.px, t.py, 4, 0.85, {});
    const auto plain = pagerank(transition_matrix(t.k), 0.85);
    std::vector<Index> top(plain.ranking.begin(), plain.ranking.begin() + 4);
    std::sort(top.begin(), top.end());
    CHECK(pr.indices == top);

    CHECK_THROWS_AS(select(t.k, t.px, t.py, 0, 0.85, {"x1"}), InvalidArgument);
    CHECK_THROWS_AS(select(t.k, t.px, t.py, 10, 0.85, {"x1"}), InvalidArgument);
    CHECK_THROWS_AS(select(t.k, t.px, t.py, 3, 0.85, {"x7"}), InvalidSeedSet);
    CHECK_THROWS_AS(select(t.k, t.px.leftCols(8), t.py, 3, 0.85, {"x1"}), InvalidArgument);
}

TEST_CASE("forced includes") {
    ToyFixture t;
    const Index x2_3 = t.d9.index_of("x2^3");
    const auto sel = select(t.k, t.px, t.py, 3, 0.85, {"x1", "x2"}, {x2_3});
    CHECK(std::find(sel.indices.begin(), sel.indices.end(), x2_3) != sel.indices.end());
    CHECK(sel.substituted == std::vector<Index>{x2_3});
    CHECK(sel.displaced.size() == 1);
    CHECK(sel.indices.size() == 3);
    // recomputed K fits at least as well as the sub-block of the full K
    const auto cols = sel.indices;
    Matrix sx(t.px.rows(), 3), sy(t.py.rows(), 3);
    for (Index j = 0; j < 3; ++j) {
        sx.col(j) = t.px.col(cols[j]);
        sy.col(j) = t.py.col(cols[j]);
    }
    Matrix sub(3, 3);
    for (Index a = 0; a < 3; ++a)
        for (Index b = 0; b < 3; ++b) sub(a, b) = t.k.k(cols[a], cols[b]);
    CHECK((sx * sel.k_sub.k - sy).norm() <= (sx * sub - sy).norm() + 1e-12);
    CHECK_THROWS_AS(select(t.k, t.px, t.py, 1, 0.85, {"x1"}, {3, 4}), InvalidArgument);
}

TEST_CASE("orderings") {
    ToyFixture t;
    OrderingContext ctx;
    ctx.k = &t.k;
    ctx.size = 9;
    ctx.seeds = {0, 1};

    const auto inc = ordering(OrderingMethod::Incremental, ctx);
    CHECK(inc == std::vector<Index>{0, 1, 2, 3, 4, 5, 6, 7, 8});

    ctx.seed = 5;
    const auto r1 = ordering(OrderingMethod::Random, ctx);
    CHECK(r1 == ordering(OrderingMethod::Random, ctx));
    auto sorted = r1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == inc);
    ctx.seed = 6;
    CHECK(ordering(OrderingMethod::Random, ctx) != r1);

    const auto ppr = ordering(OrderingMethod::Ppr, ctx);
    for (Index n = 1; n <= 9; ++n) {
        std::vector<Index> prefix(ppr.begin(), ppr.begin() + n);
        std::sort(prefix.begin(), prefix.end());
        CHECK(prefix == select(t.k, t.px, t.py, n, 0.85, {"x1", "x2"}).indices);
    }

    ctx.forced = {8, 4};
    for (auto m : {OrderingMethod::Ppr, OrderingMethod::Pr, OrderingMethod::Random, OrderingMethod::Incremental}) {
        const auto o = ordering(m, ctx);
        CHECK(o.size() == 9);
        CHECK(o[0] == 8);
        CHECK(o[1] == 4);
    }
    CHECK(ordering_from_string(to_string(OrderingMethod::Incremental)) == OrderingMethod::Incremental);
    CHECK_THROWS_AS(ordering_from_string("greedy"), InvalidArgument);
}

TEST_CASE("pseudo-eigenfunction of a rotation") {
    const double theta = 0.3, dt = 0.1;
    Matrix k(2, 2);
    k << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
    Rng rng(3);
    const Matrix psi = gen::gaussian(rng, 20, 2);
    const auto pe = pseudo_eigenfunction(k, psi, theta / dt, dt);
    CHECK(std::abs(pe.eigenvalue - std::polar(1.0, theta)) <= 1e-12);
    CHECK(pe.omega == doctest::Approx(theta / dt).epsilon(1e-12));
    CHECK(pe.values.size() == 20);
    const auto neg = pseudo_eigenfunction(k, psi, -theta / dt, dt);
    CHECK(std::abs(neg.eigenvalue - std::polar(1.0, -theta)) <= 1e-12);

    Matrix k3 = Matrix::Zero(3, 3);
    k3.topLeftCorner(2, 2) = k;
    k3(2, 2) = 0.5;
    const auto real = pseudo_eigenfunction(k3, gen::gaussian(rng, 5, 3), 0.0, dt);
    CHECK(real.eigenvalue.real() == doctest::Approx(0.5));
    CHECK(real.omega == 0.0);
}

TEST_CASE("experiment runs are deterministic and thread independent") {
    auto c = load_preset("toy", KOOPMAN_PRESETS_DIR);
    c.replicates = 3;
    c.horizon = 5;
    const fs::path a = fs::temp_directory_path() / "koopman_test_pipeline_a";
    const fs::path b = fs::temp_directory_path() / "koopman_test_pipeline_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const auto ra = run_experiment(c, a, 1);
    const auto rb = run_experiment(c, b, 3);
    REQUIRE(ra.files.size() == rb.files.size());
    for (std::size_t i = 0; i < ra.files.size(); ++i) {
        CHECK(fs::relative(ra.files[i], a) == fs::relative(rb.files[i], b));
        CHECK(slurp(ra.files[i]) == slurp(rb.files[i]));
    }
    for (const auto& r : ra.replicates) {
        REQUIRE(r.block.has_value());
        CHECK(r.block->structural_zero);
        CHECK(r.block->rows == 6);
        CHECK(r.block->cols == 3);
        // the PPR ordering at N=3 predicts exactly
        for (double e : r.errors.at(OrderingMethod::Ppr)[0]) CHECK(e <= 1e-10);
    }
    CHECK(ra.curves.size() == rb.curves.size());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("window experiment") {
    auto c = load_preset("example-a", KOOPMAN_PRESETS_DIR);
    const auto r = run_experiment(c);
    REQUIRE(!r.window.empty());
    for (const auto& w : r.window) {
        CHECK(std::abs(w.alpha_star_ppr - w.alpha_star_ppr_closed) <= 1e-6);
        CHECK(std::abs(w.alpha_star_pr - w.alpha_star_pr_closed) <= 1e-6);
    }
}
