#include <doctest.h>

#include <cmath>
#include <limits>

#include "generators.hpp"
#include "koopman/io.hpp"
#include "koopman/pipeline.hpp"

using namespace koopman;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("koopman_test_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("doubles round-trip at 17 digits") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
        CHECK(io::parse_double(io::format_double(v)) == v);
    }
    CHECK(io::parse_double(io::format_double(0.1)) == 0.1);
    CHECK(std::isnan(io::parse_double(io::format_double(std::numeric_limits<double>::quiet_NaN()))));
    CHECK(io::parse_double(io::format_double(-std::numeric_limits<double>::infinity())) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("matrix CSV round trip with quoted names") {
    Rng rng(2);
    const Matrix m = gen::gaussian(rng, 4, 3);
    const std::vector<std::string> names = {"delay(x,0)", "plain", "say \"hi\""};
    const std::string text = io::matrix_csv(m, names);
    CHECK(text.rfind("\"delay(x,0)\",plain,\"say \"\"hi\"\"\"\n", 0) == 0);
    std::vector<std::string> header;
    const Matrix back = io::parse_matrix_csv(text, &header);
    CHECK(header == names);
    CHECK(back == m);

    const Matrix bare = io::parse_matrix_csv(io::matrix_csv(m));
    CHECK(bare == m);
}

TEST_CASE("hashes") {
    CHECK(io::fnv1a64("") == "cbf29ce484222325");
    CHECK(io::fnv1a64("a") == "af63dc4c8601ec8c");
    const auto d = build_monomials_2d(3);
    CHECK(io::manifest_hash(d) == io::manifest_hash(build_monomials_2d(3)));
    CHECK(io::manifest_hash(d) != io::manifest_hash(build_monomials_2d(2)));
    const auto man = io::dictionary_manifest(d);
    CHECK(man["observables"].size() == 9);
    CHECK(man["observables"][3]["name"] == "x1*x2");
    CHECK(man["builder"] == "monomials");
}

TEST_CASE("snapshot and Koopman files round trip") {
    const auto dir = scratch("files");
    const auto s = sample_iid(SystemSpec::duffing(), Box::square(-2, 2), 50, 3);
    io::write_snapshots(dir / "snap", s);
    const auto back = io::read_snapshots(dir / "snap");
    CHECK(back.x == s.x);
    CHECK(back.y == s.y);
    CHECK(back.seed == 3);
    CHECK(back.spec.kind == SystemKind::Duffing);
    CHECK(back.spec.dt == s.spec.dt);

    const auto d = build_delay_embedding(2, 2, 1);
    Rng rng(4);
    KoopmanMatrix k{gen::gaussian(rng, 4, 4), d.names(), Index{2}, 0.125};
    io::write_koopman(dir / "k", k, io::manifest_hash(d));
    const auto kb = io::read_koopman(dir / "k");
    CHECK(kb.k == k.k);
    CHECK(kb.names == k.names);
    CHECK(kb.split == k.split);
    CHECK(kb.residual == 0.125);

    const auto hash = io::hash_file(dir / "k.csv");
    io::write_koopman(dir / "k", k, io::manifest_hash(d));
    CHECK(io::hash_file(dir / "k.csv") == hash);
    fs::remove_all(dir);
}

TEST_CASE("system spec JSON round trip") {
    for (const auto& spec : {SystemSpec::toy2d(), SystemSpec::duffing(), SystemSpec::van_der_pol(),
                             SystemSpec::lorenz(), SystemSpec::ramachandran()}) {
        const auto back = io::system_from_json(io::to_json(spec));
        CHECK(back.kind == spec.kind);
        CHECK(back.dt == spec.dt);
        CHECK(back.parameters == spec.parameters);
        CHECK(back.integrator == spec.integrator);
    }
}

TEST_CASE("experiment config JSON") {
    const auto presets = fs::path(KOOPMAN_PRESETS_DIR);
    for (const auto& entry : fs::directory_iterator(presets)) {
        const auto c = load_preset(entry.path().string(), presets);
        CHECK_NOTHROW(c.validate());
        const auto again = config_from_json(to_json(c));
        CHECK(to_json(again).dump() == to_json(c).dump());
    }
    CHECK(load_preset("toy", presets).m == 100);

    auto j = io::read_json(presets / "toy.json");
    j["replicatez"] = 3;
    CHECK_THROWS_AS(config_from_json(j), InvalidArgument);
    j = io::read_json(presets / "toy.json");
    j["sampling"]["mm"] = 3;
    CHECK_THROWS_AS(config_from_json(j), InvalidArgument);
    CHECK_THROWS_AS(load_preset("no-such-preset", presets), Error);
}

TEST_CASE("window CSV") {
    WindowPoint p;
    p.epsilon = 0.05;
    p.alpha_star_pr = 0.6;
    p.alpha_star_ppr = 2.0 / 3;
    const std::string csv = io::window_csv({p});
    CHECK(csv.rfind("epsilon,alpha_star_pr,alpha_star_ppr,alpha_star_pr_closed,alpha_star_ppr_closed,"
                    "alpha_star_pr_mixing\n",
                    0) == 0);
    std::vector<std::string> header;
    const Matrix m = io::parse_matrix_csv(csv, &header);
    CHECK(m(0, 0) == 0.05);
    CHECK(m(0, 2) == 2.0 / 3);
}

TEST_CASE("run manifest") {
    const auto dir = scratch("manifest");
    io::write_text(dir / "sub" / "a.txt", "hello");
    io::RunManifest m;
    m.command = "test";
    m.seeds = {7};
    m.add(dir, dir / "sub" / "a.txt");
    const auto j = m.to_json();
    CHECK(j["files"][0]["path"] == "sub/a.txt");
    CHECK(j["files"][0]["fnv1a64"] == io::fnv1a64("hello"));
    CHECK(j["seeds"][0] == 7);
    fs::remove_all(dir);
}
