#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cdp/patterns.hpp"
#include "cdp/png_io.hpp"
#include "cdp/rng.hpp"

using namespace cdp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path d = fs::temp_directory_path() / "cdp_test_patterns";
    fs::create_directories(d);
    return d;
}

BinaryTemplate make_manual(int n, int m, std::vector<std::uint8_t> bits) {
    BinaryTemplate t;
    t.n = n;
    t.m = m;
    t.bits = std::move(bits);
    return t;
}

}  // namespace

TEST_CASE("generated template matches the requested density") {
    BinaryTemplate t = generate_template(228, 228, 0.50, 42);
    CHECK(t.n == 228);
    CHECK(t.m == 228);
    CHECK(measure_density(t) == doctest::Approx(0.50).epsilon(0.02));
    CHECK(std::abs(measure_density(t) - 0.50) < 0.01);
    for (auto b : t.bits) CHECK((b == 0 || b == 1));
}

TEST_CASE("generation is deterministic in the seed") {
    BinaryTemplate a = generate_template(16, 16, 0.5, 1234);
    BinaryTemplate b = generate_template(16, 16, 0.5, 1234);
    CHECK(a.bits == b.bits);
    BinaryTemplate c = generate_template(16, 16, 0.5, 1235);
    CHECK(a.bits != c.bits);
}

TEST_CASE("realized density stays within the binomial tail bound") {
    // 64x64 at density 0.30: std ~ 0.0072, so +-0.05 is a ~7 sigma band
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        double d = measure_density(generate_template(64, 64, 0.30, seed));
        CHECK(d > 0.25);
        CHECK(d < 0.35);
    }
}

TEST_CASE("density parameter is validated") {
    CHECK_THROWS_AS(generate_template(32, 32, 0.0, 1), ParameterError);
    CHECK_THROWS_AS(generate_template(32, 32, 1.0, 1), ParameterError);
    CHECK_THROWS_AS(generate_template(32, 32, -0.2, 1), ParameterError);
    CHECK_THROWS_AS(generate_template(8, 32, 0.5, 1), ParameterError);
}

TEST_CASE("measure_density counts black pixels") {
    CHECK(measure_density(make_manual(2, 2, {1, 1, 1, 1})) == 0.0);
    CHECK(measure_density(make_manual(2, 2, {0, 0, 0, 0})) == 1.0);
    CHECK(measure_density(make_manual(2, 2, {0, 1, 1, 0})) == 0.5);
}

TEST_CASE("template png round trip") {
    fs::path dir = temp_dir();
    BinaryTemplate t = generate_template(228, 228, 0.35, 7);
    t.id = 12;
    std::string path = (dir / "t.png").string();
    save_template(t, path);
    BinaryTemplate back = load_template(path);
    CHECK(back.bits == t.bits);
    CHECK(back.n == 228);
    CHECK(back.m == 228);
    CHECK(back.id == 12);
    CHECK(back.density == doctest::Approx(0.35).epsilon(0.01));
}

TEST_CASE("non-binary pixel values are a format error") {
    fs::path dir = temp_dir();
    std::string path = (dir / "bad.png").string();
    std::vector<std::uint8_t> gray(16 * 16, 0);
    gray[5] = 128;  // mid-gray
    png::write_gray8(path, 16, 16, gray);
    CHECK_THROWS_AS(load_template(path), FormatError);
}

TEST_CASE("missing template file is an error") {
    CHECK_THROWS_AS(load_template("/nonexistent/nope.png"), FormatError);
}

TEST_CASE("manifest round trip and role partition") {
    fs::path dir = temp_dir();
    BinaryTemplate t0 = generate_template(16, 16, 0.5, 1);
    BinaryTemplate t1 = generate_template(16, 16, 0.5, 2);
    save_template(t0, (dir / "m0.png").string());
    save_template(t1, (dir / "m1.png").string());

    DatasetManifest m;
    m.entries.push_back({0, 0.5, "m0.png", {}, "attack-train"});
    m.entries.push_back({1, 0.5, "m1.png", {}, "auth-test"});
    std::string path = (dir / "manifest.json").string();
    save_manifest(m, path);
    DatasetManifest back = load_manifest(path);
    CHECK(back.entries.size() == 2);
    CHECK(back.find(1, 0.5) != nullptr);
    CHECK(back.find(1, 0.5)->role == "auth-test");

    SUBCASE("duplicate role assignment rejected") {
        m.entries.push_back({0, 0.5, "m0.png", {}, "auth-test"});
        save_manifest(m, path);
        CHECK_THROWS_AS(load_manifest(path), FormatError);
    }
    SUBCASE("missing referenced file rejected") {
        m.entries.push_back({2, 0.5, "gone.png", {}, "auth-test"});
        save_manifest(m, path);
        CHECK_THROWS_AS(load_manifest(path), FormatError);
    }
}

TEST_CASE("neighboring bits are uncorrelated across seeds") {
    // pooled horizontal-neighbor correlation over 1000 seeded 16x16 patterns
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        BinaryTemplate t = generate_template(16, 16, 0.5, hash2(99, seed));
        for (int i = 0; i < t.n; ++i) {
            for (int j = 0; j + 1 < t.m; ++j) {
                double a = t.at(i, j), b = t.at(i, j + 1);
                sx += a;
                sy += b;
                sxx += a * a;
                syy += b * b;
                sxy += a * b;
                n += 1;
            }
        }
    }
    double cov = sxy / n - (sx / n) * (sy / n);
    double va = sxx / n - (sx / n) * (sx / n);
    double vb = syy / n - (sy / n) * (sy / n);
    double r = cov / std::sqrt(va * vb);
    CHECK(std::abs(r) < 0.05);
}

TEST_CASE("realized density converges with size") {
    for (double density : {0.3, 0.5}) {
        BinaryTemplate t = generate_template(512, 512, density, 5);
        CHECK(measure_density(t) == doctest::Approx(density).epsilon(0.01 / density));
        CHECK(std::abs(measure_density(t) - density) < 0.01);
    }
}
