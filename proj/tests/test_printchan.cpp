#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <iostream>

#include "cdp/attack.hpp"
#include "cdp/patterns.hpp"
#include "cdp/printchan.hpp"
#include "cdp/rng.hpp"

using namespace cdp;

namespace {

BinaryTemplate checker(int n) {
    BinaryTemplate t;
    t.n = t.m = n;
    t.bits.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t.at(i, j) = (i + j) % 2;
    return t;
}

ChannelParams degenerate_channel(int pps) {
    ChannelParams p;
    p.pps = pps;
    p.psf_sigma = 1e-4;
    p.dot_gain = 0.0;
    p.gain = 1.0;
    p.offset = 0.0;
    p.noise_std = 0.0;
    p.seed = 3;
    return p;
}

}  // namespace

TEST_CASE("upsample replicates symbols") {
    BinaryTemplate t = checker(2);
    GrayImage img = upsample(t, 3);
    CHECK(img.h == 6);
    CHECK(img.w == 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            CHECK(img.at(y, x) == doctest::Approx(t.at(y / 3, x / 3)));
}

TEST_CASE("upsample at pps 1 is the identity scale") {
    BinaryTemplate t = generate_template(16, 16, 0.4, 11);
    GrayImage img = upsample(t, 1);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) CHECK(img.at(i, j) == doctest::Approx(t.at(i, j)));
}

TEST_CASE("attack-side resolution yields 8x8 pixels per symbol") {
    BinaryTemplate t = generate_template(228, 228, 0.5, 1);
    GrayImage img = upsample(t, 8);
    CHECK(img.h == 1824);
    CHECK(img.w == 1824);
}

TEST_CASE("degenerate channel approximates plain upsampling") {
    BinaryTemplate t = generate_template(32, 32, 0.5, 21);
    GrayImage ref = upsample(t, 4);
    GrayImage sim = simulate_print_scan(t, degenerate_channel(4));
    double max_diff = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k)
        max_diff = std::max(max_diff, std::abs(static_cast<double>(ref.px[k]) - sim.px[k]));
    CHECK(max_diff < 0.01);
}

TEST_CASE("all-white template maps to the tone-mapped constant") {
    BinaryTemplate t;
    t.n = t.m = 16;
    t.bits.assign(256, 1);
    ChannelParams p;
    p.pps = 4;
    p.psf_sigma = 0.6;
    p.dot_gain = 0.1;
    p.gain = 0.8;
    p.offset = 0.1;
    p.noise_std = 0.0;
    GrayImage sim = simulate_print_scan(t, p);
    for (auto v : sim.px) CHECK(v == doctest::Approx(0.9).epsilon(1e-5));
}

TEST_CASE("channel output is deterministic in (template, params)") {
    BinaryTemplate t = generate_template(24, 24, 0.4, 5);
    ChannelParams p = printer_preset("P55").base;
    p.pps = 4;
    p.seed = 77;
    GrayImage a = simulate_print_scan(t, p);
    GrayImage b = simulate_print_scan(t, p);
    CHECK(a.px == b.px);
}

TEST_CASE("downscale identity and constants") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 9);
    GrayImage img = upsample(t, 8);
    GrayImage same = downscale(img, 8);
    CHECK(same.px == img.px);

    GrayImage flat(16, 16, 8, 0.37f);
    GrayImage down = downscale(flat, 2);
    CHECK(down.h == 4);
    for (auto v : down.px) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("downscale 8 to 3 matches the direct overlap-weight average") {
    GrayImage img(8, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) img.at(y, x) = static_cast<float>(y * 8 + x) / 63.0f;
    GrayImage out = downscale(img, 3);
    REQUIRE(out.h == 3);
    REQUIRE(out.w == 3);

    // independent oracle: each target pixel covers an 8/3-wide source box
    double scale = 8.0 / 3.0;
    for (int oy = 0; oy < 3; ++oy) {
        for (int ox = 0; ox < 3; ++ox) {
            double acc = 0.0, norm = 0.0;
            for (int sy = 0; sy < 8; ++sy) {
                double wy = std::min<double>(oy * scale + scale, sy + 1) - std::max<double>(oy * scale, sy);
                if (wy <= 0) continue;
                for (int sx = 0; sx < 8; ++sx) {
                    double wx = std::min<double>(ox * scale + scale, sx + 1) - std::max<double>(ox * scale, sx);
                    if (wx <= 0) continue;
                    acc += wy * wx * img.at(sy, sx);
                    norm += wy * wx;
                }
            }
            CHECK(out.at(oy, ox) == doctest::Approx(acc / norm).epsilon(1e-6));
        }
    }
}

TEST_CASE("downscale rejects upsampling requests") {
    GrayImage img(16, 16, 2);
    CHECK_THROWS_AS(downscale(img, 4), ParameterError);
}

TEST_CASE("registration recovers a translated probe") {
    BinaryTemplate t = generate_template(24, 24, 0.5, 31);
    GrayImage clean = upsample(t, 3);

    // embed the clean image into a larger canvas, content shifted by (+2,-1)
    int margin = 6;
    GrayImage probe(clean.h + 2 * margin, clean.w + 2 * margin, 3, 0.5f);
    int dy = 2, dx = -1;
    for (int y = 0; y < clean.h; ++y)
        for (int x = 0; x < clean.w; ++x)
            probe.at(margin + dy + y, margin + dx + x) = clean.at(y, x);

    RegisterResult reg = register_probe(probe, t, 4);
    CHECK(reg.shift_y == -dy);
    CHECK(reg.shift_x == -dx);
    CHECK(reg.correlation > 0.99);
    CHECK(reg.image.px == clean.px);
}

TEST_CASE("registration of an aligned simulated print finds zero shift") {
    BinaryTemplate t = generate_template(24, 24, 0.5, 32);
    ChannelParams p = printer_preset("P55").base;
    p.pps = 3;
    p.seed = 4;
    GrayImage sim = simulate_print_scan(t, p);
    RegisterResult reg = register_probe(sim, t, 3);
    CHECK(reg.shift_y == 0);
    CHECK(reg.shift_x == 0);
    CHECK(reg.correlation > 0.5);
}

TEST_CASE("pure-noise probe still yields a best shift, with low correlation") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 33);
    GrayImage probe(16 * 2 + 8, 16 * 2 + 8, 2);
    Rng rng(123);
    for (auto& v : probe.px) v = static_cast<float>(rng.uniform());
    RegisterResult reg = register_probe(probe, t, 3);
    CHECK(std::abs(reg.correlation) < 0.2);
}

TEST_CASE("probe smaller than the template is a dimension error") {
    BinaryTemplate t = generate_template(32, 32, 0.5, 34);
    GrayImage probe(16, 16, 1);
    CHECK_THROWS_AS(register_probe(probe, t, 2), DimensionError);
}

TEST_CASE("registration undoes every translation within the search range") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 35);
    GrayImage clean = upsample(t, 2);
    int margin = 4;
    for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
            GrayImage probe(clean.h + 2 * margin, clean.w + 2 * margin, 2, 0.5f);
            for (int y = 0; y < clean.h; ++y)
                for (int x = 0; x < clean.w; ++x)
                    probe.at(margin + dy + y, margin + dx + x) = clean.at(y, x);
            RegisterResult reg = register_probe(probe, t, 2);
            CHECK(reg.shift_y == -dy);
            CHECK(reg.shift_x == -dx);
        }
    }
}

TEST_CASE("more sensor noise never helps the binarization attack") {
    std::vector<double> noise_grid = {0.0, 0.02, 0.05, 0.10};
    std::vector<double> mean_err(noise_grid.size(), 0.0);
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        BinaryTemplate t = generate_template(32, 32, 0.5, hash2(800, s));
        for (std::size_t g = 0; g < noise_grid.size(); ++g) {
            ChannelParams p = printer_preset("P55").base;
            p.pps = 4;
            p.noise_std = noise_grid[g];
            p.seed = hash2(801, s);
            GrayImage sim = simulate_print_scan(t, p);
            mean_err[g] += p_error(otsu_estimate(sim), t);
        }
    }
    for (std::size_t g = 1; g < noise_grid.size(); ++g)
        CHECK(mean_err[g] >= mean_err[g - 1] - 1e-9);
}

TEST_CASE("mean intensity strictly decreases as dot gain grows") {
    BinaryTemplate t = generate_template(32, 32, 0.5, 900);
    double prev = 2.0;
    for (double dg : {0.0, 0.1, 0.2, 0.3, 0.4}) {
        ChannelParams p;
        p.pps = 4;
        p.psf_sigma = 0.5;
        p.dot_gain = dg;
        p.gain = 1.0;
        p.offset = 0.0;
        p.noise_std = 0.0;
        GrayImage sim = simulate_print_scan(t, p);
        double mean = 0.0;
        for (auto v : sim.px) mean += v;
        mean /= static_cast<double>(sim.size());
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("gray image png round trip preserves intensities and tags") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 44);
    ChannelParams p = printer_preset("P76").base;
    p.pps = 3;
    p.seed = 5;
    GrayImage img = simulate_print_scan(t, p);
    img.printer = "P76";
    std::string path = (std::filesystem::temp_directory_path() / "cdp_gray.png").string();
    save_gray(img, path);
    GrayImage back = load_gray(path);
    CHECK(back.h == img.h);
    CHECK(back.pps == 3);
    CHECK(back.printer == "P76");
    CHECK(back.provenance == "original");
    double max_diff = 0.0;
    for (std::size_t k = 0; k < img.size(); ++k)
        max_diff = std::max(max_diff, std::abs(static_cast<double>(img.px[k]) - back.px[k]));
    CHECK(max_diff < 1.0 / 65535.0);
}

TEST_CASE("printer presets are distinct and jitter is seeded") {
    PrinterProfile p55 = printer_preset("P55");
    PrinterProfile p76 = printer_preset("P76");
    CHECK(p55.base.dot_gain != p76.base.dot_gain);
    CHECK_THROWS_AS(printer_preset("P99"), ParameterError);

    ChannelParams a = draw_print_params(p55, 10);
    ChannelParams b = draw_print_params(p55, 10);
    ChannelParams c = draw_print_params(p55, 11);
    CHECK(a.dot_gain == b.dot_gain);
    CHECK(a.dot_gain != c.dot_gain);
}
