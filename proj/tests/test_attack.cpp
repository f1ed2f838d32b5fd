#include <doctest.h>

#include <cmath>

#include "cdp/attack.hpp"
#include "cdp/patterns.hpp"
#include "cdp/printchan.hpp"
#include "cdp/rng.hpp"

using namespace cdp;

namespace {

// Independent exhaustive maximizer: tries every split point and recomputes
// the between-class variance from scratch. Ties toward the lower threshold.
int otsu_bruteforce(const Histogram& h) {
    double best_var = -1.0;
    int best_t = 1;
    for (int t = 1; t <= 255; ++t) {
        double w0 = 0, w1 = 0, m0 = 0, m1 = 0;
        for (int b = 0; b < t; ++b) {
            w0 += static_cast<double>(h[b]);
            m0 += static_cast<double>(b) * h[b];
        }
        for (int b = t; b < 256; ++b) {
            w1 += static_cast<double>(h[b]);
            m1 += static_cast<double>(b) * h[b];
        }
        if (w0 == 0 || w1 == 0) continue;
        double var = w0 * w1 * (m0 / w0 - m1 / w1) * (m0 / w0 - m1 / w1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

ChannelParams degenerate_channel(int pps) {
    ChannelParams p;
    p.pps = pps;
    p.psf_sigma = 1e-4;
    p.dot_gain = 0.0;
    p.gain = 1.0;
    p.offset = 0.0;
    p.noise_std = 0.0;
    return p;
}

}  // namespace

TEST_CASE("otsu threshold separates a bimodal histogram") {
    Histogram h{};
    h[50] = 100;
    h[200] = 100;
    OtsuThreshold t = otsu_threshold(h);
    CHECK(t.bin > 50);
    CHECK(t.bin <= 200);
    CHECK_FALSE(t.degenerate);
}

TEST_CASE("otsu threshold equals the exhaustive maximizer on random histograms") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        Histogram h{};
        int nbins = 2 + static_cast<int>(rng.below(30));
        for (int k = 0; k < nbins; ++k) h[rng.below(256)] += 1 + rng.below(1000);
        OtsuThreshold t = otsu_threshold(h);
        if (t.degenerate) continue;  // all mass fell into one bin
        CHECK(t.bin == otsu_bruteforce(h));
    }
}

TEST_CASE("otsu threshold on a uniform histogram matches the oracle") {
    Histogram h{};
    for (int b = 0; b < 256; ++b) h[b] = 10;
    OtsuThreshold t = otsu_threshold(h);
    CHECK(t.bin == otsu_bruteforce(h));
    CHECK(t.bin > 100);
    CHECK(t.bin < 156);
}

TEST_CASE("degenerate and empty histograms") {
    Histogram h{};
    h[77] = 1000;
    OtsuThreshold t = otsu_threshold(h);
    CHECK(t.degenerate);
    CHECK(t.bin == 77);
    Histogram empty{};
    CHECK_THROWS_AS(otsu_threshold(empty), ParameterError);
}

TEST_CASE("noiseless degenerate channel is exactly recoverable by otsu") {
    BinaryTemplate t = generate_template(32, 32, 0.4, 17);
    GrayImage sim = simulate_print_scan(t, degenerate_channel(4));
    BinaryTemplate est = otsu_estimate(sim);
    CHECK(p_error(est, t) == 0.0);
}

TEST_CASE("inverted contrast flips nearly every binarized symbol") {
    BinaryTemplate t = generate_template(32, 32, 0.5, 18);
    ChannelParams p = degenerate_channel(4);
    p.gain = -1.0;
    p.offset = 1.0;
    GrayImage sim = simulate_print_scan(t, p);
    BinaryTemplate est = otsu_estimate(sim);
    CHECK(p_error(est, t) > 98.0);
}

TEST_CASE("unregistered scan dimensions are a dimension error") {
    GrayImage odd(17, 17, 4);
    CHECK_THROWS_AS(otsu_estimate(odd), DimensionError);
}

TEST_CASE("p_error basics") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 19);
    CHECK(p_error(t, t) == 0.0);
    BinaryTemplate inv = t;
    for (auto& b : inv.bits) b ^= 1;
    CHECK(p_error(inv, t) == 100.0);

    BinaryTemplate a, b;
    a.n = a.m = b.n = b.m = 10;
    a.bits.assign(100, 1);
    b.bits.assign(100, 1);
    b.bits[37] = 0;
    CHECK(p_error(b, a) == doctest::Approx(1.0));

    BinaryTemplate small;
    small.n = small.m = 8;
    small.bits.assign(64, 1);
    CHECK_THROWS_AS(p_error(small, a), DimensionError);
}

TEST_CASE("p_error is a scaled metric") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryTemplate x, y, z;
        x.n = x.m = y.n = y.m = z.n = z.m = 8;
        for (int k = 0; k < 64; ++k) {
            x.bits.push_back(rng.below(2));
            y.bits.push_back(rng.below(2));
            z.bits.push_back(rng.below(2));
        }
        CHECK(p_error(x, y) == p_error(y, x));
        CHECK(p_error(x, z) <= p_error(x, y) + p_error(y, z) + 1e-12);
    }
}

TEST_CASE("lda reaches zero training error on separable data") {
    // degenerate channel: block means equal the bits, trivially separable
    std::vector<TrainPair> pairs;
    for (int i = 0; i < 4; ++i) {
        BinaryTemplate t = generate_template(24, 24, 0.5, hash2(300, i));
        pairs.emplace_back(t, simulate_print_scan(t, degenerate_channel(2)));
    }
    EstimatorModel lda = lda_train(pairs, 1);
    for (const auto& [t, scan] : pairs)
        CHECK(p_error(binarize_estimate(estimate(lda, scan)), t) == 0.0);
}

TEST_CASE("center-only lda matches the best exhaustive threshold") {
    // mirrored class-conditionals (white intensity = 1 - black intensity)
    // put the discriminant midpoint at exactly 0.5; a pinned sample pair at
    // 0.5 -+ eps makes 0.5 the unique zero-error threshold for the oracle
    const double eps = 1.0 / 500.0;
    BinaryTemplate t;
    t.n = t.m = 32;
    t.bits.resize(32 * 32);
    GrayImage scan(32, 32, 1);
    Rng rng(66);
    bool pinned = false;
    for (int i = 0; i < 32; ++i) {
        for (int j = 0; j < 32; ++j) {
            int bit = (i + j) % 2;
            t.at(i, j) = static_cast<std::uint8_t>(bit);
            double black_v = 0.15 + 0.29 * rng.uniform();  // in [0.15, 0.44]
            if (!pinned && bit == 0) {
                black_v = 0.5 - eps;
                pinned = true;
            }
            scan.at(i, j) = static_cast<float>(bit == 0 ? black_v : 1.0 - black_v);
        }
    }
    std::vector<TrainPair> pairs;
    pairs.emplace_back(t, scan);
    EstimatorModel lda = lda_train(pairs, 0);

    // exhaustive 256-candidate threshold minimizing training bit error
    int best_bin = 0;
    double best_err = 1e18;
    for (int bin = 1; bin <= 255; ++bin) {
        double err = 0;
        for (int k = 0; k < 32 * 32; ++k) {
            int b = std::min(255, static_cast<int>(scan.px[k] * 256.0f));
            int bit = b < bin ? 0 : 1;
            err += bit != t.bits[k];
        }
        if (err < best_err) {
            best_err = err;
            best_bin = bin;
        }
    }

    CHECK(best_err == 0.0);
    double lda_tau = lda.lda_threshold / lda.lda_weights[0];
    double oracle_tau = best_bin / 256.0;
    CHECK(std::abs(lda_tau - oracle_tau) <= 1.0 / 256.0 + 1e-9);
}

TEST_CASE("singular scatter is ridged and flagged") {
    std::vector<TrainPair> pairs;
    BinaryTemplate t = generate_template(16, 16, 0.5, 71);
    GrayImage scan = upsample(t, 1);  // exactly two intensity values, window 1
    pairs.emplace_back(t, scan);
    EstimatorModel lda = lda_train(pairs, 1);
    CHECK(lda.lda_ridged);
    // even ridged, the discriminant should classify the clean data perfectly
    CHECK(p_error(binarize_estimate(estimate(lda, scan)), t) == 0.0);
}

TEST_CASE("binarize_estimate thresholds and breaks ties to white") {
    SoftEstimate e;
    e.n = e.m = 2;
    e.values = {0.4, 0.4, 0.4, 0.4};
    BinaryTemplate all_black = binarize_estimate(e, 0.5);
    for (auto b : all_black.bits) CHECK(b == 0);

    e.values = {0.5, 0.49999, 0.6, 0.2};
    BinaryTemplate mixed = binarize_estimate(e, 0.5);
    CHECK(mixed.bits[0] == 1);  // exactly tau goes white
    CHECK(mixed.bits[1] == 0);
    CHECK(mixed.bits[2] == 1);
    CHECK(mixed.bits[3] == 0);

    CHECK_THROWS_AS(binarize_estimate(e, 0.0), ParameterError);
    CHECK_THROWS_AS(binarize_estimate(e, 1.0), ParameterError);
}

TEST_CASE("binarization black fraction is monotone in tau") {
    BinaryTemplate t = generate_template(24, 24, 0.5, 81);
    ChannelParams p = printer_preset("P55").base;
    p.pps = 4;
    p.seed = 8;
    GrayImage sim = simulate_print_scan(t, p);
    SoftEstimate e = estimate(EstimatorModel{}, sim);  // default kind = otsu
    double prev = -1.0;
    for (double tau : {0.2, 0.35, 0.5, 0.65, 0.8}) {
        double black = measure_density(binarize_estimate(e, tau));
        CHECK(black >= prev);
        prev = black;
    }
}

TEST_CASE("otsu soft estimate binarizes back to the otsu estimate") {
    BinaryTemplate t = generate_template(24, 24, 0.45, 82);
    ChannelParams p = printer_preset("P76").base;
    p.pps = 4;
    p.seed = 9;
    GrayImage sim = simulate_print_scan(t, p);
    BinaryTemplate direct = otsu_estimate(sim);
    BinaryTemplate via_soft = binarize_estimate(estimate(EstimatorModel{}, sim), 0.5);
    CHECK(direct.bits == via_soft.bits);
}

TEST_CASE("estimates stay in range and respect pps contracts") {
    BinaryTemplate t = generate_template(16, 16, 0.5, 83);
    GrayImage sim = simulate_print_scan(t, degenerate_channel(2));
    SoftEstimate e = estimate(EstimatorModel{}, sim);
    for (double v : e.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // degenerate channel: soft values within 0.05 of the bits
    for (int i = 0; i < t.n; ++i)
        for (int j = 0; j < t.m; ++j)
            CHECK(std::abs(e.at(i, j) - static_cast<double>(t.at(i, j))) < 0.05);

    std::vector<TrainPair> pairs;
    for (int i = 0; i < 2; ++i) {
        BinaryTemplate ti = generate_template(16, 16, 0.5, hash2(302, i));
        pairs.emplace_back(ti, simulate_print_scan(ti, degenerate_channel(2)));
    }
    EstimatorModel lda = lda_train(pairs, 1);
    GrayImage wrong_pps = simulate_print_scan(t, degenerate_channel(3));
    CHECK_THROWS_AS(estimate(lda, wrong_pps), DimensionError);
}

TEST_CASE("lda on a constant image scores every symbol identically") {
    std::vector<TrainPair> pairs;
    for (int i = 0; i < 2; ++i) {
        BinaryTemplate ti = generate_template(16, 16, 0.5, hash2(303, i));
        pairs.emplace_back(ti, simulate_print_scan(ti, degenerate_channel(2)));
    }
    EstimatorModel lda = lda_train(pairs, 1);
    GrayImage flat(32, 32, 2, 0.5f);
    SoftEstimate e = estimate(lda, flat);
    for (double v : e.values) CHECK(v == doctest::Approx(e.values[0]));

    SoftEstimate eo = estimate(EstimatorModel{}, flat);
    for (double v : eo.values) CHECK(v == doctest::Approx(eo.values[0]));
}

TEST_CASE("lda model round trips through its checkpoint") {
    std::vector<TrainPair> pairs;
    for (int i = 0; i < 3; ++i) {
        BinaryTemplate ti = generate_template(16, 16, 0.5, hash2(304, i));
        ChannelParams p = printer_preset("P55").base;
        p.pps = 2;
        p.seed = i;
        pairs.emplace_back(ti, simulate_print_scan(ti, p));
    }
    EstimatorModel lda = lda_train(pairs, 2);
    std::string path = "/tmp/cdp_lda_model.json";
    save_model(lda, path);
    EstimatorModel back = load_model(path);
    CHECK(back.kind == EstimatorKind::lda);
    CHECK(back.lda_window == 2);
    SoftEstimate a = estimate(lda, pairs[0].second);
    SoftEstimate b = estimate(back, pairs[0].second);
    CHECK(a.values == b.values);
}
