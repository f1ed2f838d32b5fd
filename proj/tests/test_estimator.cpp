#include <doctest.h>

#include <cmath>

#include "cdp/attack.hpp"
#include "cdp/patterns.hpp"
#include "cdp/printchan.hpp"
#include "cdp/rng.hpp"

using namespace cdp;

namespace {

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

std::vector<TrainPair> degenerate_pairs(int count, int n, int pps, std::uint64_t seed) {
    std::vector<TrainPair> pairs;
    for (int i = 0; i < count; ++i) {
        BinaryTemplate t = generate_template(n, n, 0.5, hash2(seed, i));
        pairs.emplace_back(t, simulate_print_scan(t, degenerate_channel(pps)));
    }
    return pairs;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
    // miniature estimator (pps 1, width 2) on an 8x8 input, full objective
    // including the density-ratio path through the critic
    const int n = 8;
    nn::TemplateEstimator net(1, 2, 99);
    nn::PatchDiscriminator disc(101);

    Rng rng(7);
    std::vector<double> input(n * n), target(n * n);
    for (auto& v : input) v = 0.2 + 0.6 * rng.uniform();
    for (auto& v : target) v = rng.below(2) ? 1.0 : 0.0;

    auto params = net.params();
    auto loss_at = [&]() {
        nn::zero_grads(params);
        nn::zero_grads(disc.params());
        return estimator_loss_and_grad(net, disc, target, n, n, input, 1.0, 0.05).total;
    };

    nn::zero_grads(params);
    nn::zero_grads(disc.params());
    estimator_loss_and_grad(net, disc, target, n, n, input, 1.0, 0.05);
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(*p.g);

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = *params[pi].w;
        for (std::size_t k = 0; k < w.size(); ++k) {
            double saved = w[k];
            w[k] = saved + h;
            double lp = loss_at();
            w[k] = saved - h;
            double lm = loss_at();
            w[k] = saved;
            double numeric = (lp - lm) / (2.0 * h);
            double ga = analytic[pi][k];
            double rel = std::abs(ga - numeric) / (std::abs(ga) + std::abs(numeric) + 1e-6);
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("training learns the identity channel to near-zero error") {
    auto pairs = degenerate_pairs(8, 16, 2, 4000);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch = 4;
    cfg.lr = 4e-3;
    cfg.seed = 11;
    cfg.pps = 2;
    cfg.channels = 8;
    auto [model, history] = train_estimator(pairs, cfg, EstimatorMode::deterministic);

    double err = 0.0;
    for (const auto& [t, scan] : pairs)
        err += p_error(binarize_estimate(estimate(model, scan)), t);
    err /= static_cast<double>(pairs.size());
    CHECK(err < 0.5);

    SUBCASE("loss history satisfies the breakdown identity and trends down") {
        REQUIRE(history.size() == 40);
        for (const auto& lb : history)
            CHECK(lb.total == doctest::Approx(lb.recon + lb.marginal).epsilon(1e-12));
        auto ma5 = [&](std::size_t end) {
            double s = 0.0;
            for (std::size_t i = end - 5; i < end; ++i) s += history[i].total;
            return s / 5.0;
        };
        CHECK(ma5(history.size()) < ma5(5));
    }
}

TEST_CASE("training is deterministic in the seed") {
    auto pairs = degenerate_pairs(8, 16, 2, 4100);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 21;
    cfg.pps = 2;
    cfg.channels = 4;
    auto [m1, h1] = train_estimator(pairs, cfg, EstimatorMode::deterministic);
    auto [m2, h2] = train_estimator(pairs, cfg, EstimatorMode::deterministic);
    SoftEstimate e1 = estimate(m1, pairs[0].second);
    SoftEstimate e2 = estimate(m2, pairs[0].second);
    CHECK(e1.values == e2.values);
    CHECK(h1.back().total == h2.back().total);
}

TEST_CASE("training rejects bad configurations and diverging losses") {
    auto pairs = degenerate_pairs(8, 16, 2, 4200);
    TrainConfig cfg;
    cfg.pps = 2;
    cfg.channels = 4;
    SUBCASE("too few pairs") {
        pairs.resize(4);
        CHECK_THROWS_AS(train_estimator(pairs, cfg, EstimatorMode::deterministic),
                        ParameterError);
    }
    SUBCASE("divergence is reported with the epoch") {
        cfg.lambda = 1e308;  // overflow on the first reconstruction term
        cfg.epochs = 2;
        CHECK_THROWS_AS(train_estimator(pairs, cfg, EstimatorMode::deterministic), TrainingError);
    }
    SUBCASE("nonpositive lambda rejected") {
        cfg.lambda = 0.0;
        CHECK_THROWS_AS(train_estimator(pairs, cfg, EstimatorMode::deterministic),
                        ParameterError);
    }
}

TEST_CASE("stochastic mode records its input noise and stays reproducible") {
    auto pairs = degenerate_pairs(8, 16, 2, 4300);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 31;
    cfg.pps = 2;
    cfg.channels = 4;
    auto [model, history] = train_estimator(pairs, cfg, EstimatorMode::stochastic);
    CHECK(model.input_noise_std == doctest::Approx(0.001));
    SoftEstimate a = estimate(model, pairs[0].second);
    SoftEstimate b = estimate(model, pairs[0].second);
    CHECK(a.values == b.values);  // content-seeded injection replays
}

TEST_CASE("learned estimates stay in range on arbitrary inputs") {
    auto pairs = degenerate_pairs(8, 16, 2, 4400);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.pps = 2;
    cfg.channels = 4;
    auto [model, history] = train_estimator(pairs, cfg, EstimatorMode::deterministic);
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        GrayImage img(32, 32, 2);
        for (auto& v : img.px) v = static_cast<float>(rng.uniform());
        SoftEstimate e = estimate(model, img);
        for (double v : e.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    GrayImage wrong(33, 33, 3);
    CHECK_THROWS_AS(estimate(model, wrong), DimensionError);
}

TEST_CASE("learned model round trips through its checkpoint") {
    auto pairs = degenerate_pairs(8, 16, 2, 4500);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.pps = 2;
    cfg.channels = 4;
    auto [model, history] = train_estimator(pairs, cfg, EstimatorMode::deterministic);
    std::string path = "/tmp/cdp_learned_model.json";
    save_model(model, path);
    save_loss_history(history, "/tmp/cdp_loss.csv");
    EstimatorModel back = load_model(path);
    CHECK(back.kind == EstimatorKind::learned);
    SoftEstimate a = estimate(model, pairs[0].second);
    SoftEstimate b = estimate(back, pairs[0].second);
    CHECK(a.values == b.values);
}
