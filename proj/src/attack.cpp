#include "cdp/attack.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "cdp/patterns.hpp"
#include "cdp/printchan.hpp"
#include "cdp/rng.hpp"

using nlohmann::json;

namespace cdp {

OtsuThreshold otsu_threshold(const Histogram& hist) {
    std::uint64_t total = 0;
    double mean_num = 0.0;
    int lo = -1, hi = -1;
    for (int b = 0; b < 256; ++b) {
        if (hist[b] > 0) {
            if (lo < 0) lo = b;
            hi = b;
        }
        total += hist[b];
        mean_num += static_cast<double>(b) * hist[b];
    }
    if (total == 0) throw ParameterError("otsu_threshold: empty histogram");
    if (lo == hi) return {lo, true};

    OtsuThreshold best{1, false};
    double best_var = -1.0;
    std::uint64_t w0 = 0;
    double m0 = 0.0;
    for (int t = 1; t <= 255; ++t) {
        w0 += hist[t - 1];
        m0 += static_cast<double>(t - 1) * hist[t - 1];
        std::uint64_t w1 = total - w0;
        if (w0 == 0) continue;
        if (w1 == 0) break;
        double mu0 = m0 / w0;
        double mu1 = (mean_num - m0) / w1;
        double var = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best.bin = t;
        }
    }
    return best;
}

Histogram histogram256(const GrayImage& img) {
    Histogram h{};
    for (auto v : img.px) {
        int b = static_cast<int>(v * 256.0f);
        if (b > 255) b = 255;
        if (b < 0) b = 0;
        ++h[b];
    }
    return h;
}

GrayImage symbol_means(const GrayImage& scan) {
    if (scan.pps < 1 || scan.h % scan.pps != 0 || scan.w % scan.pps != 0)
        throw DimensionError("symbol_means: scan is not registered to a symbol grid");
    return downscale(scan, 1);
}

BinaryTemplate otsu_estimate(const GrayImage& scan) {
    GrayImage means = symbol_means(scan);
    OtsuThreshold t = otsu_threshold(histogram256(means));
    BinaryTemplate out;
    out.n = means.h;
    out.m = means.w;
    out.bits.resize(means.size());
    for (std::size_t k = 0; k < means.size(); ++k) {
        int b = std::min(255, static_cast<int>(means.px[k] * 256.0f));
        out.bits[k] = b < t.bin ? 0 : 1;
    }
    out.density = measure_density(out);
    return out;
}

namespace {

// Symbol-level block means of a registered pair, as doubles.
struct MeanImage {
    int n, m;
    std::vector<double> v;
    double at(int i, int j) const {
        int ii = i < 0 ? 0 : (i >= n ? n - 1 : i);
        int jj = j < 0 ? 0 : (j >= m ? m - 1 : j);
        return v[static_cast<std::size_t>(ii) * m + jj];
    }
};

MeanImage to_mean_image(const GrayImage& scan) {
    GrayImage means = symbol_means(scan);
    MeanImage mi{means.h, means.w, {}};
    mi.v.assign(means.px.begin(), means.px.end());
    return mi;
}

void check_pair(const BinaryTemplate& t, const GrayImage& scan, int pps, const char* what) {
    if (scan.pps != pps) throw DimensionError(std::string(what) + ": mixed pps in training pairs");
    if (scan.h != t.n * pps || scan.w != t.m * pps)
        throw DimensionError(std::string(what) + ": scan not registered to its template");
}

}  // namespace

EstimatorModel lda_train(const std::vector<TrainPair>& pairs, int window) {
    if (pairs.empty()) throw ParameterError("lda_train: need at least one pair");
    if (window < 0) throw ParameterError("lda_train: window must be >= 0");
    const int pps = pairs.front().second.pps;
    const int side = 2 * window + 1;
    const int dim = side * side;

    Eigen::VectorXd sum0 = Eigen::VectorXd::Zero(dim), sum1 = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd sq0 = Eigen::MatrixXd::Zero(dim, dim), sq1 = Eigen::MatrixXd::Zero(dim, dim);
    double n0 = 0.0, n1 = 0.0;
    Eigen::VectorXd f(dim);

    for (const auto& [t, scan] : pairs) {
        check_pair(t, scan, pps, "lda_train");
        MeanImage mi = to_mean_image(scan);
        for (int i = 0; i < t.n; ++i) {
            for (int j = 0; j < t.m; ++j) {
                int k = 0;
                for (int di = -window; di <= window; ++di)
                    for (int dj = -window; dj <= window; ++dj) f[k++] = mi.at(i + di, j + dj);
                if (t.at(i, j) == 0) {
                    sum0 += f;
                    sq0.selfadjointView<Eigen::Lower>().rankUpdate(f);
                    n0 += 1.0;
                } else {
                    sum1 += f;
                    sq1.selfadjointView<Eigen::Lower>().rankUpdate(f);
                    n1 += 1.0;
                }
            }
        }
    }
    if (n0 == 0.0 || n1 == 0.0)
        throw TrainingError("lda_train: a class is absent from the training pairs");

    Eigen::VectorXd mu0 = sum0 / n0, mu1 = sum1 / n1;
    Eigen::MatrixXd sw = Eigen::MatrixXd(sq0.selfadjointView<Eigen::Lower>()) - n0 * mu0 * mu0.transpose() +
                         Eigen::MatrixXd(sq1.selfadjointView<Eigen::Lower>()) - n1 * mu1 * mu1.transpose();

    bool ridged = false;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sw);
    double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= dmax * 1e-12) {
        double eps = std::max(1e-12, 1e-8 * sw.trace() / dim);
        sw += eps * Eigen::MatrixXd::Identity(dim, dim);
        ldlt.compute(sw);
        ridged = true;
        std::cerr << "lda_train: within-class scatter near singular, ridge added\n";
    }
    Eigen::VectorXd w = ldlt.solve(mu1 - mu0);

    EstimatorModel model;
    model.kind = EstimatorKind::lda;
    model.pps = pps;
    model.lda_window = window;
    model.lda_weights.assign(w.data(), w.data() + dim);
    model.lda_threshold = 0.5 * w.dot(mu0 + mu1);
    model.lda_span = std::max(1e-12, w.dot(mu1 - mu0));
    model.lda_ridged = ridged;
    return model;
}

LossBreakdown estimator_loss_and_grad(nn::TemplateEstimator& net, nn::PatchDiscriminator& disc,
                                      const std::vector<double>& target, int n, int m,
                                      const std::vector<double>& input, double lambda,
                                      double adversarial_weight) {
    nn::Tensor x(1, n * net.pps(), m * net.pps());
    x.v = input;
    nn::Tensor y = net.forward(x);

    nn::Tensor dy(1, n, m);
    double sq = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        double d = y.v[i] - target[i];
        dy.v[i] = d;
        sq += d * d;
    }
    double norm = std::sqrt(sq + 1e-12);
    for (auto& g : dy.v) g *= lambda / norm;

    LossBreakdown loss;
    loss.recon = lambda * norm;

    if (adversarial_weight > 0.0) {
        int p = std::min(32, std::min(n, m));
        nn::Tensor patch(1, p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) patch.at(0, i, j) = y.at(0, i, j);
        double z = disc.forward(patch);
        double sig_nz = 1.0 / (1.0 + std::exp(z));  // sigmoid(-z)
        loss.marginal = adversarial_weight * (z > 30.0 ? 0.0 : std::log1p(std::exp(-z)));
        nn::Tensor dpatch = disc.backward(-adversarial_weight * sig_nz);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) dy.at(0, i, j) += dpatch.at(0, i, j);
    }

    net.backward(dy);
    loss.total = loss.recon + loss.marginal;
    return loss;
}

std::pair<EstimatorModel, std::vector<LossBreakdown>> train_estimator(
    const std::vector<TrainPair>& pairs, const TrainConfig& cfg, EstimatorMode mode) {
    if (pairs.size() < 8) throw ParameterError("train_estimator: need at least 8 pairs");
    if (cfg.epochs < 1) throw ParameterError("train_estimator: epochs must be >= 1");
    if (!(cfg.lambda > 0.0)) throw ParameterError("train_estimator: lambda must be > 0");

    const int pps = cfg.pps;
    int n_min = pairs.front().first.n, m_min = pairs.front().first.m;
    for (const auto& [t, scan] : pairs) {
        check_pair(t, scan, pps, "train_estimator");
        n_min = std::min(n_min, t.n);
        m_min = std::min(m_min, t.m);
    }
    int crop = std::min({cfg.crop, n_min, m_min});
    crop -= crop % 4;
    if (crop < 8) throw ParameterError("train_estimator: templates too small for training crops");

    EstimatorModel model;
    model.kind = EstimatorKind::learned;
    model.mode = mode;
    model.input_noise_std = mode == EstimatorMode::stochastic ? 0.001 : 0.0;
    model.pps = pps;
    model.seed = cfg.seed;
    model.net = std::make_shared<nn::TemplateEstimator>(pps, cfg.channels, cfg.seed);

    nn::PatchDiscriminator disc(hash2(cfg.seed, 0xadf0ull));
    auto g_params = model.net->params();
    auto d_params = disc.params();
    nn::Adam g_opt(cfg.lr), d_opt(cfg.lr * 0.5);
    Rng rng(hash2(cfg.seed, 0x747261696eull));

    const int batch = std::max(1, cfg.batch);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<LossBreakdown> history;
    history.reserve(cfg.epochs);

    struct PatchPair {
        nn::Tensor real, fake;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double ep_recon = 0.0, ep_marg = 0.0;
        std::size_t ep_count = 0;

        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::size_t bsz = std::min<std::size_t>(batch, order.size() - start);
            std::vector<PatchPair> patches;
            patches.reserve(bsz);
            nn::zero_grads(g_params);

            for (std::size_t s = 0; s < bsz; ++s) {
                const auto& [t, scan] = pairs[order[start + s]];
                int oy = static_cast<int>(rng.below(t.n - crop + 1));
                int ox = static_cast<int>(rng.below(t.m - crop + 1));

                nn::Tensor x(1, crop * pps, crop * pps);
                for (int y = 0; y < crop * pps; ++y)
                    for (int xx = 0; xx < crop * pps; ++xx)
                        x.at(0, y, xx) = scan.at(oy * pps + y, ox * pps + xx);
                if (mode == EstimatorMode::stochastic)
                    for (auto& v : x.v) v += 0.001 * rng.normal();

                nn::Tensor y = model.net->forward(x);

                nn::Tensor dy(1, crop, crop);
                double sq = 0.0;
                for (int i = 0; i < crop; ++i) {
                    for (int j = 0; j < crop; ++j) {
                        double d = y.at(0, i, j) - (t.at(oy + i, ox + j) ? 1.0 : 0.0);
                        dy.at(0, i, j) = d;
                        sq += d * d;
                    }
                }
                double norm = std::sqrt(sq + 1e-12);
                ep_recon += cfg.lambda * norm;
                for (auto& g : dy.v) g *= cfg.lambda / norm;

                if (cfg.adversarial_weight > 0.0) {
                    int p = std::min(32, crop);
                    int py = static_cast<int>(rng.below(crop - p + 1));
                    int px = static_cast<int>(rng.below(crop - p + 1));
                    nn::Tensor fake(1, p, p);
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j) fake.at(0, i, j) = y.at(0, py + i, px + j);

                    double z = disc.forward(fake);
                    ep_marg += cfg.adversarial_weight * (z > 30.0 ? 0.0 : std::log1p(std::exp(-z)));
                    nn::Tensor dpatch = disc.backward(-cfg.adversarial_weight / (1.0 + std::exp(z)));
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j) dy.at(0, py + i, px + j) += dpatch.at(0, i, j);

                    // real patch from a random training template, for the critic step
                    const auto& tr = pairs[order[(start + s + 1) % order.size()]].first;
                    int ry = static_cast<int>(rng.below(tr.n - p + 1));
                    int rx = static_cast<int>(rng.below(tr.m - p + 1));
                    nn::Tensor real(1, p, p);
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j) real.at(0, i, j) = tr.at(ry + i, rx + j) ? 1.0 : 0.0;
                    patches.push_back({std::move(real), std::move(fake)});
                }

                model.net->backward(dy);
                ++ep_count;
            }
            g_opt.step(g_params, 1.0 / static_cast<double>(bsz));

            if (!patches.empty()) {
                nn::zero_grads(d_params);
                for (const auto& pp : patches) {
                    double zr = disc.forward(pp.real);
                    disc.backward(-1.0 / (1.0 + std::exp(zr)));  // d/dz softplus(-z)
                    double zf = disc.forward(pp.fake);
                    disc.backward(1.0 / (1.0 + std::exp(-zf)));  // d/dz softplus(z)
                }
                d_opt.step(d_params, 1.0 / (2.0 * static_cast<double>(patches.size())));
            }
        }

        LossBreakdown lb;
        lb.recon = ep_recon / static_cast<double>(ep_count);
        lb.marginal = ep_marg / static_cast<double>(ep_count);
        lb.total = lb.recon + lb.marginal;
        if (!std::isfinite(lb.total))
            throw TrainingError("train_estimator: loss diverged at epoch " + std::to_string(epoch));
        history.push_back(lb);
    }
    return {std::move(model), std::move(history)};
}

namespace {

SoftEstimate estimate_otsu(const GrayImage& scan) {
    GrayImage means = symbol_means(scan);
    OtsuThreshold t = otsu_threshold(histogram256(means));
    double tau = t.bin / 256.0;
    auto [mn, mx] = std::minmax_element(means.px.begin(), means.px.end());
    // piecewise-linear: min -> 0, threshold -> 0.5, max -> 1, so soft < 0.5
    // exactly where the hard binarization goes black
    double below = std::max(1e-12, tau - static_cast<double>(*mn));
    double above = std::max(1e-12, static_cast<double>(*mx) - tau);
    SoftEstimate e;
    e.n = means.h;
    e.m = means.w;
    e.values.resize(means.size());
    for (std::size_t k = 0; k < means.size(); ++k) {
        double v = means.px[k];
        e.values[k] = v < tau ? clamp01(0.5 + 0.5 * (v - tau) / below)
                              : clamp01(0.5 + 0.5 * (v - tau) / above);
    }
    return e;
}

SoftEstimate estimate_lda(const EstimatorModel& model, const GrayImage& scan) {
    MeanImage mi = to_mean_image(scan);
    const int window = model.lda_window;
    SoftEstimate e;
    e.n = mi.n;
    e.m = mi.m;
    e.values.resize(static_cast<std::size_t>(mi.n) * mi.m);
    double k_scale = 4.0 / model.lda_span;
    for (int i = 0; i < mi.n; ++i) {
        for (int j = 0; j < mi.m; ++j) {
            double score = -model.lda_threshold;
            int k = 0;
            for (int di = -window; di <= window; ++di)
                for (int dj = -window; dj <= window; ++dj)
                    score += model.lda_weights[k++] * mi.at(i + di, j + dj);
            e.values[static_cast<std::size_t>(i) * mi.m + j] =
                1.0 / (1.0 + std::exp(-k_scale * score));
        }
    }
    return e;
}

SoftEstimate estimate_learned(const EstimatorModel& model, const GrayImage& scan) {
    if (scan.pps != model.pps)
        throw DimensionError("estimate: scan pps does not match the model");
    nn::Tensor x(1, scan.h, scan.w);
    for (std::size_t k = 0; k < scan.px.size(); ++k) x.v[k] = scan.px[k];
    if (model.mode == EstimatorMode::stochastic && model.input_noise_std > 0.0) {
        Rng rng(hash3(model.seed, fnv1a64(scan.px.data(), scan.px.size() * sizeof(float)),
                      0x657374ull));
        for (auto& v : x.v) v += model.input_noise_std * rng.normal();
    }
    nn::Tensor y = model.net->forward(x);
    SoftEstimate e;
    e.n = y.h;
    e.m = y.w;
    e.values.resize(y.v.size());
    for (std::size_t k = 0; k < y.v.size(); ++k) e.values[k] = clamp01(y.v[k]);
    return e;
}

}  // namespace

SoftEstimate estimate(const EstimatorModel& model, const GrayImage& scan) {
    switch (model.kind) {
        case EstimatorKind::otsu:
            return estimate_otsu(scan);
        case EstimatorKind::lda:
            if (scan.pps != model.pps)
                throw DimensionError("estimate: scan pps does not match the model");
            return estimate_lda(model, scan);
        case EstimatorKind::learned:
            return estimate_learned(model, scan);
    }
    throw ParameterError("estimate: unknown estimator kind");
}

BinaryTemplate binarize_estimate(const SoftEstimate& e, double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw ParameterError("binarize_estimate: tau must be inside (0,1)");
    BinaryTemplate t;
    t.n = e.n;
    t.m = e.m;
    t.bits.resize(e.values.size());
    for (std::size_t k = 0; k < e.values.size(); ++k) t.bits[k] = e.values[k] < tau ? 0 : 1;
    t.density = measure_density(t);
    return t;
}

double p_error(const BinaryTemplate& estimated, const BinaryTemplate& truth) {
    require_same_dims(estimated, truth, "p_error");
    std::size_t diff = 0;
    for (std::size_t k = 0; k < truth.bits.size(); ++k)
        diff += estimated.bits[k] != truth.bits[k];
    return 100.0 * static_cast<double>(diff) / static_cast<double>(truth.bits.size());
}

void save_model(const EstimatorModel& model, const std::string& path) {
    json j;
    j["kind"] = model.kind == EstimatorKind::otsu   ? "otsu"
                : model.kind == EstimatorKind::lda ? "lda"
                                                   : "learned";
    j["mode"] = model.mode == EstimatorMode::stochastic ? "stochastic" : "deterministic";
    j["input_noise_std"] = model.input_noise_std;
    j["pps"] = model.pps;
    if (model.kind == EstimatorKind::lda) {
        j["lda"] = {{"window", model.lda_window},
                    {"weights", model.lda_weights},
                    {"threshold", model.lda_threshold},
                    {"span", model.lda_span},
                    {"ridged", model.lda_ridged}};
    } else if (model.kind == EstimatorKind::learned) {
        auto params = model.net->params();
        j["learned"] = {{"channels", model.net->channels()},
                        {"seed", model.seed},
                        {"params", nn::flatten_params(params)}};
    }
    std::ofstream out(path);
    if (!out) throw FormatError("save_model: cannot open " + path);
    out << j.dump() << "\n";
}

EstimatorModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("load_model: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("load_model: parse error: " + std::string(e.what()));
    }

    EstimatorModel model;
    std::string kind = j.at("kind").get<std::string>();
    model.kind = kind == "otsu" ? EstimatorKind::otsu
                 : kind == "lda" ? EstimatorKind::lda
                                 : EstimatorKind::learned;
    model.mode = j.value("mode", "deterministic") == std::string("stochastic")
                     ? EstimatorMode::stochastic
                     : EstimatorMode::deterministic;
    model.input_noise_std = j.value("input_noise_std", 0.0);
    model.pps = j.value("pps", 1);
    if (model.kind == EstimatorKind::lda) {
        const auto& l = j.at("lda");
        model.lda_window = l.at("window").get<int>();
        model.lda_weights = l.at("weights").get<std::vector<double>>();
        model.lda_threshold = l.at("threshold").get<double>();
        model.lda_span = l.at("span").get<double>();
        model.lda_ridged = l.value("ridged", false);
    } else if (model.kind == EstimatorKind::learned) {
        const auto& l = j.at("learned");
        model.seed = l.at("seed").get<std::uint64_t>();
        model.net = std::make_shared<nn::TemplateEstimator>(model.pps, l.at("channels").get<int>(),
                                                            model.seed);
        auto params = model.net->params();
        nn::restore_params(params, l.at("params").get<std::vector<double>>());
    }
    return model;
}

void save_loss_history(const std::vector<LossBreakdown>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("save_loss_history: cannot open " + path);
    out << "epoch,total,recon,marginal\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out << i << "," << fmt_fixed(history[i].total) << "," << fmt_fixed(history[i].recon) << ","
            << fmt_fixed(history[i].marginal) << "\n";
}

}  // namespace cdp
