#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cdp/image.hpp"
#include "cdp/nn.hpp"

namespace cdp {

using Histogram = std::array<std::uint64_t, 256>;

struct OtsuThreshold {
    int bin = 0;           // black = samples with bin index < bin
    bool degenerate = false;  // single-valued histogram
};

// Threshold maximizing between-class variance; ties resolved toward the
// lower threshold. Candidate t splits bins into [0,t) vs [t,255].
OtsuThreshold otsu_threshold(const Histogram& hist);

Histogram histogram256(const GrayImage& img);

// One intensity per printed symbol: the mean of its pps x pps block.
GrayImage symbol_means(const GrayImage& scan);

// Block-average to the symbol grid, global Otsu threshold, values below it
// become black. The scan must be registered (dims a multiple of pps).
BinaryTemplate otsu_estimate(const GrayImage& scan);

struct SoftEstimate {
    int n = 0, m = 0;
    std::vector<double> values;  // [0,1], per-symbol whiteness

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * m + j]; }
};

enum class EstimatorKind { otsu, lda, learned };
enum class EstimatorMode { deterministic, stochastic };

struct EstimatorModel {
    EstimatorKind kind = EstimatorKind::otsu;
    EstimatorMode mode = EstimatorMode::deterministic;
    double input_noise_std = 0.0;  // > 0 only in stochastic mode
    int pps = 1;

    // lda
    int lda_window = 0;
    std::vector<double> lda_weights;  // (2*window+1)^2, row-major neighborhood
    double lda_threshold = 0.0;
    double lda_span = 1.0;  // projected class-mean distance, for soft scores
    bool lda_ridged = false;

    // learned
    std::shared_ptr<nn::TemplateEstimator> net;
    std::uint64_t seed = 0;
};

struct TrainConfig {
    double lambda = 1.0;             // scale of the reconstruction term
    double adversarial_weight = 0.01;  // weight of the marginal (prior) term
    int epochs = 30;
    int batch = 4;
    double lr = 2e-3;
    std::uint64_t seed = 1;
    int pps = 8;
    int crop = 64;     // training crop size, in symbols
    int channels = 28;  // base width of the estimator
};

// Per-epoch objective pieces. total = recon + marginal by construction:
// recon is the weighted reconstruction distance lambda*E||t - g(x)||_2 and
// marginal is the weighted density-ratio penalty on the estimate marginal.
struct LossBreakdown {
    double total = 0.0;
    double recon = 0.0;
    double marginal = 0.0;
};

using TrainPair = std::pair<BinaryTemplate, GrayImage>;

// Fisher discriminant over flattened (2*window+1)^2 neighborhoods of
// symbol-level block means; classes are the center bit.
EstimatorModel lda_train(const std::vector<TrainPair>& pairs, int window);

// Trains the image-to-image estimator by minimizing
//   -(reconstruction bound - marginal penalty),
// i.e. lambda*E||t - g(x)||_2 plus an adversarial density-ratio term that
// pushes the marginal of g(x) toward the binary template prior. Stochastic
// mode injects N(0, 0.001^2) input noise each step.
std::pair<EstimatorModel, std::vector<LossBreakdown>> train_estimator(
    const std::vector<TrainPair>& pairs, const TrainConfig& cfg, EstimatorMode mode);

// Per-symbol soft estimate in [0,1] from a registered scan.
SoftEstimate estimate(const EstimatorModel& model, const GrayImage& scan);

// value < tau -> black (0); ties go white.
BinaryTemplate binarize_estimate(const SoftEstimate& e, double tau = 0.5);

// 100 * (# differing bits) / (n*m)
double p_error(const BinaryTemplate& estimated, const BinaryTemplate& truth);

void save_model(const EstimatorModel& model, const std::string& path);
EstimatorModel load_model(const std::string& path);

void save_loss_history(const std::vector<LossBreakdown>& history, const std::string& path);

// Exposed for gradient verification: computes the full training objective on
// one (template, scan) pair and accumulates parameter gradients in-place.
LossBreakdown estimator_loss_and_grad(nn::TemplateEstimator& net, nn::PatchDiscriminator& disc,
                                      const std::vector<double>& target, int n, int m,
                                      const std::vector<double>& input, double lambda,
                                      double adversarial_weight);

}  // namespace cdp
