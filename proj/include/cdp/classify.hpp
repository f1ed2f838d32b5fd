#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdp/authmetrics.hpp"

namespace cdp {

struct Standardization {
    std::vector<double> mean, scale;
    std::vector<std::uint8_t> constant;  // per-feature flag, scale forced to 1

    std::vector<double> apply(const std::vector<double>& v) const;
};

// Per-feature zero mean, unit variance. A constant feature keeps scale 1 and
// is flagged.
Standardization standardize_fit(const std::vector<std::vector<double>>& rows);

enum class SvmKind { one_class, two_class };

struct SvmModel {
    SvmKind kind = SvmKind::one_class;
    double gamma = 0.3;
    double nu = 0.01;  // one-class
    double C = 1.0;    // two-class
    std::vector<int> metric_subset;  // indices into (hamming, ssim, jaccard, corr)
    Standardization standardization;
    std::vector<std::vector<double>> support_vectors;  // standardized
    std::vector<double> dual_coef;                     // y_i * alpha_i
    double rho = 0.0;

    // solver diagnostics, kept for post-hoc KKT verification; not serialized
    std::vector<std::vector<double>> diag_x;
    std::vector<int> diag_y;
    std::vector<double> diag_alpha;
};

// Raw dual solve on precomputed standardized features. y must be all +1 for
// the one-class formulation. Solves to a KKT gap <= tol; throws a training
// error if the pair-update cap is exceeded.
struct SvmSolveResult {
    std::vector<double> alpha;
    double rho = 0.0;
    long updates = 0;
};
SvmSolveResult solve_svm_dual(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                              SvmKind kind, double nu_or_c, double gamma, double tol = 1e-6,
                              long max_updates = 1000000);

// Recomputes the maximal-violating-pair gap from scratch for a given alpha.
double svm_kkt_gap(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                   SvmKind kind, double nu_or_c, double gamma, const std::vector<double>& alpha);

SvmModel train_one_class(const std::vector<MetricVector>& train, double nu = 0.01,
                         double gamma = 0.3, std::uint64_t seed = 0,
                         const std::vector<int>& metric_subset = {0, 1, 2, 3});

SvmModel train_two_class(const std::vector<MetricVector>& pos, const std::vector<MetricVector>& neg,
                         double C = 1.0, double gamma = 0.3, std::uint64_t seed = 0,
                         const std::vector<int>& metric_subset = {0, 1, 2, 3});

enum class Label { original, fake };

struct Prediction {
    Label label;
    double score;  // signed decision value; > 0 means original
};

// Decision ties (score exactly 0) resolve to fake.
Prediction predict(const SvmModel& model, const MetricVector& v);
double decision_value(const SvmModel& model, const std::vector<double>& raw_subset);

struct ErrorRates {
    double p_miss_mean = 0.0, p_miss_std = 0.0;
    double p_fa_mean = 0.0, p_fa_std = 0.0;
    int runs = 0;
};

struct RunRates {
    double p_miss = 0.0, p_fa = 0.0;
};

struct ProtocolConfig {
    SvmKind kind = SvmKind::one_class;
    int train_size = 144;
    int runs = 20;
    std::vector<int> metric_subset = {0, 1, 2, 3};
    double nu = 0.01;
    double gamma = 0.3;
    double C = 1.0;
    std::uint64_t seed = 7;
};

struct ProtocolResult {
    ErrorRates rates;
    std::vector<RunRates> per_run;
};

// Repeated-split protocol: per run, a seeded random train/test split,
// training on the train side only (both classes for two-class), and
// P_miss / P_fa on the held-out side. Inputs are canonicalized by sorting so
// the result does not depend on caller ordering.
ProtocolResult evaluate_protocol(const std::vector<MetricVector>& originals,
                                 const std::vector<MetricVector>& fakes,
                                 const ProtocolConfig& cfg);

void save_svm(const SvmModel& model, const std::string& path);
SvmModel load_svm(const std::string& path);

}  // namespace cdp
