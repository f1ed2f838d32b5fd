#pragma once

#include <string>
#include <vector>

#include "cdp/image.hpp"
#include "cdp/printchan.hpp"

namespace cdp {

enum class Normalization { minmax, percentile };

struct PreprocessParams {
    int max_shift = 3;
    Normalization normalization = Normalization::percentile;
    double p_lo = 1.0;
    double p_hi = 99.0;

    void validate() const;
};

// Fixed score order: (hamming, ssim, jaccard, corr).
struct MetricVector {
    double hamming = 0.0;
    double ssim = 0.0;
    double jaccard = 0.0;
    double corr = 0.0;

    double operator[](int i) const {
        return i == 0 ? hamming : i == 1 ? ssim : i == 2 ? jaccard : corr;
    }
    static const char* name(int i) {
        static const char* names[4] = {"hamming", "ssim", "jaccard", "corr"};
        return names[i];
    }
};

struct Preprocessed {
    GrayImage gray;       // registered + range-normalized, pixel level
    BinaryTemplate bin;   // symbol-level Otsu binarization of `gray`
    bool degenerate = false;  // constant probe, normalization skipped
};

// Probe conditioning: registration against the template, dynamic-range
// normalization, and symbol-level Otsu binarization. The grayscale output
// feeds SSIM/CORR, the binary output feeds HAMMING/JACCARD.
Preprocessed preprocess(const GrayImage& probe, const BinaryTemplate& t,
                        const PreprocessParams& params);

// Fraction of differing symbols.
double hamming_score(const BinaryTemplate& t, const BinaryTemplate& a);

// Mean local SSIM, Gaussian window radius 5 / sigma 1.5 (shrunk to fit small
// images), K1 = 0.01, K2 = 0.03, dynamic range 1. Windows are evaluated only
// where they fit entirely inside the image.
double ssim_score(const GrayImage& a, const GrayImage& b);
double ssim_score_windowed(const GrayImage& a, const GrayImage& b, int radius, double sigma);

// |black(t) & black(a)| / |black(t) | black(a)|; empty union -> 1.
double jaccard_score(const BinaryTemplate& t, const BinaryTemplate& a);

// Pearson correlation of the flattened intensities. A constant input makes
// the score undefined: returns 0 and sets *degenerate when provided.
double corr_score(const GrayImage& a, const GrayImage& b, bool* degenerate = nullptr);

// preprocess + the four scores against the template (HAMMING/JACCARD on the
// symbol-level binarization, SSIM/CORR on grayscale vs the upsampled
// template).
MetricVector metric_vector(const BinaryTemplate& t, const GrayImage& probe,
                           const PreprocessParams& params);

struct MetricRow {
    std::int64_t id = 0;
    std::string printer;
    std::string cls;  // "original" | "fake" | "fake-cross"
    MetricVector v;
};

void save_metric_rows(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> load_metric_rows(const std::string& path);

}  // namespace cdp
