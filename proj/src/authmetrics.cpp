#include "cdp/authmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdp/attack.hpp"
#include "cdp/patterns.hpp"

namespace cdp {

void PreprocessParams::validate() const {
    if (max_shift < 0) throw ParameterError("preprocess: max_shift must be >= 0");
    if (!(0.0 <= p_lo && p_lo < p_hi && p_hi <= 100.0))
        throw ParameterError("preprocess: need 0 <= p_lo < p_hi <= 100");
}

namespace {

double percentile(std::vector<float>& sorted, double p) {
    double idx = p / 100.0 * (static_cast<double>(sorted.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(idx);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

}  // namespace

Preprocessed preprocess(const GrayImage& probe, const BinaryTemplate& t,
                        const PreprocessParams& params) {
    params.validate();
    RegisterResult reg = register_probe(probe, t, params.max_shift);

    Preprocessed out;
    out.gray = std::move(reg.image);

    double lo, hi;
    if (params.normalization == Normalization::minmax) {
        auto [mn, mx] = std::minmax_element(out.gray.px.begin(), out.gray.px.end());
        lo = *mn;
        hi = *mx;
    } else {
        std::vector<float> sorted = out.gray.px;
        std::sort(sorted.begin(), sorted.end());
        lo = percentile(sorted, params.p_lo);
        hi = percentile(sorted, params.p_hi);
    }

    if (hi - lo < 1e-9) {
        out.degenerate = true;  // constant probe, nothing to stretch
    } else {
        double inv = 1.0 / (hi - lo);
        for (auto& v : out.gray.px) v = static_cast<float>(clamp01((v - lo) * inv));
    }

    out.bin = otsu_estimate(out.gray);
    return out;
}

double hamming_score(const BinaryTemplate& t, const BinaryTemplate& a) {
    require_same_dims(t, a, "hamming_score");
    std::size_t diff = 0;
    for (std::size_t k = 0; k < t.bits.size(); ++k) diff += t.bits[k] != a.bits[k];
    return static_cast<double>(diff) / static_cast<double>(t.bits.size());
}

double jaccard_score(const BinaryTemplate& t, const BinaryTemplate& a) {
    require_same_dims(t, a, "jaccard_score");
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < t.bits.size(); ++k) {
        bool bt = t.bits[k] == 0, ba = a.bits[k] == 0;
        inter += bt && ba;
        uni += bt || ba;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Valid-region separable weighted convolution used by SSIM.
std::vector<double> conv_valid(const std::vector<double>& img, int h, int w,
                               const std::vector<double>& k) {
    int r = (static_cast<int>(k.size()) - 1) / 2;
    int ow = w - 2 * r, oh = h - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < 2 * r + 1; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < 2 * r + 1; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim_score_windowed(const GrayImage& a, const GrayImage& b, int radius, double sigma) {
    require_same_dims(a, b, "ssim_score");
    if (a.pps != b.pps) throw DimensionError("ssim_score: pps mismatch");
    int r = std::min(radius, (std::min(a.h, a.w) - 1) / 2);
    if (r < 0) throw DimensionError("ssim_score: image too small");

    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        sum += k[i + r];
    }
    for (auto& v : k) v /= sum;

    std::size_t npx = a.size();
    std::vector<double> x(npx), y(npx), xx(npx), yy(npx), xy(npx);
    for (std::size_t i = 0; i < npx; ++i) {
        x[i] = a.px[i];
        y[i] = b.px[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    auto mx = conv_valid(x, a.h, a.w, k);
    auto my = conv_valid(y, a.h, a.w, k);
    auto mxx = conv_valid(xx, a.h, a.w, k);
    auto myy = conv_valid(yy, a.h, a.w, k);
    auto mxy = conv_valid(xy, a.h, a.w, k);

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // dynamic range 1
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        double vx = mxx[i] - mx[i] * mx[i];
        double vy = myy[i] - my[i] * my[i];
        double cxy = mxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(mx.size());
}

double ssim_score(const GrayImage& a, const GrayImage& b) {
    return ssim_score_windowed(a, b, 5, 1.5);
}

double corr_score(const GrayImage& a, const GrayImage& b, bool* degenerate) {
    require_same_dims(a, b, "corr_score");
    if (degenerate) *degenerate = false;
    double ma = 0.0, mb = 0.0;
    std::size_t npx = a.size();
    for (std::size_t i = 0; i < npx; ++i) {
        ma += a.px[i];
        mb += b.px[i];
    }
    ma /= static_cast<double>(npx);
    mb /= static_cast<double>(npx);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < npx; ++i) {
        double da = a.px[i] - ma, db = b.px[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va < 1e-12 || vb < 1e-12) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

MetricVector metric_vector(const BinaryTemplate& t, const GrayImage& probe,
                           const PreprocessParams& params) {
    Preprocessed pre = preprocess(probe, t, params);
    GrayImage ref = upsample(t, pre.gray.pps);
    MetricVector v;
    v.hamming = hamming_score(t, pre.bin);
    v.ssim = ssim_score(ref, pre.gray);
    v.jaccard = jaccard_score(t, pre.bin);
    v.corr = corr_score(ref, pre.gray);
    return v;
}

void save_metric_rows(const std::vector<MetricRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("save_metric_rows: cannot open " + path);
    out << "id,printer,class,hamming,ssim,jaccard,corr\n";
    for (const auto& r : rows)
        out << r.id << "," << r.printer << "," << r.cls << "," << fmt_fixed(r.v.hamming) << ","
            << fmt_fixed(r.v.ssim) << "," << fmt_fixed(r.v.jaccard) << "," << fmt_fixed(r.v.corr)
            << "\n";
}

std::vector<MetricRow> load_metric_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("load_metric_rows: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("load_metric_rows: empty file " + path);
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        MetricRow r;
        std::getline(ss, field, ',');
        r.id = std::stoll(field);
        std::getline(ss, r.printer, ',');
        std::getline(ss, r.cls, ',');
        std::getline(ss, field, ',');
        r.v.hamming = std::stod(field);
        std::getline(ss, field, ',');
        r.v.ssim = std::stod(field);
        std::getline(ss, field, ',');
        r.v.jaccard = std::stod(field);
        std::getline(ss, field, ',');
        r.v.corr = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace cdp
