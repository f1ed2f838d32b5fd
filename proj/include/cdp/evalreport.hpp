#pragma once

#include <string>
#include <vector>

#include "cdp/classify.hpp"

namespace cdp {

// Detection framing: fakes are the positive class. After the optional
// s -> 1-s flip, higher scores must mean "more fake-like"; TPR is the
// fraction of fakes at or above a threshold, FPR the fraction of originals.
struct RocCurve {
    std::vector<double> fpr;  // ascending with tpr, (0,0) .. (1,1)
    std::vector<double> tpr;
    double auc = 0.0;
    bool flipped = false;
};

RocCurve roc(const std::vector<double>& orig_scores, const std::vector<double>& fake_scores,
             bool flip);

struct DensityCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};

// Gaussian KDE on a 512-point grid spanning the data +- 3 bandwidths.
// bandwidth <= 0 selects Silverman's rule.
DensityCurve kde(const std::vector<double>& scores, double bandwidth = 0.0);

struct LabeledVector {
    std::string cls;
    MetricVector v;
};

// All 6 metric pairs with class labels, one CSV per pair column block:
// pair,metric_i,metric_j,class,x,y
void scatter_table(const std::vector<LabeledVector>& vectors, const std::string& csv_path);

struct RegionRaster {
    int resolution = 0;
    double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;  // standardized-feature box
    std::vector<std::int8_t> sign;  // row-major, +1 accept (original) / -1 reject
};

// Decision signs of a 2-feature model over the standardized bounding box of
// its support vectors padded by 1.
RegionRaster decision_region(const SvmModel& model, int resolution);

// Minimal SVG emitters (axes + series, no external plotting dependency).
struct Series {
    std::string label;
    std::vector<double> x, y;
    bool points_only = false;
};
void write_svg_chart(const std::string& path, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series);
void write_svg_region(const std::string& path, const RegionRaster& raster,
                      const std::vector<Series>& overlays, const std::string& x_label,
                      const std::string& y_label);

}  // namespace cdp
