#include "cdp/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace cdp {

RocCurve roc(const std::vector<double>& orig_scores, const std::vector<double>& fake_scores,
             bool flip) {
    if (orig_scores.empty() || fake_scores.empty())
        throw ParameterError("roc: both score lists must be nonempty");

    std::vector<double> orig = orig_scores, fake = fake_scores;
    if (flip) {
        for (auto& s : orig) s = 1.0 - s;
        for (auto& s : fake) s = 1.0 - s;
    }
    std::sort(orig.begin(), orig.end());
    std::sort(fake.begin(), fake.end());

    // thresholds at every distinct pooled score, swept from high to low
    std::vector<double> thresholds;
    thresholds.reserve(orig.size() + fake.size());
    thresholds.insert(thresholds.end(), orig.begin(), orig.end());
    thresholds.insert(thresholds.end(), fake.begin(), fake.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve curve;
    curve.flipped = flip;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    double no = static_cast<double>(orig.size()), nf = static_cast<double>(fake.size());
    for (double tau : thresholds) {
        // count >= tau via lower_bound on ascending arrays
        auto ocnt = orig.end() - std::lower_bound(orig.begin(), orig.end(), tau);
        auto fcnt = fake.end() - std::lower_bound(fake.begin(), fake.end(), tau);
        curve.fpr.push_back(static_cast<double>(ocnt) / no);
        curve.tpr.push_back(static_cast<double>(fcnt) / nf);
    }
    if (curve.fpr.back() != 1.0 || curve.tpr.back() != 1.0) {
        curve.fpr.push_back(1.0);
        curve.tpr.push_back(1.0);
    }

    double auc = 0.0;
    for (std::size_t i = 1; i < curve.fpr.size(); ++i)
        auc += 0.5 * (curve.tpr[i] + curve.tpr[i - 1]) * (curve.fpr[i] - curve.fpr[i - 1]);
    curve.auc = auc;
    return curve;
}

DensityCurve kde(const std::vector<double>& scores, double bandwidth) {
    if (scores.size() < 2) throw ParameterError("kde: need at least 2 scores");

    double h = bandwidth;
    if (h <= 0.0) {
        // Silverman: 0.9 * min(std, iqr/1.34) * n^(-1/5)
        double n = static_cast<double>(scores.size());
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= n;
        double var = 0.0;
        for (double s : scores) var += (s - mean) * (s - mean);
        double sd = std::sqrt(var / (n - 1.0));

        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double q) {
            double idx = q * (n - 1.0);
            std::size_t lo = static_cast<std::size_t>(idx);
            std::size_t hi = std::min(lo + 1, sorted.size() - 1);
            double frac = idx - static_cast<double>(lo);
            return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
        };
        double iqr = quantile(0.75) - quantile(0.25);
        double spread = sd;
        if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
        h = 0.9 * spread * std::pow(n, -0.2);
        if (h <= 0.0) {
            double scale = std::max(std::abs(sorted.front()), std::abs(sorted.back()));
            h = scale > 0.0 ? 1e-6 * scale : 1e-9;  // degenerate sample
        }
    }

    auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
    double lo = *mn_it - 3.0 * h, hi = *mx_it + 3.0 * h;

    DensityCurve c;
    c.bandwidth = h;
    const int grid_n = 512;
    c.grid.resize(grid_n);
    c.density.resize(grid_n);
    double step = (hi - lo) / (grid_n - 1);
    double norm = 1.0 / (static_cast<double>(scores.size()) * h * std::sqrt(2.0 * 3.14159265358979323846));
    for (int i = 0; i < grid_n; ++i) {
        double x = lo + i * step;
        c.grid[i] = x;
        double acc = 0.0;
        for (double s : scores) {
            double u = (x - s) / h;
            acc += std::exp(-0.5 * u * u);
        }
        c.density[i] = acc * norm;
    }
    return c;
}

void scatter_table(const std::vector<LabeledVector>& vectors, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw FormatError("scatter_table: cannot open " + csv_path);
    out << "pair,metric_x,metric_y,class,x,y\n";
    int pair_idx = 0;
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            for (const auto& lv : vectors)
                out << pair_idx << "," << MetricVector::name(i) << "," << MetricVector::name(j)
                    << "," << lv.cls << "," << fmt_fixed(lv.v[i]) << "," << fmt_fixed(lv.v[j])
                    << "\n";
            ++pair_idx;
        }
    }
}

RegionRaster decision_region(const SvmModel& model, int resolution) {
    if (model.support_vectors.empty())
        throw ParameterError("decision_region: model has no support vectors");
    if (model.metric_subset.size() != 2)
        throw ParameterError("decision_region: model must be trained on exactly 2 metrics");
    if (resolution < 2) throw ParameterError("decision_region: resolution must be >= 2");

    RegionRaster r;
    r.resolution = resolution;
    r.x_lo = r.y_lo = 1e300;
    r.x_hi = r.y_hi = -1e300;
    for (const auto& sv : model.support_vectors) {
        r.x_lo = std::min(r.x_lo, sv[0]);
        r.x_hi = std::max(r.x_hi, sv[0]);
        r.y_lo = std::min(r.y_lo, sv[1]);
        r.y_hi = std::max(r.y_hi, sv[1]);
    }
    r.x_lo -= 1.0;
    r.x_hi += 1.0;
    r.y_lo -= 1.0;
    r.y_hi += 1.0;

    r.sign.resize(static_cast<std::size_t>(resolution) * resolution);
    for (int iy = 0; iy < resolution; ++iy) {
        double y = r.y_lo + (r.y_hi - r.y_lo) * iy / (resolution - 1);
        for (int ix = 0; ix < resolution; ++ix) {
            double x = r.x_lo + (r.x_hi - r.x_lo) * ix / (resolution - 1);
            // grid is in standardized space; undo standardization for the
            // raw-feature decision entry point
            std::vector<double> raw = {x * model.standardization.scale[0] +
                                           model.standardization.mean[0],
                                       y * model.standardization.scale[1] +
                                           model.standardization.mean[1]};
            double f = decision_value(model, raw);
            r.sign[static_cast<std::size_t>(iy) * resolution + ix] = f > 0.0 ? 1 : -1;
        }
    }
    return r;
}

namespace {

constexpr int kW = 640, kH = 480;
constexpr int kMargin = 56;

struct Axis {
    double lo, hi;
    double map(double v, int px_lo, int px_hi) const {
        if (hi - lo < 1e-300) return 0.5 * (px_lo + px_hi);
        return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
    }
};

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void svg_header(std::ofstream& out) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
        << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
}

void svg_axes(std::ofstream& out, const Axis& ax, const Axis& ay, const std::string& x_label,
              const std::string& y_label) {
    out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin - 40 << "\" width=\"" << kW - 2 * kMargin
        << "\" height=\"" << kH - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = ax.lo + (ax.hi - ax.lo) * i / 4.0;
        double px = ax.map(fx, kMargin, kW - kMargin);
        out << "<text x=\"" << fmt_fixed(px, 1) << "\" y=\"" << kH - kMargin + 36
            << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt_fixed(fx, 3) << "</text>\n";
        double fy = ay.lo + (ay.hi - ay.lo) * i / 4.0;
        double py = ay.map(fy, kH - kMargin - 40, kMargin - 40);
        out << "<text x=\"" << kMargin - 6 << "\" y=\"" << fmt_fixed(py + 4, 1)
            << "\" font-size=\"11\" text-anchor=\"end\">" << fmt_fixed(fy, 3) << "</text>\n";
    }
    out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8
        << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"14\" y=\"" << kH / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << kH / 2
        << ")\">" << y_label << "</text>\n";
}

}  // namespace

void write_svg_chart(const std::string& path, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_svg_chart: cannot open " + path);

    Axis ax{1e300, -1e300}, ay{1e300, -1e300};
    for (const auto& s : series) {
        for (double v : s.x) {
            ax.lo = std::min(ax.lo, v);
            ax.hi = std::max(ax.hi, v);
        }
        for (double v : s.y) {
            ay.lo = std::min(ay.lo, v);
            ay.hi = std::max(ay.hi, v);
        }
    }
    if (ax.lo > ax.hi) {
        ax = {0.0, 1.0};
        ay = {0.0, 1.0};
    }

    svg_header(out);
    svg_axes(out, ax, ay, x_label, y_label);
    int ci = 0;
    for (const auto& s : series) {
        const char* color = kPalette[ci % 6];
        if (s.points_only) {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << "<circle cx=\"" << fmt_fixed(ax.map(s.x[i], kMargin, kW - kMargin), 1)
                    << "\" cy=\"" << fmt_fixed(ay.map(s.y[i], kH - kMargin - 40, kMargin - 40), 1)
                    << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
        } else {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << fmt_fixed(ax.map(s.x[i], kMargin, kW - kMargin), 1) << ","
                    << fmt_fixed(ay.map(s.y[i], kH - kMargin - 40, kMargin - 40), 1) << " ";
            out << "\"/>\n";
        }
        out << "<text x=\"" << kW - kMargin - 150 << "\" y=\"" << kMargin - 20 + 16 * ci
            << "\" font-size=\"12\" fill=\"" << color << "\">" << s.label << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

void write_svg_region(const std::string& path, const RegionRaster& raster,
                      const std::vector<Series>& overlays, const std::string& x_label,
                      const std::string& y_label) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_svg_region: cannot open " + path);

    Axis ax{raster.x_lo, raster.x_hi}, ay{raster.y_lo, raster.y_hi};
    svg_header(out);

    int res = raster.resolution;
    double cw = static_cast<double>(kW - 2 * kMargin) / res;
    double ch = static_cast<double>(kH - 2 * kMargin) / res;
    for (int iy = 0; iy < res; ++iy) {
        for (int ix = 0; ix < res; ++ix) {
            bool accept = raster.sign[static_cast<std::size_t>(iy) * res + ix] > 0;
            // row iy maps bottom-up
            double px = kMargin + ix * cw;
            double py = (kH - kMargin - 40) - (iy + 1) * ch;
            out << "<rect x=\"" << fmt_fixed(px, 1) << "\" y=\"" << fmt_fixed(py, 1) << "\" width=\""
                << fmt_fixed(cw + 0.5, 1) << "\" height=\"" << fmt_fixed(ch + 0.5, 1) << "\" fill=\""
                << (accept ? "#c6dbef" : "#fcbba1") << "\"/>\n";
        }
    }
    svg_axes(out, ax, ay, x_label, y_label);
    int ci = 0;
    for (const auto& s : overlays) {
        const char* color = kPalette[ci % 6];
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << "<circle cx=\"" << fmt_fixed(ax.map(s.x[i], kMargin, kW - kMargin), 1)
                << "\" cy=\"" << fmt_fixed(ay.map(s.y[i], kH - kMargin - 40, kMargin - 40), 1)
                << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << kW - kMargin - 150 << "\" y=\"" << kMargin - 20 + 16 * ci
            << "\" font-size=\"12\" fill=\"" << color << "\">" << s.label << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

}  // namespace cdp
