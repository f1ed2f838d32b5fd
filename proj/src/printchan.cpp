#include "cdp/printchan.hpp"

#include <algorithm>
#include <cmath>

#include "cdp/png_io.hpp"
#include "cdp/rng.hpp"

namespace cdp {

void ChannelParams::validate() const {
    if (pps < 1) throw ParameterError("channel: pps must be >= 1");
    if (!(psf_sigma > 0.0)) throw ParameterError("channel: psf_sigma must be > 0");
    if (noise_std < 0.0) throw ParameterError("channel: noise_std must be >= 0");
    if (dot_gain < -0.5 || dot_gain > 0.5)
        throw ParameterError("channel: dot_gain must be in [-0.5, 0.5]");
}

PrinterProfile printer_preset(const std::string& tag) {
    // Two profiles with distinct ink spread and optics; values were fitted so
    // that symbol-level re-binarization of density-0.50 prints lands near a
    // 20% bit error for P55 and slightly below for P76.
    if (tag == "P55") {
        PrinterProfile p;
        p.tag = "P55";
        p.base = ChannelParams{8, 0.55, 0.12, 0.80, 0.10, 0.02, 0};
        p.dot_gain_jitter = 0.015;
        p.psf_jitter = 0.02;
        p.gain_jitter = 0.02;
        p.offset_jitter = 0.01;
        return p;
    }
    if (tag == "P76") {
        PrinterProfile p;
        p.tag = "P76";
        p.base = ChannelParams{8, 0.50, 0.09, 0.84, 0.08, 0.02, 0};
        p.dot_gain_jitter = 0.012;
        p.psf_jitter = 0.015;
        p.gain_jitter = 0.015;
        p.offset_jitter = 0.008;
        return p;
    }
    throw ParameterError("printer_preset: unknown printer tag '" + tag + "'");
}

ChannelParams draw_print_params(const PrinterProfile& profile, std::uint64_t seed) {
    Rng rng(hash2(seed, 0x70726e74ull));
    ChannelParams p = profile.base;
    p.dot_gain = std::clamp(p.dot_gain + profile.dot_gain_jitter * rng.normal(), -0.5, 0.5);
    p.psf_sigma = std::max(1e-3, p.psf_sigma + profile.psf_jitter * rng.normal());
    p.gain = p.gain + profile.gain_jitter * rng.normal();
    p.offset = p.offset + profile.offset_jitter * rng.normal();
    p.seed = seed;
    return p;
}

GrayImage upsample(const BinaryTemplate& t, int pps) {
    if (pps < 1) throw ParameterError("upsample: pps must be >= 1");
    GrayImage out(t.n * pps, t.m * pps, pps);
    for (int i = 0; i < t.n; ++i) {
        for (int j = 0; j < t.m; ++j) {
            float v = t.at(i, j) ? 1.0f : 0.0f;
            for (int dy = 0; dy < pps; ++dy) {
                float* row = &out.at(i * pps + dy, j * pps);
                std::fill(row, row + pps, v);
            }
        }
    }
    return out;
}

namespace {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
    return offs;
}

int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// Min (take_min) or max filter over an integer-radius disk.
std::vector<float> disk_extremum(const GrayImage& img, int radius, bool take_min) {
    std::vector<float> out(img.px.size());
    auto offs = disk_offsets(radius);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            float v = img.at(y, x);
            for (auto [dy, dx] : offs) {
                int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
                float u = img.at(yy, xx);
                v = take_min ? std::min(v, u) : std::max(v, u);
            }
            out[static_cast<std::size_t>(y) * img.w + x] = v;
        }
    }
    return out;
}

// Fractional-radius morphology: linear blend between the two nearest
// integer-radius filters, which keeps the response continuous and monotone
// in the radius.
void apply_dot_gain(GrayImage& img, double dot_gain, int pps) {
    double radius = std::abs(dot_gain) * pps;
    if (radius <= 0.0) return;
    bool grow_ink = dot_gain > 0.0;  // ink is low intensity, growth = min filter
    int r0 = static_cast<int>(std::floor(radius));
    int r1 = static_cast<int>(std::ceil(radius));
    double frac = radius - r0;

    std::vector<float> a = r0 == 0 ? img.px : disk_extremum(img, r0, grow_ink);
    if (r1 == r0 || frac == 0.0) {
        img.px = std::move(a);
        return;
    }
    std::vector<float> b = disk_extremum(img, r1, grow_ink);
    for (std::size_t k = 0; k < img.px.size(); ++k)
        img.px[k] = static_cast<float>((1.0 - frac) * a[k] + frac * b[k]);
}

std::vector<double> gaussian_kernel(double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        k[i + radius] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

void gaussian_blur(GrayImage& img, double sigma_px) {
    if (sigma_px <= 0.0) return;
    auto k = gaussian_kernel(sigma_px);
    int radius = (static_cast<int>(k.size()) - 1) / 2;
    std::vector<float> tmp(img.px.size());

    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img.at(y, reflect(x + i, img.w));
            tmp[static_cast<std::size_t>(y) * img.w + x] = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp[static_cast<std::size_t>(reflect(y + i, img.h)) * img.w + x];
            img.at(y, x) = static_cast<float>(acc);
        }
    }
}

}  // namespace

GrayImage simulate_print_scan(const BinaryTemplate& t, const ChannelParams& p) {
    p.validate();
    GrayImage img = upsample(t, p.pps);
    img.provenance = "original";

    apply_dot_gain(img, p.dot_gain, p.pps);
    gaussian_blur(img, p.psf_sigma * p.pps);

    Rng rng(hash2(p.seed, 0x7363616eull));
    for (auto& v : img.px) {
        double u = p.gain * v + p.offset;
        if (p.noise_std > 0.0) u += p.noise_std * rng.normal();
        v = static_cast<float>(clamp01(u));
    }
    return img;
}

GrayImage downscale(const GrayImage& img, int target_pps) {
    if (target_pps < 1) throw ParameterError("downscale: target_pps must be >= 1");
    if (target_pps > img.pps)
        throw ParameterError("downscale: target pps " + std::to_string(target_pps) +
                             " exceeds source pps " + std::to_string(img.pps));
    if (target_pps == img.pps) return img;
    if (img.h % img.pps != 0 || img.w % img.pps != 0)
        throw DimensionError("downscale: image dimensions not a multiple of pps");

    int n = img.h / img.pps, m = img.w / img.pps;
    GrayImage out(n * target_pps, m * target_pps, target_pps);
    out.provenance = img.provenance;
    out.printer = img.printer;
    double scale = static_cast<double>(img.pps) / target_pps;  // source pixels per target pixel

    // Area average with exact partial-overlap weights along each axis.
    auto axis_weights = [scale](int out_i, int limit) {
        double lo = out_i * scale, hi = (out_i + 1) * scale;
        int first = static_cast<int>(std::floor(lo));
        int last = std::min(limit - 1, static_cast<int>(std::ceil(hi)) - 1);
        std::vector<std::pair<int, double>> w;
        for (int s = first; s <= last; ++s) {
            double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
            if (overlap > 0.0) w.emplace_back(s, overlap);
        }
        return w;
    };

    for (int y = 0; y < out.h; ++y) {
        auto wy = axis_weights(y, img.h);
        for (int x = 0; x < out.w; ++x) {
            auto wx = axis_weights(x, img.w);
            double acc = 0.0, norm = 0.0;
            for (const auto& [sy, fy] : wy) {
                for (const auto& [sx, fx] : wx) {
                    acc += fy * fx * img.at(sy, sx);
                    norm += fy * fx;
                }
            }
            out.at(y, x) = static_cast<float>(acc / norm);
        }
    }
    return out;
}

RegisterResult register_probe(const GrayImage& probe, const BinaryTemplate& t, int max_shift) {
    GrayImage ref = upsample(t, probe.pps);
    if (probe.h < ref.h || probe.w < ref.w)
        throw DimensionError("register_probe: probe smaller than template at its pps");

    double ref_mean = 0.0;
    for (auto v : ref.px) ref_mean += v;
    ref_mean /= static_cast<double>(ref.size());
    double ref_var = 0.0;
    for (auto v : ref.px) ref_var += (v - ref_mean) * (v - ref_mean);

    int base_y = (probe.h - ref.h) / 2, base_x = (probe.w - ref.w) / 2;
    int best_dy = 0, best_dx = 0;
    double best_corr = -2.0;

    for (int dy = -max_shift; dy <= max_shift; ++dy) {
        int oy = base_y + dy;
        if (oy < 0 || oy + ref.h > probe.h) continue;
        for (int dx = -max_shift; dx <= max_shift; ++dx) {
            int ox = base_x + dx;
            if (ox < 0 || ox + ref.w > probe.w) continue;

            double sum = 0.0, sum2 = 0.0, cross = 0.0;
            for (int y = 0; y < ref.h; ++y) {
                const float* pr = &probe.px[static_cast<std::size_t>(oy + y) * probe.w + ox];
                const float* rr = &ref.px[static_cast<std::size_t>(y) * ref.w];
                for (int x = 0; x < ref.w; ++x) {
                    double v = pr[x];
                    sum += v;
                    sum2 += v * v;
                    cross += v * (rr[x] - ref_mean);
                }
            }
            double npix = static_cast<double>(ref.size());
            double var = sum2 - sum * sum / npix;
            double corr = 0.0;
            if (var > 1e-12 && ref_var > 1e-12) corr = cross / std::sqrt(var * ref_var);
            if (corr > best_corr) {
                best_corr = corr;
                best_dy = dy;
                best_dx = dx;
            }
        }
    }

    RegisterResult res;
    res.image = GrayImage(ref.h, ref.w, probe.pps);
    res.image.provenance = probe.provenance;
    res.image.printer = probe.printer;
    for (int y = 0; y < ref.h; ++y)
        for (int x = 0; x < ref.w; ++x)
            res.image.at(y, x) = probe.at(base_y + best_dy + y, base_x + best_dx + x);
    res.shift_y = -best_dy;
    res.shift_x = -best_dx;
    res.correlation = best_corr <= -2.0 ? 0.0 : best_corr;
    return res;
}

void save_gray(const GrayImage& img, const std::string& path) {
    std::vector<std::uint16_t> gray(img.size());
    for (std::size_t k = 0; k < img.size(); ++k)
        gray[k] = static_cast<std::uint16_t>(std::lround(clamp01(img.px[k]) * 65535.0));
    png::TextMap text{{"cdp:pps", std::to_string(img.pps)}};
    if (!img.provenance.empty()) text["cdp:provenance"] = img.provenance;
    if (!img.printer.empty()) text["cdp:printer"] = img.printer;
    png::write_gray16(path, img.h, img.w, gray, text);
}

GrayImage load_gray(const std::string& path) {
    png::GrayData d = png::read_gray(path);
    GrayImage img(d.h, d.w, 1);
    double denom = d.bit_depth == 16 ? 65535.0 : (1 << d.bit_depth) - 1;
    for (std::size_t k = 0; k < d.px.size(); ++k)
        img.px[k] = static_cast<float>(d.px[k] / denom);
    if (auto it = d.text.find("cdp:pps"); it != d.text.end()) img.pps = std::stoi(it->second);
    if (auto it = d.text.find("cdp:provenance"); it != d.text.end()) img.provenance = it->second;
    if (auto it = d.text.find("cdp:printer"); it != d.text.end()) img.printer = it->second;
    return img;
}

}  // namespace cdp
