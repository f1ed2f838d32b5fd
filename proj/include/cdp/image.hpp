#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdp/common.hpp"

namespace cdp {

// Binary pattern. Bit convention: 0 = black ink, 1 = white substrate.
// Density is the target probability of black, i.e. P[bit = 0].
struct BinaryTemplate {
    int n = 0;  // rows (symbols)
    int m = 0;  // cols (symbols)
    double density = 0.0;
    std::int64_t id = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> bits;  // row-major, values in {0,1}

    std::uint8_t at(int i, int j) const { return bits[static_cast<std::size_t>(i) * m + j]; }
    std::uint8_t& at(int i, int j) { return bits[static_cast<std::size_t>(i) * m + j]; }
    std::size_t size() const { return bits.size(); }
};

// Grayscale intensity image, pixels in [0,1]. pps = pixels per printed
// symbol; a registered image of an n x m template has h = n*pps, w = m*pps.
struct GrayImage {
    int h = 0;
    int w = 0;
    int pps = 1;
    std::string provenance;  // "original" | "fake" | "estimate-render"
    std::string printer;     // channel preset tag, empty for synthetic images
    std::vector<float> px;   // row-major

    GrayImage() = default;
    GrayImage(int height, int width, int pixels_per_symbol, float fill = 0.0f)
        : h(height), w(width), pps(pixels_per_symbol),
          px(static_cast<std::size_t>(height) * width, fill) {}

    float at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
    float& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return px.size(); }
};

inline void require_same_dims(const GrayImage& a, const GrayImage& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw DimensionError(std::string(what) + ": image dimensions differ (" +
                             std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                             std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
}

inline void require_same_dims(const BinaryTemplate& a, const BinaryTemplate& b, const char* what) {
    if (a.n != b.n || a.m != b.m)
        throw DimensionError(std::string(what) + ": template dimensions differ (" +
                             std::to_string(a.n) + "x" + std::to_string(a.m) + " vs " +
                             std::to_string(b.n) + "x" + std::to_string(b.m) + ")");
}

}  // namespace cdp
