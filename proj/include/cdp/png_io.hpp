#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cdp::png {

using TextMap = std::map<std::string, std::string>;

// 8-bit grayscale PNG. `gray` is row-major, one byte per pixel.
void write_gray8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& gray,
                 const TextMap& text = {});

// 16-bit grayscale PNG.
void write_gray16(const std::string& path, int h, int w, const std::vector<std::uint16_t>& gray,
                  const TextMap& text = {});

struct GrayData {
    int h = 0;
    int w = 0;
    int bit_depth = 0;                  // 1..16 as stored in the file
    std::vector<std::uint16_t> px;      // sample values at native depth
    TextMap text;
};

// Reads any grayscale PNG (bit depth 1/2/4/8/16). Color images are rejected.
GrayData read_gray(const std::string& path);

}  // namespace cdp::png
