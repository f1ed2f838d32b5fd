#include "cdp/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "cdp/common.hpp"

namespace cdp::png {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_to_exception(png_structp, png_const_charp msg) {
    throw FormatError(std::string("png: ") + msg);
}

void png_warn_silent(png_structp, png_const_charp) {}

void set_text(png_structp p, png_infop info, const TextMap& text) {
    if (text.empty()) return;
    std::vector<png_text> entries(text.size());
    std::size_t i = 0;
    for (const auto& [k, v] : text) {
        entries[i] = png_text{};
        entries[i].compression = PNG_TEXT_COMPRESSION_NONE;
        entries[i].key = const_cast<char*>(k.c_str());
        entries[i].text = const_cast<char*>(v.c_str());
        entries[i].text_length = v.size();
        ++i;
    }
    png_set_text(p, info, entries.data(), static_cast<int>(entries.size()));
}

void write_gray(const std::string& path, int h, int w, int depth, const void* data,
                std::size_t bytes_per_row, const TextMap& text) {
    if (h <= 0 || w <= 0) throw ParameterError("png write: non-positive dimensions");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("png write: cannot open " + path);

    png_structp p = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_to_exception, png_warn_silent);
    if (!p) throw FormatError("png write: init failed");
    png_infop info = png_create_info_struct(p);
    if (!info) {
        png_destroy_write_struct(&p, nullptr);
        throw FormatError("png write: info init failed");
    }

    try {
        png_init_io(p, f.get());
        png_set_IHDR(p, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
                     PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        set_text(p, info, text);
        png_write_info(p, info);
        if (depth == 16) png_set_swap(p);  // in-memory samples are host-endian

        const auto* base = static_cast<const unsigned char*>(data);
        for (int y = 0; y < h; ++y)
            png_write_row(p, const_cast<png_bytep>(base + y * bytes_per_row));
        png_write_end(p, info);
    } catch (...) {
        png_destroy_write_struct(&p, &info);
        throw;
    }
    png_destroy_write_struct(&p, &info);
}

}  // namespace

void write_gray8(const std::string& path, int h, int w, const std::vector<std::uint8_t>& gray,
                 const TextMap& text) {
    if (gray.size() != static_cast<std::size_t>(h) * w)
        throw ParameterError("png write: pixel count mismatch");
    write_gray(path, h, w, 8, gray.data(), static_cast<std::size_t>(w), text);
}

void write_gray16(const std::string& path, int h, int w, const std::vector<std::uint16_t>& gray,
                  const TextMap& text) {
    if (gray.size() != static_cast<std::size_t>(h) * w)
        throw ParameterError("png write: pixel count mismatch");
    write_gray(path, h, w, 16, gray.data(), static_cast<std::size_t>(w) * 2, text);
}

GrayData read_gray(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("png read: cannot open " + path);

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw FormatError("png read: not a PNG file: " + path);

    png_structp p = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_to_exception, png_warn_silent);
    if (!p) throw FormatError("png read: init failed");
    png_infop info = png_create_info_struct(p);
    if (!info) {
        png_destroy_read_struct(&p, nullptr, nullptr);
        throw FormatError("png read: info init failed");
    }

    GrayData out;
    try {
        png_init_io(p, f.get());
        png_set_sig_bytes(p, 8);
        png_read_info(p, info);

        int color = png_get_color_type(p, info);
        if (color != PNG_COLOR_TYPE_GRAY)
            throw FormatError("png read: expected grayscale image: " + path);
        out.bit_depth = png_get_bit_depth(p, info);
        out.h = static_cast<int>(png_get_image_height(p, info));
        out.w = static_cast<int>(png_get_image_width(p, info));

        // Normalize storage: sub-byte depths unpacked to one sample per byte,
        // 16-bit kept as-is (host endian after swap).
        if (out.bit_depth < 8) png_set_packing(p);
        if (out.bit_depth == 16) png_set_swap(p);
        png_read_update_info(p, info);

        std::size_t rowbytes = png_get_rowbytes(p, info);
        std::vector<unsigned char> row(rowbytes);
        out.px.resize(static_cast<std::size_t>(out.h) * out.w);
        for (int y = 0; y < out.h; ++y) {
            png_read_row(p, row.data(), nullptr);
            if (out.bit_depth == 16) {
                const auto* r16 = reinterpret_cast<const std::uint16_t*>(row.data());
                for (int x = 0; x < out.w; ++x)
                    out.px[static_cast<std::size_t>(y) * out.w + x] = r16[x];
            } else {
                for (int x = 0; x < out.w; ++x)
                    out.px[static_cast<std::size_t>(y) * out.w + x] = row[x];
            }
        }

        png_textp texts = nullptr;
        int ntext = 0;
        png_get_text(p, info, &texts, &ntext);
        for (int i = 0; i < ntext; ++i)
            if (texts[i].key && texts[i].text) out.text[texts[i].key] = texts[i].text;
        png_read_end(p, nullptr);
    } catch (...) {
        png_destroy_read_struct(&p, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&p, &info, nullptr);
    return out;
}

}  // namespace cdp::png
