#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "cadx/error.hpp"

namespace cadx::imaging {

/// Row-major raster. `Tag` keeps images and masks from mixing.
template <typename Tag>
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) fail(ErrorCode::InvalidArgument, "raster dimensions must be >= 1");
        pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }

    [[nodiscard]] std::size_t size() const { return pixels.size(); }
    [[nodiscard]] bool empty() const { return pixels.empty(); }
    [[nodiscard]] bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    template <typename OtherTag>
    [[nodiscard]] bool same_shape(const Raster<OtherTag>& o) const {
        return width == o.width && height == o.height;
    }

    bool operator==(const Raster&) const = default;
};

struct ImageTag {};
struct MaskTag {};

/// 8-bit grayscale intensities.
using Image = Raster<ImageTag>;
/// Binary segmentation; every pixel is 0 or 1.
using Mask = Raster<MaskTag>;

struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] bool inside(int width, int height) const {
        return x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= width && y + h <= height;
    }
    bool operator==(const BBox&) const = default;
};

/// Tight bounding box of the nonzero mask pixels; w == 0 when the mask is empty.
inline BBox mask_bbox(const Mask& mask) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline Mask mask_from_image(const Image& img) {
    Mask m(img.width, img.height);
    std::transform(img.pixels.begin(), img.pixels.end(), m.pixels.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
    return m;
}

namespace detail {

// Binary (P5) and ASCII (P2) portable graymaps, maxval <= 255.
inline Image decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 2;
    const bool ascii = bytes[1] == '2';

    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) -> long {
        skip_space_and_comments();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
            fail(ErrorCode::CorruptData, std::string("PGM: truncated or invalid ") + what);
        }
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) fail(ErrorCode::CorruptData, std::string("PGM: ") + what + " too large");
            ++pos;
        }
        return v;
    };

    const long w = read_uint("width");
    const long h = read_uint("height");
    const long maxval = read_uint("maxval");
    if (w < 1 || h < 1) fail(ErrorCode::CorruptData, "PGM: zero dimension");
    if (maxval < 1 || maxval > 255) fail(ErrorCode::UnsupportedFormat, "PGM: only 8-bit maxval supported");

    Image img(static_cast<int>(w), static_cast<int>(h));
    if (ascii) {
        for (auto& p : img.pixels) {
            const long v = read_uint("pixel");
            if (v > maxval) fail(ErrorCode::CorruptData, "PGM: pixel above maxval");
            p = static_cast<std::uint8_t>(v);
        }
        return img;
    }
    // exactly one whitespace byte separates the header from the raster
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorCode::CorruptData, "PGM: truncated header");
    ++pos;
    if (bytes.size() - pos < img.size()) fail(ErrorCode::CorruptData, "PGM: truncated raster");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.size(), img.pixels.begin());
    return img;
}

inline Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        std::string msg = png.message;
        png_image_free(&png);
        fail(ErrorCode::CorruptData, "PNG: " + msg);
    }
    if ((png.format & PNG_FORMAT_FLAG_COLOR) != 0 || (png.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
        png_image_free(&png);
        fail(ErrorCode::UnsupportedFormat, "PNG: only 8-bit grayscale is supported");
    }
    png.format = PNG_FORMAT_GRAY;
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        fail(ErrorCode::CorruptData, "PNG: " + msg);
    }
    return img;
}

}  // namespace detail

/// Decodes binary/ASCII PGM or 8-bit grayscale PNG, sniffed from the magic bytes.
inline Image decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(bytes.begin(), bytes.begin() + 8, kPngMagic)) {
        return detail::decode_png(bytes);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '2')) {
        return detail::decode_pgm(bytes);
    }
    if (bytes.size() < 2) fail(ErrorCode::CorruptData, "image data too short");
    fail(ErrorCode::UnsupportedFormat, "unrecognized image format");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::FileNotFound, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Image load_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_image(bytes);
}

template <typename Tag>
std::vector<std::uint8_t> encode_pgm(const Raster<Tag>& img) {
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::IoError, std::string("PNG encode: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::IoError, std::string("PNG encode: ") + png.message);
    }
    out.resize(size);
    return out;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace cadx::imaging
