#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "decoy/geometry.hpp"

namespace decoy {

// 8-bit straight-alpha RGBA raster.
struct screenshot {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgba;

    image_dims dims() const { return {width, height}; }
    bool valid() const {
        return width > 0 && height > 0 &&
               rgba.size() == static_cast<std::size_t>(width) * height * 4;
    }

    std::uint8_t* px(int x, int y) { return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
    const std::uint8_t* px(int x, int y) const {
        return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4;
    }
};

// Decodes any valid PNG (palette/gray/16-bit inputs are expanded) to RGBA8.
// Throws decode on malformed input.
screenshot decode_png(std::span<const std::uint8_t> bytes);

// Canonical encoder: RGBA8, no interlace, filter type 0 on every row, fixed
// zlib level. Output bytes are stable across runs, which is what attempt-log
// digests and the blob store rely on.
std::vector<std::uint8_t> encode_png(const screenshot& img);

screenshot load_png_file(const std::filesystem::path& path);
void save_png_file(const std::filesystem::path& path, const screenshot& img);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// SHA-256 of the canonical encoding; the content identity of an image.
std::string screenshot_digest(const screenshot& img);

screenshot resize_bilinear(const screenshot& src, int out_w, int out_h);

// Rect is clamped to the image; empty after clamping throws degenerate-placement.
screenshot crop(const screenshot& src, pixel_rect rect);

// Straight-alpha source-over of src onto dst at (ox, oy); parts falling
// outside dst are clipped.
void blend_over(screenshot& dst, const screenshot& src, int ox, int oy);

// Rec.601 luma per pixel, in [0,255].
std::vector<double> luma(const screenshot& img);

} // namespace decoy
