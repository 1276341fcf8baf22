#include "decoy/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <png.h>
#include <zlib.h>

#include "decoy/error.hpp"
#include "decoy/hashes.hpp"

namespace decoy {

screenshot decode_png(std::span<const std::uint8_t> bytes) {
    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size()))
        fail(errc::decode, std::string("png read: ") + pi.message);
    pi.format = PNG_FORMAT_RGBA;
    screenshot img;
    img.width = static_cast<int>(pi.width);
    img.height = static_cast<int>(pi.height);
    img.rgba.resize(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, img.rgba.data(), 0, nullptr)) {
        png_image_free(&pi);
        fail(errc::decode, std::string("png decode: ") + pi.message);
    }
    return img;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::uint8_t* data, std::size_t len) {
    put_u32(out, static_cast<std::uint32_t>(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, out.data() + start, static_cast<uInt>(4 + len)));
    put_u32(out, crc);
}

} // namespace

std::vector<std::uint8_t> encode_png(const screenshot& img) {
    if (!img.valid()) fail(errc::decode, "encode_png: invalid raster");

    // Raw stream: each row prefixed with filter byte 0.
    std::size_t stride = static_cast<std::size_t>(img.width) * 4;
    std::vector<std::uint8_t> raw((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        row[0] = 0;
        std::memcpy(row + 1, img.rgba.data() + static_cast<std::size_t>(y) * stride, stride);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> deflated(bound);
    if (compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        fail(errc::decode, "encode_png: deflate failed");
    deflated.resize(bound);

    std::vector<std::uint8_t> out;
    out.reserve(deflated.size() + 128);
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.width);
    ihdr[4] = static_cast<std::uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.height);
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 6;  // RGBA
    ihdr[10] = 0; // deflate
    ihdr[11] = 0; // adaptive filtering (we always pick type 0)
    ihdr[12] = 0; // no interlace
    put_chunk(out, "IHDR", ihdr, sizeof(ihdr));
    put_chunk(out, "IDAT", deflated.data(), deflated.size());
    put_chunk(out, "IEND", nullptr, 0);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(errc::io, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

screenshot load_png_file(const std::filesystem::path& path) {
    return decode_png(read_file(path));
}

void save_png_file(const std::filesystem::path& path, const screenshot& img) {
    write_file(path, encode_png(img));
}

std::string screenshot_digest(const screenshot& img) {
    return sha256_hex(encode_png(img));
}

screenshot resize_bilinear(const screenshot& src, int out_w, int out_h) {
    if (!src.valid() || out_w <= 0 || out_h <= 0)
        fail(errc::degenerate_placement, "resize to empty raster");
    screenshot out;
    out.width = out_w;
    out.height = out_h;
    out.rgba.resize(static_cast<std::size_t>(out_w) * out_h * 4);
    double sx = static_cast<double>(src.width) / out_w;
    double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, src.height - 1);
        int y1c = std::clamp(y0 + 1, 0, src.height - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, src.width - 1);
            int x1c = std::clamp(x0 + 1, 0, src.width - 1);
            const std::uint8_t* p00 = src.px(x0c, y0c);
            const std::uint8_t* p10 = src.px(x1c, y0c);
            const std::uint8_t* p01 = src.px(x0c, y1c);
            const std::uint8_t* p11 = src.px(x1c, y1c);
            std::uint8_t* q = out.px(x, y);
            for (int c = 0; c < 4; ++c) {
                double top = p00[c] * (1.0 - wx) + p10[c] * wx;
                double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
                double v = top * (1.0 - wy) + bot * wy;
                q[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

screenshot crop(const screenshot& src, pixel_rect rect) {
    int x1 = std::clamp(rect.x, 0, src.width);
    int y1 = std::clamp(rect.y, 0, src.height);
    int x2 = std::clamp(rect.x + rect.w, 0, src.width);
    int y2 = std::clamp(rect.y + rect.h, 0, src.height);
    if (x2 <= x1 || y2 <= y1)
        fail(errc::degenerate_placement, "crop rect empty after clamping");
    screenshot out;
    out.width = x2 - x1;
    out.height = y2 - y1;
    out.rgba.resize(static_cast<std::size_t>(out.width) * out.height * 4);
    for (int y = y1; y < y2; ++y)
        std::memcpy(out.px(0, y - y1), src.px(x1, y), static_cast<std::size_t>(out.width) * 4);
    return out;
}

void blend_over(screenshot& dst, const screenshot& src, int ox, int oy) {
    int x1 = std::max(0, ox);
    int y1 = std::max(0, oy);
    int x2 = std::min(dst.width, ox + src.width);
    int y2 = std::min(dst.height, oy + src.height);
    for (int y = y1; y < y2; ++y) {
        for (int x = x1; x < x2; ++x) {
            const std::uint8_t* s = src.px(x - ox, y - oy);
            std::uint8_t* d = dst.px(x, y);
            double sa = s[3] / 255.0;
            double da = d[3] / 255.0;
            double oa = sa + da * (1.0 - sa);
            if (oa <= 0.0) {
                d[0] = d[1] = d[2] = d[3] = 0;
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                double v = (s[c] * sa + d[c] * da * (1.0 - sa)) / oa;
                d[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
            d[3] = static_cast<std::uint8_t>(std::clamp(std::floor(oa * 255.0 + 0.5), 0.0, 255.0));
        }
    }
}

std::vector<double> luma(const screenshot& img) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t* p = img.px(x, y);
            out[static_cast<std::size_t>(y) * img.width + x] =
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        }
    }
    return out;
}

} // namespace decoy
