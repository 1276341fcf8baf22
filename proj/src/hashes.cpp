#include "decoy/hashes.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <openssl/evp.h>

#include "decoy/error.hpp"

namespace decoy {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
        fail(errc::io, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

// Bilinear resample of a luma plane to (w, h).
std::vector<double> resample_luma(const screenshot& img, int w, int h) {
    std::vector<double> src = luma(img);
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    double sx = static_cast<double>(img.width) / w;
    double sy = static_cast<double>(img.height) / h;
    for (int y = 0; y < h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, img.height - 1);
        int y1c = std::clamp(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, img.width - 1);
            int x1c = std::clamp(x0 + 1, 0, img.width - 1);
            double top = src[static_cast<std::size_t>(y0c) * img.width + x0c] * (1.0 - wx) +
                         src[static_cast<std::size_t>(y0c) * img.width + x1c] * wx;
            double bot = src[static_cast<std::size_t>(y1c) * img.width + x0c] * (1.0 - wx) +
                         src[static_cast<std::size_t>(y1c) * img.width + x1c] * wx;
            out[static_cast<std::size_t>(y) * w + x] = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

} // namespace

std::uint64_t dhash64(const screenshot& img) {
    std::vector<double> g = resample_luma(img, 9, 8);
    std::uint64_t bits = 0;
    int i = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x, ++i)
            if (g[static_cast<std::size_t>(y) * 9 + x] > g[static_cast<std::size_t>(y) * 9 + x + 1])
                bits |= 1ull << i;
    return bits;
}

std::uint64_t phash64(const screenshot& img) {
    constexpr int n = 32;
    std::vector<double> g = resample_luma(img, n, n);
    // Separable DCT-II over rows then columns, low 8x8 block only.
    static thread_local std::vector<double> cos_table;
    if (cos_table.empty()) {
        cos_table.resize(static_cast<std::size_t>(n) * n);
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                cos_table[static_cast<std::size_t>(k) * n + i] =
                    std::cos((2.0 * i + 1.0) * k * 3.14159265358979323846 / (2.0 * n));
    }
    double block[8][8];
    std::vector<double> rows(static_cast<std::size_t>(n) * 8);
    for (int y = 0; y < n; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int x = 0; x < n; ++x)
                acc += g[static_cast<std::size_t>(y) * n + x] * cos_table[static_cast<std::size_t>(u) * n + x];
            rows[static_cast<std::size_t>(y) * 8 + u] = acc;
        }
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int y = 0; y < n; ++y)
                acc += rows[static_cast<std::size_t>(y) * 8 + u] * cos_table[static_cast<std::size_t>(v) * n + y];
            block[v][u] = acc;
        }
    double ac[63];
    int k = 0;
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u)
            if (u || v) ac[k++] = block[v][u];
    std::nth_element(ac, ac + 31, ac + 63);
    double median = ac[31];
    std::uint64_t bits = 0;
    int i = 0;
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u, ++i)
            if (block[v][u] > median) bits |= 1ull << i;
    return bits;
}

double laplacian_variance(const screenshot& img) {
    if (img.width < 3 || img.height < 3) return 0.0;
    std::vector<double> g = luma(img);
    auto at = [&](int x, int y) { return g[static_cast<std::size_t>(y) * img.width + x]; };
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < img.width; ++x) {
            double r = at(x + 1, y) + at(x - 1, y) + at(x, y + 1) + at(x, y - 1) - 4.0 * at(x, y);
            sum += r;
            sum2 += r * r;
            ++count;
        }
    }
    double mean = sum / count;
    return sum2 / count - mean * mean;
}

double alpha_coverage(const screenshot& img) {
    std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    if (n == 0) return 0.0;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (img.rgba[i * 4 + 3] != 0) ++covered;
    return static_cast<double>(covered) / static_cast<double>(n);
}

} // namespace decoy
