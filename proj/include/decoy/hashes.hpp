#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "decoy/image.hpp"

namespace decoy {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
inline std::string sha256_hex(const std::string& s) {
    return sha256_hex(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// Difference hash: 9x8 luma downsample, bit set where a pixel is brighter
// than its right neighbor. Robust to resizing/recompression; Hamming
// distance <= threshold flags near-duplicates.
std::uint64_t dhash64(const screenshot& img);

// Perceptual hash: 32x32 luma DCT, sign of the low 8x8 block against the
// median of its AC terms. Stored for analysis; dedup keys on dhash.
std::uint64_t phash64(const screenshot& img);

inline int hamming64(std::uint64_t a, std::uint64_t b) {
    return __builtin_popcountll(a ^ b);
}

// Population variance of the 4-neighbor Laplacian over interior luma pixels.
// Flat rasters score 0; any texture pushes it up quickly.
double laplacian_variance(const screenshot& img);

// Fraction of pixels with nonzero alpha.
double alpha_coverage(const screenshot& img);

} // namespace decoy
