#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decoy/image.hpp"

namespace decoy {

struct filter_config {
    int min_side = 12;
    int max_side = 1024;
    double max_aspect = 8.0;
    double min_alpha_coverage = 0.05;
    double min_sharpness = 5.0;
};

enum class filter_reject { none, size, aspect, alpha, sharpness };

const char* filter_reject_name(filter_reject r);

struct filter_decision {
    bool accepted = false;
    filter_reject reason = filter_reject::none;
    double alpha = 0.0;
    double sharpness = 0.0;
};

filter_decision filter_candidate(const screenshot& img, const filter_config& cfg);

struct icon_record {
    std::int64_t id = -1;
    std::string source;
    std::string name; // original filename, for provenance
    int width = 0;
    int height = 0;
    std::string sha256;
    std::uint64_t dhash = 0;
    std::uint64_t phash = 0;
    double alpha_coverage = 0.0;
    double sharpness = 0.0;
};

// Streaming duplicate check, first seen wins: exact via sha256, near via
// dhash Hamming distance <= threshold.
class deduper {
public:
    explicit deduper(int hamming_threshold = 4) : threshold_(hamming_threshold) {}

    bool admit(const icon_record& rec);

private:
    int threshold_;
    std::map<std::string, std::int64_t> seen_sha_;
    std::vector<std::uint64_t> seen_dhash_;
};

// Reservoir sample (Algorithm R) preserving stream order of the survivors.
std::vector<std::size_t> reservoir_indices(std::size_t stream_size, std::size_t quota,
                                           std::uint64_t seed);

struct source_stats {
    std::size_t scanned = 0;
    std::size_t filtered = 0; // rejected by quality filters
    std::size_t duplicates = 0;
    std::size_t quota = 0;
    std::size_t achieved = 0;
};

struct pool_manifest {
    int version = 1;
    std::size_t total = 0;
    std::uint64_t seed = 0;
    int near_dup_hamming = 4;
    filter_config filters;
    std::map<std::string, source_stats> sources;
    std::string records_sha256;
    std::string index_sha256;
    // Reproducible builds: taken from SOURCE_DATE_EPOCH, else 0.
    std::int64_t built_unix = 0;
};

// Append-only blob store: blobs.bin + index.bin + records.jsonl + manifest.json.
class pool_writer {
public:
    explicit pool_writer(std::filesystem::path dir);
    ~pool_writer();

    std::int64_t put(icon_record rec, std::span<const std::uint8_t> png_bytes);
    void finalize(pool_manifest manifest);

private:
    std::filesystem::path dir_;
    std::vector<std::uint8_t> blobs_;
    std::vector<std::uint8_t> index_;
    std::string records_;
    std::int64_t next_id_ = 0;
    bool finalized_ = false;
};

class pool_reader {
public:
    static pool_reader open(const std::filesystem::path& dir);

    const pool_manifest& manifest() const { return manifest_; }
    const std::vector<icon_record>& records() const { return records_; }
    const icon_record& record(std::int64_t id) const;
    std::vector<std::uint8_t> get(std::int64_t id) const;
    std::size_t size() const { return records_.size(); }

private:
    std::filesystem::path dir_;
    pool_manifest manifest_;
    std::vector<icon_record> records_;
    struct index_entry {
        std::uint64_t offset;
        std::uint64_t length;
    };
    std::map<std::int64_t, index_entry> index_;
};

struct pool_build_options {
    filter_config filters;
    int near_dup_hamming = 4;
    std::uint64_t seed = 0;
    // Per-source icon quotas; sources without an entry use default_quota.
    std::map<std::string, std::size_t> quotas;
    std::size_t default_quota = 1000;
};

// Walks input_dir/<source>/*.png through filter -> dedup -> per-source
// reservoir -> store. Deterministic: sources and files in lexicographic
// order, sampling keyed on the seed.
pool_manifest build_pool(const std::filesystem::path& input_dir,
                         const std::filesystem::path& out_dir,
                         const pool_build_options& opts);

} // namespace decoy
