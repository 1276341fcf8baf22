#include "decoy/pool.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "decoy/error.hpp"
#include "decoy/hashes.hpp"
#include "decoy/rng.hpp"

namespace decoy {

using nlohmann::json;

const char* filter_reject_name(filter_reject r) {
    switch (r) {
    case filter_reject::none:      return "none";
    case filter_reject::size:      return "size";
    case filter_reject::aspect:    return "aspect";
    case filter_reject::alpha:     return "alpha";
    case filter_reject::sharpness: return "sharpness";
    }
    return "unknown";
}

filter_decision filter_candidate(const screenshot& img, const filter_config& cfg) {
    filter_decision d;
    int lo = std::min(img.width, img.height);
    int hi = std::max(img.width, img.height);
    if (lo < cfg.min_side || hi > cfg.max_side) {
        d.reason = filter_reject::size;
        return d;
    }
    if (static_cast<double>(hi) / lo > cfg.max_aspect) {
        d.reason = filter_reject::aspect;
        return d;
    }
    d.alpha = alpha_coverage(img);
    if (d.alpha < cfg.min_alpha_coverage) {
        d.reason = filter_reject::alpha;
        return d;
    }
    d.sharpness = laplacian_variance(img);
    if (d.sharpness < cfg.min_sharpness) {
        d.reason = filter_reject::sharpness;
        return d;
    }
    d.accepted = true;
    return d;
}

bool deduper::admit(const icon_record& rec) {
    if (seen_sha_.count(rec.sha256)) return false;
    for (std::uint64_t h : seen_dhash_)
        if (hamming64(h, rec.dhash) <= threshold_) return false;
    seen_sha_.emplace(rec.sha256, rec.id);
    seen_dhash_.push_back(rec.dhash);
    return true;
}

std::vector<std::size_t> reservoir_indices(std::size_t stream_size, std::size_t quota,
                                           std::uint64_t seed) {
    splitmix64 rng(seed);
    if (quota == 0) return {};
    std::vector<std::size_t> reservoir;
    reservoir.reserve(std::min(stream_size, quota));
    for (std::size_t i = 0; i < stream_size; ++i) {
        if (reservoir.size() < quota) {
            reservoir.push_back(i);
        } else {
            std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
            if (j < quota) reservoir[j] = i;
        }
    }
    std::sort(reservoir.begin(), reservoir.end());
    return reservoir;
}

namespace {

json record_to_json(const icon_record& r) {
    return json{{"id", r.id},
                {"source", r.source},
                {"name", r.name},
                {"width", r.width},
                {"height", r.height},
                {"sha256", r.sha256},
                {"dhash", r.dhash},
                {"phash", r.phash},
                {"alpha_coverage", r.alpha_coverage},
                {"sharpness", r.sharpness}};
}

icon_record record_from_json(const json& j) {
    icon_record r;
    r.id = j.at("id").get<std::int64_t>();
    r.source = j.at("source").get<std::string>();
    r.name = j.value("name", std::string{});
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.sha256 = j.at("sha256").get<std::string>();
    r.dhash = j.at("dhash").get<std::uint64_t>();
    r.phash = j.at("phash").get<std::uint64_t>();
    r.alpha_coverage = j.at("alpha_coverage").get<double>();
    r.sharpness = j.at("sharpness").get<double>();
    return r;
}

json manifest_to_json(const pool_manifest& m) {
    json sources = json::object();
    for (const auto& [tag, s] : m.sources)
        sources[tag] = {{"scanned", s.scanned},   {"filtered", s.filtered},
                        {"duplicates", s.duplicates}, {"quota", s.quota},
                        {"achieved", s.achieved}};
    return json{{"version", m.version},
                {"total", m.total},
                {"seed", m.seed},
                {"near_dup_hamming", m.near_dup_hamming},
                {"filters",
                 {{"min_side", m.filters.min_side},
                  {"max_side", m.filters.max_side},
                  {"max_aspect", m.filters.max_aspect},
                  {"min_alpha_coverage", m.filters.min_alpha_coverage},
                  {"min_sharpness", m.filters.min_sharpness}}},
                {"sources", sources},
                {"records_sha256", m.records_sha256},
                {"index_sha256", m.index_sha256},
                {"built_unix", m.built_unix}};
}

pool_manifest manifest_from_json(const json& j) {
    pool_manifest m;
    m.version = j.at("version").get<int>();
    m.total = j.at("total").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.near_dup_hamming = j.at("near_dup_hamming").get<int>();
    const json& f = j.at("filters");
    m.filters.min_side = f.at("min_side").get<int>();
    m.filters.max_side = f.at("max_side").get<int>();
    m.filters.max_aspect = f.at("max_aspect").get<double>();
    m.filters.min_alpha_coverage = f.at("min_alpha_coverage").get<double>();
    m.filters.min_sharpness = f.at("min_sharpness").get<double>();
    for (const auto& [tag, s] : j.at("sources").items()) {
        source_stats st;
        st.scanned = s.at("scanned").get<std::size_t>();
        st.filtered = s.at("filtered").get<std::size_t>();
        st.duplicates = s.at("duplicates").get<std::size_t>();
        st.quota = s.at("quota").get<std::size_t>();
        st.achieved = s.at("achieved").get<std::size_t>();
        m.sources[tag] = st;
    }
    m.records_sha256 = j.at("records_sha256").get<std::string>();
    m.index_sha256 = j.at("index_sha256").get<std::string>();
    m.built_unix = j.at("built_unix").get<std::int64_t>();
    return m;
}

void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

constexpr char k_index_magic[8] = {'D', 'C', 'O', 'Y', 'I', 'D', 'X', '1'};

} // namespace

pool_writer::pool_writer(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    index_.insert(index_.end(), k_index_magic, k_index_magic + 8);
}

pool_writer::~pool_writer() = default;

std::int64_t pool_writer::put(icon_record rec, std::span<const std::uint8_t> png_bytes) {
    if (finalized_) fail(errc::io, "pool_writer already finalized");
    rec.id = next_id_++;
    put_u64le(index_, static_cast<std::uint64_t>(rec.id));
    put_u64le(index_, blobs_.size());
    put_u64le(index_, png_bytes.size());
    blobs_.insert(blobs_.end(), png_bytes.begin(), png_bytes.end());
    records_ += record_to_json(rec).dump() + "\n";
    return rec.id;
}

void pool_writer::finalize(pool_manifest manifest) {
    if (finalized_) fail(errc::io, "pool_writer already finalized");
    finalized_ = true;
    manifest.total = static_cast<std::size_t>(next_id_);
    manifest.records_sha256 = sha256_hex(records_);
    manifest.index_sha256 = sha256_hex(index_);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
        manifest.built_unix = std::strtoll(epoch, nullptr, 10);
    write_file(dir_ / "blobs.bin", blobs_);
    write_file(dir_ / "index.bin", index_);
    write_text_file(dir_ / "records.jsonl", records_);
    write_text_file(dir_ / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

pool_reader pool_reader::open(const std::filesystem::path& dir) {
    pool_reader r;
    r.dir_ = dir;
    json mj;
    try {
        mj = json::parse(read_text_file(dir / "manifest.json"));
        r.manifest_ = manifest_from_json(mj);
    } catch (const error&) {
        throw;
    } catch (const std::exception& e) {
        fail(errc::store_corrupt, "pool manifest unreadable: " + std::string(e.what()));
    }

    std::string records_text = read_text_file(dir / "records.jsonl");
    if (sha256_hex(records_text) != r.manifest_.records_sha256)
        fail(errc::store_corrupt, "records.jsonl digest mismatch");
    auto index_bytes = read_file(dir / "index.bin");
    if (sha256_hex(index_bytes) != r.manifest_.index_sha256)
        fail(errc::store_corrupt, "index.bin digest mismatch");
    if (index_bytes.size() < 8 || std::memcmp(index_bytes.data(), k_index_magic, 8) != 0 ||
        (index_bytes.size() - 8) % 24 != 0)
        fail(errc::store_corrupt, "index.bin malformed");

    std::size_t entries = (index_bytes.size() - 8) / 24;
    for (std::size_t i = 0; i < entries; ++i) {
        const std::uint8_t* p = index_bytes.data() + 8 + i * 24;
        std::int64_t id = static_cast<std::int64_t>(get_u64le(p));
        r.index_[id] = {get_u64le(p + 8), get_u64le(p + 16)};
    }

    std::size_t start = 0;
    while (start < records_text.size()) {
        std::size_t end = records_text.find('\n', start);
        if (end == std::string::npos) end = records_text.size();
        std::string line = records_text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        try {
            r.records_.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            fail(errc::store_corrupt, "records.jsonl malformed: " + std::string(e.what()));
        }
    }
    if (r.records_.size() != entries || r.records_.size() != r.manifest_.total)
        fail(errc::store_corrupt, "pool record/index/manifest counts disagree");
    return r;
}

const icon_record& pool_reader::record(std::int64_t id) const {
    // Ids are assigned sequentially by the writer, so position usually equals id.
    if (id >= 0 && static_cast<std::size_t>(id) < records_.size() &&
        records_[static_cast<std::size_t>(id)].id == id)
        return records_[static_cast<std::size_t>(id)];
    for (const auto& rec : records_)
        if (rec.id == id) return rec;
    fail(errc::not_found, "icon id " + std::to_string(id) + " not in pool");
}

std::vector<std::uint8_t> pool_reader::get(std::int64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(errc::not_found, "icon id " + std::to_string(id) + " not in pool");
    std::ifstream in(dir_ / "blobs.bin", std::ios::binary);
    if (!in) fail(errc::io, "cannot open blobs.bin");
    in.seekg(static_cast<std::streamoff>(it->second.offset));
    std::vector<std::uint8_t> bytes(it->second.length);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) fail(errc::store_corrupt, "blobs.bin truncated");
    if (sha256_hex(bytes) != record(id).sha256)
        fail(errc::store_corrupt, "blob digest mismatch for icon " + std::to_string(id));
    return bytes;
}

pool_manifest build_pool(const std::filesystem::path& input_dir,
                         const std::filesystem::path& out_dir,
                         const pool_build_options& opts) {
    if (!std::filesystem::is_directory(input_dir))
        fail(errc::config, "pool input is not a directory: " + input_dir.string());

    std::vector<std::string> sources;
    for (const auto& e : std::filesystem::directory_iterator(input_dir))
        if (e.is_directory()) sources.push_back(e.path().filename().string());
    std::sort(sources.begin(), sources.end());
    if (sources.empty()) fail(errc::config, "pool input has no source subdirectories");

    struct candidate {
        icon_record rec;
        std::filesystem::path path;
    };

    pool_manifest manifest;
    manifest.seed = opts.seed;
    manifest.near_dup_hamming = opts.near_dup_hamming;
    manifest.filters = opts.filters;

    deduper dedup(opts.near_dup_hamming);
    std::map<std::string, std::vector<candidate>> survivors;

    for (const auto& source : sources) {
        source_stats stats;
        auto quota_it = opts.quotas.find(source);
        stats.quota = quota_it != opts.quotas.end() ? quota_it->second : opts.default_quota;

        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(input_dir / source))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());

        for (const auto& path : files) {
            ++stats.scanned;
            std::vector<std::uint8_t> bytes;
            screenshot img;
            try {
                bytes = read_file(path);
                img = decode_png(bytes);
            } catch (const error&) {
                ++stats.filtered;
                continue;
            }
            filter_decision fd = filter_candidate(img, opts.filters);
            if (!fd.accepted) {
                ++stats.filtered;
                continue;
            }
            icon_record rec;
            rec.source = source;
            rec.name = path.filename().string();
            rec.width = img.width;
            rec.height = img.height;
            rec.sha256 = sha256_hex(bytes);
            rec.dhash = dhash64(img);
            rec.phash = phash64(img);
            rec.alpha_coverage = fd.alpha;
            rec.sharpness = fd.sharpness;
            if (!dedup.admit(rec)) {
                ++stats.duplicates;
                continue;
            }
            survivors[source].push_back({std::move(rec), path});
        }
        manifest.sources[source] = stats;
    }

    pool_writer writer(out_dir);
    for (const auto& source : sources) {
        auto& stats = manifest.sources[source];
        const auto& cands = survivors[source];
        auto picks = reservoir_indices(cands.size(), stats.quota,
                                       mix64(opts.seed, hash64(source)));
        stats.achieved = picks.size();
        for (std::size_t idx : picks)
            writer.put(cands[idx].rec, read_file(cands[idx].path));
        manifest.total += stats.achieved;
    }
    writer.finalize(manifest);
    return manifest;
}

} // namespace decoy
