#include "decoy/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "decoy/error.hpp"
#include "decoy/hashes.hpp"
#include "decoy/rng.hpp"

namespace decoy {

double cosine(const embedding_vector& a, const embedding_vector& b) {
    if (a.dim() != b.dim() || a.dim() == 0)
        fail(errc::dimension_mismatch, "cosine over mismatched embedding dims");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += static_cast<double>(a.v[i]) * b.v[i];
        na += static_cast<double>(a.v[i]) * a.v[i];
        nb += static_cast<double>(b.v[i]) * b.v[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

deterministic_embedder::deterministic_embedder(std::uint64_t key, int dim,
                                               std::vector<cosine_fixture> fixtures)
    : key_(key), dim_(dim) {
    if (dim <= 1) fail(errc::config, "embedding dim must exceed 1");
    for (auto& f : fixtures) {
        if (f.cosine < -1.0 || f.cosine > 1.0)
            fail(errc::config, "fixture cosine out of [-1,1] for key " + f.key);
        fixtures_[f.key] = std::move(f);
    }
}

std::string deterministic_embedder::text_key(std::string_view text) {
    return "text:" + std::string(text);
}

std::string deterministic_embedder::image_key(std::span<const std::uint8_t> png_bytes) {
    return "img:" + sha256_hex(png_bytes);
}

embedding_vector deterministic_embedder::embed_text(std::string_view text) {
    return embed_key(text_key(text));
}

embedding_vector deterministic_embedder::embed_image(std::span<const std::uint8_t> png_bytes) {
    return embed_key(image_key(png_bytes));
}

embedding_vector deterministic_embedder::base_vector(const std::string& item_key,
                                                     const char* salt) const {
    splitmix64 rng(mix64(key_, hash64(item_key, hash64(salt))));
    embedding_vector e;
    e.v.resize(static_cast<std::size_t>(dim_));
    double norm2 = 0.0;
    for (auto& x : e.v) {
        double g = rng.gaussian();
        x = static_cast<float>(g);
        norm2 += g * g;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : e.v) x = static_cast<float>(x * inv);
    return e;
}

embedding_vector deterministic_embedder::embed_key(const std::string& item_key) const {
    return embed_key_rec(item_key, 0);
}

embedding_vector deterministic_embedder::embed_key_rec(const std::string& item_key,
                                                       int depth) const {
    auto it = fixtures_.find(item_key);
    if (it == fixtures_.end()) return base_vector(item_key, "base");
    if (depth > 8)
        fail(errc::config, "fixture anchor chain too deep or cyclic at " + item_key);

    embedding_vector a = embed_key_rec(it->second.anchor, depth + 1);
    embedding_vector w = base_vector(item_key, "orth");
    // Project w off a, renormalize, then place at the requested cosine.
    double dot = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) dot += static_cast<double>(w.v[i]) * a.v[i];
    double norm2 = 0.0;
    std::vector<double> perp(a.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        perp[i] = w.v[i] - dot * a.v[i];
        norm2 += perp[i] * perp[i];
    }
    if (norm2 <= 1e-12)
        fail(errc::config, "fixture orthogonal component degenerate for " + item_key);
    double c = it->second.cosine;
    double s = std::sqrt(std::max(0.0, 1.0 - c * c)) / std::sqrt(norm2);
    embedding_vector out;
    out.v.resize(a.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i)
        out.v[i] = static_cast<float>(c * a.v[i] + s * perp[i]);
    return out;
}

void cosine_index::add(std::int64_t id, embedding_vector v) {
    entries_.push_back({id, std::move(v)});
}

std::vector<retrieval_hit> cosine_index::retrieve(const embedding_vector& query, int k) const {
    if (entries_.empty()) fail(errc::not_found, "retrieval over empty index");
    if (k <= 0) fail(errc::config, "retrieval k must be positive");
    std::vector<retrieval_hit> hits;
    hits.reserve(entries_.size());
    for (const auto& e : entries_) hits.push_back({e.id, cosine(query, e.vec)});
    auto better = [](const retrieval_hit& a, const retrieval_hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    };
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take),
                      hits.end(), better);
    hits.resize(take);
    return hits;
}

} // namespace decoy
