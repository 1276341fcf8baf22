#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace decoy {

// Unit-norm embedding; cosine reduces to a dot product.
struct embedding_vector {
    std::vector<float> v;

    std::size_t dim() const { return v.size(); }
};

double cosine(const embedding_vector& a, const embedding_vector& b);

class embedding_backend {
public:
    virtual ~embedding_backend() = default;
    virtual int dim() const = 0;
    virtual embedding_vector embed_text(std::string_view text) = 0;
    virtual embedding_vector embed_image(std::span<const std::uint8_t> png_bytes) = 0;
};

// Declares that two items must land at a fixed cosine: `key` is embedded as
// anchor_vec * c + orthogonal * sqrt(1-c^2). Keys are "text:<content>" or
// "img:<sha256 of bytes>"; anchors may chain onto other fixture keys.
struct cosine_fixture {
    std::string key;
    std::string anchor;
    double cosine = 0.0;
};

// Offline backend: keyed pseudo-random unit vectors, reproducible across
// runs and platforms. Items not named in the fixture table land near zero
// cosine of each other (~1/sqrt(dim)).
class deterministic_embedder final : public embedding_backend {
public:
    deterministic_embedder(std::uint64_t key, int dim,
                           std::vector<cosine_fixture> fixtures = {});

    int dim() const override { return dim_; }
    embedding_vector embed_text(std::string_view text) override;
    embedding_vector embed_image(std::span<const std::uint8_t> png_bytes) override;

    embedding_vector embed_key(const std::string& item_key) const;

    static std::string text_key(std::string_view text);
    static std::string image_key(std::span<const std::uint8_t> png_bytes);

private:
    embedding_vector base_vector(const std::string& item_key, const char* salt) const;
    embedding_vector embed_key_rec(const std::string& item_key, int depth) const;

    std::uint64_t key_;
    int dim_;
    std::map<std::string, cosine_fixture> fixtures_;
};

struct retrieval_hit {
    std::int64_t id = -1;
    double score = 0.0;
};

// Exact top-k cosine retrieval; ties broken by ascending id.
class cosine_index {
public:
    void add(std::int64_t id, embedding_vector v);
    std::vector<retrieval_hit> retrieve(const embedding_vector& query, int k) const;
    std::size_t size() const { return entries_.size(); }

private:
    struct entry {
        std::int64_t id;
        embedding_vector vec;
    };
    std::vector<entry> entries_;
};

} // namespace decoy
