#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "decoy/embedding.hpp"
#include "decoy/error.hpp"

using namespace decoy;

TEST_CASE("deterministic embedder: reproducible unit vectors") {
    deterministic_embedder e1(7, 256);
    deterministic_embedder e2(7, 256);
    auto a = e1.embed_text("save icon");
    auto b = e2.embed_text("save icon");
    CHECK(a.v == b.v);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-6));

    double norm = 0.0;
    for (float x : a.v) norm += static_cast<double>(x) * x;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));

    // Different backend key gives a different space.
    deterministic_embedder e3(8, 256);
    CHECK(std::abs(cosine(a, e3.embed_text("save icon"))) < 0.5);
}

TEST_CASE("unrelated items sit near zero cosine") {
    deterministic_embedder e(1, 256);
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        auto a = e.embed_text("item a " + std::to_string(rng()));
        auto b = e.embed_text("item b " + std::to_string(rng()));
        worst = std::max(worst, std::abs(cosine(a, b)));
    }
    // ~N(0, 1/sqrt(256)); 0.35 is > 5 sigma.
    CHECK(worst < 0.35);
}

TEST_CASE("fixture table pins pairwise cosines") {
    std::vector<cosine_fixture> fx{
        {"text:floppy disk glyph", "text:save the file", 0.50},
        {"text:grandchild", "text:floppy disk glyph", 0.90},
    };
    deterministic_embedder e(7, 256, fx);
    auto anchor = e.embed_text("save the file");
    auto child = e.embed_text("floppy disk glyph");
    auto grand = e.embed_text("grandchild");
    CHECK(cosine(child, anchor) == doctest::Approx(0.50).epsilon(1e-5));
    CHECK(cosine(grand, child) == doctest::Approx(0.90).epsilon(1e-5));
    // Text and image keys live in distinct namespaces.
    std::vector<std::uint8_t> fake_png{1, 2, 3};
    CHECK(std::abs(cosine(e.embed_image(fake_png), anchor)) < 0.35);
}

TEST_CASE("fixture cycles are rejected") {
    std::vector<cosine_fixture> fx{
        {"text:a", "text:b", 0.5},
        {"text:b", "text:a", 0.5},
    };
    deterministic_embedder e(1, 64, fx);
    CHECK_THROWS_AS(e.embed_text("a"), error);
}

TEST_CASE("fixture cosine out of range is a config error") {
    std::vector<cosine_fixture> fx{{"text:a", "text:b", 1.5}};
    CHECK_THROWS_AS(deterministic_embedder(1, 64, fx), error);
}

TEST_CASE("cosine dimension mismatch") {
    deterministic_embedder a(1, 64);
    deterministic_embedder b(1, 128);
    CHECK_THROWS_AS(cosine(a.embed_text("x"), b.embed_text("x")), error);
}

TEST_CASE("retrieval: top-k against brute force, ties by id") {
    deterministic_embedder e(3, 128);
    cosine_index index;
    std::vector<embedding_vector> vecs;
    for (int i = 0; i < 300; ++i) {
        auto v = e.embed_text("icon " + std::to_string(i));
        index.add(i, v);
        vecs.push_back(v);
    }
    std::mt19937_64 rng(17);
    for (int q = 0; q < 50; ++q) {
        auto query = e.embed_text("query " + std::to_string(rng()));
        auto hits = index.retrieve(query, 5);
        REQUIRE(hits.size() == 5);

        std::vector<retrieval_hit> brute;
        for (int i = 0; i < 300; ++i) brute.push_back({i, cosine(query, vecs[i])});
        std::sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.id < b.id;
        });
        for (int i = 0; i < 5; ++i) {
            CHECK(hits[i].id == brute[i].id);
            CHECK(hits[i].score == doctest::Approx(brute[i].score).epsilon(1e-12));
        }
        // Scores are non-increasing.
        for (int i = 1; i < 5; ++i) CHECK(hits[i - 1].score >= hits[i].score);
    }
}

TEST_CASE("retrieval: exact duplicates tie-break by ascending id") {
    deterministic_embedder e(3, 64);
    auto v = e.embed_text("dup");
    cosine_index index;
    index.add(42, v);
    index.add(7, v);
    index.add(99, e.embed_text("other"));
    auto hits = index.retrieve(v, 2);
    CHECK(hits[0].id == 7);
    CHECK(hits[1].id == 42);
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("retrieval: k larger than pool returns the whole pool") {
    deterministic_embedder e(3, 64);
    cosine_index index;
    for (int i = 0; i < 4; ++i) index.add(i, e.embed_text(std::to_string(i)));
    auto hits = index.retrieve(e.embed_text("q"), 10);
    CHECK(hits.size() == 4);
}

TEST_CASE("retrieval: empty index raises") {
    cosine_index index;
    deterministic_embedder e(3, 64);
    CHECK_THROWS_AS(index.retrieve(e.embed_text("q"), 1), error);
}

TEST_CASE("retrieval: exact match ranks first") {
    deterministic_embedder e(3, 128);
    cosine_index index;
    for (int i = 0; i < 50; ++i) index.add(i, e.embed_text("icon " + std::to_string(i)));
    auto hits = index.retrieve(e.embed_text("icon 31"), 1);
    CHECK(hits[0].id == 31);
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
}
