#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>

#include "decoy/backends.hpp"
#include "decoy/embedding.hpp"
#include "decoy/victim.hpp"

namespace decoy {

struct http_endpoint {
    std::string base_url;  // scheme://host:port
    std::string path;
    std::string model;     // chat endpoints only
    std::string token_env; // env var holding the bearer token; empty = no auth
    int max_in_flight = 4;
    int max_retries = 3;   // extra attempts after the first, 5xx/429/transport only
    int backoff_ms = 250;  // doubles per retry
    int connect_timeout_s = 10;
    int read_timeout_s = 120;
};

// Caps concurrent requests per endpoint.
class inflight_gate {
public:
    explicit inflight_gate(int cap);
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int free_;
};

// POST {kind, payload} -> {vector}; payload is base64 PNG for images.
class http_embedder final : public embedding_backend {
public:
    http_embedder(http_endpoint ep, int dim);

    int dim() const override { return dim_; }
    embedding_vector embed_text(std::string_view text) override;
    embedding_vector embed_image(std::span<const std::uint8_t> png_bytes) override;

private:
    embedding_vector request(const char* kind, std::string payload);

    http_endpoint ep_;
    int dim_;
    std::unique_ptr<inflight_gate> gate_;
};

// Chat completion with one inline PNG attachment; returns the message text.
class http_editor final : public editor_backend {
public:
    explicit http_editor(http_endpoint ep);

    std::string propose(const prompt_bundle& bundle, const editor_call_context& ctx) override;

private:
    http_endpoint ep_;
    std::unique_ptr<inflight_gate> gate_;
};

class http_victim final : public victim_backend {
public:
    explicit http_victim(http_endpoint ep);

    std::string complete(const victim_query& query) override;

private:
    http_endpoint ep_;
    std::unique_ptr<inflight_gate> gate_;
};

} // namespace decoy
