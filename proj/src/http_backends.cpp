#include "decoy/http_backends.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "decoy/error.hpp"
#include "decoy/image.hpp"

namespace decoy {

using nlohmann::json;

namespace {

std::string base64(std::span<const std::uint8_t> in) {
    static const char tbl[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= in.size(); i += 3) {
        std::uint32_t v = (static_cast<std::uint32_t>(in[i]) << 16) |
                          (static_cast<std::uint32_t>(in[i + 1]) << 8) | in[i + 2];
        out += tbl[v >> 18];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (i + 1 == in.size()) {
        std::uint32_t v = static_cast<std::uint32_t>(in[i]) << 16;
        out += tbl[v >> 18];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == in.size()) {
        std::uint32_t v = (static_cast<std::uint32_t>(in[i]) << 16) |
                          (static_cast<std::uint32_t>(in[i + 1]) << 8);
        out += tbl[v >> 18];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

struct gate_guard {
    inflight_gate& gate;
    explicit gate_guard(inflight_gate& g) : gate(g) { gate.acquire(); }
    ~gate_guard() { gate.release(); }
};

httplib::Headers auth_headers(const http_endpoint& ep) {
    httplib::Headers headers;
    if (!ep.token_env.empty()) {
        const char* tok = std::getenv(ep.token_env.c_str());
        if (tok == nullptr || *tok == '\0')
            fail(errc::config, "environment variable " + ep.token_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + tok);
    }
    return headers;
}

// One logical call: bounded retries on transport errors, 429 and 5xx.
json post_json(const http_endpoint& ep, inflight_gate& gate, const json& body) {
    gate_guard held(gate);
    auto headers = auth_headers(ep);
    std::string payload = body.dump();
    std::string last;
    for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(ep.backoff_ms) << (attempt - 1)));
        httplib::Client cli(ep.base_url);
        cli.set_connection_timeout(ep.connect_timeout_s, 0);
        cli.set_read_timeout(ep.read_timeout_s, 0);
        auto res = cli.Post(ep.path, headers, payload, "application/json");
        if (!res) {
            last = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            fail(errc::config, ep.path + ": status " + std::to_string(res->status) + ": " +
                                   res->body.substr(0, 200));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            fail(errc::parse, ep.path + ": bad response body: " + e.what());
        }
    }
    fail(errc::transport,
         ep.path + ": " + last + " after " + std::to_string(ep.max_retries + 1) + " attempts");
}

std::string chat_complete(const http_endpoint& ep, inflight_gate& gate,
                          const std::string& system_text, const std::string& user_text,
                          std::span<const std::uint8_t> png) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", user_text}});
    content.push_back(
        {{"type", "image_url"},
         {"image_url", {{"url", "data:image/png;base64," + base64(png)}}}});
    json messages = json::array();
    if (!system_text.empty()) messages.push_back({{"role", "system"}, {"content", system_text}});
    messages.push_back({{"role", "user"}, {"content", content}});
    json body = {{"model", ep.model}, {"messages", messages}};

    json resp = post_json(ep, gate, body);
    try {
        return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        fail(errc::parse, ep.path + ": no completion in response: " + e.what());
    }
}

} // namespace

inflight_gate::inflight_gate(int cap) : free_(cap) {
    if (cap < 1) fail(errc::config, "max_in_flight must be >= 1");
}

void inflight_gate::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
}

void inflight_gate::release() {
    std::lock_guard lock(mu_);
    ++free_;
    cv_.notify_one();
}

http_embedder::http_embedder(http_endpoint ep, int dim)
    : ep_(std::move(ep)), dim_(dim), gate_(std::make_unique<inflight_gate>(ep_.max_in_flight)) {
    if (dim_ < 1) fail(errc::config, "embedder dim must be >= 1");
}

embedding_vector http_embedder::request(const char* kind, std::string payload) {
    json body = {{"kind", kind}, {"payload", std::move(payload)}};
    json resp = post_json(ep_, *gate_, body);
    embedding_vector out;
    try {
        out.v = resp.at("vector").get<std::vector<float>>();
    } catch (const json::exception& e) {
        fail(errc::parse, ep_.path + ": bad vector: " + e.what());
    }
    if (static_cast<int>(out.v.size()) != dim_)
        fail(errc::dimension_mismatch, "embedder returned dim " + std::to_string(out.v.size()) +
                                           ", expected " + std::to_string(dim_));
    double norm = 0.0;
    for (float x : out.v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    if (norm <= 0.0) fail(errc::parse, "embedder returned a zero vector");
    for (float& x : out.v) x = static_cast<float>(x / norm);
    return out;
}

embedding_vector http_embedder::embed_text(std::string_view text) {
    return request("text", std::string(text));
}

embedding_vector http_embedder::embed_image(std::span<const std::uint8_t> png_bytes) {
    return request("image", base64(png_bytes));
}

http_editor::http_editor(http_endpoint ep)
    : ep_(std::move(ep)), gate_(std::make_unique<inflight_gate>(ep_.max_in_flight)) {}

std::string http_editor::propose(const prompt_bundle& bundle, const editor_call_context&) {
    return chat_complete(ep_, *gate_, bundle.system_text, bundle.user_text, bundle.image_png);
}

http_victim::http_victim(http_endpoint ep)
    : ep_(std::move(ep)), gate_(std::make_unique<inflight_gate>(ep_.max_in_flight)) {}

std::string http_victim::complete(const victim_query& query) {
    auto png = encode_png(*query.image);
    return chat_complete(ep_, *gate_, "", query.prompt, png);
}

} // namespace decoy
