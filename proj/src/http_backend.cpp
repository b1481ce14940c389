#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ariiha/errors.hpp"
#include "ariiha/llm.hpp"
#include "ariiha/util.hpp"

namespace ariiha {

namespace {

using nlohmann::json;

struct ParsedEndpoint {
    std::string host;
    int port = 80;
    std::string prefix;  // path prefix, no trailing slash
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    std::string rest = endpoint;
    if (rest.rfind("https://", 0) == 0)
        throw DataError("https endpoints are not supported by this build; use http");
    if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
    ParsedEndpoint parsed;
    auto slash = rest.find('/');
    std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    if (slash != std::string::npos) {
        parsed.prefix = rest.substr(slash);
        while (!parsed.prefix.empty() && parsed.prefix.back() == '/') parsed.prefix.pop_back();
    }
    auto colon = authority.find(':');
    if (colon == std::string::npos) {
        parsed.host = authority;
    } else {
        parsed.host = authority.substr(0, colon);
        parsed.port = std::stoi(authority.substr(colon + 1));
    }
    if (parsed.host.empty()) throw DataError("invalid endpoint: " + endpoint);
    return parsed;
}

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

std::string chat_request_body(const HttpBackendConfig& config, std::string_view prompt) {
    json body;
    body["model"] = config.model;
    body["temperature"] = config.temperature;
    body["max_tokens"] = config.max_tokens;
    body["messages"] = json::array({json{{"role", "user"}, {"content", std::string(prompt)}}});
    return body.dump(2);
}

struct HttpBackend::Impl {
    HttpBackendConfig config;
    ParsedEndpoint endpoint;
    std::mt19937_64 jitter_rng;
    std::mutex rng_mutex;

    explicit Impl(HttpBackendConfig cfg)
        : config(std::move(cfg)),
          endpoint(parse_endpoint(config.endpoint)),
          jitter_rng(config.jitter_seed) {
        if (config.temperature != 0.0)
            throw DataError("temperature must be 0 (deterministic decoding contract)");
        if (config.retries < 0) throw DataError("retries must be >= 0");
    }

    std::chrono::milliseconds backoff(int attempt) {
        std::uint64_t jitter;
        {
            std::lock_guard<std::mutex> lock(rng_mutex);
            jitter = bounded_rand(jitter_rng,
                                  static_cast<std::uint64_t>(config.backoff_base.count() / 2 + 1));
        }
        return config.backoff_base * (1LL << attempt) + std::chrono::milliseconds(jitter);
    }

    std::string post_once(const std::string& body, std::string& error) {
        httplib::Client client(endpoint.host, endpoint.port);
        client.set_connection_timeout(std::chrono::duration<double>(config.timeout_sec));
        client.set_read_timeout(std::chrono::duration<double>(config.timeout_sec));
        client.set_write_timeout(std::chrono::duration<double>(config.timeout_sec));
        httplib::Headers headers;
        if (!config.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config.api_key);
        auto res = client.Post(endpoint.prefix + "/chat/completions", headers, body,
                               "application/json");
        if (!res) {
            error = "transport error: " + httplib::to_string(res.error());
            return {};
        }
        if (res->status != 200) {
            error = "http status " + std::to_string(res->status);
            if (!retryable_status(res->status)) error += " (not retryable)";
            return {};
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
            !reply["choices"][0].contains("message")) {
            error = "malformed completion response";
            return {};
        }
        auto content = reply["choices"][0]["message"].value("content", "");
        error.clear();
        return content;
    }
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::identity() const {
    return "http:" + impl_->config.model + "@" + impl_->config.endpoint;
}

std::string HttpBackend::complete(const BackendRequest& request) {
    std::string body = chat_request_body(impl_->config, request.prompt);
    std::string error;
    for (int attempt = 0; attempt <= impl_->config.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(impl_->backoff(attempt - 1));
        std::string reply = impl_->post_once(body, error);
        if (error.empty()) return reply;
        if (error.find("(not retryable)") != std::string::npos) break;
    }
    throw BackendError("chat completion failed after " +
                       std::to_string(impl_->config.retries + 1) + " attempts: " + error);
}

}  // namespace ariiha
