#pragma once

// HTTP JSON providers for completion and embedding endpoints.
//
// Completion wire format (POST {base_url}{completions_path}):
//   request  {"model", "prompt", "max_tokens", "temperature", "top_p",
//             "stop": [...], "seed"?}
//   response {"choices": [{"text": "..."}],
//             "usage": {"prompt_tokens", "completion_tokens"}}
// Embedding wire format (POST {base_url}{embeddings_path}):
//   request  {"model", "input"}
//   response {"data": [{"embedding": [...]}]}
// The bearer token is read from the environment variable named in the config.

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "agency/backends.hpp"
#include "agency/embedding.hpp"

namespace agency {

struct RemoteConfig {
    std::string id;
    std::string base_url;  // scheme://host[:port]
    std::string model;
    std::string api_key_env;
    std::string completions_path = "/v1/completions";
    std::string embeddings_path = "/v1/embeddings";
    int max_in_flight = 4;
    std::chrono::seconds timeout{60};
    RetryPolicy retry;
};

inline nlohmann::ordered_json completion_wire_body(const CompletionRequest& r, const std::string& model) {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["prompt"] = r.prompt;
    j["max_tokens"] = r.max_tokens;
    j["temperature"] = r.temperature;
    j["top_p"] = r.top_p;
    j["stop"] = r.stop_sequences;
    if (r.seed) j["seed"] = *r.seed;
    return j;
}

namespace detail {

inline nlohmann::json post_json(const RemoteConfig& cfg, const std::string& path, const std::string& body) {
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout);
    client.set_read_timeout(cfg.timeout);
    httplib::Headers headers;
    if (!cfg.api_key_env.empty())
        if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw TransportError(cfg.id + ": transport failure: " + httplib::to_string(res.error()));
    if (res->status == 429) {
        std::optional<std::chrono::milliseconds> retry_after;
        if (res->has_header("Retry-After")) {
            try {
                retry_after = std::chrono::milliseconds(
                    static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
            } catch (const std::exception&) {
            }
        }
        throw TransportError(cfg.id + ": rate limited", 429, retry_after);
    }
    if (res->status >= 500)
        throw TransportError(cfg.id + ": server error " + std::to_string(res->status) + ": " + res->body, res->status);
    if (res->status != 200) throw Error(cfg.id + ": request rejected with " + std::to_string(res->status) + ": " + res->body);
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(cfg.id + ": malformed response body: " + e.what());
    }
}

}  // namespace detail

class RemoteCompletionProvider final : public CompletionProvider {
public:
    explicit RemoteCompletionProvider(RemoteConfig config) : config_(std::move(config)), limit_(config_.max_in_flight) {}

    Completion complete(const CompletionRequest& request) override {
        validate(request);
        const auto body = completion_wire_body(request, config_.model).dump();
        return limit_.run([&] {
            return with_retries(config_.retry, [&] {
                const auto j = detail::post_json(config_, config_.completions_path, body);
                Completion c;
                try {
                    c.text = j.at("choices").at(0).at("text").get<std::string>();
                    if (j.contains("usage")) {
                        c.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
                        c.usage.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
                    }
                } catch (const nlohmann::json::exception& e) {
                    throw Error(config_.id + ": unexpected completion response: " + e.what());
                }
                return c;
            });
        });
    }

    std::string id() const override { return config_.id; }
    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    InFlightLimit limit_;
};

class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(RemoteConfig config, std::size_t dimension)
        : config_(std::move(config)), dimension_(dimension), limit_(config_.max_in_flight) {}

    EmbeddingVector embed(std::string_view input) const override {
        nlohmann::ordered_json body{{"model", config_.model}, {"input", std::string(input)}};
        return limit_.run([&] {
            return with_retries(config_.retry, [&] {
                const auto j = detail::post_json(config_, config_.embeddings_path, body.dump());
                EmbeddingVector v;
                try {
                    v.values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
                } catch (const nlohmann::json::exception& e) {
                    throw Error(config_.id + ": unexpected embedding response: " + e.what());
                }
                if (v.dimension() != dimension_)
                    throw Error(config_.id + ": expected dimension " + std::to_string(dimension_) + ", got " +
                                std::to_string(v.dimension()));
                return v;
            });
        });
    }

    std::size_t dimension() const override { return dimension_; }

private:
    RemoteConfig config_;
    std::size_t dimension_;
    mutable InFlightLimit limit_;
};

}  // namespace agency
