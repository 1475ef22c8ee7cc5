#pragma once

// Text-completion providers: the interface, a deterministic scripted provider
// for offline runs, and the retry policy shared by remote providers.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "agency/errors.hpp"
#include "agency/text.hpp"

namespace agency {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 128;
    // Both are recorded; a provider that supports only one uses the one that
    // departs from its neutral value (temperature 1, top_p 1).
    double temperature = 1.0;
    double top_p = 1.0;
    std::vector<std::string> stop_sequences;
    std::optional<std::uint64_t> seed;

    bool operator==(const CompletionRequest&) const = default;

    // Appendix-style defaults: greedy decoding for measurement, nucleus
    // sampling with p = 0.6 for generation.
    static CompletionRequest measurement_defaults() {
        CompletionRequest r;
        r.temperature = 0.0;
        r.max_tokens = 64;
        return r;
    }
    static CompletionRequest generation_defaults() {
        CompletionRequest r;
        r.top_p = 0.6;
        r.max_tokens = 96;
        return r;
    }
};

inline void validate(const CompletionRequest& r) {
    if (r.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
    if (r.temperature < 0.0) throw ValidationError("temperature must be non-negative");
    if (!(r.top_p > 0.0 && r.top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
}

struct TokenUsage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct Completion {
    std::string text;
    TokenUsage usage;
};

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;
    virtual Completion complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

using ProviderRegistry = std::map<std::string, std::shared_ptr<CompletionProvider>>;

inline CompletionProvider& find_provider(const ProviderRegistry& registry, const std::string& id) {
    auto it = registry.find(id);
    if (it == registry.end() || !it->second) throw ValidationError("unknown provider id '" + id + "'");
    return *it->second;
}

// ---------------------------------------------------------------------------

struct ScriptRule {
    enum class Match { Contains, Prefix, Regex };

    Match match = Match::Contains;
    std::string pattern;
    std::string response;

    bool matches(const std::string& prompt) const {
        switch (match) {
            case Match::Contains: return prompt.find(pattern) != std::string::npos;
            case Match::Prefix: return prompt.rfind(pattern, 0) == 0;
            case Match::Regex: return std::regex_search(prompt, std::regex(pattern));
        }
        return false;
    }
};

// Offline provider: the first rule whose pattern matches the prompt supplies
// the response, otherwise the default. Every request is logged in arrival
// order.
class ScriptedProvider final : public CompletionProvider {
public:
    ScriptedProvider(std::string id, std::vector<ScriptRule> rules, std::string default_response)
        : id_(std::move(id)), rules_(std::move(rules)), default_response_(std::move(default_response)) {}

    Completion complete(const CompletionRequest& request) override {
        {
            std::lock_guard lock(mutex_);
            log_.push_back(request);
        }
        const std::string* response = &default_response_;
        for (const auto& rule : rules_)
            if (rule.matches(request.prompt)) {
                response = &rule.response;
                break;
            }
        return {*response, {text::tokenize(request.prompt).size(), text::tokenize(*response).size()}};
    }

    std::string id() const override { return id_; }

    std::vector<CompletionRequest> call_log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }

    std::size_t call_count() const {
        std::lock_guard lock(mutex_);
        return log_.size();
    }

private:
    std::string id_;
    std::vector<ScriptRule> rules_;
    std::string default_response_;
    mutable std::mutex mutex_;
    std::vector<CompletionRequest> log_;
};

// Script file: {"default_response": "...", "rules": [{"match": "contains" |
// "prefix" | "regex", "pattern": "...", "response": "..."}]}.
inline std::shared_ptr<ScriptedProvider> scripted_provider_from_json(std::string id, const nlohmann::json& j) {
    std::vector<ScriptRule> rules;
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
        ScriptRule rule;
        const auto kind = r.value("match", std::string("contains"));
        if (kind == "contains") rule.match = ScriptRule::Match::Contains;
        else if (kind == "prefix") rule.match = ScriptRule::Match::Prefix;
        else if (kind == "regex") rule.match = ScriptRule::Match::Regex;
        else throw ValidationError("unknown script match kind '" + kind + "'");
        rule.pattern = r.at("pattern").get<std::string>();
        rule.response = r.at("response").get<std::string>();
        if (rule.match == ScriptRule::Match::Regex) (void)std::regex(rule.pattern);
        rules.push_back(std::move(rule));
    }
    return std::make_shared<ScriptedProvider>(std::move(id), std::move(rules), j.value("default_response", std::string()));
}

inline std::shared_ptr<ScriptedProvider> load_scripted_provider(std::string id, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open script " + path.string());
    try {
        return scripted_provider_from_json(std::move(id), nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("script " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_delay{500};
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
};

// Retries TransportError with exponential backoff (or the server's
// retry-after hint). Any other error propagates immediately.
template <class F>
auto with_retries(const RetryPolicy& policy, F&& call) -> decltype(call()) {
    for (int attempt = 1;; ++attempt) {
        try {
            return call();
        } catch (const TransportError& e) {
            if (attempt >= policy.attempts) throw;
            const auto delay = e.retry_after().value_or(policy.base_delay * (1 << (attempt - 1)));
            if (policy.sleep) policy.sleep(delay);
        }
    }
}

// Caps concurrent in-flight requests for one provider handle.
class InFlightLimit {
public:
    explicit InFlightLimit(std::ptrdiff_t limit) : sem_(limit < 1 ? 1 : limit) {}

    template <class F>
    auto run(F&& f) -> decltype(f()) {
        sem_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{sem_};
        return f();
    }

private:
    std::counting_semaphore<1024> sem_;
};

}  // namespace agency
