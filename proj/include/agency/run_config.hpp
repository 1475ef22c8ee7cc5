#pragma once

// Provider and policy definitions for command-line runs, and the
// reproducibility manifest every command writes next to its outputs.
//
// Config file:
//   {"providers": [
//      {"id": "scripted-a", "type": "scripted", "response": "I prefer oak."},
//      {"id": "scripted-b", "type": "scripted", "script": "rules.json"},
//      {"id": "remote", "type": "remote", "base_url": "https://host", "model": "m",
//       "api_key_env": "AGENCY_API_KEY", "embedding_dimension": 1536}],
//    "policies": [{"id": "p", "variant": "instruction_only", "provider": "scripted-a"}]}
//
// Secrets never appear in the file; "api_key_env" names the environment
// variable holding the key.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "agency/generation.hpp"
#include "agency/remote.hpp"

namespace agency {

struct ProviderSpec {
    std::string id;
    std::string type;  // "scripted" or "remote"
    std::optional<std::filesystem::path> script;
    std::optional<std::string> response;
    RemoteConfig remote;
    std::optional<std::size_t> embedding_dimension;
};

struct RunConfig {
    std::filesystem::path source;
    std::vector<ProviderSpec> providers;
    std::vector<AgentPolicy> policies;

    const ProviderSpec& provider(const std::string& id) const {
        for (const auto& p : providers)
            if (p.id == id) return p;
        throw ValidationError("unknown provider id '" + id + "'");
    }
    const AgentPolicy& policy(const std::string& id) const {
        for (const auto& p : policies)
            if (p.id == id) return p;
        throw ValidationError("unknown policy id '" + id + "'");
    }
};

namespace detail {

inline bool looks_like_secret(const std::string& key) {
    const auto k = text::lower(key);
    if (k.ends_with("_env")) return false;
    for (const char* bad : {"api_key", "apikey", "secret", "password", "authorization"})
        if (k.find(bad) != std::string::npos) return true;
    return k == "key" || k == "token" || k.ends_with("_token");
}

inline ProviderSpec provider_spec_from_json(const Json& j, const std::filesystem::path& base) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (looks_like_secret(it.key()))
            throw ValidationError("provider field '" + it.key() +
                                  "' looks like a credential; name an environment variable with api_key_env instead");
    ProviderSpec p;
    p.id = j.at("id").get<std::string>();
    p.type = j.value("type", std::string("scripted"));
    if (p.type == "scripted") {
        if (j.contains("script")) {
            std::filesystem::path s = j.at("script").get<std::string>();
            p.script = s.is_absolute() ? s : base / s;
        }
        if (j.contains("response")) p.response = j.at("response").get<std::string>();
        if (!p.script && !p.response) throw ValidationError("scripted provider " + p.id + " needs a script or a response");
    } else if (p.type == "remote") {
        auto& r = p.remote;
        r.id = p.id;
        r.base_url = j.at("base_url").get<std::string>();
        r.model = j.at("model").get<std::string>();
        r.api_key_env = j.value("api_key_env", std::string());
        r.completions_path = j.value("completions_path", r.completions_path);
        r.embeddings_path = j.value("embeddings_path", r.embeddings_path);
        r.max_in_flight = j.value("max_in_flight", r.max_in_flight);
        r.timeout = std::chrono::seconds(j.value("timeout_seconds", static_cast<long long>(r.timeout.count())));
        r.retry.attempts = j.value("retry_attempts", r.retry.attempts);
        if (r.max_in_flight < 1) throw ValidationError("provider " + p.id + ": max_in_flight must be positive");
        if (j.contains("embedding_dimension")) p.embedding_dimension = j.at("embedding_dimension").get<std::size_t>();
    } else {
        throw ValidationError("provider " + p.id + ": unknown type '" + p.type + "'");
    }
    return p;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    std::set<std::string> providers, policies;
    for (const auto& p : c.providers)
        if (!providers.insert(p.id).second) throw ValidationError("duplicate provider id '" + p.id + "'");
    for (const auto& p : c.policies) {
        if (!policies.insert(p.id).second) throw ValidationError("duplicate policy id '" + p.id + "'");
        if (!providers.count(p.provider_id))
            throw ValidationError("policy " + p.id + " references unknown provider '" + p.provider_id + "'");
    }
}

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base = {}) {
    RunConfig c;
    for (const auto& p : j.value("providers", Json::array())) c.providers.push_back(detail::provider_spec_from_json(p, base));
    for (const auto& p : j.value("policies", Json::array())) c.policies.push_back(policy_from_json(p));
    validate(c);
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    RunConfig c;
    try {
        c = run_config_from_json(Json::parse(in), path.parent_path());
    } catch (const Json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    c.source = path;
    return c;
}

inline std::shared_ptr<CompletionProvider> make_provider(const ProviderSpec& p) {
    if (p.type == "remote") return std::make_shared<RemoteCompletionProvider>(p.remote);
    if (p.script) return load_scripted_provider(p.id, *p.script);
    return std::make_shared<ScriptedProvider>(p.id, std::vector<ScriptRule>{}, *p.response);
}

inline ProviderRegistry make_providers(const RunConfig& c) {
    ProviderRegistry r;
    for (const auto& p : c.providers) r[p.id] = make_provider(p);
    return r;
}

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& c, const std::string& id) {
    const auto& p = c.provider(id);
    if (p.type != "remote") throw ValidationError("provider " + id + " cannot produce embeddings");
    if (!p.embedding_dimension) throw ValidationError("provider " + id + " has no embedding_dimension");
    return std::make_unique<RemoteEmbeddingProvider>(p.remote, *p.embedding_dimension);
}

// ---------------------------------------------------------------------------
// Manifest

inline constexpr const char* kManifestFile = "manifest.json";

namespace detail {

inline std::uint64_t hash_file(const std::filesystem::path& p, std::uint64_t h = 0xcbf29ce484222325ULL) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::string buf(1 << 16, '\0');
    while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0)
        h = text::fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    return h;
}

inline std::vector<std::filesystem::path> listed_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != kManifestFile)
            out.push_back(std::filesystem::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Content hash of a file, or of every file under a directory (names and
// contents, in sorted order, manifests excluded).
inline std::string content_hash(const std::filesystem::path& p) {
    if (!std::filesystem::is_directory(p)) return text::hex64(detail::hash_file(p));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& rel : detail::listed_files(p)) {
        h = text::fnv1a(rel.generic_string(), h);
        h = detail::hash_file(p / rel, h);
    }
    return text::hex64(h);
}

// Writes manifest.json into `out_dir`: the command, its effective arguments,
// a hash of those arguments, hashes of every input and of every output file.
inline Json write_manifest(const std::filesystem::path& out_dir, const std::string& command, const Json& arguments,
                           const std::vector<std::filesystem::path>& inputs) {
    Json in = Json::array();
    for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"hash", content_hash(p)}});
    Json out = Json::array();
    for (const auto& rel : detail::listed_files(out_dir))
        out.push_back({{"path", rel.generic_string()}, {"hash", content_hash(out_dir / rel)}});
    Json m{{"command", command},
           {"arguments", arguments},
           {"config_hash", text::hex64(text::fnv1a(arguments.dump()))},
           {"inputs", in},
           {"outputs", out}};
    std::ofstream f(out_dir / kManifestFile, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + (out_dir / kManifestFile).string());
    f << m.dump(2) << '\n';
    return m;
}

}  // namespace agency
