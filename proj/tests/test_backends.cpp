#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "agency/remote.hpp"

using namespace agency;

namespace {

std::shared_ptr<ScriptedProvider> cot_script() {
    return std::make_shared<ScriptedProvider>(
        "scripted",
        std::vector<ScriptRule>{{ScriptRule::Match::Contains, "TL;dr",
                                 "Brass legs were agreed upon. This was initially proposed by the Other Designer."}},
        "fallback");
}

// In-process HTTP server on an ephemeral port.
struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    RemoteConfig config() const {
        RemoteConfig c;
        c.id = "remote";
        c.base_url = "http://127.0.0.1:" + std::to_string(port);
        c.model = "test-model";
        c.api_key_env = "AGENCY_TEST_KEY";
        c.retry.base_delay = std::chrono::milliseconds(1);
        return c;
    }
};

}  // namespace

TEST(ScriptedProvider, FirstMatchingRuleWins) {
    auto p = cot_script();
    CompletionRequest r;
    r.prompt = "Designer: x\nTL;dr";
    EXPECT_EQ(p->complete(r).text, "Brass legs were agreed upon. This was initially proposed by the Other Designer.");
    r.prompt = "no marker";
    EXPECT_EQ(p->complete(r).text, "fallback");
}

TEST(ScriptedProvider, DeterministicAndLogged) {
    auto p = cot_script();
    CompletionRequest r;
    r.prompt = "TL;dr";
    const auto a = p->complete(r).text;
    const auto b = p->complete(r).text;
    EXPECT_EQ(a, b);
    ASSERT_EQ(p->call_count(), 2u);
    EXPECT_EQ(p->call_log()[1], r);
}

TEST(ScriptedProvider, ConcurrentAppendsAreAllLogged) {
    auto p = cot_script();
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&] {
            CompletionRequest r;
            for (int i = 0; i < 100; ++i) p->complete(r);
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(p->call_count(), 800u);
}

TEST(ScriptedProvider, LoadsScriptJson) {
    const auto j = nlohmann::json::parse(R"({"default_response": "ok",
        "rules": [{"match": "regex", "pattern": "leg[s]?", "response": "legs!"},
                  {"match": "prefix", "pattern": "Room", "response": "room!"}]})");
    auto p = scripted_provider_from_json("s", j);
    CompletionRequest r;
    r.prompt = "Room with legs";
    EXPECT_EQ(p->complete(r).text, "legs!");
    r.prompt = "Room only";
    EXPECT_EQ(p->complete(r).text, "room!");
    EXPECT_THROW(scripted_provider_from_json("s", nlohmann::json::parse(R"({"rules":[{"match":"glob","pattern":"x","response":"y"}]})")),
                 ValidationError);
}

TEST(CompletionRequest, WireBodyMatchesRecordedFixture) {
    CompletionRequest r = CompletionRequest::measurement_defaults();
    r.prompt = "Designer: I like the black metal legs.\nWho influenced the design element being discussed?:";
    r.top_p = 0.6;
    r.stop_sequences = {"\n"};
    r.seed = 42;
    std::ifstream in(std::string(AGENCY_TEST_DATA_DIR) + "/completion_request.json");
    std::string recorded;
    std::getline(in, recorded);
    EXPECT_EQ(completion_wire_body(r, "text-davinci-003").dump(), recorded);
}

TEST(CompletionRequest, Validation) {
    CompletionRequest r;
    r.top_p = 0.0;
    EXPECT_THROW(validate(r), ValidationError);
    r.top_p = 0.6;
    r.temperature = -1;
    EXPECT_THROW(validate(r), ValidationError);
    EXPECT_EQ(CompletionRequest::generation_defaults().top_p, 0.6);
    EXPECT_EQ(CompletionRequest::measurement_defaults().temperature, 0.0);
}

TEST(Retries, OnlyTransportErrorsAreRetried) {
    RetryPolicy policy;
    std::vector<std::chrono::milliseconds> sleeps;
    policy.sleep = [&](auto d) { sleeps.push_back(d); };
    int calls = 0;
    EXPECT_THROW(with_retries(policy, [&]() -> int {
                     ++calls;
                     throw TransportError("down");
                 }),
                 TransportError);
    EXPECT_EQ(calls, 3);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(500), std::chrono::milliseconds(1000)}));

    calls = 0;
    EXPECT_THROW(with_retries(policy, [&]() -> int {
                     ++calls;
                     throw UnparseableLabel("raw", "x");
                 }),
                 UnparseableLabel);
    EXPECT_EQ(calls, 1);
}

TEST(RemoteProvider, ForwardsParametersVerbatim) {
    LocalServer s;
    std::string seen_body, seen_auth;
    s.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"text":" Other Designer"}],"usage":{"prompt_tokens":12,"completion_tokens":2}})",
                        "application/json");
    });
    s.start();
    setenv("AGENCY_TEST_KEY", "sekret", 1);
    RemoteCompletionProvider p(s.config());
    CompletionRequest r = CompletionRequest::measurement_defaults();
    r.prompt = "hello";
    r.stop_sequences = {"\n"};
    const auto c = p.complete(r);
    EXPECT_EQ(c.text, " Other Designer");
    EXPECT_EQ(c.usage.prompt_tokens, 12u);
    EXPECT_EQ(seen_body, completion_wire_body(r, "test-model").dump());
    EXPECT_EQ(seen_auth, "Bearer sekret");
}

TEST(RemoteProvider, RetriesServerErrorsThenSucceeds) {
    LocalServer s;
    std::atomic<int> calls{0};
    s.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"text":"ok"}]})", "application/json");
    });
    s.start();
    RemoteCompletionProvider p(s.config());
    EXPECT_EQ(p.complete(CompletionRequest{}).text, "ok");
    EXPECT_EQ(calls.load(), 3);
}

TEST(RemoteProvider, RateLimitCarriesRetryAfter) {
    LocalServer s;
    std::atomic<int> calls{0};
    s.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 429;
        res.set_header("Retry-After", "0.002");
    });
    s.start();
    auto cfg = s.config();
    std::vector<std::chrono::milliseconds> sleeps;
    cfg.retry.sleep = [&](auto d) { sleeps.push_back(d); };
    RemoteCompletionProvider p(cfg);
    try {
        p.complete(CompletionRequest{});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_TRUE(e.rate_limited());
        ASSERT_TRUE(e.retry_after().has_value());
        EXPECT_EQ(e.retry_after()->count(), 2);
    }
    EXPECT_EQ(calls.load(), 3);
    EXPECT_EQ(sleeps.size(), 2u);
}

TEST(RemoteProvider, ClientErrorsAreNotRetried) {
    LocalServer s;
    std::atomic<int> calls{0};
    s.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
        res.set_content("bad", "text/plain");
    });
    s.start();
    RemoteCompletionProvider p(s.config());
    EXPECT_THROW(p.complete(CompletionRequest{}), Error);
    EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteProvider, UnreachableIsTransportError) {
    RemoteConfig cfg;
    cfg.id = "dead";
    cfg.base_url = "http://127.0.0.1:1";
    cfg.retry.base_delay = std::chrono::milliseconds(1);
    RemoteCompletionProvider p(cfg);
    EXPECT_THROW(p.complete(CompletionRequest{}), TransportError);
}

TEST(RemoteEmbedding, ParsesVectors) {
    LocalServer s;
    s.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        const auto j = nlohmann::json::parse(req.body);
        EXPECT_EQ(j["model"], "test-model");
        res.set_content(j["input"] == "a" ? R"({"data":[{"embedding":[1,0,0]}]})" : R"({"data":[{"embedding":[0,1,0]}]})",
                        "application/json");
    });
    s.start();
    RemoteEmbeddingProvider p(s.config(), 3);
    EXPECT_EQ(p.embed("a").values, (std::vector<double>{1, 0, 0}));
    EXPECT_EQ(cosine(p.embed("a"), p.embed("b")), 0.0);
    RemoteEmbeddingProvider wrong(s.config(), 4);
    EXPECT_THROW(wrong.embed("a"), Error);
}
