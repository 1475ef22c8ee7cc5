#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "agency/segmentation.hpp"
#include "planted_topics.hpp"

using namespace agency;

namespace {

Conversation make_conversation(const std::vector<std::string>& lines) {
    Conversation c;
    c.id = "c1";
    c.room_description = "room";
    for (std::size_t i = 0; i < lines.size(); ++i)
        c.utterances.push_back({i, i % 2 ? DesignerRole::DesignerB : DesignerRole::DesignerA, lines[i]});
    return c;
}

// Independent FNV-1a used only to check bucket disjointness.
std::size_t oracle_bucket(const std::string& token) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h % 256);
}

// Token-count cosine straight from the token multisets (no hashing).
double oracle_cosine(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, double> ca, cb;
    for (const auto& t : a) ca[t] += 1;
    for (const auto& t : b) cb[t] += 1;
    double dot = 0, na = 0, nb = 0;
    for (auto& [t, v] : ca) {
        na += v * v;
        if (cb.count(t)) dot += v * cb[t];
    }
    for (auto& [t, v] : cb) nb += v * v;
    return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(SplitFinalDesign, Examples) {
    auto parts = split_final_design("black metal legs; leather seat; mid-century style");
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts[0].text, "black metal legs");
    EXPECT_EQ(parts[1].text, "leather seat");
    EXPECT_EQ(parts[2].text, "mid-century style");
    EXPECT_TRUE(split_final_design("").empty());
    parts = split_final_design("brass tapered metal legs");
    ASSERT_EQ(parts.size(), 1u);
    EXPECT_EQ(parts[0].text, "brass tapered metal legs");
}

TEST(SplitFinalDesign, CommasNewlinesAndStandaloneAnd) {
    const auto parts = split_final_design("oak frame, cream cushion\nbrass legs and sandy armrests; ;", DesignerRole::DesignerB);
    std::vector<std::string> texts;
    for (const auto& p : parts) {
        texts.push_back(p.text);
        EXPECT_EQ(p.owner, DesignerRole::DesignerB);
        EXPECT_EQ(p.text.find_first_of(";,\n"), std::string::npos);
    }
    EXPECT_EQ(texts, (std::vector<std::string>{"oak frame", "cream cushion", "brass legs", "sandy armrests"}));
}

TEST(Embedding, DeterministicAndSelfSimilar) {
    LexicalEmbeddingProvider p;
    const auto a = p.embed("blue chair");
    EXPECT_EQ(a, p.embed("blue chair"));
    EXPECT_EQ(a.dimension(), 256u);
    EXPECT_NEAR(cosine(a, p.embed("blue chair")), 1.0, 1e-9);
    EXPECT_NEAR(norm(a), 1.0, 1e-12);
    EXPECT_NEAR(cosine(a, p.embed("Blue, CHAIR!")), 1.0, 1e-9);
}

TEST(Embedding, DisjointBucketsGiveZeroCosine) {
    const std::vector<std::string> left{"walnut", "legs"}, right{"velvet", "cushion"};
    std::set<std::size_t> lb, rb;
    for (const auto& t : left) lb.insert(oracle_bucket(t));
    for (const auto& t : right) rb.insert(oracle_bucket(t));
    for (auto b : lb) ASSERT_FALSE(rb.count(b)) << "fixture has a hash collision";
    LexicalEmbeddingProvider p;
    EXPECT_EQ(cosine(p.embed("walnut legs"), p.embed("velvet cushion")), 0.0);
}

TEST(MatchAnchor, Examples) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"I like blue fabric", "brass tapered metal legs would tie well", "agreed"});
    // Hand check without hashing: only utterance 1 shares tokens with the component.
    const auto comp_tokens = text::tokenize("brass legs");
    EXPECT_GT(oracle_cosine(comp_tokens, text::tokenize(conv.utterances[1].text)), 0.5);
    EXPECT_EQ(oracle_cosine(comp_tokens, text::tokenize(conv.utterances[0].text)), 0.0);
    EXPECT_EQ(match_anchor_utterance({"brass legs", DesignerRole::DesignerA, {}}, conv, p), 1u);

    EXPECT_EQ(match_anchor_utterance({"agreed", DesignerRole::DesignerA, {}}, conv, p), 2u);
    const auto same = make_conversation({"ok", "ok", "ok"});
    EXPECT_EQ(match_anchor_utterance({"ok", DesignerRole::DesignerA, {}}, same, p), 0u);
}

TEST(Clustering, SingleCluster) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"brass legs", "navy color", "cream seat", "oak frame"});
    const auto c = cluster_design_topics(conv, 1, 3, p);
    for (auto a : c.assignments) EXPECT_EQ(a, 0u);
}

TEST(Clustering, SingletonsWhenKEqualsN) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"brass legs", "navy color", "cream seat", "oak frame", "velvet cushion"});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = cluster_design_topics(conv, 5, seed, p);
        std::set<std::size_t> ids(c.assignments.begin(), c.assignments.end());
        EXPECT_EQ(ids.size(), 5u);
        EXPECT_NEAR(c.objective_trace.back(), 0.0, 1e-12);
    }
}

TEST(Clustering, KOutOfRange) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"a", "b"});
    EXPECT_THROW(cluster_design_topics(conv, 0, 1, p), ValidationError);
    EXPECT_THROW(cluster_design_topics(conv, 3, 1, p), ValidationError);
}

// Brute force over every 2-partition; k-means must land on the optimum.
TEST(Clustering, TwoTopicsMatchBruteForceOptimum) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation(
        {"tapered walnut legs", "navy color palette", "walnut legs tapered slightly", "navy palette color please"});
    const auto pts = embed_utterances(conv, p);
    const std::size_t n = pts.size();
    double best = 1e300;
    std::vector<std::size_t> best_assign;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<std::size_t> assign(n);
        for (std::size_t i = 0; i < n; ++i) assign[i] = (mask >> i) & 1u;
        double sse = 0;
        for (std::size_t c = 0; c < 2; ++c) {
            std::vector<double> mean(256, 0.0);
            double cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == c) {
                    for (std::size_t j = 0; j < 256; ++j) mean[j] += pts[i].values[j];
                    ++cnt;
                }
            for (auto& m : mean) m /= cnt;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == c)
                    for (std::size_t j = 0; j < 256; ++j) sse += (pts[i].values[j] - mean[j]) * (pts[i].values[j] - mean[j]);
        }
        if (sse < best - 1e-12) {
            best = sse;
            best_assign = assign;
        }
    }
    EXPECT_EQ(best_assign[0], best_assign[2]);
    EXPECT_EQ(best_assign[1], best_assign[3]);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = cluster_design_topics(conv, 2, seed, p);
        EXPECT_EQ(c.assignments[0], c.assignments[2]);
        EXPECT_EQ(c.assignments[1], c.assignments[3]);
        EXPECT_NE(c.assignments[0], c.assignments[1]);
        EXPECT_NEAR(c.objective_trace.back(), best, 1e-9);
    }
}

TEST(Clustering, ObjectiveNonIncreasingAndDeterministic) {
    LexicalEmbeddingProvider p;
    Rng rng(5);
    const std::vector<std::string> words{"oak", "navy", "brass", "legs", "seat", "cream", "velvet", "tall", "back", "arm"};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::string> lines;
        for (int i = 0; i < 12; ++i) {
            std::string s;
            for (int w = 0; w < 3; ++w) s += words[rng.index(words.size())] + " ";
            lines.push_back(s);
        }
        const auto conv = make_conversation(lines);
        const auto k = 2 + rng.index(4);
        const auto c = cluster_design_topics(conv, k, static_cast<std::uint64_t>(trial), p);
        for (std::size_t i = 1; i < c.objective_trace.size(); ++i)
            EXPECT_LE(c.objective_trace[i], c.objective_trace[i - 1] + 1e-12);
        for (auto a : c.assignments) EXPECT_LT(a, k);
        EXPECT_EQ(c.assignments, cluster_design_topics(conv, k, static_cast<std::uint64_t>(trial), p).assignments);
    }
}

TEST(ExtractSnippet, ContiguityRule) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"u zero", "u one", "u two", "walnut hairpin legs", "u four", "u five"});
    TopicClustering clustering;
    clustering.k = 2;
    clustering.assignments = {0, 0, 1, 1, 1, 0};
    const auto s = extract_snippet({"walnut hairpin legs", DesignerRole::DesignerA, {}}, conv, clustering, p, "x");
    EXPECT_EQ(s.span, (Span{2, 4}));
    EXPECT_EQ(s.utterances.size(), 3u);
    EXPECT_EQ(s.utterances.front().index, 2u);

    clustering.assignments = {0, 0, 0, 1, 0, 0};
    EXPECT_EQ(extract_snippet({"walnut hairpin legs", DesignerRole::DesignerA, {}}, conv, clustering, p).span, (Span{3, 3}));
}

TEST(ExtractSnippet, PlantedTopicBoundary) {
    LexicalEmbeddingProvider p;
    const auto conv = make_conversation({"tapered walnut legs", "walnut legs hairpin", "hairpin tapered legs",
                                         "navy velvet cushion", "velvet cushion navy", "cushion navy velvet"});
    const auto c = cluster_design_topics(conv, 2, 4, p);
    const auto s = extract_snippet({"hairpin walnut legs", DesignerRole::DesignerA, {}}, conv, c, p);
    // Brute-force check: planted span is the only maximal same-cluster run
    // containing the anchor.
    EXPECT_EQ(s.span, (Span{0, 2}));
    const auto t = extract_snippet({"navy velvet", DesignerRole::DesignerB, {}}, conv, c, p);
    EXPECT_EQ(t.span, (Span{3, 5}));
}

TEST(Segmentation, DegenerateConversations) {
    LexicalEmbeddingProvider p;
    auto conv = make_conversation({"just one line"});
    conv.final_designs[DesignerRole::DesignerA] = {{"oak legs", DesignerRole::DesignerA, {}}};
    const auto snippets = segment_conversation(conv, p);
    ASSERT_EQ(snippets.size(), 1u);
    EXPECT_EQ(snippets[0].span, (Span{0, 0}));
}

TEST(Segmentation, DefaultKClamped) {
    auto conv = make_conversation({"a", "b"});
    EXPECT_EQ(default_topic_count(conv), 2u);
    for (int i = 0; i < 12; ++i) conv.final_designs[DesignerRole::DesignerA].push_back({"x", DesignerRole::DesignerA, {}});
    EXPECT_EQ(default_topic_count(conv), 8u);
}

TEST(Segmentation, DatasetDeterministicAndValid) {
    LexicalEmbeddingProvider p;
    const auto d = generate_synthetic_dataset(3, LabelMarginals{});
    SegmentationOptions opts;
    opts.seed = 9;
    const auto a = segment_dataset(d, p, opts);
    const auto b = segment_dataset(d, p, opts);
    EXPECT_EQ(a, b);
    EXPECT_NO_THROW(validate(a));
    EXPECT_EQ(a.snippets.size(), 4u);
}

// The anchor is always inside its snippet.
TEST(Segmentation, AnchorAlwaysIncluded) {
    LexicalEmbeddingProvider p;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto d = generate_synthetic_dataset(seed, LabelMarginals::published());
        SegmentationOptions opts;
        opts.seed = seed;
        const auto seg = segment_dataset(d, p, opts);
        for (const auto& s : seg.snippets) {
            const auto* conv = seg.find_conversation(s.conversation_id);
            const auto anchor = match_anchor_utterance(s.component, *conv, p);
            ASSERT_TRUE(s.span.contains(anchor));
        }
        if (seed == 2) break;
    }
}

TEST(ExtractSnippet, PlantedTopicsOccupyDisjointBuckets) {
    std::map<std::size_t, std::size_t> owner;
    for (std::size_t t = 0; t < planted::topics().size(); ++t)
        for (const auto& w : planted::topics()[t]) {
            const auto [it, fresh] = owner.emplace(oracle_bucket(w), t);
            EXPECT_TRUE(fresh || it->second == t) << w;
        }
}

TEST(ExtractSnippet, RecoversPlantedSpans) {
    LexicalEmbeddingProvider p;
    std::size_t exact = 0, total = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto c = planted::make_case(5, i);
        const auto clustering = cluster_design_topics(c.conversation, 2, i, p);
        for (std::size_t b = 0; b < 2; ++b) {
            const auto s = extract_snippet(c.components[b], c.conversation, clustering, p);
            ASSERT_TRUE(s.span.contains(match_anchor_utterance(c.components[b], c.conversation, p)));
            exact += s.span == c.spans[b];
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(exact) / static_cast<double>(total), 0.95) << exact << "/" << total;
}
