#pragma once

// Design-component snippet extraction: split final designs into components,
// anchor each component on its most similar utterance, cluster utterances into
// design topics with k-means, and grow the anchor into the maximal run of
// same-topic utterances.

#include <algorithm>
#include <cctype>
#include <limits>
#include <string>
#include <vector>

#include "agency/corpus.hpp"
#include "agency/embedding.hpp"
#include "agency/rng.hpp"

namespace agency {

struct TopicClustering {
    std::vector<std::size_t> assignments;
    std::size_t k = 0;
    std::vector<EmbeddingVector> centroids;
    // Sum of squared distances to the assigned centroid, after every
    // assignment step. Non-increasing.
    std::vector<double> objective_trace;
};

struct KMeansOptions {
    std::size_t max_iterations = 100;
    double tolerance = 1e-6;
    std::size_t restarts = 10;  // independent seedings; the lowest final objective wins
};

namespace detail {

inline void split_on(std::vector<std::string>& pieces, char sep) {
    std::vector<std::string> out;
    for (const auto& p : pieces)
        for (auto& part : text::split(p, sep)) out.push_back(std::move(part));
    pieces = std::move(out);
}

inline void split_on_and(std::vector<std::string>& pieces) {
    std::vector<std::string> out;
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\''; };
    for (const auto& p : pieces) {
        std::size_t start = 0;
        for (std::size_t i = 0; i + 3 <= p.size(); ++i) {
            if (text::lower(std::string_view(p).substr(i, 3)) != "and") continue;
            if (i > 0 && is_word(p[i - 1])) continue;
            if (i + 3 < p.size() && is_word(p[i + 3])) continue;
            out.push_back(p.substr(start, i - start));
            start = i + 3;
            i += 2;
        }
        out.push_back(p.substr(start));
    }
    pieces = std::move(out);
}

inline double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

// Splits a written final design on semicolons, then commas, then newlines and
// the standalone word "and". Fragments are trimmed; empty ones dropped.
inline std::vector<DesignComponent> split_final_design(std::string_view design,
                                                       DesignerRole owner = DesignerRole::DesignerA) {
    std::vector<std::string> pieces{std::string(design)};
    detail::split_on(pieces, ';');
    detail::split_on(pieces, ',');
    detail::split_on(pieces, '\n');
    detail::split_on_and(pieces);
    std::vector<DesignComponent> out;
    for (const auto& p : pieces) {
        const auto t = text::trim(p);
        if (!t.empty()) out.push_back({std::string(t), owner, std::nullopt});
    }
    return out;
}

inline std::vector<EmbeddingVector> embed_utterances(const Conversation& conversation, const EmbeddingProvider& provider) {
    std::vector<EmbeddingVector> out;
    out.reserve(conversation.utterances.size());
    for (const auto& u : conversation.utterances) out.push_back(provider.embed(u.text));
    return out;
}

// Index of the utterance most similar to `target`; ties go to the lowest index.
inline std::size_t argmax_similarity(const EmbeddingVector& target, std::span<const EmbeddingVector> utterances) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        const double s = cosine(target, utterances[i]);
        if (s > best_sim) {
            best_sim = s;
            best = i;
        }
    }
    return best;
}

inline std::size_t match_anchor_utterance(const DesignComponent& component, const Conversation& conversation,
                                          const EmbeddingProvider& provider) {
    if (conversation.utterances.empty()) throw ValidationError("conversation " + conversation.id + " has no utterances");
    const auto embeddings = embed_utterances(conversation, provider);
    return argmax_similarity(provider.embed(component.text), embeddings);
}

namespace detail {

inline TopicClustering kmeans_once(std::span<const EmbeddingVector> points, std::size_t k, std::uint64_t seed,
                                   const KMeansOptions& options) {
    const std::size_t n = points.size();
    Rng rng(seed);
    TopicClustering result;
    result.k = k;

    std::vector<bool> chosen(n, false);
    std::vector<std::size_t> first{static_cast<std::size_t>(rng.index(n))};
    chosen[first[0]] = true;
    result.centroids.push_back(points[first[0]]);
    std::vector<double> d2(n);
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : result.centroids) best = std::min(best, detail::squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && r < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == n)  // rounding at the upper end
                for (std::size_t i = n; i-- > 0;)
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        chosen[pick] = true;
        result.centroids.push_back(points[pick]);
    }

    result.assignments.assign(n, 0);
    auto assign = [&] {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = detail::squared_distance(points[i], result.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            result.assignments[i] = best;
            objective += best_d;
        }
        result.objective_trace.push_back(objective);
    };

    const std::size_t dim = points.front().dimension();
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        assign();
        std::vector<EmbeddingVector> next(k, EmbeddingVector{std::vector<double>(dim, 0.0)});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = result.assignments[i];
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) next[c].values[j] += points[i].values[j];
        }
        double movement = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                next[c] = result.centroids[c];
                continue;
            }
            for (auto& x : next[c].values) x /= static_cast<double>(counts[c]);
            movement = std::max(movement, std::sqrt(detail::squared_distance(next[c], result.centroids[c])));
        }
        result.centroids = std::move(next);
        if (movement < options.tolerance) break;
    }
    assign();
    return result;
}

}  // namespace detail

// Lloyd's k-means with k-means++ seeding from a seeded generator, restarted
// `options.restarts` times. Assignment ties go to the lowest cluster id; an
// emptied cluster keeps its centroid. Equal final objectives keep the
// earlier restart.
inline TopicClustering kmeans(std::span<const EmbeddingVector> points, std::size_t k, std::uint64_t seed,
                              const KMeansOptions& options = {}) {
    const std::size_t n = points.size();
    if (k < 1 || k > n)
        throw ValidationError("k must be in [1, " + std::to_string(n) + "], got " + std::to_string(k));
    TopicClustering best = detail::kmeans_once(points, k, seed, options);
    for (std::size_t r = 1; r < std::max<std::size_t>(options.restarts, 1); ++r) {
        auto next = detail::kmeans_once(points, k, derive_seed(seed, 0x72657374, r), options);
        if (next.objective_trace.back() < best.objective_trace.back() - 1e-12) best = std::move(next);
    }
    return best;
}

inline TopicClustering cluster_design_topics(const Conversation& conversation, std::size_t k, std::uint64_t seed,
                                             const EmbeddingProvider& provider, const KMeansOptions& options = {}) {
    if (k < 1 || k > conversation.utterances.size())
        throw ValidationError("k must be in [1, " + std::to_string(conversation.utterances.size()) + "], got " +
                              std::to_string(k));
    const auto embeddings = embed_utterances(conversation, provider);
    return kmeans(embeddings, k, seed, options);
}

// Maximal contiguous range around `anchor` whose cluster ids equal the anchor's.
inline Span grow_span(std::span<const std::size_t> assignments, std::size_t anchor) {
    Span span{anchor, anchor};
    const auto cluster = assignments[anchor];
    while (span.start > 0 && assignments[span.start - 1] == cluster) --span.start;
    while (span.end + 1 < assignments.size() && assignments[span.end + 1] == cluster) ++span.end;
    return span;
}

inline Snippet make_snippet(std::string id, const Conversation& conversation, const DesignComponent& component, Span span) {
    Snippet s;
    s.id = std::move(id);
    s.conversation_id = conversation.id;
    s.component = component;
    s.span = span;
    s.utterances.assign(conversation.utterances.begin() + static_cast<std::ptrdiff_t>(span.start),
                        conversation.utterances.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
    return s;
}

inline Snippet extract_snippet(const DesignComponent& component, const Conversation& conversation,
                               const TopicClustering& clustering, const EmbeddingProvider& provider,
                               std::string snippet_id = {}) {
    if (clustering.assignments.size() != conversation.utterances.size())
        throw ValidationError("clustering does not match conversation " + conversation.id);
    if (snippet_id.empty()) snippet_id = conversation.id + "-snippet";
    if (conversation.utterances.size() <= 1)
        return make_snippet(std::move(snippet_id), conversation, component, {0, 0});
    const auto anchor = match_anchor_utterance(component, conversation, provider);
    return make_snippet(std::move(snippet_id), conversation, component, grow_span(clustering.assignments, anchor));
}

struct SegmentationOptions {
    std::optional<std::size_t> k;  // default: component count clamped to [2, 8]
    std::uint64_t seed = 0;
    KMeansOptions kmeans;
};

inline std::size_t default_topic_count(const Conversation& conversation) {
    const std::size_t components =
        conversation.final_designs[DesignerRole::DesignerA].size() + conversation.final_designs[DesignerRole::DesignerB].size();
    return std::clamp<std::size_t>(components, 2, 8);
}

// One snippet per component of both final designs (designer A's first).
// Overlapping spans are allowed.
inline std::vector<Snippet> segment_conversation(const Conversation& conversation, const EmbeddingProvider& provider,
                                                 const SegmentationOptions& options = {}) {
    const auto n = conversation.utterances.size();
    if (n == 0) throw ValidationError("conversation " + conversation.id + " has no utterances");
    std::vector<DesignComponent> components;
    for (auto role : kRoles)
        for (const auto& c : conversation.final_designs[role]) components.push_back(c);
    std::vector<Snippet> out;
    if (n == 1) {
        for (std::size_t i = 0; i < components.size(); ++i)
            out.push_back(make_snippet(conversation.id + "-s" + std::to_string(i + 1), conversation, components[i], {0, 0}));
        return out;
    }
    const std::size_t k = std::min(options.k.value_or(default_topic_count(conversation)), n);
    const auto embeddings = embed_utterances(conversation, provider);
    const auto clustering =
        kmeans(embeddings, k, derive_seed(options.seed, text::fnv1a(conversation.id)), options.kmeans);
    for (std::size_t i = 0; i < components.size(); ++i) {
        const auto anchor = argmax_similarity(provider.embed(components[i].text), embeddings);
        out.push_back(make_snippet(conversation.id + "-s" + std::to_string(i + 1), conversation, components[i],
                                   grow_span(clustering.assignments, anchor)));
    }
    return out;
}

// Replaces the dataset's snippets with freshly extracted ones. Annotations
// refer to the old snippet ids and are dropped.
inline Dataset segment_dataset(const Dataset& dataset, const EmbeddingProvider& provider,
                               const SegmentationOptions& options = {}) {
    Dataset out;
    out.conversations = dataset.conversations;
    for (const auto& c : dataset.conversations)
        for (auto& s : segment_conversation(c, provider, options)) out.snippets.push_back(std::move(s));
    return out;
}

}  // namespace agency
