#pragma once

// Conversations made of two back-to-back topic blocks with disjoint
// vocabularies, plus one final-design component per block. Every utterance
// of a block names the block's head noun (the first vocabulary word) with a
// few modifiers; components are "<modifier> <head>". The planted span of
// each component is its whole block. No two topics share a bucket of the
// default lexical embedding.

#include <array>
#include <string>
#include <vector>

#include "agency/corpus.hpp"

namespace planted {

struct Case {
    agency::Conversation conversation;
    std::array<agency::DesignComponent, 2> components;
    std::array<agency::Span, 2> spans;
};

inline const std::vector<std::vector<std::string>>& topics() {
    static const std::vector<std::vector<std::string>> t{
        {"legs", "walnut", "tapered", "hairpin", "oak", "sturdy", "height", "wooden", "chrome", "angled"},
        {"cushion", "velvet", "navy", "linen", "plush", "fabric", "padding", "soft", "tufted", "seat"},
        {"lamp", "shade", "bulb", "warm", "glow", "brightness", "dimmer", "bronze", "pendant", "cord"},
        {"rug", "wool", "pattern", "tassel", "fringe", "jute", "border", "pile", "geometric", "runner"},
        {"shelf", "bracket", "floating", "books", "display", "ledge", "mounted", "pine", "storage", "plank"},
        {"curtain", "drapes", "sheer", "rod", "blackout", "pleated", "hem", "valance", "hooks", "panel"},
    };
    return t;
}

inline std::string phrase(agency::Rng& rng, const std::vector<std::string>& vocab, std::size_t modifiers) {
    std::string s;
    for (std::size_t i = 0; i < modifiers; ++i) s += vocab[1 + rng.index(vocab.size() - 1)] + " ";
    return s + vocab.front();
}

inline Case make_case(std::uint64_t seed, std::size_t index) {
    agency::Rng rng(agency::derive_seed(seed, 0x706c616e74, index));
    const auto& all = topics();
    const auto first = rng.index(all.size());
    auto second = rng.index(all.size() - 1);
    if (second >= first) ++second;

    Case c;
    c.conversation.id = "planted-" + std::to_string(index);
    c.conversation.room_description = "A planted test room.";
    std::size_t next = 0;
    for (std::size_t block = 0; block < 2; ++block) {
        const auto& vocab = all[block == 0 ? first : second];
        const std::size_t length = 3 + rng.index(5);
        c.spans[block] = {next, next + length - 1};
        for (std::size_t i = 0; i < length; ++i, ++next) {
            const auto role = next % 2 ? agency::DesignerRole::DesignerB : agency::DesignerRole::DesignerA;
            c.conversation.utterances.push_back({next, role, phrase(rng, vocab, 1 + rng.index(3))});
        }
        const auto role = block == 0 ? agency::DesignerRole::DesignerA : agency::DesignerRole::DesignerB;
        c.components[block] = {phrase(rng, vocab, 1), role, std::nullopt};
        c.conversation.final_designs[role].push_back(c.components[block]);
    }
    return c;
}

}  // namespace planted
