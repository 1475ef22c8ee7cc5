#pragma once

// Rule-based Agency scorer. Utterances are tagged with lexical cues; the
// feature levels then follow from the cue tags and from the turn structure of
// the snippet (who stated a preference, who pushed back, who gave in).

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agency/core.hpp"
#include "agency/corpus.hpp"

namespace agency {

// Cue phrases, matched on whole tokens (see text::tokenize). A "*" inside a
// phrase matches one or more arbitrary tokens.
struct HeuristicCues {
    std::vector<std::string> preference;
    std::vector<std::string> choice;
    std::vector<std::string> agreement;
    std::vector<std::string> disagreement;
    std::vector<std::string> justification;
    std::vector<std::string> adjustment;

    bool operator==(const HeuristicCues&) const = default;

    static HeuristicCues defaults() {
        HeuristicCues c;
        c.preference = {"i want", "i prefer", "i would prefer", "id prefer", "i will prefer", "i would like",
                        "id like", "i like the", "i love the", "how about", "what about", "what do you think about",
                        "should we", "i think we should", "we should", "i suggest", "i propose", "still prefer",
                        "still think", "still want", "still like", "still leaning"};
        c.choice = {"or", "either", "between * and", "between * or"};
        c.agreement = {"yes",       "yeah",      "yep",         "agreed",       "agree",      "sounds good",
                       "sounds great", "sounds nice", "sure",   "ok",           "okay",       "perfect",
                       "great",     "definitely", "that works", "works for me", "fine with",  "good idea",
                       "love it",   "love that", "i like that", "go with"};
        c.disagreement = {"i wonder if", "not sure", "im not sure", "i dont think", "i dont like", "concerned",
                          "i disagree", "might be too", "would be too", "would feel too", "too dull", "too dark"};
        c.justification = {"because",       "since",         "so that",       "to match",      "will match",
                           "would match",   "matches",       "will complement", "would complement", "complements",
                           "will tie",      "would tie",     "tie well",      "ties well",     "go well with",
                           "goes well with", "would go well", "will go well", "would feel",  "will feel",
                           "would look",    "will look",     "would add",     "will add",      "would work with",
                           "would blend",   "will blend",    "would brighten", "will brighten", "would contrast"};
        c.adjustment = {"instead", "compromise", "meet in the middle", "middle ground", "meet halfway", "combine",
                        "what if we mix"};
        return c;
    }
};

inline nlohmann::ordered_json to_json(const HeuristicCues& c) {
    return {{"preference", c.preference},       {"choice", c.choice},
            {"agreement", c.agreement},         {"disagreement", c.disagreement},
            {"justification", c.justification}, {"adjustment", c.adjustment}};
}

inline HeuristicCues cues_from_json(const nlohmann::json& j) {
    HeuristicCues c;
    auto read = [&](const char* key, std::vector<std::string>& out) {
        if (!j.contains(key)) throw ValidationError(std::string("cue file is missing '") + key + "'");
        out = j.at(key).get<std::vector<std::string>>();
    };
    read("preference", c.preference);
    read("choice", c.choice);
    read("agreement", c.agreement);
    read("disagreement", c.disagreement);
    read("justification", c.justification);
    read("adjustment", c.adjustment);
    return c;
}

inline HeuristicCues load_cues(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open cue file " + path.string());
    try {
        return cues_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("cue file " + path.string() + ": " + e.what());
    }
}

namespace detail {

inline bool match_at(const std::vector<std::string>& tokens, std::size_t pos, const std::vector<std::string>& pattern,
                     std::size_t pi) {
    if (pi == pattern.size()) return true;
    if (pattern[pi] == "*") {
        for (std::size_t skip = pos + 1; skip <= tokens.size(); ++skip)
            if (match_at(tokens, skip, pattern, pi + 1)) return true;
        return false;
    }
    return pos < tokens.size() && tokens[pos] == pattern[pi] && match_at(tokens, pos + 1, pattern, pi + 1);
}

inline bool contains_phrase(const std::vector<std::string>& tokens, const std::string& phrase) {
    std::vector<std::string> pattern;
    for (auto& t : text::split(phrase, ' '))
        if (t == "*") pattern.push_back(t);
        else
            for (auto& tok : text::tokenize(t)) pattern.push_back(std::move(tok));
    if (pattern.empty()) return false;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (match_at(tokens, i, pattern, 0)) return true;
    return false;
}

inline bool any_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrases) {
    for (const auto& p : phrases)
        if (contains_phrase(tokens, p)) return true;
    return false;
}

}  // namespace detail

struct UtteranceCues {
    bool preference = false;
    bool choice = false;
    bool agreement = false;
    bool disagreement = false;
    bool justification = false;
    bool adjustment = false;

    // Choice phrasing outranks a bare preference marker.
    FeatureLevel intent() const {
        if (choice) return FeatureLevel::Moderate;
        if (preference) return FeatureLevel::Strong;
        return FeatureLevel::None;
    }
    bool states_preference() const { return intent() != FeatureLevel::None; }
    bool concedes() const { return agreement && !states_preference() && !adjustment; }
    bool challenges() const { return states_preference() || disagreement; }
    bool adjusts() const { return adjustment; }
    bool restates() const { return states_preference() && !adjustment && !agreement; }

    FeatureLevel motivation() const {
        if (!justification) return FeatureLevel::None;
        if (states_preference() && !agreement) return FeatureLevel::Strong;
        if (agreement || disagreement) return FeatureLevel::Moderate;
        return FeatureLevel::None;
    }
};

inline UtteranceCues tag_utterance(std::string_view utterance, const HeuristicCues& cues) {
    const auto tokens = text::tokenize(utterance);
    UtteranceCues u;
    u.preference = detail::any_phrase(tokens, cues.preference);
    u.choice = detail::any_phrase(tokens, cues.choice);
    u.agreement = detail::any_phrase(tokens, cues.agreement);
    u.disagreement = detail::any_phrase(tokens, cues.disagreement);
    u.justification = detail::any_phrase(tokens, cues.justification);
    u.adjustment = detail::any_phrase(tokens, cues.adjustment);
    return u;
}

// Everything the scorer derives for one designer in one snippet.
struct HeuristicProfile {
    FeatureLevel intentionality = FeatureLevel::None;
    FeatureLevel motivation = FeatureLevel::None;
    FeatureLevel self_efficacy = FeatureLevel::NotApplicable;
    FeatureLevel self_regulation = FeatureLevel::NotApplicable;
    AgencyLevel agency = AgencyLevel::Low;

    Label label(Subtask subtask) const {
        switch (subtask) {
            case Subtask::Agency: return agency;
            case Subtask::Intentionality: return intentionality;
            case Subtask::Motivation: return motivation;
            case Subtask::SelfEfficacy: return self_efficacy;
            case Subtask::SelfRegulation: return self_regulation;
        }
        return agency;
    }
};

inline HeuristicProfile heuristic_profile(std::span<const Utterance> utterances, DesignerRole designer,
                                          const HeuristicCues& cues) {
    HeuristicProfile p;
    bool stated = false;       // designer has expressed a preference
    bool challenged = false;   // counterpart pushed back after that
    bool gave_way = false;     // conceded or adjusted after the challenge
    bool conceded = false;
    std::size_t restatements = 0;
    std::optional<FeatureLevel> regulation;  // first decisive change

    for (const auto& u : utterances) {
        const auto tags = tag_utterance(u.text, cues);
        if (u.speaker != designer) {
            if (stated && tags.challenges()) challenged = true;
            continue;
        }
        p.intentionality = std::max(p.intentionality, tags.intent());
        p.motivation = std::max(p.motivation, tags.motivation());
        if (!stated) {
            stated = tags.states_preference();
            continue;
        }
        if (tags.adjusts() && !regulation) regulation = FeatureLevel::Strong;  // changed on own initiative
        if (!challenged || gave_way) continue;
        if (tags.adjusts()) {
            gave_way = true;
        } else if (tags.concedes()) {
            gave_way = conceded = true;
            if (!regulation) regulation = FeatureLevel::Moderate;
        } else if (tags.restates()) {
            ++restatements;
        }
    }

    if (stated && challenged) {
        if (restatements >= 2 || (restatements == 1 && !gave_way)) p.self_efficacy = FeatureLevel::Strong;
        else if (restatements == 1) p.self_efficacy = FeatureLevel::Moderate;
        else if (gave_way) p.self_efficacy = FeatureLevel::None;
    }
    if (regulation) p.self_regulation = *regulation;
    else if (stated && challenged && restatements > 0) p.self_regulation = FeatureLevel::None;

    if (!stated) p.agency = AgencyLevel::Low;
    else if (p.self_regulation == FeatureLevel::Strong) p.agency = AgencyLevel::Medium;
    else if (conceded) p.agency = restatements > 0 ? AgencyLevel::Medium : AgencyLevel::Low;
    else if (p.intentionality == FeatureLevel::Strong || p.motivation == FeatureLevel::Strong) p.agency = AgencyLevel::High;
    else p.agency = AgencyLevel::Medium;
    return p;
}

inline Label heuristic_score(const Snippet& snippet, DesignerRole designer, Subtask subtask,
                             const HeuristicCues& cues = HeuristicCues::defaults()) {
    return heuristic_profile(snippet.utterances, designer, cues).label(subtask);
}

}  // namespace agency
