#pragma once

// Dialogue policies that write the next AI turn in a chair-design
// conversation. Variants differ only in which demonstrations precede the
// scenario and in the provider they call.

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agency/backends.hpp"
#include "agency/corpus.hpp"
#include "agency/heuristic.hpp"

namespace agency {

struct Scenario {
    std::string room_description;
    std::string design_element;
    std::string ai_preference;
    std::optional<std::string> counterpart_preference;

    bool operator==(const Scenario&) const = default;
};

inline void validate(const Scenario& s) {
    if (text::trim(s.room_description).empty()) throw ValidationError("scenario room description is empty");
    if (text::trim(s.design_element).empty()) throw ValidationError("scenario design element is empty");
}

inline Json to_json(const Scenario& s) {
    return {{"room_description", s.room_description},
            {"design_element", s.design_element},
            {"ai_preference", s.ai_preference},
            {"counterpart_preference", detail::optional_string(s.counterpart_preference)}};
}

inline Scenario scenario_from_json(const Json& j) {
    Scenario s{j.at("room_description").get<std::string>(), j.at("design_element").get<std::string>(),
               j.value("ai_preference", std::string()), detail::read_optional_string(j, "counterpart_preference")};
    validate(s);
    return s;
}

enum class PolicyVariant { InstructionOnly, FineTunedPassthrough, InContext, InContextAgencyRanked };

inline std::string_view to_string(PolicyVariant v) {
    switch (v) {
        case PolicyVariant::InstructionOnly: return "instruction_only";
        case PolicyVariant::FineTunedPassthrough: return "fine_tuned";
        case PolicyVariant::InContext: return "in_context";
        case PolicyVariant::InContextAgencyRanked: return "in_context_ranked";
    }
    return "";
}

inline PolicyVariant parse_policy_variant(std::string_view s) {
    const auto t = text::lower(s);
    if (t == "instruction_only" || t == "instructiononly") return PolicyVariant::InstructionOnly;
    if (t == "fine_tuned" || t == "finetuned" || t == "finetunedpassthrough") return PolicyVariant::FineTunedPassthrough;
    if (t == "in_context" || t == "incontext") return PolicyVariant::InContext;
    if (t == "in_context_ranked" || t == "incontextagencyranked") return PolicyVariant::InContextAgencyRanked;
    throw ValidationError("unknown policy variant '" + std::string(s) + "'");
}

inline constexpr const char* kDefaultInstruction =
    "The following is a conversation with an AI assistant for collaboratively designing a chair. The AI assistant is "
    "an interior designer and can express its own preferences, can motivate those preferences, has self-belief in its "
    "preferences, and can self-adjust its behavior.";

inline CompletionRequest generation_sampling() {
    auto r = CompletionRequest::generation_defaults();
    r.stop_sequences = {"\nHuman:", "\nAI:"};
    return r;
}

struct AgentPolicy {
    std::string id;
    PolicyVariant variant = PolicyVariant::InstructionOnly;
    std::string instruction = kDefaultInstruction;
    std::size_t k = 0;
    std::string provider_id;
    CompletionRequest sampling = generation_sampling();
    std::uint64_t seed = 0;
};

inline void validate(const AgentPolicy& p) {
    if (p.id.empty()) throw ValidationError("policy id is empty");
    if (p.provider_id.empty()) throw ValidationError("policy " + p.id + " has no provider id");
    const bool in_context =
        p.variant == PolicyVariant::InContext || p.variant == PolicyVariant::InContextAgencyRanked;
    if (in_context && p.k < 1) throw ValidationError("policy " + p.id + ": in-context variants need k >= 1");
    if (!in_context && p.k != 0) throw ValidationError("policy " + p.id + ": k must be 0 for this variant");
    validate(p.sampling);
}

// {"id", "variant", "provider", "k"?, "seed"?, "instruction"?, "temperature"?,
//  "top_p"?, "max_tokens"?, "stop"?}
inline AgentPolicy policy_from_json(const Json& j) {
    AgentPolicy p;
    p.id = j.at("id").get<std::string>();
    p.variant = parse_policy_variant(j.at("variant").get<std::string>());
    p.provider_id = j.at("provider").get<std::string>();
    const bool in_context =
        p.variant == PolicyVariant::InContext || p.variant == PolicyVariant::InContextAgencyRanked;
    p.k = j.value("k", in_context ? std::size_t{10} : std::size_t{0});
    p.seed = j.value("seed", std::uint64_t{0});
    p.instruction = j.value("instruction", std::string(kDefaultInstruction));
    p.sampling.temperature = j.value("temperature", p.sampling.temperature);
    p.sampling.top_p = j.value("top_p", p.sampling.top_p);
    p.sampling.max_tokens = j.value("max_tokens", p.sampling.max_tokens);
    if (j.contains("stop")) p.sampling.stop_sequences = j.at("stop").get<std::vector<std::string>>();
    validate(p);
    return p;
}

inline Json to_json(const AgentPolicy& p) {
    return {{"id", p.id},
            {"variant", to_string(p.variant)},
            {"provider", p.provider_id},
            {"k", p.k},
            {"seed", p.seed},
            {"instruction", p.instruction},
            {"temperature", p.sampling.temperature},
            {"top_p", p.sampling.top_p},
            {"max_tokens", p.sampling.max_tokens},
            {"stop", p.sampling.stop_sequences}};
}

// ---------------------------------------------------------------------------
// Demonstration selection

// Sum of the four feature encodings; n/a counts 0.
inline int agency_feature_score(FeatureLevel intentionality, FeatureLevel motivation, FeatureLevel self_efficacy,
                                FeatureLevel self_regulation) {
    return score_value(intentionality) + score_value(motivation) + score_value(self_efficacy) +
           score_value(self_regulation);
}

inline int agency_feature_score(const AgencyAnnotation& a) {
    return agency_feature_score(a.intentionality, a.motivation, a.self_efficacy, a.self_regulation);
}

// Gold labels per (snippet, designer): aggregated annotations where present,
// heuristic labels otherwise.
class GoldLabels {
public:
    explicit GoldLabels(const Dataset& dataset, const HeuristicCues& cues = HeuristicCues::defaults()) {
        for (auto& a : aggregate_gold(dataset.annotations)) labels_[{a.snippet_id, a.designer}] = a;
        for (const auto& s : dataset.snippets)
            for (auto role : kRoles) {
                if (labels_.count({s.id, role})) continue;
                const auto p = heuristic_profile(s.utterances, role, cues);
                labels_[{s.id, role}] = {s.id,          role,         "heuristic",       p.agency,
                                         p.intentionality, p.motivation, p.self_efficacy, p.self_regulation};
            }
    }

    const AgencyAnnotation& at(const std::string& snippet_id, DesignerRole role) const {
        auto it = labels_.find({snippet_id, role});
        if (it == labels_.end()) throw ValidationError("no gold labels for snippet \"" + snippet_id + "\"");
        return it->second;
    }

private:
    std::map<std::pair<std::string, DesignerRole>, AgencyAnnotation> labels_;
};

// The designer rendered as "AI": the one with higher Agency. With equal
// Agency both must be High, and designer A is chosen.
inline std::optional<DesignerRole> ai_designer(const AgencyAnnotation& a, const AgencyAnnotation& b) {
    if (a.agency != b.agency) return encode_level(a.agency) > encode_level(b.agency) ? a.designer : b.designer;
    if (a.agency == AgencyLevel::High) return a.designer;
    return std::nullopt;
}

// Ranking score of a snippet: the AI designer's feature score, or the larger
// of the two when Agency is tied.
inline int snippet_rank_score(const AgencyAnnotation& a, const AgencyAnnotation& b) {
    if (a.agency != b.agency) return agency_feature_score(encode_level(a.agency) > encode_level(b.agency) ? a : b);
    return std::max(agency_feature_score(a), agency_feature_score(b));
}

enum class SelectionMode { Random, AgencyRanked };

struct SkippedSnippet {
    std::string snippet_id;
    std::string reason;
};

struct DemonstrationSelection {
    std::vector<const Snippet*> snippets;
    std::vector<SkippedSnippet> skipped;  // snippets that cannot be formatted
};

inline DemonstrationSelection select_demonstrations(const Dataset& dataset, const GoldLabels& gold, SelectionMode mode,
                                                    std::size_t k, std::uint64_t seed) {
    DemonstrationSelection out;
    std::vector<const Snippet*> pool;
    for (const auto& s : dataset.snippets) {
        const auto& a = gold.at(s.id, DesignerRole::DesignerA);
        const auto& b = gold.at(s.id, DesignerRole::DesignerB);
        if (ai_designer(a, b)) pool.push_back(&s);
        else out.skipped.push_back({s.id, "equal agency (" + std::string(to_string(a.agency)) + ") for both designers"});
    }
    if (k > pool.size())
        throw ValidationError("requested " + std::to_string(k) + " demonstrations but only " +
                              std::to_string(pool.size()) + " usable snippets");
    if (mode == SelectionMode::Random) {
        Rng rng(derive_seed(seed, 0x72616e64ULL));
        rng.shuffle(pool);
    } else {
        std::vector<std::pair<int, const Snippet*>> scored;
        for (const auto* s : pool)
            scored.emplace_back(snippet_rank_score(gold.at(s->id, DesignerRole::DesignerA),
                                                   gold.at(s->id, DesignerRole::DesignerB)),
                                s);
        std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second->id < y.second->id;
        });
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = scored[i].second;
    }
    pool.resize(k);
    out.snippets = std::move(pool);
    return out;
}

inline std::string scenario_header(const std::string& room, const std::string& element, const std::string& preference) {
    return "Room description: " + room + "\nDesign element: " + element + "\nAI preference: " + preference;
}

// Room description, design element, the AI designer's preference, then the
// utterances with "AI:" / "Human:" prefixes.
inline std::string format_demonstration(const Snippet& snippet, const Conversation& conversation,
                                        const AgencyAnnotation& gold_a, const AgencyAnnotation& gold_b) {
    const auto ai = ai_designer(gold_a, gold_b);
    if (!ai) throw ValidationError("snippet " + snippet.id + ": no designer has higher agency");
    std::string preference = conversation.initial_preferences[*ai];
    if (text::trim(preference).empty()) preference = snippet.component.text;
    std::string out = scenario_header(conversation.room_description, snippet.component.text, preference);
    for (const auto& u : snippet.utterances) out += (u.speaker == *ai ? "\nAI: " : "\nHuman: ") + u.text;
    return out;
}

// ---------------------------------------------------------------------------
// Agents

// A policy bound to its provider and its fixed demonstration blocks.
class Agent {
public:
    Agent(AgentPolicy policy, std::shared_ptr<CompletionProvider> provider, std::vector<std::string> demonstrations = {})
        : policy_(std::move(policy)), provider_(std::move(provider)), demonstrations_(std::move(demonstrations)) {
        validate(policy_);
        if (!provider_) throw ValidationError("policy " + policy_.id + " has no provider");
        if (demonstrations_.size() != policy_.k)
            throw ValidationError("policy " + policy_.id + " expects " + std::to_string(policy_.k) +
                                  " demonstrations, got " + std::to_string(demonstrations_.size()));
    }

    const AgentPolicy& policy() const { return policy_; }
    const std::vector<std::string>& demonstrations() const { return demonstrations_; }
    CompletionProvider& provider() const { return *provider_; }

private:
    AgentPolicy policy_;
    std::shared_ptr<CompletionProvider> provider_;
    std::vector<std::string> demonstrations_;
};

// Selects and formats the policy's demonstrations from a corpus.
inline Agent make_agent(const AgentPolicy& policy, const ProviderRegistry& providers, const Dataset* corpus = nullptr,
                        const HeuristicCues& cues = HeuristicCues::defaults()) {
    validate(policy);
    std::vector<std::string> blocks;
    if (policy.k > 0) {
        if (!corpus) throw ValidationError("policy " + policy.id + " needs a demonstration corpus");
        const GoldLabels gold(*corpus, cues);
        const auto mode = policy.variant == PolicyVariant::InContextAgencyRanked ? SelectionMode::AgencyRanked
                                                                                 : SelectionMode::Random;
        for (const auto* s : select_demonstrations(*corpus, gold, mode, policy.k, policy.seed).snippets) {
            const auto* conv = corpus->find_conversation(s->conversation_id);
            if (!conv) throw ValidationError("snippet " + s->id + " references unknown conversation");
            blocks.push_back(format_demonstration(*s, *conv, gold.at(s->id, DesignerRole::DesignerA),
                                                  gold.at(s->id, DesignerRole::DesignerB)));
        }
    }
    auto it = providers.find(policy.provider_id);
    if (it == providers.end() || !it->second) throw ValidationError("unknown provider id '" + policy.provider_id + "'");
    return Agent(policy, it->second, std::move(blocks));
}

inline std::string generation_prompt(const Agent& agent, const Scenario& scenario, std::span<const Utterance> transcript,
                                     DesignerRole self) {
    std::string prompt = agent.policy().instruction;
    for (const auto& d : agent.demonstrations()) prompt += "\n\n" + d;
    prompt += "\n\n" + scenario_header(scenario.room_description, scenario.design_element, scenario.ai_preference);
    for (const auto& u : transcript) prompt += (u.speaker == self ? "\nAI: " : "\nHuman: ") + u.text;
    prompt += "\nAI:";
    return prompt;
}

// First non-empty completion line without a leading "AI:".
inline std::string extract_utterance(std::string_view completion) {
    for (const auto& line : text::split(completion, '\n')) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        if (text::starts_with_ci(t, "AI:")) t = text::trim(t.substr(3));
        if (t.empty()) break;
        return std::string(t);
    }
    throw Error("empty generation");
}

inline std::string next_utterance(const Agent& agent, const Scenario& scenario, std::span<const Utterance> transcript,
                                  DesignerRole self, std::optional<std::uint64_t> seed = std::nullopt) {
    validate(scenario);
    if (!transcript.empty() && transcript.back().speaker == self)
        throw StateError("policy " + agent.policy().id + " spoke last; it is not its turn");
    auto request = agent.policy().sampling;
    request.prompt = generation_prompt(agent, scenario, transcript, self);
    if (seed) request.seed = seed;
    return extract_utterance(agent.provider().complete(request).text);
}

}  // namespace agency
