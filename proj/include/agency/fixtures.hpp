#pragma once

// Hand-labelled fixtures: the canonical framework fixture (one short snippet
// per definitional example sentence of the four features) and the legs
// discussion used in prompt format examples.

#include <string>
#include <vector>

#include "agency/corpus.hpp"

namespace agency {

// One sentence whose feature level is fixed by the framework definitions.
struct CanonicalCase {
    std::string snippet_id;
    DesignerRole designer = DesignerRole::DesignerA;
    Subtask subtask = Subtask::Intentionality;
    FeatureLevel expected = FeatureLevel::None;
    std::string sentence;
};

struct CanonicalFixture {
    Dataset dataset;
    std::vector<CanonicalCase> cases;
};

namespace detail {

struct FixtureLabels {
    AgencyLevel agency;
    FeatureLevel intentionality, motivation, self_efficacy, self_regulation;
};

struct FixtureEntry {
    std::vector<std::pair<DesignerRole, std::string>> turns;
    FixtureLabels a, b;
    Subtask subtask;
    FeatureLevel expected;
    std::size_t sentence_turn;  // the example sentence, always spoken by designer A
};

inline AgencyAnnotation fixture_annotation(const std::string& snippet_id, DesignerRole role, const FixtureLabels& l) {
    return {snippet_id, role, "canonical", l.agency, l.intentionality, l.motivation, l.self_efficacy, l.self_regulation};
}

inline Conversation fixture_conversation(std::string id, std::string room,
                                         const std::vector<std::pair<DesignerRole, std::string>>& turns,
                                         std::string component) {
    Conversation c;
    c.id = std::move(id);
    c.room_description = std::move(room);
    for (std::size_t i = 0; i < turns.size(); ++i) c.utterances.push_back({i, turns[i].first, turns[i].second});
    c.final_designs[DesignerRole::DesignerA] = {{component, DesignerRole::DesignerA, std::nullopt}};
    c.final_designs[DesignerRole::DesignerB] = {{std::move(component), DesignerRole::DesignerB, std::nullopt}};
    return c;
}

}  // namespace detail

inline CanonicalFixture canonical_fixture() {
    using enum DesignerRole;
    constexpr auto Lo = AgencyLevel::Low, Me = AgencyLevel::Medium, Hi = AgencyLevel::High;
    constexpr auto NA = FeatureLevel::NotApplicable, No = FeatureLevel::None, Mo = FeatureLevel::Moderate,
                   St = FeatureLevel::Strong;
    const std::vector<detail::FixtureEntry> entries{
        {{{DesignerA, "I want to have a blue-colored chair"}, {DesignerB, "Blue sounds nice."}},
         {Hi, St, No, NA, NA}, {Lo, No, No, NA, NA}, Subtask::Intentionality, St, 0},
        {{{DesignerA, "Should we use brown color or blue?"}, {DesignerB, "Hmm, let me look at the room again."}},
         {Me, Mo, No, NA, NA}, {Lo, No, No, NA, NA}, Subtask::Intentionality, Mo, 0},
        {{{DesignerB, "We could do brown or blue."}, {DesignerA, "Between brown and blue, I will prefer brown"}},
         {Me, Mo, No, NA, NA}, {Me, Mo, No, NA, NA}, Subtask::Intentionality, Mo, 1},
        {{{DesignerB, "I want a brown chair."}, {DesignerA, "Yes, brown color sounds good"}},
         {Lo, No, No, NA, NA}, {Hi, St, No, NA, NA}, Subtask::Intentionality, No, 1},
        {{{DesignerA, "What do you think about a blue-colored chair? I think it will complement the color of the wall"},
          {DesignerB, "Hmm, let me picture that."}},
         {Hi, St, St, NA, NA}, {Lo, No, No, NA, NA}, Subtask::Motivation, St, 0},
        {{{DesignerB, "I want a blue chair."}, {DesignerA, "I agree. The blue color would match the walls"}},
         {Lo, No, Mo, NA, NA}, {Hi, St, No, NA, NA}, Subtask::Motivation, Mo, 1},
        {{{DesignerB, "I want a brown chair."},
          {DesignerA, "I wonder if the brown color would feel too dull for this room"}},
         {Lo, No, Mo, NA, NA}, {Hi, St, No, NA, NA}, Subtask::Motivation, Mo, 1},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown for this room."},
          {DesignerA, "I understand your point of view, but I still prefer the blue color"},
          {DesignerB, "Okay, blue it is."}},
         {Hi, St, No, St, No}, {Lo, St, No, No, Mo}, Subtask::SelfEfficacy, St, 2},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown because it hides stains."},
          {DesignerA, "I still prefer blue since it would match the walls."},
          {DesignerB, "I still prefer brown, it is more practical."},
          {DesignerA, "Okay, let's go with brown then"}},
         {Me, St, St, Mo, Mo}, {Hi, St, St, St, No}, Subtask::SelfEfficacy, Mo, 4},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown because it matches the floor."},
          {DesignerA, "Sure, brown should work too"}},
         {Lo, St, No, No, Mo}, {Hi, St, St, NA, NA}, Subtask::SelfEfficacy, No, 2},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown since it matches the floor."},
          {DesignerA, "How about using the beige color instead?"}},
         {Me, St, No, No, St}, {Hi, St, St, NA, NA}, Subtask::SelfRegulation, St, 2},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown because it hides stains."},
          {DesignerA, "Let's compromise and design a beige-colored chair with a brown cushion"}},
         {Me, St, No, No, St}, {Hi, St, St, NA, NA}, Subtask::SelfRegulation, St, 2},
        {{{DesignerA, "I want a blue chair."},
          {DesignerB, "I prefer brown because it matches the floor."},
          {DesignerA, "Ok, let's use the brown color"}},
         {Lo, St, No, No, Mo}, {Hi, St, St, NA, NA}, Subtask::SelfRegulation, Mo, 2},
    };

    CanonicalFixture f;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const auto n = std::to_string(i + 1);
        const auto conv_id = std::string("canon-") + (i + 1 < 10 ? "0" : "") + n;
        auto conv = detail::fixture_conversation(conv_id, "A bright living room with pale walls and an oak floor.",
                                                 e.turns, "chair color");
        Snippet s;
        s.id = conv_id + "-s1";
        s.conversation_id = conv_id;
        s.component = conv.final_designs[DesignerRole::DesignerA].front();
        s.span = {0, conv.utterances.size() - 1};
        s.utterances = conv.utterances;
        f.dataset.annotations.push_back(detail::fixture_annotation(s.id, DesignerRole::DesignerA, e.a));
        f.dataset.annotations.push_back(detail::fixture_annotation(s.id, DesignerRole::DesignerB, e.b));
        f.cases.push_back({s.id, DesignerRole::DesignerA, e.subtask, e.expected, e.turns.at(e.sentence_turn).second});
        f.dataset.snippets.push_back(std::move(s));
        f.dataset.conversations.push_back(std::move(conv));
    }
    return f;
}

// The legs discussion used to show the prompt formats. "Designer" is
// designer A; the brass legs were proposed by designer B.
inline Snippet legs_example_snippet() {
    using enum DesignerRole;
    const std::vector<std::pair<DesignerRole, std::string>> turns{
        {DesignerA, "I think a black wooden frame or black metal legs (to match the bed frame) would work."},
        {DesignerB, "I like the black metal legs.  What about hairpin legs?"},
        {DesignerA, "Or maybe brass legs would be better. Hairpin legs would work fine, but would the rest of the "
                    "frame be the black wood?"},
        {DesignerB, "If we did brass tapered metal legs it would tie well with the black wood."},
        {DesignerA, "I think that would look better."},
        {DesignerB, "Agreed"},
    };
    const auto conv = detail::fixture_conversation("legs-example", "A bedroom with a black bed frame.", turns,
                                                   "brass tapered metal legs");
    Snippet s;
    s.id = "legs-example-s1";
    s.conversation_id = conv.id;
    s.component = {"brass tapered metal legs", DesignerB, AgencyLevel::High};
    s.span = {0, turns.size() - 1};
    s.utterances = conv.utterances;
    return s;
}

// Fixed-response policies for offline tournaments: each always answers with
// the same line, whatever the prompt.
struct ScriptedPolicySpec {
    std::string id;
    std::string line;
};

inline std::vector<ScriptedPolicySpec> reference_scripted_policies() {
    return {
        {"high_agency", "I prefer walnut legs because they would match the oak floor."},
        {"always_agree", "Yes, that sounds good."},
        {"offers_options", "Should we use walnut or oak for this?"},
        {"compromiser", "How about we compromise and combine both ideas instead?"},
    };
}

}  // namespace agency
