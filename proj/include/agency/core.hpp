#pragma once

// Shared label types and their numeric/string encodings.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "agency/errors.hpp"
#include "agency/text.hpp"

namespace agency {

enum class AgencyLevel : std::uint8_t { Low = 0, Medium = 1, High = 2 };

// NotApplicable carries no numeric encoding; it is still a first-class value
// so distribution tables can count it.
enum class FeatureLevel : std::uint8_t { NotApplicable, None, Moderate, Strong };

enum class AgencyFeature : std::uint8_t { Intentionality, Motivation, SelfEfficacy, SelfRegulation };

// The five measurement subtasks: Agency plus one per feature.
enum class Subtask : std::uint8_t { Agency, Intentionality, Motivation, SelfEfficacy, SelfRegulation };

enum class DesignerRole : std::uint8_t { DesignerA, DesignerB };

inline constexpr std::array<AgencyLevel, 3> kAgencyLevels{AgencyLevel::Low, AgencyLevel::Medium,
                                                         AgencyLevel::High};
inline constexpr std::array<FeatureLevel, 4> kFeatureLevels{
    FeatureLevel::NotApplicable, FeatureLevel::None, FeatureLevel::Moderate, FeatureLevel::Strong};
inline constexpr std::array<AgencyFeature, 4> kFeatures{
    AgencyFeature::Intentionality, AgencyFeature::Motivation, AgencyFeature::SelfEfficacy,
    AgencyFeature::SelfRegulation};
inline constexpr std::array<Subtask, 5> kSubtasks{Subtask::Agency, Subtask::Intentionality,
                                                  Subtask::Motivation, Subtask::SelfEfficacy,
                                                  Subtask::SelfRegulation};
inline constexpr std::array<DesignerRole, 2> kRoles{DesignerRole::DesignerA, DesignerRole::DesignerB};

// A label of either kind. Which alternative is held must match the subtask.
using Label = std::variant<AgencyLevel, FeatureLevel>;

inline int encode_level(AgencyLevel level) { return static_cast<int>(level); }

inline int encode_level(FeatureLevel level) {
    switch (level) {
        case FeatureLevel::None: return 0;
        case FeatureLevel::Moderate: return 1;
        case FeatureLevel::Strong: return 2;
        case FeatureLevel::NotApplicable: break;
    }
    throw ValidationError("level has no numeric encoding");
}

inline int encode_level(const Label& label) {
    return std::visit([](auto level) { return encode_level(level); }, label);
}

inline AgencyLevel decode_agency_level(int value) {
    if (value < 0 || value > 2) throw ValidationError("agency encoding out of range: " + std::to_string(value));
    return static_cast<AgencyLevel>(value);
}

inline FeatureLevel decode_feature_level(int value) {
    switch (value) {
        case 0: return FeatureLevel::None;
        case 1: return FeatureLevel::Moderate;
        case 2: return FeatureLevel::Strong;
        default: break;
    }
    throw ValidationError("feature encoding out of range: " + std::to_string(value));
}

// Encoding used for aggregation tables: NotApplicable counts as 0.
inline int score_value(const Label& label) {
    if (const auto* f = std::get_if<FeatureLevel>(&label); f && *f == FeatureLevel::NotApplicable) return 0;
    return encode_level(label);
}

inline std::string_view to_string(AgencyLevel level) {
    switch (level) {
        case AgencyLevel::Low: return "low";
        case AgencyLevel::Medium: return "medium";
        case AgencyLevel::High: return "high";
    }
    return "?";
}

inline std::string_view to_string(FeatureLevel level) {
    switch (level) {
        case FeatureLevel::NotApplicable: return "n/a";
        case FeatureLevel::None: return "no";
        case FeatureLevel::Moderate: return "moderate";
        case FeatureLevel::Strong: return "strong";
    }
    return "?";
}

inline std::string_view to_string(AgencyFeature feature) {
    switch (feature) {
        case AgencyFeature::Intentionality: return "intentionality";
        case AgencyFeature::Motivation: return "motivation";
        case AgencyFeature::SelfEfficacy: return "self_efficacy";
        case AgencyFeature::SelfRegulation: return "self_regulation";
    }
    return "?";
}

inline std::string_view to_string(Subtask subtask) {
    switch (subtask) {
        case Subtask::Agency: return "agency";
        case Subtask::Intentionality: return "intentionality";
        case Subtask::Motivation: return "motivation";
        case Subtask::SelfEfficacy: return "self_efficacy";
        case Subtask::SelfRegulation: return "self_regulation";
    }
    return "?";
}

inline std::string_view to_string(DesignerRole role) {
    return role == DesignerRole::DesignerA ? "designer_a" : "designer_b";
}

inline std::string to_string(const Label& label) {
    return std::visit([](auto level) { return std::string(to_string(level)); }, label);
}

inline AgencyLevel parse_agency_level(std::string_view text) {
    const auto s = text::lower(text::trim(text));
    if (s == "low") return AgencyLevel::Low;
    if (s == "medium") return AgencyLevel::Medium;
    if (s == "high") return AgencyLevel::High;
    throw ValidationError("unknown agency level '" + std::string(text) + "'");
}

inline FeatureLevel parse_feature_level(std::string_view text) {
    const auto s = text::lower(text::trim(text));
    if (s == "n/a") return FeatureLevel::NotApplicable;
    if (s == "no") return FeatureLevel::None;
    if (s == "moderate") return FeatureLevel::Moderate;
    if (s == "strong") return FeatureLevel::Strong;
    throw ValidationError("unknown feature level '" + std::string(text) + "'");
}

inline Subtask parse_subtask(std::string_view text) {
    auto s = text::lower(text::trim(text));
    for (auto& c : s)
        if (c == '-') c = '_';
    if (s == "selfefficacy") s = "self_efficacy";
    if (s == "selfregulation") s = "self_regulation";
    for (auto t : kSubtasks)
        if (to_string(t) == s) return t;
    throw ValidationError("unknown subtask '" + std::string(text) + "'");
}

inline DesignerRole parse_role(std::string_view text) {
    const auto s = text::lower(text::trim(text));
    if (s == "designer_a" || s == "ai") return DesignerRole::DesignerA;
    if (s == "designer_b" || s == "human") return DesignerRole::DesignerB;
    throw ValidationError("unknown designer role '" + std::string(text) + "'");
}

inline DesignerRole other(DesignerRole role) {
    return role == DesignerRole::DesignerA ? DesignerRole::DesignerB : DesignerRole::DesignerA;
}

inline std::size_t role_index(DesignerRole role) { return static_cast<std::size_t>(role); }

inline std::size_t subtask_index(Subtask subtask) { return static_cast<std::size_t>(subtask); }

inline Subtask subtask_of(AgencyFeature feature) {
    return static_cast<Subtask>(static_cast<int>(feature) + 1);
}

inline bool admits_not_applicable(Subtask subtask) {
    return subtask == Subtask::SelfEfficacy || subtask == Subtask::SelfRegulation;
}

// Parses a label string in the form appropriate for the subtask.
inline Label parse_label(Subtask subtask, std::string_view text) {
    if (subtask == Subtask::Agency) return parse_agency_level(text);
    const auto level = parse_feature_level(text);
    if (level == FeatureLevel::NotApplicable && !admits_not_applicable(subtask))
        throw ValidationError(std::string(to_string(subtask)) + " cannot be n/a");
    return level;
}

inline bool label_matches_subtask(Subtask subtask, const Label& label) {
    return (subtask == Subtask::Agency) == std::holds_alternative<AgencyLevel>(label);
}

// Per-role storage indexed by DesignerRole.
template <class T>
struct PerRole {
    std::array<T, 2> values{};

    T& operator[](DesignerRole role) { return values[role_index(role)]; }
    const T& operator[](DesignerRole role) const { return values[role_index(role)]; }
    bool operator==(const PerRole&) const = default;
};

struct Utterance {
    std::size_t index = 0;
    DesignerRole speaker = DesignerRole::DesignerA;
    std::string text;

    bool operator==(const Utterance&) const = default;
};

struct DesignComponent {
    std::string text;
    DesignerRole owner = DesignerRole::DesignerA;
    std::optional<AgencyLevel> influence;

    bool operator==(const DesignComponent&) const = default;
};

}  // namespace agency
