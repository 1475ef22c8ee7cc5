#pragma once

// Conversations, snippets and annotations: schema, validation, line-delimited
// persistence, majority aggregation and a synthetic dataset generator.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "agency/core.hpp"
#include "agency/rng.hpp"

namespace agency {

using Json = nlohmann::ordered_json;

struct SatisfactionRecord {
    std::optional<std::string> most_satisfied;
    std::optional<std::string> least_satisfied;

    bool operator==(const SatisfactionRecord&) const = default;
};

struct Conversation {
    std::string id;
    std::string room_description;
    PerRole<std::string> initial_preferences;
    std::vector<Utterance> utterances;
    PerRole<std::vector<DesignComponent>> final_designs;
    PerRole<SatisfactionRecord> satisfaction;

    bool operator==(const Conversation&) const = default;
};

// Inclusive utterance index range.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start + 1; }
    bool contains(std::size_t i) const { return start <= i && i <= end; }
    bool operator==(const Span&) const = default;
};

struct Snippet {
    std::string id;
    std::string conversation_id;
    DesignComponent component;
    Span span;
    std::vector<Utterance> utterances;

    bool operator==(const Snippet&) const = default;
};

struct AgencyAnnotation {
    std::string snippet_id;
    DesignerRole designer = DesignerRole::DesignerA;
    std::string annotator_id;
    AgencyLevel agency = AgencyLevel::Low;
    FeatureLevel intentionality = FeatureLevel::None;
    FeatureLevel motivation = FeatureLevel::None;
    FeatureLevel self_efficacy = FeatureLevel::NotApplicable;
    FeatureLevel self_regulation = FeatureLevel::NotApplicable;

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

    FeatureLevel feature(AgencyFeature f) const { return std::get<FeatureLevel>(label(subtask_of(f))); }

    void set(Subtask subtask, const Label& value) {
        if (subtask == Subtask::Agency) {
            agency = std::get<AgencyLevel>(value);
            return;
        }
        const auto level = std::get<FeatureLevel>(value);
        switch (subtask) {
            case Subtask::Intentionality: intentionality = level; break;
            case Subtask::Motivation: motivation = level; break;
            case Subtask::SelfEfficacy: self_efficacy = level; break;
            case Subtask::SelfRegulation: self_regulation = level; break;
            default: break;
        }
    }

    bool operator==(const AgencyAnnotation&) const = default;
};

struct Dataset {
    std::vector<Conversation> conversations;
    std::vector<Snippet> snippets;
    std::vector<AgencyAnnotation> annotations;

    bool operator==(const Dataset&) const = default;

    const Conversation* find_conversation(std::string_view id) const {
        for (const auto& c : conversations)
            if (c.id == id) return &c;
        return nullptr;
    }
    const Snippet* find_snippet(std::string_view id) const {
        for (const auto& s : snippets)
            if (s.id == id) return &s;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

inline std::optional<std::string> read_optional_string(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

template <class T, class F>
Json per_role_json(const PerRole<T>& values, F&& convert) {
    Json j = Json::object();
    for (auto role : kRoles) j[std::string(to_string(role))] = convert(values[role]);
    return j;
}

template <class T, class F>
PerRole<T> per_role_from_json(const Json& j, const char* field, F&& convert) {
    if (!j.is_object()) throw ValidationError(std::string(field) + " must be an object keyed by designer");
    if (j.size() != 2) throw ValidationError(std::string(field) + " must have exactly two designer roles");
    PerRole<T> out;
    std::array<bool, 2> seen{};
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto role = parse_role(it.key());
        seen[role_index(role)] = true;
        out[role] = convert(it.value(), role);
    }
    if (!seen[0] || !seen[1]) throw ValidationError(std::string(field) + " must have exactly two designer roles");
    return out;
}

}  // namespace detail

inline Json to_json(const Utterance& u) {
    return Json{{"index", u.index}, {"speaker", to_string(u.speaker)}, {"text", u.text}};
}

inline Utterance utterance_from_json(const Json& j) {
    Utterance u;
    u.index = j.at("index").get<std::size_t>();
    u.speaker = parse_role(j.at("speaker").get<std::string>());
    u.text = j.at("text").get<std::string>();
    if (text::trim(u.text).empty()) throw ValidationError("utterance " + std::to_string(u.index) + " has empty text");
    return u;
}

inline Json to_json(const DesignComponent& c) {
    return Json{{"text", c.text},
                {"owner", to_string(c.owner)},
                {"influence", c.influence ? Json(to_string(*c.influence)) : Json(nullptr)}};
}

inline DesignComponent component_from_json(const Json& j) {
    DesignComponent c;
    c.text = j.at("text").get<std::string>();
    if (text::trim(c.text).empty()) throw ValidationError("design component has empty text");
    if (c.text.find_first_of(";,\n") != std::string::npos)
        throw ValidationError("design component '" + c.text + "' contains a list separator");
    c.owner = parse_role(j.at("owner").get<std::string>());
    if (j.contains("influence") && !j.at("influence").is_null())
        c.influence = parse_agency_level(j.at("influence").get<std::string>());
    return c;
}

inline Json to_json(const Conversation& c) {
    Json utterances = Json::array();
    for (const auto& u : c.utterances) utterances.push_back(to_json(u));
    return Json{
        {"id", c.id},
        {"room_description", c.room_description},
        {"initial_preferences", detail::per_role_json(c.initial_preferences, [](const std::string& s) { return Json(s); })},
        {"utterances", std::move(utterances)},
        {"final_designs", detail::per_role_json(c.final_designs,
                                                [](const std::vector<DesignComponent>& v) {
                                                    Json a = Json::array();
                                                    for (const auto& comp : v) a.push_back(to_json(comp));
                                                    return a;
                                                })},
        {"satisfaction", detail::per_role_json(c.satisfaction, [](const SatisfactionRecord& s) {
             return Json{{"most_satisfied", detail::optional_string(s.most_satisfied)},
                         {"least_satisfied", detail::optional_string(s.least_satisfied)}};
         })},
    };
}

inline Conversation conversation_from_json(const Json& j) {
    Conversation c;
    c.id = j.at("id").get<std::string>();
    if (c.id.empty()) throw ValidationError("conversation id is empty");
    c.room_description = j.at("room_description").get<std::string>();
    c.initial_preferences = detail::per_role_from_json<std::string>(
        j.at("initial_preferences"), "initial_preferences", [](const Json& v, DesignerRole) { return v.get<std::string>(); });
    for (const auto& u : j.at("utterances")) c.utterances.push_back(utterance_from_json(u));
    if (c.utterances.empty()) throw ValidationError("conversation " + c.id + " has no utterances");
    for (std::size_t i = 0; i < c.utterances.size(); ++i)
        if (c.utterances[i].index != i)
            throw ValidationError("conversation " + c.id + ": utterance indices must be 0..n-1 without gaps");
    c.final_designs = detail::per_role_from_json<std::vector<DesignComponent>>(
        j.at("final_designs"), "final_designs", [&](const Json& v, DesignerRole role) {
            std::vector<DesignComponent> out;
            for (const auto& item : v) {
                out.push_back(component_from_json(item));
                if (out.back().owner != role)
                    throw ValidationError("conversation " + c.id + ": component owner does not match its design");
            }
            return out;
        });
    c.satisfaction = detail::per_role_from_json<SatisfactionRecord>(
        j.at("satisfaction"), "satisfaction", [](const Json& v, DesignerRole) {
            return SatisfactionRecord{detail::read_optional_string(v, "most_satisfied"),
                                      detail::read_optional_string(v, "least_satisfied")};
        });
    return c;
}

inline Json to_json(const Snippet& s) {
    Json utterances = Json::array();
    for (const auto& u : s.utterances) utterances.push_back(to_json(u));
    return Json{{"id", s.id},
                {"conversation_id", s.conversation_id},
                {"component", to_json(s.component)},
                {"span", Json::array({s.span.start, s.span.end})},
                {"utterances", std::move(utterances)}};
}

inline Snippet snippet_from_json(const Json& j) {
    Snippet s;
    s.id = j.at("id").get<std::string>();
    if (s.id.empty()) throw ValidationError("snippet id is empty");
    s.conversation_id = j.at("conversation_id").get<std::string>();
    s.component = component_from_json(j.at("component"));
    const auto& span = j.at("span");
    if (!span.is_array() || span.size() != 2) throw ValidationError("snippet " + s.id + ": span must be [start, end]");
    s.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    if (s.span.start > s.span.end) throw ValidationError("snippet " + s.id + ": span start exceeds end");
    for (const auto& u : j.at("utterances")) s.utterances.push_back(utterance_from_json(u));
    return s;
}

inline Json to_json(const AgencyAnnotation& a) {
    return Json{{"snippet_id", a.snippet_id},
                {"designer", to_string(a.designer)},
                {"annotator_id", a.annotator_id},
                {"agency", to_string(a.agency)},
                {"intentionality", to_string(a.intentionality)},
                {"motivation", to_string(a.motivation)},
                {"self_efficacy", to_string(a.self_efficacy)},
                {"self_regulation", to_string(a.self_regulation)}};
}

inline AgencyAnnotation annotation_from_json(const Json& j) {
    AgencyAnnotation a;
    a.snippet_id = j.at("snippet_id").get<std::string>();
    a.designer = parse_role(j.at("designer").get<std::string>());
    a.annotator_id = j.at("annotator_id").get<std::string>();
    for (auto subtask : kSubtasks) a.set(subtask, parse_label(subtask, j.at(std::string(to_string(subtask))).get<std::string>()));
    return a;
}

// ---------------------------------------------------------------------------
// Validation

// Checks every cross-record invariant. Throws ValidationError naming the
// offending id.
inline void validate(const Dataset& d) {
    std::unordered_map<std::string, const Conversation*> conversations;
    for (const auto& c : d.conversations) {
        if (!conversations.emplace(c.id, &c).second) throw ValidationError("duplicate conversation id '" + c.id + "'");
        if (c.utterances.empty()) throw ValidationError("conversation " + c.id + " has no utterances");
        for (std::size_t i = 0; i < c.utterances.size(); ++i)
            if (c.utterances[i].index != i)
                throw ValidationError("conversation " + c.id + ": utterance indices must be 0..n-1 without gaps");
    }
    std::unordered_map<std::string, const Snippet*> snippets;
    for (const auto& s : d.snippets) {
        if (!snippets.emplace(s.id, &s).second) throw ValidationError("duplicate snippet id '" + s.id + "'");
        auto it = conversations.find(s.conversation_id);
        if (it == conversations.end())
            throw ValidationError("snippet " + s.id + " references unknown conversation '" + s.conversation_id + "'");
        const auto& conv = *it->second;
        if (s.span.start > s.span.end || s.span.end >= conv.utterances.size())
            throw ValidationError("snippet " + s.id + ": span out of range for conversation " + conv.id);
        const std::vector<Utterance> expected(conv.utterances.begin() + static_cast<std::ptrdiff_t>(s.span.start),
                                              conv.utterances.begin() + static_cast<std::ptrdiff_t>(s.span.end) + 1);
        if (expected != s.utterances)
            throw ValidationError("snippet " + s.id + ": utterances differ from conversation " + conv.id);
    }
    std::map<std::string, std::array<bool, 2>> covered;
    std::set<std::tuple<std::string, int, std::string>> keys;
    for (const auto& a : d.annotations) {
        if (!snippets.count(a.snippet_id))
            throw ValidationError("annotation references unknown snippet '" + a.snippet_id + "'");
        if (a.intentionality == FeatureLevel::NotApplicable || a.motivation == FeatureLevel::NotApplicable)
            throw ValidationError("annotation on " + a.snippet_id + ": intentionality/motivation cannot be n/a");
        if (!keys.emplace(a.snippet_id, static_cast<int>(a.designer), a.annotator_id).second)
            throw ValidationError("duplicate annotation for snippet " + a.snippet_id + ", " +
                                  std::string(to_string(a.designer)) + ", annotator " + a.annotator_id);
        covered[a.snippet_id][role_index(a.designer)] = true;
    }
    for (const auto& [id, roles] : covered)
        if (!roles[0] || !roles[1]) throw ValidationError("snippet " + id + " is annotated for only one designer");
}

// ---------------------------------------------------------------------------
// Persistence: one JSON record per line, one file per entity kind.

inline constexpr const char* kConversationsFile = "conversations.jsonl";
inline constexpr const char* kSnippetsFile = "snippets.jsonl";
inline constexpr const char* kAnnotationsFile = "annotations.jsonl";
inline constexpr const char* kConversationsKind = "conversations";
inline constexpr const char* kSnippetsKind = "snippets";
inline constexpr const char* kAnnotationsKind = "annotations";

namespace detail {

template <class F>
void read_jsonl(const std::filesystem::path& path, F&& on_record) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            on_record(Json::parse(line));
        } catch (const std::exception& e) {
            throw ValidationError(path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace detail

// Field renames for datasets published in another schema, per record kind:
// {"conversations": {"id": "dialogue_id", ...}, "snippets": {...},
// "annotations": {...}}. Each entry maps a field of this schema to the
// source field it is read from; unmapped fields are read as is.
struct FieldMapping {
    std::map<std::string, std::map<std::string, std::string>> renames;

    Json apply(const std::string& kind, const Json& record) const {
        const auto it = renames.find(kind);
        if (it == renames.end()) return record;
        Json out = record;
        for (const auto& [ours, theirs] : it->second) {
            if (!record.contains(theirs)) continue;
            out.erase(theirs);
            out[ours] = record.at(theirs);
        }
        return out;
    }
};

inline FieldMapping field_mapping_from_json(const Json& j) {
    FieldMapping m;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != kConversationsKind && it.key() != kSnippetsKind && it.key() != kAnnotationsKind)
            throw ValidationError("mapping: unknown record kind '" + it.key() + "'");
        for (auto f = it->begin(); f != it->end(); ++f) m.renames[it.key()][f.key()] = f->get<std::string>();
    }
    return m;
}

// Reads a dataset directory. Missing snippet or annotation files mean an
// unsegmented or unannotated corpus.
inline Dataset load_dataset(const std::filesystem::path& dir, const FieldMapping& mapping) {
    Dataset d;
    detail::read_jsonl(dir / kConversationsFile, [&](const Json& j) {
        d.conversations.push_back(conversation_from_json(mapping.apply(kConversationsKind, j)));
    });
    if (std::filesystem::exists(dir / kSnippetsFile))
        detail::read_jsonl(dir / kSnippetsFile, [&](const Json& j) {
            d.snippets.push_back(snippet_from_json(mapping.apply(kSnippetsKind, j)));
        });
    if (std::filesystem::exists(dir / kAnnotationsFile))
        detail::read_jsonl(dir / kAnnotationsFile, [&](const Json& j) {
            d.annotations.push_back(annotation_from_json(mapping.apply(kAnnotationsKind, j)));
        });
    validate(d);
    return d;
}

inline Dataset load_dataset(const std::filesystem::path& dir) { return load_dataset(dir, FieldMapping{}); }

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_jsonl(dir / kConversationsFile, d.conversations);
    detail::write_jsonl(dir / kSnippetsFile, d.snippets);
    detail::write_jsonl(dir / kAnnotationsFile, d.annotations);
}

// ---------------------------------------------------------------------------
// Aggregation

namespace detail {
// NotApplicable loses every tie.
inline int tie_rank(AgencyLevel l) { return encode_level(l); }
inline int tie_rank(FeatureLevel l) { return l == FeatureLevel::NotApplicable ? 3 : encode_level(l); }
}  // namespace detail

// Most frequent label; ties go to the lower numeric encoding.
template <class Level>
Level majority_label(std::span<const Level> labels) {
    if (labels.empty()) throw ValidationError("majority_label of an empty list");
    std::array<std::size_t, 4> counts{};
    for (auto l : labels) ++counts[static_cast<std::size_t>(detail::tie_rank(l))];
    Level best = labels.front();
    for (auto l : labels) {
        const auto cl = counts[static_cast<std::size_t>(detail::tie_rank(l))];
        const auto cb = counts[static_cast<std::size_t>(detail::tie_rank(best))];
        if (cl > cb || (cl == cb && detail::tie_rank(l) < detail::tie_rank(best))) best = l;
    }
    return best;
}

template <class Level>
Level majority_label(const std::vector<Level>& labels) {
    return majority_label(std::span<const Level>(labels));
}

// Collapses multiple annotators into one "majority" annotation per
// (snippet, designer), in order of first appearance.
inline std::vector<AgencyAnnotation> aggregate_gold(std::span<const AgencyAnnotation> annotations) {
    std::vector<std::pair<std::string, DesignerRole>> order;
    std::map<std::pair<std::string, DesignerRole>, std::vector<const AgencyAnnotation*>> groups;
    for (const auto& a : annotations) {
        auto key = std::make_pair(a.snippet_id, a.designer);
        auto& g = groups[key];
        if (g.empty()) order.push_back(key);
        g.push_back(&a);
    }
    std::vector<AgencyAnnotation> out;
    out.reserve(order.size());
    for (const auto& key : order) {
        const auto& g = groups[key];
        AgencyAnnotation gold;
        gold.snippet_id = key.first;
        gold.designer = key.second;
        gold.annotator_id = g.size() == 1 ? g.front()->annotator_id : "majority";
        std::vector<AgencyLevel> agency;
        for (const auto* a : g) agency.push_back(a->agency);
        gold.agency = majority_label(agency);
        for (auto f : kFeatures) {
            std::vector<FeatureLevel> levels;
            for (const auto* a : g) levels.push_back(a->feature(f));
            gold.set(subtask_of(f), majority_label(levels));
        }
        out.push_back(std::move(gold));
    }
    return out;
}

inline std::vector<AgencyAnnotation> aggregate_gold(const std::vector<AgencyAnnotation>& annotations) {
    return aggregate_gold(std::span<const AgencyAnnotation>(annotations));
}

// ---------------------------------------------------------------------------
// Synthetic datasets

// Requested label counts. Agency is ordered (low, medium, high); features are
// ordered (n/a, no, moderate, strong).
struct LabelMarginals {
    std::optional<std::array<std::size_t, 3>> agency;
    std::array<std::optional<std::array<std::size_t, 4>>, 4> features;
    std::optional<std::size_t> annotation_count;
    std::size_t snippets_per_conversation = 2;

    std::optional<std::array<std::size_t, 4>>& feature(AgencyFeature f) { return features[static_cast<std::size_t>(f)]; }
    const std::optional<std::array<std::size_t, 4>>& feature(AgencyFeature f) const {
        return features[static_cast<std::size_t>(f)];
    }

    // Label counts of the released 908-annotation corpus.
    static LabelMarginals published() {
        LabelMarginals m;
        m.agency = std::array<std::size_t, 3>{308, 292, 308};
        m.feature(AgencyFeature::Intentionality) = std::array<std::size_t, 4>{0, 194, 175, 539};
        m.feature(AgencyFeature::Motivation) = std::array<std::size_t, 4>{0, 474, 158, 276};
        m.feature(AgencyFeature::SelfEfficacy) = std::array<std::size_t, 4>{770, 63, 46, 29};
        m.feature(AgencyFeature::SelfRegulation) = std::array<std::size_t, 4>{764, 25, 61, 58};
        m.snippets_per_conversation = 5;
        return m;
    }
};

inline LabelMarginals marginals_from_json(const Json& j) {
    LabelMarginals m;
    auto count = [](const Json& obj, const char* key) -> std::size_t {
        if (!obj.contains(key)) return 0;
        const auto v = obj.at(key).get<long long>();
        if (v < 0) throw ValidationError(std::string("marginal '") + key + "' is negative");
        return static_cast<std::size_t>(v);
    };
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "annotation_count") {
            m.annotation_count = it.value().get<std::size_t>();
        } else if (it.key() == "snippets_per_conversation") {
            m.snippets_per_conversation = it.value().get<std::size_t>();
        } else {
            const auto subtask = parse_subtask(it.key());
            const auto& o = it.value();
            if (subtask == Subtask::Agency) {
                m.agency = std::array<std::size_t, 3>{count(o, "low"), count(o, "medium"), count(o, "high")};
            } else {
                m.features[subtask_index(subtask) - 1] =
                    std::array<std::size_t, 4>{count(o, "n/a"), count(o, "no"), count(o, "moderate"), count(o, "strong")};
            }
        }
    }
    return m;
}

namespace detail {

struct SynthTopic {
    const char* element;
    std::array<const char*, 6> words;
};

// Lexically disjoint topic vocabularies.
inline constexpr std::array<SynthTopic, 8> kSynthTopics{{
    {"legs", {"tapered", "brass", "hairpin", "walnut", "splayed", "metal"}},
    {"seat", {"cushioned", "padded", "foam", "deep", "plush", "upholstered"}},
    {"back", {"ladder", "spindle", "curved", "tall", "slatted", "lumbar"}},
    {"color", {"navy", "cream", "ivory", "mustard", "sage", "charcoal"}},
    {"arms", {"armrest", "scrolled", "sloped", "flared", "rolled", "track"}},
    {"material", {"leather", "velvet", "linen", "rattan", "boucle", "wool"}},
    {"style", {"midcentury", "scandinavian", "rustic", "industrial", "bohemian", "minimalist"}},
    {"finish", {"lacquered", "matte", "glossy", "distressed", "brushed", "oiled"}},
}};

inline constexpr std::array<const char*, 6> kSynthRooms{
    "A bright living room with white walls, a grey sofa and oak floors.",
    "A small study with a walnut desk, bookshelves and a large window.",
    "A bedroom with a black metal bed frame and a navy accent wall.",
    "A dining area with a long farmhouse table and pendant lights.",
    "A minimalist office with concrete floors and a glass desk.",
    "A reading nook with a bay window and built-in shelves.",
};

inline std::string synth_phrase(Rng& rng, const SynthTopic& topic, std::size_t words) {
    std::vector<std::string> picked;
    std::vector<std::string> pool(topic.words.begin(), topic.words.end());
    rng.shuffle(pool);
    for (std::size_t i = 0; i < words && i < pool.size(); ++i) picked.push_back(pool[i]);
    picked.emplace_back(topic.element);
    return text::join(picked, " ");
}

template <std::size_t N>
std::vector<std::size_t> expand_counts(const std::array<std::size_t, N>& counts) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < N; ++i) out.insert(out.end(), counts[i], i);
    return out;
}

}  // namespace detail

// Builds a dataset whose annotation label counts equal the requested
// marginals exactly. Unspecified subtasks get seeded random labels. One gold
// annotation per (snippet, designer); snippets are planted topic blocks.
inline Dataset generate_synthetic_dataset(std::uint64_t seed, const LabelMarginals& spec) {
    std::optional<std::size_t> total = spec.annotation_count;
    auto require_total = [&](std::size_t n, std::string_view what) {
        if (total && *total != n)
            throw ValidationError("infeasible marginals: " + std::string(what) + " sums to " + std::to_string(n) +
                                  " but the dataset has " + std::to_string(*total) + " annotations");
        total = n;
    };
    if (spec.agency) require_total((*spec.agency)[0] + (*spec.agency)[1] + (*spec.agency)[2], "agency");
    for (auto f : kFeatures) {
        const auto& m = spec.feature(f);
        if (!m) continue;
        if ((*m)[0] > 0 && !admits_not_applicable(subtask_of(f)))
            throw ValidationError("infeasible marginals: " + std::string(to_string(f)) + " cannot be n/a");
        const auto applicable = (*m)[1] + (*m)[2] + (*m)[3];
        if (total && applicable > *total)
            throw ValidationError("infeasible marginals: " + std::string(to_string(f)) + " applicable count " +
                                  std::to_string(applicable) + " exceeds " + std::to_string(*total) + " annotations");
        require_total((*m)[0] + applicable, to_string(f));
    }
    const std::size_t n = total.value_or(8);
    if (n % 2 != 0) throw ValidationError("infeasible marginals: annotations come in designer pairs, got " + std::to_string(n));
    if (spec.snippets_per_conversation == 0) throw ValidationError("snippets_per_conversation must be positive");

    Rng rng(seed);
    // Label columns, each an exact multiset shuffled independently.
    std::vector<std::size_t> agency_col;
    if (spec.agency) {
        agency_col = detail::expand_counts(*spec.agency);
    } else {
        for (std::size_t i = 0; i < n; ++i) agency_col.push_back(static_cast<std::size_t>(rng.index(3)));
    }
    rng.shuffle(agency_col);
    std::array<std::vector<std::size_t>, 4> feature_cols;
    for (auto f : kFeatures) {
        auto& col = feature_cols[static_cast<std::size_t>(f)];
        if (const auto& m = spec.feature(f)) {
            col = detail::expand_counts(*m);
        } else {
            const bool na = admits_not_applicable(subtask_of(f));
            for (std::size_t i = 0; i < n; ++i) col.push_back(na ? rng.index(4) : 1 + rng.index(3));
        }
        rng.shuffle(col);
    }

    Dataset d;
    const std::size_t snippet_count = n / 2;
    const std::size_t per_conv = spec.snippets_per_conversation;
    std::size_t made = 0;
    for (std::size_t ci = 0; made < snippet_count; ++ci) {
        Conversation conv;
        conv.id = "conv-" + std::to_string(ci + 1);
        conv.room_description = detail::kSynthRooms[rng.index(detail::kSynthRooms.size())];
        const std::size_t blocks = std::min(per_conv, snippet_count - made);
        std::vector<std::size_t> topics(detail::kSynthTopics.size());
        for (std::size_t t = 0; t < topics.size(); ++t) topics[t] = t;
        rng.shuffle(topics);
        for (auto role : kRoles)
            conv.initial_preferences[role] =
                "A chair with " + detail::synth_phrase(rng, detail::kSynthTopics[topics[0]], 2) + ".";
        for (std::size_t b = 0; b < blocks; ++b) {
            const auto& topic = detail::kSynthTopics[topics[b % topics.size()]];
            const std::size_t len = 2 + rng.index(5);
            const std::size_t start = conv.utterances.size();
            auto speaker = rng.index(2) ? DesignerRole::DesignerA : DesignerRole::DesignerB;
            for (std::size_t u = 0; u < len; ++u) {
                conv.utterances.push_back(
                    {conv.utterances.size(), speaker, "maybe " + detail::synth_phrase(rng, topic, 2 + rng.index(2))});
                if (rng.uniform() < 0.8) speaker = other(speaker);
            }
            const std::size_t idx = made + b;
            const auto owner = idx % 2 == 0 ? DesignerRole::DesignerA : DesignerRole::DesignerB;
            DesignComponent comp{detail::synth_phrase(rng, topic, 2), owner,
                                 decode_agency_level(static_cast<int>(agency_col[2 * idx + role_index(owner)]))};
            conv.final_designs[owner].push_back(comp);
            Snippet s;
            s.id = conv.id + "-s" + std::to_string(b + 1);
            s.conversation_id = conv.id;
            s.component = comp;
            s.span = {start, conv.utterances.size() - 1};
            d.snippets.push_back(std::move(s));
            for (auto role : kRoles) {
                AgencyAnnotation a;
                a.snippet_id = d.snippets.back().id;
                a.designer = role;
                a.annotator_id = "gold";
                const std::size_t row = 2 * idx + role_index(role);
                a.agency = decode_agency_level(static_cast<int>(agency_col[row]));
                for (auto f : kFeatures)
                    a.set(subtask_of(f), kFeatureLevels[feature_cols[static_cast<std::size_t>(f)][row]]);
                d.annotations.push_back(a);
            }
        }
        for (auto role : kRoles) {
            const auto& design = conv.final_designs[role];
            if (design.empty()) continue;
            conv.satisfaction[role].most_satisfied = design[rng.index(design.size())].text;
            if (rng.uniform() < 0.7) conv.satisfaction[role].least_satisfied = design[rng.index(design.size())].text;
        }
        made += blocks;
        d.conversations.push_back(std::move(conv));
    }
    // Snippet utterances are copies of their conversation span.
    for (auto& s : d.snippets) {
        const auto* conv = d.find_conversation(s.conversation_id);
        s.utterances.assign(conv->utterances.begin() + static_cast<std::ptrdiff_t>(s.span.start),
                            conv->utterances.begin() + static_cast<std::ptrdiff_t>(s.span.end) + 1);
    }
    validate(d);
    return d;
}

}  // namespace agency
