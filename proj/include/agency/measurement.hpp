#pragma once

// Agency and feature classification for one designer in a snippet: heuristic,
// question/answer prompt and chain-of-thought prompt backends, prompt
// rendering and parsing, demonstration sampling, train/test splits and
// classifier metrics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "agency/backends.hpp"
#include "agency/corpus.hpp"
#include "agency/heuristic.hpp"

namespace agency {

struct MeasurementResult {
    std::string snippet_id;
    DesignerRole designer = DesignerRole::DesignerA;
    Subtask subtask = Subtask::Agency;
    Label label = AgencyLevel::Low;
    std::optional<std::string> rationale;
    std::string backend_id;

    bool operator==(const MeasurementResult&) const = default;
};

inline Json to_json(const MeasurementResult& r) {
    Json j;
    j["snippet_id"] = r.snippet_id;
    j["designer"] = to_string(r.designer);
    j["subtask"] = to_string(r.subtask);
    j["label"] = to_string(r.label);
    j["rationale"] = detail::optional_string(r.rationale);
    j["backend_id"] = r.backend_id;
    return j;
}

inline MeasurementResult measurement_result_from_json(const Json& j) {
    MeasurementResult r;
    r.snippet_id = j.at("snippet_id").get<std::string>();
    r.designer = parse_role(j.at("designer").get<std::string>());
    r.subtask = parse_subtask(j.at("subtask").get<std::string>());
    r.label = parse_label(r.subtask, j.at("label").get<std::string>());
    r.rationale = detail::read_optional_string(j, "rationale");
    r.backend_id = j.value("backend_id", std::string());
    return r;
}

// ---------------------------------------------------------------------------
// Prompt rendering

struct PromptBundle {
    std::string instruction;
    std::vector<std::string> demonstrations;
    std::string query;

    std::string render() const {
        std::string out = instruction;
        for (const auto& d : demonstrations) out += "\n\n" + d;
        out += "\n\n" + query;
        return out;
    }
};

// A gold-labelled example. `reasoning` is the hand-written summary used by
// chain-of-thought prompts for one subtask.
struct Demonstration {
    Snippet snippet;
    DesignerRole designer = DesignerRole::DesignerA;
    AgencyAnnotation gold;
    std::optional<std::string> reasoning;
};

inline constexpr const char* kQaInstruction =
    "The following are conversations between two interior designers who are designing a chair together. "
    "Each conversation is followed by a question about the Designer and its answer.";
inline constexpr const char* kCotInstruction =
    "The following are conversations between two interior designers who are designing a chair together. "
    "Each conversation is followed by a short summary and a conclusion about the Designer.";

// The queried designer is always "Designer".
inline std::string render_turns(std::span<const Utterance> utterances, DesignerRole designer) {
    std::string out;
    for (const auto& u : utterances) {
        if (!out.empty()) out += '\n';
        out += u.speaker == designer ? "Designer: " : "Other Designer: ";
        out += u.text;
    }
    return out;
}

inline std::string question_line(Subtask subtask) {
    switch (subtask) {
        case Subtask::Agency: return "Who influenced the design element being discussed?:";
        case Subtask::Intentionality: return "How strongly did the Designer express a design preference?:";
        case Subtask::Motivation: return "How strongly did the Designer motivate their design preference?:";
        case Subtask::SelfEfficacy: return "How persistently did the Designer pursue their design preference?:";
        case Subtask::SelfRegulation: return "How strongly did the Designer adjust their design preference?:";
    }
    return {};
}

inline std::string qa_answer(const Label& label) {
    if (const auto* a = std::get_if<AgencyLevel>(&label)) {
        switch (*a) {
            case AgencyLevel::High: return "Designer";
            case AgencyLevel::Low: return "Other Designer";
            case AgencyLevel::Medium: return "Both";
        }
    }
    switch (std::get<FeatureLevel>(label)) {
        case FeatureLevel::Strong: return "Strong";
        case FeatureLevel::Moderate: return "Moderate";
        case FeatureLevel::None: return "No";
        case FeatureLevel::NotApplicable: return "Not Applicable";
    }
    return {};
}

inline std::string feature_display_name(Subtask subtask) {
    switch (subtask) {
        case Subtask::Intentionality: return "Intentionality";
        case Subtask::Motivation: return "Motivation";
        case Subtask::SelfEfficacy: return "Self-Efficacy";
        case Subtask::SelfRegulation: return "Self-Regulation";
        case Subtask::Agency: break;
    }
    return "Agency";
}

// Closing sentence of a chain-of-thought demonstration.
inline std::string cot_conclusion(Subtask subtask, const Label& label) {
    if (const auto* a = std::get_if<AgencyLevel>(&label)) {
        switch (*a) {
            case AgencyLevel::High: return "This was initially proposed by the Designer.";
            case AgencyLevel::Low: return "This was initially proposed by the Other Designer.";
            case AgencyLevel::Medium: return "This was decided in collaboration by both designers.";
        }
    }
    const auto name = feature_display_name(subtask);
    switch (std::get<FeatureLevel>(label)) {
        case FeatureLevel::Strong: return "The Designer showed strong " + name + ".";
        case FeatureLevel::Moderate: return "The Designer showed moderate " + name + ".";
        case FeatureLevel::None: return "The Designer showed no " + name + ".";
        case FeatureLevel::NotApplicable: return name + " was not applicable for the Designer.";
    }
    return {};
}

inline std::string render_qa_demonstration(const Demonstration& d, Subtask subtask) {
    return render_turns(d.snippet.utterances, d.designer) + "\n\n" + question_line(subtask) + " " +
           qa_answer(d.gold.label(subtask));
}

inline std::string render_cot_demonstration(const Demonstration& d, Subtask subtask) {
    if (!d.reasoning || text::trim(*d.reasoning).empty())
        throw ValidationError("demonstration " + d.snippet.id + "/" + std::string(to_string(d.designer)) +
                              " has no reasoning for " + std::string(to_string(subtask)));
    return render_turns(d.snippet.utterances, d.designer) + "\n\nTL;dr " + std::string(text::trim(*d.reasoning)) + " " +
           cot_conclusion(subtask, d.gold.label(subtask));
}

inline PromptBundle build_qa_prompt(const Snippet& snippet, DesignerRole designer, Subtask subtask,
                                    std::span<const Demonstration> demonstrations) {
    PromptBundle b;
    b.instruction = kQaInstruction;
    for (const auto& d : demonstrations) b.demonstrations.push_back(render_qa_demonstration(d, subtask));
    b.query = render_turns(snippet.utterances, designer) + "\n\n" + question_line(subtask);
    return b;
}

inline PromptBundle build_cot_prompt(const Snippet& snippet, DesignerRole designer, Subtask subtask,
                                     std::span<const Demonstration> demonstrations) {
    PromptBundle b;
    b.instruction = kCotInstruction;
    for (const auto& d : demonstrations) b.demonstrations.push_back(render_cot_demonstration(d, subtask));
    b.query = render_turns(snippet.utterances, designer) + "\n\nTL;dr";
    return b;
}

// ---------------------------------------------------------------------------
// Completion parsing

inline Label parse_qa_answer(Subtask subtask, std::string_view completion) {
    std::string line;
    for (const auto& l : text::split(completion, '\n'))
        if (!text::trim(l).empty()) {
            line = std::string(text::trim(l));
            break;
        }
    while (!line.empty() && (line.back() == '.' || line.back() == '!')) line.pop_back();
    const auto key = text::lower(text::trim(line));
    const std::string raw(completion);
    if (subtask == Subtask::Agency) {
        if (key == "designer" || key == "the designer") return AgencyLevel::High;
        if (key == "other designer" || key == "the other designer") return AgencyLevel::Low;
        if (key == "both" || key == "both designers") return AgencyLevel::Medium;
        throw UnparseableLabel(raw, "no agency answer in '" + raw + "'");
    }
    FeatureLevel level;
    if (key == "strong") level = FeatureLevel::Strong;
    else if (key == "moderate") level = FeatureLevel::Moderate;
    else if (key == "no" || key == "none") level = FeatureLevel::None;
    else if (key == "not applicable" || key == "n/a") level = FeatureLevel::NotApplicable;
    else throw UnparseableLabel(raw, "no feature level in '" + raw + "'");
    if (level == FeatureLevel::NotApplicable && !admits_not_applicable(subtask))
        throw UnparseableLabel(raw, std::string(to_string(subtask)) + " does not admit n/a");
    return level;
}

inline Label parse_cot_answer(Subtask subtask, std::string_view completion) {
    const std::string raw(completion);
    const auto t = text::lower(completion);
    if (subtask == Subtask::Agency) {
        if (t.find("proposed by the other designer") != std::string::npos) return AgencyLevel::Low;
        if (t.find("proposed by the designer") != std::string::npos) return AgencyLevel::High;
        if (t.find("collaboration") != std::string::npos || t.find("both designers") != std::string::npos)
            return AgencyLevel::Medium;
        throw UnparseableLabel(raw, "no agency conclusion in '" + raw + "'");
    }
    if (t.find("not applicable") != std::string::npos) {
        if (!admits_not_applicable(subtask))
            throw UnparseableLabel(raw, std::string(to_string(subtask)) + " does not admit n/a");
        return FeatureLevel::NotApplicable;
    }
    static const std::regex pattern(R"(\b(strong|moderate|no)\s+(intentionality|motivation|self-efficacy|self-regulation))");
    std::smatch m;
    if (std::regex_search(t, m, pattern)) {
        if (m[1] == "strong") return FeatureLevel::Strong;
        if (m[1] == "moderate") return FeatureLevel::Moderate;
        return FeatureLevel::None;
    }
    throw UnparseableLabel(raw, "no feature conclusion in '" + raw + "'");
}

// ---------------------------------------------------------------------------
// Backends

class MeasurementBackend {
public:
    virtual ~MeasurementBackend() = default;
    virtual MeasurementResult classify(const Snippet& snippet, DesignerRole designer, Subtask subtask) = 0;
    virtual std::string id() const = 0;
};

class HeuristicBackend final : public MeasurementBackend {
public:
    explicit HeuristicBackend(HeuristicCues cues = HeuristicCues::defaults()) : cues_(std::move(cues)) {}

    MeasurementResult classify(const Snippet& snippet, DesignerRole designer, Subtask subtask) override {
        return {snippet.id, designer, subtask, heuristic_score(snippet, designer, subtask, cues_), std::nullopt, id()};
    }
    std::string id() const override { return "heuristic"; }

private:
    HeuristicCues cues_;
};

enum class PromptStyle { QuestionAnswer, ChainOfThought };

using DemonstrationSets = std::map<Subtask, std::vector<Demonstration>>;

// Prompts a completion provider with per-subtask demonstrations.
class PromptBackend final : public MeasurementBackend {
public:
    PromptBackend(PromptStyle style, std::shared_ptr<CompletionProvider> provider, DemonstrationSets demonstrations,
                  CompletionRequest sampling = CompletionRequest::measurement_defaults())
        : style_(style), provider_(std::move(provider)), demonstrations_(std::move(demonstrations)),
          sampling_(std::move(sampling)) {
        if (!provider_) throw ValidationError("prompt backend needs a provider");
        if (sampling_.stop_sequences.empty())
            sampling_.stop_sequences = {style_ == PromptStyle::QuestionAnswer ? "\n" : "\n\n"};
    }

    PromptBundle prompt(const Snippet& snippet, DesignerRole designer, Subtask subtask) const {
        static const std::vector<Demonstration> none;
        auto it = demonstrations_.find(subtask);
        const auto& demos = it == demonstrations_.end() ? none : it->second;
        return style_ == PromptStyle::QuestionAnswer ? build_qa_prompt(snippet, designer, subtask, demos)
                                                     : build_cot_prompt(snippet, designer, subtask, demos);
    }

    MeasurementResult classify(const Snippet& snippet, DesignerRole designer, Subtask subtask) override {
        auto request = sampling_;
        request.prompt = prompt(snippet, designer, subtask).render();
        const auto completion = provider_->complete(request);
        MeasurementResult r{snippet.id, designer, subtask, AgencyLevel::Low, std::nullopt, id()};
        if (style_ == PromptStyle::QuestionAnswer) {
            r.label = parse_qa_answer(subtask, completion.text);
        } else {
            r.label = parse_cot_answer(subtask, completion.text);
            r.rationale = std::string(text::trim(completion.text));
        }
        return r;
    }

    std::string id() const override {
        return std::string(style_ == PromptStyle::QuestionAnswer ? "qa:" : "cot:") + provider_->id();
    }

private:
    PromptStyle style_;
    std::shared_ptr<CompletionProvider> provider_;
    DemonstrationSets demonstrations_;
    CompletionRequest sampling_;
};

inline MeasurementResult classify(const Snippet& snippet, DesignerRole designer, Subtask subtask,
                                  MeasurementBackend& backend) {
    if (snippet.utterances.empty()) throw ValidationError("snippet " + snippet.id + " is empty");
    auto r = backend.classify(snippet, designer, subtask);
    if (!label_matches_subtask(subtask, r.label))
        throw ValidationError("backend returned a label of the wrong kind for " + std::string(to_string(subtask)));
    return r;
}

// Classifies every (snippet, designer, subtask) triple. Results come back in
// input order regardless of `threads`; the first error is rethrown.
inline std::vector<MeasurementResult> classify_all(std::span<const Snippet> snippets, std::span<const Subtask> subtasks,
                                                   MeasurementBackend& backend, std::size_t threads = 1) {
    struct Job {
        const Snippet* snippet;
        DesignerRole designer;
        Subtask subtask;
    };
    std::vector<Job> jobs;
    for (const auto& s : snippets)
        for (auto role : kRoles)
            for (auto t : subtasks) jobs.push_back({&s, role, t});
    std::vector<MeasurementResult> out(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            try {
                out[i] = classify(*jobs[i].snippet, jobs[i].designer, jobs[i].subtask, backend);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = jobs.size();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, jobs.size()));
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(std::function<void()>(work));
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
    return out;
}

// ---------------------------------------------------------------------------
// Demonstrations and splits

// (snippet_id, designer, subtask) -> reasoning string.
using ReasoningTable = std::map<std::tuple<std::string, DesignerRole, Subtask>, std::string>;

// Line-delimited {"snippet_id", "designer", "subtask", "reasoning"}.
inline ReasoningTable load_reasoning(const std::filesystem::path& path) {
    ReasoningTable table;
    detail::read_jsonl(path, [&](const Json& j) {
        table[{j.at("snippet_id").get<std::string>(), parse_role(j.at("designer").get<std::string>()),
               parse_subtask(j.at("subtask").get<std::string>())}] = j.at("reasoning").get<std::string>();
    });
    return table;
}

// One demonstration per gold (snippet, designer) among the given snippets.
inline std::vector<Demonstration> demonstration_pool(const Dataset& dataset, std::span<const std::string> snippet_ids) {
    std::set<std::string> wanted(snippet_ids.begin(), snippet_ids.end());
    std::vector<Demonstration> pool;
    for (const auto& gold : aggregate_gold(dataset.annotations)) {
        if (!wanted.count(gold.snippet_id)) continue;
        const auto* s = dataset.find_snippet(gold.snippet_id);
        if (!s) throw ValidationError("annotation refers to unknown snippet \"" + gold.snippet_id + "\"");
        pool.push_back({*s, gold.designer, gold, std::nullopt});
    }
    return pool;
}

// Uniform sample without replacement; each subtask draws from its own stream.
inline std::vector<Demonstration> sample_demonstrations(std::span<const Demonstration> pool, Subtask subtask,
                                                        std::size_t k, std::uint64_t seed,
                                                        const ReasoningTable* reasoning = nullptr) {
    if (k > pool.size())
        throw ValidationError("requested " + std::to_string(k) + " demonstrations but only " +
                              std::to_string(pool.size()) + " are available");
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x64656d6fULL, subtask_index(subtask) + 1));
    rng.shuffle(order);
    std::vector<Demonstration> out;
    for (std::size_t i = 0; i < k; ++i) {
        auto d = pool[order[i]];
        if (reasoning) {
            auto it = reasoning->find({d.snippet.id, d.designer, subtask});
            if (it != reasoning->end()) d.reasoning = it->second;
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline DemonstrationSets sample_demonstration_sets(std::span<const Demonstration> pool, std::size_t k,
                                                   std::uint64_t seed, const ReasoningTable* reasoning = nullptr) {
    DemonstrationSets sets;
    for (auto t : kSubtasks) sets[t] = sample_demonstrations(pool, t, k, seed, reasoning);
    return sets;
}

inline constexpr std::size_t kSplitCount = 4;
inline constexpr double kTestFraction = 0.2;

struct TrainTestSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

// Random 80/20 partition of snippet ids; both halves keep dataset order.
inline TrainTestSplit split_snippets(const Dataset& dataset, std::size_t split_index, std::uint64_t seed,
                                     double test_fraction = kTestFraction) {
    if (split_index >= kSplitCount)
        throw ValidationError("split index must be below " + std::to_string(kSplitCount));
    const std::size_t n = dataset.snippets.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x73706c6974ULL, split_index + 1));
    rng.shuffle(order);
    std::size_t test_n = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n >= 2) test_n = std::clamp<std::size_t>(test_n, 1, n - 1);
    std::vector<bool> in_test(n, false);
    for (std::size_t i = 0; i < test_n; ++i) in_test[order[i]] = true;
    TrainTestSplit split;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? split.test : split.train).push_back(dataset.snippets[i].id);
    return split;
}

// ---------------------------------------------------------------------------
// Metrics

using ItemKey = std::pair<std::string, DesignerRole>;

struct ClassifierMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<std::string, double> per_class_f1;
    std::size_t scored = 0;
    std::size_t excluded = 0;  // gold n/a items
};

inline Json to_json(const ClassifierMetrics& m) {
    Json per(Json::object());
    for (const auto& [k, v] : m.per_class_f1) per[k] = v;
    return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"per_class_f1", per},
            {"scored", m.scored},     {"excluded", m.excluded}};
}

// Three-class scoring. Gold n/a items are excluded; a class absent from both
// gold and predictions contributes F1 = 0 to the macro average.
inline ClassifierMetrics evaluate_classifier(Subtask subtask, const std::map<ItemKey, Label>& predictions,
                                             const std::map<ItemKey, Label>& gold) {
    std::vector<std::string> missing, unexpected;
    for (const auto& [k, _] : gold)
        if (!predictions.count(k)) missing.push_back(k.first + "/" + std::string(to_string(k.second)));
    for (const auto& [k, _] : predictions)
        if (!gold.count(k)) unexpected.push_back(k.first + "/" + std::string(to_string(k.second)));
    if (!missing.empty() || !unexpected.empty()) {
        std::string msg = "predictions and gold are misaligned";
        if (!missing.empty()) msg += "; missing predictions: " + text::join(missing, ", ");
        if (!unexpected.empty()) msg += "; no gold for: " + text::join(unexpected, ", ");
        throw ValidationError(msg);
    }

    std::vector<std::string> classes;
    if (subtask == Subtask::Agency)
        for (auto l : kAgencyLevels) classes.emplace_back(to_string(l));
    else
        for (auto l : {FeatureLevel::None, FeatureLevel::Moderate, FeatureLevel::Strong})
            classes.emplace_back(to_string(l));

    ClassifierMetrics m;
    std::map<std::string, std::size_t> tp, fp, fn;
    std::size_t correct = 0;
    for (const auto& [key, g] : gold) {
        if (!label_matches_subtask(subtask, g) || !label_matches_subtask(subtask, predictions.at(key)))
            throw ValidationError("label of the wrong kind for " + std::string(to_string(subtask)));
        if (const auto* f = std::get_if<FeatureLevel>(&g); f && *f == FeatureLevel::NotApplicable) {
            ++m.excluded;
            continue;
        }
        ++m.scored;
        const auto gs = to_string(g);
        const auto ps = to_string(predictions.at(key));
        if (gs == ps) {
            ++correct;
            ++tp[gs];
        } else {
            ++fn[gs];
            ++fp[ps];
        }
    }
    if (m.scored > 0) m.accuracy = static_cast<double>(correct) / static_cast<double>(m.scored);
    double sum = 0.0;
    for (const auto& c : classes) {
        const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
        const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
        m.per_class_f1[c] = f1;
        sum += f1;
    }
    m.macro_f1 = sum / static_cast<double>(classes.size());
    return m;
}

inline std::map<ItemKey, Label> prediction_map(std::span<const MeasurementResult> results, Subtask subtask) {
    std::map<ItemKey, Label> out;
    for (const auto& r : results)
        if (r.subtask == subtask) out[{r.snippet_id, r.designer}] = r.label;
    return out;
}

// Gold labels for the given snippets, from majority-aggregated annotations.
inline std::map<ItemKey, Label> gold_map(std::span<const AgencyAnnotation> annotations, Subtask subtask,
                                         const std::set<std::string>* snippet_ids = nullptr) {
    std::map<ItemKey, Label> out;
    for (const auto& a : aggregate_gold(annotations))
        if (!snippet_ids || snippet_ids->count(a.snippet_id)) out[{a.snippet_id, a.designer}] = a.label(subtask);
    return out;
}

}  // namespace agency
