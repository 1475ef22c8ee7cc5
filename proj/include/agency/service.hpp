#pragma once

// Human evaluation sessions: a participant chats with two hidden policies in
// random order, finalizes a design with each, then answers five comparison
// questions. Sessions are append-only event logs replayed on startup.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "agency/generation.hpp"

namespace agency {

class NotFound : public Error {
public:
    using Error::Error;
};

// A request for a session that is already serving another request.
class SessionBusy : public StateError {
public:
    using StateError::StateError;
};

enum class Slot : std::uint8_t { First, Second };
enum class SessionState : std::uint8_t { AwaitingFirst, AwaitingSecond, AwaitingQuestionnaire, Complete };

inline constexpr std::array<Slot, 2> kSlots{Slot::First, Slot::Second};

inline std::string_view to_string(Slot s) { return s == Slot::First ? "first" : "second"; }

inline Slot parse_slot(std::string_view s) {
    const auto t = text::lower(text::trim(s));
    if (t == "first") return Slot::First;
    if (t == "second") return Slot::Second;
    throw ValidationError("unknown slot '" + std::string(s) + "'");
}

inline std::string_view to_string(SessionState s) {
    switch (s) {
        case SessionState::AwaitingFirst: return "awaiting_first";
        case SessionState::AwaitingSecond: return "awaiting_second";
        case SessionState::AwaitingQuestionnaire: return "awaiting_questionnaire";
        case SessionState::Complete: return "complete";
    }
    return "?";
}

inline std::size_t slot_index(Slot s) { return static_cast<std::size_t>(s); }

inline std::optional<Slot> active_slot(SessionState s) {
    if (s == SessionState::AwaitingFirst) return Slot::First;
    if (s == SessionState::AwaitingSecond) return Slot::Second;
    return std::nullopt;
}

// Which slot did better on each question, keyed by subtask.
struct QuestionnaireResponse {
    std::map<Subtask, Slot> answers;

    bool operator==(const QuestionnaireResponse&) const = default;
};

inline Json to_json(const QuestionnaireResponse& q) {
    Json j = Json::object();
    for (const auto& [t, s] : q.answers) j[std::string(to_string(t))] = std::string(to_string(s));
    return j;
}

inline QuestionnaireResponse questionnaire_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("questionnaire answers must be an object");
    QuestionnaireResponse q;
    for (auto t : kSubtasks) {
        const std::string key(to_string(t));
        if (!j.contains(key) || j.at(key).is_null()) throw ValidationError("missing answer for '" + key + "'");
        if (!j.at(key).is_string()) throw ValidationError("answer for '" + key + "' must be \"first\" or \"second\"");
        q.answers[t] = parse_slot(j.at(key).get<std::string>());
    }
    for (auto it = j.begin(); it != j.end(); ++it) parse_subtask(it.key());
    return q;
}

using Clock = std::function<std::chrono::system_clock::time_point()>;

inline std::int64_t to_millis(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

struct EvalSession {
    std::string id;
    std::string participant_id;
    Scenario scenario;
    std::array<std::string, 2> system_order;  // policy id per slot
    std::uint64_t seed = 0;
    std::int64_t created_at = 0;
    std::array<std::vector<Utterance>, 2> transcripts;  // human is DesignerA, the policy DesignerB
    std::array<std::optional<std::string>, 2> final_designs;
    std::array<std::optional<std::int64_t>, 2> slot_started_at;
    std::optional<QuestionnaireResponse> questionnaire;
    SessionState state = SessionState::AwaitingFirst;

    const std::vector<Utterance>& transcript(Slot s) const { return transcripts[slot_index(s)]; }
    const std::string& policy(Slot s) const { return system_order[slot_index(s)]; }
};

inline constexpr DesignerRole kHumanRole = DesignerRole::DesignerA;
inline constexpr DesignerRole kPolicyRole = DesignerRole::DesignerB;

namespace detail {

inline Json transcript_json(const std::vector<Utterance>& t) {
    Json out = Json::array();
    for (const auto& u : t) out.push_back({{"speaker", u.speaker == kHumanRole ? "human" : "ai"}, {"text", u.text}});
    return out;
}

}  // namespace detail

// What the participant may see. Policy ids and the AI's preference appear
// only once the session is complete.
inline Json session_view(const EvalSession& s) {
    Json transcripts = Json::object(), designs = Json::object();
    for (auto slot : kSlots) {
        const std::string key(to_string(slot));
        transcripts[key] = detail::transcript_json(s.transcript(slot));
        designs[key] = detail::optional_string(s.final_designs[slot_index(slot)]);
    }
    Json scenario{{"room_description", s.scenario.room_description}, {"design_element", s.scenario.design_element}};
    if (s.scenario.counterpart_preference) scenario["your_preference"] = *s.scenario.counterpart_preference;
    const auto active = active_slot(s.state);
    Json j{{"id", s.id},
           {"participant_id", s.participant_id},
           {"state", std::string(to_string(s.state))},
           {"active_slot", active ? Json(std::string(to_string(*active))) : Json(nullptr)},
           {"scenario", scenario},
           {"transcripts", transcripts},
           {"final_designs", designs}};
    if (s.state == SessionState::Complete) {
        j["questionnaire"] = to_json(*s.questionnaire);
        j["systems"] = Json{{"first", s.system_order[0]}, {"second", s.system_order[1]}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Events

namespace detail {

inline void apply_event(EvalSession& s, const Json& e) {
    const auto type = e.at("event").get<std::string>();
    const auto at = e.at("at").get<std::int64_t>();
    if (type == "create") {
        const auto& b = e.at("session");
        s.id = b.at("id").get<std::string>();
        s.participant_id = b.at("participant_id").get<std::string>();
        s.scenario = scenario_from_json(b.at("scenario"));
        s.system_order = {b.at("system_order").at(0).get<std::string>(), b.at("system_order").at(1).get<std::string>()};
        s.seed = b.at("seed").get<std::uint64_t>();
        s.created_at = at;
        return;
    }
    if (type == "message" || type == "reply") {
        const auto slot = parse_slot(e.at("slot").get<std::string>());
        auto& t = s.transcripts[slot_index(slot)];
        if (!s.slot_started_at[slot_index(slot)]) s.slot_started_at[slot_index(slot)] = at;
        t.push_back({t.size(), type == "message" ? kHumanRole : kPolicyRole, e.at("text").get<std::string>()});
        return;
    }
    if (type == "finalize") {
        const auto slot = parse_slot(e.at("slot").get<std::string>());
        s.final_designs[slot_index(slot)] = e.at("design").get<std::string>();
        s.state = slot == Slot::First ? SessionState::AwaitingSecond : SessionState::AwaitingQuestionnaire;
        return;
    }
    if (type == "questionnaire") {
        s.questionnaire = questionnaire_from_json(e.at("answers"));
        s.state = SessionState::Complete;
        return;
    }
    throw ValidationError("unknown session event '" + type + "'");
}

}  // namespace detail

inline EvalSession replay_session(const std::filesystem::path& log) {
    EvalSession s;
    bool created = false;
    detail::read_jsonl(log, [&](const Json& e) {
        if (!created && e.at("event") != "create") throw ValidationError("log does not start with a create event");
        created = true;
        detail::apply_event(s, e);
    });
    if (!created) throw ValidationError(log.string() + ": empty session log");
    return s;
}

// ---------------------------------------------------------------------------
// Results

struct EvaluationResults {
    std::size_t sessions = 0;
    std::size_t complete = 0;
    std::map<Subtask, std::map<std::string, std::size_t>> wins;  // question -> policy -> wins
};

inline EvaluationResults aggregate_results(const std::vector<EvalSession>& sessions) {
    EvaluationResults r;
    r.sessions = sessions.size();
    for (const auto& s : sessions) {
        if (s.state != SessionState::Complete) continue;
        ++r.complete;
        for (auto t : kSubtasks) {
            auto& tally = r.wins[t];
            for (auto slot : kSlots) tally.try_emplace(s.policy(slot), 0);
            ++tally[s.policy(s.questionnaire->answers.at(t))];
        }
    }
    return r;
}

inline Json to_json(const EvaluationResults& r) {
    Json questions = Json::object();
    for (const auto& [t, tally] : r.wins) {
        Json row = Json::object();
        for (const auto& [p, n] : tally) row[p] = n;
        questions[std::string(to_string(t))] = row;
    }
    return Json{{"sessions", r.sessions}, {"complete", r.complete}, {"wins", questions}};
}

// ---------------------------------------------------------------------------
// Service

struct ServiceConfig {
    std::filesystem::path data_dir;
    std::map<std::string, std::shared_ptr<const Agent>> policies;
    std::optional<std::array<std::string, 2>> default_pair;
    std::vector<Scenario> scenarios;
    std::chrono::minutes chat_time_limit{30};  // per slot; zero disables
    std::uint64_t seed = 0;
    Clock clock = [] { return std::chrono::system_clock::now(); };
    // Called with "message_persisted" and "reply_persisted"; throwing
    // simulates a crash at that point.
    std::function<void(std::string_view)> fault_hook;
};

inline constexpr const char* kSessionsDir = "sessions";

class SessionService {
public:
    explicit SessionService(ServiceConfig config) : config_(std::move(config)) {
        if (config_.data_dir.empty()) throw ValidationError("service data directory is required");
        for (const auto& [id, agent] : config_.policies)
            if (!agent) throw ValidationError("policy '" + id + "' has no agent");
        if (config_.default_pair) check_pair(*config_.default_pair);
        for (const auto& s : config_.scenarios) validate(s);
        std::filesystem::create_directories(sessions_dir());
        for (const auto& entry : std::filesystem::directory_iterator(sessions_dir())) {
            if (entry.path().extension() != ".jsonl") continue;
            auto s = replay_session(entry.path());
            auto id = s.id;
            sessions_.emplace(std::move(id), std::make_shared<Entry>(std::move(s)));
        }
        counter_ = sessions_.size();
    }

    const ServiceConfig& config() const { return config_; }
    std::filesystem::path sessions_dir() const { return config_.data_dir / kSessionsDir; }
    std::filesystem::path log_path(const std::string& id) const { return sessions_dir() / (id + ".jsonl"); }

    EvalSession create_session(const std::string& participant_id, const std::array<std::string, 2>& pair,
                               const Scenario& scenario, std::uint64_t seed) {
        if (text::trim(participant_id).empty()) throw ValidationError("participant id is empty");
        check_pair(pair);
        validate(scenario);
        std::array<std::string, 2> order = pair;
        if (Rng(derive_seed(seed, 0x6f72646572)).index(2) == 1) std::swap(order[0], order[1]);

        std::unique_lock lock(map_mutex_);
        std::string id;
        for (std::uint64_t attempt = 0;; ++attempt) {
            id = text::hex64(derive_seed(seed, text::fnv1a(participant_id), counter_ + attempt)).substr(0, 16);
            if (!sessions_.count(id)) break;
        }
        ++counter_;
        Json body{{"id", id},
                  {"participant_id", participant_id},
                  {"scenario", to_json(scenario)},
                  {"system_order", Json::array({order[0], order[1]})},
                  {"seed", seed}};
        auto entry = std::make_shared<Entry>(EvalSession{});
        record(entry->session, Json{{"event", "create"}, {"at", now()}, {"session", body}}, id);
        sessions_.emplace(id, entry);
        return entry->session;
    }

    // Picks the configured pair and a seeded scenario.
    EvalSession create_session(const std::string& participant_id, std::optional<std::uint64_t> seed = std::nullopt) {
        if (!config_.default_pair) throw ValidationError("no default policy pair configured");
        if (config_.scenarios.empty()) throw ValidationError("no scenarios configured");
        std::uint64_t s;
        {
            std::shared_lock lock(map_mutex_);
            s = seed.value_or(derive_seed(config_.seed, 0x73657373, counter_));
        }
        const auto& scenario = config_.scenarios[Rng(derive_seed(s, 0x7363656e)).index(config_.scenarios.size())];
        return create_session(participant_id, *config_.default_pair, scenario, s);
    }

    EvalSession get(const std::string& id) const {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        return entry->session;
    }

    std::vector<EvalSession> sessions() const {
        std::vector<std::shared_ptr<Entry>> entries;
        {
            std::shared_lock lock(map_mutex_);
            for (const auto& [id, e] : sessions_) entries.push_back(e);
        }
        std::vector<EvalSession> out;
        for (const auto& e : entries) {
            std::lock_guard lock(e->mutex);
            out.push_back(e->session);
        }
        return out;
    }

    // Persists the human turn, asks the slot's policy for a reply, persists
    // it and returns it. A policy failure leaves the human turn recorded.
    std::string post_message(const std::string& id, Slot slot, const std::string& message) {
        auto entry = find(id);
        std::unique_lock lock(entry->mutex, std::try_to_lock);
        if (!lock) throw SessionBusy("session " + id + " is handling another request");
        auto& s = entry->session;
        require_active(s, slot);
        const auto text = std::string(text::trim(message));
        if (text.empty()) throw ValidationError("message text is empty");
        const auto t = now();
        if (const auto started = s.slot_started_at[slot_index(slot)];
            started && config_.chat_time_limit.count() > 0 &&
            t - *started >= std::chrono::duration_cast<std::chrono::milliseconds>(config_.chat_time_limit).count())
            throw StateError("chat time limit of " + std::to_string(config_.chat_time_limit.count()) +
                             " minutes reached; finalize the design");

        record(s, Json{{"event", "message"}, {"at", t}, {"slot", std::string(to_string(slot))}, {"text", text}}, id);
        fault("message_persisted");

        const auto& agent = policy_agent(s.policy(slot));
        const auto& transcript = s.transcript(slot);
        const auto turn_seed = derive_seed(s.seed, slot_index(slot) + 1, transcript.size());
        auto reply = next_utterance(agent, s.scenario, transcript, kPolicyRole, turn_seed);
        record(s, Json{{"event", "reply"}, {"at", now()}, {"slot", std::string(to_string(slot))}, {"text", reply}}, id);
        fault("reply_persisted");
        return reply;
    }

    SessionState finalize_slot(const std::string& id, Slot slot, const std::string& design) {
        auto entry = find(id);
        std::unique_lock lock(entry->mutex, std::try_to_lock);
        if (!lock) throw SessionBusy("session " + id + " is handling another request");
        auto& s = entry->session;
        require_active(s, slot);
        const auto text = std::string(text::trim(design));
        if (text.empty()) throw ValidationError("final design is empty");
        record(s, Json{{"event", "finalize"}, {"at", now()}, {"slot", std::string(to_string(slot))}, {"design", text}},
               id);
        return s.state;
    }

    EvalSession submit_questionnaire(const std::string& id, const QuestionnaireResponse& response) {
        auto entry = find(id);
        std::unique_lock lock(entry->mutex, std::try_to_lock);
        if (!lock) throw SessionBusy("session " + id + " is handling another request");
        auto& s = entry->session;
        if (s.state != SessionState::AwaitingQuestionnaire)
            throw StateError("session " + id + " is " + std::string(to_string(s.state)) + ", not awaiting the questionnaire");
        for (auto t : kSubtasks)
            if (!response.answers.count(t)) throw ValidationError("missing answer for '" + std::string(to_string(t)) + "'");
        record(s,
               Json{{"event", "questionnaire"},
                    {"at", now()},
                    {"answers", to_json(response)},
                    {"mapping", Json{{"first", s.system_order[0]}, {"second", s.system_order[1]}}}},
               id);
        return s;
    }

    EvaluationResults results() const { return aggregate_results(sessions()); }

private:
    struct Entry {
        explicit Entry(EvalSession s) : session(std::move(s)) {}
        std::mutex mutex;
        EvalSession session;
    };

    std::int64_t now() const { return to_millis(config_.clock()); }

    void fault(std::string_view point) const {
        if (config_.fault_hook) config_.fault_hook(point);
    }

    void check_pair(const std::array<std::string, 2>& pair) const {
        if (pair[0] == pair[1]) throw ValidationError("policy pair must name two distinct policies");
        for (const auto& p : pair)
            if (!config_.policies.count(p)) throw ValidationError("unknown policy id '" + p + "'");
    }

    const Agent& policy_agent(const std::string& id) const {
        const auto it = config_.policies.find(id);
        if (it == config_.policies.end()) throw Error("session references unknown policy '" + id + "'");
        return *it->second;
    }

    static void require_active(const EvalSession& s, Slot slot) {
        const auto active = active_slot(s.state);
        if (!active || *active != slot)
            throw StateError("session " + s.id + " is " + std::string(to_string(s.state)) + "; slot " +
                             std::string(to_string(slot)) + " is not active");
    }

    std::shared_ptr<Entry> find(const std::string& id) const {
        std::shared_lock lock(map_mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
        return it->second;
    }

    // Appends the event to the session log, then applies it in memory.
    void record(EvalSession& s, const Json& event, const std::string& id) const {
        {
            std::ofstream out(log_path(id), std::ios::app | std::ios::binary);
            if (!out) throw Error("cannot write " + log_path(id).string());
            out << event.dump() << '\n';
            out.flush();
            if (!out) throw Error("cannot write " + log_path(id).string());
        }
        detail::apply_event(s, event);
    }

    ServiceConfig config_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t counter_ = 0;
};

}  // namespace agency
