#pragma once

// Self-play between dialogue policies: run conversations, score each side
// with a measurement backend and aggregate a tournament table.

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "agency/generation.hpp"
#include "agency/measurement.hpp"

namespace agency {

inline constexpr std::size_t kDefaultTurns = 6;
inline constexpr std::size_t kDefaultRunsPerPair = 50;

// metric name (subtask) -> score in [0, 2]
using RunScores = std::map<std::string, double>;

struct SimulationRun {
    std::string id;
    std::size_t pair_index = 0;
    std::size_t run_index = 0;
    std::string policy_a;  // speaks first, as designer A
    std::string policy_b;
    Scenario scenario;
    std::vector<Utterance> transcript;
    std::map<std::string, RunScores> scores;  // policy id -> metrics
    std::uint64_t seed = 0;
    std::optional<std::string> error;

    bool ok() const { return !error; }
};

inline Json to_json(const SimulationRun& r) {
    Json transcript = Json::array();
    for (const auto& u : r.transcript) transcript.push_back(to_json(u));
    Json scores = Json::object();
    for (const auto& [policy, metrics] : r.scores) {
        Json m = Json::object();
        for (auto t : kSubtasks) {
            auto it = metrics.find(std::string(to_string(t)));
            if (it != metrics.end()) m[std::string(to_string(t))] = it->second;
        }
        scores[policy] = m;
    }
    Json j;
    j["id"] = r.id;
    j["pair_index"] = r.pair_index;
    j["run_index"] = r.run_index;
    j["policy_a"] = r.policy_a;
    j["policy_b"] = r.policy_b;
    j["scenario"] = to_json(r.scenario);
    j["transcript"] = transcript;
    j["scores"] = scores;
    j["seed"] = r.seed;
    j["error"] = detail::optional_string(r.error);
    return j;
}

inline SimulationRun simulation_run_from_json(const Json& j) {
    SimulationRun r;
    r.id = j.at("id").get<std::string>();
    r.pair_index = j.at("pair_index").get<std::size_t>();
    r.run_index = j.at("run_index").get<std::size_t>();
    r.policy_a = j.at("policy_a").get<std::string>();
    r.policy_b = j.at("policy_b").get<std::string>();
    r.scenario = scenario_from_json(j.at("scenario"));
    for (const auto& u : j.at("transcript")) r.transcript.push_back(utterance_from_json(u));
    for (auto it = j.at("scores").begin(); it != j.at("scores").end(); ++it)
        for (auto m = it.value().begin(); m != it.value().end(); ++m) r.scores[it.key()][m.key()] = m.value().get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.error = detail::read_optional_string(j, "error");
    return r;
}

// The scenario as seen by the second speaker: the preferences swap.
inline Scenario counterpart_view(const Scenario& s) {
    return {s.room_description, s.design_element, s.counterpart_preference.value_or(""), s.ai_preference};
}

// Alternating turns starting with `a` (designer A). A policy error stops the
// run; the partial transcript and the error are kept.
inline SimulationRun run_conversation(const Agent& a, const Agent& b, const Scenario& scenario,
                                      std::size_t turns = kDefaultTurns, std::uint64_t seed = 0, std::string id = "run") {
    if (turns < 1) throw ValidationError("turns must be at least 1");
    validate(scenario);
    SimulationRun run;
    run.id = std::move(id);
    run.policy_a = a.policy().id;
    run.policy_b = b.policy().id;
    run.scenario = scenario;
    run.seed = seed;
    const Scenario view_b = counterpart_view(scenario);
    for (std::size_t t = 0; t < turns; ++t) {
        const bool a_turn = t % 2 == 0;
        const auto role = a_turn ? DesignerRole::DesignerA : DesignerRole::DesignerB;
        try {
            auto text = next_utterance(a_turn ? a : b, a_turn ? scenario : view_b, run.transcript, role,
                                       derive_seed(seed, t + 1));
            run.transcript.push_back({t, role, std::move(text)});
        } catch (const std::exception& e) {
            run.error = (a_turn ? run.policy_a : run.policy_b) + " failed at turn " + std::to_string(t + 1) + ": " + e.what();
            break;
        }
    }
    return run;
}

// Scores both sides of the transcript, treated as one snippet. n/a counts 0.
inline std::map<std::string, RunScores> evaluate_transcript(const SimulationRun& run, MeasurementBackend& backend) {
    if (run.transcript.empty()) throw ValidationError("run " + run.id + " has an empty transcript");
    Snippet s;
    s.id = run.id;
    s.conversation_id = run.id;
    s.component = {run.scenario.design_element, DesignerRole::DesignerA, std::nullopt};
    s.span = {0, run.transcript.size() - 1};
    s.utterances = run.transcript;
    std::map<std::string, RunScores> out;
    for (auto role : kRoles) {
        const auto& policy = role == DesignerRole::DesignerA ? run.policy_a : run.policy_b;
        for (auto t : kSubtasks)
            out[policy][std::string(to_string(t))] = score_value(classify(s, role, t, backend).label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tournaments

// One scenario per snippet: room, component and both initial preferences
// come from the snippet's own conversation.
inline std::vector<Scenario> scenario_pool(const Dataset& dataset) {
    std::vector<Scenario> pool;
    auto make = [](const Conversation& c, const std::string& element) {
        std::optional<std::string> other;
        if (!text::trim(c.initial_preferences[DesignerRole::DesignerB]).empty())
            other = c.initial_preferences[DesignerRole::DesignerB];
        return Scenario{c.room_description, element, c.initial_preferences[DesignerRole::DesignerA], other};
    };
    for (const auto& s : dataset.snippets) {
        const auto* c = dataset.find_conversation(s.conversation_id);
        if (c && !text::trim(c->room_description).empty() && !text::trim(s.component.text).empty())
            pool.push_back(make(*c, s.component.text));
    }
    if (pool.empty())
        for (const auto& c : dataset.conversations)
            for (auto role : kRoles)
                for (const auto& comp : c.final_designs[role])
                    if (!text::trim(c.room_description).empty() && !text::trim(comp.text).empty())
                        pool.push_back(make(c, comp.text));
    return pool;
}

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t n = 0;
};

struct PairSummary {
    std::string first;
    std::string second;
    std::size_t runs = 0;
    std::size_t failures = 0;
};

struct TournamentTable {
    std::vector<std::string> policies;                                  // input order
    std::map<std::string, std::map<std::string, MetricSummary>> metrics;  // policy -> metric -> summary
    std::vector<PairSummary> pairs;
};

struct TournamentOptions {
    std::size_t turns = kDefaultTurns;
    std::size_t runs_per_pair = kDefaultRunsPerPair;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct TournamentResult {
    std::vector<SimulationRun> runs;  // pair-major, then run index
    TournamentTable table;
};

inline MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

// Per-policy means and deviations over every successful run it took part in.
inline TournamentTable tabulate(const std::vector<std::string>& policies, const std::vector<SimulationRun>& runs) {
    TournamentTable table;
    table.policies = policies;
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    std::map<std::size_t, PairSummary> pairs;
    for (const auto& r : runs) {
        auto& pair = pairs[r.pair_index];
        if (pair.runs == 0) {
            pair.first = r.run_index % 2 == 0 ? r.policy_a : r.policy_b;
            pair.second = r.run_index % 2 == 0 ? r.policy_b : r.policy_a;
        }
        ++pair.runs;
        if (!r.ok()) {
            ++pair.failures;
            continue;
        }
        for (const auto& [policy, metrics] : r.scores)
            for (const auto& [metric, v] : metrics) values[policy][metric].push_back(v);
    }
    for (const auto& p : policies)
        for (auto t : kSubtasks) {
            const std::string metric(to_string(t));
            table.metrics[p][metric] = summarize(values[p][metric]);
        }
    for (auto& [_, p] : pairs) table.pairs.push_back(std::move(p));
    return table;
}

// Every unordered pair of policies plays `runs_per_pair` conversations. The
// first speaker alternates between the two policies by run index; each run's
// scenario and generation seeds derive from (seed, pair, run) only, so the
// result does not depend on `threads`.
inline TournamentResult run_tournament(const std::vector<const Agent*>& agents, const std::vector<Scenario>& scenarios,
                                       MeasurementBackend& backend, const TournamentOptions& options = {}) {
    if (agents.size() < 2) throw ValidationError("a tournament needs at least two policies");
    if (scenarios.empty()) throw ValidationError("scenario pool is empty");
    if (options.runs_per_pair < 1) throw ValidationError("runs per pair must be at least 1");
    std::vector<std::string> ids;
    for (const auto* a : agents) {
        if (std::find(ids.begin(), ids.end(), a->policy().id) != ids.end())
            throw ValidationError("duplicate policy id '" + a->policy().id + "'");
        ids.push_back(a->policy().id);
    }

    struct Job {
        std::size_t pair, run, first, second;
    };
    std::vector<Job> jobs;
    std::size_t pair = 0;
    for (std::size_t i = 0; i < agents.size(); ++i)
        for (std::size_t j = i + 1; j < agents.size(); ++j, ++pair)
            for (std::size_t r = 0; r < options.runs_per_pair; ++r)
                jobs.push_back({pair, r, r % 2 == 0 ? i : j, r % 2 == 0 ? j : i});

    TournamentResult result;
    result.runs.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    auto work = [&] {
        for (std::size_t n; (n = next.fetch_add(1)) < jobs.size();) {
            const auto& job = jobs[n];
            const auto seed = derive_seed(options.seed, job.pair + 1, job.run + 1);
            Rng rng(seed);
            const auto& scenario = scenarios[static_cast<std::size_t>(rng.index(scenarios.size()))];
            std::ostringstream id;
            id << "pair" << std::setw(2) << std::setfill('0') << job.pair << "-run" << std::setw(3) << job.run;
            auto run = run_conversation(*agents[job.first], *agents[job.second], scenario, options.turns, seed, id.str());
            run.pair_index = job.pair;
            run.run_index = job.run;
            if (run.ok()) {
                try {
                    run.scores = evaluate_transcript(run, backend);
                } catch (...) {
                    std::lock_guard lock(fatal_mutex);
                    if (!fatal) fatal = std::current_exception();
                    next = jobs.size();
                }
            }
            result.runs[n] = std::move(run);
        }
    };
    const auto threads = std::max<std::size_t>(1, std::min(options.threads, jobs.size()));
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(std::function<void()>(work));
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);
    result.table = tabulate(ids, result.runs);
    return result;
}

inline Json to_json(const TournamentTable& t) {
    Json policies = Json::array();
    for (const auto& p : t.policies) {
        Json metrics = Json::object();
        for (auto s : kSubtasks) {
            const auto& m = t.metrics.at(p).at(std::string(to_string(s)));
            metrics[std::string(to_string(s))] = {{"mean", m.mean}, {"std", m.stddev}, {"n", m.n}};
        }
        policies.push_back({{"id", p}, {"metrics", metrics}});
    }
    Json pairs = Json::array();
    for (const auto& p : t.pairs)
        pairs.push_back({{"policies", {p.first, p.second}}, {"runs", p.runs}, {"failures", p.failures}});
    return {{"policies", policies}, {"pairs", pairs}};
}

inline std::string format_summary(const TournamentTable& t) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "policy";
    for (auto s : kSubtasks) out << std::setw(18) << to_string(s);
    out << "runs\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& p : t.policies) {
        out << std::setw(24) << p;
        std::size_t n = 0;
        for (auto s : kSubtasks) {
            const auto& m = t.metrics.at(p).at(std::string(to_string(s)));
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << m.mean << " +/- " << m.stddev;
            out << std::setw(18) << cell.str();
            n = m.n;
        }
        out << n << '\n';
    }
    out << '\n';
    for (const auto& p : t.pairs)
        out << p.first << " vs " << p.second << ": " << p.runs << " runs, " << p.failures << " failed\n";
    return out.str();
}

inline constexpr const char* kRunsFile = "runs.jsonl";
inline constexpr const char* kTournamentFile = "tournament.json";
inline constexpr const char* kSummaryFile = "summary.txt";

inline void write_tournament(const TournamentResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_jsonl(dir / kRunsFile, result.runs);
    std::ofstream(dir / kTournamentFile, std::ios::binary | std::ios::trunc) << to_json(result.table).dump(2) << '\n';
    std::ofstream(dir / kSummaryFile, std::ios::binary | std::ios::trunc) << format_summary(result.table);
}

inline std::vector<SimulationRun> load_runs(const std::filesystem::path& path) {
    std::vector<SimulationRun> runs;
    detail::read_jsonl(path, [&](const Json& j) { runs.push_back(simulation_run_from_json(j)); });
    return runs;
}

}  // namespace agency
