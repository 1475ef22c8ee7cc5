// agency: command-line entry point.
//
//   agency [--config FILE] <command> [options]
//
// FILE is an INI document; keys in a [command] section set that command's
// options, and flags given on the command line win. Every command writes
// manifest.json into its output directory (serve writes it into --data).

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "agency/analysis.hpp"
#include "agency/fixtures.hpp"
#include "agency/http_api.hpp"
#include "agency/measurement.hpp"
#include "agency/run_config.hpp"
#include "agency/segmentation.hpp"
#include "agency/service.hpp"
#include "agency/simulation.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <CLI11.hpp>
#include <httplib.h>

using namespace agency;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// Effective option values of a subcommand, defaults included.
Json effective_arguments(const CLI::App& sub) {
    Json j = Json::object();
    for (const auto* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames().front();
        if (name == "help") continue;
        if (opt->count() > 0) {
            const auto r = opt->results();
            j[name] = r.size() == 1 ? Json(r.front()) : Json(r);
        } else if (!opt->get_default_str().empty()) {
            j[name] = opt->get_default_str();
        } else {
            j[name] = nullptr;
        }
    }
    return j;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& part : text::split(s, ','))
        if (auto t = text::trim(part); !t.empty()) out.emplace_back(t);
    return out;
}

Json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot open " + p.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << body;
}

std::vector<Scenario> load_scenarios(const fs::path& p) {
    std::vector<Scenario> out;
    detail::read_jsonl(p, [&](const Json& j) { out.push_back(scenario_from_json(j)); });
    return out;
}

HeuristicCues cues_or_defaults(const std::string& path) {
    return path.empty() ? HeuristicCues::defaults() : load_cues(path);
}

std::vector<Subtask> parse_subtasks(const std::string& s) {
    if (text::lower(s) == "all") return {kSubtasks.begin(), kSubtasks.end()};
    std::vector<Subtask> out;
    for (const auto& name : split_list(s)) out.push_back(parse_subtask(name));
    if (out.empty()) throw ValidationError("no subtasks selected");
    return out;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string in, mapping, out;
};

void run_ingest(const IngestArgs& a, const CLI::App& sub) {
    FieldMapping mapping;
    std::vector<fs::path> inputs{a.in};
    if (!a.mapping.empty()) {
        mapping = field_mapping_from_json(read_json_file(a.mapping));
        inputs.push_back(a.mapping);
    }
    const auto d = load_dataset(a.in, mapping);
    save_dataset(d, a.out);
    write_manifest(a.out, "ingest", effective_arguments(sub), inputs);
    std::cout << d.conversations.size() << " conversations, " << d.snippets.size() << " snippets, "
              << d.annotations.size() << " annotations\n";
}

struct FixturesArgs {
    std::string out, kind = "synthetic", marginals = "published";
    std::uint64_t seed = 0;
};

void run_fixtures(const FixturesArgs& a, const CLI::App& sub) {
    std::vector<fs::path> inputs;
    fs::create_directories(a.out);
    if (a.kind == "synthetic") {
        auto m = LabelMarginals::published();
        if (a.marginals != "published") {
            m = marginals_from_json(read_json_file(a.marginals));
            inputs.push_back(a.marginals);
        }
        save_dataset(generate_synthetic_dataset(a.seed, m), a.out);
    } else if (a.kind == "canonical") {
        const auto f = canonical_fixture();
        save_dataset(f.dataset, a.out);
        std::ofstream out(fs::path(a.out) / "cases.jsonl", std::ios::binary | std::ios::trunc);
        for (const auto& c : f.cases)
            out << Json{{"snippet_id", c.snippet_id},
                        {"designer", to_string(c.designer)},
                        {"subtask", to_string(c.subtask)},
                        {"expected", to_string(c.expected)},
                        {"sentence", c.sentence}}
                       .dump()
                << '\n';
    } else if (a.kind == "policies") {
        Json providers = Json::array(), policies = Json::array();
        for (const auto& p : reference_scripted_policies()) {
            providers.push_back({{"id", p.id}, {"type", "scripted"}, {"response", p.line}});
            policies.push_back({{"id", p.id}, {"variant", "instruction_only"}, {"provider", p.id}});
        }
        write_text(fs::path(a.out) / "policies.json",
                   Json{{"providers", providers}, {"policies", policies}}.dump(2) + "\n");
    } else {
        throw ValidationError("unknown fixture kind '" + a.kind + "'");
    }
    write_manifest(a.out, "fixtures", effective_arguments(sub), inputs);
}

struct SegmentArgs {
    std::string in, out, embedder = "lexical", providers;
    std::optional<std::size_t> k;
    std::size_t dimension = LexicalEmbeddingProvider::kDefaultDimension;
    std::uint64_t seed = 0;
};

void run_segment(const SegmentArgs& a, const CLI::App& sub) {
    std::vector<fs::path> inputs{a.in};
    std::unique_ptr<EmbeddingProvider> embedder;
    if (a.embedder == "lexical") {
        embedder = std::make_unique<LexicalEmbeddingProvider>(a.dimension);
    } else {
        if (a.providers.empty()) throw ValidationError("--embedder " + a.embedder + " needs --providers");
        embedder = make_embedding_provider(load_run_config(a.providers), a.embedder);
        inputs.push_back(a.providers);
    }
    SegmentationOptions options;
    options.k = a.k;
    options.seed = a.seed;
    const auto d = segment_dataset(load_dataset(a.in), *embedder, options);
    save_dataset(d, a.out);
    write_manifest(a.out, "segment", effective_arguments(sub), inputs);
    std::cout << d.snippets.size() << " snippets from " << d.conversations.size() << " conversations\n";
}

struct MeasureArgs {
    std::string in, out, backend = "heuristic", subtasks = "all", provider, providers, reasoning, cues;
    std::optional<std::size_t> split_index;
    std::size_t k = 10, threads = 1;
    std::uint64_t seed = 0;
};

void run_measure(const MeasureArgs& a, const CLI::App& sub) {
    std::vector<fs::path> inputs{a.in};
    const auto d = load_dataset(a.in);
    const auto subtasks = parse_subtasks(a.subtasks);
    if (!a.cues.empty()) inputs.push_back(a.cues);

    std::optional<TrainTestSplit> split;
    std::unique_ptr<MeasurementBackend> backend;
    if (a.backend == "heuristic") {
        if (a.split_index) split = split_snippets(d, *a.split_index, a.seed);
        backend = std::make_unique<HeuristicBackend>(cues_or_defaults(a.cues));
    } else if (a.backend == "qa" || a.backend == "cot") {
        if (a.provider.empty() || a.providers.empty())
            throw ValidationError("--backend " + a.backend + " needs --provider and --providers");
        inputs.push_back(a.providers);
        const auto providers = make_providers(load_run_config(a.providers));
        split = split_snippets(d, a.split_index.value_or(0), a.seed);
        std::optional<ReasoningTable> reasoning;
        if (!a.reasoning.empty()) {
            reasoning = load_reasoning(a.reasoning);
            inputs.push_back(a.reasoning);
        }
        const auto pool = demonstration_pool(d, split->train);
        const auto demos = sample_demonstration_sets(pool, a.k, a.seed, reasoning ? &*reasoning : nullptr);
        auto it = providers.find(a.provider);
        if (it == providers.end()) throw ValidationError("unknown provider id '" + a.provider + "'");
        backend = std::make_unique<PromptBackend>(
            a.backend == "qa" ? PromptStyle::QuestionAnswer : PromptStyle::ChainOfThought, it->second, demos);
    } else {
        throw ValidationError("unknown backend '" + a.backend + "'");
    }

    std::vector<Snippet> targets;
    std::set<std::string> target_ids;
    if (split) {
        target_ids.insert(split->test.begin(), split->test.end());
        for (const auto& s : d.snippets)
            if (target_ids.count(s.id)) targets.push_back(s);
    } else {
        targets = d.snippets;
        for (const auto& s : d.snippets) target_ids.insert(s.id);
    }

    const auto results = classify_all(targets, subtasks, *backend, a.threads);
    fs::create_directories(a.out);
    detail::write_jsonl(fs::path(a.out) / "results.jsonl", results);

    Json metrics = Json::object();
    metrics["backend"] = backend->id();
    metrics["snippets"] = targets.size();
    Json per = Json::object();
    if (!d.annotations.empty()) {
        for (auto t : subtasks) {
            const auto m = evaluate_classifier(t, prediction_map(results, t), gold_map(d.annotations, t, &target_ids));
            per[std::string(to_string(t))] = to_json(m);
        }
    }
    metrics["subtasks"] = per;
    write_text(fs::path(a.out) / "metrics.json", metrics.dump(2) + "\n");
    write_manifest(a.out, "measure", effective_arguments(sub), inputs);
    for (auto it = per.begin(); it != per.end(); ++it)
        std::cout << it.key() << ": accuracy " << (*it)["accuracy"].get<double>() << ", macro F1 "
                  << (*it)["macro_f1"].get<double>() << "\n";
}

struct AgentSet {
    ProviderRegistry providers;
    std::vector<std::shared_ptr<const Agent>> agents;
};

AgentSet build_agents(const RunConfig& cfg, const Dataset* corpus, const HeuristicCues& cues) {
    AgentSet s;
    s.providers = make_providers(cfg);
    for (const auto& p : cfg.policies)
        s.agents.push_back(std::make_shared<const Agent>(make_agent(p, s.providers, corpus, cues)));
    return s;
}

std::vector<Scenario> scenario_source(const std::string& scenarios, const std::optional<Dataset>& corpus,
                                      std::vector<fs::path>& inputs) {
    if (!scenarios.empty()) {
        inputs.push_back(scenarios);
        return load_scenarios(scenarios);
    }
    if (corpus) return scenario_pool(*corpus);
    throw ValidationError("a scenario source is required: --scenarios or --corpus");
}

struct SimulateArgs {
    std::string policies, scenarios, corpus, out, scorer = "heuristic", scorer_provider, cues;
    std::size_t turns = kDefaultTurns, runs_per_pair = kDefaultRunsPerPair, threads = 1, k = 10;
    std::uint64_t seed = 0;
};

void run_simulate(const SimulateArgs& a, const CLI::App& sub) {
    std::vector<fs::path> inputs{a.policies};
    const auto cfg = load_run_config(a.policies);
    std::optional<Dataset> corpus;
    if (!a.corpus.empty()) {
        corpus = load_dataset(a.corpus);
        inputs.push_back(a.corpus);
    }
    if (!a.cues.empty()) inputs.push_back(a.cues);
    const auto cues = cues_or_defaults(a.cues);
    const auto scenarios = scenario_source(a.scenarios, corpus, inputs);
    const auto set = build_agents(cfg, corpus ? &*corpus : nullptr, cues);

    std::unique_ptr<MeasurementBackend> scorer;
    if (a.scorer == "heuristic") {
        scorer = std::make_unique<HeuristicBackend>(cues);
    } else if (a.scorer == "qa" || a.scorer == "cot") {
        if (a.scorer_provider.empty()) throw ValidationError("--scorer " + a.scorer + " needs --scorer-provider");
        if (!corpus) throw ValidationError("--scorer " + a.scorer + " draws demonstrations from --corpus");
        std::vector<std::string> ids;
        for (const auto& s : corpus->snippets) ids.push_back(s.id);
        const auto pool = demonstration_pool(*corpus, ids);
        auto it = set.providers.find(a.scorer_provider);
        if (it == set.providers.end()) throw ValidationError("unknown provider id '" + a.scorer_provider + "'");
        scorer = std::make_unique<PromptBackend>(a.scorer == "qa" ? PromptStyle::QuestionAnswer
                                                                  : PromptStyle::ChainOfThought,
                                                 it->second, sample_demonstration_sets(pool, a.k, a.seed));
    } else {
        throw ValidationError("unknown scorer '" + a.scorer + "'");
    }

    std::vector<const Agent*> agents;
    for (const auto& ag : set.agents) agents.push_back(ag.get());
    TournamentOptions options;
    options.turns = a.turns;
    options.runs_per_pair = a.runs_per_pair;
    options.seed = a.seed;
    options.threads = a.threads;
    const auto result = run_tournament(agents, scenarios, *scorer, options);
    write_tournament(result, a.out);
    write_manifest(a.out, "simulate", effective_arguments(sub), inputs);
    std::cout << format_summary(result.table);
}

struct AnalyzeArgs {
    std::string in, out, reports = "all";
};

void run_analyze(const AnalyzeArgs& a, const CLI::App& sub) {
    std::set<std::string> reports;
    if (text::lower(a.reports) != "all")
        for (const auto& r : split_list(a.reports)) reports.insert(r);
    const auto report = analysis_report(load_dataset(a.in), reports);
    fs::create_directories(a.out);
    for (auto it = report.begin(); it != report.end(); ++it)
        write_text(fs::path(a.out) / (it.key() + ".json"), it->dump(2) + "\n");
    const auto summary = format_analysis_summary(report);
    write_text(fs::path(a.out) / "summary.txt", summary);
    write_manifest(a.out, "analyze", effective_arguments(sub), {a.in});
    std::cout << summary;
}

struct ServeArgs {
    std::string policies, scenarios, corpus, data, host = "127.0.0.1", pair, cues;
    int port = 8080;
    unsigned time_limit = 30;
    std::uint64_t seed = 0;
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

void run_serve(const ServeArgs& a, const CLI::App& sub) {
    std::vector<fs::path> inputs{a.policies};
    const auto cfg = load_run_config(a.policies);
    std::optional<Dataset> corpus;
    if (!a.corpus.empty()) {
        corpus = load_dataset(a.corpus);
        inputs.push_back(a.corpus);
    }
    if (!a.cues.empty()) inputs.push_back(a.cues);
    const auto set = build_agents(cfg, corpus ? &*corpus : nullptr, cues_or_defaults(a.cues));

    ServiceConfig sc;
    sc.data_dir = a.data;
    for (const auto& ag : set.agents) sc.policies[ag->policy().id] = ag;
    sc.scenarios = scenario_source(a.scenarios, corpus, inputs);
    sc.chat_time_limit = std::chrono::minutes(a.time_limit);
    sc.seed = a.seed;
    if (!a.pair.empty()) {
        const auto ids = split_list(a.pair);
        if (ids.size() != 2) throw ValidationError("--pair takes two policy ids separated by a comma");
        sc.default_pair = std::array<std::string, 2>{ids[0], ids[1]};
    } else if (set.agents.size() == 2) {
        sc.default_pair = std::array<std::string, 2>{set.agents[0]->policy().id, set.agents[1]->policy().id};
    }
    SessionService service(std::move(sc));
    write_manifest(a.data, "serve", effective_arguments(sub), inputs);

    httplib::Server server;
    register_routes(server, service);
    if (!server.bind_to_port(a.host, a.port)) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cout << "listening on http://" << a.host << ":" << a.port << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agency measurement, self-play and human evaluation toolkit", "agency"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "INI file; [command] sections set command options");
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);

    const auto threads_default = std::max(1u, std::thread::hardware_concurrency());

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dataset and rewrite it in the canonical schema");
    ingest_cmd->add_option("--in", ingest.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ingest_cmd->add_option("--mapping", ingest.mapping, "Field-rename mapping JSON")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();

    FixturesArgs fixtures;
    auto* fixtures_cmd = app.add_subcommand("fixtures", "Write a synthetic corpus or a built-in fixture");
    fixtures_cmd->add_option("--out", fixtures.out, "Output directory")->required();
    fixtures_cmd->add_option("--seed", fixtures.seed, "Random seed")->capture_default_str();
    fixtures_cmd->add_option("--kind", fixtures.kind, "synthetic | canonical | policies")
        ->check(CLI::IsMember({"synthetic", "canonical", "policies"}))
        ->capture_default_str();
    fixtures_cmd->add_option("--marginals", fixtures.marginals, "'published' or a marginals JSON file")
        ->capture_default_str();

    SegmentArgs segment;
    auto* segment_cmd = app.add_subcommand("segment", "Extract one snippet per final-design component");
    segment_cmd->add_option("--in", segment.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    segment_cmd->add_option("--out", segment.out, "Output directory")->required();
    segment_cmd->add_option("--k", segment.k, "Topic count (default: components, clamped to [2, 8])");
    segment_cmd->add_option("--seed", segment.seed, "Random seed")->capture_default_str();
    segment_cmd->add_option("--embedder", segment.embedder, "'lexical' or a remote provider id")->capture_default_str();
    segment_cmd->add_option("--providers", segment.providers, "Provider config JSON")->check(CLI::ExistingFile);
    segment_cmd->add_option("--dimension", segment.dimension, "Lexical embedding dimension")->capture_default_str();

    MeasureArgs measure;
    measure.threads = threads_default;
    auto* measure_cmd = app.add_subcommand("measure", "Label snippets with a measurement backend");
    measure_cmd->add_option("--in", measure.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    measure_cmd->add_option("--out", measure.out, "Output directory")->required();
    measure_cmd->add_option("--backend", measure.backend, "heuristic | qa | cot")
        ->check(CLI::IsMember({"heuristic", "qa", "cot"}))
        ->capture_default_str();
    measure_cmd->add_option("--subtask", measure.subtasks, "'all' or a comma-separated list")->capture_default_str();
    measure_cmd->add_option("--split-index", measure.split_index, "Evaluate on the test half of split 0-3")
        ->check(CLI::Range(std::size_t{0}, kSplitCount - 1));
    measure_cmd->add_option("--seed", measure.seed, "Random seed")->capture_default_str();
    measure_cmd->add_option("--k", measure.k, "Demonstrations per subtask")->capture_default_str();
    measure_cmd->add_option("--provider", measure.provider, "Completion provider id for qa/cot");
    measure_cmd->add_option("--providers", measure.providers, "Provider config JSON")->check(CLI::ExistingFile);
    measure_cmd->add_option("--reasoning", measure.reasoning, "Reasoning strings for cot demonstrations")
        ->check(CLI::ExistingFile);
    measure_cmd->add_option("--cues", measure.cues, "Heuristic cue lexicon JSON")->check(CLI::ExistingFile);
    measure_cmd->add_option("--threads", measure.threads, "Worker threads")->capture_default_str();

    SimulateArgs simulate;
    simulate.threads = threads_default;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run a self-play tournament between policies");
    simulate_cmd->add_option("--policies", simulate.policies, "Provider and policy config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    simulate_cmd->add_option("--scenarios", simulate.scenarios, "Scenario JSONL")->check(CLI::ExistingFile);
    simulate_cmd->add_option("--corpus", simulate.corpus, "Dataset for scenarios and demonstrations")
        ->check(CLI::ExistingDirectory);
    simulate_cmd->add_option("--out", simulate.out, "Output directory")->required();
    simulate_cmd->add_option("--turns", simulate.turns, "Utterances per conversation")->capture_default_str();
    simulate_cmd->add_option("--runs-per-pair", simulate.runs_per_pair, "Conversations per policy pair")
        ->capture_default_str();
    simulate_cmd->add_option("--seed", simulate.seed, "Random seed")->capture_default_str();
    simulate_cmd->add_option("--threads", simulate.threads, "Worker threads")->capture_default_str();
    simulate_cmd->add_option("--scorer", simulate.scorer, "heuristic | qa | cot")
        ->check(CLI::IsMember({"heuristic", "qa", "cot"}))
        ->capture_default_str();
    simulate_cmd->add_option("--scorer-provider", simulate.scorer_provider, "Provider id for qa/cot scoring");
    simulate_cmd->add_option("--k", simulate.k, "Scorer demonstrations per subtask")->capture_default_str();
    simulate_cmd->add_option("--cues", simulate.cues, "Heuristic cue lexicon JSON")->check(CLI::ExistingFile);

    AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "Corpus statistics");
    analyze_cmd->add_option("--in", analyze.in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    analyze_cmd->add_option("--out", analyze.out, "Output directory")->required();
    analyze_cmd->add_option("--reports", analyze.reports,
                            "'all' or a comma-separated subset of distribution, agreement, crosstabs, regression, "
                            "satisfaction, turns")
        ->capture_default_str();

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the human evaluation API");
    serve_cmd->add_option("--policies", serve.policies, "Provider and policy config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    serve_cmd->add_option("--scenarios", serve.scenarios, "Scenario JSONL")->check(CLI::ExistingFile);
    serve_cmd->add_option("--corpus", serve.corpus, "Dataset for scenarios and demonstrations")
        ->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--data", serve.data, "Session log directory")->required();
    serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", serve.port, "Port")->capture_default_str()->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--pair", serve.pair, "Default policy pair, 'a,b'");
    serve_cmd->add_option("--time-limit", serve.time_limit, "Minutes of chat per system, 0 for none")
        ->capture_default_str();
    serve_cmd->add_option("--seed", serve.seed, "Random seed")->capture_default_str();
    serve_cmd->add_option("--cues", serve.cues, "Heuristic cue lexicon JSON")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest_cmd) run_ingest(ingest, *ingest_cmd);
        else if (*fixtures_cmd) run_fixtures(fixtures, *fixtures_cmd);
        else if (*segment_cmd) run_segment(segment, *segment_cmd);
        else if (*measure_cmd) run_measure(measure, *measure_cmd);
        else if (*simulate_cmd) run_simulate(simulate, *simulate_cmd);
        else if (*analyze_cmd) run_analyze(analyze, *analyze_cmd);
        else if (*serve_cmd) run_serve(serve, *serve_cmd);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
