// Acceptance run: one PASS / FAIL / SKIP line per criterion, with its
// measured result and runtime against the budget. Exits nonzero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "agency/analysis.hpp"
#include "agency/fixtures.hpp"
#include "agency/measurement.hpp"
#include "agency/segmentation.hpp"
#include "agency/simulation.hpp"
#include "../planted_topics.hpp"

using namespace agency;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    enum { Pass, Fail, Skip } status = Fail;
    std::string detail;
};

Verdict pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

int failures = 0;

std::size_t fidx(AgencyFeature f) { return static_cast<std::size_t>(f); }

void criterion(const std::string& name, double budget_seconds, const std::function<Verdict()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (v.status == Verdict::Pass && elapsed >= budget_seconds) v.status = Verdict::Fail;
    const char* tag = v.status == Verdict::Pass ? "PASS" : v.status == Verdict::Skip ? "SKIP" : "FAIL";
    if (v.status == Verdict::Fail) ++failures;
    std::ostringstream time;
    time << std::fixed << std::setprecision(3) << elapsed << " s (budget " << std::defaultfloat << budget_seconds << " s)";
    std::cout << tag << "  " << name << ": " << v.detail << "; " << time.str() << std::endl;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixed(double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

// ---------------------------------------------------------------------------

Verdict canonical_fixture_check() {
    const auto f = canonical_fixture();
    std::size_t exact = 0;
    std::string misses;
    for (const auto& c : f.cases) {
        const auto* s = f.dataset.find_snippet(c.snippet_id);
        if (s && heuristic_score(*s, c.designer, c.subtask) == Label(c.expected))
            ++exact;
        else
            misses += " [" + c.sentence + "]";
    }
    return pass_if(exact == f.cases.size() && !f.cases.empty(),
                   std::to_string(exact) + "/" + std::to_string(f.cases.size()) + " definitional sentences exact" +
                       misses);
}

Verdict segmentation_check() {
    LexicalEmbeddingProvider p;
    std::size_t exact = 0, anchored = 0, total = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto c = planted::make_case(2024, i);
        const auto clustering = cluster_design_topics(c.conversation, 2, derive_seed(2024, i), p);
        for (std::size_t b = 0; b < 2; ++b) {
            const auto s = extract_snippet(c.components[b], c.conversation, clustering, p);
            exact += s.span == c.spans[b];
            anchored += s.span.contains(match_anchor_utterance(c.components[b], c.conversation, p));
            ++total;
        }
    }
    const double rate = 100.0 * static_cast<double>(exact) / static_cast<double>(total);
    return pass_if(rate >= 95.0 && anchored == total,
                   "100 conversations, " + std::to_string(total) + " components: exact span " + fixed(rate, 1) +
                       "% (>= 95%), anchor included " + std::to_string(anchored) + "/" + std::to_string(total));
}

double brute_force_agreement(const std::vector<AgencyAnnotation>& anns, Subtask t) {
    std::size_t agree = 0, pairs = 0;
    for (std::size_t i = 0; i < anns.size(); ++i)
        for (std::size_t j = i + 1; j < anns.size(); ++j) {
            if (anns[i].snippet_id != anns[j].snippet_id || anns[i].designer != anns[j].designer) continue;
            ++pairs;
            agree += anns[i].label(t) == anns[j].label(t);
        }
    return 100.0 * static_cast<double>(agree) / static_cast<double>(pairs);
}

Verdict agreement_check() {
    Rng rng(77);
    double worst = 0.0;
    std::size_t sets = 0;
    while (sets < 1000) {
        std::vector<AgencyAnnotation> anns;
        const auto items = 1 + rng.index(12);
        for (std::size_t s = 0; s < items; ++s) {
            const auto role = rng.index(2) ? DesignerRole::DesignerB : DesignerRole::DesignerA;
            const auto raters = 1 + rng.index(4);
            for (std::size_t r = 0; r < raters; ++r)
                anns.push_back({"s" + std::to_string(s), role, "r" + std::to_string(r), kAgencyLevels[rng.index(3)],
                                kFeatureLevels[1 + rng.index(3)], kFeatureLevels[1 + rng.index(3)],
                                kFeatureLevels[rng.index(4)], kFeatureLevels[rng.index(4)]});
        }
        bool has_pair = false;
        for (std::size_t i = 0; i < anns.size() && !has_pair; ++i)
            for (std::size_t j = i + 1; j < anns.size() && !has_pair; ++j)
                has_pair = anns[i].snippet_id == anns[j].snippet_id && anns[i].designer == anns[j].designer;
        if (!has_pair) continue;
        const auto report = pairwise_agreement(anns);
        double mean = 0.0;
        for (auto t : kSubtasks) {
            const double oracle = brute_force_agreement(anns, t);
            worst = std::max(worst, std::abs(report.per_subtask.at(t) - oracle));
            if (t != Subtask::Agency) mean += oracle / 4.0;
        }
        worst = std::max(worst, std::abs(report.overall - mean));
        ++sets;
    }
    std::ostringstream d;
    d << sets << " random sets, max deviation from pair enumeration " << std::scientific << std::setprecision(1)
      << worst << " (<= 1e-9)";
    return pass_if(worst <= 1e-9, d.str());
}

Verdict distribution_check() {
    const auto m = LabelMarginals::published();
    const auto d = generate_synthetic_dataset(5, m);
    const auto dist = label_distribution(d.annotations);
    const auto i = dist.features[fidx(AgencyFeature::Intentionality)];
    const bool int_ok = i[1] == 194 && i[2] == 175 && i[3] == 539;
    const bool agency_ok = dist.agency == std::array<std::size_t, 3>{308, 292, 308};
    bool all_ok = true;
    for (auto f : kFeatures) all_ok &= dist.features[fidx(f)] == *m.feature(f);
    return pass_if(int_ok && agency_ok && all_ok,
                   "intentionality (" + std::to_string(i[1]) + "," + std::to_string(i[2]) + "," + std::to_string(i[3]) +
                       "), agency (" + std::to_string(dist.agency[0]) + "," + std::to_string(dist.agency[1]) + "," +
                       std::to_string(dist.agency[2]) + ")" + (all_ok ? ", all other marginals exact" : ", marginal mismatch"));
}

Verdict regression_check() {
    const std::array<double, 4> beta{0.4, 0.0, -0.3, 0.0};
    Rng rng(31);
    std::vector<RegressionRow> rows;
    for (std::size_t n = 0; n < 500; ++n) {
        RegressionRow r;
        r.group = "c" + std::to_string(n % 60);
        double y = 0.5;
        for (std::size_t k = 0; k < 4; ++k) {
            r.features[k] = static_cast<double>(rng.index(3));
            y += beta[k] * r.features[k];
        }
        r.agency = y + 0.05 * rng.normal();
        rows.push_back(r);
    }
    bool ok = true;
    std::string detail;
    for (auto kind : {ModelKind::OLS, ModelKind::RandomIntercept}) {
        const auto fit = fit_agency_regression(std::span<const RegressionRow>(rows), kind);
        double worst = 0.0;
        std::string flagged;
        for (auto f : kFeatures) {
            const auto k = fidx(f);
            worst = std::max(worst, std::abs(fit.coefficients.at(f) - beta[k]));
            const bool planted = beta[k] != 0.0;
            ok &= fit.significant(f) == planted;
            if (fit.significant(f)) flagged += (flagged.empty() ? "" : ",") + std::string(to_string(f));
        }
        ok &= worst <= 0.05;
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(kind)) + ": max |error| " +
                  fixed(worst, 4) + ", p<0.05 {" + flagged + "}";
    }
    return pass_if(ok, "n=500, sigma=0.05, planted {intentionality,self_efficacy}; " + detail);
}

Verdict prompt_check() {
    const std::string dir = AGENCY_TEST_DATA_DIR;
    auto strip = [](std::string s) {
        if (!s.empty() && s.back() == '\n') s.pop_back();
        return s;
    };
    Demonstration demo;
    demo.snippet = legs_example_snippet();
    demo.designer = DesignerRole::DesignerA;
    demo.gold.snippet_id = demo.snippet.id;
    demo.gold.agency = AgencyLevel::Low;
    const std::vector<Demonstration> qa_demos{demo};
    const auto qa = build_qa_prompt(demo.snippet, DesignerRole::DesignerA, Subtask::Agency, qa_demos);
    demo.reasoning = "Brass tapered metal legs were agreed upon.";
    const std::vector<Demonstration> cot_demos{demo};
    const auto cot = build_cot_prompt(demo.snippet, DesignerRole::DesignerA, Subtask::Agency, cot_demos);
    const auto qa_golden = strip(slurp(dir + "/qa_block.txt"));
    const auto cot_golden = strip(slurp(dir + "/cot_block.txt"));
    const bool qa_ok = qa.demonstrations.size() == 1 && qa.demonstrations[0] == qa_golden &&
                       qa_golden.find("Who influenced the design element being discussed?:") != std::string::npos;
    const bool cot_ok = cot.demonstrations.size() == 1 && cot.demonstrations[0] == cot_golden &&
                        cot_golden.find("TL;dr") != std::string::npos;
    return pass_if(qa_ok && cot_ok, std::string("Q/A block ") + (qa_ok ? "byte-exact" : "differs") + ", CoT block " +
                                        (cot_ok ? "byte-exact" : "differs"));
}

Verdict tournament_check() {
    ProviderRegistry providers;
    std::vector<Agent> agents;
    for (const auto& spec : reference_scripted_policies()) {
        providers[spec.id] = std::make_shared<ScriptedProvider>(spec.id, std::vector<ScriptRule>{}, spec.line);
        AgentPolicy p;
        p.id = spec.id;
        p.provider_id = spec.id;
        agents.push_back(make_agent(p, providers));
    }
    std::vector<const Agent*> roster;
    for (const auto& a : agents) roster.push_back(&a);
    const auto scenarios = scenario_pool(generate_synthetic_dataset(3, LabelMarginals::published()));

    const auto root = fs::temp_directory_path() / "agency_acceptance_tournament";
    fs::remove_all(root);
    auto play = [&](std::size_t threads, const std::string& name) {
        HeuristicBackend scorer;
        TournamentOptions o;
        o.turns = 6;
        o.runs_per_pair = 50;
        o.seed = 42;
        o.threads = threads;
        auto result = run_tournament(roster, scenarios, scorer, o);
        write_tournament(result, root / name);
        return result;
    };
    const auto serial = play(1, "serial");
    play(1, "serial_again");
    play(8, "parallel");
    const auto runs = slurp(root / "serial" / kRunsFile);
    const bool repeat_ok = runs == slurp(root / "serial_again" / kRunsFile);
    const bool parallel_ok = runs == slurp(root / "parallel" / kRunsFile) &&
                             slurp(root / "serial" / kTournamentFile) == slurp(root / "parallel" / kTournamentFile);
    const double high = serial.table.metrics.at("high_agency").at("intentionality").mean;
    const double agree = serial.table.metrics.at("always_agree").at("intentionality").mean;
    const bool means_ok = high == 2.0 && agree == 0.0;
    fs::remove_all(root);
    return pass_if(repeat_ok && parallel_ok && means_ok && serial.runs.size() == 300,
                   std::to_string(serial.runs.size()) + " runs; repeat " + (repeat_ok ? "identical" : "differs") +
                       ", serial vs parallel " + (parallel_ok ? "identical" : "differs") +
                       "; intentionality mean high_agency " + fixed(high, 2) + ", always_agree " + fixed(agree, 2));
}

// Checks against the released corpus; only runs when AGENCY_RELEASED_DATASET
// names a dataset directory.
Verdict paper_numbers_check() {
    const char* dir = std::getenv("AGENCY_RELEASED_DATASET");
    if (!dir || !*dir) return {Verdict::Skip, "AGENCY_RELEASED_DATASET not set"};
    const auto d = load_dataset(dir);
    std::vector<std::string> misses;
    auto near = [&](const std::string& what, double got, double want, double tol) {
        if (std::abs(got - want) > tol) misses.push_back(what + " " + fixed(got, 2) + " vs " + fixed(want, 2));
    };
    const auto agreement = pairwise_agreement(d.annotations);
    near("overall agreement", agreement.overall, 77.09, 0.01);
    const std::array<double, 4> per{71.36, 70.70, 85.21, 81.09};
    for (auto f : kFeatures)
        near(std::string(to_string(f)) + " agreement", agreement.per_subtask.at(subtask_of(f)),
             per[fidx(f)], 0.01);
    const auto turns = turn_statistics(d);
    near("conversation turns", turns.avg_conversation_turns, 41.67, 0.01);
    near("snippet turns", turns.avg_snippet_turns, 4.21, 0.01);
    near("snippet p90", static_cast<double>(turns.snippet_turns_p90), 6.0, 0.01);
    const auto gold = aggregate_gold(d.annotations);
    const std::array<std::pair<AgencyFeature, double>, 2> deltas{
        {{AgencyFeature::Intentionality, 26.5}, {AgencyFeature::Motivation, 15.2}}};
    for (const auto& [f, want] : deltas) {
        const auto x = crosstab_feature_vs_agency(gold, f);
        const double a = x.delta_by_agency(FeatureLevel::Strong), b = x.delta_by_feature(FeatureLevel::Strong);
        if (std::abs(a - want) > 0.1 && std::abs(b - want) > 0.1)
            misses.push_back(std::string(to_string(f)) + " strong delta " + fixed(a, 1) + "/" + fixed(b, 1) + " vs " +
                             fixed(want, 1));
    }
    const auto sat = satisfaction_agency_association(d);
    near("P(low|dissatisfied)", sat.p_low, 42.7, 0.1);
    near("P(high|dissatisfied)", sat.p_high, 26.3, 0.1);
    near("relative increase", sat.relative_increase.value_or(NAN), 62.1, 0.1);
    const auto fit = fit_agency_regression(d, ModelKind::RandomIntercept);
    const std::array<std::pair<int, bool>, 4> pattern{{{1, true}, {1, false}, {1, false}, {-1, true}}};
    for (auto f : kFeatures) {
        const auto [sign, sig] = pattern[fidx(f)];
        if ((fit.coefficients.at(f) > 0 ? 1 : -1) != sign || fit.significant(f) != sig)
            misses.push_back(std::string(to_string(f)) + " coefficient " + fixed(fit.coefficients.at(f), 4) + " p " +
                             fixed(fit.p_values.at(f), 4));
    }
    return pass_if(misses.empty(), misses.empty() ? "all published figures reproduced"
                                                  : std::to_string(misses.size()) + " mismatches: " +
                                                        text::join(misses, "; "));
}

}  // namespace

int main() {
    criterion("canonical framework fixture", 1.0, canonical_fixture_check);
    criterion("segmentation oracle", 10.0, segmentation_check);
    criterion("agreement oracle", 5.0, agreement_check);
    criterion("distribution round-trip", 5.0, distribution_check);
    criterion("regression recovery", 5.0, regression_check);
    criterion("prompt golden blocks", 1.0, prompt_check);
    criterion("deterministic tournament", 30.0, tournament_check);
    criterion("published numbers on released corpus", 600.0, paper_numbers_check);
    return failures == 0 ? 0 : 1;
}
