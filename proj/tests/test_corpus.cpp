#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agency/corpus.hpp"

using namespace agency;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("agency_corpus_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(SyntheticDataset, DefaultFixtureCounts) {
    const auto d = generate_synthetic_dataset(7, LabelMarginals{});
    EXPECT_EQ(d.conversations.size(), 2u);
    EXPECT_EQ(d.snippets.size(), 4u);
    EXPECT_EQ(d.annotations.size(), 8u);

    const auto dir = temp_dir("fixture");
    save_dataset(d, dir);
    const auto loaded = load_dataset(dir);
    EXPECT_EQ(loaded.conversations.size(), 2u);
    EXPECT_EQ(loaded.snippets.size(), 4u);
    EXPECT_EQ(loaded.annotations.size(), 8u);
}

TEST(SyntheticDataset, ExactMarginals) {
    LabelMarginals m;
    m.feature(AgencyFeature::Intentionality) = std::array<std::size_t, 4>{0, 194, 175, 539};
    const auto d = generate_synthetic_dataset(3, m);
    std::array<std::size_t, 4> counts{};
    for (const auto& a : d.annotations) ++counts[static_cast<std::size_t>(a.intentionality)];
    EXPECT_EQ(counts, (std::array<std::size_t, 4>{0, 194, 175, 539}));

    LabelMarginals agency;
    agency.agency = std::array<std::size_t, 3>{308, 292, 308};
    const auto d2 = generate_synthetic_dataset(3, agency);
    std::array<std::size_t, 3> ac{};
    for (const auto& a : d2.annotations) ++ac[static_cast<std::size_t>(a.agency)];
    EXPECT_EQ(ac, (std::array<std::size_t, 3>{308, 292, 308}));
}

TEST(SyntheticDataset, SameSeedSameBytes) {
    const auto a = temp_dir("det_a"), b = temp_dir("det_b");
    save_dataset(generate_synthetic_dataset(11, LabelMarginals::published()), a);
    save_dataset(generate_synthetic_dataset(11, LabelMarginals::published()), b);
    for (auto f : {kConversationsFile, kSnippetsFile, kAnnotationsFile}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_NE(slurp(a / kConversationsFile), [&] {
        const auto c = temp_dir("det_c");
        save_dataset(generate_synthetic_dataset(12, LabelMarginals::published()), c);
        return slurp(c / kConversationsFile);
    }());
}

TEST(SyntheticDataset, InfeasibleMarginals) {
    LabelMarginals m;
    m.annotation_count = 8;
    m.feature(AgencyFeature::SelfEfficacy) = std::array<std::size_t, 4>{0, 5, 5, 0};
    EXPECT_THROW(generate_synthetic_dataset(1, m), ValidationError);

    LabelMarginals mismatched;
    mismatched.agency = std::array<std::size_t, 3>{2, 2, 2};
    mismatched.feature(AgencyFeature::Motivation) = std::array<std::size_t, 4>{0, 4, 4, 0};
    EXPECT_THROW(generate_synthetic_dataset(1, mismatched), ValidationError);

    LabelMarginals na;
    na.feature(AgencyFeature::Intentionality) = std::array<std::size_t, 4>{2, 2, 2, 0};
    EXPECT_THROW(generate_synthetic_dataset(1, na), ValidationError);

    LabelMarginals odd;
    odd.agency = std::array<std::size_t, 3>{1, 1, 1};
    EXPECT_THROW(generate_synthetic_dataset(1, odd), ValidationError);
}

// load(save(D)) == D, and re-saving the loaded dataset reproduces the bytes.
TEST(Persistence, RoundTripProperty) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        LabelMarginals m;
        m.annotation_count = 2 * (1 + seed % 9);
        m.snippets_per_conversation = 1 + seed % 4;
        const auto d = generate_synthetic_dataset(seed, m);
        const auto dir = temp_dir("rt");
        save_dataset(d, dir);
        const auto loaded = load_dataset(dir);
        ASSERT_EQ(loaded, d) << "seed " << seed;
        const auto dir2 = temp_dir("rt2");
        save_dataset(loaded, dir2);
        for (auto f : {kConversationsFile, kSnippetsFile, kAnnotationsFile}) EXPECT_EQ(slurp(dir / f), slurp(dir2 / f));
    }
}

TEST(Persistence, LabelsAreCaseInsensitiveOnInput) {
    const auto d = generate_synthetic_dataset(5, LabelMarginals{});
    const auto dir = temp_dir("case");
    save_dataset(d, dir);
    auto text = slurp(dir / kAnnotationsFile);
    std::size_t pos;
    while ((pos = text.find("\"strong\"")) != std::string::npos) text.replace(pos, 8, "\"STRONG\"");
    std::ofstream(dir / kAnnotationsFile, std::ios::trunc) << text;
    EXPECT_EQ(load_dataset(dir), d);
}

TEST(Persistence, DanglingReference) {
    const auto d = generate_synthetic_dataset(5, LabelMarginals{});
    const auto dir = temp_dir("dangling");
    save_dataset(d, dir);
    std::ofstream(dir / kAnnotationsFile, std::ios::app)
        << R"({"snippet_id":"nope","designer":"designer_a","annotator_id":"x","agency":"low","intentionality":"no","motivation":"no","self_efficacy":"n/a","self_regulation":"n/a"})"
        << "\n";
    try {
        load_dataset(dir);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'nope'"), std::string::npos) << e.what();
    }
}

TEST(Persistence, MalformedLineReportsLineNumber) {
    const auto d = generate_synthetic_dataset(5, LabelMarginals{});
    const auto dir = temp_dir("malformed");
    save_dataset(d, dir);
    std::ofstream(dir / kSnippetsFile, std::ios::app) << "{not json\n";
    try {
        load_dataset(dir);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("snippets.jsonl:5:"), std::string::npos) << e.what();
    }
}

TEST(Persistence, DuplicateIdsRejected) {
    auto d = generate_synthetic_dataset(5, LabelMarginals{});
    d.conversations.push_back(d.conversations.front());
    EXPECT_THROW(validate(d), ValidationError);
}

TEST(Validation, SnippetMustCopyParentUtterances) {
    auto d = generate_synthetic_dataset(5, LabelMarginals{});
    d.snippets.front().utterances.front().text = "edited";
    EXPECT_THROW(validate(d), ValidationError);
}

TEST(Validation, BothDesignersAnnotated) {
    auto d = generate_synthetic_dataset(5, LabelMarginals{});
    d.annotations.erase(d.annotations.begin());
    EXPECT_THROW(validate(d), ValidationError);
}

TEST(MajorityLabel, Examples) {
    EXPECT_EQ(majority_label(std::vector{FeatureLevel::Strong, FeatureLevel::Strong, FeatureLevel::Moderate}),
              FeatureLevel::Strong);
    EXPECT_EQ(majority_label(std::vector{AgencyLevel::Low, AgencyLevel::Medium, AgencyLevel::High}), AgencyLevel::Low);
    EXPECT_EQ(majority_label(std::vector{FeatureLevel::NotApplicable, FeatureLevel::Strong, FeatureLevel::NotApplicable}),
              FeatureLevel::NotApplicable);
    EXPECT_EQ(majority_label(std::vector{FeatureLevel::NotApplicable, FeatureLevel::Strong}), FeatureLevel::Strong);
    EXPECT_THROW(majority_label(std::vector<AgencyLevel>{}), ValidationError);
}

TEST(MajorityLabel, PermutationInvariant) {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<FeatureLevel> labels;
        const auto n = 1 + rng.index(7);
        for (std::size_t i = 0; i < n; ++i) labels.push_back(kFeatureLevels[rng.index(4)]);
        const auto expected = majority_label(labels);
        std::sort(labels.begin(), labels.end());
        do {
            ASSERT_EQ(majority_label(labels), expected);
        } while (std::next_permutation(labels.begin(), labels.end()));
    }
}

TEST(MajorityLabel, AggregateGold) {
    std::vector<AgencyAnnotation> raw;
    for (auto [ann, level] : {std::pair{"a", FeatureLevel::Strong}, {"b", FeatureLevel::Strong}, {"c", FeatureLevel::None}}) {
        AgencyAnnotation a;
        a.snippet_id = "s1";
        a.annotator_id = ann;
        a.intentionality = level;
        raw.push_back(a);
    }
    const auto gold = aggregate_gold(raw);
    ASSERT_EQ(gold.size(), 1u);
    EXPECT_EQ(gold[0].intentionality, FeatureLevel::Strong);
    EXPECT_EQ(gold[0].annotator_id, "majority");
}
