#pragma once

// Corpus statistics: label distributions, inter-annotator agreement,
// feature-by-agency crosstabs, agency regression, satisfaction association
// and turn counts.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agency/corpus.hpp"
#include "agency/embedding.hpp"
#include "agency/text.hpp"

namespace agency {

// ---------------------------------------------------------------------------
// Label distribution

struct LabelDistribution {
    std::array<std::size_t, 3> agency{};
    std::array<std::array<std::size_t, 4>, 4> features{};  // indexed by AgencyFeature, then FeatureLevel

    std::size_t count(AgencyLevel l) const { return agency[static_cast<std::size_t>(l)]; }
    std::size_t count(AgencyFeature f, FeatureLevel l) const {
        return features[static_cast<std::size_t>(f)][static_cast<std::size_t>(l)];
    }
    bool operator==(const LabelDistribution&) const = default;
};

inline LabelDistribution label_distribution(std::span<const AgencyAnnotation> annotations) {
    LabelDistribution d;
    for (const auto& a : annotations) {
        ++d.agency[static_cast<std::size_t>(a.agency)];
        for (auto f : kFeatures) ++d.features[static_cast<std::size_t>(f)][static_cast<std::size_t>(a.feature(f))];
    }
    return d;
}

inline Json to_json(const LabelDistribution& d) {
    Json j = Json::object();
    Json agency = Json::object();
    for (auto l : kAgencyLevels) agency[std::string(to_string(l))] = d.count(l);
    j["agency"] = agency;
    for (auto f : kFeatures) {
        Json row = Json::object();
        for (auto l : kFeatureLevels) row[std::string(to_string(l))] = d.count(f, l);
        j[std::string(to_string(f))] = row;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Pairwise agreement

struct AgreementReport {
    std::map<Subtask, double> per_subtask;  // percent
    double overall = 0.0;                   // mean over the four features
    std::size_t items = 0;
    std::size_t pairs = 0;
    std::size_t excluded_items = 0;  // fewer than two annotations
};

namespace detail {

using ItemGroups = std::map<std::pair<std::string, DesignerRole>, std::vector<const AgencyAnnotation*>>;

inline ItemGroups group_by_item(std::span<const AgencyAnnotation> annotations) {
    ItemGroups groups;
    for (const auto& a : annotations) groups[{a.snippet_id, a.designer}].push_back(&a);
    return groups;
}

}  // namespace detail

// Share of agreeing annotator pairs, pooled over every pair of every item
// with at least two annotations.
inline AgreementReport pairwise_agreement(std::span<const AgencyAnnotation> annotations) {
    AgreementReport r;
    std::map<Subtask, std::size_t> agree;
    for (const auto& [key, group] : detail::group_by_item(annotations)) {
        const auto n = group.size();
        if (n < 2) {
            ++r.excluded_items;
            continue;
        }
        ++r.items;
        r.pairs += n * (n - 1) / 2;
        for (auto t : kSubtasks) {
            std::map<Label, std::size_t> tally;
            for (const auto* a : group) ++tally[a->label(t)];
            for (const auto& [level, c] : tally) agree[t] += c * (c - 1) / 2;
        }
    }
    if (r.pairs == 0) throw ValidationError("no item has two or more annotations");
    for (auto t : kSubtasks) r.per_subtask[t] = 100.0 * static_cast<double>(agree[t]) / static_cast<double>(r.pairs);
    double sum = 0.0;
    for (auto f : kFeatures) sum += r.per_subtask[subtask_of(f)];
    r.overall = sum / static_cast<double>(kFeatures.size());
    return r;
}

inline Json to_json(const AgreementReport& r) {
    Json per = Json::object();
    for (const auto& [t, v] : r.per_subtask) per[std::string(to_string(t))] = v;
    return Json{{"overall", r.overall},
                {"per_subtask", per},
                {"items", r.items},
                {"pairs", r.pairs},
                {"excluded_items", r.excluded_items}};
}

// ---------------------------------------------------------------------------
// Feature vs agency crosstab

struct CrosstabReport {
    AgencyFeature feature = AgencyFeature::Intentionality;
    std::array<std::array<std::size_t, 4>, 3> counts{};  // [agency][feature level]
    std::array<std::array<double, 4>, 3> by_agency{};    // percent within each agency level
    std::array<std::array<double, 4>, 3> by_feature{};   // percent within each feature level

    std::size_t count(AgencyLevel a, FeatureLevel f) const {
        return counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
    }
    double pct_by_agency(AgencyLevel a, FeatureLevel f) const {
        return by_agency[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
    }
    double pct_by_feature(AgencyLevel a, FeatureLevel f) const {
        return by_feature[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
    }
    // High minus Low, in percentage points.
    double delta_by_agency(FeatureLevel f) const {
        return pct_by_agency(AgencyLevel::High, f) - pct_by_agency(AgencyLevel::Low, f);
    }
    double delta_by_feature(FeatureLevel f) const {
        return pct_by_feature(AgencyLevel::High, f) - pct_by_feature(AgencyLevel::Low, f);
    }
};

inline CrosstabReport crosstab_feature_vs_agency(std::span<const AgencyAnnotation> annotations, AgencyFeature feature) {
    CrosstabReport r;
    r.feature = feature;
    for (const auto& a : annotations)
        ++r.counts[static_cast<std::size_t>(a.agency)][static_cast<std::size_t>(a.feature(feature))];
    std::array<std::size_t, 3> row{};
    std::array<std::size_t, 4> col{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            row[i] += r.counts[i][j];
            col[j] += r.counts[i][j];
        }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const auto c = static_cast<double>(r.counts[i][j]);
            r.by_agency[i][j] = row[i] ? 100.0 * c / static_cast<double>(row[i]) : 0.0;
            r.by_feature[i][j] = col[j] ? 100.0 * c / static_cast<double>(col[j]) : 0.0;
        }
    return r;
}

inline Json to_json(const CrosstabReport& r) {
    Json rows = Json::object();
    for (auto a : kAgencyLevels) {
        Json cells = Json::object();
        for (auto f : kFeatureLevels)
            cells[std::string(to_string(f))] = Json{{"count", r.count(a, f)},
                                                     {"pct_by_agency", r.pct_by_agency(a, f)},
                                                     {"pct_by_feature", r.pct_by_feature(a, f)}};
        rows[std::string(to_string(a))] = cells;
    }
    return Json{{"feature", std::string(to_string(r.feature))},
                {"cells", rows},
                {"strong_delta_by_agency", r.delta_by_agency(FeatureLevel::Strong)},
                {"strong_delta_by_feature", r.delta_by_feature(FeatureLevel::Strong)}};
}

// ---------------------------------------------------------------------------
// Agency regression

enum class ModelKind : std::uint8_t { OLS, RandomIntercept };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::OLS ? "ols" : "random_intercept"; }

inline ModelKind parse_model_kind(std::string_view s) {
    const auto t = text::lower(text::trim(s));
    if (t == "ols") return ModelKind::OLS;
    if (t == "random_intercept" || t == "mixed") return ModelKind::RandomIntercept;
    throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

struct RegressionRow {
    std::string group;
    double agency = 0.0;
    std::array<double, 4> features{};
};

struct RegressionReport {
    ModelKind model_kind = ModelKind::OLS;
    double intercept = 0.0;
    std::map<AgencyFeature, double> coefficients;
    std::map<AgencyFeature, double> standard_errors;
    std::map<AgencyFeature, double> p_values;
    std::size_t n = 0;
    std::size_t groups = 0;
    double residual_variance = 0.0;
    double group_variance = 0.0;  // random-intercept mode only
    std::size_t iterations = 0;
    bool converged = true;

    bool significant(AgencyFeature f, double alpha = 0.05) const { return p_values.at(f) < alpha; }
};

inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

namespace detail {

inline const std::array<std::string, 5>& regression_columns() {
    static const std::array<std::string, 5> names{"intercept", "intentionality", "motivation", "self_efficacy",
                                                  "self_regulation"};
    return names;
}

inline void check_rank(const Eigen::MatrixXd& X) {
    constexpr double tol = 1e-9;
    const auto& names = regression_columns();
    for (Eigen::Index j = 1; j <= X.cols(); ++j) {
        const auto left = X.leftCols(j);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(left);
        qr.setThreshold(tol);
        if (qr.rank() == j) continue;
        const Eigen::Index bad = j - 1;
        std::string msg = "rank-deficient design: column '" + names[static_cast<std::size_t>(bad)] + "'";
        if (bad == 0) throw ValidationError(msg + " is all zero");
        const Eigen::MatrixXd prior = X.leftCols(bad);
        const Eigen::VectorXd w = prior.colPivHouseholderQr().solve(X.col(bad));
        std::vector<std::string> with;
        for (Eigen::Index k = 0; k < w.size(); ++k)
            if (std::abs(w(k)) > 1e-8) with.push_back(names[static_cast<std::size_t>(k)]);
        if (with.empty()) throw ValidationError(msg + " is all zero");
        throw ValidationError(msg + " is collinear with " + text::join(with, ", "));
    }
}

struct OlsFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd xtx_inv;
};

inline OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    OlsFit f;
    const Eigen::MatrixXd xtx = X.transpose() * X;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    f.beta = X.colPivHouseholderQr().solve(y);
    f.residuals = y - X * f.beta;
    f.xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    return f;
}

inline void fill_coefficients(RegressionReport& r, const OlsFit& fit, double sigma2) {
    r.intercept = fit.beta(0);
    r.residual_variance = sigma2;
    for (std::size_t k = 0; k < kFeatures.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k + 1);
        const double se = std::sqrt(std::max(0.0, sigma2 * fit.xtx_inv(i, i)));
        const auto f = kFeatures[k];
        r.coefficients[f] = fit.beta(i);
        r.standard_errors[f] = se;
        r.p_values[f] = se > 0.0 ? two_sided_normal_p(fit.beta(i) / se) : (fit.beta(i) == 0.0 ? 1.0 : 0.0);
    }
}

}  // namespace detail

inline constexpr std::size_t kRandomInterceptMaxIterations = 200;
inline constexpr double kRandomInterceptTolerance = 1e-8;

// OLS: agency on the four encoded features plus an intercept.
// RandomIntercept: alternates an OLS fit on intercept-adjusted responses with
// shrunken per-group mean residuals (variance components by moments) until
// the intercepts stop moving.
inline RegressionReport fit_agency_regression(std::span<const RegressionRow> rows, ModelKind kind) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    constexpr Eigen::Index p = 5;
    if (n <= p) throw ValidationError("regression needs more than " + std::to_string(p) + " rows");
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    std::map<std::string, std::vector<Eigen::Index>> members;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        for (Eigen::Index k = 0; k < 4; ++k) X(i, k + 1) = row.features[static_cast<std::size_t>(k)];
        y(i) = row.agency;
        members[row.group].push_back(i);
    }
    detail::check_rank(X);

    RegressionReport r;
    r.model_kind = kind;
    r.n = rows.size();
    r.groups = members.size();
    const double dof = static_cast<double>(n - p);

    if (kind == ModelKind::OLS) {
        const auto fit = detail::ols(X, y);
        detail::fill_coefficients(r, fit, fit.residuals.squaredNorm() / dof);
        return r;
    }

    const auto G = members.size();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);  // group intercept per row
    std::map<std::string, double> intercepts;
    for (const auto& [g, idx] : members) intercepts[g] = 0.0;
    detail::OlsFit fit;
    double sigma_e2 = 0.0, sigma_u2 = 0.0;
    r.converged = false;
    for (std::size_t iter = 1; iter <= kRandomInterceptMaxIterations; ++iter) {
        r.iterations = iter;
        fit = detail::ols(X, y - u);
        const Eigen::VectorXd resid = y - X * fit.beta;

        // Moment estimates: pooled within-group variance and between-group
        // variance of group means net of sampling noise.
        double within = 0.0, mean_of_means = 0.0, mean_n = 0.0;
        std::size_t within_dof = 0;
        std::map<std::string, double> group_mean;
        for (const auto& [g, idx] : members) {
            double m = 0.0;
            for (auto i : idx) m += resid(i);
            m /= static_cast<double>(idx.size());
            group_mean[g] = m;
            for (auto i : idx) within += (resid(i) - m) * (resid(i) - m);
            within_dof += idx.size() - 1;
            mean_of_means += m;
            mean_n += static_cast<double>(idx.size());
        }
        mean_of_means /= static_cast<double>(G);
        mean_n /= static_cast<double>(G);
        sigma_e2 = within_dof > 0 ? within / static_cast<double>(within_dof) : resid.squaredNorm() / dof;
        double between = 0.0;
        for (const auto& [g, m] : group_mean) between += (m - mean_of_means) * (m - mean_of_means);
        between = G > 1 ? between / static_cast<double>(G - 1) : 0.0;
        sigma_u2 = std::max(0.0, between - sigma_e2 / mean_n);

        double shift = 0.0;
        std::map<std::string, double> next;
        for (const auto& [g, idx] : members) {
            const double ng = static_cast<double>(idx.size());
            const double shrink = sigma_u2 > 0.0 ? sigma_u2 / (sigma_u2 + sigma_e2 / ng) : 0.0;
            next[g] = shrink * (group_mean[g] - mean_of_means);
        }
        for (const auto& [g, v] : next) shift = std::max(shift, std::abs(v - intercepts[g]));
        intercepts = std::move(next);
        for (const auto& [g, idx] : members)
            for (auto i : idx) u(i) = intercepts[g];
        if (shift < kRandomInterceptTolerance) {
            r.converged = true;
            fit = detail::ols(X, y - u);
            break;
        }
    }
    const Eigen::VectorXd resid = y - u - X * fit.beta;
    detail::fill_coefficients(r, fit, resid.squaredNorm() / dof);
    r.group_variance = sigma_u2;
    return r;
}

inline std::vector<RegressionRow> regression_rows(const Dataset& d) {
    std::map<std::string, std::string> conversation_of;
    for (const auto& s : d.snippets) conversation_of[s.id] = s.conversation_id;
    std::vector<RegressionRow> rows;
    for (const auto& a : aggregate_gold(d.annotations)) {
        RegressionRow row;
        const auto it = conversation_of.find(a.snippet_id);
        row.group = it != conversation_of.end() ? it->second : a.snippet_id;
        row.agency = encode_level(a.agency);
        for (std::size_t k = 0; k < kFeatures.size(); ++k) row.features[k] = score_value(a.feature(kFeatures[k]));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline RegressionReport fit_agency_regression(const Dataset& d, ModelKind kind) {
    const auto rows = regression_rows(d);
    return fit_agency_regression(std::span<const RegressionRow>(rows), kind);
}

inline Json to_json(const RegressionReport& r) {
    Json coef = Json::object();
    for (auto f : kFeatures) {
        const std::string key(to_string(f));
        coef[key] = Json{{"coefficient", r.coefficients.at(f)},
                         {"standard_error", r.standard_errors.at(f)},
                         {"p_value", r.p_values.at(f)}};
    }
    Json j{{"model_kind", std::string(to_string(r.model_kind))},
           {"intercept", r.intercept},
           {"features", coef},
           {"n", r.n},
           {"groups", r.groups},
           {"residual_variance", r.residual_variance}};
    if (r.model_kind == ModelKind::RandomIntercept) {
        j["group_variance"] = r.group_variance;
        j["iterations"] = r.iterations;
        j["converged"] = r.converged;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Satisfaction

struct SatisfactionReport {
    double p_low = 0.0;   // percent of dissatisfied components with Low agency
    double p_high = 0.0;  // percent with High agency
    std::optional<double> relative_increase;  // undefined when p_high is zero
    std::size_t records = 0;
    std::size_t exact_matches = 0;
    std::size_t cosine_matches = 0;
    std::size_t unmatched = 0;
};

// Finds the snippet whose component best names `component`: exact match after
// trimming and lowercasing, else highest cosine similarity above zero.
inline const Snippet* match_component(std::span<const Snippet* const> candidates, std::string_view component,
                                      const EmbeddingProvider& embedder, bool* exact = nullptr) {
    const auto want = text::lower(text::trim(component));
    for (const auto* s : candidates)
        if (text::lower(text::trim(s->component.text)) == want) {
            if (exact) *exact = true;
            return s;
        }
    if (exact) *exact = false;
    const auto q = embedder.embed(component);
    const Snippet* best = nullptr;
    double best_score = 0.0;
    for (const auto* s : candidates) {
        const double c = cosine(q, embedder.embed(s->component.text));
        if (c > best_score + 1e-12) {
            best_score = c;
            best = s;
        }
    }
    return best;
}

inline SatisfactionReport satisfaction_agency_association(const Dataset& d,
                                                          const EmbeddingProvider& embedder = LexicalEmbeddingProvider()) {
    std::map<std::string, std::vector<const Snippet*>> by_conversation;
    for (const auto& s : d.snippets) by_conversation[s.conversation_id].push_back(&s);
    std::map<std::pair<std::string, DesignerRole>, AgencyLevel> gold;
    for (const auto& a : aggregate_gold(d.annotations)) gold[{a.snippet_id, a.designer}] = a.agency;

    SatisfactionReport r;
    std::size_t low = 0, high = 0, dissatisfied = 0;
    for (const auto& c : d.conversations)
        for (auto role : kRoles) {
            const auto& least = c.satisfaction[role].least_satisfied;
            if (!least || text::trim(*least).empty()) continue;
            ++dissatisfied;
            const auto& pool = by_conversation[c.id];
            bool exact = false;
            const auto* s = match_component(pool, *least, embedder, &exact);
            const auto it = s ? gold.find({s->id, role}) : gold.end();
            if (it == gold.end()) {
                ++r.unmatched;
                continue;
            }
            ++(exact ? r.exact_matches : r.cosine_matches);
            ++r.records;
            if (it->second == AgencyLevel::Low) ++low;
            if (it->second == AgencyLevel::High) ++high;
        }
    if (dissatisfied == 0) throw ValidationError("no least-satisfied components recorded");
    if (r.records == 0) throw ValidationError("no least-satisfied component matched an annotated snippet");
    r.p_low = 100.0 * static_cast<double>(low) / static_cast<double>(r.records);
    r.p_high = 100.0 * static_cast<double>(high) / static_cast<double>(r.records);
    if (high > 0) r.relative_increase = (r.p_low - r.p_high) / r.p_high * 100.0;
    return r;
}

inline Json to_json(const SatisfactionReport& r) {
    return Json{{"p_low_given_dissatisfied", r.p_low},
                {"p_high_given_dissatisfied", r.p_high},
                {"relative_increase", r.relative_increase ? Json(*r.relative_increase) : Json("undefined")},
                {"records", r.records},
                {"exact_matches", r.exact_matches},
                {"cosine_matches", r.cosine_matches},
                {"unmatched", r.unmatched}};
}

// ---------------------------------------------------------------------------
// Turn statistics

struct TurnStatistics {
    double avg_conversation_turns = 0.0;
    double avg_snippet_turns = 0.0;
    std::size_t snippet_turns_p90 = 0;
};

// Nearest-rank percentile: the ceil(q*n)-th smallest value.
inline std::size_t nearest_rank_percentile(std::vector<std::size_t> values, double q) {
    if (values.empty()) throw ValidationError("percentile of an empty sample");
    if (!(q > 0.0 && q <= 1.0)) throw ValidationError("percentile must be in (0, 1]");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

inline TurnStatistics turn_statistics(const Dataset& d) {
    if (d.conversations.empty()) throw ValidationError("dataset has no conversations");
    if (d.snippets.empty()) throw ValidationError("dataset has no snippets");
    TurnStatistics t;
    double conv = 0.0;
    for (const auto& c : d.conversations) conv += static_cast<double>(c.utterances.size());
    t.avg_conversation_turns = conv / static_cast<double>(d.conversations.size());
    std::vector<std::size_t> lengths;
    double snip = 0.0;
    for (const auto& s : d.snippets) {
        lengths.push_back(s.span.length());
        snip += static_cast<double>(s.span.length());
    }
    t.avg_snippet_turns = snip / static_cast<double>(d.snippets.size());
    t.snippet_turns_p90 = nearest_rank_percentile(std::move(lengths), 0.9);
    return t;
}

inline Json to_json(const TurnStatistics& t) {
    return Json{{"avg_conversation_turns", t.avg_conversation_turns},
                {"avg_snippet_turns", t.avg_snippet_turns},
                {"snippet_turns_p90", t.snippet_turns_p90}};
}

// ---------------------------------------------------------------------------
// Combined report

inline constexpr std::array<const char*, 6> kReportNames{"distribution", "agreement",    "crosstabs",
                                                         "regression",   "satisfaction", "turns"};

// Selected statistics over one dataset, keyed by report name (all when
// `reports` is empty). Distribution, crosstabs, regression and satisfaction
// use the majority label per (snippet, designer); agreement uses the raw
// annotations. A statistic that cannot be computed is {"error": message}.
inline Json analysis_report(const Dataset& d, const std::set<std::string>& reports = {}) {
    for (const auto& r : reports)
        if (std::find_if(kReportNames.begin(), kReportNames.end(), [&](const char* n) { return r == n; }) ==
            kReportNames.end())
            throw ValidationError("unknown report '" + r + "'");
    const auto gold = aggregate_gold(d.annotations);
    Json j = Json::object();
    auto add = [&](const char* key, auto&& fn) {
        if (!reports.empty() && !reports.count(key)) return;
        try {
            j[key] = fn();
        } catch (const Error& e) {
            j[key] = Json{{"error", e.what()}};
        }
    };
    add("distribution", [&] { return to_json(label_distribution(gold)); });
    add("agreement", [&] { return to_json(pairwise_agreement(d.annotations)); });
    add("crosstabs", [&] {
        Json x = Json::object();
        for (auto f : kFeatures) x[std::string(to_string(f))] = to_json(crosstab_feature_vs_agency(gold, f));
        return x;
    });
    add("regression", [&] {
        const auto rows = regression_rows(d);
        Json x = Json::object();
        for (auto k : {ModelKind::OLS, ModelKind::RandomIntercept})
            x[std::string(to_string(k))] = to_json(fit_agency_regression(std::span<const RegressionRow>(rows), k));
        return x;
    });
    add("satisfaction", [&] { return to_json(satisfaction_agency_association(d)); });
    add("turns", [&] { return to_json(turn_statistics(d)); });
    return j;
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(digits);
    o << v;
    return o.str();
}

}  // namespace detail

// Plain-text rendering of analysis_report output.
inline std::string format_analysis_summary(const Json& report) {
    using detail::fixed;
    std::ostringstream out;
    auto failed = [&](const char* key) {
        if (!report.contains(key)) return true;
        if (report[key].contains("error")) {
            out << key << ": unavailable (" << report[key]["error"].get<std::string>() << ")\n\n";
            return true;
        }
        return false;
    };
    if (!failed("distribution")) {
        out << "Label distribution\n";
        for (auto it = report["distribution"].begin(); it != report["distribution"].end(); ++it) {
            out << "  " << it.key() << ":";
            for (auto l = it->begin(); l != it->end(); ++l) out << " " << l.key() << "=" << l->get<std::size_t>();
            out << "\n";
        }
        out << "\n";
    }
    if (!failed("agreement")) {
        const auto& a = report["agreement"];
        out << "Pairwise agreement: " << fixed(a["overall"].get<double>()) << "% overall over " << a["items"]
            << " items\n";
        for (auto it = a["per_subtask"].begin(); it != a["per_subtask"].end(); ++it)
            out << "  " << it.key() << ": " << fixed(it->get<double>()) << "%\n";
        out << "\n";
    }
    if (!failed("crosstabs")) {
        out << "Strong level, High minus Low agency (percentage points)\n";
        for (auto it = report["crosstabs"].begin(); it != report["crosstabs"].end(); ++it)
            out << "  " << it.key() << ": " << fixed((*it)["strong_delta_by_agency"].get<double>())
                << " within agency, " << fixed((*it)["strong_delta_by_feature"].get<double>()) << " within level\n";
        out << "\n";
    }
    if (!failed("regression")) {
        for (auto m = report["regression"].begin(); m != report["regression"].end(); ++m) {
            out << "Regression (" << m.key() << "), n=" << (*m)["n"] << "\n";
            if (m->contains("error")) {
                out << "  unavailable (" << (*m)["error"].get<std::string>() << ")\n";
                continue;
            }
            for (auto f = (*m)["features"].begin(); f != (*m)["features"].end(); ++f) {
                const double p = (*f)["p_value"].get<double>();
                out << "  " << f.key() << ": " << fixed((*f)["coefficient"].get<double>(), 4) << " (se "
                    << fixed((*f)["standard_error"].get<double>(), 4) << ", p " << fixed(p, 4) << ")"
                    << (p < 0.05 ? " *" : "") << "\n";
            }
        }
        out << "\n";
    }
    if (!failed("satisfaction")) {
        const auto& s = report["satisfaction"];
        out << "Least-satisfied components: " << fixed(s["p_low_given_dissatisfied"].get<double>(), 1)
            << "% low agency, " << fixed(s["p_high_given_dissatisfied"].get<double>(), 1) << "% high agency, "
            << "relative increase "
            << (s["relative_increase"].is_number() ? fixed(s["relative_increase"].get<double>(), 1) + "%"
                                                    : std::string("undefined"))
            << " (" << s["records"] << " records)\n\n";
    }
    if (!failed("turns")) {
        const auto& t = report["turns"];
        out << "Turns: " << fixed(t["avg_conversation_turns"].get<double>()) << " per conversation, "
            << fixed(t["avg_snippet_turns"].get<double>()) << " per snippet, snippet p90 "
            << t["snippet_turns_p90"] << "\n";
    }
    return out.str();
}

}  // namespace agency
