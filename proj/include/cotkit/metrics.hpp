#ifndef COTKIT_METRICS_HPP
#define COTKIT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "extraction.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

inline int exact_match(std::string_view pred, std::string_view gt) {
    return normalize(pred).text == normalize(gt).text ? 1 : 0;
}

/// Multiset token overlap F1 over normalized tokens. Both empty -> 1,
/// exactly one empty -> 0.
inline double token_f1(std::string_view pred, std::string_view gt) {
    const auto p = normalize(pred).tokens;
    const auto g = normalize(gt).tokens;
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string_view, std::size_t> remaining;
    for (const auto& t : g) ++remaining[t];
    std::size_t overlap = 0;
    for (const auto& t : p) {
        auto it = remaining.find(t);
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

inline constexpr double kDefaultConsensusCap = 1.0;

/// VQA-style partial credit: 0.3 for one matching annotator, 0.6 for two,
/// `cap` for three or more.
inline double consensus_from_matches(std::size_t matches, double cap = kDefaultConsensusCap) {
    if (matches >= 3) return cap;
    if (matches == 2) return 0.6;
    if (matches == 1) return 0.3;
    return 0.0;
}

inline double consensus_score(std::string_view pred, const std::vector<std::string>& human_answers,
                              double cap = kDefaultConsensusCap) {
    if (human_answers.empty()) throw Error(ErrorCode::InvalidArgument, "consensus needs at least one human answer");
    if (!(cap > 0.6)) throw Error(ErrorCode::InvalidArgument, "consensus cap must exceed 0.6");
    const std::string p = normalize(pred).text;
    const auto matches = static_cast<std::size_t>(std::count_if(
        human_answers.begin(), human_answers.end(), [&](const std::string& h) { return normalize(h).text == p; }));
    return consensus_from_matches(matches, cap);
}

enum class NumericMode { absolute, relative };

inline std::string_view to_string(NumericMode m) { return m == NumericMode::absolute ? "absolute" : "relative"; }

inline NumericMode parse_numeric_mode(std::string_view s) {
    if (s == "absolute") return NumericMode::absolute;
    if (s == "relative") return NumericMode::relative;
    throw Error(ErrorCode::InvalidArgument, "unknown numeric mode '" + std::string(s) + "'");
}

inline constexpr double kDefaultEpsilon = 0.02;

/// absolute: |pred - gt| < eps. relative: |pred - gt| < eps * |gt|, with
/// gt == 0 falling back to absolute.
inline int numeric_accuracy(double pred, double gt, NumericMode mode = NumericMode::absolute,
                            double epsilon = kDefaultEpsilon) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    const double diff = std::abs(pred - gt);
    const double bound = (mode == NumericMode::relative && gt != 0.0) ? epsilon * std::abs(gt) : epsilon;
    return diff < bound ? 1 : 0;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricConfig {
    double epsilon = kDefaultEpsilon;
    NumericMode mode = NumericMode::absolute;
    double consensus_cap = kDefaultConsensusCap;
    AnchorConfig anchors = default_anchors();

    Json to_json() const {
        Json j = Json::object();
        j["epsilon"] = epsilon;
        j["numeric_mode"] = to_string(mode);
        j["consensus_cap"] = consensus_cap;
        j["anchor_version"] = anchors.version;
        j["anchors"] = anchors.anchors;
        return j;
    }

    /// Stable across runs and machines; reports with equal digests were
    /// scored under identical settings.
    std::string digest() const { return hex_digest(to_json().dump()); }
};

struct SampleScore {
    std::string sample_id;
    std::string dataset;
    std::string split;
    std::string extracted;
    std::string rule;
    int em = 0;
    double f1 = 0.0;
    std::optional<double> consensus;
    std::optional<int> num_acc;
    std::optional<double> similarity;
};

struct AggregateScores {
    double em = 0.0;
    double f1 = 0.0;
    std::optional<double> consensus;
    std::optional<double> num_acc;
    std::optional<double> similarity;
};

struct MetricReport {
    std::vector<SampleScore> per_sample;
    AggregateScores aggregate;
    std::size_t n_scored = 0;
    std::string config_digest;
};

/// Means over defined values only; a column with no defined values stays
/// undefined rather than reading as 0.
inline AggregateScores mean_scores(std::span<const SampleScore> rows) {
    AggregateScores a;
    double em = 0, f1 = 0, cons = 0, num = 0, sim = 0;
    std::size_t n_cons = 0, n_num = 0, n_sim = 0;
    for (const auto& r : rows) {
        em += r.em;
        f1 += r.f1;
        if (r.consensus) cons += *r.consensus, ++n_cons;
        if (r.num_acc) num += *r.num_acc, ++n_num;
        if (r.similarity) sim += *r.similarity, ++n_sim;
    }
    const auto n = static_cast<double>(rows.size());
    a.em = em / n;
    a.f1 = f1 / n;
    if (n_cons) a.consensus = cons / static_cast<double>(n_cons);
    if (n_num) a.num_acc = num / static_cast<double>(n_num);
    if (n_sim) a.similarity = sim / static_cast<double>(n_sim);
    return a;
}

inline MetricReport aggregate(std::vector<SampleScore> rows, const MetricConfig& cfg = {}) {
    if (rows.empty()) throw Error(ErrorCode::EmptyReport, "no scored samples");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SampleScore& a, const SampleScore& b) { return a.sample_id < b.sample_id; });
    MetricReport r;
    r.aggregate = mean_scores(rows);
    r.n_scored = rows.size();
    r.per_sample = std::move(rows);
    r.config_digest = cfg.digest();
    return r;
}

inline Json to_json(const SampleScore& s) {
    Json j = Json::object();
    j["sample_id"] = s.sample_id;
    j["dataset"] = s.dataset;
    j["split"] = s.split;
    j["extracted"] = s.extracted;
    j["extraction_rule"] = s.rule;
    j["em"] = s.em;
    j["f1"] = s.f1;
    j["consensus"] = s.consensus ? Json(*s.consensus) : Json(nullptr);
    j["num_acc"] = s.num_acc ? Json(*s.num_acc) : Json(nullptr);
    j["similarity"] = s.similarity ? Json(*s.similarity) : Json(nullptr);
    return j;
}

inline Json to_json(const AggregateScores& a) {
    Json j = Json::object();
    j["em"] = a.em;
    j["f1"] = a.f1;
    j["consensus"] = a.consensus ? Json(*a.consensus) : Json(nullptr);
    j["num_acc"] = a.num_acc ? Json(*a.num_acc) : Json(nullptr);
    j["similarity"] = a.similarity ? Json(*a.similarity) : Json(nullptr);
    return j;
}

/// Embedding sidecar: JSON-lines {id, vector}, where id is the normalized
/// answer text the vector embeds.
inline std::map<std::string, std::vector<double>> parse_embeddings(std::string_view text,
                                                                   const std::string& origin = "embeddings") {
    std::map<std::string, std::vector<double>> out;
    for_each_jsonl(text, origin, [&](std::size_t line, const Json& j) {
        const std::string where = origin + ":" + std::to_string(line);
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vector") ||
            !j["vector"].is_array()) {
            throw Error(ErrorCode::MalformedRecord, where + ": expected {id, vector}");
        }
        std::vector<double> v;
        for (const auto& x : j["vector"]) {
            if (!x.is_number()) throw Error(ErrorCode::MalformedRecord, where + ": vector entries must be numbers");
            v.push_back(x.get<double>());
        }
        out.emplace(normalize(j["id"].get<std::string>()).text, std::move(v));
    });
    return out;
}

} // namespace cotkit

#endif
