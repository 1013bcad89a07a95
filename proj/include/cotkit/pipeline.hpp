#ifndef COTKIT_PIPELINE_HPP
#define COTKIT_PIPELINE_HPP

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aokvqa.hpp"
#include "chartqa.hpp"
#include "error.hpp"
#include "extraction.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "okvqa.hpp"
#include "prompting.hpp"
#include "schema.hpp"
#include "train_utils.hpp"

namespace cotkit {

inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitBelowThreshold = 1, kExitIoOrConfig = 2 };

enum class RationaleSource { none, ground_truth, file };

struct RunConfig {
    Dataset dataset = Dataset::okvqa;
    Split split = Split::train;

    // ingest inputs, by dataset
    fs::path questions;   // okvqa
    fs::path annotations; // okvqa, chartqa native
    fs::path records_dir; // aokvqa
    fs::path captions;    // aokvqa, optional
    fs::path features;    // aokvqa, optional
    fs::path tables_dir;  // chartqa synthesized
    fs::path image_dir;   // chartqa native
    std::vector<TemplateId> templates{std::begin(kAllTemplates), std::end(kAllTemplates)};

    // prompts / score inputs
    fs::path unified;
    fs::path predictions;
    fs::path embeddings;
    fs::path rationales;
    RationaleSource rationale_source = RationaleSource::none;

    fs::path output;             // ingest / prompts: file
    fs::path out_dir = "data";   // ingest default root; score output directory
    MetricConfig metrics;
    std::optional<double> fail_below; // EM percentage
    std::uint64_t seed = train::kDefaultSeed;
    unsigned workers = 1;
};

struct CommandResult {
    int exit_code = kExitOk;
    std::string summary; // human-readable report
    Json report = Json::object();
    std::vector<fs::path> written;
};

namespace detail {

inline void require_file(const fs::path& p, const char* flag) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing required ") + flag);
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::Io, std::string(flag) + " not found: " + p.string());
}

inline void require_dir(const fs::path& p, const char* flag) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing required ") + flag);
    if (!fs::is_directory(p)) throw Error(ErrorCode::Io, std::string(flag) + " not found: " + p.string());
}

inline void optional_file(const fs::path& p, const char* flag) {
    if (!p.empty()) require_file(p, flag);
}

template <typename Fn>
CommandResult guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        CommandResult r;
        r.exit_code = kExitIoOrConfig;
        r.summary = std::string("error: ") + e.what();
        r.report["error"] = e.what();
        return r;
    } catch (const std::exception& e) {
        CommandResult r;
        r.exit_code = kExitIoOrConfig;
        r.summary = std::string("error: ") + e.what();
        r.report["error"] = e.what();
        return r;
    }
}

inline fs::path default_ingest_output(const RunConfig& cfg) {
    const std::string dir = cfg.dataset == Dataset::chartqa && !cfg.tables_dir.empty()
                                ? std::string("chartqa_manual")
                                : std::string(to_string(cfg.dataset));
    return cfg.out_dir / dir / (std::string(to_string(cfg.split)) + ".json");
}

inline std::string percent(std::optional<double> v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// ingest

inline CommandResult cmd_ingest(const RunConfig& cfg) {
    return detail::guarded([&] {
        CommandResult r;
        Json& rep = r.report;
        rep["schema_version"] = kReportSchemaVersion;
        rep["command"] = "ingest";
        rep["dataset"] = to_string(cfg.dataset);
        rep["split"] = to_string(cfg.split);
        std::vector<UnifiedSample> samples;
        std::vector<std::string> warnings;
        std::ostringstream line;

        switch (cfg.dataset) {
        case Dataset::okvqa: {
            detail::require_file(cfg.questions, "--questions");
            detail::require_file(cfg.annotations, "--annotations");
            auto res = ingest_okvqa(read_json_file(cfg.questions), read_json_file(cfg.annotations), cfg.split);
            samples = std::move(res.samples);
            warnings = res.warnings;
            for (const auto& id : res.missing_annotation) warnings.push_back("question " + id + " has no annotation");
            for (const auto& id : res.orphan_annotation) warnings.push_back("annotation " + id + " has no question");
            rep["mismatches"] = res.mismatches();
            rep["average_answers"] = res.average_answers;
            line << samples.size() << " samples, " << res.mismatches() << " mismatches";
            break;
        }
        case Dataset::aokvqa: {
            detail::require_dir(cfg.records_dir, "--records-dir");
            detail::optional_file(cfg.captions, "--captions");
            detail::optional_file(cfg.features, "--features");
            auto records = read_aokvqa_records(cfg.records_dir, cfg.split);
            auto conv = convert_aokvqa(records, cfg.split);
            for (const auto& rej : conv.rejected) {
                warnings.push_back(rej.origin.ref() + ": " + rej.message);
            }
            CaptionLoad caps;
            FeatureLoad feats;
            if (!cfg.captions.empty()) caps = captions_from_json(read_json_file(cfg.captions));
            if (!cfg.features.empty()) feats = read_features(cfg.features);
            for (const auto& id : caps.blank_ids) warnings.push_back("blank caption for " + id);
            for (const auto& f : feats.rejected) {
                warnings.push_back("feature[" + std::to_string(f.index) + "] " + f.sample_id + ": " + f.reason);
            }
            auto attached = attach_sidecars(std::move(conv.samples), caps.captions, feats.features);
            for (const auto& e : attached.report.entries) {
                if (!cfg.captions.empty() && !e.has_caption) warnings.push_back("caption missing for " + e.sample_id);
                if (!cfg.features.empty() && !e.has_feature) warnings.push_back("feature missing for " + e.sample_id);
            }
            for (const auto& d : attached.report.duplicates) {
                warnings.push_back("DuplicateSidecarKey " + d.kind + " " + d.key + " (kept first)");
            }
            samples = std::move(attached.samples);
            rep["records"] = records.size();
            rep["rejected"] = conv.rejected.size();
            rep["matched"] = attached.report.matched();
            line << samples.size() << " samples, " << conv.rejected.size() << " rejected, " << warnings.size()
                 << " warnings";
            break;
        }
        case Dataset::chartqa: {
            if (!cfg.tables_dir.empty()) {
                detail::require_dir(cfg.tables_dir, "--tables-dir");
                auto corpus = synthesize_corpus(cfg.tables_dir, cfg.templates, cfg.seed, cfg.split, cfg.workers);
                for (const auto& s : corpus.skipped) warnings.push_back("skipped " + s.path + ": " + s.reason);
                samples = std::move(corpus.samples);
                rep["tables_used"] = corpus.tables_used;
                rep["skipped"] = corpus.skipped.size();
                line << samples.size() << " samples from " << corpus.tables_used << " tables, "
                     << corpus.skipped.size() << " skipped";
            } else {
                detail::require_file(cfg.annotations, "--annotations");
                detail::require_dir(cfg.image_dir, "--image-dir");
                auto res = load_chartqa_native(read_json_file(cfg.annotations), cfg.image_dir, cfg.split);
                for (const auto& m : res.missing_images) {
                    warnings.push_back("MissingImageFile entry " + std::to_string(m.index) + ": " + m.image);
                }
                samples = std::move(res.samples);
                rep["skipped"] = res.missing_images.size();
                line << samples.size() << " samples, " << res.missing_images.size() << " skipped";
            }
            break;
        }
        }

        for (const auto& v : validate_samples(samples)) warnings.push_back("invalid sample " + v.describe());
        const fs::path out = cfg.output.empty() ? detail::default_ingest_output(cfg) : cfg.output;
        write_samples(out, samples);
        r.written.push_back(out);

        rep["samples"] = samples.size();
        rep["warnings"] = warnings;
        rep["output"] = out.generic_string();
        r.summary = line.str();
        for (const auto& w : warnings) r.summary += "\nwarning: " + w;
        r.summary += "\nwrote " + out.generic_string();
        return r;
    });
}

// ---------------------------------------------------------------------------
// prompts

inline CommandResult cmd_prompts(const RunConfig& cfg) {
    return detail::guarded([&] {
        detail::require_file(cfg.unified, "--unified");
        if (cfg.output.empty()) throw Error(ErrorCode::InvalidArgument, "missing required --out");
        std::map<std::string, std::string> generated;
        if (cfg.rationale_source == RationaleSource::file) {
            detail::require_file(cfg.rationales, "--rationales");
            for_each_jsonl(read_file(cfg.rationales), cfg.rationales.string(), [&](std::size_t, const Json& j) {
                generated[detail::text_field(j, "sample_id", "rationales")] =
                    detail::text_field(j, "rationale", "rationales");
            });
        }
        const auto samples = read_samples(cfg.unified);
        std::vector<Json> rows;
        rows.reserve(samples.size());
        std::size_t with_stage2 = 0;
        for (const auto& s : samples) {
            std::optional<std::string> rationale;
            if (cfg.rationale_source == RationaleSource::ground_truth) {
                rationale = s.rationales.empty() ? std::string() : s.rationales.front();
            } else if (cfg.rationale_source == RationaleSource::file) {
                if (auto it = generated.find(s.sample_id); it != generated.end()) rationale = it->second;
            }
            with_stage2 += rationale.has_value();
            rows.push_back(prompt_dump_row(build_prompt_pair(s), rationale));
        }
        write_file_atomic(cfg.output, dump_jsonl(rows));
        CommandResult r;
        r.written.push_back(cfg.output);
        r.report = {{"schema_version", kReportSchemaVersion},
                    {"command", "prompts"},
                    {"prompts", rows.size()},
                    {"with_stage2", with_stage2},
                    {"output", cfg.output.generic_string()}};
        r.summary = std::to_string(rows.size()) + " prompts\nwrote " + cfg.output.generic_string();
        return r;
    });
}

// ---------------------------------------------------------------------------
// score

/// Scores one model output against its sample. MCQ outputs go through the
/// letter extractor (falling back to open extraction), open-ended outputs
/// through the anchor extractor, and numeric ground truths additionally
/// get a tolerance check.
inline SampleScore score_prediction(const UnifiedSample& s, std::string_view raw, const MetricConfig& cfg,
                                    const std::map<std::string, std::vector<double>>* embeddings = nullptr) {
    SampleScore out;
    out.sample_id = s.sample_id;
    out.dataset = std::string(to_string(s.dataset));
    out.split = std::string(to_string(s.split));

    std::string gt = s.answer;
    bool extracted = false;
    if (!s.choices.empty()) {
        if (auto idx = resolve_answer_index(s.choices, s.answer)) gt = s.choices[*idx];
        if (s.choices.size() >= 2 && s.choices.size() <= kMaxChoices) {
            try {
                out.extracted = s.choices[extract_mcq(raw, s.choices.size())];
                out.rule = std::string(to_string(ExtractionRule::mcq_letter));
                extracted = true;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoLetterFound) throw;
            }
        }
    }
    if (!extracted) {
        try {
            auto open = extract_open_detailed(raw, cfg.anchors);
            out.extracted = std::move(open.text);
            out.rule = std::string(to_string(open.rule));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyExtraction) throw;
        }
    }

    out.em = exact_match(out.extracted, gt);
    out.f1 = token_f1(out.extracted, gt);
    if (!s.raw_answers.empty()) {
        out.consensus = consensus_score(out.extracted, s.raw_answers, cfg.consensus_cap);
    }
    if (auto gt_num = parse_numeric_answer(gt)) {
        try {
            out.num_acc = numeric_accuracy(extract_numeric(raw, cfg.anchors), *gt_num, cfg.mode, cfg.epsilon);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoNumberFound) throw;
            out.num_acc = 0;
        }
    }
    if (embeddings) {
        auto p = embeddings->find(normalize(out.extracted).text);
        auto g = embeddings->find(normalize(gt).text);
        if (p != embeddings->end() && g != embeddings->end()) {
            try {
                out.similarity = cosine_similarity(p->second, g->second);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::ZeroVector) throw;
            }
        }
    }
    return out;
}

/// Fixed-width table: one row per dataset/split, metrics as percentages.
inline std::string render_score_table(const std::vector<std::pair<std::pair<std::string, std::string>, std::pair<std::size_t, AggregateScores>>>& groups,
                                      const std::string& digest) {
    std::vector<std::vector<std::string>> cells = {
        {"Dataset", "Split", "N", "EM (%)", "F1 (%)", "Consensus (%)", "NumAcc (%)", "Similarity (%)"}};
    for (const auto& [key, val] : groups) {
        const auto& a = val.second;
        cells.push_back({key.first, key.second, std::to_string(val.first), detail::percent(a.em), detail::percent(a.f1),
                         detail::percent(a.consensus), detail::percent(a.num_acc), detail::percent(a.similarity)});
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) line += "  ";
            const std::size_t pad = width[c] - row[c].size();
            // text columns left-aligned, numbers right-aligned
            if (c < 2) line += row[c] + std::string(pad, ' ');
            else line += std::string(pad, ' ') + row[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    };
    emit(cells.front());
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
    out += "config_digest: " + digest + "\n";
    return out;
}

inline CommandResult cmd_score(const RunConfig& cfg) {
    return detail::guarded([&] {
        detail::require_file(cfg.unified, "--unified");
        detail::require_file(cfg.predictions, "--predictions");
        detail::optional_file(cfg.embeddings, "--embeddings");
        if (!(cfg.metrics.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "--epsilon must be positive");
        if (!(cfg.metrics.consensus_cap > 0.6)) throw Error(ErrorCode::InvalidArgument, "--consensus-cap must exceed 0.6");

        const auto samples = read_samples(cfg.unified);
        std::map<std::string, const UnifiedSample*> by_id;
        for (const auto& s : samples) by_id.emplace(s.sample_id, &s);
        auto preds = parse_predictions(read_file(cfg.predictions), cfg.predictions.string());
        std::optional<std::map<std::string, std::vector<double>>> embeddings;
        if (!cfg.embeddings.empty()) embeddings = parse_embeddings(read_file(cfg.embeddings), cfg.embeddings.string());

        std::vector<std::pair<const UnifiedSample*, const PredictionRecord*>> jobs;
        std::vector<std::string> unresolved;
        for (const auto& p : preds.records) {
            auto it = by_id.find(p.sample_id);
            if (it == by_id.end()) unresolved.push_back(p.sample_id);
            else jobs.emplace_back(it->second, &p);
        }
        std::sort(unresolved.begin(), unresolved.end());

        CommandResult r;
        Json& rep = r.report;
        rep["schema_version"] = kReportSchemaVersion;
        rep["command"] = "score";
        rep["config"] = cfg.metrics.to_json();
        rep["config_digest"] = cfg.metrics.digest();
        rep["counts"] = {{"samples", samples.size()},
                         {"predictions", preds.records.size()},
                         {"duplicate_predictions", preds.duplicate_ids.size()},
                         {"scored", jobs.size()},
                         {"unresolved", unresolved.size()},
                         {"unpredicted", samples.size() - jobs.size()}};
        rep["unresolved_ids"] = unresolved;
        if (jobs.empty()) {
            r.exit_code = kExitIoOrConfig;
            r.summary = "error: no prediction matched a sample (" + std::to_string(unresolved.size()) + " unresolved)";
            rep["error"] = "no prediction matched a sample";
            return r;
        }

        std::vector<SampleScore> rows(jobs.size());
        const auto* emb = embeddings ? &*embeddings : nullptr;
        parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
            rows[k] = score_prediction(*jobs[k].first, jobs[k].second->raw_output, cfg.metrics, emb);
        });
        const MetricReport report = aggregate(std::move(rows), cfg.metrics);

        std::map<std::pair<std::string, std::string>, std::vector<SampleScore>> grouped;
        for (const auto& s : report.per_sample) grouped[{s.dataset, s.split}].push_back(s);
        std::vector<std::pair<std::pair<std::string, std::string>, std::pair<std::size_t, AggregateScores>>> groups;
        Json group_json = Json::array();
        for (const auto& [key, list] : grouped) {
            auto agg = mean_scores(list);
            groups.push_back({key, {list.size(), agg}});
            group_json.push_back({{"dataset", key.first}, {"split", key.second}, {"n", list.size()},
                                  {"aggregate", to_json(agg)}});
        }
        rep["n_scored"] = report.n_scored;
        rep["groups"] = group_json;
        rep["aggregate"] = to_json(report.aggregate);
        Json per = Json::array();
        for (const auto& s : report.per_sample) per.push_back(to_json(s));
        rep["per_sample"] = per;

        const std::string table = render_score_table(groups, report.config_digest);
        const fs::path json_path = cfg.out_dir / "report.json";
        const fs::path text_path = cfg.out_dir / "report.txt";
        write_file_atomic(json_path, rep.dump(2, ' ', false, Json::error_handler_t::replace) + "\n");
        write_file_atomic(text_path, table);
        r.written = {json_path, text_path};
        r.summary = table;
        if (!unresolved.empty()) r.summary += "warning: " + std::to_string(unresolved.size()) + " unresolved prediction ids\n";
        if (cfg.fail_below && report.aggregate.em * 100.0 < *cfg.fail_below) {
            r.exit_code = kExitBelowThreshold;
            r.summary += "EM below --fail-below threshold\n";
        }
        return r;
    });
}

} // namespace cotkit

#endif
