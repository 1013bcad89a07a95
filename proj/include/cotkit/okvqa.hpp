#ifndef COTKIT_OKVQA_HPP
#define COTKIT_OKVQA_HPP

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

/// Raw multi-annotator answers for one question plus the majority answer.
struct AnnotatedAnswerSet {
    std::string question_id;
    std::vector<std::string> answers;
    std::string canonical;
    std::map<std::string, std::size_t> counts; // keyed by normalized text
};

/// Picks the most frequent normalized answer. Ties go to the
/// lexicographically smallest normalized string (std::map iterates in
/// that order, and only a strictly larger count displaces the leader).
inline AnnotatedAnswerSet majority_vote(const std::vector<std::string>& answers,
                                        std::string question_id = {}) {
    if (answers.empty()) {
        throw Error(ErrorCode::EmptyAnswerList,
                    question_id.empty() ? "no answers" : "no answers for question " + question_id);
    }
    AnnotatedAnswerSet out;
    out.question_id = std::move(question_id);
    out.answers = answers;
    for (const auto& a : answers) {
        ++out.counts[normalize(a).text];
    }
    std::size_t best = 0;
    for (const auto& [text, n] : out.counts) {
        if (n > best) {
            best = n;
            out.canonical = text;
        }
    }
    return out;
}

/// Average annotator answers per question, per split.
inline double expected_average_answers(Split split) {
    switch (split) {
    case Split::train: return 8.7;
    case Split::val: return 8.6;
    case Split::test: return 8.5;
    }
    return 0.0;
}

/// Reference question counts for the full OK-VQA splits.
inline std::size_t expected_question_count(Split split) {
    switch (split) {
    case Split::train: return 9793;
    case Split::val: return 2512;
    case Split::test: return 2483;
    }
    return 0;
}

inline std::string coco_image_ref(Split split, long long image_id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "COCO_%s2014_%012lld.jpg", std::string(to_string(split)).c_str(),
                  image_id);
    return buf;
}

struct OkvqaIngest {
    std::vector<UnifiedSample> samples;
    std::vector<std::string> missing_annotation; // question ids without annotations
    std::vector<std::string> orphan_annotation;  // annotation ids without questions
    std::vector<std::string> warnings;
    double average_answers = 0.0;

    std::size_t mismatches() const { return missing_annotation.size() + orphan_annotation.size(); }
};

namespace detail {

inline std::string id_string(const Json& v, const std::string& where) {
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_string()) return v.get<std::string>();
    throw Error(ErrorCode::MalformedRecord, where + ": id must be an integer or string");
}

inline const Json& array_member(const Json& doc, const char* key, const std::string& origin) {
    if (!doc.is_object() || !doc.contains(key) || !doc[key].is_array()) {
        throw Error(ErrorCode::MalformedRecord,
                    origin + ": expected an object with a '" + key + "' array");
    }
    return doc[key];
}

} // namespace detail

/// Joins questions and annotations. Unmatched ids on either side are
/// collected rather than raised; structurally broken records throw
/// MalformedRecord naming the offending index.
inline OkvqaIngest ingest_okvqa(const Json& questions_doc, const Json& annotations_doc, Split split) {
    const Json& questions = detail::array_member(questions_doc, "questions", "questions");
    const Json& annotations = detail::array_member(annotations_doc, "annotations", "annotations");

    std::unordered_map<std::string, std::vector<std::string>> answers_by_id;
    answers_by_id.reserve(annotations.size());
    std::vector<std::string> annotation_order;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const Json& rec = annotations[i];
        const std::string where = "annotations[" + std::to_string(i) + "]";
        if (!rec.is_object() || !rec.contains("question_id") || !rec.contains("answers") ||
            !rec["answers"].is_array()) {
            throw Error(ErrorCode::MalformedRecord, where + ": needs question_id and answers[]");
        }
        std::string qid = detail::id_string(rec["question_id"], where);
        std::vector<std::string> answers;
        for (const auto& a : rec["answers"]) {
            if (a.is_object() && a.contains("answer") && a["answer"].is_string()) {
                answers.push_back(a["answer"].get<std::string>());
            } else if (a.is_string()) {
                answers.push_back(a.get<std::string>());
            } else {
                throw Error(ErrorCode::MalformedRecord, where + ": answers[*].answer must be a string");
            }
        }
        if (!answers_by_id.emplace(qid, std::move(answers)).second) {
            throw Error(ErrorCode::MalformedRecord, where + ": duplicate question_id " + qid);
        }
        annotation_order.push_back(std::move(qid));
    }

    OkvqaIngest out;
    out.samples.reserve(questions.size());
    std::unordered_set<std::string> seen;
    std::size_t total_answers = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const Json& rec = questions[i];
        const std::string where = "questions[" + std::to_string(i) + "]";
        if (!rec.is_object() || !rec.contains("question_id") || !rec.contains("image_id") ||
            !rec.contains("question") || !rec["question"].is_string() ||
            !rec["image_id"].is_number_integer()) {
            throw Error(ErrorCode::MalformedRecord,
                        where + ": needs question_id, integer image_id and question");
        }
        std::string qid = detail::id_string(rec["question_id"], where);
        if (!seen.insert(qid).second) {
            throw Error(ErrorCode::MalformedRecord, where + ": duplicate question_id " + qid);
        }
        auto it = answers_by_id.find(qid);
        if (it == answers_by_id.end()) {
            out.missing_annotation.push_back(qid);
            continue;
        }
        if (it->second.empty()) {
            throw Error(ErrorCode::MalformedRecord, where + ": question " + qid + " has no answers");
        }
        auto vote = majority_vote(it->second, qid);
        total_answers += it->second.size();

        UnifiedSample s;
        s.sample_id = qid;
        s.dataset = Dataset::okvqa;
        s.split = split;
        s.question = rec["question"].get<std::string>();
        s.answer = vote.canonical;
        s.raw_answers = std::move(vote.answers);
        s.image_ref = coco_image_ref(split, rec["image_id"].get<long long>());
        out.samples.push_back(std::move(s));
    }
    for (const auto& qid : annotation_order) {
        if (!seen.count(qid)) out.orphan_annotation.push_back(qid);
    }

    if (!out.samples.empty()) {
        out.average_answers = static_cast<double>(total_answers) / static_cast<double>(out.samples.size());
        const double expected = expected_average_answers(split);
        if (std::abs(out.average_answers - expected) > 0.2 * expected) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "average answers per question %.2f differs from the reference %.1f by more than 20%%",
                          out.average_answers, expected);
            out.warnings.emplace_back(buf);
        }
    }
    return out;
}

/// Strict loader: any question/annotation id mismatch is an error.
inline std::vector<UnifiedSample> load_okvqa(const Json& questions_doc, const Json& annotations_doc,
                                             Split split) {
    auto result = ingest_okvqa(questions_doc, annotations_doc, split);
    if (!result.missing_annotation.empty()) {
        throw Error(ErrorCode::QuestionAnnotationMismatch,
                    "question " + result.missing_annotation.front() + " has no annotation");
    }
    if (!result.orphan_annotation.empty()) {
        throw Error(ErrorCode::QuestionAnnotationMismatch,
                    "annotation " + result.orphan_annotation.front() + " has no question");
    }
    return std::move(result.samples);
}

} // namespace cotkit

#endif
