#ifndef COTKIT_SCHEMA_HPP
#define COTKIT_SCHEMA_HPP

#include <algorithm>
#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace cotkit {

enum class Dataset { okvqa, aokvqa, chartqa };
enum class Split { train, val, test };

inline std::string_view to_string(Dataset d) {
    switch (d) {
    case Dataset::okvqa: return "okvqa";
    case Dataset::aokvqa: return "aokvqa";
    case Dataset::chartqa: return "chartqa";
    }
    return "";
}

inline std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "";
}

inline Dataset parse_dataset(std::string_view s) {
    if (s == "okvqa") return Dataset::okvqa;
    if (s == "aokvqa") return Dataset::aokvqa;
    if (s == "chartqa") return Dataset::chartqa;
    throw Error(ErrorCode::InvalidArgument, "unknown dataset '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val" || s == "validation") return Split::val;
    if (s == "test") return Split::test;
    throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(s) + "'");
}

/// One QA instance in the harmonized ScienceQA-style layout. An empty
/// `choices` list marks an open-ended question; an empty `caption` means
/// no caption is available.
struct UnifiedSample {
    std::string sample_id;
    Dataset dataset = Dataset::okvqa;
    Split split = Split::train;
    std::string question;
    std::vector<std::string> choices;
    std::string answer;
    std::vector<std::string> raw_answers;
    std::string image_ref;
    std::string caption;
    std::vector<std::string> rationales;
    std::string hint;
    std::string lecture;
    std::string solution;

    bool is_open_ended() const { return choices.empty(); }

    friend bool operator==(const UnifiedSample&, const UnifiedSample&) = default;
};

struct NormalizedAnswer {
    std::string text;
    std::vector<std::string> tokens;

    friend bool operator==(const NormalizedAnswer&, const NormalizedAnswer&) = default;
};

// !"#$%&'()*+,-./ :;<=>?@ [\]^_` {|}~
inline bool is_ascii_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
           (c >= 123 && c <= 126);
}

inline bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Lowercases ASCII letters, drops ASCII punctuation, collapses whitespace
/// runs to one space and trims. Bytes >= 0x80 pass through untouched.
inline NormalizedAnswer normalize(std::string_view a) {
    NormalizedAnswer out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            if (!out.text.empty()) out.text += ' ';
            out.text += current;
            out.tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : a) {
        auto c = static_cast<unsigned char>(ch);
        if (is_ascii_space(c)) {
            flush();
        } else if (is_ascii_punct(c)) {
            continue;
        } else if (c < 0x80) {
            current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
        } else {
            current += ch;
        }
    }
    flush();
    return out;
}

/// Resolves an MCQ answer (either a choice string or a zero-based index
/// rendered as decimal) to its position in `choices`.
inline std::optional<std::size_t> resolve_answer_index(const std::vector<std::string>& choices,
                                                       std::string_view answer) {
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (choices[i] == answer) return i;
    }
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(answer.data(), answer.data() + answer.size(), idx);
    if (ec == std::errc() && ptr == answer.data() + answer.size() && !answer.empty() &&
        idx < choices.size()) {
        return idx;
    }
    return std::nullopt;
}

struct Violation {
    std::string field;
    std::string rule;

    std::string describe() const { return field + ": " + rule; }
    friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::vector<Violation> validate_sample(const UnifiedSample& s) {
    std::vector<Violation> out;
    if (s.sample_id.empty()) {
        out.push_back({"sample_id", "must be non-empty"});
    }
    if (!s.choices.empty() && !resolve_answer_index(s.choices, s.answer)) {
        out.push_back({"answer", "must equal one of choices or be a valid zero-based index into them"});
    }
    return out;
}

/// Collection-level checks: per-sample rules plus sample_id uniqueness
/// within each (dataset, split) pair.
inline std::vector<Violation> validate_samples(const std::vector<UnifiedSample>& samples) {
    std::vector<Violation> out;
    std::set<std::tuple<Dataset, Split, std::string>> seen;
    for (const auto& s : samples) {
        for (auto& v : validate_sample(s)) {
            v.rule = "[" + s.sample_id + "] " + v.rule;
            out.push_back(std::move(v));
        }
        if (!seen.emplace(s.dataset, s.split, s.sample_id).second) {
            out.push_back({"sample_id", "duplicate id '" + s.sample_id + "' within " +
                                            std::string(to_string(s.dataset)) + "/" +
                                            std::string(to_string(s.split))});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unified-schema JSON. Field order is fixed; every field is always written.

inline Json to_json(const UnifiedSample& s) {
    Json j = Json::object();
    j["question"] = s.question;
    j["choices"] = s.choices;
    j["answer"] = s.answer;
    j["image"] = s.image_ref;
    j["hint"] = s.hint;
    j["lecture"] = s.lecture;
    j["solution"] = s.solution;
    j["caption"] = s.caption;
    j["rationales"] = s.rationales;
    j["raw_answers"] = s.raw_answers;
    j["dataset"] = to_string(s.dataset);
    j["split"] = to_string(s.split);
    j["sample_id"] = s.sample_id;
    return j;
}

namespace detail {

inline std::string text_field(const Json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
    throw Error(ErrorCode::MalformedRecord, where + ": field '" + key + "' must be a string");
}

inline std::vector<std::string> text_list_field(const Json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_array()) {
        throw Error(ErrorCode::MalformedRecord, where + ": field '" + key + "' must be an array");
    }
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (v.is_string()) {
            out.push_back(v.get<std::string>());
        } else if (v.is_number()) {
            out.push_back(v.dump());
        } else {
            throw Error(ErrorCode::MalformedRecord, where + ": '" + key + "' entries must be strings");
        }
    }
    return out;
}

} // namespace detail

/// Missing optional fields materialize as "" or []; dataset, split and
/// sample_id are required.
inline UnifiedSample sample_from_json(const Json& j, const std::string& where = "sample") {
    if (!j.is_object()) {
        throw Error(ErrorCode::MalformedRecord, where + ": expected an object");
    }
    UnifiedSample s;
    s.question = detail::text_field(j, "question", where);
    s.choices = detail::text_list_field(j, "choices", where);
    s.answer = detail::text_field(j, "answer", where);
    s.image_ref = detail::text_field(j, "image", where);
    s.hint = detail::text_field(j, "hint", where);
    s.lecture = detail::text_field(j, "lecture", where);
    s.solution = detail::text_field(j, "solution", where);
    s.caption = detail::text_field(j, "caption", where);
    s.rationales = detail::text_list_field(j, "rationales", where);
    s.raw_answers = detail::text_list_field(j, "raw_answers", where);
    s.sample_id = detail::text_field(j, "sample_id", where);
    if (s.sample_id.empty()) {
        throw Error(ErrorCode::MalformedRecord, where + ": missing sample_id");
    }
    try {
        s.dataset = parse_dataset(detail::text_field(j, "dataset", where));
        s.split = parse_split(detail::text_field(j, "split", where));
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    }
    return s;
}

inline std::string serialize_samples(const std::vector<UnifiedSample>& samples) {
    Json arr = Json::array();
    for (const auto& s : samples) arr.push_back(to_json(s));
    return arr.dump(2, ' ', false, Json::error_handler_t::replace) + "\n";
}

inline std::vector<UnifiedSample> parse_samples(std::string_view text, const std::string& origin = "unified") {
    Json doc = parse_json(text, origin);
    if (!doc.is_array()) {
        throw Error(ErrorCode::Parse, origin + ": unified document must be a JSON array");
    }
    std::vector<UnifiedSample> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        out.push_back(sample_from_json(doc[i], origin + "[" + std::to_string(i) + "]"));
    }
    return out;
}

inline std::vector<UnifiedSample> read_samples(const fs::path& path) {
    return parse_samples(read_file(path), path.string());
}

inline void write_samples(const fs::path& path, const std::vector<UnifiedSample>& samples) {
    write_file_atomic(path, serialize_samples(samples));
}

} // namespace cotkit

#endif
