#ifndef COTKIT_EXTRACTION_HPP
#define COTKIT_EXTRACTION_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

enum class ExtractionRule { mcq_letter, anchored_open, last_numeric, whole_output };

inline std::string_view to_string(ExtractionRule r) {
    switch (r) {
    case ExtractionRule::mcq_letter: return "mcq_letter";
    case ExtractionRule::anchored_open: return "anchored_open";
    case ExtractionRule::last_numeric: return "last_numeric";
    case ExtractionRule::whole_output: return "whole_output";
    }
    return "";
}

/// Anchor phrases are matched case-insensitively. Bump `version` whenever
/// the list changes; it feeds the report's config digest.
struct AnchorConfig {
    std::string version = "anchors-v1";
    std::vector<std::string> anchors = {"the answer is", "final answer:", "final answer is", "answer:"};
};

inline const AnchorConfig& default_anchors() {
    static const AnchorConfig cfg;
    return cfg;
}

struct PredictionRecord {
    std::string sample_id;
    std::string raw_output;
    std::optional<std::string> extracted;
    std::optional<ExtractionRule> extraction_rule;

    void assign(std::string text, ExtractionRule rule) {
        extracted = std::move(text);
        extraction_rule = rule;
    }
};

namespace detail {

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline bool is_word_byte(char ch) {
    const auto c = static_cast<unsigned char>(ch);
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// End offset of the anchor occurrence that ends last (longest on ties).
inline std::optional<std::size_t> last_anchor_end(std::string_view text, const std::vector<std::string>& anchors) {
    const std::string lowered = ascii_lower(text);
    std::optional<std::size_t> best;
    for (const auto& anchor : anchors) {
        if (anchor.empty()) continue;
        const std::string a = ascii_lower(anchor);
        const std::size_t pos = lowered.rfind(a);
        if (pos == std::string::npos) continue;
        const std::size_t end = pos + a.size();
        if (!best || end > *best) best = end;
    }
    return best;
}

struct NumberToken {
    std::size_t begin = 0;
    std::size_t end = 0;
    double value = 0.0;
};

/// Scans decimal numbers with optional sign, thousands separators
/// (1,234,567), fraction and a trailing '%' (divides by 100).
inline std::vector<NumberToken> scan_numbers(std::string_view s) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        bool negative = false;
        if (s[i] == '-' && (i == 0 || !is_word_byte(s[i - 1])) && i + 1 < s.size() &&
            (is_digit(s[i + 1]) || (s[i + 1] == '.' && i + 2 < s.size() && is_digit(s[i + 2])))) {
            negative = true;
            ++i;
        }
        const bool starts_number =
            i < s.size() && (is_digit(s[i]) || (s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1]) &&
                                                (i == 0 || !is_digit(s[i - 1]))));
        if (!starts_number) {
            i = start + 1;
            continue;
        }
        std::string digits;
        if (negative) digits += '-';
        std::size_t run = 0;
        while (i < s.size() && is_digit(s[i])) {
            digits += s[i++];
            ++run;
        }
        if (run >= 1 && run <= 3) {
            while (i + 3 < s.size() && s[i] == ',' && is_digit(s[i + 1]) && is_digit(s[i + 2]) &&
                   is_digit(s[i + 3]) && (i + 4 >= s.size() || !is_digit(s[i + 4]))) {
                digits.append(s.substr(i + 1, 3));
                i += 4;
            }
        }
        if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
            digits += s[i++];
            while (i < s.size() && is_digit(s[i])) digits += s[i++];
        }
        if (digits == "-" || digits.empty()) {
            i = start + 1;
            continue;
        }
        if (digits.front() == '.' || (digits.size() > 1 && digits[0] == '-' && digits[1] == '.')) {
            digits.insert(digits.front() == '-' ? 1 : 0, "0");
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec != std::errc()) {
            i = start + 1;
            continue;
        }
        if (i < s.size() && s[i] == '%') {
            value /= 100.0;
            ++i;
        }
        out.push_back({start, i, value});
    }
    return out;
}

inline const std::array<std::pair<std::string_view, std::string_view>, 28>& number_words() {
    static const std::array<std::pair<std::string_view, std::string_view>, 28> table = {{
        {"zero", "0"},      {"one", "1"},        {"two", "2"},       {"three", "3"},     {"four", "4"},
        {"five", "5"},      {"six", "6"},        {"seven", "7"},     {"eight", "8"},     {"nine", "9"},
        {"ten", "10"},      {"eleven", "11"},    {"twelve", "12"},   {"thirteen", "13"}, {"fourteen", "14"},
        {"fifteen", "15"},  {"sixteen", "16"},   {"seventeen", "17"}, {"eighteen", "18"}, {"nineteen", "19"},
        {"twenty", "20"},   {"thirty", "30"},    {"forty", "40"},    {"fifty", "50"},    {"sixty", "60"},
        {"seventy", "70"},  {"eighty", "80"},    {"ninety", "90"},
    }};
    return table;
}

/// Replaces whole-word number words (zero..twenty, thirty..ninety) with digits.
inline std::string replace_number_words(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_word_byte(s[i])) {
            out += s[i++];
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_word_byte(s[j])) ++j;
        const std::string word = ascii_lower(s.substr(i, j - i));
        std::string_view replacement;
        for (const auto& [w, digits] : number_words()) {
            if (w == word) replacement = digits;
        }
        if (replacement.empty()) out.append(s.substr(i, j - i));
        else out.append(replacement);
        i = j;
    }
    return out;
}

inline std::size_t sentence_end(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '\n' || c == '!' || c == '?') return i;
        if (c == '.' && (i + 1 == s.size() || is_ascii_space(static_cast<unsigned char>(s[i + 1])))) return i;
    }
    return s.size();
}

} // namespace detail

/// Index of the first standalone choice letter, searching after the last
/// "The answer is" when present. Uppercase and parenthesized letters always
/// count; a lowercase letter counts only when it is the final word, so the
/// article in "is a fire hydrant" is not read as (A).
inline std::size_t extract_mcq(std::string_view raw, std::size_t n_choices) {
    if (n_choices < 2 || n_choices > 26) {
        throw Error(ErrorCode::InvalidArgument, "n_choices must be in [2, 26]");
    }
    const std::size_t from = detail::last_anchor_end(raw, {"the answer is"}).value_or(0);
    for (std::size_t i = from; i < raw.size(); ++i) {
        const char c = raw[i];
        const bool lower = c >= 'a' && c <= 'z';
        const char upper = lower ? static_cast<char>(c - 'a' + 'A') : c;
        if (upper < 'A' || upper >= static_cast<char>('A' + n_choices)) continue;
        const bool left_ok = i == 0 || !detail::is_word_byte(raw[i - 1]);
        const bool right_ok = i + 1 == raw.size() || !detail::is_word_byte(raw[i + 1]);
        if (!left_ok || !right_ok) continue;
        const bool parenthesized = i > 0 && raw[i - 1] == '(' && i + 1 < raw.size() && raw[i + 1] == ')';
        const bool last_word = std::none_of(raw.begin() + static_cast<std::ptrdiff_t>(i) + 1, raw.end(),
                                            [](char ch) { return detail::is_word_byte(ch); });
        if (!lower || parenthesized || last_word) return static_cast<std::size_t>(upper - 'A');
    }
    throw Error(ErrorCode::NoLetterFound, "no choice letter A-" + std::string(1, static_cast<char>('A' + n_choices - 1)));
}

struct OpenExtraction {
    std::string text;
    ExtractionRule rule = ExtractionRule::whole_output;
};

/// Span after the last anchor up to the first sentence terminator, or the
/// first line when no anchor occurs; normalized.
inline OpenExtraction extract_open_detailed(std::string_view raw, const AnchorConfig& cfg = default_anchors()) {
    OpenExtraction out;
    std::string_view span;
    if (auto end = detail::last_anchor_end(raw, cfg.anchors)) {
        span = raw.substr(*end);
        span = span.substr(0, detail::sentence_end(span));
        out.rule = ExtractionRule::anchored_open;
    } else {
        span = raw.substr(0, std::min(raw.find('\n'), raw.size()));
        out.rule = ExtractionRule::whole_output;
    }
    out.text = normalize(span).text;
    // Normalization can splice an anchor back together (e.g. "the answer, is").
    std::vector<std::string> normalized_anchors;
    for (const auto& a : cfg.anchors) {
        auto n = normalize(a).text;
        if (!n.empty() && n == detail::ascii_lower(a)) normalized_anchors.push_back(std::move(n));
    }
    while (auto end = detail::last_anchor_end(out.text, normalized_anchors)) {
        out.text = normalize(std::string_view(out.text).substr(*end)).text;
    }
    if (out.text.empty()) throw Error(ErrorCode::EmptyExtraction, "nothing left after extraction");
    return out;
}

inline std::string extract_open(std::string_view raw, const AnchorConfig& cfg = default_anchors()) {
    return extract_open_detailed(raw, cfg).text;
}

struct NumericExtraction {
    double value = 0.0;
    ExtractionRule rule = ExtractionRule::last_numeric;
};

/// First number after the last anchor when both exist, otherwise the last
/// number in the output. Number words are mapped to digits first.
inline NumericExtraction extract_numeric_detailed(std::string_view raw, const AnchorConfig& cfg = default_anchors()) {
    const std::string text = detail::replace_number_words(raw);
    const auto tokens = detail::scan_numbers(text);
    if (tokens.empty()) throw Error(ErrorCode::NoNumberFound, "no numeric token in output");
    if (auto end = detail::last_anchor_end(text, cfg.anchors)) {
        for (const auto& t : tokens) {
            if (t.begin >= *end) return {t.value, ExtractionRule::anchored_open};
        }
    }
    return {tokens.back().value, ExtractionRule::last_numeric};
}

inline double extract_numeric(std::string_view raw, const AnchorConfig& cfg = default_anchors()) {
    return extract_numeric_detailed(raw, cfg).value;
}

/// A ground-truth answer counts as numeric only if, after trimming and an
/// optional final '.', it is exactly one number token ("7", "0.5", "3%").
inline std::optional<double> parse_numeric_answer(std::string_view s) {
    while (!s.empty() && is_ascii_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && (is_ascii_space(static_cast<unsigned char>(s.back())) || s.back() == '.')) s.remove_suffix(1);
    const auto tokens = detail::scan_numbers(s);
    if (tokens.size() == 1 && tokens[0].begin == 0 && tokens[0].end == s.size()) return tokens[0].value;
    return std::nullopt;
}

struct PredictionLoad {
    std::vector<PredictionRecord> records;
    std::vector<std::string> duplicate_ids; // later lines dropped
};

/// JSON-lines {sample_id, output}; unknown fields are ignored.
inline PredictionLoad parse_predictions(std::string_view text, const std::string& origin = "predictions") {
    PredictionLoad out;
    std::set<std::string> ids;
    for_each_jsonl(text, origin, [&](std::size_t line, const Json& j) {
        const std::string where = origin + ":" + std::to_string(line);
        if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, where + ": expected an object");
        PredictionRecord r;
        r.sample_id = detail::text_field(j, "sample_id", where);
        r.raw_output = detail::text_field(j, "output", where);
        if (r.sample_id.empty()) throw Error(ErrorCode::MalformedRecord, where + ": missing sample_id");
        if (!j.contains("output")) throw Error(ErrorCode::MalformedRecord, where + ": missing output");
        if (!ids.insert(r.sample_id).second) {
            out.duplicate_ids.push_back(r.sample_id);
            return;
        }
        out.records.push_back(std::move(r));
    });
    return out;
}

} // namespace cotkit

#endif
