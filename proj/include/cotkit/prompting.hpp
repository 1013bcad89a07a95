#ifndef COTKIT_PROMPTING_HPP
#define COTKIT_PROMPTING_HPP

#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"

namespace cotkit {

inline constexpr std::string_view kStage1Instruction = "Generate the rationale:";
inline constexpr std::string_view kChartInstruction =
    "Explain your reasoning step-by-step and then provide the final answer.";
inline constexpr std::string_view kAnswerCue = "The answer is";
inline constexpr std::string_view kImageMarker = "<image>";
inline constexpr std::string_view kRationaleSlot = "{rationale}";
inline constexpr std::size_t kMaxChoices = 26;

/// 0 -> "(A)", 1 -> "(B)", ...
inline std::string choice_label(std::size_t index) {
    if (index >= kMaxChoices) {
        throw Error(ErrorCode::TooManyChoices, "choice index " + std::to_string(index) + " has no letter");
    }
    return std::string("(") + static_cast<char>('A' + index) + ")";
}

/// Inverse of choice_label; also accepts a bare or lowercase letter.
inline std::optional<std::size_t> parse_choice_label(std::string_view s) {
    if (s.size() == 3 && s.front() == '(' && s.back() == ')') s = s.substr(1, 1);
    if (s.size() != 1) return std::nullopt;
    char c = s[0];
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    if (c < 'A' || c > 'Z') return std::nullopt;
    return static_cast<std::size_t>(c - 'A');
}

namespace detail {

// Everything above the stage-specific tail: question, caption, then either
// the image marker (charts) or the lettered options (MCQ).
inline std::string prompt_head(const UnifiedSample& s) {
    if (s.choices.size() > kMaxChoices) {
        throw Error(ErrorCode::TooManyChoices, s.sample_id + " has " + std::to_string(s.choices.size()) + " choices");
    }
    std::string out = "Question: " + s.question;
    if (!s.caption.empty()) {
        out += "\nCaption: ";
        out += s.caption;
    }
    if (s.dataset == Dataset::chartqa) {
        out += "\nImage: ";
        out += kImageMarker;
    }
    if (!s.choices.empty()) {
        out += "\nOptions:";
        for (std::size_t i = 0; i < s.choices.size(); ++i) {
            out += '\n';
            out += choice_label(i);
            out += ' ';
            out += s.choices[i];
        }
    }
    return out;
}

} // namespace detail

/// Rationale-generation input. Lines are joined with a single '\n' and the
/// prompt has no trailing newline.
inline std::string build_stage1_prompt(const UnifiedSample& s) {
    std::string out = detail::prompt_head(s);
    out += '\n';
    out += s.dataset == Dataset::chartqa ? kChartInstruction : kStage1Instruction;
    return out;
}

/// Answer-inference input: the stage-1 head, the rationale line, then the
/// answer cue. An empty rationale still emits "Rationale: ".
inline std::string build_stage2_prompt(const UnifiedSample& s, std::string_view rationale) {
    std::string out = detail::prompt_head(s);
    out += "\nRationale: ";
    out += rationale;
    out += '\n';
    out += kAnswerCue;
    return out;
}

struct PromptPair {
    std::string sample_id;
    std::string stage1_input;
    std::string stage2_input_template; // contains kRationaleSlot exactly once at rationale_offset
    std::size_t rationale_offset = 0;

    std::string stage2_input(std::string_view rationale) const {
        std::string out = stage2_input_template;
        out.replace(rationale_offset, kRationaleSlot.size(), rationale);
        return out;
    }
};

inline PromptPair build_prompt_pair(const UnifiedSample& s) {
    PromptPair p;
    p.sample_id = s.sample_id;
    p.stage1_input = build_stage1_prompt(s);
    std::string empty = build_stage2_prompt(s, "");
    p.rationale_offset = empty.size() - kAnswerCue.size() - 1;
    p.stage2_input_template = empty.insert(p.rationale_offset, kRationaleSlot);
    return p;
}

/// One prompt-dump JSONL row. `stage2` is filled only when a rationale is
/// supplied (ground truth or externally generated).
inline Json prompt_dump_row(const PromptPair& p, const std::optional<std::string>& rationale) {
    Json j = Json::object();
    j["sample_id"] = p.sample_id;
    j["stage1"] = p.stage1_input;
    j["stage2_template"] = p.stage2_input_template;
    if (rationale) j["stage2"] = p.stage2_input(*rationale);
    return j;
}

} // namespace cotkit

#endif
