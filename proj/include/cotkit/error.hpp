#ifndef COTKIT_ERROR_HPP
#define COTKIT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace cotkit {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Parse,
    EmptyAnswerList,
    QuestionAnnotationMismatch,
    MalformedRecord,
    ChoiceIndexOutOfRange,
    EmptyChoices,
    MalformedFeature,
    MalformedTable,
    NoUsableTemplate,
    MissingImageFile,
    TooManyChoices,
    NoLetterFound,
    EmptyExtraction,
    NoNumberFound,
    DimensionMismatch,
    ZeroVector,
    EmptyReport,
    ShapeMismatch,
    TapeMismatch,
    StepOutOfRange,
    NonMonotonicStep,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::EmptyAnswerList: return "EmptyAnswerList";
    case ErrorCode::QuestionAnnotationMismatch: return "QuestionAnnotationMismatch";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::ChoiceIndexOutOfRange: return "ChoiceIndexOutOfRange";
    case ErrorCode::EmptyChoices: return "EmptyChoices";
    case ErrorCode::MalformedFeature: return "MalformedFeature";
    case ErrorCode::MalformedTable: return "MalformedTable";
    case ErrorCode::NoUsableTemplate: return "NoUsableTemplate";
    case ErrorCode::MissingImageFile: return "MissingImageFile";
    case ErrorCode::TooManyChoices: return "TooManyChoices";
    case ErrorCode::NoLetterFound: return "NoLetterFound";
    case ErrorCode::EmptyExtraction: return "EmptyExtraction";
    case ErrorCode::NoNumberFound: return "NoNumberFound";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::NonMonotonicStep: return "NonMonotonicStep";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cotkit

#endif
