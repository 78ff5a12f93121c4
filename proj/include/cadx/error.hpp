#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cadx {

enum class ErrorCode {
    InvalidArgument,
    // ingest
    FileNotFound,
    MalformedRecord,
    DuplicateCaseId,
    BadFractions,
    // imaging
    UnsupportedFormat,
    CorruptData,
    DimensionMismatch,
    EmptyMask,
    // risk
    TableFeatureMissing,
    SingleClassTrainingSet,
    NonFiniteLoss,
    FeatureDimensionMismatch,
    UnknownFeature,
    UnknownRegion,
    // explain
    UnrecognizedQuery,
    InvalidSessionState,
    EmptyCandidate,
    // arbitration
    UnknownCase,
    FeatureExtractionFailed,
    BlindedAccess,
    InvalidState,
    WrongAuthor,
    MustInterrogate,
    // stats
    DegenerateLabels,
    LengthMismatch,
    TooFewCases,
    ZeroDenominator,
    // readersim
    MissingPathology,
    InfeasibleParameters,
    // service
    EmptyStudy,
    IoError,
    CorruptLogLine,
    SequenceGap,
    PortUnavailable,
    BadConfig,
    NotFound,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::DuplicateCaseId: return "DuplicateCaseId";
        case ErrorCode::BadFractions: return "BadFractions";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::CorruptData: return "CorruptData";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::TableFeatureMissing: return "TableFeatureMissing";
        case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::FeatureDimensionMismatch: return "FeatureDimensionMismatch";
        case ErrorCode::UnknownFeature: return "UnknownFeature";
        case ErrorCode::UnknownRegion: return "UnknownRegion";
        case ErrorCode::UnrecognizedQuery: return "UnrecognizedQuery";
        case ErrorCode::InvalidSessionState: return "InvalidSessionState";
        case ErrorCode::EmptyCandidate: return "EmptyCandidate";
        case ErrorCode::UnknownCase: return "UnknownCase";
        case ErrorCode::FeatureExtractionFailed: return "FeatureExtractionFailed";
        case ErrorCode::BlindedAccess: return "BlindedAccess";
        case ErrorCode::InvalidState: return "InvalidState";
        case ErrorCode::WrongAuthor: return "WrongAuthor";
        case ErrorCode::MustInterrogate: return "MustInterrogate";
        case ErrorCode::DegenerateLabels: return "DegenerateLabels";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewCases: return "TooFewCases";
        case ErrorCode::ZeroDenominator: return "ZeroDenominator";
        case ErrorCode::MissingPathology: return "MissingPathology";
        case ErrorCode::InfeasibleParameters: return "InfeasibleParameters";
        case ErrorCode::EmptyStudy: return "EmptyStudy";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::CorruptLogLine: return "CorruptLogLine";
        case ErrorCode::SequenceGap: return "SequenceGap";
        case ErrorCode::PortUnavailable: return "PortUnavailable";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::NotFound: return "NotFound";
    }
    return "Unknown";
}

/// Single exception type for the library. `code()` identifies the failure;
/// `line()` is set for file-format errors (1-based, 0 when not applicable)
/// and `detail()` carries a machine-usable payload such as the offending id
/// or a suggested correction.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::size_t line = 0, std::string detail = {})
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code),
          line_(line),
          detail_(std::move(detail)) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::size_t line_;
    std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message, std::size_t line = 0,
                              std::string detail = {}) {
    throw Error(code, message, line, std::move(detail));
}

}  // namespace cadx
