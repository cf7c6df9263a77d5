#include "relunlearn/error.hpp"

namespace relunlearn {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid-argument";
        case ErrorCode::kMissingField: return "missing-field";
        case ErrorCode::kDuplicateLabel: return "duplicate-label";
        case ErrorCode::kInvalidGraph: return "invalid-graph";
        case ErrorCode::kParse: return "parse-error";
        case ErrorCode::kUnknownTag: return "unknown-tag";
        case ErrorCode::kEmptySet: return "empty-set";
        case ErrorCode::kMissingRole: return "missing-role";
        case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
        case ErrorCode::kDegenerateOutput: return "degenerate-output";
        case ErrorCode::kInvalidRank: return "invalid-rank";
        case ErrorCode::kNonFinite: return "non-finite";
        case ErrorCode::kBatchTooLarge: return "batch-too-large";
        case ErrorCode::kCorruptFile: return "corrupt-file";
        case ErrorCode::kVersionMismatch: return "version-mismatch";
        case ErrorCode::kIo: return "io-error";
    }
    return "unknown";
}

namespace {

std::string format_parse_message(std::size_t line, const std::string& field,
                                 const std::string& message) {
    std::string out = "parse error";
    if (line > 0) out += " at line " + std::to_string(line);
    if (!field.empty()) out += " (field '" + field + "')";
    out += ": " + message;
    return out;
}

}  // namespace

ParseError::ParseError(std::size_t line, std::string field, const std::string& message)
    : Error(ErrorCode::kParse, format_parse_message(line, field, message)),
      line_(line),
      field_(std::move(field)) {}

}  // namespace relunlearn
