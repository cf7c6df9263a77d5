#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relunlearn {

enum class ErrorCode {
    kInvalidArgument,
    kMissingField,
    kDuplicateLabel,
    kInvalidGraph,
    kParse,
    kUnknownTag,
    kEmptySet,
    kMissingRole,
    kDimensionMismatch,
    kDegenerateOutput,
    kInvalidRank,
    kNonFinite,
    kBatchTooLarge,
    kCorruptFile,
    kVersionMismatch,
    kIo,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Parse failures carry a 1-based line (0 when unknown) and the offending field path.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string field, const std::string& message);

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

}  // namespace relunlearn
