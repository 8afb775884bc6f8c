#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqembed {

enum class ErrorKind {
    InvalidArgument,
    Unserializable,
    Io,
    BadMagic,
    BadVersion,
    Truncated,
    NonFinite,
    Parse,
    RaggedRows,
    UndefinedIndex,
    DegenerateCentroid,
    Structural,
    DuplicateName,
    Alignment,
    NumericalFailure,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:    return "invalid argument";
        case ErrorKind::Unserializable:     return "unserializable";
        case ErrorKind::Io:                 return "i/o error";
        case ErrorKind::BadMagic:           return "bad magic";
        case ErrorKind::BadVersion:         return "bad version";
        case ErrorKind::Truncated:          return "truncated payload";
        case ErrorKind::NonFinite:          return "non-finite value";
        case ErrorKind::Parse:              return "parse error";
        case ErrorKind::RaggedRows:         return "ragged rows";
        case ErrorKind::UndefinedIndex:     return "undefined index";
        case ErrorKind::DegenerateCentroid: return "degenerate centroid";
        case ErrorKind::Structural:         return "structural mismatch";
        case ErrorKind::DuplicateName:      return "duplicate name";
        case ErrorKind::Alignment:          return "alignment error";
        case ErrorKind::NumericalFailure:   return "numerical failure";
    }
    return "unknown";
}

// Every failure in the library surfaces as this exception; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string & message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string & message) {
    throw Error(kind, message);
}

} // namespace seqembed
