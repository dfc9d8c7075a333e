#pragma once

#include <stdexcept>
#include <string>

namespace ctiforge {

enum class ErrorCode {
    FileNotFound,
    EmptyDocument,
    FixtureMiss,
    ProviderError,
    EmptyText,
    DimensionMismatch,
    ZeroVector,
    EmptyStore,
    UnsupportedType,
    InvalidArgument,
    ConfigError,
    IoError,
    ParseError,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the core library. The C API maps `code()` onto
/// its status enum, so new codes need a mapping there as well.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ctiforge
