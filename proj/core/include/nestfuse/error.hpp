#pragma once

#include <stdexcept>
#include <string>

namespace nestfuse {

enum class ErrorKind {
    kInvalidReference,
    kFormat,
    kValidation,
    kConfig,
    kTraining,
    kInference,
    kUndefinedMetric,
    kUnsupported,
};

const char *to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. The kind drives CLI exit codes and
/// HTTP status mapping; the message carries the scale/index/step context.
class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) { throw Error(kind, what); }

}  // namespace nestfuse
