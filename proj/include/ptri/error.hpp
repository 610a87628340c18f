#pragma once

#include <stdexcept>
#include <string>

namespace ptri {

// Error categories double as process exit codes (see tools/main.cpp).
enum class ErrorCategory : int {
    Usage = 2,
    Io = 3,
    Data = 4,
    Numeric = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }

    const char* category_name() const {
        switch (category_) {
        case ErrorCategory::Usage: return "usage";
        case ErrorCategory::Io: return "io";
        case ErrorCategory::Data: return "data";
        case ErrorCategory::Numeric: return "numeric";
        }
        return "unknown";
    }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorCategory::Usage, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorCategory::Io, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorCategory::Data, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorCategory::Numeric, msg); }

}  // namespace ptri
